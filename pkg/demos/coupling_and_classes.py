"""
Sandwich coupling and particle classes
======================================

All members of an ensemble read the same Poisson clocks. Entries use nested
marks, so a member with larger rates is never behind a member with smaller
ones. The class process splits the model into layers: class 1 is a plain
TASEP, and class j enters at a rate of order eps**(j-1).
"""

from tasep_lab.core import ModelParams
from tasep_lab.coupling import check_attractivity, coupled_evolve, sandwich
from tasep_lab.estimators import density_profile, estimate_class_rates
from tasep_lab.multiclass import projection_report

lam, eps = 0.25, 0.05
ens = sandwich(lam, eps, seed=0, window=128)
rep = check_attractivity(ens, horizon=1000, seeds=20)
print(f"order violations over 20 seeds: {rep.violations} ({rep.events} events)")

for (cfg, st), m in zip(coupled_evolve(ens, 5000.0), ens.members):
    print(f"  {m.label:>12}: {st.entries_total} entries, {cfg.particle_count} particles")

rates = estimate_class_rates(lam, eps, 3, horizon=1e4, replicas=5, seed=1)
for j, e in rates.items():
    print(f"class {j}: {e.point:.5f} entries per unit time")

r = projection_report(lam, eps, 3, 1000.0, seed=2)
print(f"projection of classes <= K onto the model: {'exact' if r.holds else 'broken'} over {r.events} events")

prof = density_profile(ModelParams(lam, eps), 2000, 1e4, range(3, 51), 10, seed=3)
print(f"density on sites 3..50 between {prof.point.min():.4f} and {prof.point.max():.4f}")
print(f"(TASEP densities: {lam} and {lam + eps})")
