"""
Entry current at the left boundary
==================================

Particles enter at site 1 through a range-2 boundary mechanism and then
perform a totally asymmetric walk with exclusion. With no extra rate the
long-run entry current is lam * (1 - lam). Below we measure it by simulation
and compare with the exact current of a small closed lattice.
"""

from tasep_lab.core import ModelParams, concrete_mechanism
from tasep_lab.estimators import estimate_current, rho_from_current
from tasep_lab.oracle import FiniteModelSpec, exact_entry_current, solve

# half-line current, approximated on a 128-site window with a free exit
for lam in (0.1, 0.2, 0.3, 0.4):
    e = estimate_current(ModelParams(lam), burn_in=2000, horizon=1e4, replicas=10, seed=1)
    print(f"lam={lam:.1f}  j={e.point:.4f} +- {e.std_error:.4f}  lam(1-lam)={lam * (1 - lam):.4f}")

# the density that goes with a measured current
j = estimate_current(ModelParams(0.25, 0.05), 2000, 1e4, 10, seed=2).point
print(f"\nlam=0.25 eps=0.05: j={j:.4f}, bulk density {rho_from_current(j).rho:.4f}")

# finite lattices can be solved exactly
print("\n L  lam  eps   exact      simulated")
for L in (2, 3, 4):
    mech = concrete_mechanism(0.3, 0.05)
    exact = exact_entry_current(solve(FiniteModelSpec(L, mech)), mech)
    sim = estimate_current(ModelParams(0.3, 0.05), 500, 1e4, 10, seed=L, window=L)
    print(f" {L}  0.3  0.05  {exact:.5f}   {sim.point:.5f} +- {sim.std_error:.5f}")
