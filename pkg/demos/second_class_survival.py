"""
How often does a second-class particle escape?
==============================================

A second-class particle starts at site 1 with a first-class particle in front
of it and first-class particles of density lam further right. New first-class
particles keep arriving at rate lam and kill it while it is still on site 1.
We estimate the probability that it gets away, and how fast it then moves.
"""

from tasep_lab.estimators import estimate_survival, survival_run

print(" lam    p_hat    se      speed   1-2lam")
for lam in (0.0, 0.1, 0.2, 0.3, 0.4):
    e = estimate_survival(lam, x_far=200, replicas=300, seed=11)
    v = e.speed.point if e.speed else float("nan")
    print(f" {lam:.1f}   {e.point:.3f}   {e.std_error:.3f}   {v:.3f}   {1 - 2 * lam:.3f}")

# a single trajectory, sampled every 20 time units
rec = survival_run(0.25, seed=3, x_far=200, path_cadence=20.0)
print(f"\none run at lam=0.25: {rec.classification}, furthest site {rec.max_position}")
for t, x in rec.path[:8]:
    print(f"  t={t:6.1f}  X={int(x)}")
