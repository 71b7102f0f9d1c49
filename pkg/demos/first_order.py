"""
First-order effect of a small extra entry rate
==============================================

The model adds a rate eps to entries that find site 2 occupied. To first
order the current grows by eps * lam(1-lam) * p(lam), where p is the escape
probability of the second-class particle. Each eps run is coupled to a plain
TASEP run on the same clocks, so the difference of counts is never negative
and has a small variance.
"""

from tasep_lab.estimators import estimate_first_order, estimate_survival

lam = 0.25
r = estimate_first_order(lam, [0.01, 0.02, 0.04], burn_in=1000, horizon=1e4, replicas=40, seed=5)
for eps, q in zip(r.eps_grid, r.per_eps):
    print(f"eps={eps:.2f}  (N_eps - N_0)/(eps t) = {q.point:.4f} +- {q.std_error:.4f}")
print(f"intercept {r.slope.point:.4f} +- {r.slope.std_error:.4f}")

p = estimate_survival(lam, replicas=500, seed=6)
print(f"lam(1-lam) p_hat = {lam * (1 - lam) * p.point:.4f} +- {lam * (1 - lam) * p.std_error:.4f}")
