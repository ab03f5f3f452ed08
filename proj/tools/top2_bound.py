# Lower bound on E[top-2 error]/W for any decoder lambda = g(eps) (frames on the
# A-B segment; e_A = lambda^2 W, e_B = (1-lambda)^2 W), where the top-2 draws are
# the two smallest-norm draws among n iid N(0, I_d) vectors.
# Directions are irrelevant to the bound beyond what the radius reveals, because
# for a fixed radius the decoder can only choose a distribution F_r over lambda
# (directions are iid uniform). Objective per t:
#   E_{r1,r2}[ t (1-F_r1(t))(1-F_r2(t)) + (1-t) F_r1(t) F_r2(t) ]
import numpy as np
from scipy.optimize import minimize
rng = np.random.default_rng(0)
d, n, trials, bins = 4, 32, 400000, 40
norms = np.sort(np.linalg.norm(rng.standard_normal((trials, n, d)), axis=2), axis=1)[:, :2]
edges = np.quantile(norms.ravel(), np.linspace(0, 1, bins + 1))
b = np.clip(np.searchsorted(edges, norms, side="right") - 1, 0, bins - 1)
P = np.zeros((bins, bins))
np.add.at(P, (b[:, 0], b[:, 1]), 1.0)
P = (P + P.T) / (2 * trials)
def solve(t):
    f = lambda p: t * (1 - p) @ P @ (1 - p) + (1 - t) * p @ P @ p
    g = lambda p: -2 * t * P @ (1 - p) + 2 * (1 - t) * P @ p
    best = None
    for start in [np.full(bins, t), np.linspace(0, 1, bins), np.linspace(1, 0, bins), rng.uniform(size=bins)]:
        r = minimize(f, start, jac=g, bounds=[(0, 1)] * bins, method="L-BFGS-B")
        best = r.fun if best is None else min(best, r.fun)
    return best
ts = np.linspace(0, 1, 201)
vals = np.array([solve(t) for t in ts])
print("lower bound E[top2]/W =", np.trapezoid(vals, ts))
# radial split only (pure modes): P(r1 < tau < r2) maximised
taus = np.quantile(norms.ravel(), np.linspace(0.01, 0.99, 99))
split = max(np.mean((norms[:, 0] < t) & (norms[:, 1] > t)) for t in taus)
print("max P(r1 < tau < r2) =", split)
