"""Exhaustive reference for the two-level allocation problem (independent of the solver)."""
import numpy as np


def brute_force_q1(var0, var1, cov, costs, eps, n_max=2000, n_min=2, c_grid=None):
    """Cheapest integer (n0 <= n1) on [n_min, n_max]^2 over a grid of c with
    var0/n0 + (1/n0 - 1/n1)(c^2 var1 - 2 c cov) <= eps. Returns (cost, n0, n1, c)."""
    if c_grid is None:
        c_opt = cov / var1
        c_grid = np.unique(np.concatenate([np.linspace(-3, 3, 300), [0.0, c_opt]]))
    w0, w1 = costs
    n0 = np.arange(n_min, n_max + 1, dtype=float)
    best = (np.inf, None, None, None)
    for c in c_grid:
        D = c * c * var1 - 2 * c * cov
        # V(n0, n1) = (var0 + D)/n0 - D/n1
        head = (var0 + D) / n0
        if D < 0:
            gap = eps - head                   # need -D/n1 <= gap
            with np.errstate(divide="ignore", invalid="ignore"):
                need = np.where(gap > 0, np.ceil(-D / gap - 1e-12), np.inf)
            n1 = np.maximum(n0, need)
        else:
            n1 = n0.copy()                     # V grows with n1; n1 = n0 gives var0/n0
        ok = (n1 <= n_max) & ((var0 + D) / n0 - D / np.where(np.isfinite(n1), n1, 1) <= eps * (1 + 1e-12))
        if not np.any(ok):
            continue
        cost = np.where(ok, w0 * n0 + w1 * n1, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best[0]:
            best = (float(cost[i]), int(n0[i]), int(n1[i]), float(c))
    return best


def fixtures(count=24, seed=0):
    """Two-level moment/weight combinations with a target inside the grid's reach."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        var0 = float(rng.uniform(0.5, 4.0))
        var1 = float(rng.uniform(0.5, 4.0))
        rho = float(rng.choice([0.0, 0.3, 0.7, 0.9, 0.99, -0.8]))
        cov = rho * np.sqrt(var0 * var1)
        costs = (1.0, float(rng.choice([0.01, 0.05, 0.1, 0.3, 0.6])))
        eps = var0 / float(rng.uniform(20, 600))
        out.append((var0, var1, cov, costs, eps))
    return out
