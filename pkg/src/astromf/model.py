"""Local interpolation models on a coordinate-cross design set.

The model is quadratic with a diagonal Hessian,
    M(x) = f0 + g.s + 0.5 * sum_i h_i s_i^2,   s = x - center,
fitted exactly to 2d+1 estimates: the center plus two offsets per
coordinate (normally +Delta and -Delta).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateRadius(ValueError):
    pass


class NonFiniteInput(ValueError):
    pass


@dataclass(frozen=True)
class DesignSet:
    center: np.ndarray
    radius: float
    offsets: np.ndarray  # shape (d, 2): the two nonzero offsets along each coordinate

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def points(self) -> list[np.ndarray]:
        """Center first, then (first offset, second offset) for each coordinate."""
        pts = [self.center.copy()]
        for i in range(self.dim):
            for off in self.offsets[i]:
                p = self.center.copy()
                p[i] += off
                pts.append(p)
        return pts


def design_set(center, radius: float, bounds=None) -> DesignSet:
    """Coordinate cross of radius ``radius``; offsets blocked by a bound flip to the feasible side."""
    center = np.asarray(center, dtype=float)
    scale = max(1.0, float(np.max(np.abs(center)))) if center.size else 1.0
    if not radius > 64 * np.finfo(float).eps * scale:
        raise DegenerateRadius(f"radius {radius!r} too small at this center")
    d = len(center)
    offsets = np.tile([radius, -radius], (d, 1))
    if bounds is not None:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (d,)) for b in bounds)
        for i in range(d):
            up = hi[i] - center[i]
            down = center[i] - lo[i]
            if up >= radius and down >= radius:
                continue
            if down >= radius:
                offsets[i] = (-radius, -radius / 2)
            elif up >= radius:
                offsets[i] = (radius, radius / 2)
            else:
                # box narrower than the radius on both sides: use the roomier side
                if up >= down:
                    r = up
                    offsets[i] = (r, r / 2)
                else:
                    r = down
                    offsets[i] = (-r, -r / 2)
                if not r > 0:
                    raise DegenerateRadius(f"no room along coordinate {i}")
    return DesignSet(center, float(radius), offsets)


@dataclass(frozen=True)
class LocalModel:
    center: np.ndarray
    value: float
    gradient: np.ndarray
    hessian_diag: np.ndarray

    def __call__(self, x) -> float:
        s = np.asarray(x, dtype=float) - self.center
        return float(self.value + self.gradient @ s + 0.5 * np.sum(self.hessian_diag * s * s))

    def reduction(self, x) -> float:
        return self.value - self(x)


def fit_model(design: DesignSet, estimates) -> LocalModel:
    """Unique interpolant in span{1, s_i, s_i^2} through the 2d+1 estimates."""
    f = np.asarray(estimates, dtype=float)
    if f.shape != (2 * design.dim + 1,):
        raise ValueError(f"expected {2 * design.dim + 1} estimates, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise NonFiniteInput("model estimates must be finite")
    f0 = f[0]
    g = np.empty(design.dim)
    h = np.empty(design.dim)
    for i in range(design.dim):
        a, b = design.offsets[i]
        fa, fb = f[1 + 2 * i] - f0, f[2 + 2 * i] - f0
        # fa = g a + h a^2/2, fb = g b + h b^2/2
        h[i] = 2.0 * (fa / a - fb / b) / (a - b)
        g[i] = fa / a - 0.5 * h[i] * a
    return LocalModel(design.center.copy(), float(f0), g, h)


def gradient_norm(model: LocalModel) -> float:
    return float(np.linalg.norm(model.gradient))


def cauchy_step(g: np.ndarray, h: np.ndarray, radius: float) -> np.ndarray:
    """Model minimizer along -g inside the Euclidean ball."""
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros_like(g)
    curv = float(np.sum(h * g * g))
    tau = radius / gn
    if curv > 0:
        tau = min(tau, gn * gn / curv)
    return -tau * g


def _diagonal_trs(g: np.ndarray, h: np.ndarray, radius: float) -> np.ndarray:
    """Minimize g.s + 0.5 s'diag(h)s over ||s|| <= radius (diagonal trust-region subproblem)."""
    hmin = float(np.min(h))
    if hmin > 0:
        s = -g / h
        if np.linalg.norm(s) <= radius:
            return s

    def step(lam):
        return -g / (h + lam)

    lo = max(0.0, -hmin)
    mask = (h + lo) <= 0.0  # eigen-directions at the leftmost eigenvalue
    if np.all(g[mask] == 0.0) and np.any(mask):
        # possible hard case
        s = np.zeros_like(g)
        free = ~mask
        s[free] = -g[free] / (h[free] + lo)
        rest = radius**2 - float(s @ s)
        if rest >= 0:
            j = int(np.flatnonzero(mask)[0])
            s[j] = np.sqrt(rest)
            return s
    # ||step(lam)|| decreases in lam on (lo, inf)
    a = lo + 1e-15 * max(1.0, abs(lo))
    b = max(lo, 0.0) + float(np.linalg.norm(g)) / radius + float(np.max(np.abs(h))) + 1.0
    while np.linalg.norm(step(b)) > radius:
        b *= 2.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if np.linalg.norm(step(mid)) > radius:
            a = mid
        else:
            b = mid
        if b - a <= 1e-14 * max(1.0, b):
            break
    return step(b)


def minimize_model(model: LocalModel, radius: float) -> np.ndarray:
    """Cauchy point, refined toward the exact subproblem solution when that lowers the model.

    The result stays in the Euclidean ball of ``radius`` around the center and
    never has a higher model value than the Cauchy point. A zero gradient
    returns the center.
    """
    if not radius > 0:
        raise DegenerateRadius("radius must be positive")
    g, h = model.gradient, model.hessian_diag
    if not np.any(g):
        return model.center.copy()
    s = cauchy_step(g, h, radius)

    def mval(step):
        return float(g @ step + 0.5 * np.sum(h * step * step))

    refined = _diagonal_trs(g, h, radius)
    nrm = np.linalg.norm(refined)
    if nrm > radius:
        refined *= radius / nrm
    if np.all(np.isfinite(refined)) and mval(refined) <= mval(s):
        s = refined
    return model.center + s
