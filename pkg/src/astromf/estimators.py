"""Monte Carlo and multi-fidelity Monte Carlo estimators.

Sample moments use the 1/n normalization throughout. The MFMC estimator for
target level t combines the first n^t samples at level t with telescoping
control-variate corrections from levels t+1..q; it requires nested sizes
n^t <= n^{t+1} <= ... <= n^q over CRN-paired replication buffers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientSamples(ValueError):
    pass


class NonMonotoneSizes(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


def mc_mean(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size < 1:
        raise InsufficientSamples("mean needs at least one sample")
    return float(x.mean())


def mc_variance(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientSamples("variance needs at least two samples")
    return float(np.mean((x - x.mean()) ** 2))


def mc_covariance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("covariance needs equal-length paired buffers")
    if a.size < 2:
        raise InsufficientSamples("covariance needs at least two samples")
    return float(np.mean((a - a.mean()) * (b - b.mean())))


class LevelSamples:
    """Growing per-level replication buffers at one point.

    Entry j (0-based) of every level's buffer is the output for replication
    j + 1, so prefixes of equal length are CRN-paired across levels.
    """

    def __init__(self, num_levels: int):
        self._bufs = [np.empty(0) for _ in range(num_levels)]

    def __len__(self):
        return len(self._bufs)

    def __getitem__(self, level: int) -> np.ndarray:
        return self._bufs[level]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self._bufs], dtype=np.int64)

    def extend(self, level: int, values) -> None:
        self._bufs[level] = np.concatenate([self._bufs[level], np.asarray(values, dtype=float)])

    @classmethod
    def from_buffers(cls, buffers) -> "LevelSamples":
        obj = cls(len(buffers))
        for i, b in enumerate(buffers):
            obj.extend(i, b)
        return obj


@dataclass(frozen=True)
class MomentEstimates:
    """Moments relative to a target level.

    ``var[i]`` is the level-i variance, ``cov[i]`` the covariance between the
    target level and level i (``cov[target] == var[target]``). Levels below
    the target are unused and stored as NaN.
    """

    target: int
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray
    sizes: np.ndarray


def estimate_moments(samples: LevelSamples, target: int = 0) -> MomentEstimates:
    """Sample moments; covariances use the first min(n^t, n^i) paired replications."""
    q1 = len(samples)
    mean = np.full(q1, np.nan)
    var = np.full(q1, np.nan)
    cov = np.full(q1, np.nan)
    base = samples[target]
    for i in range(target, q1):
        buf = samples[i]
        mean[i] = mc_mean(buf)
        var[i] = mc_variance(buf)
        m = min(len(base), len(buf))
        cov[i] = mc_covariance(base[:m], buf[:m])
    return MomentEstimates(target, mean, var, cov, samples.sizes)


def _check_sizes(sizes, target: int):
    n = np.asarray(sizes)
    tail = n[target:]
    if np.any(np.diff(tail) < 0):
        raise NonMonotoneSizes(f"sizes must be nondecreasing from level {target}: {tail.tolist()}")
    if tail[0] < 1:
        raise InsufficientSamples("target level needs at least one sample")
    return n


def mfmc_estimate(samples, sizes, coeffs, target: int = 0) -> float:
    """MFMC estimate of the target-level mean.

    ``coeffs[i]`` is the coefficient of level i; entries at or below the
    target are ignored. ``samples`` is a LevelSamples or a list of buffers.
    """
    n = _check_sizes(sizes, target)
    bufs = [samples[i] for i in range(len(n))]
    for i in range(target, len(n)):
        if n[i] > len(bufs[i]):
            raise InsufficientSamples(f"level {i}: need {n[i]} samples, have {len(bufs[i])}")
    est = float(np.mean(bufs[target][: n[target]]))
    for i in range(target + 1, len(n)):
        c = coeffs[i]
        if c == 0.0:
            continue
        est += c * (float(np.mean(bufs[i][: n[i]])) - float(np.mean(bufs[i][: n[i - 1]])))
    return est


def mfmc_variance(var, cov, sizes, coeffs, target: int = 0) -> float:
    """Variance model: var_t/n^t + sum_i (1/n^{i-1} - 1/n^i)(c_i^2 var_i - 2 c_i cov_i)."""
    n = _check_sizes(sizes, target).astype(float)
    v = var[target] / n[target]
    for i in range(target + 1, len(n)):
        c = coeffs[i]
        v += (1.0 / n[i - 1] - 1.0 / n[i]) * (c * c * var[i] - 2.0 * c * cov[i])
    return float(v)


def optimal_coefficient(var_i: float, cov_i: float, sigma_lb: float = 0.0) -> float:
    """Per-term minimizer c = cov/var; raises DegenerateVariance below sigma_lb^2."""
    if not var_i >= sigma_lb**2 or var_i <= 0.0:
        raise DegenerateVariance(f"level variance {var_i:g} below floor {sigma_lb**2:g}")
    return cov_i / var_i


def optimal_coefficients(moments: MomentEstimates, sigma_lb: float = 0.0, strict: bool = False) -> np.ndarray:
    """Coefficient vector indexed by level (entries <= target are zero).

    Degenerate levels get coefficient 0 unless ``strict``, in which case the
    DegenerateVariance error propagates.
    """
    c = np.zeros(len(moments.var))
    for i in range(moments.target + 1, len(c)):
        try:
            c[i] = optimal_coefficient(moments.var[i], moments.cov[i], sigma_lb)
        except DegenerateVariance:
            if strict:
                raise
            c[i] = 0.0
    return c
