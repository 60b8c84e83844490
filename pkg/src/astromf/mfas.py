"""Multi-fidelity adaptive sampling (MFAS).

Given a point, a target fidelity t and the current trust-region radius, MFAS
keeps adding replications until the estimator it settles on (plain MC at
level t, or MFMC over levels t..q) has a plug-in variance at most
kappa^2 Delta^4 / lambda_k. Each round re-estimates the moments, re-solves the
cost-minimal allocation, and either stops or samples the highest-fidelity
level that is still short of its allocation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .budget import BudgetExhausted, BudgetLedger
from .estimators import (
    LevelSamples,
    MomentEstimates,
    estimate_moments,
    mfmc_estimate,
    mfmc_variance,
    optimal_coefficients,
)
from .oracles import MultiFidelityProblem
from .streams import COMMON_POINT, Phase, point_key


class Method(str, Enum):
    MC = "MC"
    MFMC = "MFMC"


class NoDeficientLevel(LookupError):
    pass


@dataclass(frozen=True)
class SamplingTarget:
    point: np.ndarray
    level: int
    delta: float
    lambda_k: float
    kappa: float
    sigma_lb: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.lambda_k < 1:
            raise ValueError("lambda_k must be >= 1")

    @property
    def target_variance(self) -> float:
        return self.kappa**2 * self.delta**4 / self.lambda_k


@dataclass(frozen=True)
class AllocationResult:
    n_star: np.ndarray          # integer sizes for levels t..q
    n_continuous: np.ndarray
    c_star: np.ndarray          # coefficients indexed like n_star (entry 0 unused)
    predicted_mfmc_cost: float
    predicted_mc_cost: float
    n_mc: int
    chosen_method: Method
    variance_floor: float       # the floored target-level variance used


@dataclass
class MfasOutput:
    estimate: float
    estimated_variance: float
    target_variance: float
    method: Method
    sizes: np.ndarray
    charged: float
    exhausted: bool = False
    rounds: int = 0


def mc_required_size(sigma_hat: float, target: SamplingTarget) -> int:
    """Smallest n with max(sigma_lb, sigma_hat)^2 / n <= target variance."""
    s = max(target.sigma_lb, sigma_hat)
    return max(1, math.ceil(s * s * target.lambda_k / (target.kappa**2 * target.delta**4)))


def _variance_weights(s0sq: float, var: np.ndarray, cov: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Rewrite the MFMC variance as sum_r a_r / n_r over relative levels r = 0..m."""
    m = len(var) - 1
    D = np.zeros(m + 2)
    D[0] = -s0sq
    for r in range(1, m + 1):
        D[r] = c[r] * c[r] * var[r] - 2.0 * c[r] * cov[r]
    return D[1:] - D[:-1]


def _pool(a: np.ndarray, w: np.ndarray, lower: np.ndarray, mu: float) -> np.ndarray:
    """Minimize sum(w n + mu a / n) over n nondecreasing with n >= lower (pool adjacent violators)."""
    blocks: list[list] = []  # [start, stop, A, W, L, value]
    for r in range(len(a)):
        blocks.append([r, r + 1, a[r], w[r], lower[r], 0.0])
        blocks[-1][5] = _block_value(blocks[-1], mu)
        while len(blocks) > 1 and blocks[-2][5] > blocks[-1][5]:
            hi = blocks.pop()
            lo = blocks[-1]
            lo[1] = hi[1]
            lo[2] += hi[2]
            lo[3] += hi[3]
            lo[4] = max(lo[4], hi[4])
            lo[5] = _block_value(lo, mu)
    n = np.empty(len(a))
    for start, stop, *_, value in blocks:
        n[start:stop] = value
    return n


def _block_value(block, mu):
    _, _, A, W, L, _ = block
    if A <= 0.0:
        return L
    return max(L, math.sqrt(mu * A / W))


def solve_allocation(moments: MomentEstimates, costs, target: SamplingTarget, current) -> AllocationResult:
    """Cost-minimal nested sample sizes meeting the plug-in variance target.

    Coefficients are fixed at the per-term optimum; the variance is then
    sum_r a_r / n_r, convex in 1/n, and the continuous problem (ordering and
    lower bounds included) is solved exactly by pooling at a fixed multiplier
    plus bisection on the multiplier. Sizes are rounded up.
    """
    t = moments.target
    costs = np.asarray(costs, dtype=float)[t:]
    current = np.asarray(current, dtype=float)[t:]
    var = moments.var[t:]
    cov = moments.cov[t:]
    eps = target.target_variance
    s0sq = max(target.sigma_lb, math.sqrt(max(var[0], 0.0))) ** 2
    n_mc = mc_required_size(math.sqrt(max(var[0], 0.0)), target)
    mc_cost = float(costs[0] * n_mc)
    c = optimal_coefficients(MomentEstimates(0, moments.mean[t:], var, cov, moments.sizes[t:]),
                             target.sigma_lb)
    c[0] = 0.0
    if len(var) == 1:
        n = np.array([max(float(n_mc), current[0])])
        return AllocationResult(np.ceil(n).astype(np.int64), n, c, float(costs[0] * n[0]), mc_cost,
                                n_mc, Method.MC, s0sq)

    a = _variance_weights(s0sq, var, cov, c)
    lower = np.maximum.accumulate(np.maximum(current, 1.0))

    def V(n):
        return float(np.sum(a / n))

    if V(lower) <= eps:
        n = lower.copy()
    else:
        pos = np.clip(a, 0.0, None)
        mu_hi = (np.sum(np.sqrt(pos * costs)) / eps) ** 2
        mu_lo = 0.0
        while V(_pool(a, costs, lower, mu_hi)) > eps:
            mu_lo, mu_hi = mu_hi, mu_hi * 4.0
        for _ in range(100):
            mu = 0.5 * (mu_lo + mu_hi) if mu_lo == 0.0 else math.sqrt(mu_lo * mu_hi)
            if V(_pool(a, costs, lower, mu)) > eps:
                mu_lo = mu
            else:
                mu_hi = mu
            if mu_hi - mu_lo <= 1e-12 * mu_hi:
                break
        n = _pool(a, costs, lower, mu_hi)
    n_int = np.ceil(n - 1e-9 * n).astype(np.int64)
    n_int = np.maximum(n_int, np.ceil(lower).astype(np.int64))
    n_int = np.maximum.accumulate(n_int)
    if V(n_int.astype(float)) > eps:
        n_int = np.maximum.accumulate(np.ceil(n).astype(np.int64))
    mfmc_cost = float(costs @ n_int)
    method = Method.MFMC if mfmc_cost <= mc_cost else Method.MC
    return AllocationResult(n_int, n, c, mfmc_cost, mc_cost, n_mc, method, s0sq)


def next_fidelity_to_query(current, n_star, offset: int = 0) -> int:
    """Highest-fidelity level j with current[j] < n_star[j] - 1."""
    current = np.asarray(current)
    n_star = np.asarray(n_star)
    short = np.nonzero(current < n_star - 1)[0]
    if len(short) == 0:
        raise NoDeficientLevel("every level meets its allocation")
    return int(short[0]) + offset


def effective_sizes(current) -> np.ndarray:
    """Largest nested (nondecreasing) sizes not exceeding the available counts."""
    n = np.array(current, dtype=np.int64)
    for i in range(len(n) - 2, -1, -1):
        n[i] = min(n[i], n[i + 1])
    return n


class SampleCache:
    """Per-point replication buffers that persist for a whole solver run."""

    def __init__(self, problem: MultiFidelityProblem, seed: int, phase: Phase = Phase.OPTIMIZE,
                 common_points: bool = False):
        self.problem = problem
        self.seed = seed
        self.phase = phase
        # when set, replication j uses the same random numbers at every point
        self.common_points = common_points
        self._store: dict[int, LevelSamples] = {}

    def samples(self, x) -> LevelSamples:
        key = point_key(x)
        buf = self._store.get(key)
        if buf is None:
            buf = self._store[key] = LevelSamples(self.problem.num_levels)
        return buf

    def draw(self, x, level: int, count: int, ledger: BudgetLedger | None) -> LevelSamples:
        """Append ``count`` new replications at ``level`` (charged before simulating)."""
        buf = self.samples(x)
        if count <= 0:
            return buf
        if ledger is not None:
            ledger.charge(level, count, allow_overshoot=True)
        start = len(buf[level]) + 1
        reps = np.arange(start, start + count)
        pkey = COMMON_POINT if self.common_points else point_key(x)
        buf.extend(level, self.problem.simulate(x, level, reps, self.seed, pkey, self.phase))
        return buf

    def __len__(self):
        return len(self._store)


def _batch(n_now: int, goal: int, growth: float) -> int:
    step = max(1, math.ceil(growth * n_now)) if growth > 0 else 1
    return int(min(step, max(1, goal - n_now)))


def mfas(problem: MultiFidelityProblem, target: SamplingTarget, ledger: BudgetLedger | None,
         cache: SampleCache, *, initial_reps: int = 3, batch_growth: float = 0.1,
         trace: list | None = None) -> MfasOutput:
    """Estimate the level-``target.level`` mean at ``target.point`` to the adaptive-sampling precision."""
    t = target.level
    problem.check_level(t)
    x = np.asarray(target.point, dtype=float)
    eps = target.target_variance
    spent0 = ledger.spent if ledger is not None else 0.0
    buf = cache.samples(x)
    levels = range(t, problem.num_levels)
    costs = problem.costs
    pid = f"{point_key(x):016x}"

    def finish(est, var, method, exhausted, rounds):
        return MfasOutput(est, var, eps, method, buf.sizes.copy(),
                          (ledger.spent if ledger is not None else 0.0) - spent0, exhausted, rounds)

    exhausted = False
    try:
        for i in levels:
            cache.draw(x, i, initial_reps - len(buf[i]), ledger)
    except BudgetExhausted:
        exhausted = True

    rounds = 0
    while True:
        rounds += 1
        sizes = buf.sizes
        if sizes[t] < 2 or any(sizes[i] < 2 for i in levels):
            # only reachable when the budget ran out during the initial draws
            est = float(np.mean(buf[t])) if sizes[t] else float("nan")
            return finish(est, float("inf"), Method.MC, True, rounds)
        moments = estimate_moments(buf, t)
        alloc = solve_allocation(moments, costs, target, sizes)
        sd_t = math.sqrt(max(moments.var[t], 0.0))
        mc_var = max(target.sigma_lb, sd_t) ** 2 / sizes[t]
        mc_est = float(np.mean(buf[t]))
        if len(levels) > 1:
            n_eff = effective_sizes(sizes[t:])
            full = np.zeros(problem.num_levels, dtype=np.int64)
            full[t:] = n_eff
            c_full = np.zeros(problem.num_levels)
            c_full[t:] = alloc.c_star
            var_f = moments.var.copy()
            var_f[t] = alloc.variance_floor
            mf_var = max(mfmc_variance(var_f, moments.cov, full, c_full, t),
                         target.sigma_lb**2 / n_eff[0])
            mf_est = mfmc_estimate(buf, full, c_full, t)
        else:
            mf_var, mf_est = math.inf, mc_est
        chosen = alloc.chosen_method
        if trace is not None:
            trace.append({"point": pid, "target_level": t, **{f"n{i}": int(sizes[i]) for i in range(len(sizes))},
                          "method": chosen.value,
                          "variance": mc_var if chosen is Method.MC else mf_var,
                          "target_variance": eps,
                          "cumulative_cost": ledger.spent if ledger is not None else 0.0})
        candidates = [(Method.MC, mc_est, mc_var), (Method.MFMC, mf_est, mf_var)]
        if chosen is Method.MFMC:
            candidates.reverse()
        for method, est, var in candidates:
            if var <= eps:
                return finish(est, var, method, False, rounds)
        if exhausted:
            method, est, var = candidates[0]
            return finish(est, var, method, True, rounds)

        if chosen is Method.MC:
            level, goal = t, alloc.n_mc
        else:
            rel = sizes[t:]
            try:
                level = next_fidelity_to_query(rel, alloc.n_star, t)
            except NoDeficientLevel:
                short = np.nonzero(rel < alloc.n_star)[0]
                level = t + int(short[0]) if len(short) else t
            goal = int(alloc.n_star[level - t])
        try:
            b = _batch(int(sizes[level]), goal, batch_growth)
            cache.draw(x, level, b, ledger)
            if chosen is Method.MFMC:
                # keep the replications nested (n^j <= n^{j+1}) so new samples pair immediately
                for i in range(level + 1, problem.num_levels):
                    cache.draw(x, i, int(sizes[level]) + b - len(buf[i]), ledger)
        except BudgetExhausted:
            exhausted = True
        else:
            exhausted = ledger is not None and ledger.exhausted
