"""Trust-region solvers (ASTRO-MFDF, ASTRO-DF) and a Nelder-Mead baseline.

All solvers spend a fractional budget through a BudgetLedger and return a
Trajectory of recommended solutions stamped with the budget spent when each
was adopted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .budget import BudgetExhausted, BudgetLedger
from .config import SolverConfig
from .estimators import mc_mean, mc_variance
from .mfas import MfasOutput, SampleCache, SamplingTarget, mfas
from .model import DegenerateRadius, LocalModel, design_set, fit_model, gradient_norm, minimize_model
from .oracles import MultiFidelityProblem
from .streams import COMMON_POINT, Phase

__all__ = [
    "Trajectory",
    "TrustRegionState",
    "IterationOutcome",
    "AstroMFDF",
    "astro_mfdf_run",
    "astro_df_run",
    "nelder_mead_run",
    "sufficient_reduction_check",
    "initial_radii",
]


@dataclass
class Trajectory:
    solver: str
    problem: str
    rep: int
    seed: int
    points: list = field(default_factory=list)   # [(budget_spent, x), ...]
    iterations: int = 0
    budget_spent: float = 0.0
    events: list = field(default_factory=list)
    error: str | None = None

    def record(self, budget: float, x) -> None:
        x = np.array(x, dtype=float)
        if len(self.points) > 1 and budget <= self.points[-1][0]:
            # adopted without new spending (all estimates cached): supersede
            self.points[-1] = (self.points[-1][0], x)
            return
        self.points.append((float(budget), x))

    @property
    def final(self) -> np.ndarray:
        return self.points[-1][1]


@dataclass
class TrustRegionState:
    x: np.ndarray
    radii: np.ndarray       # Delta^0..Delta^q
    alpha: np.ndarray       # alpha^0..alpha^q; entry 0 unused
    k: int = 0
    estimate: float = float("nan")


@dataclass
class IterationOutcome:
    k: int
    phase: str
    source: int
    success: bool
    candidate: np.ndarray
    rho: float | None
    rho_t: dict
    radii: np.ndarray
    alpha: np.ndarray
    alpha_updates: list          # [(level, factor), ...] in the order applied
    incumbent_estimate: float    # estimate of the old incumbent this iteration
    candidate_estimate: float | None
    budget: float


def sufficient_reduction_check(f_incumbent: float, f_candidate: float, delta0: float,
                               zeta: float, eta: float) -> bool:
    return f_incumbent - f_candidate >= zeta * eta * delta0**2


def initial_radii(problem: MultiFidelityProblem, config: SolverConfig, num_levels: int):
    if config.delta0 is None:
        scale = problem.radius_scale()
        r0 = 0.08 * scale if scale is not None else 1.0
        radii = np.full(num_levels, r0)
    elif isinstance(config.delta0, (list, tuple)):
        radii = np.asarray(config.delta0, dtype=float)[:num_levels]
        if len(radii) != num_levels:
            raise ValueError("delta0 needs one radius per fidelity level")
    else:
        radii = np.full(num_levels, float(config.delta0))
    delta_max = config.delta_max if config.delta_max is not None else 10.0 * radii[0]
    radii = np.minimum.accumulate(np.minimum(radii, delta_max))
    return radii, float(delta_max)


def _initial_alpha(config: SolverConfig, num_levels: int) -> np.ndarray:
    alpha = np.ones(num_levels)
    if isinstance(config.alpha0, (list, tuple)):
        vals = np.asarray(config.alpha0, dtype=float)
        if len(vals) != num_levels - 1:
            raise ValueError("alpha0 needs one entry per lower fidelity")
        alpha[1:] = vals
    else:
        alpha[1:] = float(config.alpha0)
    return alpha


class _Skip(Exception):
    pass


class AstroMFDF:
    """Multi-fidelity adaptive-sampling trust-region solver.

    Each iteration first tries the lower fidelities from cheapest to most
    expensive (each only while its correlation score clears ``alpha_th``),
    and falls back to a shared-design step with q+1 candidate models.
    """

    name = "astro_mfdf"

    def __init__(self, problem: MultiFidelityProblem, config: SolverConfig | None = None,
                 seed: int = 0, trace: list | None = None):
        self.problem = problem
        self.config = config or SolverConfig()
        self.seed = seed
        self.q = problem.q
        self.trace = trace

    # -- helpers ---------------------------------------------------------------
    def _estimate(self, x, level: int, delta: float, state: TrustRegionState) -> MfasOutput:
        cfg = self.config
        target = SamplingTarget(x, level, delta, cfg.lambda_at(state.k), cfg.kappa, cfg.sigma_lb)
        out = mfas(self.problem, target, self.ledger, self.cache, initial_reps=cfg.initial_reps,
                   batch_growth=cfg.batch_growth, trace=self.trace)
        if out.exhausted:
            raise BudgetExhausted("budget ran out inside adaptive sampling")
        return out

    def _model(self, center, level: int, delta: float, sample_delta: float, state) -> LocalModel:
        ds = design_set(center, delta, self.problem.bounds)
        est = [self._estimate(p, level, sample_delta, state).estimate for p in ds.points]
        return fit_model(ds, est)

    def _scale_alpha(self, state, level, factor, updates):
        state.alpha[level] *= factor
        updates.append((level, factor))

    # -- inner loop for one lower fidelity --------------------------------------
    def astro_lfdf(self, t: int, state: TrustRegionState, updates: list):
        """Returns (candidate, rho, f_incumbent, f_candidate) on success, else None."""
        cfg = self.config
        x = state.x
        while True:
            if state.alpha[t] < cfg.alpha_th or state.radii[t] < cfg.min_radius:
                return None
            dt = state.radii[t]
            try:
                model = self._model(x, t, dt, dt, state)
            except DegenerateRadius:
                return None
            cand = self.problem.project(minimize_model(model, dt))
            model_red = model.reduction(cand)
            f_inc = self._estimate(x, 0, dt, state).estimate
            if np.array_equal(cand, x):
                rho, f_cand = -math.inf, f_inc
            else:
                f_cand = self._estimate(cand, 0, dt, state).estimate
                rho = (f_inc - f_cand) / max(cfg.zeta * state.radii[0] ** 2, model_red)
            if rho >= cfg.eta and sufficient_reduction_check(f_inc, f_cand, state.radii[0], cfg.zeta, cfg.eta):
                return cand, rho, f_inc, f_cand
            state.radii[t] *= cfg.gamma2
            self._scale_alpha(state, t, cfg.gamma2, updates)

    # -- one outer iteration ------------------------------------------------------
    def step(self, state: TrustRegionState) -> IterationOutcome:
        cfg = self.config
        updates: list = []
        for t in range(self.q, 0, -1):
            hit = self.astro_lfdf(t, state, updates)
            if hit is None:
                continue
            cand, rho, f_inc, f_cand = hit
            state.x = cand
            state.radii[t] = min(cfg.gamma1 * state.radii[t], self.delta_max)
            self._scale_alpha(state, t, cfg.gamma1, updates)
            for j in range(t):
                state.radii[j] = max(state.radii[j], state.radii[t])
            self._order_radii(state)
            state.estimate = f_cand
            return IterationOutcome(state.k, "A", t, True, cand.copy(), None, {t: rho},
                                    state.radii.copy(), state.alpha.copy(), updates, f_inc, f_cand,
                                    self.ledger.spent)
        return self._shared_design_step(state, updates)

    def _shared_design_step(self, state: TrustRegionState, updates: list) -> IterationOutcome:
        cfg = self.config
        x = state.x
        d0 = state.radii[0]
        ds = design_set(x, d0, self.problem.bounds)
        pts = ds.points
        models = []
        for t in range(self.q + 1):
            est = [self._estimate(p, t, d0, state).estimate for p in pts]
            models.append(fit_model(ds, est))
        f_inc = self._estimate(x, 0, d0, state).estimate
        cands, f_cands = [], []
        for t in range(self.q + 1):
            c = self.problem.project(minimize_model(models[t], d0))
            cands.append(c)
            f_cands.append(f_inc if np.array_equal(c, x) else self._estimate(c, 0, d0, state).estimate)
        best = int(np.argmin(f_cands))  # first minimum = highest fidelity on ties
        red0 = models[0].reduction(cands[0])
        rho = (f_inc - f_cands[best]) / red0 if red0 > 0 else -math.inf
        rho_t = {0: rho}
        for t in range(1, self.q + 1):
            red = models[t].reduction(cands[t])
            rho_t[t] = (f_inc - f_cands[t]) / max(cfg.zeta * d0**2, red)
            self._scale_alpha(state, t, cfg.gamma1 if rho_t[t] >= cfg.eta else cfg.gamma2, updates)
        success = (rho >= cfg.eta and cfg.mu * gradient_norm(models[0]) >= d0
                   and not np.array_equal(cands[best], x))
        if success:
            state.x = cands[best]
            state.radii[0] = min(cfg.gamma1 * d0, self.delta_max)
            state.estimate = f_cands[best]
        else:
            state.radii[0] = cfg.gamma2 * d0
            state.estimate = f_inc
        for t in range(1, self.q + 1):
            state.radii[t] = min(state.radii[t], d0)
        self._order_radii(state)
        return IterationOutcome(state.k, "B", best if success else 0, success, cands[best].copy(), rho, rho_t,
                                state.radii.copy(), state.alpha.copy(), updates, f_inc,
                                f_cands[best], self.ledger.spent)

    def _order_radii(self, state):
        state.radii[0] = min(state.radii[0], self.delta_max)
        for t in range(1, len(state.radii)):
            state.radii[t] = min(state.radii[t], state.radii[t - 1])

    # -- driver ----------------------------------------------------------------
    def run(self, x0, budget: float, rep: int = 0, problem_id: str | None = None,
            max_iterations: int | None = None) -> Trajectory:
        p = self.problem
        self.ledger = BudgetLedger(p.costs, budget)
        self.cache = SampleCache(p, self.seed, common_points=self.config.crn_across_points)
        radii, self.delta_max = initial_radii(p, self.config, p.num_levels)
        state = TrustRegionState(p.project(x0), radii, _initial_alpha(self.config, p.num_levels))
        traj = Trajectory(self.name, problem_id or p.name, rep, self.seed)
        traj.record(0.0, state.x)
        self.state = state
        while max_iterations is None or state.k < max_iterations:
            try:
                outcome = self.step(state)
            except BudgetExhausted:
                break
            traj.events.append(_event_row(outcome, state))
            state.k += 1
            if outcome.success:
                traj.record(outcome.budget, state.x)
        traj.iterations = state.k
        traj.budget_spent = self.ledger.spent
        return traj


def _event_row(o: IterationOutcome, state: TrustRegionState) -> dict:
    return {
        "k": o.k, "phase": o.phase, "source": o.source, "success": o.success,
        "rho": o.rho, "rho_t": dict(o.rho_t), "radii": o.radii.tolist(),
        "alpha": o.alpha.tolist(), "alpha_updates": list(o.alpha_updates),
        "incumbent": state.x.tolist(), "incumbent_estimate": state.estimate,
        "old_estimate": o.incumbent_estimate, "candidate_estimate": o.candidate_estimate,
        "budget": o.budget,
    }


def astro_mfdf_run(problem, x0, budget, config=None, seed=0, rep=0, problem_id=None) -> Trajectory:
    return AstroMFDF(problem, config, seed).run(x0, budget, rep, problem_id)


# -- single-fidelity ASTRO-DF ------------------------------------------------------

def _adaptive_mc(problem, cache, ledger, x, delta, lam, cfg: SolverConfig) -> float:
    """Level-0 mean with the sequential MC stopping rule max(sigma_lb, sd)^2 / n <= kappa^2 delta^4 / lam."""
    eps = cfg.kappa**2 * delta**4 / lam
    buf = cache.samples(x)
    cache.draw(x, 0, cfg.initial_reps - len(buf[0]), ledger)
    while True:
        y = buf[0]
        n = len(y)
        sd = math.sqrt(max(mc_variance(y), 0.0))
        if max(cfg.sigma_lb, sd) ** 2 / n <= eps:
            return mc_mean(y)
        if ledger.exhausted:
            raise BudgetExhausted("budget ran out inside adaptive sampling")
        s = max(cfg.sigma_lb, sd)
        goal = max(1, math.ceil(s * s * lam / (cfg.kappa**2 * delta**4)))
        step = max(1, math.ceil(cfg.batch_growth * n)) if cfg.batch_growth > 0 else 1
        cache.draw(x, 0, int(min(step, max(1, goal - n))), ledger)


def astro_df_run(problem: MultiFidelityProblem, x0, budget: float, config: SolverConfig | None = None,
                 seed: int = 0, rep: int = 0, problem_id: str | None = None) -> Trajectory:
    """Single-fidelity ASTRO-DF on level 0 of ``problem``."""
    cfg = config or SolverConfig()
    ledger = BudgetLedger(problem.costs, budget)
    cache = SampleCache(problem, seed, common_points=cfg.crn_across_points)
    radii, delta_max = initial_radii(problem, cfg, 1)
    delta = float(radii[0])
    x = problem.project(x0)
    traj = Trajectory("astro_df", problem_id or problem.name, rep, seed)
    traj.record(0.0, x)
    k = 0
    while True:
        lam = cfg.lambda_at(k)
        try:
            ds = design_set(x, delta, problem.bounds)
            est = [_adaptive_mc(problem, cache, ledger, p, delta, lam, cfg) for p in ds.points]
            model = fit_model(ds, est)
            f_inc = _adaptive_mc(problem, cache, ledger, x, delta, lam, cfg)
            cand = problem.project(minimize_model(model, delta))
            f_cand = f_inc if np.array_equal(cand, x) else _adaptive_mc(problem, cache, ledger, cand, delta, lam, cfg)
        except (BudgetExhausted, DegenerateRadius):
            break
        red = model.reduction(cand)
        rho = (f_inc - f_cand) / red if red > 0 else -math.inf
        success = rho >= cfg.eta and cfg.mu * gradient_norm(model) >= delta and not np.array_equal(cand, x)
        if success:
            x = cand
            delta = min(cfg.gamma1 * delta, delta_max)
        else:
            delta = cfg.gamma2 * delta
        traj.events.append({"k": k, "phase": "B", "source": 0, "success": success, "rho": rho,
                            "radii": [delta], "incumbent": x.tolist(),
                            "incumbent_estimate": f_cand if success else f_inc, "budget": ledger.spent})
        k += 1
        if success:
            traj.record(ledger.spent, x)
    traj.iterations = k
    traj.budget_spent = ledger.spent
    return traj


# -- Nelder-Mead -------------------------------------------------------------------

class DegenerateSimplex(ValueError):
    pass


def _check_simplex(simplex: np.ndarray) -> None:
    d = simplex.shape[1]
    if simplex.shape[0] != d + 1:
        raise DegenerateSimplex(f"simplex needs {d + 1} vertices")
    edges = simplex[1:] - simplex[0]
    if np.linalg.matrix_rank(edges, tol=1e-12 * max(1.0, np.abs(simplex).max())) < d:
        raise DegenerateSimplex("initial simplex vertices are affinely dependent")


def nelder_mead_run(problem: MultiFidelityProblem, x0, budget: float, config: SolverConfig | None = None,
                    seed: int = 0, rep: int = 0, problem_id: str | None = None, simplex=None,
                    step: float | None = None, xtol: float = 1e-10) -> Trajectory:
    """Nelder-Mead on the level-0 sample mean with a fixed replication count per point.

    Every point uses replications 1..r from point-independent streams, so
    simplex comparisons share common random numbers.
    """
    cfg = config or SolverConfig()
    r = cfg.nm_reps
    ledger = BudgetLedger(problem.costs, budget)
    d = problem.dim
    x0 = problem.project(x0)
    if simplex is None:
        if step is None:
            step = float(initial_radii(problem, cfg, 1)[0][0])
        verts = [x0]
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            v = problem.project(x0 + e)
            if np.array_equal(v, x0):
                v = problem.project(x0 - e)
            verts.append(v)
        simplex = np.array(verts)
    else:
        simplex = np.array([problem.project(v) for v in np.asarray(simplex, dtype=float)])
    _check_simplex(simplex)

    traj = Trajectory("nelder_mead", problem_id or problem.name, rep, seed)
    traj.record(0.0, x0)
    memo: dict[bytes, float] = {}
    reps = np.arange(1, r + 1)

    def f(x):
        key = x.tobytes()
        if key not in memo:
            ledger.charge(0, r)
            memo[key] = float(np.mean(problem.simulate(x, 0, reps, seed, COMMON_POINT, Phase.OPTIMIZE)))
        return memo[key]

    best_val = math.inf
    iters = 0

    def note_best(values):
        nonlocal best_val
        i = int(np.argmin(values))
        if values[i] < best_val:
            best_val = values[i]
            traj.record(ledger.spent, simplex[i])

    try:
        vals = np.array([f(v) for v in simplex])
        note_best(vals)
        while True:
            order = np.argsort(vals, kind="stable")
            simplex, vals = simplex[order], vals[order]
            if np.max(np.abs(simplex[1:] - simplex[0])) < xtol:
                break
            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = problem.project(centroid + (centroid - worst))
            fr = f(xr)
            if vals[0] <= fr < vals[-2]:
                simplex[-1], vals[-1] = xr, fr
            elif fr < vals[0]:
                xe = problem.project(centroid + 2.0 * (centroid - worst))
                fe = f(xe)
                if fe < fr:
                    simplex[-1], vals[-1] = xe, fe
                else:
                    simplex[-1], vals[-1] = xr, fr
            else:
                if fr < vals[-1]:
                    xc = problem.project(centroid + 0.5 * (xr - centroid))
                    fc = f(xc)
                    accept = fc <= fr
                else:
                    xc = problem.project(centroid + 0.5 * (worst - centroid))
                    fc = f(xc)
                    accept = fc < vals[-1]
                if accept:
                    simplex[-1], vals[-1] = xc, fc
                else:
                    for i in range(1, d + 1):
                        simplex[i] = problem.project(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
                        vals[i] = f(simplex[i])
            iters += 1
            note_best(vals)
    except BudgetExhausted:
        pass
    traj.iterations = iters
    traj.budget_spent = ledger.spent
    return traj
