"""Experiment orchestration: macro-replications, post-evaluation, curves and profiles.

The pipeline is a pure function of (config, master seed). Macro-replications
may run in parallel worker processes; results are always merged back in
(solver, problem, rep) order so the written files do not depend on ``jobs``.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .config import RunSpec, SolverConfig
from .oracles import ProblemInstance, problems_from_config
from .solvers import Trajectory, astro_df_run, astro_mfdf_run, nelder_mead_run
from .streams import COMMON_POINT, Phase, derive_seed

log = logging.getLogger(__name__)

SOLVER_FUNCS = {
    "astro_mfdf": astro_mfdf_run,
    "astro_df": astro_df_run,
    "nelder_mead": nelder_mead_run,
}


class MissingReference(KeyError):
    pass


@dataclass
class ProgressCurve:
    solver: str
    problem: str
    rep: int
    fractions: np.ndarray
    values: np.ndarray           # post-evaluated objective of the recommendation at each fraction
    best_point: np.ndarray | None = None
    best_value: float = math.nan

    @property
    def initial_value(self) -> float:
        return float(self.values[0])


@dataclass
class SolvabilityProfile:
    fractions: np.ndarray
    solved: dict = field(default_factory=dict)   # solver -> fraction solved per budget fraction
    gap: float = 0.10


@dataclass
class Artifacts:
    trajectories: list
    curves: list
    profile: SolvabilityProfile | None
    references: dict


# -- stage 1: macro-replications ---------------------------------------------------

def rep_seed(master_seed: int, problem_key: str, rep: int) -> int:
    """Seed shared by every solver on the same (problem, rep), so solvers see common random numbers."""
    return derive_seed(master_seed, problem_key, rep)


def _run_one(solver: str, inst: ProblemInstance, budget: float, config: SolverConfig,
             seed: int, rep: int) -> Trajectory:
    try:
        return SOLVER_FUNCS[solver](inst.problem, inst.x0, budget, config, seed=seed, rep=rep,
                                    problem_id=inst.key)
    except Exception as exc:  # recorded, not fatal
        log.warning("%s on %s rep %d failed: %s", solver, inst.key, rep, exc)
        traj = Trajectory(solver, inst.key, rep, seed)
        traj.record(0.0, inst.problem.project(inst.x0))
        traj.error = f"{type(exc).__name__}: {exc}"
        return traj


def _parallel(tasks, jobs: int):
    if jobs <= 1:
        return [fn(*args) for fn, args in tasks]
    return Parallel(n_jobs=jobs)(delayed(fn)(*args) for fn, args in tasks)


def run_experiment(solvers, problems, budget: float, n_macroreps: int = 20, master_seed: int = 0,
                   config: SolverConfig | None = None, jobs: int = 1) -> list[Trajectory]:
    """Run every (solver, problem, rep) to budget exhaustion."""
    if not budget > 0:
        raise ValueError("budget must be positive")
    config = config or SolverConfig()
    tasks = []
    for solver in solvers:
        if solver not in SOLVER_FUNCS:
            raise KeyError(f"unknown solver {solver!r}")
        for inst in problems:
            for rep in range(n_macroreps):
                tasks.append((_run_one, (solver, inst, budget, config,
                                         rep_seed(master_seed, inst.key, rep), rep)))
    return _parallel(tasks, jobs)


# -- stage 2: post-evaluation ------------------------------------------------------

def post_seed(master_seed: int) -> int:
    return derive_seed(master_seed, "post")


def post_mean(problem, x, n_post: int, seed: int) -> float:
    """Level-0 mean over replications 1..n_post of the post-evaluation streams.

    Every point uses the same replications, so post-evaluated values of
    different points are compared under common random numbers.
    """
    reps = np.arange(1, n_post + 1)
    return float(np.mean(problem.simulate(np.asarray(x, dtype=float), 0, reps, seed, COMMON_POINT, Phase.POST)))


def budget_grid(size: int = 101) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


def curve_from_values(budgets, values, budget: float, fractions) -> np.ndarray:
    """Piecewise-constant interpolation: the value of the last recommendation made by each fraction."""
    spent = np.minimum(np.asarray(budgets, dtype=float) / budget, 1.0)
    idx = np.searchsorted(spent, fractions, side="right") - 1
    return np.asarray(values, dtype=float)[np.maximum(idx, 0)]


def _post_problem(inst: ProblemInstance, trajs: list, budget: float, n_post: int, seed: int,
                  fractions) -> list[ProgressCurve]:
    memo: dict[bytes, float] = {}

    def value(x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in memo:
            memo[key] = post_mean(inst.problem, x, n_post, seed)
        return memo[key]

    out = []
    for tr in trajs:
        vals = [value(x) for _, x in tr.points]
        i = int(np.argmin(vals))
        out.append(ProgressCurve(tr.solver, tr.problem, tr.rep, np.asarray(fractions),
                                 curve_from_values([b for b, _ in tr.points], vals, budget, fractions),
                                 np.array(tr.points[i][1], dtype=float), float(vals[i])))
    return out


def post_evaluate(trajectories, problems, budget: float, n_post: int = 200, seed: int = 0,
                  grid: int = 101, jobs: int = 1) -> list[ProgressCurve]:
    """Re-estimate every recommended point with ``n_post`` fresh level-0 replications.

    ``problems`` maps problem keys to ProblemInstance (a list is accepted too).
    Curves come back in the order of ``trajectories``.
    """
    if not trajectories:
        raise ValueError("post_evaluate needs at least one trajectory")
    if not isinstance(problems, dict):
        problems = {p.key: p for p in problems}
    fractions = budget_grid(grid)
    groups: dict[str, list] = {}
    for tr in trajectories:
        groups.setdefault(tr.problem, []).append(tr)
    tasks = [(_post_problem, (problems[key], trs, budget, n_post, seed, fractions))
             for key, trs in groups.items()]
    by_id = {}
    for result in _parallel(tasks, jobs):
        for c in result:
            by_id[(c.solver, c.problem, c.rep)] = c
    return [by_id[(t.solver, t.problem, t.rep)] for t in trajectories]


def aggregate(curves, confidence: float = 0.95) -> dict:
    """Mean curve and t-based confidence half-width per (solver, problem)."""
    groups: dict[tuple, list] = {}
    for c in curves:
        groups.setdefault((c.solver, c.problem), []).append(c.values)
    out = {}
    for key, rows in groups.items():
        arr = np.vstack(rows)
        mean = arr.mean(axis=0)
        n = arr.shape[0]
        if n > 1:
            half = stats.t.ppf(0.5 + confidence / 2, n - 1) * arr.std(axis=0, ddof=1) / np.sqrt(n)
        else:
            half = np.zeros_like(mean)
        out[key] = (mean, half)
    return out


# -- stage 3: solvability ------------------------------------------------------------

def reference_values(problems, curves, n_post: int = 200, seed: int = 0,
                     ref_reps: int = 10000) -> dict:
    """Reference optimum value per problem.

    Problems with a known optimum use its post-evaluated value. Otherwise the
    best post-evaluated recommendation over all solvers and reps is
    re-estimated with ``ref_reps`` replications.
    """
    if not isinstance(problems, dict):
        problems = {p.key: p for p in problems}
    refs = {}
    for key, inst in problems.items():
        p = inst.problem
        if p.optimum is not None:
            refs[key] = post_mean(p, p.optimum[0], n_post, seed)
            continue
        cands = [c for c in curves if c.problem == key and c.best_point is not None]
        if not cands:
            continue
        best = min(cands, key=lambda c: (c.best_value, c.solver, c.rep))
        refs[key] = post_mean(p, best.best_point, ref_reps, seed)
    return refs


def solvability_profile(curves, references: dict, gap: float = 0.10) -> SolvabilityProfile:
    """Fraction of (problem, rep) pairs whose best-so-far value is within ``gap`` of the reference."""
    if not curves:
        return SolvabilityProfile(budget_grid(), {}, gap)
    fractions = curves[0].fractions
    counts: dict[str, list] = {}
    for c in curves:
        if c.problem not in references:
            raise MissingReference(c.problem)
        v_star = references[c.problem]
        best = np.minimum.accumulate(c.values)
        solved = (best - v_star) <= gap * (c.initial_value - v_star)
        counts.setdefault(c.solver, []).append(solved)
    solved = {s: np.mean(np.vstack(rows), axis=0) for s, rows in counts.items()}
    return SolvabilityProfile(np.asarray(fractions), solved, gap)


# -- export / import ---------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def write_trajectories(path: Path, trajectories) -> None:
    width = max((len(x) for t in trajectories for _, x in t.points), default=0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "problem", "rep", "budget"] + [f"x_{i + 1}" for i in range(width)])
        for t in trajectories:
            for b, x in t.points:
                w.writerow([t.solver, t.problem, t.rep, _fmt(b)] + [_fmt(v) for v in x]
                           + [""] * (width - len(x)))


def read_trajectories(path) -> list[Trajectory]:
    out: dict[tuple, Trajectory] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["solver"], row["problem"], int(row["rep"]))
            tr = out.get(key)
            if tr is None:
                tr = out[key] = Trajectory(key[0], key[1], key[2], seed=-1)
            xs = [float(v) for k, v in row.items() if k.startswith("x_") and v != ""]
            tr.points.append((float(row["budget"]), np.array(xs)))
    return list(out.values())


def write_curves(path: Path, curves) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "problem", "rep", "budget_fraction", "post_mean"])
        for c in curves:
            for f, v in zip(c.fractions, c.values):
                w.writerow([c.solver, c.problem, c.rep, _fmt(f), _fmt(v)])


def read_curves(path) -> list[ProgressCurve]:
    rows: dict[tuple, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["solver"], row["problem"], int(row["rep"]))
            rows.setdefault(key, []).append((float(row["budget_fraction"]), float(row["post_mean"])))
    return [ProgressCurve(k[0], k[1], k[2], np.array([f for f, _ in v]), np.array([x for _, x in v]))
            for k, v in rows.items()]


def write_profiles(path: Path, profile: SolvabilityProfile | None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "budget_fraction", "fraction_solved"])
        if profile is None:
            return
        for solver, vals in profile.solved.items():
            for f, v in zip(profile.fractions, vals):
                w.writerow([solver, _fmt(f), _fmt(v)])


def write_events(path: Path, trajectories) -> None:
    cols = ["solver", "problem", "rep", "k", "phase", "source", "success", "rho",
            "radii", "alpha", "incumbent", "incumbent_estimate", "budget"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for t in trajectories:
            for e in t.events:
                w.writerow([t.solver, t.problem, t.rep, e["k"], e["phase"], e["source"], int(e["success"]),
                            _fmt(e["rho"]) if e.get("rho") is not None else "",
                            ";".join(_fmt(r) for r in e["radii"]),
                            ";".join(_fmt(a) for a in e.get("alpha", [])[1:]),
                            ";".join(_fmt(v) for v in e["incumbent"]),
                            _fmt(e["incumbent_estimate"]), _fmt(e["budget"])])


def plot_results(out_dir: Path, curves, profile) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    agg = aggregate(curves)
    for problem in sorted({p for _, p in agg}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for (solver, prob), (mean, half) in sorted(agg.items()):
            if prob != problem:
                continue
            frac = curves[0].fractions
            ax.plot(frac, mean, label=solver)
            ax.fill_between(frac, mean - half, mean + half, alpha=0.2)
        ax.set_xlabel("budget fraction")
        ax.set_ylabel("post-evaluated objective")
        ax.set_title(problem, fontsize=8)
        ax.legend()
        safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in problem)
        path = out_dir / f"curve_{safe}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    if profile is not None and profile.solved:
        fig, ax = plt.subplots(figsize=(6, 4))
        for solver, vals in profile.solved.items():
            ax.step(profile.fractions, vals, where="post", label=solver)
        ax.set_xlabel("budget fraction")
        ax.set_ylabel(f"fraction solved ({profile.gap:.0%} gap)")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        path = out_dir / "profiles.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def export(out_dir, trajectories, curves, profile, plots: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / "trajectories.csv", out_dir / "curves.csv", out_dir / "profiles.csv",
                 out_dir / "events.csv"]
        write_trajectories(paths[0], trajectories)
        write_curves(paths[1], curves)
        write_profiles(paths[2], profile)
        write_events(paths[3], trajectories)
        if plots:
            paths += plot_results(out_dir, curves, profile)
    except OSError as exc:
        raise OSError(f"cannot write results to {exc.filename or out_dir}: {exc.strerror or exc}") from exc
    return paths


def digest(out_dir, names=("trajectories.csv", "curves.csv", "profiles.csv", "events.csv")) -> str:
    """SHA-256 over the result files, for reproducibility checks."""
    h = hashlib.sha256()
    for name in names:
        path = Path(out_dir) / name
        h.update(name.encode() + b"\x00")
        h.update(path.read_bytes())
    return h.hexdigest()


# -- whole pipeline ------------------------------------------------------------------------

def instances(spec: RunSpec) -> dict:
    return {inst.key: inst for inst in problems_from_config(spec.problem)}


def evaluate_runs(spec: RunSpec, trajectories, problems: dict | None = None, jobs: int | None = None):
    exp = spec.experiment
    problems = problems or instances(spec)
    jobs = exp["jobs"] if jobs is None else jobs
    seed = post_seed(exp["seed"])
    curves = post_evaluate(trajectories, problems, exp["budget"], exp["n_post"], seed, exp["grid"], jobs)
    refs = reference_values(problems, curves, exp["n_post"], seed, exp["ref_reps"])
    profile = solvability_profile(curves, refs, exp["gap"])
    return curves, profile, refs


def run_pipeline(spec: RunSpec) -> Artifacts:
    exp = spec.experiment
    problems = instances(spec)
    trajs = run_experiment(exp["solvers"], list(problems.values()), exp["budget"], exp["macroreps"],
                           exp["seed"], spec.solver, exp["jobs"])
    curves, profile, refs = evaluate_runs(spec, trajs, problems)
    return Artifacts(trajs, curves, profile, refs)


def summary_lines(art: Artifacts) -> list[str]:
    lines = []
    finals: dict[str, list] = {}
    for c in art.curves:
        finals.setdefault(c.solver, []).append(c.values[-1])
    for solver, vals in finals.items():
        trs = [t for t in art.trajectories if t.solver == solver]
        failed = sum(t.error is not None for t in trs)
        solved = art.profile.solved.get(solver) if art.profile else None
        frac = f"{solved[-1]:.3f}" if solved is not None else "n/a"
        lines.append(f"{solver}: runs={len(trs)} failed={failed} mean_final={np.mean(vals):.6g} "
                     f"median_iterations={np.median([t.iterations for t in trs]):g} solved@1={frac}")
    return lines
