"""Multi-fidelity stochastic problems.

Each problem exposes ``q + 1`` fidelity levels (0 is the most accurate and
most expensive) and a batch simulator ``simulate(x, level, reps, seed, pkey)``
that returns one realization per replication index. Randomness comes only
from counter-based streams, so a replication is replayable bit-exactly and
the same replication index at two levels shares its ``shared`` substream.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import poisson

from . import kernels
from .streams import SHARED, Phase, ReplicationStream, normals, point_key, private, uniforms


class InvalidLevel(ValueError):
    pass


class InvalidHorizon(ValueError):
    pass


class MultiFidelityProblem:
    """Base class. Subclasses implement ``_simulate``."""

    name = "problem"
    costs: np.ndarray
    dim: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    x0: np.ndarray
    optimum: tuple[np.ndarray, float] | None = None

    @property
    def num_levels(self) -> int:
        return len(self.costs)

    @property
    def q(self) -> int:
        return len(self.costs) - 1

    @property
    def bounds(self):
        if self.lower is None and self.upper is None:
            return None
        return self.lower, self.upper

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.lower is not None or self.upper is not None:
            x = np.clip(x, self.lower, self.upper)
        return x

    def radius_scale(self) -> float:
        """Box diameter used to size the initial trust region (None if unbounded)."""
        if self.lower is None or self.upper is None:
            return None
        span = np.asarray(self.upper) - np.asarray(self.lower)
        if not np.all(np.isfinite(span)):
            return None
        return float(np.linalg.norm(span))

    def check_level(self, level: int) -> None:
        if not (0 <= level <= self.q):
            raise InvalidLevel(f"{self.name}: level {level} not in 0..{self.q}")

    def simulate(self, x, level: int, reps, seed: int, pkey: int | None = None,
                 phase: Phase = Phase.OPTIMIZE) -> np.ndarray:
        """Realizations F^level(x, xi_j) for every j in ``reps``."""
        self.check_level(level)
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected point of length {self.dim}, got {x.shape}")
        reps = np.atleast_1d(np.asarray(reps, dtype=np.int64))
        if pkey is None:
            pkey = point_key(x)
        return self._simulate(x, level, reps, seed, pkey, phase)

    def evaluate(self, x, level: int, stream: ReplicationStream) -> float:
        return float(self.simulate(x, level, [stream.replication], stream.master_seed,
                                   stream.point_key, stream.phase)[0])

    def true_value(self, x) -> float | None:
        """Noise-free level-0 objective when known analytically."""
        return None

    def describe(self) -> str:
        w = ", ".join(f"{c:g}" for c in self.costs)
        if self.bounds is None:
            b = "none"
        else:
            b = f"[{np.min(self.lower):g}, {np.max(self.upper):g}]^{self.dim}"
        return (f"problem: {self.name}\ndimension: {self.dim}\nlevels (q+1): {self.num_levels}\n"
                f"q={self.q}\ncost vector: w=({w})\nbounds: {b}\n"
                f"default x0: {tuple(float(v) for v in self.x0)}")

    def _simulate(self, x, level, reps, seed, pkey, phase):
        raise NotImplementedError


# -- Rosenbrock ------------------------------------------------------------------

def rosenbrock_levels(x, variant: str = "printed") -> tuple[float, float, float]:
    """Deterministic parts (f0, f1, f2) of the multi-fidelity Rosenbrock family.

    f0 and f1 sum the coupling terms over i = 1..d-1. ``variant="printed"``
    uses 10 + d*0.25*x_1 in the f2 denominator, ``"sum"`` uses 10 + 0.25*sum(x).
    """
    x = np.asarray(x, dtype=float)
    d = len(x)
    head, tail = x[:-1], x[1:]
    f0 = float(np.sum(10.0 * (tail - head**2) ** 2 + (1.0 - head) ** 2))
    half_sum = 0.5 * float(np.sum(x))
    f1 = float(np.sum(5.0 * (tail - head**2) ** 2 + (-2.0 - head) ** 2)) - half_sum
    if variant == "printed":
        denom = 10.0 + d * 0.25 * x[0]
    elif variant == "sum":
        denom = 10.0 + 0.25 * float(np.sum(x))
    else:
        raise ValueError(f"unknown f2 variant {variant!r}")
    f2 = (f0 - 4.0 - half_sum) / denom
    return f0, f1, f2


def rosenbrock_noise(stream: ReplicationStream, level: int, d: int, noise_scale: float = 1.0) -> float:
    """Noise added to level ``level`` for one replication.

    E^0 comes from the shared substream, E^1 and E^2 from level-private ones;
    each E_i^t ~ N(0, noise_scale^2 / d).
    """
    if level not in (0, 1, 2):
        raise InvalidLevel(f"Rosenbrock level {level} not in 0..2")
    sd = noise_scale / np.sqrt(d)
    e0 = stream.with_tag(SHARED).normals(d) * sd
    if level == 0:
        return float(np.sum(e0))
    et = stream.with_tag(private(level)).normals(d) * sd
    return float(np.sum((e0 + et) / 2.0))


class RosenbrockMF(MultiFidelityProblem):
    name = "rosenbrock_mf"

    def __init__(self, dimension: int = 2, noise_sigma: float = 1.0, f2_variant: str = "printed",
                 x0=None, box: float = 2.0):
        if dimension < 2:
            raise ValueError("Rosenbrock needs dimension >= 2")
        self.dim = int(dimension)
        self.noise_sigma = float(noise_sigma)
        self.f2_variant = f2_variant
        rosenbrock_levels(np.zeros(self.dim), f2_variant)  # validates the variant
        self.costs = np.array([1.0, 0.3, 0.1])
        self.lower = np.full(self.dim, -box)
        self.upper = np.full(self.dim, box)
        self.x0 = np.full(self.dim, -0.5) if x0 is None else np.asarray(x0, dtype=float)
        self.optimum = (np.ones(self.dim), 0.0)

    def true_value(self, x) -> float:
        return rosenbrock_levels(x, self.f2_variant)[0]

    def _simulate(self, x, level, reps, seed, pkey, phase):
        det = rosenbrock_levels(x, self.f2_variant)[level]
        if self.noise_sigma == 0.0:
            return np.full(len(reps), det)
        sd = self.noise_sigma / np.sqrt(self.dim)
        e0 = normals(seed, pkey, reps, SHARED, self.dim, phase) * sd
        if level == 0:
            noise = e0.sum(axis=1)
        else:
            et = normals(seed, pkey, reps, private(level), self.dim, phase) * sd
            noise = ((e0 + et) / 2.0).sum(axis=1)
        return det + noise


# -- (s, S) inventory --------------------------------------------------------

class InventorySS(MultiFidelityProblem):
    """Periodic-review (s, S) inventory with backorders; fidelity = run length.

    Per period: receive due orders, serve Exp(theta) demand (backlogging),
    review the inventory position and order up to S if it is below s with a
    Poisson(ell) lead time, then pay holding and backorder costs. Returns the
    average cost per period. Demand and lead-time uniforms for period t sit at
    counters 2t and 2t+1 of the shared substream, so shorter runs consume a
    prefix of longer ones.
    """

    name = "sscont"

    def __init__(self, theta: float = 400.0, ell: float = 3.0, horizons=(100, 50, 30),
                 costs=(1.0, 0.5, 0.3), holding: float = 1.0, backorder: float = 4.0,
                 fixed: float = 36.0, unit: float = 2.0, x0=(500.0, 1000.0), upper: float | None = None):
        if theta <= 0 or ell < 0:
            raise ValueError("theta must be positive and ell nonnegative")
        horizons = tuple(int(h) for h in horizons)
        if len(horizons) != len(costs):
            raise ValueError("need one horizon per fidelity level")
        if min(horizons) < 1:
            raise InvalidHorizon("horizons must be >= 1 day")
        self.theta, self.ell = float(theta), float(ell)
        self.horizons = horizons
        self.costs = np.asarray(costs, dtype=float)
        self.holding, self.backorder, self.fixed, self.unit = map(float, (holding, backorder, fixed, unit))
        self.dim = 2
        if upper is None:
            upper = max(2000.0, 10.0 * self.theta * (self.ell + 1.0))
        self.lower = np.zeros(2)
        self.upper = np.full(2, float(upper))
        self.x0 = np.asarray(x0, dtype=float)

    @cached_property
    def _lead_cdf(self) -> np.ndarray:
        kmax = int(poisson.ppf(1.0 - 1e-15, self.ell)) + 1 if self.ell > 0 else 0
        return poisson.cdf(np.arange(kmax + 1), self.ell)

    def project(self, x) -> np.ndarray:
        x = super().project(x)
        s, S = x
        return np.array([min(s, S), S])

    def draws(self, u: np.ndarray, days: int) -> tuple[np.ndarray, np.ndarray]:
        """Demand and lead-time draws from interleaved uniforms of shape (reps, >= 2*days)."""
        u = np.atleast_2d(u)[:, : 2 * days]
        demand = -self.theta * np.log(u[:, 0::2])
        cdf = self._lead_cdf
        lead = np.minimum(np.searchsorted(cdf, u[:, 1::2], side="left"), len(cdf) - 1).astype(np.int64)
        return np.ascontiguousarray(demand), np.ascontiguousarray(lead)

    def run(self, s: float, S: float, days: int, stream) -> float:
        """Average cost per period of one replication driven by ``stream``."""
        if days < 1:
            raise InvalidHorizon("days must be >= 1")
        if s > S:
            raise ValueError("need s <= S")
        demand, lead = self.draws(stream.uniforms(2 * days), days)
        return float(kernels.ss_costs(demand, lead, float(s), float(S), self.holding, self.backorder,
                                      self.fixed, self.unit, float(S))[0])

    def trace(self, s: float, S: float, days: int, stream) -> list[dict]:
        """Period-by-period record of one replication (pure Python, for audits)."""
        demand, lead = self.draws(stream.uniforms(2 * days), days)
        demand, lead = demand[0].tolist(), lead[0].tolist()
        arrivals = [0.0] * days
        level, on_order, total = float(S), 0.0, 0.0
        rows = []
        for t in range(days):
            arrived = arrivals[t]
            level += arrived
            on_order -= arrived
            level -= demand[t]
            position = level + on_order
            qty, order_cost = 0.0, 0.0
            if position < s:
                qty = S - position
                order_cost = self.fixed + self.unit * qty
                if lead[t] == 0:
                    level += qty
                else:
                    if t + lead[t] < days:
                        arrivals[t + lead[t]] += qty
                    on_order += qty
            stock_cost = self.holding * level if level > 0.0 else -self.backorder * level
            total += order_cost
            total += stock_cost
            rows.append({"period": t, "demand": demand[t], "arrived": arrived, "order": qty,
                         "lead": lead[t] if qty > 0 else None, "level": level,
                         "order_cost": order_cost, "stock_cost": stock_cost, "cumulative": total})
        return rows

    def _simulate(self, x, level, reps, seed, pkey, phase):
        s, S = self.project(x)
        days = self.horizons[level]
        u = uniforms(seed, pkey, reps, SHARED, 2 * days, phase)
        demand, lead = self.draws(u, days)
        return kernels.ss_costs(demand, lead, float(s), float(S), self.holding, self.backorder,
                                self.fixed, self.unit, float(S))

    def describe(self) -> str:
        return (super().describe() + f"\ntheta={self.theta:g} ell={self.ell:g} "
                f"horizons={self.horizons}")


def inventory_simulate(problem: InventorySS, s: float, S: float, days: int, stream) -> float:
    return problem.run(s, S, days, stream)


# -- synthetic validation oracle ---------------------------------------------

class SyntheticGaussianMF(MultiFidelityProblem):
    """Jointly Gaussian levels with known moments, independent of x.

    Level i at replication j is means[i] + (L z_j)_i with L the Cholesky
    factor of ``cov`` and z_j read from the shared substream.
    """

    name = "gaussian_mf"

    def __init__(self, means, cov, costs, dim: int = 1):
        self.means = np.asarray(means, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.costs = np.asarray(costs, dtype=float)
        if self.cov.shape != (len(self.means),) * 2 or len(self.costs) != len(self.means):
            raise ValueError("means, cov and costs disagree on the number of levels")
        self.chol = np.linalg.cholesky(self.cov)
        self.dim = dim
        self.x0 = np.zeros(dim)

    @classmethod
    def two_level(cls, rho: float, var0: float = 1.0, var1: float = 1.0, costs=(1.0, 0.1),
                  means=(0.0, 0.0)):
        c = rho * np.sqrt(var0 * var1)
        return cls(means, [[var0, c], [c, var1]], costs)

    def _simulate(self, x, level, reps, seed, pkey, phase):
        z = normals(seed, pkey, reps, SHARED, len(self.means), phase)
        return self.means[level] + z @ self.chol[level]


class TruncatedProblem(MultiFidelityProblem):
    """View of a problem restricted to its top ``q + 1`` levels."""

    def __init__(self, base: MultiFidelityProblem, q: int):
        if not 0 <= q <= base.q:
            raise InvalidLevel(f"cannot keep levels 0..{q} of a {base.num_levels}-level problem")
        self.base = base
        self.name = base.name
        self.dim = base.dim
        self.costs = base.costs[: q + 1].copy()
        self.lower, self.upper = base.lower, base.upper
        self.x0 = base.x0
        self.optimum = base.optimum

    def project(self, x):
        return self.base.project(x)

    def radius_scale(self):
        return self.base.radius_scale()

    def true_value(self, x):
        return self.base.true_value(x)

    def _simulate(self, x, level, reps, seed, pkey, phase):
        return self.base._simulate(x, level, reps, seed, pkey, phase)


# -- construction from config ------------------------------------------------

def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def make_problem(name: str, **params) -> MultiFidelityProblem:
    if name == "rosenbrock_mf":
        keys = {"dimension", "noise_sigma", "f2_variant", "x0"}
        return RosenbrockMF(**{k: v for k, v in params.items() if k in keys})
    if name == "sscont":
        keys = {"theta", "ell", "horizons", "holding", "backorder", "fixed", "unit", "x0", "upper"}
        return InventorySS(**{k: v for k, v in params.items() if k in keys})
    raise KeyError(f"unknown problem {name!r}")


@dataclass(frozen=True)
class ProblemInstance:
    key: str
    problem: MultiFidelityProblem
    x0: np.ndarray


def problems_from_config(section: dict) -> list[ProblemInstance]:
    """Expand the [problem] section into instances (theta/ell/x0 lists form a grid)."""
    name = section["name"]
    x0s = section.get("x0")
    if x0s is None:
        x0s = [None]
    elif x0s and not isinstance(x0s[0], (list, tuple)):
        x0s = [x0s]
    out = []
    if name == "rosenbrock_mf":
        for x0 in x0s:
            p = make_problem(name, dimension=section["dimension"], noise_sigma=section["noise_sigma"],
                             f2_variant=section["f2_variant"], x0=x0)
            key = f"rosenbrock_mf_d{p.dim}_x0={','.join(f'{v:g}' for v in p.x0)}"
            out.append(ProblemInstance(key, p, p.x0))
    else:
        for theta, ell, x0 in itertools.product(_as_list(section["theta"]), _as_list(section["ell"]), x0s):
            kwargs = dict(theta=theta, ell=ell, horizons=section["horizons"], holding=section["holding"],
                          backorder=section["backorder"], fixed=section["fixed"], unit=section["unit"])
            if x0 is not None:
                kwargs["x0"] = x0
            p = make_problem(name, **kwargs)
            key = f"sscont_theta={theta:g}_ell={ell:g}_x0={','.join(f'{v:g}' for v in p.x0)}"
            out.append(ProblemInstance(key, p, p.x0))
    return out
