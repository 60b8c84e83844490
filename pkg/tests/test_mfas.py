import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _brute import brute_force_q1, fixtures
from astromf.budget import BudgetLedger
from astromf.estimators import MomentEstimates, mfmc_variance
from astromf.mfas import (
    Method, NoDeficientLevel, SampleCache, SamplingTarget, effective_sizes, mc_required_size, mfas,
    next_fidelity_to_query, solve_allocation,
)
from astromf.oracles import RosenbrockMF, SyntheticGaussianMF


def target(eps=0.01, level=0, sigma_lb=1e-3):
    # kappa=1, lambda=1, Delta = eps^(1/4) gives target variance eps
    return SamplingTarget(np.zeros(1), level, eps ** 0.25, 1.0, 1.0, sigma_lb)


def moments(var, cov, sizes=(3, 3)):
    return MomentEstimates(0, np.zeros(len(var)), np.asarray(var, float), np.asarray(cov, float),
                           np.asarray(sizes))


def test_mc_required_size_examples():
    assert mc_required_size(2.0, SamplingTarget(np.zeros(1), 0, 1.0, 4.0, 1.0, 0.1)) == 16
    assert mc_required_size(0.0, SamplingTarget(np.zeros(1), 0, 1.0, 1.0, 1.0, 0.1)) == 1
    a = mc_required_size(3.0, SamplingTarget(np.zeros(1), 0, 0.5, 2.0, 1.0, 0.1))
    b = mc_required_size(3.0, SamplingTarget(np.zeros(1), 0, 1.0, 2.0, 1.0, 0.1))
    assert a == 16 * 18 and b == 18


def test_single_fidelity_allocation_is_mc():
    m = MomentEstimates(0, np.zeros(1), np.array([4.0]), np.array([4.0]), np.array([3]))
    res = solve_allocation(m, [1.0], target(0.01), [3])
    assert res.chosen_method is Method.MC and res.n_star[0] == mc_required_size(2.0, target(0.01))


def test_uncorrelated_levels_choose_mc():
    res = solve_allocation(moments([1.0, 1.0], [1.0, 0.0]), [1.0, 0.1], target(0.01), [3, 3])
    assert res.c_star[1] == 0.0
    assert res.predicted_mfmc_cost >= res.predicted_mc_cost
    assert res.chosen_method is Method.MC


def test_high_correlation_matches_brute_force():
    var0, var1, cov, costs, eps = 1.0, 1.0, 0.99, (1.0, 0.1), 0.01
    res = solve_allocation(moments([var0, var1], [var0, cov], (2, 2)), costs, target(eps), [2, 2])
    best = brute_force_q1(var0, var1, cov, costs, eps)
    assert res.predicted_mfmc_cost <= 1.05 * best[0]
    assert res.chosen_method is Method.MFMC


@pytest.mark.parametrize("fx", fixtures(8, seed=1))
def test_allocation_constraints_and_brute_force(fx):
    var0, var1, cov, costs, eps = fx
    current = np.array([2, 2])
    res = solve_allocation(moments([var0, var1], [var0, cov], current), costs, target(eps), current)
    n = res.n_star
    assert n[0] <= n[1] and np.all(n >= current)
    assert mfmc_variance([var0, var1], [var0, cov], n, res.c_star) <= eps * (1 + 1e-9)
    best = brute_force_q1(var0, var1, cov, costs, eps)
    assert res.predicted_mfmc_cost <= 1.05 * best[0]
    assert (res.chosen_method is Method.MFMC) == (res.predicted_mfmc_cost <= res.predicted_mc_cost)


@settings(max_examples=60, deadline=None)
@given(var=st.lists(st.floats(0.05, 5), min_size=3, max_size=3),
       rho=st.lists(st.floats(-0.95, 0.999), min_size=2, max_size=2),
       w=st.lists(st.floats(0.001, 0.9), min_size=2, max_size=2),
       cur=st.lists(st.integers(2, 40), min_size=3, max_size=3),
       eps=st.floats(1e-4, 0.5))
def test_allocation_feasible_three_levels(var, rho, w, cur, eps):
    var = np.array(var)
    cov = np.array([var[0], rho[0] * math.sqrt(var[0] * var[1]), rho[1] * math.sqrt(var[0] * var[2])])
    costs = np.array([1.0, *sorted(w, reverse=True)])
    res = solve_allocation(moments(var, cov, cur), costs, target(eps), cur)
    n = res.n_star
    assert np.all(np.diff(n) >= 0) and np.all(n >= np.maximum.accumulate(cur))
    assert mfmc_variance(var, cov, n, res.c_star) <= eps * (1 + 1e-9) or res.chosen_method is Method.MC
    assert (res.chosen_method is Method.MFMC) == (res.predicted_mfmc_cost <= res.predicted_mc_cost)


def test_next_fidelity_examples():
    assert next_fidelity_to_query([3, 3, 3], [10, 20, 40]) == 0
    assert next_fidelity_to_query([10, 3, 3], [10, 20, 40]) == 1
    with pytest.raises(NoDeficientLevel):
        next_fidelity_to_query([10, 20, 40], [10, 20, 40])


def test_effective_sizes_nested():
    assert list(effective_sizes([5, 3, 8])) == [3, 3, 8]


def test_noiseless_returns_after_initial_reps():
    p = RosenbrockMF(2, noise_sigma=0.0)
    out = mfas(p, SamplingTarget(p.x0, 0, 0.5, 2.0, 1.0, 1e-3), BudgetLedger(p.costs), SampleCache(p, 0))
    assert out.method is Method.MC and list(out.sizes) == [3, 3, 3]
    assert out.estimate == pytest.approx(p.true_value(p.x0))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), delta=st.sampled_from([1.0, 0.5, 0.3]), level=st.integers(0, 2))
def test_exit_guarantee(seed, delta, level):
    p = RosenbrockMF(2)
    tgt = SamplingTarget(p.x0, level, delta, 2.0, 1.0, 1e-3)
    trace = []
    out = mfas(p, tgt, BudgetLedger(p.costs), SampleCache(p, seed), trace=trace)
    assert not out.exhausted and out.estimated_variance <= tgt.target_variance
    # counts never decrease and the target never moves
    for a, b in zip(trace, trace[1:]):
        assert all(b[f"n{i}"] >= a[f"n{i}"] for i in range(3))
        assert a["target_variance"] == b["target_variance"]


def test_charges_match_ledger_and_cache_reuse():
    p = RosenbrockMF(2)
    ledger = BudgetLedger(p.costs)
    cache = SampleCache(p, 1)
    tgt = SamplingTarget(p.x0, 0, 0.5, 2.0, 1.0, 1e-3)
    out = mfas(p, tgt, ledger, cache)
    assert out.charged == pytest.approx(ledger.spent)
    assert ledger.spent == pytest.approx(p.costs @ out.sizes)
    again = mfas(p, tgt, ledger, cache)
    assert again.charged == 0.0 and again.estimate == out.estimate


def test_target_level_one_never_touches_level_zero():
    p = SyntheticGaussianMF.two_level(0.9)
    ledger = BudgetLedger(p.costs)
    mfas(p, SamplingTarget(p.x0, 1, 0.4, 2.0, 1.0, 1e-3), ledger, SampleCache(p, 3))
    assert ledger.queries[0] == 0 and ledger.queries[1] > 0


def test_cheap_correlated_fixture_prefers_mfmc():
    p = SyntheticGaussianMF.two_level(0.99, costs=(1.0, 0.01))
    tgt = SamplingTarget(p.x0, 0, 0.3, 2.0, 1.0, 1e-3)
    mc_cost = mc_required_size(1.0, tgt)
    wins = 0
    for seed in range(30):
        ledger = BudgetLedger(p.costs)
        out = mfas(p, tgt, ledger, SampleCache(p, seed))
        wins += out.method is Method.MFMC and ledger.spent < 1.05 * mc_cost
    assert wins >= 27


def test_budget_exhaustion_is_flagged():
    p = RosenbrockMF(2)
    ledger = BudgetLedger(p.costs, 5.0)
    out = mfas(p, SamplingTarget(p.x0, 0, 0.1, 2.0, 1.0, 1e-3), ledger, SampleCache(p, 0))
    assert out.exhausted
    assert ledger.spent < 5.0 + 0.1 * 100 + 1  # at most one batch of overshoot


def test_mfmc_refinement_keeps_samples_nested():
    p = SyntheticGaussianMF.two_level(0.99, costs=(1.0, 0.1))
    checked = 0
    for seed in range(10):
        trace = []
        mfas(p, SamplingTarget(p.x0, 0, 0.3, 100.0, 1.0, 1e-3), BudgetLedger(p.costs),
             SampleCache(p, seed), trace=trace)
        if all(row["method"] == "MFMC" for row in trace):
            checked += 1
            assert all(row["n0"] <= row["n1"] for row in trace)
    assert checked >= 5
