import numpy as np
import pytest

from astromf.oracles import (
    InvalidHorizon, InvalidLevel, InventorySS, RosenbrockMF, SyntheticGaussianMF, TruncatedProblem,
    inventory_simulate, make_problem, problems_from_config, rosenbrock_levels, rosenbrock_noise,
)
from astromf.streams import SHARED, make_stream, private

# (x, f0, f1, f2) evaluated by hand from the printed formulas (d = 2 unless noted):
#   f0 = sum 10 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2
#   f1 = sum 5 (x_{i+1} - x_i^2)^2 + (-2 - x_i)^2 - 0.5 sum x
#   f2 = (f0 - 4 - 0.5 sum x) / (10 + d * 0.25 * x_1)
HAND = [
    ((1.0, 1.0), 0.0, 9.0 - 1.0, -5.0 / 10.5),
    ((0.0, 0.0), 1.0, 4.0, -3.0 / 10.0),
    ((-2.0, 4.0), 9.0, -1.0, 4.0 / 9.0),
    ((2.0, 0.0), 161.0, 80.0 + 16.0 - 1.0, 156.0 / 11.0),
    ((-1.0, 1.0), 4.0, 1.0, 0.0),
    ((0.5, -0.5), 5.875, 9.0625, 1.875 / 10.25),
    ((1.0, 1.0, 1.0), 0.0, 18.0 - 1.5, -5.5 / 10.75),
]


@pytest.mark.parametrize("x,f0,f1,f2", HAND)
def test_rosenbrock_hand_values(x, f0, f1, f2):
    got = rosenbrock_levels(np.array(x))
    assert got == pytest.approx((f0, f1, f2), abs=1e-12)


def test_f2_sum_variant():
    f0, _, f2 = rosenbrock_levels(np.array([2.0, 0.0]), "sum")
    assert f2 == pytest.approx((161.0 - 4.0 - 1.0) / 10.5)
    with pytest.raises(ValueError):
        rosenbrock_levels(np.zeros(2), "other")


def test_noiseless_evaluations():
    p = RosenbrockMF(2, noise_sigma=0.0)
    st = make_stream(1, [1.0, 1.0], 1)
    assert p.evaluate(np.array([1.0, 1.0]), 0, st) == 0.0
    assert p.evaluate(np.array([-2.0, 4.0]), 1, st) == pytest.approx(-1.0)
    assert rosenbrock_noise(st, 2, 2, noise_scale=0.0) == 0.0


def test_evaluate_is_pure():
    p = RosenbrockMF(3)
    st = make_stream(9, p.x0, 4)
    assert p.evaluate(p.x0, 1, st) == p.evaluate(p.x0, 1, st)


def test_noise_matches_batch_simulator():
    p = RosenbrockMF(2, noise_sigma=0.7)
    x = np.array([0.3, -0.2])
    st = make_stream(5, x, 2)
    for level in range(3):
        expected = rosenbrock_levels(x)[level] + rosenbrock_noise(st, level, 2, 0.7)
        assert p.evaluate(x, level, st) == pytest.approx(expected, abs=1e-12)


def test_noise_covariance_and_mean():
    p = RosenbrockMF(2)
    x = np.zeros(2)
    reps = np.arange(1, 10_001)
    y0 = p.simulate(x, 0, reps, 3) - 1.0
    y1 = p.simulate(x, 1, reps, 3) - 4.0
    assert np.cov(y0, y1)[0, 1] > 0
    assert np.corrcoef(y0, y1)[0, 1] > 0.1
    big = p.simulate(x, 0, np.arange(1, 100_001), 4) - 1.0
    assert abs(big.mean()) < 3 * big.std() / np.sqrt(big.size)
    assert big.var() == pytest.approx(1.0, rel=0.03)     # sigma_E^2 / d per coordinate, summed


def test_invalid_level():
    p = RosenbrockMF(2)
    with pytest.raises(InvalidLevel):
        p.simulate(p.x0, 3, [1], 0)
    with pytest.raises(InvalidLevel):
        rosenbrock_noise(make_stream(0, [0.0], 1), 5, 1)


def test_describe_mentions_costs():
    assert "q=2" in RosenbrockMF(2).describe() and "w=(1, 0.3, 0.1)" in RosenbrockMF(2).describe()
    assert "w=(1, 0.5, 0.3)" in InventorySS().describe()


# -- inventory --------------------------------------------------------------

FROZEN = [  # θ=50, ℓ=1, (s, S) = (30, 120), seed 2024, replication 1
    dict(demand=99.74426789355151, arrived=0.0, order=99.74426789355151, level=20.25573210644849,
         cumulative=255.74426789355152),
    dict(demand=103.44048482204833, arrived=99.74426789355151, order=103.44048482204833,
         level=16.559515177951667, cumulative=515.1847527155999),
    dict(demand=17.436833196745066, arrived=103.44048482204833, order=0.0, level=102.56316680325493,
         cumulative=617.7479195188548),
    dict(demand=73.6013759331956, arrived=0.0, order=91.03820912994067, level=28.961790870059332,
         cumulative=864.7861286487955),
    dict(demand=58.409657844667805, arrived=91.03820912994067, order=0.0, level=61.590342155332195,
         cumulative=926.3764708041277),
]


def test_frozen_five_period_trace():
    p = InventorySS(theta=50, ell=1)
    st = make_stream(2024, (30.0, 120.0), 1)
    rows = p.trace(30.0, 120.0, 5, st)
    for row, want in zip(rows, FROZEN):
        for key, value in want.items():
            assert row[key] == value, key
    assert inventory_simulate(p, 30.0, 120.0, 5, st) == FROZEN[-1]["cumulative"] / 5


def test_trace_agrees_with_kernel_on_long_run():
    p = InventorySS(theta=80, ell=2)
    st = make_stream(1, (100.0, 400.0), 3)
    rows = p.trace(100.0, 400.0, 100, st)
    assert p.run(100.0, 400.0, 100, st) == pytest.approx(rows[-1]["cumulative"] / 100, rel=1e-12)


def test_zero_demand_means_holding_only():
    p = InventorySS(theta=50, holding=1.0)
    demand, lead = np.zeros((1, 20)), np.ones((1, 20), dtype=np.int64)
    from astromf import kernels
    out = kernels.ss_costs(demand, lead, 100.0, 300.0, p.holding, p.backorder, p.fixed, p.unit, 300.0)
    assert out[0] == pytest.approx(1.0 * 300.0)


def test_short_horizon_is_prefix():
    p = InventorySS(theta=40, ell=2)
    st = make_stream(7, (50.0, 200.0), 1)
    u30 = st.uniforms(60)
    u100 = st.uniforms(200)
    assert np.array_equal(u30, u100[:60])
    d30, l30 = p.draws(u30, 30)
    d100, l100 = p.draws(u100, 100)
    assert np.array_equal(d30, d100[:, :30]) and np.array_equal(l30, l100[:, :30])


def test_mean_cost_positive_and_crn_correlated():
    p = InventorySS(theta=400, ell=3)
    x = np.array([500.0, 1000.0])
    y0 = p.simulate(x, 0, np.arange(1, 1001), 11)
    assert np.all(np.isfinite(y0)) and y0.mean() > 0
    reps = np.arange(1, 10_001)
    y0 = p.simulate(x, 0, reps, 12)
    y1 = p.simulate(x, 1, reps, 12)
    assert np.corrcoef(y0, y1)[0, 1] > 0.1


def test_projection_enforces_s_le_S():
    p = InventorySS()
    assert list(p.project([900.0, 400.0])) == [400.0, 400.0]
    assert list(p.project([-5.0, 1e9])) == [0.0, p.upper[1]]


def test_invalid_horizons():
    with pytest.raises(InvalidHorizon):
        InventorySS(horizons=(100, 50, 0))
    p = InventorySS()
    with pytest.raises(InvalidHorizon):
        p.run(1.0, 2.0, 0, make_stream(0, [1.0, 2.0], 1))


def test_synthetic_gaussian_moments():
    cov = np.array([[1.0, 0.9, 0.5], [0.9, 1.0, 0.4], [0.5, 0.4, 2.0]])
    p = SyntheticGaussianMF([1.0, 2.0, 3.0], cov, [1.0, 0.1, 0.01])
    reps = np.arange(1, 50_001)
    y = np.vstack([p.simulate(p.x0, i, reps, 1) for i in range(3)])
    assert np.allclose(np.cov(y, bias=True), cov, atol=0.03)
    assert np.allclose(y.mean(axis=1), [1.0, 2.0, 3.0], atol=0.03)


def test_truncated_problem_keeps_top_levels():
    base = RosenbrockMF(2)
    t = TruncatedProblem(base, 0)
    assert t.q == 0 and list(t.costs) == [1.0]
    assert np.array_equal(t.simulate(base.x0, 0, [1, 2], 5), base.simulate(base.x0, 0, [1, 2], 5))
    with pytest.raises(InvalidLevel):
        TruncatedProblem(base, 3)


def test_problem_grid_from_config():
    section = dict(name="sscont", theta=[25, 50], ell=[1, 2, 3], x0=[[200, 500], [500, 1000]],
                   horizons=[100, 50, 30], holding=1.0, backorder=4.0, fixed=36.0, unit=2.0)
    insts = problems_from_config(section)
    assert len(insts) == 12 and len({i.key for i in insts}) == 12
    with pytest.raises(KeyError):
        make_problem("nope")
