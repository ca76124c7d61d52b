import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

import roughvol.roughtest as rt
from reference import naive_statistic
from roughvol.core import (
    DELTA_5S,
    BlockGrid,
    DegenerateStatisticError,
    GridSpec,
    LaggedBlocks,
    LayoutError,
    PipelineError,
    PricePath,
    SameTimeOfDay,
    TuningSpec,
    rng_stream,
    design_scenario,
)
from roughvol.estimators import bipower_panel
from roughvol.roughtest import (
    DiffPanel,
    build_block_grid,
    compute_diff_panel,
    lag_autocovariances,
    product_days,
    run_test,
    select_exponents,
    spot_vol_panel,
    statistic_from_summands,
    summands,
    test_statistic,
)
from roughvol.simulate import simulate_panel


def gaussian_panel(n_days, n_returns, c=0.02, seed=0, delta=DELTA_5S):
    r = math.sqrt(c * delta) * rng_stream(seed).standard_normal((n_days, n_returns))
    prices = np.concatenate([np.zeros((n_days, 1)), np.cumsum(r, axis=1)], axis=1)
    return PricePath.from_array(prices, delta)


def synthetic_diff(values, valid=None):
    values = np.asarray(values, dtype=float)
    valid = np.ones(values.shape, bool) if valid is None else valid
    return DiffPanel(np.arange(values.shape[0]), values, valid, BlockGrid(2, 2, 2 * values.shape[1]))


class TestGrid:
    def test_full_day(self):
        g = build_block_grid(gaussian_panel(2, 4620), 60, 48)
        assert g.n_blocks == 77
        s = g.block_slice(77)
        # 1-based returns 4561..4608
        assert (s.start + 1, s.stop) == (4561, 4608)

    def test_short_day(self):
        path = gaussian_panel(7, 120)
        assert build_block_grid(path, 60, 48).n_blocks == 2
        # the statistic itself needs four blocks per day
        with pytest.raises(LayoutError):
            spot_vol_panel(path, build_block_grid(path, 60, 48), TuningSpec())

    def test_rejects_long_window(self):
        with pytest.raises(LayoutError):
            build_block_grid(gaussian_panel(2, 4620), 60, 61)

    def test_inconsistent_days(self):
        from roughvol.core import TradingDay
        path = PricePath([TradingDay("a", np.zeros(300)), TradingDay("b", np.zeros(301))])
        with pytest.raises(LayoutError):
            build_block_grid(path, 60, 48)


class TestExponents:
    def test_constant_volatility(self):
        path = gaussian_panel(7, 4620, seed=1)
        tuning = TuningSpec(0.95)
        grid = build_block_grid(path, 60, 48)
        panel = spot_vol_panel(path, grid, tuning)
        u = panel.u_used[5:]
        assert np.nanmean(u) == pytest.approx(0.3203 / math.sqrt(0.02), rel=0.02)
        pair_u = np.repeat(u, 2, axis=1)
        modulus = np.exp(-0.5 * pair_u ** 2 * np.exp(panel.frak_c[5:, :pair_u.shape[1]]))
        assert np.nanmean(modulus) == pytest.approx(0.95, abs=0.01)

    def test_identical_prior_days(self):
        day = math.sqrt(0.02 * DELTA_5S) * rng_stream(2).standard_normal(480)
        bp = bipower_panel(np.tile(day, (6, 1)), DELTA_5S, 60, 48, 8)
        u, eta, bad = select_exponents(bp, TuningSpec(0.75), BlockGrid(60, 48, 8))
        for p in range(4):
            assert eta[5, p] == pytest.approx(0.5 * (bp[0, 2 * p] + bp[0, 2 * p + 1]), rel=1e-15)
        assert bad[:5].all() and not bad[5].any()

    def test_identical_blocks_exact(self):
        # identical blocks give equal bipower values except block 1, which loses a term
        block = math.sqrt(0.02 * DELTA_5S) * rng_stream(3).standard_normal(60)
        bp = bipower_panel(np.tile(block, (6, 8)), DELTA_5S, 60, 48, 8)
        _, eta, _ = select_exponents(bp, TuningSpec(0.75), BlockGrid(60, 48, 8))
        assert eta[5, 1:] == pytest.approx(np.full(3, bp[1, 2]), rel=1e-15)
        assert bp[0, 0] != bp[0, 1]

    def test_lagged_wraps_previous_day(self):
        grid = BlockGrid(10, 8, 8)
        bp = np.arange(1.0, 17.0).reshape(2, 8)
        u, eta, bad = select_exponents(bp, TuningSpec(0.75, LaggedBlocks(3, 4)), grid)
        # day 1, pair 1 uses global blocks 8 + 2 - {3, 4} = 7, 6 (1-based) of day 0
        assert eta[1, 0] == pytest.approx(0.5 * (bp[0, 6] + bp[0, 5]))
        assert eta[1, 3] == pytest.approx(0.5 * (bp[1, 4] + bp[1, 3]))
        assert bad[0].all() and not bad[1].any()

    def test_lagged_before_data(self):
        grid = BlockGrid(10, 8, 4)
        bp = np.ones((3, 4))
        u, eta, bad = select_exponents(bp, TuningSpec(0.75, LaggedBlocks(3, 9)), grid)
        assert bad[:2].all()

    def test_lagged_measurability(self):
        path = gaussian_panel(3, 400, seed=4)
        tuning = TuningSpec(0.75, LaggedBlocks(3, 5))
        grid = build_block_grid(path, 40, 32)
        base = spot_vol_panel(path, grid, tuning)
        R = path.returns().copy()
        d, p = 2, 3
        R[d, (2 * p - 2) * 40:] *= 5.0  # from block 2p-1 onwards
        prices = np.concatenate([np.zeros((3, 1)), np.cumsum(R, axis=1)], axis=1)
        bumped = spot_vol_panel(PricePath.from_array(prices), grid, tuning)
        assert bumped.u_used[d, p - 1] == base.u_used[d, p - 1]
        assert bumped.u_used[d, p] != base.u_used[d, p]


class TestDiffPanel:
    def test_identical_days(self):
        day = np.concatenate([[0.0], np.cumsum(
            math.sqrt(0.02 * DELTA_5S) * rng_stream(5).standard_normal(480))])
        path = PricePath.from_array(np.tile(day, (8, 1)))
        diff = compute_diff_panel(path, build_block_grid(path, 60, 48), TuningSpec(0.75))
        assert np.all(diff.values == 0.0) and diff.valid.all()
        with pytest.raises(DegenerateStatisticError):
            test_statistic(diff)

    def test_separable_panel(self, monkeypatch):
        grid = BlockGrid(60, 48, 10)
        D = 9
        f = rng_stream(6).standard_normal(10)
        g = rng_stream(7).standard_normal(D)
        fc = f[None, :] + g[:, None]
        fake = rt.SpotVolPanel(grid, fc, np.ones((D, 5)), np.ones((D, 5)), np.zeros((D, 10), bool),
                               TuningSpec(), 5)
        monkeypatch.setattr(rt, "spot_vol_panel", lambda *a, **k: fake)
        diff = rt.compute_diff_panel(gaussian_panel(D, 600), grid, TuningSpec())
        assert np.allclose(diff.values, 0.0, atol=1e-13)

    def test_product_day_layout(self):
        assert list(product_days(7, 5)) == [6]
        assert list(product_days(14, 5)) == [6, 8, 10, 12]
        assert list(product_days(14, 5, last_day_only=True)) == []
        assert list(product_days(13, 5, last_day_only=True)) == [12]

    def test_insufficient_days(self):
        path = gaussian_panel(6, 480)
        with pytest.raises(PipelineError):
            compute_diff_panel(path, build_block_grid(path, 60, 48), TuningSpec())

    def test_heston_centred(self):
        sc = design_scenario("V3-J1", seed=12)
        path = simulate_panel(sc, 28).prices
        diff = compute_diff_panel(path, build_block_grid(path, 60, 48), TuningSpec(0.75))
        v = diff.values[diff.valid]
        assert abs(v.mean() / (v.std(ddof=1) / math.sqrt(v.size))) < 2.58


class TestStatistic:
    def test_single_summand(self):
        assert statistic_from_summands([3.7]).statistic == 1.0
        assert statistic_from_summands([-0.2]).statistic == -1.0

    def test_alternating(self):
        P = 8
        row = np.array([(-1.0) ** (p + 1) for p in range(1, P + 1)])
        diff = synthetic_diff(np.tile(row, (5, 1)))
        rep = test_statistic(diff)
        assert rep.n_summands == 5 * (P - 1)
        assert rep.statistic == pytest.approx(-math.sqrt(rep.n_summands), rel=1e-15)
        assert rep.reject_at[0.05]

    def test_null_distribution(self):
        rng = rng_stream(13)
        T = [test_statistic(synthetic_diff(rng.standard_normal((270, 38))), (0.05,), 1).statistic
             for _ in range(500)]
        assert stats.kstest(T, "norm").pvalue > 0.01

    def test_decision_rule(self):
        rep = statistic_from_summands([-1.0, -1.0, -1.0, -1.0, 0.5], alphas=(0.01, 0.05, 0.10))
        assert rep.statistic == pytest.approx(-3.5 / math.sqrt(4.25))
        assert rep.p_value == pytest.approx(stats.norm.cdf(rep.statistic), rel=1e-12)
        assert rep.reject_at == {0.01: False, 0.05: True, 0.10: True}

    def test_positive_never_rejects(self):
        rep = statistic_from_summands(np.ones(100))
        assert rep.statistic == 10.0 and not any(rep.reject_at.values())

    def test_degenerate(self):
        with pytest.raises(DegenerateStatisticError):
            statistic_from_summands([])
        with pytest.raises(DegenerateStatisticError):
            statistic_from_summands([0.0, 0.0])

    def test_dropped_counts(self):
        values = np.ones((2, 4))
        valid = np.ones((2, 4), bool)
        valid[0, 1] = False
        prod, dropped = summands(synthetic_diff(values, valid))
        assert dropped == 2 and prod.size == 4

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, (3, 6), elements=st.floats(-1e3, 1e3, allow_subnormal=False)))
    def test_cauchy_schwarz(self, v):
        try:
            rep = test_statistic(synthetic_diff(v), (0.05,), 2)
        except DegenerateStatisticError:
            return
        assert abs(rep.statistic) <= math.sqrt(rep.n_summands) * (1 + 1e-12)

    def test_lag_autocovariances(self):
        v = rng_stream(14).standard_normal((4, 10))
        acov = lag_autocovariances(synthetic_diff(v), 12)
        assert acov[0] == pytest.approx(np.mean(v * v))
        assert acov[3] == pytest.approx(np.mean(v[:, 3:] * v[:, :-3]))
        assert math.isnan(acov[11])


class TestPipeline:
    @pytest.fixture(scope="class")
    @staticmethod
    def path():
        return simulate_panel(design_scenario("V2-J2", seed=21, grid=GridSpec(steps_per_day=1200, drop_first=0)),
                              9).prices

    def test_determinism(self, path):
        tuning = TuningSpec(0.75)
        assert run_test(path, 60, 48, tuning) == run_test(path, 60, 48, tuning)

    def test_shift_invariance(self, path):
        tuning = TuningSpec(0.5)
        a = run_test(path, 60, 48, tuning)
        b = run_test(path.shifted(0.0), 60, 48, tuning)
        assert a == b
        # exact cancellation needs a constant whose addition is exact in binary
        shifted = PricePath.from_array(path.as_array() + 2.0 ** 10, path.delta_n)
        c = run_test(shifted, 60, 48, tuning)
        assert abs(c.statistic - a.statistic) < 1e-6

    def test_locality(self, path):
        tuning = TuningSpec(0.75)
        grid = build_block_grid(path, 60, 48)

        def rebuild(R):
            prices = np.concatenate([np.zeros((R.shape[0], 1)), np.cumsum(R, axis=1)], axis=1)
            return compute_diff_panel(PricePath.from_array(prices, path.delta_n), grid, tuning)

        R = path.returns().copy()
        base = rebuild(R)
        d = int(base.days[-1])
        p = 4  # summand pairs blocks 7-8 with 5-6 (1-based)
        R[d, 10 * 60:] *= 3.0  # blocks 11 onwards of day d
        R[:d - 6] *= 0.5  # days outside the look-back window
        bumped = rebuild(R)
        i = list(base.days).index(d)
        for q in (p - 1, p - 2):
            assert bumped.values[i, q] == base.values[i, q]
        assert bumped.values[i, 6] != base.values[i, 6]

    def test_stage_errors(self, path):
        with pytest.raises(PipelineError) as err:
            run_test(path, 400, 48)
        assert err.value.stage == "build_block_grid"

    def test_report_json(self, path):
        import json
        rep = run_test(path, 60, 48, TuningSpec(0.75), alphas=(0.05,))
        d = json.loads(rep.to_json())
        assert d["statistic"] == rep.statistic and d["n_summands"] == rep.n_summands


@pytest.mark.parametrize("case", range(20))
def test_matches_naive_reference(case):
    rng = rng_stream(99, case)
    p, k, B, D = 10, 8, 8, 4
    c_day = rng.uniform(0.01, 0.05, size=(D, 1))
    c_blk = rng.uniform(0.5, 2.0, size=(1, B * p))
    r = np.sqrt(c_day * c_blk * DELTA_5S) * rng.standard_normal((D, B * p))
    prices = np.concatenate([np.zeros((D, 1)), np.cumsum(r, axis=1)], axis=1)
    path = PricePath.from_array(prices)
    frak_L = float(rng.choice([0.95, 0.75, 0.5]))
    if case % 2:
        scheme, ref_scheme = SameTimeOfDay(2), ("timeofday", 2)
    else:
        scheme, ref_scheme = LaggedBlocks(3, 4), ("lagged", 3, 4)
    tuning = TuningSpec(frak_L, scheme)
    rep = run_test(path, p, k, tuning)
    ref, n = naive_statistic(path.returns().tolist(), DELTA_5S, p, k, tuning.theta, ref_scheme)
    assert rep.n_summands == n
    assert rep.statistic == pytest.approx(ref, rel=1e-12, abs=1e-12)
