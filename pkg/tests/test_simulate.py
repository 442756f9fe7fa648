import numpy as np
import pytest

from ppp.geometry import PointPattern, Window, count_r_close_pairs
from ppp.simulate import (
    FieldGrid,
    GrfParams,
    LgcpStraussParams,
    StraussParams,
    papangelou_strauss,
    sample_grf,
    sample_lgcp,
    sample_lgcp_strauss,
    sample_poisson,
    sample_strauss,
    simulate_model,
    snap_scale,
    trace_diagnostics,
)

UNIT = Window.unit_square()


class TestParams:
    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            GrfParams(5.0, -1.0, 0.1)
        with pytest.raises(ValueError):
            GrfParams(5.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            StraussParams(-1.0, 0.5, 0.05)
        with pytest.raises(ValueError):
            StraussParams(100.0, 1.5, 0.05)
        with pytest.raises(ValueError):
            LgcpStraussParams(GrfParams(5, 1, 0.1), 0.5, -0.1)

    def test_hard_core_allowed(self):
        StraussParams(100.0, 0.0, 0.05)


class TestFieldGrid:
    def test_value_at_cell_centers(self):
        vals = np.arange(16, dtype=float).reshape(4, 4)
        f = FieldGrid(UNIT, 4, vals)
        # cell (1, 2) has center (0.375, 0.625)
        assert f.value_at([[0.375, 0.625]])[0] == vals[1, 2]
        # points snap to the containing cell
        assert f.value_at([[0.26, 0.51]])[0] == vals[1, 2]

    def test_cell_area(self):
        f = FieldGrid(Window(0, 2, 0, 4), 4, np.zeros((4, 4)))
        assert f.cell_area() == pytest.approx(0.5 * 1.0)

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            FieldGrid(UNIT, 4, np.zeros((3, 4)))


class TestSnapScale:
    def test_snaps_to_nearest_level(self):
        assert snap_scale(0.026, 0.01, 0.1, 10) == pytest.approx(0.03)
        assert snap_scale(0.0, 0.01, 0.1, 10) == pytest.approx(0.01)
        assert snap_scale(5.0, 0.01, 0.1, 10) == pytest.approx(0.1)


class TestGrf:
    def test_deterministic_given_seed(self):
        p = GrfParams(5.0, 2.0, 0.1)
        f1 = sample_grf(UNIT, 16, p, np.random.default_rng(3))
        f2 = sample_grf(UNIT, 16, p, np.random.default_rng(3))
        np.testing.assert_array_equal(f1.values, f2.values)

    def test_zero_variance_constant_field(self):
        f = sample_grf(UNIT, 8, GrfParams(5.0, 0.0, 0.1), np.random.default_rng(0))
        np.testing.assert_array_equal(f.values, 5.0)

    def test_moments_match(self):
        # pooled mean/var over replicates approximate mu and sigma2
        p = GrfParams(2.0, 1.5, 0.05)
        rng = np.random.default_rng(10)
        vals = np.concatenate(
            [sample_grf(UNIT, 16, p, rng).values.ravel() for _ in range(200)]
        )
        assert vals.mean() == pytest.approx(2.0, abs=0.1)
        assert vals.var() == pytest.approx(1.5, abs=0.15)

    def test_correlation_structure(self):
        # empirical correlation between neighbouring cells approximates
        # exp(-d/s) for the exponential model
        p = GrfParams(0.0, 1.0, 0.2)
        rng = np.random.default_rng(4)
        a, b = [], []
        for _ in range(400):
            f = sample_grf(UNIT, 16, p, rng)
            a.append(f.values[4, 4])
            b.append(f.values[4, 8])  # distance 4/16 = 0.25
        corr = np.corrcoef(a, b)[0, 1]
        assert corr == pytest.approx(np.exp(-0.25 / 0.2), abs=0.08)


class TestPoisson:
    def test_count_distribution(self):
        rng = np.random.default_rng(1)
        ns = [sample_poisson(UNIT, 300.0, rng).n() for _ in range(300)]
        assert np.mean(ns) == pytest.approx(300.0, abs=3.5)
        assert np.var(ns) == pytest.approx(300.0, rel=0.25)

    def test_zero_intensity(self):
        assert sample_poisson(UNIT, 0.0, np.random.default_rng(0)).n() == 0

    def test_points_inside_window(self):
        w = Window(-1, 3, 2, 5)
        p = sample_poisson(w, 50.0, np.random.default_rng(2))
        assert w.contains(p.points).all()


class TestLgcp:
    def test_intensity_identity(self):
        # E[n] = |W| exp(mu + sigma2/2)
        p = GrfParams(5.0, 1.0, 0.05)
        rng = np.random.default_rng(8)
        ns = [sample_lgcp(UNIT, p, 32, rng).n() for _ in range(150)]
        expected = np.exp(5.0 + 0.5)
        assert np.mean(ns) == pytest.approx(expected, rel=0.06)

    def test_overdispersed_relative_to_poisson(self):
        p = GrfParams(5.0, 1.5, 0.08)
        rng = np.random.default_rng(9)
        ns = np.array([sample_lgcp(UNIT, p, 32, rng).n() for _ in range(150)])
        assert ns.var() > 2.0 * ns.mean()

    def test_sigma2_zero_reduces_to_poisson_intensity(self):
        p = GrfParams(np.log(200.0), 0.0, 0.05)
        rng = np.random.default_rng(10)
        ns = [sample_lgcp(UNIT, p, 16, rng).n() for _ in range(200)]
        assert np.mean(ns) == pytest.approx(200.0, rel=0.05)

    def test_deterministic_given_seed(self):
        p = GrfParams(5.0, 1.0, 0.05)
        a = sample_lgcp(UNIT, p, 16, np.random.default_rng(5))
        b = sample_lgcp(UNIT, p, 16, np.random.default_rng(5))
        np.testing.assert_array_equal(a.points, b.points)


class TestPapangelou:
    def test_empty_pattern(self):
        p = StraussParams(100.0, 0.5, 0.05)
        empty = PointPattern(np.zeros((0, 2)), UNIT)
        assert papangelou_strauss([0.5, 0.5], empty, p) == 100.0

    def test_neighbour_count(self):
        p = StraussParams(100.0, 0.5, 0.1)
        x = PointPattern(np.array([[0.5, 0.5], [0.52, 0.5], [0.9, 0.9]]), UNIT)
        # u has two neighbours within 0.1
        assert papangelou_strauss([0.45, 0.5], x, p) == pytest.approx(100.0 * 0.25)

    def test_hard_core_zero(self):
        p = StraussParams(100.0, 0.0, 0.1)
        x = PointPattern(np.array([[0.5, 0.5]]), UNIT)
        assert papangelou_strauss([0.45, 0.5], x, p) == 0.0


class TestStrauss:
    def test_gamma_one_is_poisson(self):
        # gamma = 1: equilibrium is Poisson(beta) on the extended window
        p = StraussParams(300.0, 1.0, 0.05)
        rng = np.random.default_rng(3)
        ns = [sample_strauss(UNIT, p, 20_000, rng).n() for _ in range(60)]
        assert np.mean(ns) == pytest.approx(300.0, rel=0.05)

    def test_inhibition_reduces_count_and_pairs(self):
        rng = np.random.default_rng(4)
        R = 0.05
        reps = 25
        n_poisson = np.mean(
            [sample_strauss(UNIT, StraussParams(400.0, 1.0, R), 30_000, rng).n()
             for _ in range(reps)]
        )
        inhibited = [
            sample_strauss(UNIT, StraussParams(400.0, 0.1, R), 30_000, rng)
            for _ in range(reps)
        ]
        n_strauss = np.mean([q.n() for q in inhibited])
        assert n_strauss < 0.8 * n_poisson
        # and much fewer R-close pairs than a Poisson of the same count
        pair_rate = np.mean(
            [count_r_close_pairs(q, R) / max(q.n(), 1) for q in inhibited]
        )
        poisson_pair_rate = np.pi * R**2 * n_strauss  # expected neighbours/point / 2
        assert pair_rate < poisson_pair_rate

    def test_hard_core_no_close_pairs(self):
        rng = np.random.default_rng(5)
        R = 0.06
        for _ in range(5):
            q = sample_strauss(UNIT, StraussParams(250.0, 0.0, R), 30_000, rng)
            assert count_r_close_pairs(q, R) == 0

    def test_deterministic_given_seed(self):
        p = StraussParams(200.0, 0.3, 0.04)
        a = sample_strauss(UNIT, p, 10_000, np.random.default_rng(6))
        b = sample_strauss(UNIT, p, 10_000, np.random.default_rng(6))
        np.testing.assert_array_equal(a.points, b.points)

    def test_trace_recorded(self):
        p = StraussParams(200.0, 0.5, 0.04)
        q, trace = sample_strauss(
            UNIT, p, 10_000, np.random.default_rng(7), trace_every=500
        )
        assert len(trace) == 20
        assert trace.iterations[0] == 500
        assert trace.iterations[-1] == 10_000
        assert np.all(trace.n_points >= 0)
        assert np.all(trace.r_close_pairs >= 0)

    def test_trace_pair_count_consistent(self):
        # the final traced S_R must match a direct recount on the chain state
        # (the chain lives on the extended window; compare there via a run
        # with R = 0 where clipping cannot remove close pairs structure)
        p = StraussParams(200.0, 1.0, 0.0)
        q, trace = sample_strauss(
            UNIT, p, 4_000, np.random.default_rng(8), trace_every=4_000
        )
        assert trace.n_points[-1] == q.n()  # R=0: no extension, no clipping
        assert trace.r_close_pairs[-1] == 0


class TestLgcpStrauss:
    def test_gamma_one_matches_lgcp_intensity(self):
        grf = GrfParams(5.0, 1.0, 0.05)
        p = LgcpStraussParams(grf, 1.0, 0.02)
        rng = np.random.default_rng(11)
        ns = [sample_lgcp_strauss(UNIT, p, 32, 20_000, rng).n() for _ in range(40)]
        assert np.mean(ns) == pytest.approx(np.exp(5.5), rel=0.12)

    def test_inhibition_thins_clusters(self):
        grf = GrfParams(5.5, 1.0, 0.05)
        rng = np.random.default_rng(12)
        free = np.mean(
            [sample_lgcp_strauss(UNIT, LgcpStraussParams(grf, 1.0, 0.03), 32,
                                 20_000, rng).n() for _ in range(15)]
        )
        inhibited = np.mean(
            [sample_lgcp_strauss(UNIT, LgcpStraussParams(grf, 0.1, 0.03), 32,
                                 20_000, rng).n() for _ in range(15)]
        )
        assert inhibited < 0.75 * free

    def test_deterministic_given_seed(self):
        p = LgcpStraussParams(GrfParams(5.0, 1.0, 0.05), 0.5, 0.03)
        a = sample_lgcp_strauss(UNIT, p, 16, 5_000, np.random.default_rng(13))
        b = sample_lgcp_strauss(UNIT, p, 16, 5_000, np.random.default_rng(13))
        np.testing.assert_array_equal(a.points, b.points)

    def test_points_inside_window(self):
        p = LgcpStraussParams(GrfParams(5.0, 1.0, 0.05), 0.5, 0.03)
        q = sample_lgcp_strauss(UNIT, p, 16, 5_000, np.random.default_rng(14))
        assert UNIT.contains(q.points).all()


class TestDispatch:
    def test_all_models(self):
        rng = np.random.default_rng(0)
        assert simulate_model("poisson", 100.0, UNIT, rng).n() >= 0
        assert simulate_model("lgcp", GrfParams(4.0, 1.0, 0.05), UNIT, rng).n() >= 0
        assert (
            simulate_model(
                "strauss", StraussParams(100, 0.5, 0.03), UNIT, rng, n_iter=2000
            ).n()
            >= 0
        )
        assert (
            simulate_model(
                "lgcp-strauss",
                LgcpStraussParams(GrfParams(4.0, 1.0, 0.05), 0.5, 0.03),
                UNIT,
                rng,
                n_iter=2000,
            ).n()
            >= 0
        )

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            simulate_model("hawkes", None, UNIT, np.random.default_rng(0))


class TestTraceDiagnostics:
    def test_series_shape(self):
        t = trace_diagnostics([(3, 1), (4, 2), (5, 0)], thin=100)
        np.testing.assert_array_equal(t.iterations, [100, 200, 300])
        np.testing.assert_array_equal(t.n_points, [3, 4, 5])
        np.testing.assert_array_equal(t.r_close_pairs, [1, 2, 0])
