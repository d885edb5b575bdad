import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swexp.errors import BracketFailure, DegenerateRow, Infeasible, NotConverged
from swexp.grid_oracle import GridSpec, grid_e_ex, grid_e_rb, grid_v_ex, grid_v_rb
from swexp.probability import (
    CondPmf,
    Pmf,
    Source,
    bhattacharyya_avg,
    bhattacharyya_matrix,
    entropy,
    kl_divergence,
    mutual_information,
)
from swexp.solvers import (
    SolverConfig,
    bisect_monotone,
    e_ex,
    e_rb,
    map_bhatt,
    map_geometric,
    map_h,
    map_lumping,
    v_ex,
    v_rb,
    _avg_div,
)

from conftest import random_source

CFG = SolverConfig()


class TestMapGeometric:
    def test_alpha_one_recovers_channel(self, ref_source):
        w = ref_source.pygx.rows
        qy = np.array([0.2, 0.15, 0.65])
        assert np.allclose(map_geometric(w, qy, 1.0), w, atol=1e-14)

    def test_alpha_zero_recovers_reference(self, ref_source):
        w = ref_source.pygx.rows
        qy = np.array([0.2, 0.15, 0.65])
        out = map_geometric(w, qy, 0.0)
        assert np.allclose(out, np.broadcast_to(qy, w.shape), atol=1e-14)

    def test_half_exponent_value(self, ref_source):
        out = map_geometric(ref_source.pygx.rows, np.array([0.2, 0.15, 0.65]), 0.5)
        expected = np.array([
            [0.54773694255822302, 0.20540135345933363, 0.24686170398244335],
            [0.10297491914596675, 0.15446237871895012, 0.74256270213508314],
        ])
        assert np.allclose(out, expected, atol=1e-14)

    def test_degenerate_row(self):
        w = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateRow):
            map_geometric(w, np.array([0.0, 1.0]), 0.5)

    def test_divergence_decreasing_in_alpha(self, ref_source):
        w = ref_source.pygx.rows
        qx = np.array([0.3, 0.7])
        qy = qx @ w
        alphas = np.linspace(0.0, 1.0, 21)
        vals = [_avg_div(map_geometric(w, qy, a), w, qx) for a in alphas]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(0.0, abs=1e-14)


class TestMapBhatt:
    def test_zero_tilt_identity(self, ref_source):
        q = np.array([[0.4, 0.6], [0.3, 0.7]])
        assert np.allclose(map_bhatt(q, ref_source.pygx, 0.0), q, atol=1e-14)

    def test_strong_tilt_concentrates_on_diagonal(self, ref_source):
        q = np.full((2, 2), 0.5)
        out = map_bhatt(q, ref_source.pygx, 500.0)
        assert out[0, 0] > 1 - 1e-10 and out[1, 1] > 1 - 1e-10

    def test_unit_tilt_value(self, ref_source):
        out = map_bhatt(np.full((2, 2), 0.5), ref_source.pygx, 1.0)
        expected = np.array([[0.64516129032258065, 0.35483870967741935],
                             [0.35483870967741935, 0.64516129032258065]])
        assert np.allclose(out, expected, atol=1e-12)


class TestMapLumping:
    def test_fixed_point(self):
        joint = np.array([[0.12, 0.18], [0.18, 0.52]])
        target = joint.sum(axis=0)
        assert np.allclose(map_lumping(joint, target), joint, atol=1e-14)

    def test_product_rescale(self):
        p = np.array([0.4, 0.6])
        r = np.array([0.5, 0.5])
        target = np.array([0.3, 0.7])
        out = map_lumping(np.outer(p, r), target)
        assert np.allclose(out, np.outer(p, target), atol=1e-14)

    def test_reference_matrix(self):
        out = map_lumping(np.array([[0.1, 0.2], [0.3, 0.4]]), np.array([0.3, 0.7]))
        expected = np.array([[0.075, 0.23333333333333333], [0.225, 0.46666666666666667]])
        assert np.allclose(out, expected, atol=1e-14)

    @given(j=st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4),
           t=st.floats(0.05, 0.95))
    @settings(max_examples=100, deadline=None)
    def test_marginal_exact(self, j, t):
        joint = np.array(j).reshape(2, 2)
        joint /= joint.sum()
        target = np.array([t, 1.0 - t])
        out = map_lumping(joint, target)
        assert np.allclose(out.sum(axis=0), target, atol=1e-12)


class TestMapH:
    def test_zero_penalties_zero_t_recover_prior(self):
        px = np.array([0.2, 0.8])
        z = np.zeros(2)
        assert np.allclose(map_h(px, z, z, 0.0, 0.0), px, atol=1e-14)

    def test_zero_penalties_unit_t_halves_exponent(self):
        # prior exponent (1+lam)/(1+lam+t) = 1/2, and sqrt(0.8)/sqrt(0.2) = 2
        px = np.array([0.2, 0.8])
        z = np.zeros(2)
        out = map_h(px, z, z, 0.0, 1.0)
        assert np.allclose(out, [1.0 / 3.0, 2.0 / 3.0], atol=1e-14)

    def test_large_multiplier_pins_prior(self):
        px = np.array([0.2, 0.8])
        out = map_h(px, np.array([2.0, 0.0]), np.array([0.0, 1.0]), 1e9, 0.0)
        assert np.allclose(out, px, atol=1e-7)

    def test_reference_value(self):
        out = map_h(np.array([0.2, 0.8]), np.array([1.0, 0.0]), np.zeros(2), 0.0, 1.0)
        expected = np.array([0.23269653761889861, 0.76730346238110139])
        assert np.allclose(out, expected, atol=1e-13)


class TestBisect:
    def test_linear(self):
        assert bisect_monotone(lambda x: x, 0.5, (0.0, 1.0), CFG) == pytest.approx(0.5, abs=1e-11)

    def test_exponential(self):
        got = bisect_monotone(lambda x: math.exp(-x), 0.5, (0.0, 10.0), CFG)
        assert got == pytest.approx(math.log(2), abs=1e-10)

    def test_bracket_failure(self):
        with pytest.raises(BracketFailure):
            bisect_monotone(lambda x: x, 5.0, (0.0, 1.0), CFG)

    def test_expansion_both(self):
        got = bisect_monotone(lambda x: -x, 7.5, (-1.0, 1.0), CFG, expand="both")
        assert got == pytest.approx(-7.5, abs=1e-10)

    def test_geometric_divergence_root_matches_grid_scan(self, ref_source):
        w = ref_source.pygx.rows
        qx = np.array([0.25, 0.75])
        qy = qx @ w
        target = 0.02

        def f(a):
            return _avg_div(map_geometric(w, qy, a), w, qx)

        root = bisect_monotone(f, target, (0.5, 1.0), CFG)
        grid = np.linspace(0.5, 1.0, 20001)
        vals = np.array([f(a) for a in grid])
        crossing = grid[np.argmin(np.abs(vals - target))]
        assert root == pytest.approx(crossing, abs=1e-4)


class TestVrb:
    def test_independent_rows_zero(self):
        src = Source(Pmf(np.array([0.5, 0.5])),
                     CondPmf(np.array([[0.3, 0.7], [0.3, 0.7]])))
        res = v_rb(src, np.array([0.4, 0.6]), 1.0, 1.0, CFG)
        assert res.value == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(res.minimizer, [[0.3, 0.7], [0.3, 0.7]], atol=1e-6)

    def test_unconstrained_sphere_packing_mode_zero(self, ref_source):
        res = v_rb(ref_source, np.array([0.25, 0.75]), math.inf, 0.0, CFG)
        assert res.value == pytest.approx(0.0, abs=1e-12)

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_eta_zero_unbounded_budget_always_zero(self, seed):
        rng = np.random.default_rng(seed)
        src = random_source(rng, y_size=3)
        qx = np.array([rng.uniform(0.1, 0.9)])
        qx = np.array([qx[0], 1 - qx[0]])
        res = v_rb(src, qx, math.inf, 0.0, CFG)
        assert res.value == pytest.approx(0.0, abs=1e-10)

    def test_infeasible_budget(self, ref_source):
        with pytest.raises(Infeasible):
            v_rb(ref_source, np.array([0.5, 0.5]), 0.01, 1.0, CFG)

    def test_pinned_budget(self, ref_source):
        qx = np.array([0.25, 0.75])
        d0 = kl_divergence(qx, ref_source.px.probs)
        res = v_rb(ref_source, qx, d0, 1.0, CFG)
        assert res.value == pytest.approx(mutual_information(qx, ref_source.pygx), abs=1e-12)

    def test_objective_nonincreasing_over_iterations(self, ref_source):
        qx = np.array([0.25, 0.75])
        values = []
        for k in range(1, 8):
            cfg = SolverConfig(obj_tol=1e-300, max_outer_iters=k)
            try:
                v_rb(ref_source, qx, 0.05, 1.0, cfg)
            except NotConverged as exc:
                values.append(exc.result.value)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_reference_point_vs_oracle(self, ref_source):
        qx = np.array([0.25, 0.75])
        res = v_rb(ref_source, qx, 0.05, 1.0, CFG)
        grid = grid_v_rb(ref_source, qx, 0.05, 1.0,
                         GridSpec(resolution=150, max_points=2 * 10**8))
        assert res.value <= grid + 1e-4
        assert grid - res.value <= 8.0 / 150

    def test_degenerate_type_row_masked(self, ref_source):
        res = v_rb(ref_source, np.array([0.0, 1.0]), 0.5, 1.0, CFG)
        assert res.value >= -1e-12
        assert res.converged


class TestVex:
    def test_target_at_product_coupling_gives_zero(self, ref_source):
        qx = np.array([0.25, 0.75])
        d = bhattacharyya_matrix(ref_source.pygx)
        ee = kl_divergence(qx, ref_source.px.probs) + bhattacharyya_avg(np.outer(qx, qx), d)
        res = v_ex(ref_source, qx, ee, CFG)
        assert res.value == pytest.approx(0.0, abs=1e-9)

    def test_zero_distance_budget_forces_diagonal(self, ref_source):
        qx = np.array([0.25, 0.75])
        d0 = kl_divergence(qx, ref_source.px.probs)
        res = v_ex(ref_source, qx, d0, CFG)
        assert res.value == pytest.approx(entropy(qx), abs=1e-6)

    def test_reference_point_exact(self, ref_source):
        # binary couplings with equal marginals form a one-parameter family,
        # so the constrained minimum has a closed form
        qx = np.array([0.25, 0.75])
        d01 = bhattacharyya_matrix(ref_source.pygx)[0, 1]
        bstar = 0.2 - kl_divergence(qx, ref_source.px.probs)
        a = qx[0] - bstar / (2 * d01)
        joint = np.array([[a, qx[0] - a], [qx[0] - a, qx[1] - (qx[0] - a)]])
        expected = float(np.sum(joint * np.log(joint / np.outer(qx, qx))))
        res = v_ex(ref_source, qx, 0.2, CFG)
        assert res.value == pytest.approx(expected, abs=1e-10)

    def test_reference_point_vs_oracle(self, ref_source):
        qx = np.array([0.25, 0.75])
        res = v_ex(ref_source, qx, 0.2, CFG)
        grid = grid_v_ex(ref_source, qx, 0.2, GridSpec(resolution=20000))
        assert abs(res.value - grid) <= 1e-4 + 2.0 / 20000

    def test_infeasible_target(self, ref_source):
        with pytest.raises(Infeasible):
            v_ex(ref_source, np.array([0.25, 0.75]), 5.0, CFG)


class TestErb:
    def test_zero_tilt_is_zero(self, ref_source):
        assert e_rb(ref_source, 0.39, 0.0, 0.0, CFG).value == pytest.approx(0.0, abs=1e-12)
        assert e_rb(ref_source, 0.39, 0.5, 0.0, CFG).value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.slow
    def test_reference_point_vs_oracle(self, ref_source):
        res = e_rb(ref_source, 0.39, 0.002, 0.5, CFG)
        grid = grid_e_rb(ref_source, 0.39, 0.002, 0.5,
                         GridSpec(resolution=120, max_points=10**10))
        assert abs(res.value - grid) <= 1e-3

    def test_concave_in_t(self, ref_source):
        rng = np.random.default_rng(3)
        for _ in range(20):
            t1 = rng.uniform(0.0, 2.0)
            t3 = t1 + rng.uniform(0.1, 2.0)
            t2 = 0.5 * (t1 + t3)
            vals = [e_rb(ref_source, 0.39, 0.01, t, CFG).value for t in (t1, t2, t3)]
            assert vals[1] >= 0.5 * (vals[0] + vals[2]) - 1e-9

    def test_nonincreasing_in_er(self, ref_source):
        ers = np.linspace(0.0, 0.05, 10)
        vals = [e_rb(ref_source, 0.39, er, 0.7, CFG).value for er in ers]
        assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))


class TestEex:
    def test_independent_rows_value(self):
        src = Source(Pmf(np.array([0.3, 0.7])),
                     CondPmf(np.array([[0.4, 0.6], [0.4, 0.6]])))
        res = e_ex(src, 0.0, 0.0, 1.0, CFG)
        assert res.value == pytest.approx(-entropy(src.px), abs=5e-6)

    def test_near_degenerate_prior(self):
        src = Source(Pmf(np.array([1e-9, 1.0 - 1e-9])),
                     CondPmf(np.array([[0.8, 0.2], [0.1, 0.9]])))
        res = e_ex(src, 0.3, 0.0, 1.5, CFG)
        assert res.value == pytest.approx(1.5 * 0.3, abs=1e-6)

    def test_reference_point_vs_oracle(self, ref_source):
        res = e_ex(ref_source, 0.39, 0.002, 1.5, CFG)
        grid = grid_e_ex(ref_source, 0.39, 0.002, 1.5, GridSpec(resolution=2000))
        assert abs(res.value - grid) <= 1e-3

    def test_concave_in_t(self, ref_source):
        vals = [e_ex(ref_source, 0.39, 0.01, t, CFG).value for t in (1.0, 2.0, 3.0)]
        assert vals[1] >= 0.5 * (vals[0] + vals[2]) - 1e-7

    def test_rejects_small_t(self, ref_source):
        with pytest.raises(ValueError):
            e_ex(ref_source, 0.39, 0.01, 0.5, CFG)


class TestOracleEquivalenceQuick:
    """Fast 2x2 spot checks; the full randomized sweep runs in acceptance."""

    def test_v_rb_random_2x2(self):
        rng = np.random.default_rng(42)
        for _ in range(3):
            src = random_source(rng, y_size=2)
            q0 = rng.uniform(0.2, 0.8)
            qx = np.array([q0, 1 - q0])
            d0 = kl_divergence(qx, src.px.probs)
            ee = d0 + rng.uniform(0.005, 0.05)
            res = v_rb(src, qx, ee, 1.0, CFG)
            grid = grid_v_rb(src, qx, ee, 1.0, GridSpec(resolution=400))
            assert res.value <= grid + 1e-4
            assert grid - res.value <= 8.0 / 400

    def test_e_rb_random_2x2(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            src = random_source(rng, y_size=2)
            r = rng.uniform(0.1, 0.5)
            er = rng.uniform(0.001, 0.02)
            t = rng.uniform(0.1, 1.0)
            res = e_rb(src, r, er, t, CFG)
            grid = grid_e_rb(src, r, er, t, GridSpec(resolution=400, max_points=10**9))
            assert abs(res.value - grid) <= 1e-3
