import math

import numpy as np
import pytest

from czo.curves import get_curve
from czo.errors import RejectedInputError
from czo.geometry import box
from czo.metric import (check_equivalence, check_qtheta, closed_form_rho,
                        closed_form_rho_branch, enlarged_cube, rho,
                        rho_branch_values, rho_tilde, rho_tilde_star,
                        rho_tilde_star_branch_values, rho_tilde_values,
                        rho_values)

SQ2 = math.sqrt(2.0)


class TestSolverAgainstClosedForms:
    @pytest.mark.parametrize("name", ["diagonal", "two-lines", "diamond"])
    def test_solver_matches_closed_form(self, name):
        curve = get_curve(name)
        rng = np.random.default_rng(11)
        X = rng.uniform(-8, 8, size=(500, 1))
        Y = rng.uniform(-8, 8, size=(500, 1))
        got, _ = rho_values(curve, X, Y)
        want = closed_form_rho(curve, X, Y)
        assert np.max(np.abs(got - want) / np.maximum(want, 1e-12)) < 1e-9

    def test_far_queries_trigger_extent_growth(self):
        curve = get_curve("diagonal")
        X = np.array([[500.0]])
        Y = np.array([[300.0]])
        got = rho_branch_values(curve, 0, X, Y)
        assert got[0] == pytest.approx(200.0 / SQ2, rel=1e-12)

    def test_point_on_curve_gives_zero(self):
        curve = get_curve("two-lines")
        v, b = rho_values(curve, [[3.0]], [[-3.0]])
        assert v[0] < 1e-12
        assert b[0] == 1


class TestWorkedValues:
    def test_diamond_center(self):
        # Distance from (0,0) to the nearest slanted edge.
        assert rho(get_curve("diamond"), 0.0, 0.0).value == \
            pytest.approx(1.0 / SQ2, rel=1e-12)

    def test_diamond_tilde_star_above_apex(self):
        # y=2 clamps to the top of the upper range; preimage nearest 0 is 1.
        mv = rho_tilde_star(get_curve("diamond"), 0.0, 2.0)
        assert mv.value == pytest.approx(1.0, rel=1e-12)

    def test_two_lines_branch_values(self):
        curve = get_curve("two-lines")
        assert closed_form_rho_branch(curve, 0, [[1.0]], [[3.0]])[0] == \
            pytest.approx(2.0 / SQ2)
        assert closed_form_rho_branch(curve, 1, [[1.0]], [[3.0]])[0] == \
            pytest.approx(4.0 / SQ2)

    def test_tilde_on_diagonal(self):
        # xi = x, so rho~ = |y - x|; exactly sqrt(2) times rho.
        mv = rho_tilde(get_curve("diagonal"), 1.0, 4.0)
        assert mv.value == pytest.approx(3.0)


class TestEquivalence:
    @pytest.mark.parametrize("name", ["diagonal", "two-lines", "diamond"])
    def test_surrogates_equivalent(self, name):
        rep = check_equivalence(get_curve(name), 2000, seed=5)
        assert rep.passed, rep.witness
        assert rep.max_ratio_tilde <= rep.bound
        assert rep.max_ratio_star <= rep.bound

    def test_lower_bound_is_tight_on_lines(self):
        # For the straight-line curves rho~ = sqrt(2) rho at interior points.
        rep = check_equivalence(get_curve("two-lines"), 2000, seed=5)
        assert rep.max_ratio_tilde == pytest.approx(SQ2, rel=1e-6)

    def test_rejects_empty_sample(self):
        with pytest.raises(RejectedInputError):
            check_equivalence(get_curve("diagonal"), 0, seed=0)

    def test_star_upper_bounds_rho(self):
        curve = get_curve("diamond")
        rng = np.random.default_rng(3)
        X = rng.uniform(-4, 4, size=(300, 1))
        Y = rng.uniform(-4, 4, size=(300, 1))
        for i in range(curve.r):
            ri = rho_branch_values(curve, i, X, Y)
            rs = rho_tilde_star_branch_values(curve, i, X, Y)
            assert np.all(ri <= rs * (1 + 1e-9) + 1e-12)


class TestEnlargedCube:
    def test_two_lines_exact_measure(self):
        # Q=[2,3], theta=8: preimages [2,3] and [-3,-2], each dilated by 8,
        # merge into [-11, 11] of measure 22.
        ec = enlarged_cube(get_curve("two-lines"), box(2.0, 3.0), 8.0)
        assert ec.exact
        X = np.linspace(-15, 15, 3001).reshape(-1, 1)
        inside = ec.contains(X)
        measure = np.count_nonzero(inside) * (30.0 / 3000)
        assert measure == pytest.approx(22.0, abs=0.05)
        assert ec.contains([[10.9]])[0] and not ec.contains([[11.2]])[0]

    def test_diagonal_measure(self):
        # Q=[0,1], theta=10: [0,1] dilated by 10 -> [-10, 11], measure 21.
        ec = enlarged_cube(get_curve("diagonal"), box(0.0, 1.0), 10.0)
        assert ec.contains([[-9.9]])[0] and not ec.contains([[11.1]])[0]

    def test_far_cube_has_empty_pieces(self):
        # The diamond ranges live in [-1,1]; a far cube activates nothing.
        ec = enlarged_cube(get_curve("diamond"), box(20.0, 20.5), 9.0)
        assert all(p.empty for p in ec.pieces)
        assert not np.any(ec.contains([[0.0], [20.25]]))

    def test_theta_must_exceed_one(self):
        with pytest.raises(RejectedInputError):
            enlarged_cube(get_curve("diagonal"), box(0.0, 1.0), 0.5)

    def test_sampled_path_matches_exact_path(self):
        curve = get_curve("two-lines")
        Q = box(2.0, 3.0)
        ec = enlarged_cube(curve, Q, 8.0)
        X = np.linspace(-13, 13, 401).reshape(-1, 1)
        exact = ec.contains(X)
        # Strip the exact structure and force the sampled membership path.
        for p in ec.pieces:
            p.preimage_boxes = None
        sampled = ec.contains(X)
        assert np.array_equal(exact, sampled)


class TestQTheta:
    def test_measure_and_separation(self):
        rep = check_qtheta(get_curve("two-lines"), box(2.0, 3.0), 8.1,
                           probe_count=300, seed=2, mc_samples=100000)
        assert rep.passed, rep.witness
        assert rep.measure_estimate == pytest.approx(22.0, rel=0.02)
        assert rep.min_probe_rho >= rep.separation_bound

    def test_diamond_separation_only(self):
        # The flat branch has no Lipschitz inverse, so only the separation
        # half of the enlargement lemma applies to the diamond.
        rep = check_qtheta(get_curve("diamond"), box(0.25, 0.5), 9.0,
                           probe_count=300, seed=4, check_measure=False)
        assert rep.passed, rep.witness

    def test_theta_hypothesis_enforced(self):
        with pytest.raises(RejectedInputError):
            check_qtheta(get_curve("two-lines"), box(0.0, 1.0), 5.0)
