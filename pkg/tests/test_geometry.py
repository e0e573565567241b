import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from czo.curves import get_curve
from czo.errors import CurveValidityError, RegistryError, RejectedInputError
from czo.geometry import (Box, DyadicCube, box, branch_eval, branch_inverse,
                          branch_jacobian, dyadic_relation,
                          nearest_domain_point, nearest_range_point, region,
                          validate_curve, whole_space)


class TestBox:
    def test_measure_and_side(self):
        b = Box((0.0, -1.0), (2.0, 1.0))
        assert b.measure() == 4.0
        assert b.side() == 2.0

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            Box((1.0,), (0.0,))
        with pytest.raises(ValueError):
            Box((math.nan,), (0.0,))

    def test_distance_euclidean(self):
        b = box((0.0, 0.0), (1.0, 1.0))
        d = b.distance(np.array([[2.0, 2.0]]))
        assert d[0] == pytest.approx(math.sqrt(2.0))
        assert b.distance(np.array([[0.5, 0.5]]))[0] == 0.0

    def test_intersection(self):
        a = box(0.0, 2.0)
        b = box(1.0, 3.0)
        assert a.intersection(b) == box(1.0, 2.0)
        assert a.intersection(box(5.0, 6.0)) is None

    def test_unbounded_clip(self):
        w = whole_space(1).boxes[0]
        assert not w.is_bounded
        assert w.clipped(8.0) == box(-8.0, 8.0)


class TestRegion:
    def test_clamp_nearest(self):
        r = region(box(1.0, 2.0), box(-2.0, -1.0))
        out = r.clamp(np.array([[0.4], [-3.0], [1.5]]))
        assert out[0, 0] == 1.0
        assert out[1, 0] == -2.0
        assert out[2, 0] == 1.5

    def test_clamp_tie_lexicographic(self):
        r = region(box(1.0, 2.0), box(-2.0, -1.0))
        assert r.clamp(np.array([[0.0]]))[0, 0] == -1.0

    def test_box_distance(self):
        r = region(box(1.0, 2.0))
        assert r.box_distance(box(4.0, 5.0)) == 2.0
        assert r.box_distance(box(0.0, 1.5)) == 0.0

    @given(st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=50, deadline=None)
    def test_clamp_is_nearest_point(self, x, probe):
        r = region(box(1.0, 2.0), box(-2.0, -1.0))
        X = np.array([[x]])
        c = r.clamp(X)
        d = np.abs(c[0, 0] - x)
        # No point of the region is closer than the clamp.
        p = min(max(probe, 1.0), 2.0)
        assert d <= abs(p - x) + 1e-12
        q = min(max(probe, -2.0), -1.0)
        assert d <= abs(q - x) + 1e-12


class TestDyadicCube:
    def test_box_and_children(self):
        c = DyadicCube(1, (1,))
        assert c.as_box() == box(0.5, 1.0)
        kids = c.children()
        assert [k.as_box() for k in kids] == [box(0.5, 0.75), box(0.75, 1.0)]

    def test_relation_cases(self):
        a = DyadicCube(0, (0,))
        assert dyadic_relation(a, a) == "equal"
        assert dyadic_relation(a, DyadicCube(2, (3,))) == "nested"
        assert dyadic_relation(a, DyadicCube(2, (4,))) == "disjoint"
        assert dyadic_relation(DyadicCube(3, (5,)), a) == "nested"

    @given(st.integers(0, 4), st.integers(-8, 8),
           st.integers(0, 4), st.integers(-8, 8))
    @settings(max_examples=200, deadline=None)
    def test_relation_matches_interval_overlap(self, la, ca, lb, cb):
        a, b = DyadicCube(la, (ca,)), DyadicCube(lb, (cb,))
        rel = dyadic_relation(a, b)
        ab, bb = a.as_box(), b.as_box()
        lo = max(ab.lo[0], bb.lo[0])
        hi = min(ab.hi[0], bb.hi[0])
        overlap = hi - lo
        if rel == "disjoint":
            assert overlap <= 1e-12
        else:
            assert overlap >= min(ab.side(), bb.side()) - 1e-12


class TestCurveOps:
    def test_branch_eval_and_inverse(self):
        c = get_curve("two-lines")
        assert branch_eval(c, 1, 2.0)[0] == -2.0
        assert branch_inverse(c, 1, -2.0)[0] == 2.0
        assert branch_jacobian(c, 1, 1.0) == -1.0

    def test_domain_rejection(self):
        c = get_curve("diamond")
        with pytest.raises(RejectedInputError):
            branch_eval(c, 0, 2.0)       # slant domain is [-1, 1]
        with pytest.raises(RejectedInputError):
            branch_inverse(c, 0, 2.0)    # range is [0, 1]

    def test_flat_branch_has_no_pointwise_inverse(self):
        c = get_curve("diamond")
        with pytest.raises(CurveValidityError):
            c.branch(2).inv(0.0)

    def test_nearest_points(self):
        c = get_curve("diamond")
        assert nearest_domain_point(c, 0, 3.0)[0] == 1.0
        assert nearest_range_point(c, 0, 2.0)[0] == 1.0
        assert nearest_range_point(c, 1, 2.0)[0] == 0.0

    def test_bad_branch_index(self):
        c = get_curve("diagonal")
        with pytest.raises(RejectedInputError):
            c.branch(5)

    def test_registry_miss(self):
        with pytest.raises(RegistryError):
            get_curve("bogus")


class TestValidation:
    @pytest.mark.parametrize("name", ["diagonal", "two-lines", "diamond"])
    def test_builtins_validate(self, name):
        rep = validate_curve(get_curve(name), sample_count=400, seed=0)
        assert rep.passed
        assert rep.max_lipschitz_ratio <= rep.c_gamma * (1 + 1e-6)

    def test_diagonal_dim2_validates(self):
        rep = validate_curve(get_curve("diagonal", dim=2), sample_count=200)
        assert rep.passed

    def test_bad_lipschitz_declaration_fails(self):
        from czo.geometry import CurveBranch, HyperCurve
        br = CurveBranch(index=0, domain=region(box(-4.0, 4.0)),
                         forward=lambda X: 3.0 * X,
                         inverse=lambda Y: Y / 3.0,
                         jacobian=lambda X: np.full(len(X), 3.0),
                         lipschitz=1.5)
        rep = validate_curve(HyperCurve("steep", [br]), sample_count=200)
        assert not rep.passed
        assert rep.branches[0].forward_ratio > 1.5
