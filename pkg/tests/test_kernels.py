import math

import numpy as np
import pytest

from czo.errors import RegistryError, RejectedInputError, SingularityError
from czo.kernels import (KERNEL_NAMES, audit_regularity, audit_size,
                         get_kernel, hormander_constant, kernel_eval)

SQ2 = math.sqrt(2.0)
# Closed-form value of the smoothness integral for the 1/(x-y) kernel with
# the curve-distance truncation rho >= 2|y-z|.
HORMANDER_EXACT = math.log((2 * SQ2 + 1) / (2 * SQ2 - 1))


class TestRegistry:
    def test_names(self):
        assert set(KERNEL_NAMES) == {"hilbert", "two-line-hilbert",
                                     "diamond-model"}

    def test_miss(self):
        with pytest.raises(RegistryError):
            get_kernel("bogus")


class TestEvaluation:
    def test_hilbert_value(self):
        k = get_kernel("hilbert")
        assert kernel_eval(k, 2.0, 1.0)[0] == 1.0

    def test_two_line_value(self):
        k = get_kernel("two-line-hilbert")
        assert kernel_eval(k, 2.0, 1.0)[0] == pytest.approx(1.0 + 1.0 / 3.0)

    def test_singular_evaluation_rejected(self):
        k = get_kernel("hilbert")
        with pytest.raises(SingularityError):
            kernel_eval(k, 1.0, 1.0)
        k2 = get_kernel("two-line-hilbert")
        with pytest.raises(SingularityError):
            kernel_eval(k2, 1.0, -1.0)   # on the second line


class TestSizeAudit:
    def test_hilbert_supremum_is_constant(self):
        rep = audit_size(get_kernel("hilbert"), 5000, seed=0)
        assert rep.supremum == pytest.approx(1.0 / SQ2, abs=1e-4)
        assert rep.passed

    def test_two_line_supremum_attained_near_axis(self):
        rep = audit_size(get_kernel("two-line-hilbert"), 20000, seed=0)
        assert rep.supremum == pytest.approx(SQ2, abs=1e-3)
        assert rep.passed
        # The annealer must have driven y toward the crossing axis.
        assert abs(rep.witness[1][0]) < 0.2

    def test_diamond_supremum(self):
        rep = audit_size(get_kernel("diamond-model"), 5000, seed=0)
        assert rep.supremum == pytest.approx(1.0, abs=1e-6)
        assert rep.passed

    def test_rejects_tiny_sample(self):
        with pytest.raises(RejectedInputError):
            audit_size(get_kernel("hilbert"), 3)


class TestRegularityAudit:
    def test_hilbert_constant_value(self):
        # sup |K(x,y)-K(x,y')| rho^2 / |y-y'| over |y-y'| <= rho/2 equals
        # 1/(2 - 1/sqrt(2)); it exceeds the declared size constant, so the
        # pass flag is down while the estimate itself is sharp.
        rep = audit_regularity(get_kernel("hilbert"), 5000, seed=1)
        assert rep.supremum == pytest.approx(1.0 / (2.0 - 1.0 / SQ2),
                                             rel=1e-3)
        assert not rep.passed

    def test_estimate_stable_under_doubling(self):
        k = get_kernel("hilbert")
        a = audit_regularity(k, 4000, seed=1).supremum
        b = audit_regularity(k, 8000, seed=2).supremum
        assert abs(a - b) / a < 0.05

    def test_both_argument_sides_estimated(self):
        rep = audit_regularity(get_kernel("two-line-hilbert"), 3000, seed=0)
        assert rep.supremum_y > 0 and rep.supremum_x > 0


class TestHormander:
    def test_matches_closed_form(self):
        rep = hormander_constant(get_kernel("hilbert"), z=1.0,
                                 grid_points=1 << 17)
        assert rep.value_total == pytest.approx(HORMANDER_EXACT, rel=2e-3)
        assert rep.tail > 0.0

    def test_scale_invariance(self):
        k = get_kernel("hilbert")
        vals = [hormander_constant(k, z=a, grid_points=1 << 16).value_total
                for a in (0.1, 1.0, 10.0)]
        assert max(vals) / min(vals) - 1.0 < 0.01

    def test_transpose_matches_for_symmetric_metric(self):
        k = get_kernel("hilbert")
        a = hormander_constant(k, z=2.0, grid_points=1 << 14)
        b = hormander_constant(k, z=2.0, grid_points=1 << 14, transpose=True)
        assert a.value_total == pytest.approx(b.value_total, rel=1e-9)

    def test_coincident_points_rejected(self):
        with pytest.raises(RejectedInputError):
            hormander_constant(get_kernel("hilbert"), y=1.0, z=1.0)
