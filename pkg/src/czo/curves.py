"""Built-in hyper curves: diagonal, two crossing lines, and the diamond."""

from __future__ import annotations

import numpy as np

from .errors import RegistryError
from .geometry import Box, CurveBranch, HyperCurve, Region, box, region, whole_space
from .util import BOUNDING_HALF_WIDTH


def _identity(X: np.ndarray) -> np.ndarray:
    return X.copy()


def diagonal(dim: int = 1) -> HyperCurve:
    """gamma(x) = x on R^dim: the classical diagonal singularity."""
    dom = whole_space(dim)
    br = CurveBranch(
        index=0, domain=dom,
        forward=_identity, inverse=_identity,
        jacobian=lambda X: np.ones(len(X)),
        lipschitz=1.0,
        range_region=dom,
        preimage_boxes=lambda b: [b],
        preimage_nearest=lambda Y, X: Y.copy(),
        name="identity",
    )
    return HyperCurve("diagonal", [br],
                      intersection_points=np.empty((0, dim)))


def two_lines() -> HyperCurve:
    """gamma(x) = +-x on R: two lines crossing at the origin (n = 1)."""
    dom = whole_space(1)
    plus = CurveBranch(
        index=0, domain=dom,
        forward=_identity, inverse=_identity,
        jacobian=lambda X: np.ones(len(X)),
        lipschitz=1.0, range_region=dom,
        preimage_boxes=lambda b: [b],
        preimage_nearest=lambda Y, X: Y.copy(),
        name="plus",
    )
    minus = CurveBranch(
        index=1, domain=dom,
        forward=lambda X: -X,
        inverse=lambda Y: -Y,
        jacobian=lambda X: -np.ones(len(X)),
        lipschitz=1.0, range_region=dom,
        preimage_boxes=lambda b: [Box((-b.hi[0],), (-b.lo[0],))],
        preimage_nearest=lambda Y, X: -Y,
        name="minus",
    )
    return HyperCurve("two-lines", [plus, minus],
                      intersection_points=np.array([[0.0]]))


def _pm_preimage_nearest(p: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Choose between preimages +-p the one closer to x; ties pick -p."""
    plus = p
    minus = -p
    d_plus = np.abs(X - plus)
    d_minus = np.abs(X - minus)
    return np.where(d_plus < d_minus, plus, minus)


def diamond() -> HyperCurve:
    """gamma(x) = +-(1 - |x|) for |x| <= 1 and 0 for |x| >= 1 (n = 1).

    The two slanted branches are two-to-one (set-valued preimages resolved
    per query); the flat branch is constant and therefore marked degenerate.
    """
    L = BOUNDING_HALF_WIDTH
    slant_dom = region(box(-1.0, 1.0))

    def upper_fwd(X):
        return 1.0 - np.abs(X)

    def upper_pre_boxes(b: Box) -> list[Box]:
        c, d = max(b.lo[0], 0.0), min(b.hi[0], 1.0)
        if c > d:
            return []
        return [box(1.0 - d, 1.0 - c), box(c - 1.0, d - 1.0)]

    upper = CurveBranch(
        index=0, domain=slant_dom,
        forward=upper_fwd,
        inverse=lambda Y: 1.0 - Y,           # the x in [0, 1] sheet
        jacobian=lambda X: -np.where(X[:, 0] >= 0.0, 1.0, -1.0),
        lipschitz=1.0,
        range_region=region(box(0.0, 1.0)),
        preimage_boxes=upper_pre_boxes,
        preimage_nearest=lambda Y, X: _pm_preimage_nearest(1.0 - Y, X),
        breakpoints=(0.0,),
        name="upper",
    )

    def lower_fwd(X):
        return np.abs(X) - 1.0

    def lower_pre_boxes(b: Box) -> list[Box]:
        c, d = max(b.lo[0], -1.0), min(b.hi[0], 0.0)
        if c > d:
            return []
        return [box(1.0 + c, 1.0 + d), box(-(1.0 + d), -(1.0 + c))]

    lower = CurveBranch(
        index=1, domain=slant_dom,
        forward=lower_fwd,
        inverse=lambda Y: 1.0 + Y,           # the x in [0, 1] sheet
        jacobian=lambda X: np.where(X[:, 0] >= 0.0, 1.0, -1.0),
        lipschitz=1.0,
        range_region=region(box(-1.0, 0.0)),
        preimage_boxes=lower_pre_boxes,
        preimage_nearest=lambda Y, X: _pm_preimage_nearest(1.0 + Y, X),
        breakpoints=(0.0,),
        name="lower",
    )

    flat_dom = region(box(1.0, L), box(-L, -1.0))

    def flat_pre_boxes(b: Box) -> list[Box]:
        if b.lo[0] <= 0.0 <= b.hi[0]:
            return list(flat_dom.boxes)
        return []

    flat = CurveBranch(
        index=2, domain=flat_dom,
        forward=lambda X: np.zeros_like(X),
        inverse=None,
        jacobian=lambda X: np.zeros(len(X)),
        lipschitz=1.0,
        range_region=region(box(0.0, 0.0)),
        preimage_boxes=flat_pre_boxes,
        preimage_nearest=lambda Y, X: flat_dom.clamp(X),
        invertible=False,
        name="flat",
    )

    return HyperCurve("diamond", [upper, lower, flat],
                      intersection_points=np.array([[-1.0], [1.0]]))


_BUILDERS = {
    "diagonal": diagonal,
    "two-lines": two_lines,
    "diamond": diamond,
}

CURVE_NAMES = tuple(_BUILDERS)


def get_curve(name: str, dim: int = 1) -> HyperCurve:
    """Look up a built-in curve by name."""
    if name not in _BUILDERS:
        raise RegistryError(f"unknown curve {name!r}; known: {sorted(_BUILDERS)}")
    if name == "diagonal":
        return diagonal(dim)
    if dim != 1:
        raise RegistryError(f"curve {name!r} is one-dimensional")
    return _BUILDERS[name]()
