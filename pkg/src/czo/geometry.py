"""Curve geometry: boxes, regions, dyadic cubes, curve branches and validation.

A hyper curve is a finite union of graphs ``{(x, gamma_i(x)) : x in D_i}``
where each branch map ``gamma_i`` is Lipschitz with (declared) Lipschitz
inverse and nonvanishing Jacobian.  Domains are finite unions of closed
axis-aligned boxes, possibly unbounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CurveValidityError, RejectedInputError
from .util import BOUNDING_HALF_WIDTH, as_points


# ---------------------------------------------------------------------------
# Boxes and regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """A closed axis-aligned box prod_k [lo_k, hi_k]; bounds may be +-inf."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        for a, b in zip(self.lo, self.hi):
            if math.isnan(a) or math.isnan(b) or a > b:
                raise ValueError(f"invalid box bounds [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_a(self) -> np.ndarray:
        return np.array(self.lo, dtype=float)

    @property
    def hi_a(self) -> np.ndarray:
        return np.array(self.hi, dtype=float)

    @property
    def is_bounded(self) -> bool:
        return all(math.isfinite(a) and math.isfinite(b)
                   for a, b in zip(self.lo, self.hi))

    def measure(self) -> float:
        m = 1.0
        for a, b in zip(self.lo, self.hi):
            m *= (b - a)
        return m

    def side(self) -> float:
        """Side length; for non-cubic boxes, the maximum edge."""
        return max(b - a for a, b in zip(self.lo, self.hi))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo_a + self.hi_a)

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.all((X >= self.lo_a - tol) & (X <= self.hi_a + tol), axis=1)

    def clamp(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.clip(X, self.lo_a, self.hi_a)

    def distance(self, X) -> np.ndarray:
        """Euclidean distance from each point to the box."""
        X = as_points(X, self.dim)
        d = np.maximum(self.lo_a - X, 0.0) + np.maximum(X - self.hi_a, 0.0)
        return np.sqrt(np.sum(d * d, axis=1))

    def intersects(self, other: "Box") -> bool:
        return all(max(a, c) <= min(b, d)
                   for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def intersection(self, other: "Box") -> Optional["Box"]:
        lo = tuple(max(a, c) for a, c in zip(self.lo, other.lo))
        hi = tuple(min(b, d) for b, d in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def clipped(self, half_width: float = BOUNDING_HALF_WIDTH) -> Optional["Box"]:
        """Intersection with the sampling box [-half_width, half_width]^n."""
        cube = Box((-half_width,) * self.dim, (half_width,) * self.dim)
        return self.intersection(cube)

    def dilate(self, radius: float) -> "Box":
        return Box(tuple(a - radius for a in self.lo),
                   tuple(b + radius for b in self.hi))


def box(lo, hi) -> Box:
    """Build a Box from scalars or sequences."""
    lo_t = (float(lo),) if np.isscalar(lo) else tuple(float(v) for v in lo)
    hi_t = (float(hi),) if np.isscalar(hi) else tuple(float(v) for v in hi)
    return Box(lo_t, hi_t)


@dataclass(frozen=True)
class Region:
    """A finite union of closed boxes."""

    boxes: tuple[Box, ...]

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("a region needs at least one box")
        dims = {b.dim for b in self.boxes}
        if len(dims) != 1:
            raise ValueError("mixed-dimension region")

    @property
    def dim(self) -> int:
        return self.boxes[0].dim

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        X = as_points(X, self.dim)
        out = np.zeros(len(X), dtype=bool)
        for b in self.boxes:
            out |= b.contains(X, tol)
        return out

    def clamp(self, X) -> np.ndarray:
        """Nearest point of the region; ties broken lexicographically."""
        X = as_points(X, self.dim)
        cands = np.stack([b.clamp(X) for b in self.boxes])        # (k, m, n)
        dists = np.stack([b.distance(X) for b in self.boxes])     # (k, m)
        best = np.min(dists, axis=0)
        out = np.empty_like(X)
        for j in range(len(X)):
            tied = [cands[k, j] for k in range(len(self.boxes))
                    if dists[k, j] == best[j]]
            tied.sort(key=tuple)
            out[j] = tied[0]
        return out

    def distance(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.min(np.stack([b.distance(X) for b in self.boxes]), axis=0)

    def box_distance(self, other: Box) -> float:
        """Distance between this region and a box (both closed sets)."""
        d = math.inf
        for b in self.boxes:
            gap = np.maximum(np.maximum(b.lo_a - other.hi_a,
                                        other.lo_a - b.hi_a), 0.0)
            d = min(d, float(np.sqrt(np.sum(gap * gap))))
        return d

    def clipped(self, half_width: float = BOUNDING_HALF_WIDTH) -> list[Box]:
        out = [b.clipped(half_width) for b in self.boxes]
        return [b for b in out if b is not None]


def region(*boxes_: Box) -> Region:
    return Region(tuple(boxes_))


def whole_space(dim: int) -> Region:
    return Region((Box((-math.inf,) * dim, (math.inf,) * dim),))


# ---------------------------------------------------------------------------
# Dyadic cubes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class DyadicCube:
    """The cube 2^{-level} * prod_k [corner_k, corner_k + 1]."""

    level: int
    corner: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    def as_box(self) -> Box:
        s = self.side
        return Box(tuple(c * s for c in self.corner),
                   tuple((c + 1) * s for c in self.corner))

    def children(self) -> list["DyadicCube"]:
        out = []
        base = tuple(2 * c for c in self.corner)
        for bits in range(2 ** self.dim):
            off = tuple((bits >> k) & 1 for k in range(self.dim))
            out.append(DyadicCube(self.level + 1,
                                  tuple(b + o for b, o in zip(base, off))))
        return out

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        return self.as_box().contains(X, tol)


def dyadic_relation(a: DyadicCube, b: DyadicCube) -> str:
    """Classify a pair: 'disjoint' (disjoint interiors), 'nested', or 'equal'."""
    if a == b:
        return "equal"
    lo, hi = (a, b) if a.level <= b.level else (b, a)
    shift = hi.level - lo.level
    ancestor = tuple(c >> shift for c in hi.corner)
    if ancestor == lo.corner:
        return "nested"
    return "disjoint"


# ---------------------------------------------------------------------------
# Curve branches and hyper curves
# ---------------------------------------------------------------------------

@dataclass
class CurveBranch:
    """One branch gamma_i: D_i -> R^n of a hyper curve.

    ``forward``, ``inverse`` and ``jacobian`` act on point arrays of shape
    (m, n); ``jacobian`` returns the determinant per point.  ``lipschitz`` is
    the declared bound for both the map and its inverse; validate_curve audits
    it empirically.

    Optional exact structure, used by the faster code paths when present:

    - ``range_region``: the image gamma_i(D_i) as a union of boxes.
    - ``preimage_boxes``: maps a box B to the exact box decomposition of
      gamma_i^{-1}(B).
    - ``preimage_nearest``: for a range point y and query points x, the
      preimage of y closest to x (set-valued inverses resolved per query).
    - ``breakpoints``: parameter values (n=1) where the map is non-smooth;
      the distance solver splits its refinement bracket there.

    ``invertible=False`` marks a degenerate branch (e.g. a constant map)
    whose pointwise inverse is ill-defined; such branches are handled through
    the set-valued ``preimage_nearest`` and are skipped by the inverse-side
    audits.
    """

    index: int
    domain: Region
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]]
    jacobian: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    range_region: Optional[Region] = None
    preimage_boxes: Optional[Callable[[Box], list[Box]]] = None
    preimage_nearest: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    breakpoints: tuple[float, ...] = ()
    invertible: bool = True
    name: str = ""

    @property
    def dim(self) -> int:
        return self.domain.dim

    def eval(self, X) -> np.ndarray:
        return self.forward(as_points(X, self.dim))

    def inv(self, Y) -> np.ndarray:
        if self.inverse is None:
            raise CurveValidityError(
                f"branch {self.index} has no pointwise inverse")
        return self.inverse(as_points(Y, self.dim))

    def jac(self, X) -> np.ndarray:
        return np.asarray(self.jacobian(as_points(X, self.dim)), dtype=float)

    def nearest_preimage(self, Y, X) -> np.ndarray:
        """The preimage of each y closest to the paired query point x."""
        Y = as_points(Y, self.dim)
        X = as_points(X, self.dim)
        if self.preimage_nearest is not None:
            return self.preimage_nearest(Y, X)
        return self.inv(Y)


@dataclass
class HyperCurve:
    """A standard hyper curve: r branches plus their finite intersection set."""

    name: str
    branches: list[CurveBranch]
    intersection_points: np.ndarray = field(
        default_factory=lambda: np.empty((0, 1)))

    def __post_init__(self):
        if not self.branches:
            raise ValueError("a curve needs at least one branch")
        dims = {b.dim for b in self.branches}
        if len(dims) != 1:
            raise ValueError("mixed-dimension branches")
        self.intersection_points = np.asarray(
            self.intersection_points, dtype=float).reshape(-1, self.dim)

    @property
    def dim(self) -> int:
        return self.branches[0].dim

    @property
    def r(self) -> int:
        return len(self.branches)

    @property
    def c_gamma(self) -> float:
        # The shared Lipschitz constant is required to exceed 1; isometric
        # curves get clamped just above it so the lemma constants stay finite.
        return max(1.0 + 1e-9, max(b.lipschitz for b in self.branches))

    def branch(self, i: int) -> CurveBranch:
        if not 0 <= i < self.r:
            raise RejectedInputError(f"branch index {i} out of range (r={self.r})")
        return self.branches[i]


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

_DOMAIN_TOL = 1e-12


def branch_eval(curve: HyperCurve, i: int, x) -> np.ndarray:
    """Evaluate gamma_i(x); x must lie in D_i."""
    b = curve.branch(i)
    X = as_points(x, curve.dim)
    if not bool(np.all(b.domain.contains(X, tol=_DOMAIN_TOL))):
        raise RejectedInputError(f"point {x} outside domain of branch {i}")
    return b.forward(X)[0] if np.ndim(x) <= 1 else b.forward(X)


def branch_inverse(curve: HyperCurve, i: int, y) -> np.ndarray:
    """Evaluate gamma_i^{-1}(y); y must lie in the branch range."""
    b = curve.branch(i)
    Y = as_points(y, curve.dim)
    if b.range_region is not None:
        if not bool(np.all(b.range_region.contains(Y, tol=1e-9))):
            raise RejectedInputError(f"point {y} outside range of branch {i}")
    X = b.inv(Y)
    if not bool(np.all(b.domain.contains(X, tol=1e-9))):
        raise RejectedInputError(f"point {y} outside range of branch {i}")
    return X[0] if np.ndim(y) <= 1 else X


def nearest_domain_point(curve: HyperCurve, i: int, x) -> np.ndarray:
    """The domain point closest to x (coordinate-wise clamp, exact)."""
    b = curve.branch(i)
    X = as_points(x, curve.dim)
    out = b.domain.clamp(X)
    return out[0] if np.ndim(x) <= 1 else out


def nearest_range_point(curve: HyperCurve, i: int, y) -> np.ndarray:
    """The point of gamma_i(D_i) closest to y.

    Exact clamp when the range is declared as boxes; otherwise dense
    parameter sampling plus golden-section refinement, ties resolved to the
    lexicographically smallest parameter.
    """
    b = curve.branch(i)
    Y = as_points(y, curve.dim)
    if b.range_region is not None:
        out = b.range_region.clamp(Y)
    else:
        out = _sampled_nearest_range(b, Y)
    return out[0] if np.ndim(y) <= 1 else out


def _sampled_nearest_range(b: CurveBranch, Y: np.ndarray,
                           samples_per_axis: int = 4096,
                           refine_iters: int = 40) -> np.ndarray:
    if b.dim != 1:
        raise NotImplementedError(
            "sampled range projection is implemented for 1-d parameters; "
            "declare range_region for higher dimensions")
    out = np.empty_like(Y)
    boxes = b.domain.clipped()
    ts, lows, highs = [], [], []
    for bb in boxes:
        t = np.linspace(bb.lo[0], bb.hi[0], samples_per_axis)
        ts.append(t)
        lows.append(np.full_like(t, bb.lo[0]))
        highs.append(np.full_like(t, bb.hi[0]))
    t_all = np.concatenate(ts)
    lo_all = np.concatenate(lows)
    hi_all = np.concatenate(highs)
    vals = b.forward(t_all.reshape(-1, 1))
    for j, y in enumerate(Y):
        d2 = np.sum((vals - y) ** 2, axis=1)
        k = int(np.argmin(d2))
        spacing = (hi_all[k] - lo_all[k]) / (samples_per_axis - 1)
        a = max(lo_all[k], t_all[k] - spacing)
        c = min(hi_all[k], t_all[k] + spacing)
        g = lambda t: float(np.sum((b.forward(np.array([[t]]))[0] - y) ** 2))
        t_best, _ = _golden_scalar(g, a, c, refine_iters)
        cand = sorted([(g(t_all[k]), t_all[k]), (g(t_best), t_best)])
        out[j] = b.forward(np.array([[cand[0][1]]]))[0]
    return out


def _golden_scalar(g, a: float, c: float, iters: int):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = c - phi * (c - a)
    x2 = a + phi * (c - a)
    g1, g2 = g(x1), g(x2)
    for _ in range(iters):
        if g1 < g2:
            c, x2, g2 = x2, x1, g1
            x1 = c - phi * (c - a)
            g1 = g(x1)
        else:
            a, x1, g1 = x1, x2, g2
            x2 = a + phi * (c - a)
            g2 = g(x2)
    return (x1, g1) if g1 < g2 else (x2, g2)


def branch_jacobian(curve: HyperCurve, i: int, x) -> float:
    """det J_{gamma_i}(x) for x in the interior of D_i."""
    b = curve.branch(i)
    X = as_points(x, curve.dim)
    inside = b.domain.contains(X, tol=-1e-12)
    if not bool(np.all(inside)):
        raise RejectedInputError(
            f"point {x} not in the interior of the domain of branch {i}")
    J = b.jac(X)
    if np.any(J == 0.0):
        raise CurveValidityError(
            f"branch {i} has vanishing Jacobian at {x}")
    return float(J[0]) if np.ndim(x) <= 1 else J


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class BranchReport:
    index: int
    forward_ratio: float
    inverse_ratio: float
    min_jacobian: float
    max_roundtrip: float
    witness: Optional[tuple] = None


@dataclass
class ValidationReport:
    passed: bool
    c_gamma: float
    branches: list[BranchReport]

    @property
    def max_lipschitz_ratio(self) -> float:
        return max(max(b.forward_ratio, b.inverse_ratio) for b in self.branches)


def _sample_domain(b: CurveBranch, count: int, rng: np.random.Generator) -> np.ndarray:
    boxes = b.domain.clipped()
    per = max(2, count // len(boxes))
    pts = []
    for bb in boxes:
        pts.append(rng.uniform(bb.lo_a, bb.hi_a, size=(per, b.dim)))
    return np.concatenate(pts)


def validate_curve(curve: HyperCurve, sample_count: int = 1000,
                   seed: int = 0) -> ValidationReport:
    """Audit the declared branch structure on random sample pairs.

    Checks, per branch: empirical Lipschitz ratios of the map and (when the
    branch is invertible) its inverse, the round trip through the inverse,
    and the minimum |Jacobian|.  Passes iff every ratio stays below
    c_gamma * (1 + 1e-6) and no sampled Jacobian vanishes.
    """
    if sample_count < 2:
        raise RejectedInputError("sample_count must be at least 2")
    rng = np.random.default_rng(seed)
    cap = curve.c_gamma * (1.0 + 1e-6)
    reports = []
    passed = True
    for b in curve.branches:
        X = _sample_domain(b, sample_count, rng)
        Xp = _sample_domain(b, sample_count, rng)
        m = min(len(X), len(Xp))
        X, Xp = X[:m], Xp[:m]
        FX, FXp = b.forward(X), b.forward(Xp)
        dx = np.sqrt(np.sum((X - Xp) ** 2, axis=1))
        dy = np.sqrt(np.sum((FX - FXp) ** 2, axis=1))
        ok = dx > 0
        fwd_ratios = dy[ok] / dx[ok]
        k = int(np.argmax(fwd_ratios)) if len(fwd_ratios) else 0
        fwd = float(np.max(fwd_ratios)) if len(fwd_ratios) else 0.0
        witness = (tuple(X[ok][k]), tuple(Xp[ok][k])) if len(fwd_ratios) else None

        inv_ratio = 0.0
        roundtrip = 0.0
        min_jac = math.inf
        if b.invertible:
            # Set-valued inverses resolve to the preimage nearest the query,
            # so the round trip is well defined for two-to-one branches too.
            back = b.nearest_preimage(FX, X)
            roundtrip = float(np.max(np.sqrt(np.sum((back - X) ** 2, axis=1))))
            iy = dy > 0
            if b.breakpoints and b.dim == 1:
                # Two-to-one branches are Lipschitz-invertible piecewise;
                # compare only pairs on the same monotone piece.
                bp = np.array(b.breakpoints)
                same = (np.searchsorted(bp, X[:, 0])
                        == np.searchsorted(bp, Xp[:, 0]))
                iy = iy & same
            if np.any(iy):
                inv_ratio = float(np.max(dx[iy] / dy[iy]))
            J = b.jac(X)
            min_jac = float(np.min(np.abs(J)))
        rep = BranchReport(b.index, fwd, inv_ratio, min_jac, roundtrip)
        branch_ok = fwd <= cap and roundtrip <= 1e-9
        if b.invertible:
            branch_ok = branch_ok and inv_ratio <= cap and min_jac > 0.0
        if not branch_ok:
            rep.witness = witness
            passed = False
        reports.append(rep)
    return ValidationReport(passed, curve.c_gamma, reports)
