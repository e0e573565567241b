"""Grid functions, truncated singular operators, and branch multipliers.

``apply_truncated`` realizes T_eps f(x) = sum over cells with
rho(x, y_cell) >= eps of K(x, y) f(y) h^n by the midpoint rule.  The kernel
and rho matrices for a (kernel, output geometry, input geometry) pair are
cached, so sweeping eps only changes the mask.  Inner sums pair each cell
with its mirror cell before accumulating, so integrands that are exactly
antisymmetric on a symmetric grid cancel bitwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConsistencyError, RejectedInputError
from .geometry import Box, HyperCurve
from .kernels import KernelSpec, _RHO_FLOOR
from .metric import rho_values
from .partition import BranchDisjointPartition
from .util import as_points, fold_mirror_sum, pmap_chunks


# ---------------------------------------------------------------------------
# Grid functions
# ---------------------------------------------------------------------------

def _axis_nodes(lo: float, hi: float, n_cells: int) -> np.ndarray:
    """Cell midpoints, constructed so mirror cells reflect bitwise: the
    second half is (lo + hi) minus the first half."""
    h = (hi - lo) / n_cells
    k = np.arange(n_cells)
    base = lo + (k + 0.5) * h
    half = n_cells // 2
    out = base.copy()
    out[n_cells - 1 - np.arange(half)] = (lo + hi) - base[:half]
    return out


def grid_nodes(bx: Box, n_cells: int) -> np.ndarray:
    """Midpoint nodes of the N^n grid on bx, shape (N^n, n), row-major."""
    axes = [_axis_nodes(bx.lo[k], bx.hi[k], n_cells) for k in range(bx.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(-1, bx.dim)


@dataclass(frozen=True)
class GridFunction:
    """Midpoint samples of a function on an N^n grid over a box.

    ``values`` is flat, row-major over axes.  Two grid functions combine
    pointwise only when box and cells_per_axis match exactly.
    """

    box: Box
    cells_per_axis: int
    values: np.ndarray

    def __post_init__(self):
        if self.cells_per_axis < 1:
            raise RejectedInputError("cells_per_axis must be positive")
        if not self.box.is_bounded:
            raise RejectedInputError("grid functions need a bounded box")
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if len(v) != self.cells_per_axis ** self.box.dim:
            raise RejectedInputError(
                f"expected {self.cells_per_axis ** self.box.dim} values, "
                f"got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise RejectedInputError("grid function values must be finite")
        widths = {round((b - a) / self.cells_per_axis, 15)
                  for a, b in zip(self.box.lo, self.box.hi)}
        if len(widths) != 1:
            raise RejectedInputError("cells must be cubic (equal axis widths)")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def h(self) -> float:
        return (self.box.hi[0] - self.box.lo[0]) / self.cells_per_axis

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.box, self.cells_per_axis)

    def geometry(self) -> tuple:
        return (self.box.lo, self.box.hi, self.cells_per_axis)

    def same_geometry(self, other: "GridFunction") -> bool:
        return self.geometry() == other.geometry()

    def integral(self) -> float:
        return float(np.sum(self.values) * self.h ** self.dim)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.box, self.cells_per_axis, values)


def grid_function(bx: Box, n_cells: int, f) -> GridFunction:
    """Sample a callable (on (m, n) point arrays) or an array onto the grid."""
    if callable(f):
        vals = np.asarray(f(grid_nodes(bx, n_cells)), dtype=float).reshape(-1)
    else:
        vals = np.asarray(f, dtype=float).reshape(-1)
    return GridFunction(bx, n_cells, vals)


def zeros_like(gf: GridFunction) -> GridFunction:
    return gf.with_values(np.zeros_like(gf.values))


# CSV I/O --------------------------------------------------------------------

def write_grid_csv(gf: GridFunction, path: str) -> None:
    """Header `# box=<lo..hi per axis> n=<N>`, then one value per line."""
    spans = ",".join(f"{a!r}..{b!r}" for a, b in zip(gf.box.lo, gf.box.hi))
    with open(path, "w") as fh:
        fh.write(f"# box={spans} n={gf.cells_per_axis}\n")
        for v in gf.values:
            fh.write(f"{float(v)!r}\n")


def read_grid_csv(path: str) -> GridFunction:
    header = None
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if header is None and "box=" in line:
                    header = line
                continue
            vals.append(float(line))
    if header is None:
        raise RejectedInputError(f"{path}: missing '# box=... n=...' header")
    body = header.lstrip("#").strip()
    fields = dict(part.split("=", 1) for part in body.split())
    spans = fields["box"].split(",")
    lo = tuple(float(s.split("..")[0]) for s in spans)
    hi = tuple(float(s.split("..")[1]) for s in spans)
    return GridFunction(Box(lo, hi), int(fields["n"]), np.array(vals))


# Interpolation --------------------------------------------------------------

def interpolate(gf: GridFunction, X) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation at points X on the midpoint grid.

    Inside the box but beyond the outermost nodes the value is held
    constant; outside the box the value is 0 and the point is flagged in
    the returned mask.
    """
    X = as_points(X, gf.dim)
    N = gf.cells_per_axis
    h = gf.h
    outside = ~gf.box.contains(X, tol=0.0)
    u = (X - gf.box.lo_a) / h - 0.5
    i0 = np.clip(np.floor(u).astype(int), 0, max(N - 2, 0))
    w = np.clip(u - i0, 0.0, 1.0)
    if N == 1:
        w = np.zeros_like(w)
    vals = np.zeros(len(X))
    grid = gf.values.reshape((N,) * gf.dim)
    for bits in range(2 ** gf.dim):
        idx = []
        weight = np.ones(len(X))
        for k in range(gf.dim):
            b = (bits >> k) & 1
            idx.append(np.clip(i0[:, k] + b, 0, N - 1))
            weight = weight * (w[:, k] if b else (1.0 - w[:, k]))
        vals += weight * grid[tuple(idx)]
    vals[outside] = 0.0
    return vals, outside


# ---------------------------------------------------------------------------
# Truncated operators
# ---------------------------------------------------------------------------

_MATRIX_CACHE: dict = {}
_CACHE_ENTRY_LIMIT = 1 << 24


def clear_matrix_cache() -> None:
    _MATRIX_CACHE.clear()


def _build_matrices(kernel: KernelSpec, Xout: np.ndarray,
                    gf: GridFunction, threads: int):
    Yin = gf.nodes()
    m_out, m_in = len(Xout), len(Yin)

    def rows(s, e):
        Xrep = np.repeat(Xout[s:e], m_in, axis=0)
        Ytil = np.tile(Yin, (e - s, 1))
        R, _ = rho_values(kernel.curve, Xrep, Ytil, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            K = kernel.fn(Xrep, Ytil, np.maximum(R, _RHO_FLOOR))
        K = np.where(R >= _RHO_FLOOR, K, 0.0)
        return np.stack([R.reshape(e - s, m_in), K.reshape(e - s, m_in)],
                        axis=0).reshape(-1, m_in)

    row_chunk = max(1, _CACHE_ENTRY_LIMIT // (8 * m_in))
    flat = pmap_chunks(rows, m_out, row_chunk, threads)
    # Each chunk contributed (2*rows, m_in): de-interleave back into R and K.
    Rs, Ks = [], []
    pos = 0
    for s in range(0, m_out, row_chunk):
        e = min(s + row_chunk, m_out)
        blk = flat[pos:pos + 2 * (e - s)].reshape(2, e - s, m_in)
        Rs.append(blk[0])
        Ks.append(blk[1])
        pos += 2 * (e - s)
    return np.concatenate(Rs), np.concatenate(Ks)


def _matrices_for(kernel: KernelSpec, Xout: np.ndarray, out_key,
                  gf: GridFunction, threads: int):
    key = (kernel.name, out_key, gf.geometry())
    hit = _MATRIX_CACHE.get(key)
    if hit is not None:
        return hit
    R, K = _build_matrices(kernel, Xout, gf, threads)
    if R.size <= _CACHE_ENTRY_LIMIT:
        _MATRIX_CACHE[key] = (R, K)
    return R, K


def _masked_apply(R: np.ndarray, K: np.ndarray, gf: GridFunction,
                  epsilon: float) -> np.ndarray:
    W = np.where(R >= epsilon, K, 0.0) * gf.values
    return fold_mirror_sum(W, axis=1) * gf.h ** gf.dim


def apply_truncated(kernel: KernelSpec, f: GridFunction, epsilon: float,
                    out_geometry: Optional[tuple[Box, int]] = None,
                    threads: int = 1) -> GridFunction:
    """T_eps f on the output grid (defaults to f's own grid)."""
    if epsilon <= 0.0:
        raise RejectedInputError("epsilon must be positive")
    if epsilon < 4.0 * f.h:
        warnings.warn("epsilon below 4 cell widths: quadrature near the "
                      "truncation boundary is unreliable", stacklevel=2)
    if out_geometry is None:
        out_box, out_n = f.box, f.cells_per_axis
    else:
        out_box, out_n = out_geometry
    Xout = grid_nodes(out_box, out_n)
    R, K = _matrices_for(kernel, Xout, (out_box.lo, out_box.hi, out_n),
                         f, threads)
    return GridFunction(out_box, out_n, _masked_apply(R, K, f, epsilon))


def apply_truncated_at(kernel: KernelSpec, f: GridFunction, x,
                       epsilon: float, threads: int = 1) -> np.ndarray:
    """T_eps f at explicit points (no caching)."""
    if epsilon <= 0.0:
        raise RejectedInputError("epsilon must be positive")
    X = as_points(x, kernel.dim)
    R, K = _build_matrices(kernel, X, f, threads)
    return _masked_apply(R, K, f, epsilon)


@dataclass
class T0Report:
    epsilons: list[float]
    sup_diffs: list[float]       # ||T_{e_k} f - T_{e_{k+1}} f||_inf
    unreliable: list[bool]       # epsilon below the grid resolution h

    @property
    def cauchy_after_two(self) -> bool:
        d = self.sup_diffs
        return all(d[k + 1] <= d[k] * (1.0 + 1e-9) for k in range(1, len(d) - 1))


def estimate_T0(kernel: KernelSpec, f: GridFunction,
                epsilons: Sequence[float],
                out_geometry: Optional[tuple[Box, int]] = None,
                threads: int = 1) -> tuple[GridFunction, T0Report]:
    """Approximate the vanishing-truncation limit along a decreasing eps
    sequence; convergence is diagnosed, never assumed."""
    eps = [float(e) for e in epsilons]
    if len(eps) < 1 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise RejectedInputError("epsilons must be strictly decreasing")
    outs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for e in eps:
            outs.append(apply_truncated(kernel, f, e, out_geometry, threads))
    diffs = [float(np.max(np.abs(a.values - b.values)))
             for a, b in zip(outs, outs[1:])]
    report = T0Report(eps, diffs, [e < f.h for e in eps])
    return outs[-1], report


# ---------------------------------------------------------------------------
# Branch multipliers
# ---------------------------------------------------------------------------

@dataclass
class MultiplierField:
    """Per-branch sampled multipliers b_i on the grid, zero outside D_i."""

    curve: HyperCurve
    box: Box
    cells_per_axis: int
    fields: np.ndarray           # (r, N^n), forced to 0 outside D_i
    support: np.ndarray = field(default=None)   # (r, N^n) bool: node in D_i
    covered: np.ndarray = field(default=None)   # (r, N^n) bool: recovery hit

    def __post_init__(self):
        nodes = grid_nodes(self.box, self.cells_per_axis)
        if self.support is None:
            self.support = np.stack([b.domain.contains(nodes, tol=1e-12)
                                     for b in self.curve.branches])
        self.fields = np.asarray(self.fields, dtype=float).reshape(
            self.curve.r, -1)
        self.fields = np.where(self.support, self.fields, 0.0)
        if self.covered is None:
            self.covered = self.support.copy()

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.box, self.cells_per_axis)


def multiplier_field(curve: HyperCurve, bx: Box, n_cells: int,
                     funcs: Sequence) -> MultiplierField:
    """Build a field from one callable (or constant) per branch."""
    if len(funcs) != curve.r:
        raise RejectedInputError(f"expected {curve.r} multiplier functions")
    nodes = grid_nodes(bx, n_cells)
    rows = []
    for fn in funcs:
        if callable(fn):
            rows.append(np.asarray(fn(nodes), dtype=float).reshape(-1))
        else:
            rows.append(np.full(len(nodes), float(fn)))
    return MultiplierField(curve, bx, n_cells, np.stack(rows))


def apply_multiplier(curve: HyperCurve, b: MultiplierField,
                     f: GridFunction) -> GridFunction:
    """x -> sum_i b_i(x) f(gamma_i(x)) chi_{D_i}(x) on b's grid, with f
    read by multilinear interpolation (0 outside its box)."""
    nodes = b.nodes()
    out = np.zeros(len(nodes))
    for i, br in enumerate(curve.branches):
        mask = b.support[i]
        if not np.any(mask):
            continue
        img = br.forward(nodes[mask])
        vals, _ = interpolate(f, img)
        out[mask] += b.fields[i][mask] * vals
    return GridFunction(b.box, b.cells_per_axis, out)


# ---------------------------------------------------------------------------
# Operator handles
# ---------------------------------------------------------------------------

@dataclass
class OperatorHandle:
    """A composable linear map GridFunction -> GridFunction.

    kind is one of 'truncated', 'multiplier', 'sum', 'black-box'.
    """

    kind: str
    kernel: Optional[KernelSpec] = None
    epsilon: float = 0.0
    curve: Optional[HyperCurve] = None
    field_: Optional[MultiplierField] = None
    parts: tuple = ()
    fn: Optional[Callable[[GridFunction], GridFunction]] = None
    threads: int = 1

    def __call__(self, f: GridFunction) -> GridFunction:
        if self.kind == "truncated":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return apply_truncated(self.kernel, f, self.epsilon,
                                       threads=self.threads)
        if self.kind == "multiplier":
            return apply_multiplier(self.curve, self.field_, f)
        if self.kind == "sum":
            outs = [p(f) for p in self.parts]
            acc = outs[0]
            for o in outs[1:]:
                if not acc.same_geometry(o):
                    raise ConsistencyError("summed handles disagree on "
                                           "output geometry")
                acc = acc.with_values(acc.values + o.values)
            return acc
        if self.kind == "black-box":
            return self.fn(f)
        raise RejectedInputError(f"unknown handle kind {self.kind!r}")


def truncated_handle(kernel: KernelSpec, epsilon: float,
                     threads: int = 1) -> OperatorHandle:
    return OperatorHandle("truncated", kernel=kernel, epsilon=epsilon,
                          threads=threads)


def multiplier_handle(curve: HyperCurve, b: MultiplierField) -> OperatorHandle:
    return OperatorHandle("multiplier", curve=curve, field_=b)


def sum_handle(*parts: OperatorHandle) -> OperatorHandle:
    return OperatorHandle("sum", parts=tuple(parts))


def black_box_handle(fn) -> OperatorHandle:
    return OperatorHandle("black-box", fn=fn)


# ---------------------------------------------------------------------------
# Multiplier recovery
# ---------------------------------------------------------------------------

def _cube_indicator(gf_box: Box, n_cells: int, cube_box: Box) -> GridFunction:
    nodes = grid_nodes(gf_box, n_cells)
    # Half-open membership matches the partition's cube-location convention.
    inside = np.all((nodes >= cube_box.lo_a) & (nodes < cube_box.hi_a), axis=1)
    return GridFunction(gf_box, n_cells, inside.astype(float))


def recover_multipliers(difference: OperatorHandle, curve: HyperCurve,
                        partition: BranchDisjointPartition,
                        out_box: Box, n_cells: int) -> MultiplierField:
    """Reconstruct the branch multipliers of a difference operator.

    For each partition cube I_j, h_j = difference(chi_{I_j}); then
    b_i(x) = h_j(x) for the cube containing gamma_i(x).  Nodes whose image
    falls in the leftover set stay 0 and are left uncovered.
    """
    nodes = grid_nodes(out_box, n_cells)
    m = len(nodes)
    support = np.stack([b.domain.contains(nodes, tol=1e-12)
                        for b in curve.branches])
    cube_of = np.full((curve.r, m), -1, dtype=int)
    for i, br in enumerate(curve.branches):
        mask = support[i]
        if np.any(mask):
            img = br.forward(nodes[mask])
            cube_of[i][mask] = partition.locate(img)
    # Branch-disjointness says two branches never share a cube at one node.
    for j in range(m):
        hits = cube_of[:, j]
        used = hits[hits >= 0]
        if len(used) != len(set(used)):
            raise ConsistencyError(
                f"two branches map node {tuple(nodes[j])} into the same "
                "partition cube")
    fields = np.zeros((curve.r, m))
    covered = np.zeros((curve.r, m), dtype=bool)
    needed = sorted(set(cube_of[cube_of >= 0].tolist()))
    for jc in needed:
        chi = _cube_indicator(out_box, n_cells, partition.cubes[jc].as_box())
        h_j = difference(chi)
        if not (h_j.box == out_box and h_j.cells_per_axis == n_cells):
            raise ConsistencyError("difference operator changed the grid")
        sel = cube_of == jc
        for i in range(curve.r):
            fields[i][sel[i]] = h_j.values[sel[i]]
            covered[i][sel[i]] = True
    return MultiplierField(curve, out_box, n_cells, fields,
                           support=support, covered=covered & support)


@dataclass
class MultiplierBoundReport:
    passed: bool
    cap: float
    supremum: float
    per_branch: list[float]


def multiplier_bound_check(curve: HyperCurve, b: MultiplierField,
                           cap: float) -> MultiplierBoundReport:
    """Verify sup_x sum-free per-branch bound |b_i(x)|^2 |J_i(x)|^{-1} <= cap."""
    if cap <= 0:
        raise RejectedInputError("cap must be positive")
    nodes = b.nodes()
    sups = []
    for i, br in enumerate(curve.branches):
        mask = b.support[i]
        if not np.any(mask):
            sups.append(0.0)
            continue
        vals = b.fields[i][mask]
        J = np.abs(br.jac(nodes[mask]))
        score = np.where(J > 0, vals ** 2 / np.maximum(J, 1e-300),
                         np.where(vals == 0.0, 0.0, math.inf))
        sups.append(float(np.max(score)))
    sup = max(sups)
    return MultiplierBoundReport(sup <= cap, cap, sup, sups)
