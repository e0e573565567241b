"""Dyadic stopping-time decomposition and weak-type measurements.

``cz_decompose`` splits a grid function at height lambda into a good part
bounded by 2^n lambda and mean-zero bad parts supported on disjoint dyadic
cubes.  Root and grid are required to align (cube boundaries on cell
boundaries, power-of-two cell counts), which turns every decomposition
invariant into an exact floating-point identity for dyadic-rational data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import RejectedInputError
from .geometry import Box
from .kernels import KernelSpec, _RHO_FLOOR
from .metric import enlarged_cube, rho_values
from .operator import (GridFunction, _masked_apply, _matrices_for,
                       grid_nodes)


# ---------------------------------------------------------------------------
# Calderon-Zygmund decomposition
# ---------------------------------------------------------------------------

@dataclass
class SelectedCube:
    box: Box
    average: float               # average of f (signed) over the cube
    abs_average: float           # average of |f|, in [lambda, 2^n lambda]


@dataclass
class DecompositionResult:
    lam: float
    root: Box
    cubes: list[SelectedCube]
    good: GridFunction
    bad: list[GridFunction]      # same grid as f, each supported in its cube

    @property
    def total_cube_measure(self) -> float:
        return float(sum(c.box.measure() for c in self.cubes))


def _root_cells(f: GridFunction, root: Box) -> tuple[np.ndarray, int]:
    """Index offsets of the root within f's grid, plus cells per axis."""
    h = f.h
    start = (root.lo_a - f.box.lo_a) / h
    count = (root.hi_a - root.lo_a) / h
    s = np.rint(start).astype(int)
    c = np.rint(count).astype(int)
    if (np.max(np.abs(start - s)) > 1e-9 or np.max(np.abs(count - c)) > 1e-9
            or np.any(s < 0) or np.any(s + c > f.cells_per_axis)):
        raise RejectedInputError("root cube is not aligned with the grid")
    if len(set(c.tolist())) != 1:
        raise RejectedInputError("root must be a cube in grid cells")
    m = int(c[0])
    if m < 1 or (m & (m - 1)) != 0:
        raise RejectedInputError(
            "root side must span a power-of-two number of cells")
    return s, m


def cz_decompose(f: GridFunction, lam: float,
                 root: Optional[Box] = None) -> DecompositionResult:
    """Stopping-time decomposition of f at height lam over a root cube.

    A child cube is selected the first time its |f|-average exceeds lam;
    selection stops above single cells, so |f| <= lam at every unselected
    cell.  Averages over aligned power-of-two cubes are exact grid sums.
    """
    if lam <= 0:
        raise RejectedInputError("lambda must be positive")
    if root is None:
        root = f.box
    start, m = _root_cells(f, root)
    n = f.dim
    N = f.cells_per_axis
    grid = f.values.reshape((N,) * n)
    sl = tuple(slice(int(s), int(s) + m) for s in start)
    root_avg = float(np.mean(np.abs(grid[sl])))
    if root_avg > lam:
        raise RejectedInputError(
            f"average of |f| over the root is {root_avg} > lambda={lam}")

    h = f.h
    selected: list[tuple[np.ndarray, int]] = []

    def recurse(s: np.ndarray, size: int):
        if size == 1:
            return
        half = size // 2
        for bits in range(2 ** n):
            off = np.array([(bits >> k) & 1 for k in range(n)]) * half
            cs = s + off
            csl = tuple(slice(int(a), int(a) + half) for a in cs)
            if float(np.mean(np.abs(grid[csl]))) > lam:
                selected.append((cs, half))
            else:
                recurse(cs, half)

    recurse(start, m)
    good_vals = f.values.copy()
    cubes = []
    bad = []
    for cs, size in sorted(selected, key=lambda t: (t[1], tuple(t[0]))):
        csl = tuple(slice(int(a), int(a) + size) for a in cs)
        sub = grid[csl]
        avg = float(np.mean(sub))
        abs_avg = float(np.mean(np.abs(sub)))
        lo = tuple(f.box.lo[k] + cs[k] * h for k in range(n))
        hi = tuple(f.box.lo[k] + (cs[k] + size) * h for k in range(n))
        cube_box = Box(lo, hi)
        cubes.append(SelectedCube(cube_box, avg, abs_avg))
        b_grid = np.zeros((N,) * n)
        b_grid[csl] = sub - avg
        bad.append(GridFunction(f.box, N, b_grid.reshape(-1)))
        gg = good_vals.reshape((N,) * n)
        gg[csl] = avg
        good_vals = gg.reshape(-1)
    good = GridFunction(f.box, N, good_vals)
    return DecompositionResult(lam, root, cubes, good, bad)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def weak_l1_quasinorm(g: GridFunction) -> float:
    """sup over attained values lam of lam * |{|g| >= lam}| (exact on grids)."""
    v = np.abs(g.values)
    cell = g.h ** g.dim
    levels = np.unique(v[v > 0])
    if len(levels) == 0:
        return 0.0
    # |{|g| >= lam}| for lam descending through the attained values.
    counts = np.array([np.count_nonzero(v >= lam) for lam in levels])
    return float(np.max(levels * counts * cell))


def lp_norm(g: GridFunction, p: float) -> float:
    if not (1.0 <= p < math.inf):
        raise RejectedInputError("p must satisfy 1 <= p < infinity")
    cell = g.h ** g.dim
    return float(np.sum(np.abs(g.values) ** p * cell) ** (1.0 / p))


# ---------------------------------------------------------------------------
# Weak-type experiment
# ---------------------------------------------------------------------------

@dataclass
class WeakTypeRow:
    function_index: int
    lam: float
    cube_count: int
    superlevel_measure: float    # |{|T_eps f| >= lam}| on the output grid
    ratio: float                 # lam * superlevel_measure / ||f||_1
    b_star_measure: float        # grid measure of the union of (Q_k)_theta
    bad_integral: float          # sum_k int_{outside B*} |T_eps b_k|


@dataclass
class WeakTypeReport:
    epsilon: float
    theta: float
    out_cells: int
    rows: list[WeakTypeRow]

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.rows), default=0.0)


def weak_type_experiment(kernel: KernelSpec, family: Sequence[GridFunction],
                         epsilon: float, theta: float,
                         out_cells: int = 256, ladder_max: int = 12,
                         threads: int = 1) -> WeakTypeReport:
    """Measure lam |{|T_eps f| >= lam}| / ||f||_1 across a lambda ladder
    {2^j ||f||_1 / |root| : j = 0..ladder_max}, with the decomposition-side
    quantities (exceptional-set measure, bad-part integral off it)."""
    if len(family) == 0:
        raise RejectedInputError("family must be nonempty")
    n = kernel.dim
    hypo = (2.0 + 5.0 * kernel.curve.c_gamma) * math.sqrt(n)
    if theta <= hypo:
        raise RejectedInputError(f"theta must exceed {hypo}")
    rows = []
    for fi, f in enumerate(family):
        l1 = lp_norm(f, 1.0)
        out_box = f.box
        Xout = grid_nodes(out_box, out_cells)
        out_cell = (out_box.side() / out_cells) ** n
        R, K = _matrices_for(kernel, Xout,
                             (out_box.lo, out_box.hi, out_cells), f, threads)
        M = np.where(R >= epsilon, K, 0.0)
        Tf = _masked_apply(R, K, f, epsilon)
        if l1 == 0.0:
            for j in range(ladder_max + 1):
                rows.append(WeakTypeRow(fi, 0.0, 0, 0.0, 0.0, 0.0, 0.0))
            continue
        base = l1 / f.box.measure()
        for j in range(ladder_max + 1):
            lam = (2.0 ** j) * base
            dec = cz_decompose(f, lam)
            level = float(np.count_nonzero(np.abs(Tf) >= lam) * out_cell)
            ratio = lam * level / l1
            in_bstar = np.zeros(len(Xout), dtype=bool)
            for c in dec.cubes:
                ec = enlarged_cube(kernel.curve, c.box, theta)
                in_bstar |= ec.contains(Xout)
            b_star = float(np.count_nonzero(in_bstar) * out_cell)
            bad_int = 0.0
            if dec.bad:
                Bmat = np.stack([b.values for b in dec.bad], axis=1)
                Tb = (M @ Bmat) * f.h ** n        # (m_out, K)
                outside = ~in_bstar
                bad_int = float(np.sum(np.abs(Tb[outside])) * out_cell)
            rows.append(WeakTypeRow(fi, lam, len(dec.cubes), level, ratio,
                                    b_star, bad_int))
    return WeakTypeReport(epsilon, theta, out_cells, rows)
