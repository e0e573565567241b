"""Command-line front door: reproducible experiments with CSV reports.

Usage: ``czo <kind> [--config FILE] [--out DIR] [--threads K] [key=value ...]``

Configuration is a flat key=value text file; command-line pairs override
file values.  Every experiment writes fixed-name CSV files plus a
``manifest.csv`` (config echo, seed, library versions, wall time) into the
output directory.  Exit codes: 0 pass, 1 numerical assertion failure,
2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .curves import CURVE_NAMES, get_curve
from .decomposition import (cz_decompose, lp_norm, weak_type_experiment,
                            weak_l1_quasinorm)
from .errors import CzoError, RegistryError, RejectedInputError
from .geometry import Box, box
from .kernels import (KERNEL_NAMES, audit_regularity, audit_size, get_kernel,
                      hormander_constant)
from .metric import check_equivalence, check_qtheta
from .operator import (GridFunction, apply_truncated_at, estimate_T0,
                       grid_nodes, multiplier_field, multiplier_handle,
                       read_grid_csv, recover_multipliers, write_grid_csv)
from .partition import build_partition
from .util import get_threads

KINDS = ("metric-equivalence", "partition", "kernel-audit", "hormander",
         "apply", "t0-convergence", "recover", "decompose", "weaktype",
         "qtheta")

DEFAULTS = {
    "curve": "two-lines",
    "kernel": "two-line-hilbert",
    "box": "-8..8",
    "n": "512",
    "out_n": "256",
    "pairs": "10000",
    "samples": "20000",
    "seed": "7",
    "eps": "0.1",
    "eps_list": "0.5,0.25,0.125,0.0625",
    "theta": "8.1",
    "lambda": "0.3",
    "max_depth": "8",
    "function": "indicator:-1,1",
    "family": "indicator:-1,1;bump",
    "b": "1,0",
    "x": "2.0",
    "a_list": "0.1,1,10",
    "hormander_grid": str(1 << 20),
    "probes": "1000",
    "mc_samples": "1000000",
    "cube": "2..3",
    "root": "",
    "out": "czo-out",
    "threads": "0",
}


@dataclass
class ExperimentConfig:
    kind: str
    options: dict = field(default_factory=dict)

    def get(self, key: str) -> str:
        if key in self.options:
            return self.options[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        raise RejectedInputError(f"missing config key {key!r}")

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def get_floats(self, key: str) -> list[float]:
        return [float(v) for v in self.get(key).split(",") if v.strip()]

    def get_box(self, key: str = "box") -> Box:
        spans = self.get(key).split(",")
        lo = tuple(float(s.split("..")[0]) for s in spans)
        hi = tuple(float(s.split("..")[1]) for s in spans)
        return Box(lo, hi)


def parse_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise RejectedInputError(f"bad config line: {raw.rstrip()}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def builtin_registry(name: str):
    """Look up a built-in curve or kernel by name."""
    if name in CURVE_NAMES:
        return get_curve(name)
    if name in KERNEL_NAMES:
        return get_kernel(name)
    raise RegistryError(f"unknown builtin {name!r}")


# ---------------------------------------------------------------------------
# Built-in function families
# ---------------------------------------------------------------------------

def builtin_function(spec: str, bx: Box, n_cells: int) -> GridFunction:
    """Parse 'indicator:a,b' | 'bump[:center,width]' | 'odd-bump' |
    'custom:path.csv' into a grid function."""
    name, _, arg = spec.partition(":")
    nodes = grid_nodes(bx, n_cells)
    x = nodes[:, 0]
    if name == "indicator":
        a, b = (float(v) for v in arg.split(",")) if arg else (-1.0, 1.0)
        vals = ((x >= a) & (x <= b)).astype(float)
    elif name == "bump":
        c, w = (float(v) for v in arg.split(",")) if arg else (0.0, 1.0)
        vals = np.exp(-((x - c) / w) ** 2)
    elif name == "odd-bump":
        w = float(arg) if arg else 1.0
        vals = (x / w) * np.exp(-(x / w) ** 2)
    elif name == "custom":
        return read_grid_csv(arg)
    else:
        raise RegistryError(f"unknown function family {name!r}")
    return GridFunction(bx, n_cells, vals)


_B_FUNCS = {
    "sin": lambda X: np.sin(X[:, 0]),
    "cos": lambda X: np.cos(X[:, 0]),
    "x": lambda X: X[:, 0],
}


def _parse_multipliers(spec: str, count: int):
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) != count:
        raise RejectedInputError(
            f"expected {count} multiplier entries, got {len(parts)}")
    out = []
    for p in parts:
        if p in _B_FUNCS:
            out.append(_B_FUNCS[p])
        else:
            out.append(float(p))
    return out


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _write_csv(path: str, header_cols: list[str], rows: list[tuple],
               comments: list[str] = ()) -> None:
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_manifest(out_dir: str, cfg: ExperimentConfig,
                    wall_time: float) -> None:
    rows = [("kind", cfg.kind)]
    keys = sorted(set(DEFAULTS) | set(cfg.options))
    for k in keys:
        rows.append((k, cfg.options.get(k, DEFAULTS.get(k, ""))))
    rows += [("czo_version", __version__),
             ("numpy_version", np.__version__),
             ("python_version", sys.version.split()[0]),
             ("wall_time_seconds", repr(wall_time))]
    _write_csv(os.path.join(out_dir, "manifest.csv"), ["key", "value"], rows)


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------

def _run_metric_equivalence(cfg, out_dir, threads) -> int:
    curve = get_curve(cfg.get("curve"))
    rep = check_equivalence(curve, cfg.get_int("pairs"), cfg.get_int("seed"),
                            threads=threads)
    rows = [(curve.name, rep.pair_count, rep.max_ratio_tilde,
             rep.max_ratio_star, rep.bound, int(rep.passed))]
    if rep.witness is not None:
        rows.append(("witness", repr(rep.witness), "", "", "", 0))
    _write_csv(os.path.join(out_dir, "metric_equivalence.csv"),
               ["curve", "pairs", "max_ratio_tilde", "max_ratio_star",
                "bound", "passed"], rows)
    return 0 if rep.passed else 1


def _run_partition(cfg, out_dir, threads) -> int:
    curve = get_curve(cfg.get("curve"))
    part = build_partition(curve, cfg.get_int("max_depth"))
    rows = [("cube", c.level, " ".join(map(str, c.corner)),
             c.as_box().lo[0], c.as_box().hi[0]) for c in part.cubes]
    rows += [("leftover", c.level, " ".join(map(str, c.corner)),
              c.as_box().lo[0], c.as_box().hi[0]) for c in part.leftover]
    _write_csv(os.path.join(out_dir, "partition.csv"),
               ["status", "level", "corner", "lo", "hi"], rows,
               comments=[f"leftover_measure={part.leftover_measure!r}",
                         f"probabilistic={int(part.probabilistic)}"])
    return 0


def _run_kernel_audit(cfg, out_dir, threads) -> int:
    kernel = get_kernel(cfg.get("kernel"))
    size = audit_size(kernel, cfg.get_int("samples"), cfg.get_int("seed"),
                      threads=threads)
    rows = [("size", size.supremum, size.bound, int(size.passed))]
    code = 0 if size.passed else 1
    if kernel.regularity_audited:
        reg = audit_regularity(kernel, cfg.get_int("samples"),
                               cfg.get_int("seed"), threads=threads)
        rows.append(("regularity", reg.supremum, reg.bound, int(reg.passed)))
    _write_csv(os.path.join(out_dir, "kernel_audit.csv"),
               ["audit", "supremum", "bound", "passed"], rows,
               comments=[f"kernel={kernel.name}"])
    return code


def _run_hormander(cfg, out_dir, threads) -> int:
    kernel = get_kernel(cfg.get("kernel"))
    rows = []
    totals = []
    for a in cfg.get_floats("a_list"):
        rep = hormander_constant(kernel, z=a,
                                 grid_points=cfg.get_int("hormander_grid"),
                                 threads=threads)
        rows.append((a, rep.value_box, rep.tail, rep.value_total))
        totals.append(rep.value_total)
    _write_csv(os.path.join(out_dir, "hormander.csv"),
               ["separation", "value_box", "tail", "value_total"], rows)
    spread = (max(totals) - min(totals)) / max(totals) if totals else 0.0
    return 0 if spread <= 0.01 else 1


def _run_apply(cfg, out_dir, threads) -> int:
    kernel = get_kernel(cfg.get("kernel"))
    bx = cfg.get_box()
    f = builtin_function(cfg.get("function"), bx, cfg.get_int("n"))
    eps = cfg.get_float("eps")
    out_n = cfg.get_int("out_n")
    X = grid_nodes(bx, out_n)
    vals = apply_truncated_at(kernel, f, X, eps, threads)
    _write_csv(os.path.join(out_dir, "apply.csv"), ["x", "value"],
               list(zip(X[:, 0].tolist(), vals.tolist())),
               comments=[f"kernel={kernel.name} eps={eps!r}"])
    return 0


def _run_t0(cfg, out_dir, threads) -> int:
    kernel = get_kernel(cfg.get("kernel"))
    bx = cfg.get_box()
    f = builtin_function(cfg.get("function"), bx, cfg.get_int("n"))
    limit, rep = estimate_T0(kernel, f, cfg.get_floats("eps_list"),
                             threads=threads)
    rows = [(e, (rep.sup_diffs[i] if i < len(rep.sup_diffs) else ""),
             int(rep.unreliable[i]))
            for i, e in enumerate(rep.epsilons)]
    _write_csv(os.path.join(out_dir, "t0_convergence.csv"),
               ["eps", "sup_diff_to_next", "unreliable"], rows)
    write_grid_csv(limit, os.path.join(out_dir, "t0_limit.csv"))
    return 0


def _run_recover(cfg, out_dir, threads) -> int:
    curve = get_curve(cfg.get("curve"))
    bx = cfg.get_box()
    n = cfg.get_int("n")
    declared = multiplier_field(curve, bx, n,
                                _parse_multipliers(cfg.get("b"), curve.r))
    part = build_partition(curve, cfg.get_int("max_depth"))
    rec = recover_multipliers(multiplier_handle(curve, declared), curve,
                              part, bx, n)
    h = (bx.hi[0] - bx.lo[0]) / n
    rows = []
    code = 0
    for i in range(curve.r):
        cov = rec.covered[i]
        err = float(np.max(np.abs(rec.fields[i] - declared.fields[i])[cov])) \
            if np.any(cov) else 0.0
        rows.append((i, err, int(np.count_nonzero(cov)),
                     int(np.count_nonzero(rec.support[i] & ~cov))))
        if err > 2.0 * h:
            code = 1
    _write_csv(os.path.join(out_dir, "recover.csv"),
               ["branch", "sup_error_covered", "covered", "uncovered"], rows,
               comments=[f"tolerance={2.0 * h!r}"])
    return code


def _run_decompose(cfg, out_dir, threads) -> int:
    bx = cfg.get_box()
    f = builtin_function(cfg.get("function"), bx, cfg.get_int("n"))
    root = cfg.get_box("root") if cfg.get("root") else None
    dec = cz_decompose(f, cfg.get_float("lambda"), root)
    rows = [(k, c.box.lo[0], c.box.hi[0], c.average, c.abs_average)
            for k, c in enumerate(dec.cubes)]
    _write_csv(os.path.join(out_dir, "decompose_cubes.csv"),
               ["index", "lo", "hi", "average", "abs_average"], rows,
               comments=[f"lambda={dec.lam!r}",
                         f"weak_l1_good={weak_l1_quasinorm(dec.good)!r}"])
    write_grid_csv(dec.good, os.path.join(out_dir, "decompose_good.csv"))
    bad_sum = dec.good.with_values(
        sum((b.values for b in dec.bad), np.zeros_like(dec.good.values)))
    write_grid_csv(bad_sum, os.path.join(out_dir, "decompose_bad.csv"))
    return 0


def _run_weaktype(cfg, out_dir, threads) -> int:
    kernel = get_kernel(cfg.get("kernel"))
    bx = cfg.get_box()
    n = cfg.get_int("n")
    family = [builtin_function(s.strip(), bx, n)
              for s in cfg.get("family").split(";") if s.strip()]
    rep = weak_type_experiment(kernel, family, cfg.get_float("eps"),
                               cfg.get_float("theta"),
                               out_cells=cfg.get_int("out_n"),
                               threads=threads)
    rows = [(r.function_index, r.lam, r.cube_count, r.superlevel_measure,
             r.ratio, r.b_star_measure, r.bad_integral) for r in rep.rows]
    _write_csv(os.path.join(out_dir, "weaktype.csv"),
               ["function", "lambda", "cubes", "superlevel_measure",
                "ratio", "b_star_measure", "bad_integral"], rows,
               comments=[f"max_ratio={rep.max_ratio!r}"])
    return 0 if math.isfinite(rep.max_ratio) else 1


def _run_qtheta(cfg, out_dir, threads) -> int:
    curve = get_curve(cfg.get("curve"))
    rep = check_qtheta(curve, cfg.get_box("cube"), cfg.get_float("theta"),
                       probe_count=cfg.get_int("probes"),
                       seed=cfg.get_int("seed"),
                       mc_samples=cfg.get_int("mc_samples"),
                       threads=threads)
    rows = [(curve.name, rep.measure_estimate, rep.measure_halfwidth,
             rep.measure_bound, rep.min_probe_rho, rep.separation_bound,
             int(rep.passed))]
    _write_csv(os.path.join(out_dir, "qtheta.csv"),
               ["curve", "measure_estimate", "measure_halfwidth",
                "measure_bound", "min_probe_rho", "separation_bound",
                "passed"], rows)
    return 0 if rep.passed else 1


_RUNNERS = {
    "metric-equivalence": _run_metric_equivalence,
    "partition": _run_partition,
    "kernel-audit": _run_kernel_audit,
    "hormander": _run_hormander,
    "apply": _run_apply,
    "t0-convergence": _run_t0,
    "recover": _run_recover,
    "decompose": _run_decompose,
    "weaktype": _run_weaktype,
    "qtheta": _run_qtheta,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute one experiment kind; returns the process exit code."""
    if cfg.kind not in _RUNNERS:
        raise RejectedInputError(f"unknown experiment kind {cfg.kind!r}")
    out_dir = cfg.get("out")
    os.makedirs(out_dir, exist_ok=True)
    threads = get_threads(cfg.get_int("threads") or None)
    start = time.time()
    code = _RUNNERS[cfg.kind](cfg, out_dir, threads)
    _write_manifest(out_dir, cfg, time.time() - start)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="czo",
        description="Singular-integral experiments for curve-adapted "
                    "Calderon-Zygmund operators")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int)
    parser.add_argument("overrides", nargs="*", metavar="key=value")
    args = parser.parse_intermixed_args(argv)

    try:
        options = {}
        if args.config:
            options.update(parse_config_file(args.config))
        for pair in args.overrides:
            if "=" not in pair:
                raise RejectedInputError(f"override {pair!r} is not key=value")
            key, val = pair.split("=", 1)
            options[key.strip()] = val.strip()
        if args.out:
            options["out"] = args.out
        if args.threads is not None:
            options["threads"] = str(args.threads)
        cfg = ExperimentConfig(args.kind, options)
        return run_experiment(cfg)
    except (RegistryError, RejectedInputError, FileNotFoundError,
            ValueError) as exc:
        print(f"czo: config error: {exc}", file=sys.stderr)
        return 2
    except CzoError as exc:
        print(f"czo: failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
