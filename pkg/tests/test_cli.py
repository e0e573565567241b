import os

import numpy as np
import pytest

from czo.cli import (ExperimentConfig, builtin_function, builtin_registry,
                     main, parse_config_file, run_experiment)
from czo.errors import RegistryError
from czo.geometry import HyperCurve, box
from czo.kernels import KernelSpec
from czo.operator import grid_function, write_grid_csv


class TestConfig:
    def test_defaults_and_overrides(self):
        cfg = ExperimentConfig("apply", {"n": "64"})
        assert cfg.get_int("n") == 64
        assert cfg.get("kernel") == "two-line-hilbert"
        assert cfg.get_box().lo == (-8.0,)

    def test_config_file_parsing(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("# comment\nn = 128\nkernel=hilbert\n\n")
        opts = parse_config_file(str(p))
        assert opts == {"n": "128", "kernel": "hilbert"}

    def test_bad_config_line(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("just-a-word\n")
        with pytest.raises(Exception):
            parse_config_file(str(p))


class TestRegistry:
    def test_curve_and_kernel_lookup(self):
        assert isinstance(builtin_registry("two-lines"), HyperCurve)
        assert isinstance(builtin_registry("hilbert"), KernelSpec)

    def test_miss(self):
        with pytest.raises(RegistryError):
            builtin_registry("bogus")


class TestBuiltinFunctions:
    def test_indicator(self):
        f = builtin_function("indicator:-1,1", box(-8.0, 8.0), 64)
        assert f.integral() == pytest.approx(2.0)

    def test_odd_bump_is_exactly_odd(self):
        f = builtin_function("odd-bump", box(-8.0, 8.0), 128)
        assert np.array_equal(f.values, -f.values[::-1])

    def test_custom_csv(self, tmp_path):
        g = grid_function(box(0.0, 1.0), 16, lambda X: X[:, 0])
        p = tmp_path / "g.csv"
        write_grid_csv(g, str(p))
        f = builtin_function(f"custom:{p}", box(-8.0, 8.0), 64)
        assert f.cells_per_axis == 16
        assert np.array_equal(f.values, g.values)

    def test_unknown_family(self):
        with pytest.raises(RegistryError):
            builtin_function("nope", box(-8.0, 8.0), 16)


class TestExitCodes:
    def test_registry_miss_exits_2(self, tmp_path):
        code = main(["apply", "kernel=bogus", "--out", str(tmp_path)])
        assert code == 2

    def test_bad_override_exits_2(self, tmp_path):
        code = main(["apply", "oops", "--out", str(tmp_path)])
        assert code == 2

    def test_missing_config_file_exits_2(self, tmp_path):
        code = main(["apply", "--config", str(tmp_path / "nope"),
                     "--out", str(tmp_path)])
        assert code == 2

    def test_metric_equivalence_passes(self, tmp_path):
        code = main(["metric-equivalence", "pairs=300", "--out",
                     str(tmp_path)])
        assert code == 0
        body = (tmp_path / "metric_equivalence.csv").read_text()
        assert body.splitlines()[-1].endswith(",1")
        assert (tmp_path / "manifest.csv").exists()


class TestExperiments:
    def test_decompose_outputs(self, tmp_path):
        code = main(["decompose", "function=indicator:0,1", "root=-2..2",
                     "n=256", "--out", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "decompose_cubes.csv").read_text().splitlines()
        assert lines[-1] == "0,0.0,2.0,0.5,0.5"
        assert (tmp_path / "decompose_good.csv").exists()
        assert (tmp_path / "decompose_bad.csv").exists()

    def test_recover_two_lines(self, tmp_path):
        code = main(["recover", "curve=two-lines", "b=1,sin", "n=128",
                     "--out", str(tmp_path)])
        assert code == 0

    def test_qtheta_two_lines(self, tmp_path):
        code = main(["qtheta", "curve=two-lines", "theta=8.1",
                     "mc_samples=50000", "probes=200", "--out",
                     str(tmp_path)])
        assert code == 0

    def test_partition_reports_leftover(self, tmp_path):
        code = main(["partition", "curve=diamond", "max_depth=5",
                     "--out", str(tmp_path)])
        assert code == 0
        text = (tmp_path / "partition.csv").read_text()
        assert "leftover_measure=0.0625" in text

    def test_determinism_across_threads(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["metric-equivalence", "pairs=200", "seed=3",
                     "--out", str(a)]) == 0
        assert main(["metric-equivalence", "pairs=200", "seed=3",
                     "--threads", "4", "--out", str(b)]) == 0
        assert (a / "metric_equivalence.csv").read_text() == \
            (b / "metric_equivalence.csv").read_text()

    def test_apply_emits_rows(self, tmp_path):
        code = main(["apply", "n=256", "out_n=32", "--out", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "apply.csv").read_text().splitlines()
        assert lines[1] == "x,value"
        assert len(lines) == 2 + 32

    def test_t0_convergence(self, tmp_path):
        code = main(["t0-convergence", "n=512", "function=bump",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "t0_convergence.csv").exists()
        assert (tmp_path / "t0_limit.csv").exists()

    def test_weaktype_runs(self, tmp_path):
        code = main(["weaktype", "n=128", "out_n=64", "--out",
                     str(tmp_path)])
        assert code == 0
        text = (tmp_path / "weaktype.csv").read_text()
        assert text.startswith("# max_ratio=")
