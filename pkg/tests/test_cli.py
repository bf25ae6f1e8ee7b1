import contextlib
import csv
import io
import math
import os
import shlex
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
import yaml

from dfo_tr.blackbox import ParameterSpace
from dfo_tr.cli import (
    format_csv,
    load_dataset,
    main,
    run_auc,
    run_benchmark,
    task_seed,
    tune_external,
)
from dfo_tr.config import DatasetConfig, ExperimentConfig
from dfo_tr.data import serialize_libsvm
from dfo_tr.errors import DFOTRConfigError, DFOTRError
from dfo_tr.objectives import GaussianPairSpec, sample_gaussian_dataset

MOCK = Path(__file__).parent / "fixtures" / "mock_blackbox.py"
PARAMS = ["lam:1e-6:1:log", "gamma:1:1e3:log", "c:1e-2:1e2:log"]
BOUNDS = [(-6.0, 0.0), (0.0, 3.0), (-2.0, 2.0)]


def run_main(argv: list[str]) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


def table(text: str) -> list[dict[str, str]]:
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(body))


class ExperimentFixture(unittest.TestCase):
    """A small synthetic LIBSVM file and experiment config in a temp directory."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = Path(self._tmp.name)
        spec = GaussianPairSpec(
            mu1=np.array([1.0, 0.5, 0.0]), mu2=np.zeros(3), Sigma11=np.eye(3), Sigma22=np.eye(3)
        )
        self.data = sample_gaussian_dataset(spec, 40, 60, np.random.default_rng(0))
        (self.dir / "toy.libsvm").write_text(serialize_libsvm(self.data), encoding="utf-8")
        self.config_path = self.dir / "experiments.yaml"
        self.config_path.write_text(
            yaml.safe_dump(
                {
                    "data_dir": ".",
                    "seeds": [0],
                    "folds": 5,
                    "datasets": [
                        {"name": "toy", "path": "toy.libsvm", "scaling": "minmax", "budget": 20},
                        {"name": "absent", "path": "absent.libsvm", "budget": 20},
                        {"name": "huge", "path": "toy.libsvm", "budget": 20, "big": True},
                    ],
                }
            ),
            encoding="utf-8",
        )
        env = patch.dict(os.environ)
        env.start()
        self.addCleanup(env.stop)
        os.environ.pop("DFO_TR_DATA_DIR", None)
        self.experiment = ExperimentConfig(
            datasets=[DatasetConfig(name="toy", path="toy.libsvm", scaling="minmax", budget=20)],
            data_dir=str(self.dir),
        )
        self.entry = self.experiment.dataset("toy")


class TestHelpers(unittest.TestCase):
    def test_task_seed(self):
        """Test task seeds are deterministic and distinct per task."""
        self.assertEqual(task_seed(0, 1, 2), task_seed(0, 1, 2))
        seeds = {task_seed(0, r, f) for r in range(4) for f in range(5)}
        self.assertEqual(len(seeds), 20)
        self.assertGreaterEqual(task_seed(3), 0)

    def test_format_csv(self):
        """Test the commented header and CSV body layout."""
        text = format_csv({"command": "dfo-tr bench branin", "budget": 10}, ["a", "b"], [[1, 0.1], ["x", 2.5]])
        self.assertEqual(
            text, "# command: dfo-tr bench branin\n# budget: 10\na,b\n1,0.1\nx,2.5\n"
        )


class TestRunBenchmark(unittest.TestCase):
    def test_rows(self):
        """Test one row per method and seed with gaps at each checkpoint."""
        rows = run_benchmark("branin", budget=30, seeds=[0, 1])
        self.assertEqual([(r.method, r.seed) for r in rows], [
            ("dfo-tr", 0), ("dfo-tr", 1), ("random-search", 0), ("random-search", 1)
        ])
        for row in rows:
            self.assertEqual(row.budget, 30)
            self.assertEqual(len(row.gaps), 4)
            self.assertTrue(all(g >= -1e-12 for g in row.gaps))
            self.assertTrue(all(a >= b for a, b in zip(row.gaps, row.gaps[1:])))

    def test_budget_multiplier_scales_random_search(self):
        """Test the multiplier scales random-search budgets and checkpoints."""
        rows = run_benchmark("camelback", budget=20, methods=("random-search",), budget_multiplier=2)
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0].budget, 40)
        self.assertEqual(rows[0].checkpoints, [2, 20, 42, 200])

    def test_workers_do_not_change_results(self):
        """Test the worker count does not change the rows."""
        serial = run_benchmark("branin", budget=25, seeds=[0, 1, 2])
        pooled = run_benchmark("branin", budget=25, seeds=[0, 1, 2], workers=3)
        self.assertEqual(serial, pooled)

    def test_invalid(self):
        """Test unknown benchmarks, methods and multipliers are rejected."""
        with self.assertRaises(DFOTRConfigError):
            run_benchmark("rosenbrock")
        with self.assertRaises(DFOTRConfigError):
            run_benchmark("branin", methods=("hinge",))


class TestRunAUC(ExperimentFixture):
    def test_deterministic(self):
        """Test a deterministic cross-validated run on the toy dataset."""
        summary = run_auc(self.entry, self.experiment)
        self.assertEqual(summary.budget, 20)
        self.assertEqual(len(summary.runs), 5)
        self.assertEqual([r.fold for r in summary.runs], list(range(5)))
        for run in summary.runs:
            self.assertEqual(run.evals, 20)
            self.assertEqual(run.sampled_points, 20 * 80)
            self.assertTrue(0.0 <= run.test_auc <= 1.0)
            self.assertGreaterEqual(run.optimizer_seconds, 0.0)
        self.assertGreater(summary.mean, 0.6)
        self.assertAlmostEqual(summary.std, float(np.std([r.test_auc for r in summary.runs])))

    def test_reproducible_across_worker_counts(self):
        """Test results do not depend on the worker count."""
        serial = run_auc(self.entry, self.experiment, workers=1)
        pooled = run_auc(self.entry, self.experiment, workers=3)
        self.assertEqual(
            [(r.fold, r.train_auc, r.test_auc) for r in serial.runs],
            [(r.fold, r.train_auc, r.test_auc) for r in pooled.runs],
        )

    def test_stochastic_defaults_to_four_repeats(self):
        """Test stochastic mode repeats each fold four times."""
        summary = run_auc(self.entry, self.experiment, budget=10, mode="stochastic")
        self.assertEqual(len(summary.runs), 20)
        self.assertEqual({r.repeat for r in summary.runs}, {0, 1, 2, 3})

    def test_hinge_and_random_search(self):
        """Test the baseline methods run through the same harness."""
        hinge = run_auc(self.entry, self.experiment, method="hinge")
        self.assertTrue(all(r.evals <= 20 for r in hinge.runs))
        self.assertGreater(hinge.mean, 0.6)
        rs = run_auc(self.entry, self.experiment, method="random-search", budget_multiplier=2)
        self.assertEqual(rs.budget, 40)
        self.assertTrue(all(r.evals == 40 for r in rs.runs))

    def test_trace_files(self):
        """Test one trace CSV per run with the solver config header."""
        trace = self.dir / "traces"
        run_auc(self.entry, self.experiment, seeds=[3], trace_dir=trace)
        names = sorted(p.name for p in trace.iterdir())
        self.assertEqual(names, [f"toy-dfo-tr-deterministic-s3-r0-f{f}.csv" for f in range(5)])
        first = (trace / names[0]).read_text(encoding="utf-8")
        self.assertTrue(first.startswith("# eta0: 0.001\n"))
        self.assertIn("# delta_min: 1e-10\n", first)
        self.assertIn("# stop_reason: ", first)
        self.assertIn("\niter,rho,delta,", first)

    def test_errors(self):
        """Test unknown modes and missing data files are reported."""
        with self.assertRaises(DFOTRConfigError):
            run_auc(self.entry, self.experiment, mode="online")
        missing = DatasetConfig(name="gone", path="gone.libsvm")
        with self.assertRaises(DFOTRError) as ctx:
            load_dataset(missing, self.experiment)
        self.assertIn("gone.libsvm", str(ctx.exception))

    def test_data_dir_override(self):
        """Test DFO_TR_DATA_DIR overrides the configured data directory."""
        experiment = ExperimentConfig(datasets=[self.entry], data_dir="/nonexistent")
        os.environ["DFO_TR_DATA_DIR"] = str(self.dir)
        self.assertEqual(load_dataset(self.entry, experiment).size, 100)


class TestMain(ExperimentFixture):
    def test_bench_csv(self):
        """Test the bench subcommand writes the checkpoint table and config header."""
        code, out, _ = run_main(["bench", "branin", "--budget", "30", "--seeds", "2"])
        self.assertEqual(code, 0)
        self.assertIn("# command: dfo-tr bench branin --budget 30 --seeds 2", out)
        for line in ("# solver_eta0: 0.001", "# solver_gamma2: 1.5", "# solver_delta_min: 1e-10"):
            self.assertIn(line + "\n", out)
        self.assertNotIn("# schedule_", out)
        rows = table(out)
        self.assertEqual(len(rows), 4)
        self.assertEqual({r["method"] for r in rows}, {"dfo-tr", "random-search"})
        self.assertEqual({r["evals"] for r in rows}, {"30"})
        self.assertIn("gap_at_4", rows[0])

    def test_bench_is_deterministic(self):
        """Test bench output is identical across invocations."""
        argv = ["bench", "camelback", "--budget", "25", "--seed", "4"]
        self.assertEqual(run_main(argv)[1], run_main(argv)[1])

    def test_bench_writes_out_file(self):
        """Test --out writes the table to a file."""
        out = self.dir / "bench.csv"
        code, stdout, _ = run_main(["bench", "branin", "--budget", "10", "--out", str(out)])
        self.assertEqual(code, 0)
        self.assertEqual(stdout, "")
        self.assertEqual(len(table(out.read_text(encoding="utf-8"))), 2)

    def test_unknown_benchmark(self):
        """Test an unknown benchmark exits with code 2."""
        with self.assertRaises(SystemExit) as ctx:
            run_main(["bench", "rosenbrock"])
        self.assertEqual(ctx.exception.code, 2)

    def test_auc_is_bit_exact(self):
        """Test auc output without timing is bit-exact across invocations."""
        argv = ["auc", "toy", "--config", str(self.config_path), "--no-timing"]
        code, first, _ = run_main(argv)
        self.assertEqual(code, 0)
        self.assertEqual(first, run_main(argv)[1])
        rows = table(first)
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0]["dataset"], "toy")
        self.assertEqual(rows[0]["runs"], "5")
        self.assertNotIn("optimizer_seconds", rows[0])
        self.assertTrue(0.5 < float(rows[0]["mean_auc"]) <= 1.0)

    def test_auc_modes_and_methods(self):
        """Test the stochastic mode and hinge method through the CLI."""
        base = ["auc", "toy", "--config", str(self.config_path), "--budget", "10"]
        cases = {
            "stochastic": (["--mode", "stochastic", "--repeats", "2"], "10"),
            "hinge": (["--method", "hinge", "--seeds", "2"], "10"),
        }
        for name, (extra, runs) in cases.items():
            with self.subTest(case=name):
                code, out, _ = run_main(base + extra)
                self.assertEqual(code, 0)
                rows = table(out)
                self.assertEqual(rows[0]["runs"], runs)
                self.assertIn("optimizer_seconds", rows[0])
                self.assertIn("# solver_theta: 10.0\n", out)
                self.assertEqual("# schedule_slope: 50\n" in out, name == "stochastic")

    def test_auc_all_skips_missing_and_big(self):
        """Test running all datasets skips absent files and big datasets."""
        code, out, _ = run_main(["auc", "--config", str(self.config_path), "--budget", "8"])
        self.assertEqual(code, 0)
        self.assertEqual([r["dataset"] for r in table(out)], ["toy"])

    def test_auc_missing_file_fails(self):
        """Test a named dataset without its file exits with code 1."""
        code, _, err = run_main(["auc", "absent", "--config", str(self.config_path)])
        self.assertEqual(code, 1)
        self.assertIn("absent.libsvm", err)

    def test_auc_config_errors_exit_2(self):
        """Test configuration errors exit with code 2."""
        for argv in (
            ["auc", "unlisted", "--config", str(self.config_path)],
            ["auc", "huge", "--config", str(self.config_path)],
            ["auc", "toy", "--config", str(self.dir / "nope.yaml")],
        ):
            with self.subTest(argv=argv), self.assertRaises(SystemExit) as ctx:
                run_main(argv)
            self.assertEqual(ctx.exception.code, 2)

    def test_random_search_targets(self):
        """Test random-search accepts benchmarks and datasets."""
        code, out, _ = run_main(["random-search", "branin", "--budget", "20", "--budget-multiplier", "2"])
        self.assertEqual(code, 0)
        rows = table(out)
        self.assertEqual([(r["method"], r["evals"]) for r in rows], [("random-search", "40")])

        code, out, _ = run_main(
            ["random-search", "toy", "--config", str(self.config_path), "--budget", "10", "--no-timing"]
        )
        self.assertEqual(code, 0)
        rows = table(out)
        self.assertEqual((rows[0]["method"], rows[0]["budget"]), ("random-search", "10"))

    def test_tune(self):
        """Test tune drives the mock trainer and reports the best parameters."""
        command = shlex.join([sys.executable, str(MOCK), "--persistent"])
        argv = ["tune", "--command", command, "--persistent", "--budget", "12"]
        for param in PARAMS:
            argv += ["--param", param]
        code, out, _ = run_main(argv)
        self.assertEqual(code, 0)
        rows = table(out)
        self.assertEqual(len(rows), 12)
        self.assertEqual(list(rows[0]), ["eval", "lam", "gamma", "c", "response"])
        self.assertIn("# best: lam=", out)
        best = max(float(r["response"]) for r in rows)
        self.assertIn(f"# best_value: {best!r}", out)

    def test_tune_failure(self):
        """Test a failing trainer exits with code 1."""
        command = shlex.join([sys.executable, str(MOCK), "--fail"])
        code, _, err = run_main(["tune", "--command", command, "--param", "a:0:1", "--budget", "5"])
        self.assertEqual(code, 1)
        self.assertIn("out of memory", err)

    def test_tune_bad_parameter(self):
        """Test a malformed parameter spec exits with code 2."""
        with self.assertRaises(SystemExit) as ctx:
            run_main(["tune", "--command", "true", "--param", "a:1:0"])
        self.assertEqual(ctx.exception.code, 2)


class TestTuneExternal(unittest.TestCase):
    def setUp(self):
        self.space = ParameterSpace.parse(PARAMS)
        self.command = [sys.executable, str(MOCK), "--persistent"]

    def test_dfo_tr_finds_center(self):
        """Test DFO-TR finds the mock trainer's optimum."""
        result = tune_external(
            self.command, self.space, budget=60, persistent=True, w0=[-4.5, 1.0, 0.8]
        )
        self.assertEqual(len(result.evaluations), 60)
        normalized = [
            (math.log10(result.best_params[name]) - lo) / (hi - lo)
            for name, (lo, hi) in zip(self.space.names, BOUNDS)
        ]
        np.testing.assert_allclose(normalized, 0.5, atol=2e-2)
        self.assertAlmostEqual(result.best_value, max(v for _, v in result.evaluations))

    def test_random_search(self):
        """Test random search tuning stays inside the box."""
        result = tune_external(
            self.command, self.space, budget=15, persistent=True, method="random-search", seed=3
        )
        self.assertEqual(result.method, "random-search")
        self.assertEqual(len(result.evaluations), 15)
        self.assertLessEqual(result.best_value, 0.0)

    def test_unknown_method(self):
        """Test an unknown tuning method is rejected."""
        with self.assertRaises(DFOTRConfigError):
            tune_external(self.command, self.space, budget=5, method="grid")


if __name__ == "__main__":
    unittest.main()
