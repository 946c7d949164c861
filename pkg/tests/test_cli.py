import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

from src.app import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from src.model.config import dump_config

from toy_setup import toy_config


def run(*argv: str) -> int:
    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
        return main([str(a) for a in argv])


class CommandLineTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.data = cls.root / "data"
        cls.config = cls.root / "toy.cfg"
        cls.config.write_text(dump_config(toy_config(epochs=2, patience=2)), encoding="utf-8")
        code = run("synth", "--nodes", 8, "--steps", 120, "--period", 24, "--out", cls.data)
        assert code == EXIT_OK, code
        cls.train_out = cls.root / "train"
        code = run("train", "--config", cls.config, "--data", cls.data, "--out", cls.train_out)
        assert code == EXIT_OK, code

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_synth_writes_dataset_and_manifest(self):
        for name in ("meta.json", "values.bin", "adj.bin", "manifest.json"):
            with self.subTest(file=name):
                self.assertTrue((self.data / name).is_file())
        manifest = json.loads((self.data / "manifest.json").read_text())
        self.assertEqual(manifest["command"], "synth")
        self.assertEqual(manifest["seed"], 0)

    def test_train_outputs(self):
        self.assertTrue((self.train_out / "checkpoint" / "config.json").is_file())
        self.assertTrue((self.train_out / "config.cfg").is_file())
        lines = (self.train_out / "metrics.csv").read_text().splitlines()
        self.assertEqual(lines[0], "horizon,mae,rmse,mape_pct")

    def test_usage_errors(self):
        cases = {
            "missing data": ("train", "--config", self.config, "--data", self.root / "nowhere", "--out", self.root / "x"),
            "missing argument": ("train", "--config", self.config, "--out", self.root / "x"),
            "unknown command": ("serve", "--out", self.root / "x"),
            "missing csv": ("convert", "--csv", self.root / "nowhere.csv", "--out", self.root / "x"),
        }
        for name, argv in cases.items():
            with self.subTest(case=name):
                self.assertEqual(run(*argv), EXIT_USAGE)

    def test_node_mismatch_is_a_data_error(self):
        small = self.root / "small"
        self.assertEqual(run("synth", "--nodes", 6, "--steps", 60, "--period", 24, "--out", small), EXIT_OK)
        self.assertEqual(run("train", "--config", self.config, "--data", small, "--out", self.root / "y"), EXIT_DATA)

    def test_eval_reproduces_training_metrics(self):
        out = self.root / "eval"
        code = run(
            "eval", "--checkpoint", self.train_out / "checkpoint", "--data", self.data, "--out", out,
            "--dump-attn", "--dump-attn-mem", "--dump-dyn-graph", "--dump-pred", "--first-n", 5,
        )
        self.assertEqual(code, EXIT_OK)
        self.assertEqual((out / "metrics.csv").read_bytes(), (self.train_out / "metrics.csv").read_bytes())
        self.assertEqual(len((out / "attn_mem.csv").read_text().splitlines()), 6)
        self.assertTrue((out / "attn" / "layer0.bin").is_file())
        self.assertTrue((out / "dyn_graph" / "step1.csv").is_file())
        self.assertTrue((out / "peak_metrics.csv").is_file())
        header = (out / "predictions.csv").read_text().splitlines()[0]
        self.assertEqual(header, "window,horizon,node,timestamp,y_true,y_pred")

    def test_seeded_runs_match(self):
        outputs = []
        for name in ("seed-a", "seed-b"):
            out = self.root / name
            self.assertEqual(run("train", "--config", self.config, "--data", self.data, "--out", out, "--seed", 7), EXIT_OK)
            outputs.append((out / "metrics.csv").read_bytes())
        self.assertEqual(outputs[0], outputs[1])
        manifest = json.loads((self.root / "seed-a" / "manifest.json").read_text())
        self.assertEqual(manifest["config"]["seed"], 7)

    def test_historical_average_on_periodic_data(self):
        out = self.root / "ha"
        self.assertEqual(run("baseline-ha", "--config", self.config, "--data", self.data, "--out", out, "--period", 24), EXIT_OK)
        overall = (out / "metrics.csv").read_text().splitlines()[-1].split(",")
        self.assertEqual(overall[0], "all")
        self.assertLess(float(overall[1]), 1e-9)

    def test_gradcheck(self):
        passing = run("gradcheck", "--config", self.config, "--out", self.root / "gc", "--max-entries", 3)
        self.assertEqual(passing, EXIT_OK)
        self.assertTrue((self.root / "gc" / "gradcheck.txt").is_file())
        failing = run(
            "gradcheck", "--config", self.config, "--out", self.root / "gc-strict", "--max-entries", 1,
            "--tol", 1e-30, "--skip-primitives",
        )
        self.assertEqual(failing, EXIT_NUMERIC)

    def test_dump_graphs(self):
        out = self.root / "graphs"
        self.assertEqual(run("dump-graphs", "--checkpoint", self.train_out / "checkpoint", "--out", out), EXIT_OK)
        for name in ("a_real", "learned1", "learned2", "a1", "a2"):
            with self.subTest(graph=name):
                self.assertTrue((out / f"{name}.bin").is_file())
                self.assertTrue((out / f"{name}.csv").is_file())

    def test_ablate(self):
        out = self.root / "ablation"
        self.assertEqual(run("ablate", "--config", self.config, "--data", self.data, "--out", out), EXIT_OK)
        lines = (out / "ablation.csv").read_text().splitlines()
        self.assertEqual(len(lines), 7)
        self.assertEqual(lines[0], "variant,mae,rmse,mape_pct,parameters,error")

    def test_convert(self):
        csv_path = self.root / "speeds.csv"
        csv_path.write_text("timestamp,a,b\n0,60,55\n300,58,54\n600,61,50\n", encoding="utf-8")
        out = self.root / "converted"
        self.assertEqual(run("convert", "--csv", csv_path, "--out", out), EXIT_OK)
        self.assertTrue((out / "values.bin").is_file())


if __name__ == "__main__":
    unittest.main()
