import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.data.datasets import load_dataset
from src.data.synthetic import PlantedEdge, SyntheticPattern, generate_synthetic
from src.data.windows import make_windows
from src.model import checkpoint
from src.model.config import ABLATION_FLAGS, load_config
from src.model.genshin import assemble_model, predict
from src.training.ablation import VARIANTS, variant_config
from src.training.baselines import default_period, historical_average
from src.training.metrics import metrics
from src.training.trainer import fit
from src.utils.errors import CheckpointError, ShapeError

from toy_setup import METR_LA_CONFIG, METR_LA_DIR, SLOW, toy_bundle, toy_config, toy_input


class PredictTests(unittest.TestCase):
    def setUp(self):
        self.config = toy_config()
        self.data = toy_bundle(self.config)
        self.model = assemble_model(self.config, self.data.adjacency, self.data.scaler)

    def test_shape_and_determinism(self):
        x = toy_input(self.config) * 5 + 40
        first = predict(self.model, x)
        second = predict(self.model, x)
        self.assertEqual(first.values.shape, (2, self.config.horizon, self.config.n_nodes, 1))
        self.assertEqual(first.values.tobytes(), second.values.tobytes())
        self.assertIsNone(first.memory_scores)

    def test_diagnostics(self):
        result = predict(self.model, toy_input(self.config), diagnostics=True)
        self.assertEqual(result.memory_scores.shape, (2, self.config.n_nodes, self.config.n_prototypes))
        self.assertEqual(len(result.dynamic_graphs), self.config.horizon)
        self.assertEqual(len(result.attention), self.config.transformer_layers)

    def test_node_mismatch(self):
        with self.assertRaises(ShapeError):
            predict(self.model, np.zeros((1, self.config.window, self.config.n_nodes - 1, 1)))
        with self.assertRaises(ShapeError):
            assemble_model(self.config, np.eye(self.config.n_nodes + 1))

    def test_zero_input_gives_finite_output(self):
        values = predict(self.model, np.zeros((1, self.config.window, self.config.n_nodes, 1)), normalized=True).values
        self.assertTrue(np.all(np.isfinite(values)))

    def test_relabeling_nodes_permutes_the_forecast(self):
        perm = np.random.default_rng(3).permutation(self.config.n_nodes)
        relabeled = assemble_model(self.config, self.data.adjacency[np.ix_(perm, perm)], self.data.scaler)
        relabeled.load_state_dict(self.model.state_dict())
        learner = relabeled.graph_learner
        learner.w_e1.data[...] = self.model.graph_learner.w_e1.data[perm]
        learner.w_e2.data[...] = self.model.graph_learner.w_e2.data[perm]
        x = toy_input(self.config)
        expected = predict(self.model, x, normalized=True).values[:, :, perm]
        actual = predict(relabeled, x[:, :, perm], normalized=True).values
        np.testing.assert_allclose(actual, expected, atol=1e-10)


class CheckpointTests(unittest.TestCase):
    def setUp(self):
        self.config = toy_config()
        self.data = toy_bundle(self.config)
        self.model = assemble_model(self.config, self.data.adjacency, self.data.scaler)
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name) / "ckpt"
        checkpoint.save(self.model, self.root)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_is_bitwise(self):
        loaded = checkpoint.load(self.root, expected=self.config)
        for name, values in self.model.state_dict().items():
            with self.subTest(param=name):
                self.assertEqual(loaded.state_dict()[name].tobytes(), values.tobytes())
        x = toy_input(self.config)
        self.assertEqual(predict(loaded, x).values.tobytes(), predict(self.model, x).values.tobytes())

    def test_corrupted_parameter_file(self):
        target = sorted((self.root / checkpoint.PARAMS_DIR).glob("*.bin"))[0]
        target.write_bytes(b"junk")
        with self.assertRaises(CheckpointError) as ctx:
            checkpoint.load(self.root)
        self.assertIn(target.name, str(ctx.exception))

    def test_format_version(self):
        config_path = self.root / checkpoint.CONFIG_FILE
        document = json.loads(config_path.read_text())
        document["format_version"] = 99
        config_path.write_text(json.dumps(document))
        with self.assertRaises(CheckpointError):
            checkpoint.load(self.root)

    def test_ablation_flags_must_agree(self):
        with self.assertRaises(CheckpointError) as ctx:
            checkpoint.load(self.root, expected=self.config.with_overrides(static_graph=True))
        self.assertIn("static_graph", str(ctx.exception))


class AblationTests(unittest.TestCase):
    def test_every_flag_changes_the_model(self):
        config = toy_config()
        data = toy_bundle(config)
        full = assemble_model(config, data.adjacency, data.scaler)
        self.assertEqual(sorted(flag for _, o in VARIANTS for flag in o if flag in ABLATION_FLAGS), sorted(ABLATION_FLAGS))
        for name, overrides in VARIANTS[1:]:
            with self.subTest(variant=name):
                variant = assemble_model(variant_config(config, overrides), data.adjacency, data.scaler)
                self.assertNotEqual(variant.num_parameters(), full.num_parameters())

    def test_variants_clear_other_flags(self):
        config = toy_config(static_graph=True)
        self.assertFalse(variant_config(config, {}).static_graph)
        self.assertEqual(variant_config(config, {"no_real_graph": True}).ablations()["no_real_graph"], True)

    def test_single_embed_scores_are_symmetric(self):
        config = toy_config(single_embed=True)
        model = assemble_model(config, toy_bundle(config).adjacency)
        scores = model.build_graphs().scores1.data
        np.testing.assert_array_equal(scores, scores.T)


@unittest.skipUnless(SLOW, "set GENSHIN_SLOW_TESTS=1 for training experiments")
class TrainingExperimentTests(unittest.TestCase):
    def test_overfits_a_periodic_series(self):
        config = toy_config()
        data = toy_bundle(config, n_steps=240)
        report = fit(config, data)
        self.assertLess(report.test.normalized_mae, 0.05)
        smoothed = np.convolve(report.train_loss, np.ones(5) / 5, mode="valid")
        self.assertLess(smoothed[-1], smoothed[0])

    def _train_on_planted_edges(self, edges, **overrides):
        raw = generate_synthetic(8, 600, SyntheticPattern(period=24, noise_std=0.05, edges=edges), seed=0)
        raw = raw.model_copy(update={"adjacency": np.eye(8)})
        config = toy_config(epochs=100, patience=100, **overrides)
        data = make_windows(raw, config.window, config.horizon, config.ratios)
        model = assemble_model(config, data.adjacency, data.scaler)
        fit(config, data, model=model)
        return model.build_graphs().learned1.data

    def test_learned_graph_follows_planted_direction(self):
        edges = [PlantedEdge(source=0, target=3, lag=1, weight=0.8), PlantedEdge(source=2, target=5, lag=1, weight=0.8)]
        learned = self._train_on_planted_edges(edges)
        for edge in edges:
            with self.subTest(edge=(edge.source, edge.target)):
                row = learned[edge.target]
                off_diagonal = np.delete(row, edge.target).mean()
                self.assertGreaterEqual(row[edge.source], 2.0 * off_diagonal)
        tied = self._train_on_planted_edges(edges, single_embed=True)
        self.assertGreater(np.linalg.norm(learned - learned.T), np.linalg.norm(tied - tied.T))


@unittest.skipUnless(SLOW and METR_LA_DIR, "set GENSHIN_SLOW_TESTS=1 and GENSHIN_METR_LA to a dataset directory")
class MetrLaSmokeTests(unittest.TestCase):
    def test_reference_model_forecasts_one_window(self):
        config = load_config(METR_LA_CONFIG)
        raw = load_dataset(METR_LA_DIR)
        data = make_windows(raw, config.window, config.horizon, config.ratios)
        model = assemble_model(config, data.adjacency, data.scaler)
        values = predict(model, data.test.x[:1], normalized=True).values
        self.assertEqual(values.shape, (1, config.horizon, config.n_nodes, raw.values.shape[2]))
        self.assertTrue(np.all(np.isfinite(values)))

    def test_historical_average_final_step(self):
        config = load_config(METR_LA_CONFIG)
        data = make_windows(load_dataset(METR_LA_DIR), config.window, config.horizon, config.ratios)
        period = default_period(data.interval_minutes, data.timestamps is not None)
        prediction = historical_average(data.train.raw, data.test.target_start, config.horizon, period)
        report = metrics(prediction, data.test.y_raw, config.null_value)
        self.assertLess(abs(report.final_step.mae - 4.16), 0.416)


if __name__ == "__main__":
    unittest.main()
