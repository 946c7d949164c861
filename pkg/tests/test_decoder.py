import unittest

import numpy as np

from src.model.decoder import Decoder, GraphUpdater, update_graph
from src.model.graphs import is_row_stochastic, normalize_adjacency
from src.tensor import Tensor
from src.utils.errors import ConfigError, ShapeError


N_NODES, HIDDEN, MEMORY, HORIZON = 5, 4, 3, 3


def _decoder(updater: bool, seed: int = 0) -> Decoder:
    graph_updater = None
    if updater:
        graph_updater = GraphUpdater(HIDDEN + MEMORY, 6, 2, 0.1, np.random.default_rng(seed + 100))
    return Decoder(1, HIDDEN, 2, 2, np.random.default_rng(seed), memory_dim=MEMORY, updater=graph_updater)


class DecoderTests(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(7)
        self.h_t = Tensor(rng.normal(size=(2, N_NODES, HIDDEN)))
        self.h_mem = Tensor(rng.normal(size=(2, N_NODES, MEMORY)))
        self.graph = Tensor(normalize_adjacency(rng.random((N_NODES, N_NODES))))
        self.teacher = rng.normal(size=(2, HORIZON, N_NODES, 1))

    def test_rollout_shape_and_graphs(self):
        decoding = _decoder(True)(self.h_t, self.h_mem, self.graph, HORIZON, keep_graphs=True)
        self.assertEqual(decoding.prediction.shape, (2, HORIZON, N_NODES, 1))
        self.assertEqual(len(decoding.graphs), HORIZON)
        for graph in decoding.graphs:
            self.assertTrue(is_row_stochastic(graph))

    def test_graphs_are_kept_only_on_request(self):
        decoding = _decoder(True)(self.h_t, self.h_mem, self.graph, HORIZON)
        self.assertEqual(decoding.graphs, [])

    def test_zero_update_matches_static_graph(self):
        dynamic = _decoder(True)
        dynamic.updater.w_src.data[...] = 0.0
        static = _decoder(False)
        a = dynamic(self.h_t, self.h_mem, self.graph, HORIZON).prediction.data
        b = static(self.h_t, self.h_mem, self.graph, HORIZON).prediction.data
        self.assertEqual(a.tobytes(), b.tobytes())

    def test_teacher_frames_feed_the_next_step(self):
        decoder = _decoder(True)
        changed = self.teacher.copy()
        changed[:, -1] += 5.0
        base = decoder(self.h_t, self.h_mem, self.graph, HORIZON, teacher=self.teacher, tf_prob=1.0).prediction.data
        last = decoder(self.h_t, self.h_mem, self.graph, HORIZON, teacher=changed, tf_prob=1.0).prediction.data
        np.testing.assert_array_equal(base, last)

        changed = self.teacher.copy()
        changed[:, 0] += 5.0
        first = decoder(self.h_t, self.h_mem, self.graph, HORIZON, teacher=changed, tf_prob=1.0).prediction.data
        np.testing.assert_array_equal(first[:, 0], base[:, 0])
        self.assertFalse(np.array_equal(first[:, 1], base[:, 1]))

    def test_own_outputs_as_teacher_reproduce_free_running(self):
        decoder = _decoder(True)
        free = decoder(self.h_t, self.h_mem, self.graph, HORIZON).prediction.data
        forced = decoder(self.h_t, self.h_mem, self.graph, HORIZON, teacher=free.copy(), tf_prob=1.0).prediction.data
        np.testing.assert_array_equal(forced, free)


    def test_contract_errors(self):
        decoder = _decoder(True)
        cases = {
            "horizon": (lambda: decoder(self.h_t, self.h_mem, self.graph, 0), ConfigError),
            "probability": (lambda: decoder(self.h_t, self.h_mem, self.graph, 2, teacher=self.teacher, tf_prob=1.5), ConfigError),
            "no teacher": (lambda: decoder(self.h_t, self.h_mem, self.graph, 2, tf_prob=1.0), ConfigError),
            "no rng": (lambda: decoder(self.h_t, self.h_mem, self.graph, HORIZON, teacher=self.teacher, tf_prob=0.5), ConfigError),
            "no memory": (lambda: decoder(self.h_t, None, self.graph, 2), ShapeError),
            "teacher shape": (lambda: decoder(self.h_t, self.h_mem, self.graph, 2, teacher=self.teacher, tf_prob=1.0), ShapeError),
        }
        for name, (call, error) in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(error):
                    call()


class GraphUpdaterTests(unittest.TestCase):
    def test_update_is_nonnegative_and_renormalized(self):
        rng = np.random.default_rng(0)
        updater = GraphUpdater(HIDDEN, 6, 2, 0.1, rng)
        h = Tensor(rng.normal(size=(3, N_NODES, HIDDEN)))
        delta = updater.delta(h, None)
        self.assertEqual(delta.shape, (N_NODES, N_NODES))
        self.assertTrue(np.all(delta.data >= 0))
        a_prev = Tensor(normalize_adjacency(rng.random((N_NODES, N_NODES))))
        self.assertTrue(is_row_stochastic(update_graph(h, None, a_prev, updater).data))


if __name__ == "__main__":
    unittest.main()
