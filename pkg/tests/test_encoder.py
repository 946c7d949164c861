import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from src.model.encoder import GCRUCell, STEncoder, gcru_cell
from src.model.graphs import chebyshev_supports, normalize_adjacency
from src.model.transformer import TemporalTransformer, sinusoidal_encoding
from src.tensor import Tensor
from src.utils.errors import ShapeError


N_NODES = 5


def _supports(order: int = 2, seed: int = 0) -> list[Tensor]:
    adjacency = normalize_adjacency(np.random.default_rng(seed).random((N_NODES, N_NODES)))
    return chebyshev_supports(adjacency, order)


class GCRUCellTests(unittest.TestCase):
    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_gates_in_range_and_state_is_convex(self, seed):
        rng = np.random.default_rng(seed)
        cell = GCRUCell(2, 4, 3, rng)
        x = Tensor(rng.uniform(-3, 3, size=(3, N_NODES, 2)))
        h = Tensor(rng.uniform(-1, 1, size=(3, N_NODES, 4)))
        gates = cell.step(x, h, _supports(seed=seed % 7))
        for name in ("update", "reset"):
            values = getattr(gates, name).data
            self.assertTrue(np.all((values >= 0) & (values <= 1)), name)
        self.assertTrue(np.all(np.abs(gates.candidate.data) <= 1))
        low = np.minimum(h.data, gates.candidate.data) - 1e-12
        high = np.maximum(h.data, gates.candidate.data) + 1e-12
        self.assertTrue(np.all((gates.hidden.data >= low) & (gates.hidden.data <= high)))

    def test_function_form_matches_cell(self):
        rng = np.random.default_rng(0)
        cell = GCRUCell(1, 3, 3, rng)
        x, h = rng.normal(size=(2, N_NODES, 1)), rng.normal(size=(2, N_NODES, 3))
        supports = _supports()
        np.testing.assert_array_equal(
            gcru_cell(x, h, supports, cell).data, cell(Tensor(x), Tensor(h), supports).data
        )

    def test_shape_contract(self):
        cell = GCRUCell(1, 3, 3, np.random.default_rng(0))
        x, h = Tensor(np.zeros((2, N_NODES, 1))), Tensor(np.zeros((2, N_NODES, 3)))
        with self.assertRaises(ShapeError):
            cell(x, h, _supports(order=1))
        with self.assertRaises(ShapeError):
            cell(Tensor(np.zeros((2, N_NODES, 2))), h, _supports())

    def test_gates_over_a_thousand_samples(self):
        rng = np.random.default_rng(11)
        cell = GCRUCell(2, 4, 3, rng)
        h = Tensor(rng.uniform(-1, 1, size=(1000, N_NODES, 4)))
        gates = cell.step(Tensor(rng.uniform(-3, 3, size=(1000, N_NODES, 2))), h, _supports())
        self.assertTrue(np.all((gates.update.data >= 0) & (gates.update.data <= 1)))
        self.assertTrue(np.all((gates.reset.data >= 0) & (gates.reset.data <= 1)))
        self.assertTrue(np.all(np.abs(gates.candidate.data) <= 1))
        low = np.minimum(h.data, gates.candidate.data) - 1e-12
        high = np.maximum(h.data, gates.candidate.data) + 1e-12
        self.assertTrue(np.all((gates.hidden.data >= low) & (gates.hidden.data <= high)))

    def test_update_gate_endpoints(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(2, N_NODES, 1)))
        h = Tensor(rng.uniform(-1, 1, size=(2, N_NODES, 3)))
        for bias, keeps in ((1000.0, "previous"), (-1000.0, "candidate")):
            with self.subTest(update_bias=bias):
                cell = GCRUCell(1, 3, 3, np.random.default_rng(0))
                cell.w_z.data[...] = 0.0
                cell.b_z.data[...] = bias
                gates = cell.step(x, h, _supports())
                expected = h.data if keeps == "previous" else gates.candidate.data
                np.testing.assert_array_equal(gates.hidden.data, expected)

        with self.subTest(case="zero weights on the identity support"):
            cell = GCRUCell(1, 3, 1, np.random.default_rng(0))
            for name in ("w_z", "w_r", "w_h"):
                getattr(cell, name).data[...] = 0.0
            hidden = cell(x, h, [Tensor(np.eye(N_NODES))])
            np.testing.assert_array_equal(hidden.data, 0.5 * h.data)


class EncoderTests(unittest.TestCase):
    def test_shapes_and_attention(self):
        rng = np.random.default_rng(0)
        transformer = TemporalTransformer(4, 2, 8, 2, max_len=6, rng=rng)
        encoder = STEncoder(1, 4, 2, 3, rng, transformer)
        x = rng.normal(size=(2, 6, N_NODES, 1))
        encoding = encoder(x, _supports())
        self.assertEqual(encoding.sequence.shape, (2, 6, N_NODES, 4))
        self.assertEqual(encoding.final.shape, (2, N_NODES, 4))
        self.assertEqual(len(encoding.layer_states), 2)
        self.assertEqual(len(encoding.attention), 2)
        for weights in encoding.attention:
            self.assertEqual(weights.shape, (2, N_NODES, 2, 6, 6))
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_without_transformer_the_last_state_is_the_encoding(self):
        rng = np.random.default_rng(0)
        encoder = STEncoder(1, 4, 2, 3, rng)
        encoding = encoder(rng.normal(size=(2, 4, N_NODES, 1)), _supports())
        np.testing.assert_array_equal(encoding.final.data, encoding.sequence.data[:, -1])
        np.testing.assert_array_equal(encoding.final.data, encoding.layer_states[-1].data)
        self.assertEqual(encoding.attention, [])

    def test_rank_is_checked(self):
        encoder = STEncoder(1, 4, 1, 3, np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            encoder(np.zeros((4, N_NODES, 1)), _supports())


class TransformerTests(unittest.TestCase):
    def test_positional_table(self):
        table = sinusoidal_encoding(5, 6)
        self.assertEqual(table.shape, (5, 6))
        np.testing.assert_array_equal(table[0, 0::2], 0.0)
        np.testing.assert_array_equal(table[0, 1::2], 1.0)

    def test_sequence_longer_than_table(self):
        transformer = TemporalTransformer(4, 2, 8, 1, max_len=3, rng=np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            transformer(Tensor(np.zeros((1, 4, 2, 4))))

    def test_evaluation_mode_is_deterministic(self):
        rng = np.random.default_rng(0)
        transformer = TemporalTransformer(4, 2, 8, 1, max_len=3, rng=rng, dropout=0.5)
        x = Tensor(rng.normal(size=(1, 3, 2, 4)))
        first, _ = transformer(x)
        second, _ = transformer(x)
        np.testing.assert_array_equal(first.data, second.data)

    def test_single_step_attends_to_itself(self):
        transformer = TemporalTransformer(4, 2, 8, 1, max_len=3, rng=np.random.default_rng(0))
        _, attention = transformer(Tensor(np.random.default_rng(1).normal(size=(2, 1, 3, 4))))
        self.assertEqual(attention[0].shape, (2, 3, 2, 1, 1))
        np.testing.assert_array_equal(attention[0], 1.0)


if __name__ == "__main__":
    unittest.main()
