import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.tensor import Tensor
from src.tensor.serialization import decode_tensor, encode_tensor, read_tensor, write_tensor
from src.utils.errors import TensorFormatError


class TensorFormatTests(unittest.TestCase):
    def test_bits_survive(self):
        values = np.array([[0.0, -0.0, 5e-324], [np.pi, -1e300, 1.0 / 3.0]])
        decoded = decode_tensor(encode_tensor(values))
        self.assertEqual(decoded.shape, (2, 3))
        self.assertEqual(decoded.tobytes(), values.astype("<f8").tobytes())

    def test_header_layout(self):
        buffer = encode_tensor(Tensor(np.ones((2, 3))))
        self.assertEqual(buffer[:4], b"GSTN")
        self.assertEqual(struct.unpack_from("<II", buffer, 4), (1, 2))
        self.assertEqual(struct.unpack_from("<QQ", buffer, 12), (2, 3))
        self.assertEqual(len(buffer), 12 + 16 + 6 * 8)

    def test_scalar(self):
        self.assertEqual(decode_tensor(encode_tensor(np.array(2.5))).shape, ())

    def test_corruption_is_reported_with_offset(self):
        good = encode_tensor(np.ones((2, 2)))
        cases = {
            "magic": (b"XXXX" + good[4:], "offset 0"),
            "version": (good[:4] + struct.pack("<I", 9) + good[8:], "offset 4"),
            "header": (good[:6], "offset 0"),
            "dims": (good[:16], "offset 12"),
            "payload": (good[:-8], "offset 28"),
            "trailing": (good + b"\0" * 8, "offset 28"),
        }
        for name, (buffer, where) in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(TensorFormatError) as ctx:
                    decode_tensor(buffer, source="t.bin")
                self.assertIn("t.bin", str(ctx.exception))
                self.assertIn(where, str(ctx.exception))

    def test_empty_dimension_is_rejected(self):
        with self.assertRaises(TensorFormatError):
            encode_tensor(np.ones((0, 3)))

    def test_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "nested" / "a.bin"
            values = np.arange(24.0).reshape(2, 3, 4)
            write_tensor(path, values)
            np.testing.assert_array_equal(read_tensor(path), values)
            with self.assertRaises(TensorFormatError) as ctx:
                read_tensor(Path(tmp) / "missing.bin")
            self.assertIn("missing.bin", str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
