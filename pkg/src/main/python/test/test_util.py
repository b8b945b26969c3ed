import logging
import os
import tempfile
import unittest
from logging.handlers import RotatingFileHandler

import numpy as np

from util import app_version, batch_indices, init_logger, make_rng, rng_from_state, rng_state


class TestRng(unittest.TestCase):

    def test_seed_range(self):
        make_rng(0)
        make_rng(2 ** 64 - 1)
        for seed in (-1, 2 ** 64):
            with self.assertRaises(ValueError):
                make_rng(seed)

    def test_state_round_trip(self):
        rng = make_rng(7)
        rng.normal(size=3)
        again = rng_from_state(rng_state(rng))
        np.testing.assert_array_equal(again.integers(0, 1000, 10), rng.integers(0, 1000, 10))

    def test_foreign_generator(self):
        state = np.random.Generator(np.random.MT19937(1)).bit_generator.state
        with self.assertRaises(ValueError):
            rng_from_state(state)


class TestBatches(unittest.TestCase):

    def test_permutation_with_partial_batch(self):
        batches = list(batch_indices(10, 4, make_rng(1)))
        self.assertEqual([len(b) for b in batches], [4, 4, 2])
        self.assertEqual(sorted(np.concatenate(batches).tolist()), list(range(10)))

    def test_empty(self):
        self.assertEqual(list(batch_indices(0, 4, make_rng(1))), [])


class TestLogger(unittest.TestCase):

    def tearDown(self):
        root = logging.getLogger()
        for handler in [h for h in root.handlers if isinstance(h, RotatingFileHandler)]:
            root.removeHandler(handler)
            handler.close()

    def test_single_file_handler(self):
        with tempfile.TemporaryDirectory() as tmp:
            init_logger(log_dir=os.path.join(tmp, "a"))
            init_logger(log_dir=os.path.join(tmp, "b"))
            handlers = [h for h in logging.getLogger().handlers if isinstance(h, RotatingFileHandler)]
            self.assertEqual(len(handlers), 1)
            self.assertTrue(handlers[0].baseFilename.startswith(os.path.join(tmp, "b")))
            self.tearDown()

    def test_version(self):
        self.assertEqual(app_version(), "0.1.0")


if __name__ == "__main__":
    unittest.main()
