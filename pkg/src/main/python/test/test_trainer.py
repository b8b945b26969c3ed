import unittest

import numpy as np

from dataset.cifar import Dataset
from dataset.split import RegimeSpec, Splits
from hebbian.hpca import HpcaConfig
from network.config import dense_config, toy_config
from network.network import build
from trainer.finetune import EmptySplitError, TrainReport, classify_accuracy, finetune
from trainer.protocol import ExperimentConfig, prepare_base, run_protocol
from trainer.sgd import SgdConfig, sgd_step, zero_velocity, apply_gradients
from util import make_rng


def toy_dataset(count, seed, num_classes=2, tag="train"):
    """ 8x8 images whose mean brightness encodes the label """
    rng = make_rng(seed)
    labels = np.arange(count) % num_classes
    images = rng.normal(size=(count, 3, 8, 8)) + labels[:, None, None, None] - (num_classes - 1) / 2
    return Dataset(images.astype(np.float32), labels, num_classes, tag)


class CountingDataset(Dataset):
    """ Records every index whose image is read """

    def __init__(self, images, labels, num_classes, tag="train"):
        super().__init__(images, labels, num_classes, tag)
        self.reads = set()

    def raw_at(self, idx):
        self.reads.update(np.atleast_1d(idx).tolist())
        return super().raw_at(idx)


def toy_sgd(**kwargs):
    cfg = dict(lr0=0.01, epochs=20, batch_size=10, weight_decay=0.0, dropout_rate=0.0)
    cfg.update(kwargs)
    return SgdConfig(**cfg)


class TestSchedule(unittest.TestCase):

    def test_closed_form(self):
        cfg = SgdConfig(lr0=1e-3)
        for epoch in range(1, 21):
            expected = 1e-3 if epoch <= 10 else 1e-3 * 2.0 ** -((epoch - 10) // 2)
            self.assertEqual(cfg.learning_rate(epoch), expected)
        self.assertEqual(cfg.learning_rate(12), 5e-4)
        self.assertEqual(cfg.learning_rate(20), 1e-3 / 32)

    def test_invalid_config(self):
        with self.assertRaises(ValueError):
            SgdConfig(lr0=0)
        with self.assertRaises(ValueError):
            SgdConfig(momentum=1.0)


class TestSgdStep(unittest.TestCase):

    def test_zero_everything(self):
        p = np.array([1.0, -2.0])
        new, v = sgd_step(p, np.zeros(2), np.zeros(2), 0.1, SgdConfig(weight_decay=0.0))
        np.testing.assert_array_equal(new, p)
        np.testing.assert_array_equal(v, [0, 0])

    def test_plain_gradient_descent(self):
        p = np.array([1.0, -2.0])
        g = np.array([0.5, 0.25])
        new, _ = sgd_step(p, g, np.zeros(2), 0.1, SgdConfig(momentum=0.0, weight_decay=0.0))
        np.testing.assert_allclose(new, p - 0.1 * g)

    def test_two_steps_on_quadratic(self):
        # f(p) = p^2, grad 2p, lr 0.1, momentum 0.9, Nesterov
        cfg = SgdConfig(momentum=0.9, weight_decay=0.0)
        p, v = np.array([1.0]), np.zeros(1)
        p, v = sgd_step(p, 2 * p, v, 0.1, cfg)
        self.assertAlmostEqual(p[0], 0.62)
        self.assertAlmostEqual(v[0], -0.2)
        p, v = sgd_step(p, 2 * p, v, 0.1, cfg)
        self.assertAlmostEqual(p[0], 0.2224)
        self.assertAlmostEqual(v[0], -0.304)

    def test_weight_decay_shrink_factor(self):
        network = build(toy_config(num_classes=3), make_rng(1), np.float64)
        before = {(i, n): a.copy() for i, n, a in network.params()}
        cfg = SgdConfig(weight_decay=5e-2, momentum=0.9)
        grads = {i: {n: np.zeros_like(a) for n, a in network.layers[i].params().items()}
                 for i in network.trainable_indices()}
        apply_gradients(network, grads, zero_velocity(network), 0.1, cfg)
        factor = 1 - 0.1 * 5e-2 * (1 + 0.9)
        for index, name, arr in network.params():
            if name == "weights":
                np.testing.assert_allclose(arr, before[(index, name)] * factor, rtol=1e-12)
            else:
                np.testing.assert_array_equal(arr, before[(index, name)])


class TestClassifyAccuracy(unittest.TestCase):

    def test_perfect_network(self):
        network = build(dense_config(2, 2), make_rng(2), np.float64)
        for layer in (network.layers[0], network.layers[1]):
            layer.set_params(np.eye(2), np.zeros(2))
        x = np.array([[5.0, 0.0], [0.0, 5.0], [3.0, 1.0]])
        self.assertEqual(classify_accuracy(network, Dataset(x, np.array([0, 1, 0]), 2)), 1.0)

    def test_constant_logits(self):
        network = build(dense_config(2, 2, num_classes=3), make_rng(3), np.float64)
        for layer in network.layers:
            layer.set_params(np.zeros_like(layer.weights), np.zeros_like(layer.bias))
        labels = np.array([0, 1, 2, 0, 2, 2])
        x = make_rng(4).normal(size=(6, 2))
        self.assertAlmostEqual(classify_accuracy(network, Dataset(x, labels, 3)), 2 / 6)

    def test_random_network_is_chance(self):
        network = build(toy_config(num_classes=10), make_rng(5))
        data = toy_dataset(1000, 6, num_classes=10)
        labels = make_rng(7).permutation(np.arange(1000) % 10)
        shuffled = Dataset(data.raw_at(np.arange(1000)), labels, 10)
        self.assertLess(abs(classify_accuracy(network, shuffled) - 0.1), 0.03)


class TestFinetune(unittest.TestCase):

    def setUp(self):
        self.train = toy_dataset(50, 8)
        self.validation = toy_dataset(40, 9, tag="validation")

    def test_zero_epochs(self):
        network = build(toy_config(num_classes=2), make_rng(10))
        best, report = finetune(network, self.train, self.validation, toy_sgd(epochs=0), make_rng(11))
        self.assertEqual(report.epochs, 0)
        for (_, _, a), (_, _, b) in zip(network.params(), best.params()):
            np.testing.assert_array_equal(a, b)

    def test_loss_decreases(self):
        network = build(toy_config(num_classes=2), make_rng(12))
        _, report = finetune(network, self.train, self.validation, toy_sgd(), make_rng(13))
        self.assertEqual(report.epochs, 20)
        self.assertLess(report.train_loss[-1], report.train_loss[0])

    def test_input_network_untouched(self):
        network = build(toy_config(num_classes=2), make_rng(14))
        before = [a.copy() for _, _, a in network.params()]
        finetune(network, self.train, self.validation, toy_sgd(epochs=2), make_rng(15))
        for old, (_, _, new) in zip(before, network.params()):
            np.testing.assert_array_equal(old, new)

    def test_deterministic(self):
        reports = []
        for _ in range(2):
            network = build(toy_config(num_classes=2, dropout_rate=0.5), make_rng(16))
            _, report = finetune(network, self.train, self.validation, toy_sgd(epochs=4, dropout_rate=0.5),
                                 make_rng(17))
            reports.append(report.to_dict())
        self.assertEqual(reports[0], reports[1])

    def test_early_stopping_returns_best(self):
        network = build(toy_config(num_classes=2), make_rng(18))
        best, report = finetune(network, self.train, self.validation, toy_sgd(epochs=8), make_rng(19))
        accuracy = report.validation_accuracy
        self.assertEqual(report.best_epoch, int(np.argmax(accuracy)) + 1)
        self.assertEqual(report.best_checkpoint_id, "epoch-{}".format(report.best_epoch))
        self.assertEqual(classify_accuracy(best, self.validation), accuracy[report.best_epoch - 1])

    def test_reads_only_labeled_and_validation(self):
        full = toy_dataset(90, 20)
        counting = CountingDataset(full.raw_at(np.arange(90)), full.labels, 2)
        labeled_idx = np.arange(0, 30)
        validation_idx = np.arange(60, 90)
        network = build(toy_config(num_classes=2), make_rng(21))
        finetune(network, counting.subset(labeled_idx), counting.subset(validation_idx, "validation"),
                 toy_sgd(epochs=2), make_rng(22))
        self.assertTrue(counting.reads)
        self.assertTrue(counting.reads <= set(labeled_idx.tolist()) | set(validation_idx.tolist()))

    def test_resume_matches_uninterrupted(self):
        cfg = toy_sgd(epochs=6, dropout_rate=0.5)
        network = build(toy_config(num_classes=2, dropout_rate=0.5), make_rng(23))
        full_best, full_report = finetune(network, self.train, self.validation, cfg, make_rng(24))

        captured = []
        finetune(network, self.train, self.validation, cfg, make_rng(24), stop_after=3,
                 on_epoch=lambda epoch, state: captured.append(state))
        state = captured[-1]
        self.assertEqual(state.epoch, 3)
        best, report = finetune(network, self.train, self.validation, cfg, None, resume=state)

        self.assertEqual(report.to_dict(), full_report.to_dict())
        for (_, _, a), (_, _, b) in zip(full_best.params(), best.params()):
            np.testing.assert_array_equal(a, b)

    def test_no_test_accuracy_from_finetune(self):
        network = build(toy_config(num_classes=2), make_rng(25))
        _, report = finetune(network, self.train, self.validation, toy_sgd(epochs=2), make_rng(26))
        self.assertIsNone(report.test_accuracy)

    def test_empty_labeled_split(self):
        network = build(toy_config(num_classes=2), make_rng(28))
        with self.assertRaises(EmptySplitError):
            finetune(network, self.train.subset([]), self.validation, toy_sgd(), make_rng(29))

    def test_report_round_trip(self):
        report = TrainReport()
        self.assertTrue(report.record(1, 0.9, 0.5, 1e-3))
        self.assertFalse(report.record(2, 0.8, 0.5, 1e-3))
        self.assertTrue(report.record(3, 0.7, 0.6, 1e-3))
        self.assertEqual(report.best_epoch, 3)
        self.assertEqual(TrainReport.from_dict(report.to_dict()).to_dict(), report.to_dict())


class TestProtocol(unittest.TestCase):

    def setUp(self):
        self.splits = Splits(toy_dataset(60, 30), toy_dataset(20, 31, tag="validation"),
                             toy_dataset(20, 32, tag="test"), None)
        self.cfgs = ExperimentConfig(network="toy", sgd=toy_sgd(epochs=2), hpca=HpcaConfig(epochs=1, batch_size=8))

    def test_supervised_baseline(self):
        network, report = run_protocol(self.splits, RegimeSpec(100), "none", 3, self.cfgs, make_rng(33))
        self.assertEqual(network.depth, 3)
        self.assertEqual(report.epochs, 2)
        self.assertIsNotNone(report.test_accuracy)

    def test_test_split_read_only_after_training(self):
        test = toy_dataset(20, 32, tag="test")
        counting = CountingDataset(test.raw_at(np.arange(20)), test.labels, 2, "test")
        splits = Splits(self.splits.train, self.splits.validation, counting, None)
        reads_during_training = []

        def on_epoch(epoch, state):
            reads_during_training.append(set(counting.reads))

        network, report = run_protocol(splits, RegimeSpec(100), "none", 3, self.cfgs, make_rng(37), on_epoch=on_epoch)
        self.assertEqual(reads_during_training, [set(), set()])
        self.assertEqual(counting.reads, set(range(20)))
        self.assertEqual(report.test_accuracy, classify_accuracy(network, counting))

    def test_hpca_cut(self):
        network, report = run_protocol(self.splits, RegimeSpec(25), "hpca", 2, self.cfgs, make_rng(34))
        self.assertEqual(network.depth, 2)
        self.assertEqual(network.layers[-1].weights.shape, (2, 6 * 4 * 4))

    def test_pretrain_changes_base(self):
        plain, _ = prepare_base(self.splits, "none", self.cfgs, make_rng(35))
        hebbian, stats = prepare_base(self.splits, "hpca", self.cfgs, make_rng(35))
        self.assertTrue(stats)
        self.assertFalse(np.array_equal(plain.layers[0].weights, hebbian.layers[0].weights))

    def test_unknown_mode(self):
        with self.assertRaises(ValueError):
            prepare_base(self.splits, "vae", self.cfgs, make_rng(36))


if __name__ == "__main__":
    unittest.main()
