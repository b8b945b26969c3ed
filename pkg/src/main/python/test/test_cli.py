import contextlib
import io
import math
import os
import tempfile
import unittest
from unittest import mock

import numpy as np

import main
from cli.commands import UsageError, check_values, parse_args, read_image, run, stem
from cli.stats import mean_interval, most_common
from cli.tables import SummaryRow, format_table
from constants import APP_HOME_ENV, DATA_DIR_ENV, EXIT_FAILURE, EXIT_OK, EXIT_USAGE
from dataset.cifar import Dataset, serialize_records, to_float
from dataset.split import normalize_splits, split_train_validation
from network.config import small_config
from network.network import build
from persistence.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from persistence.features import load_features, save_features
from persistence.metrics_log import read_metrics
from persistence.run_config import read_run_file
from retrieval.store import FeatureStore
from util import make_rng


def fake_load_splits(directory, name, seed, limit=None, strict=True):
    """ 120 train and 20 test records of random pixels, split and normalized like load_splits """
    rng = make_rng(1000)
    pixels = rng.integers(0, 256, size=(140, 3, 32, 32), dtype=np.uint8)
    labels = np.arange(140) % 10
    full = Dataset(pixels[:120], labels[:120], 10, "train", name=name)
    test = Dataset(pixels[120:], labels[120:], 10, "test", name=name)
    train, validation = split_train_validation(full, seed)
    return normalize_splits(train, validation, test)


class CliTestCase(unittest.TestCase):
    """ Temporary working directory, log home and no data directory from the environment """

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        env = {k: v for k, v in os.environ.items() if k != DATA_DIR_ENV}
        env[APP_HOME_ENV] = os.path.join(self.tmp.name, "home")
        self.env = mock.patch.dict(os.environ, env, clear=True)
        self.env.start()

    def tearDown(self):
        self.env.stop()
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main.main(list(argv))
        return code, out.getvalue(), err.getvalue()


class TestStats(unittest.TestCase):

    def test_single_run_has_no_interval(self):
        self.assertEqual(mean_interval([0.42]), (0.42, None))

    def test_student_t_interval(self):
        values = [0.5, 0.6, 0.55, 0.65, 0.7]
        mean, half = mean_interval(values)
        self.assertAlmostEqual(mean, 0.6)
        sd = math.sqrt(0.025 / 4)
        self.assertAlmostEqual(half, 2.7764451051977987 * sd / math.sqrt(5))

    def test_empty(self):
        with self.assertRaises(ValueError):
            mean_interval([])

    def test_most_common(self):
        self.assertEqual(most_common([3, 1, 3, 1, 2]), 1)
        self.assertEqual(most_common([5, 5, 4]), 5)


class TestTables(unittest.TestCase):

    def test_cells(self):
        row = SummaryRow(5, "hpca")
        row.add(0.5, 3)
        self.assertEqual(row.cells(), ["5%", "HPCA", "50.00", "3"])
        row.add(0.7, 2)
        row.add(0.6, 2)
        cells = row.cells()
        self.assertTrue(cells[2].startswith("60.00 ± "))
        self.assertEqual(cells[3], "2")

    def test_format_table(self):
        rows = [SummaryRow(1, "none"), SummaryRow(100, "hpca")]
        rows[0].add(0.123, 5)
        rows[1].add(0.5, 1)
        lines = format_table(rows, title="cifar10").splitlines()
        self.assertEqual(lines[0], "cifar10")
        self.assertEqual(lines[1].split(), ["Regime", "Pre-train", "mAP", "Layer"])
        self.assertEqual(set(lines[2].replace(" ", "")), {"-"})
        self.assertEqual(lines[3].split(), ["1%", "None", "12.30", "5"])
        self.assertEqual(lines[4].split(), ["100%", "HPCA", "50.00", "1"])


class TestParseArgs(CliTestCase):

    def test_defaults(self):
        values = parse_args(["finetune", "--data-dir", self.tmp.name])
        self.assertEqual(values["command"], "finetune")
        self.assertEqual((values["regime"], values["layer"], values["from"]), (100, 5, "none"))
        self.assertIsNone(values["sgd_lr0"])

    def test_no_command(self):
        with self.assertRaises(UsageError):
            parse_args([])

    def test_config_file_with_flag_override(self):
        with open(self.path("a.run"), "w") as outf:
            outf.write("command = finetune\nregime = 5\nsgd-epochs = 2 * 3\nlayer = 2\n")
        values = parse_args(["finetune", "--config", self.path("a.run"), "--layer", "4"])
        self.assertEqual((values["regime"], values["sgd_epochs"], values["layer"]), (5, 6, 4))

    def test_config_for_other_command(self):
        with open(self.path("b.run"), "w") as outf:
            outf.write("command = pretrain\n")
        with self.assertRaises(UsageError):
            parse_args(["finetune", "--config", self.path("b.run")])

    def test_config_unknown_key(self):
        with open(self.path("c.run"), "w") as outf:
            outf.write("regime = 5\nlearning_rate = 3\n")
        with self.assertRaises(UsageError) as cm:
            parse_args(["finetune", "--config", self.path("c.run")])
        self.assertIn("learning_rate", str(cm.exception))

    def test_check_values(self):
        for argv in (["finetune", "--regime", "7"], ["finetune", "--layer", "6"], ["finetune", "--limit", "5"],
                     ["finetune", "--from", self.path("missing.ckpt")], ["query", "--topk", "0"],
                     ["sweep", "--selection-samples", "0"], ["pretrain", "--pretrain-samples", "0"],
                     ["pretrain", "--out", self.path("no/such/dir/x")]):
            with self.assertRaises(UsageError, msg=" ".join(argv)):
                check_values(parse_args(argv))

    def test_stem(self):
        self.assertEqual(stem("runs/a.ckpt"), "runs/a")
        self.assertEqual(stem("runs/a.metrics.csv"), "runs/a")
        self.assertEqual(stem("runs/a.last.ckpt"), "runs/a.last")
        self.assertEqual(stem("runs/a"), "runs/a")


class TestMain(CliTestCase):

    def test_usage_error_exit_code(self):
        code, _, err = self.run_cli("finetune", "--regime", "7")
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("--regime", err)

    def test_missing_data_dir(self):
        code, _, err = self.run_cli("pretrain", "--out", self.path("p"))
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn(DATA_DIR_ENV, err)

    def test_failure_exit_code(self):
        with open(self.path("junk.feat"), "wb") as outf:
            outf.write(b"not a container at all")
        code, _, _ = self.run_cli("eval-map", "--feat", self.path("junk.feat"), "--query-feat",
                                  self.path("junk.feat"))
        self.assertEqual(code, EXIT_FAILURE)

    def test_log_file_written(self):
        self.run_cli("finetune", "--regime", "7")
        self.assertTrue(os.path.isfile(os.path.join(os.environ[APP_HOME_ENV], "hebbcbir.log")))


class TestFeatureCommands(CliTestCase):

    def setUp(self):
        super().setUp()
        self.features = np.repeat(np.eye(3) * 10, 4, axis=0).astype(np.float32)
        self.labels = np.repeat(np.arange(3), 4)
        save_features(self.path("db.feat"), FeatureStore(self.features, self.labels, 2))
        save_features(self.path("q.feat"), FeatureStore(self.features[::4], self.labels[::4], 2, "test"))

    def test_eval_map_on_feature_files(self):
        code, out, _ = self.run_cli("eval-map", "--feat", self.path("db.feat"), "--query-feat", self.path("q.feat"),
                                    "--out", self.path("ev"))
        self.assertEqual(code, EXIT_OK)
        self.assertIn("mAP=1.0 ", out)
        self.assertIn("queries=3", out)
        self.assertEqual(read_metrics(self.path("ev.metrics.csv"))[0].value, 1.0)
        self.assertEqual(read_run_file(self.path("ev.run"))["command"], "eval-map")

    def test_query_identical_feature_vector(self):
        np.save(self.path("v.npy"), self.features[5])
        code, out, _ = self.run_cli("query", "--feat", self.path("db.feat"), "--image", self.path("v.npy"),
                                    "--topk", "2")
        self.assertEqual(code, EXIT_OK)
        lines = [line.split("\t") for line in out.splitlines()]
        self.assertEqual(len(lines), 2)
        self.assertEqual(lines[0], ["1", "4", "1", "0.0"])

    def test_topk_clamped(self):
        np.save(self.path("v.npy"), self.features[0])
        with self.assertLogs(level="WARNING") as logs:
            code, out, _ = self.run_cli("query", "--feat", self.path("db.feat"), "--image", self.path("v.npy"),
                                        "--topk", "50")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(out.splitlines()), 12)
        self.assertTrue(any("clamped" in line for line in logs.output))

    def test_query_wrong_vector_size(self):
        np.save(self.path("v.npy"), np.zeros(7, np.float32))
        code, _, _ = self.run_cli("query", "--feat", self.path("db.feat"), "--image", self.path("v.npy"))
        self.assertEqual(code, EXIT_USAGE)


class TestImageQuery(CliTestCase):

    def setUp(self):
        super().setUp()
        normalization = [[0.5, 0.4, 0.3], [0.25, 0.2, 0.3]]
        network = build(small_config(), make_rng(1))
        save_checkpoint(self.path("n.ckpt"), Checkpoint.from_network(
            network, provenance={"phase": "init", "normalization": normalization}))
        loaded = load_checkpoint(self.path("n.ckpt")).to_network()
        self.images = make_rng(2).integers(0, 256, size=(6, 3, 32, 32), dtype=np.uint8)
        rows = [loaded.extract_features(to_float(image[None], normalization), 3)[0] for image in self.images]
        save_features(self.path("img.feat"), FeatureStore(np.stack(rows), np.arange(6) % 2, 3))

    def test_npy_image(self):
        np.save(self.path("i.npy"), self.images[2])
        code, out, _ = self.run_cli("query", "--feat", self.path("img.feat"), "--ckpt", self.path("n.ckpt"),
                                    "--image", self.path("i.npy"), "--topk", "3")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.splitlines()[0].split("\t"), ["1", "2", "0", "0.0"])

    def test_cifar_record(self):
        with open(self.path("one.bin"), "wb") as outf:
            outf.write(serialize_records(self.images[4:5], [7]))
        np.testing.assert_array_equal(read_image(self.path("one.bin")), self.images[4])
        code, out, _ = self.run_cli("query", "--feat", self.path("img.feat"), "--ckpt", self.path("n.ckpt"),
                                    "--image", self.path("one.bin"))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.splitlines()[0].split("\t")[:2], ["1", "4"])

    def test_image_needs_checkpoint(self):
        np.save(self.path("i.npy"), self.images[0])
        code, _, _ = self.run_cli("query", "--feat", self.path("img.feat"), "--image", self.path("i.npy"))
        self.assertEqual(code, EXIT_USAGE)


@mock.patch("cli.commands.load_splits", fake_load_splits)
class TestPipeline(CliTestCase):

    def common(self):
        return ["--data-dir", self.tmp.name, "--network", "small", "--sgd-epochs", "2", "--hpca-epochs", "1",
                "--seed", "3"]

    def read(self, name):
        with open(self.path(name), "rb") as inf:
            return inf.read()

    def test_pretrain_finetune_extract(self):
        code, out, _ = self.run_cli("pretrain", "--out", self.path("pre"), *self.common())
        self.assertEqual(code, EXIT_OK)
        self.assertIn("sha256=", out)
        pre = load_checkpoint(self.path("pre.ckpt"))
        self.assertEqual(pre.phase, "pretrained")
        self.assertTrue(any(row.metric == "layer0.representation_error"
                            for row in read_metrics(self.path("pre.metrics.csv"))))

        code, _, _ = self.run_cli("finetune", "--from", self.path("pre.ckpt"), "--regime", "25", "--layer", "2",
                                  "--out", self.path("ft"), *self.common())
        self.assertEqual(code, EXIT_OK)
        ft = load_checkpoint(self.path("ft.ckpt"))
        self.assertEqual(ft.provenance["pretrain_mode"], "hpca")
        self.assertEqual(ft.to_network().depth, 2)
        self.assertTrue(os.path.isfile(self.path("ft.last.ckpt")))
        self.assertEqual(read_run_file(self.path("ft.run"))["regime"], 25)

        # the written run file reproduces the checkpoint byte for byte
        code, _, _ = self.run_cli("finetune", "--config", self.path("ft.run"), "--out", self.path("again"))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(self.read("again.ckpt"), self.read("ft.ckpt"))

        code, out, _ = self.run_cli("extract", "--ckpt", self.path("ft.ckpt"), "--split", "test",
                                    "--data-dir", self.tmp.name, "--out", self.path("test"))
        self.assertEqual(code, EXIT_OK)
        store = load_features(self.path("test.feat"))
        self.assertEqual((len(store), store.layer_k), (20, 2))

        code, out, _ = self.run_cli("eval-map", "--ckpt", self.path("ft.ckpt"), "--data-dir", self.tmp.name)
        self.assertEqual(code, EXIT_OK)
        self.assertIn("layer=2", out)

    def test_resume_matches_uninterrupted(self):
        args = ["--regime", "100", "--layer", "3"] + self.common()
        self.assertEqual(self.run_cli("finetune", "--out", self.path("full"), *args)[0], EXIT_OK)
        self.assertEqual(self.run_cli("finetune", "--out", self.path("cut"), "--stop-after", "1", *args)[0], EXIT_OK)
        self.assertEqual(load_checkpoint(self.path("cut.last.ckpt")).provenance["epoch"], 1)
        code, _, _ = self.run_cli("finetune", "--out", self.path("resumed"), "--resume", self.path("cut.last.ckpt"),
                                  *args)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(self.read("resumed.ckpt"), self.read("full.ckpt"))

    def test_layer_beyond_checkpoint_depth(self):
        self.run_cli("finetune", "--regime", "100", "--layer", "2", "--out", self.path("ft"), *self.common())
        code, _, err = self.run_cli("finetune", "--from", self.path("ft.ckpt"), "--layer", "4",
                                    "--out", self.path("x"), *self.common())
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("--layer", err)

    def test_sweep_table(self):
        code, out, _ = self.run_cli("sweep", "--from", "hpca", "--regime", "10", "--all-layers",
                                    "--out", self.path("sw"), *self.common())
        self.assertEqual(code, EXIT_OK)
        self.assertIn("test mAP per layer", out)
        self.assertIn("10%", out)
        metrics = read_metrics(self.path("sw.metrics.csv"))
        self.assertEqual(sum(row.metric == "validation_map" for row in metrics), 5)
        self.assertEqual(sum(row.metric == "test_map" for row in metrics), 5)
        with open(self.path("sw.txt")) as inf:
            self.assertEqual(inf.read(), out)

    def test_sweep_metrics_are_deterministic(self):
        for run in ("first", "second"):
            os.makedirs(self.path(run))
            code, _, _ = self.run_cli("sweep", "--from", "none", "--regime", "25", "--seeds", "1",
                                      "--out", os.path.join(self.path(run), "sw"), *self.common())
            self.assertEqual(code, EXIT_OK)
        first = self.read(os.path.join("first", "sw.metrics.csv"))
        self.assertTrue(first)
        self.assertEqual(first, self.read(os.path.join("second", "sw.metrics.csv")))

    def test_reproduce_smoke(self):
        code, out, _ = self.run_cli("reproduce", "--data-dir", self.tmp.name, "--table", "cifar10")
        self.assertEqual(code, EXIT_OK)
        lines = out.splitlines()
        self.assertEqual(lines[1].split(), ["Regime", "Pre-train", "mAP", "Layer"])
        self.assertEqual(len(lines), 3 + 16)
        self.assertEqual(lines[3].split()[:2], ["1%", "None"])
        self.assertEqual(lines[4].split()[:2], ["1%", "HPCA"])


if __name__ == "__main__":
    unittest.main()
