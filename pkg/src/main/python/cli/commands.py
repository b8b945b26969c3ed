# SPDX-License-Identifier: GPL-2.0-or-later
import argparse
import logging
import os

import numpy as np

from cli.tables import SummaryRow, format_table
from constants import DATA_DIR_ENV, REGIMES, NUM_DEEP_LAYERS, IMAGE_SHAPE, EXT_CHECKPOINT, EXT_FEATURES, \
    EXT_METRICS, EXT_RUN, EXIT_OK
from dataset.cifar import LOADERS, parse_records, to_float
from dataset.fetch import fetch_cifar
from dataset.split import RegimeSpec, load_splits
from network.config import PRESETS
from persistence.checkpoint import Checkpoint, save_checkpoint, load_checkpoint, network_params
from persistence.features import save_features, load_features
from persistence.metrics_log import MetricRow, append_metrics, report_rows, hpca_rows
from persistence.run_config import RunConfigError, read_run_file, write_run_file, experiment_config, config_keys
from retrieval.metrics import evaluate_features, evaluate_map
from retrieval.ranking import nearest
from retrieval.store import build_store
from retrieval.sweep import layer_sweep, retrieval_database
from trainer.finetune import TrainReport, TrainState
from trainer.protocol import DATABASES, prepare_base, run_protocol
from util import make_rng, rng_state, rng_from_state, app_version

DATASETS = tuple(sorted(LOADERS))
SPLITS = ("train", "validation", "test", "database")
SOURCES = ("none", "hpca")
SCALES = ("smoke", "full")
NETWORKS = tuple(sorted(name for name, factory in PRESETS.items()
                        if factory(num_classes=10).input_shape == IMAGE_SHAPE))
# keys that never go into a .run file
NOT_RUN_KEYS = ("handler", "config", "verbose")

# smoke scale: reduced network, sample counts and budgets
SMOKE = {"network": "small", "limit": 2000, "sgd_epochs": 2, "hpca_epochs": 1, "seeds": 1}
FULL = {"network": "default", "limit": None, "sgd_epochs": 20, "hpca_epochs": 20, "seeds": 5}
# rough single-core throughput of the default network, images per second through forward+backward
FULL_SCALE_IMAGES_PER_SECOND = 150


class UsageError(Exception):
    pass


def parse_bool(text):
    text = str(text).lower()
    if text in ("1", "true", "yes"):
        return True
    if text in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError("expected true or false, got {}".format(text))


def add_common(parser):
    parser.add_argument("--config", help="run-config file; explicit flags override its values")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="output path")


def add_data(parser):
    parser.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV),
                        help="directory holding the CIFAR binary files (default ${})".format(DATA_DIR_ENV))
    parser.add_argument("--dataset", default="cifar10", choices=DATASETS)
    parser.add_argument("--limit", type=int, help="use a seeded subset of this many training records")


def add_training(parser):
    parser.add_argument("--network", default="default", choices=NETWORKS)
    parser.add_argument("--database", default="train+validation", choices=DATABASES)
    parser.add_argument("--pretrain-samples", type=int, help="pre-train on this many training images")
    parser.add_argument("--selection-samples", type=int,
                        help="select the layer against this many training images")
    for key, default in sorted(config_keys().items()):
        flag = "--" + key.replace("_", "-")
        kind = parse_bool if isinstance(default, bool) else type(default)
        parser.add_argument(flag, type=kind, default=None, help="default {}".format(default))


def build_parser():
    parser = argparse.ArgumentParser(prog="hebbcbir", description="Hebbian pre-training and image retrieval runs")
    parser.add_argument("--version", action="version", version=app_version())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")
    subparsers = {}

    p = sub.add_parser("pretrain", help="HPCA pre-training on all training images")
    add_common(p)
    add_data(p)
    add_training(p)
    p.set_defaults(handler=cmd_pretrain)
    subparsers["pretrain"] = p

    p = sub.add_parser("finetune", help="cut and fine-tune on a labeled regime")
    add_common(p)
    add_data(p)
    add_training(p)
    p.add_argument("--from", default="none", help="pre-trained checkpoint, 'hpca' or 'none'")
    p.add_argument("--regime", type=int, default=100, help="labeled percentage, one of {}".format(REGIMES))
    p.add_argument("--layer", type=int, default=NUM_DEEP_LAYERS)
    p.add_argument("--resume", help="continue from a .last checkpoint")
    p.add_argument("--stop-after", type=int, help="stop after this epoch")
    p.set_defaults(handler=cmd_finetune)
    subparsers["finetune"] = p

    p = sub.add_parser("sweep", help="layerwise evaluation over seeds")
    add_common(p)
    add_data(p)
    add_training(p)
    p.add_argument("--from", default="none", help="pre-trained checkpoint, 'hpca' or 'none'")
    p.add_argument("--regime", type=int, default=100)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--all-layers", type=parse_bool, nargs="?", const=True, default=False,
                   help="also report test mAP for every layer")
    p.set_defaults(handler=cmd_sweep)
    subparsers["sweep"] = p

    p = sub.add_parser("extract", help="write a feature store")
    add_common(p)
    add_data(p)
    p.add_argument("--ckpt")
    p.add_argument("--layer", type=int)
    p.add_argument("--split", default="database", choices=SPLITS)
    p.set_defaults(handler=cmd_extract)
    subparsers["extract"] = p

    p = sub.add_parser("eval-map", help="mean average precision of a checkpoint or feature stores")
    add_common(p)
    add_data(p)
    p.add_argument("--ckpt")
    p.add_argument("--feat", help="database feature store")
    p.add_argument("--query-feat", help="query feature store")
    p.add_argument("--layer", type=int)
    p.add_argument("--split", default="test", choices=SPLITS[:3], help="query split")
    p.add_argument("--database", default="train+validation", choices=DATABASES)
    p.set_defaults(handler=cmd_eval_map)
    subparsers["eval-map"] = p

    p = sub.add_parser("query", help="nearest database items for one image")
    add_common(p)
    p.add_argument("--feat")
    p.add_argument("--ckpt", help="checkpoint that produced the feature store")
    p.add_argument("--image", help=".bin CIFAR record or .npy image / feature vector")
    p.add_argument("--topk", type=int, default=10)
    p.set_defaults(handler=cmd_query)
    subparsers["query"] = p

    p = sub.add_parser("reproduce", help="regime x pre-training summary table")
    add_common(p)
    p.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV))
    p.add_argument("--table", default="cifar10", choices=DATASETS)
    p.add_argument("--scale", default="smoke", choices=SCALES)
    p.add_argument("--seeds", type=int)
    p.set_defaults(handler=cmd_reproduce)
    subparsers["reproduce"] = p

    p = sub.add_parser("fetch", help="download and unpack a CIFAR binary archive")
    p.add_argument("--config", help="run-config file; explicit flags override its values")
    p.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV))
    p.add_argument("--dataset", default="cifar10", choices=DATASETS)
    p.set_defaults(handler=cmd_fetch)
    subparsers["fetch"] = p

    return parser, subparsers


def parse_args(argv):
    """ Flags over .run file values over defaults; returns a plain dict """
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("no command given, expected one of {}".format(", ".join(subparsers)))
    if args.config:
        try:
            values = read_run_file(args.config)
        except OSError as e:
            raise UsageError("cannot read config {}: {}".format(args.config, e.strerror))
        except RunConfigError as e:
            raise UsageError(str(e))
        command = values.pop("command", args.command)
        if command != args.command:
            raise UsageError("{} was written by '{}', not '{}'".format(args.config, command, args.command))
        sub = subparsers[args.command]
        known = set(vars(sub.parse_args([]))) - set(NOT_RUN_KEYS)
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError("{}: unknown keys {}".format(args.config, ", ".join(unknown)))
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return vars(args)


def stem(path):
    for ext in (EXT_METRICS, EXT_CHECKPOINT, EXT_FEATURES, EXT_RUN, ".txt"):
        if path.endswith(ext):
            return path[:-len(ext)]
    return path


def run_id(values):
    return os.path.basename(stem(values["out"])) if values.get("out") else values["command"]


def write_run(values):
    run = {k: v for k, v in values.items() if k not in NOT_RUN_KEYS}
    write_run_file(stem(values["out"]) + EXT_RUN, run)


def require(values, *keys):
    for key in keys:
        if values.get(key) is None:
            raise UsageError("{}: missing --{}".format(values["command"], key.replace("_", "-")))


def check_data_dir(values):
    if values.get("data_dir") is None:
        raise UsageError("missing data dir: pass --data-dir or set {}".format(DATA_DIR_ENV))
    if not os.path.isdir(values["data_dir"]):
        raise UsageError("data dir {} does not exist".format(values["data_dir"]))


def check_range(values, key, low, high=None):
    value = values.get(key)
    if value is None:
        return
    if value < low or (high is not None and value > high):
        bound = "{}..{}".format(low, high) if high is not None else ">= {}".format(low)
        raise UsageError("--{} must be {}, got {}".format(key.replace("_", "-"), bound, value))


def check_values(values):
    """ Validates flags before any data is touched """
    check_range(values, "seed", 0, 2 ** 64 - 1)
    check_range(values, "seeds", 1)
    check_range(values, "limit", 10)
    check_range(values, "layer", 1, NUM_DEEP_LAYERS)
    check_range(values, "topk", 1)
    check_range(values, "stop_after", 1)
    check_range(values, "pretrain_samples", 1)
    check_range(values, "selection_samples", 1)
    if values.get("regime") is not None and values["regime"] not in REGIMES:
        raise UsageError("--regime must be one of {}, got {}".format(REGIMES, values["regime"]))
    source = values.get("from")
    if source is not None and source not in SOURCES and not os.path.isfile(source):
        raise UsageError("--from must be a checkpoint file, 'hpca' or 'none', got {}".format(source))
    for key in ("ckpt", "feat", "query_feat", "image", "resume", "config"):
        if values.get(key) is not None and not os.path.isfile(values[key]):
            raise UsageError("--{} {} does not exist".format(key.replace("_", "-"), values[key]))
    if values.get("out") is not None:
        parent = os.path.dirname(os.path.abspath(values["out"]))
        if not os.path.isdir(parent):
            raise UsageError("output directory {} does not exist".format(parent))


def experiment(values):
    try:
        return experiment_config(values)
    except RunConfigError as e:
        raise UsageError(str(e))


def load(values, seed=None):
    return load_splits(values["data_dir"], values["dataset"], values["seed"] if seed is None else seed,
                       values.get("limit"))


def provenance(values, splits, **extra):
    prov = {"dataset": values["dataset"], "seed": values["seed"], "normalization": [list(s) for s in
                                                                                      splits.normalization]}
    prov.update(extra)
    return prov


def base_network(values, splits):
    """ (pretrain_mode, network or None) for --from """
    source = values["from"]
    if source in SOURCES:
        return source, None
    ckpt = load_checkpoint(source)
    if ckpt.config.num_classes != splits.num_classes:
        raise UsageError("{} has {} classes, {} has {}".format(source, ckpt.config.num_classes,
                                                               values["dataset"], splits.num_classes))
    mode = "hpca" if ckpt.phase == "pretrained" else "none"
    return mode, ckpt.to_network()


def state_checkpoint(state, prov):
    prov = dict(prov, epoch=state.epoch, report=state.report.to_dict())
    return Checkpoint.from_network(state.network, rng_state=rng_state(state.rng), velocity=dict(state.velocity),
                                   provenance=prov, extra={"best": network_params(state.best_network)})


def load_train_state(path):
    ckpt = load_checkpoint(path)
    prov = ckpt.provenance
    if ckpt.velocity is None or "report" not in prov or "best" not in ckpt.extra or ckpt.rng_state is None:
        raise UsageError("{} is not a resumable checkpoint".format(path))
    return TrainState(prov["epoch"], ckpt.to_network(), ckpt.velocity, rng_from_state(ckpt.rng_state),
                      TrainReport.from_dict(prov["report"]), ckpt.extra_network("best"))


def cmd_pretrain(values):
    require(values, "out")
    check_data_dir(values)
    cfgs = experiment(values)
    out = stem(values["out"])

    splits = load(values)
    rng = make_rng(values["seed"])
    network, stats = prepare_base(splits, "hpca", cfgs, rng)
    prov = provenance(values, splits, phase="pretrained", epoch=cfgs.hpca.epochs)
    digest = save_checkpoint(out + EXT_CHECKPOINT, Checkpoint.from_network(network, rng_state=rng_state(rng),
                                                                           provenance=prov))
    append_metrics(out + EXT_METRICS, hpca_rows(run_id(values), stats))
    write_run(values)
    print("{} sha256={}".format(out + EXT_CHECKPOINT, digest))
    return EXIT_OK


def cmd_finetune(values):
    require(values, "out")
    check_data_dir(values)
    cfgs = experiment(values)
    out = stem(values["out"])
    resume = load_train_state(values["resume"]) if values.get("resume") else None

    splits = load(values)
    rng = make_rng(values["seed"])
    regime = RegimeSpec(values["regime"], values["seed"])
    mode, network = base_network(values, splits)
    if network is not None and values["layer"] > network.depth:
        raise UsageError("--layer {} exceeds the {} deep layers of {}".format(values["layer"], network.depth,
                                                                              values["from"]))
    prov = provenance(values, splits, phase="finetuned", regime=values["regime"], layer_k=values["layer"],
                      pretrain_mode=mode)

    last = out + ".last" + EXT_CHECKPOINT

    def on_epoch(epoch, state):
        save_checkpoint(last, state_checkpoint(state, prov))

    network_k, report = run_protocol(splits, regime, mode, values["layer"], cfgs, rng, network, on_epoch,
                                     resume, values.get("stop_after"))
    prov.update(epoch=report.best_epoch, report=report.to_dict())
    digest = save_checkpoint(out + EXT_CHECKPOINT, Checkpoint.from_network(network_k, provenance=prov))

    name = run_id(values)
    rows = report_rows(name, "finetune", report)
    rows.append(MetricRow(name, "finetune", report.best_epoch, "best_epoch", report.best_epoch))
    if report.test_accuracy is not None:
        rows.append(MetricRow(name, "finetune", report.best_epoch, "test_accuracy", report.test_accuracy))
    append_metrics(out + EXT_METRICS, rows)
    write_run(values)
    print("{} best_epoch={} sha256={}".format(out + EXT_CHECKPOINT, report.best_epoch, digest))
    return EXIT_OK


def cmd_sweep(values):
    check_data_dir(values)
    cfgs = experiment(values)
    name = run_id(values)
    regime_row = None
    rows = []
    all_layers = {}
    for seed in range(values["seed"], values["seed"] + values["seeds"]):
        splits = load(values, seed)
        rng = make_rng(seed)
        mode, network = base_network(values, splits)
        if regime_row is None:
            regime_row = SummaryRow(values["regime"], mode)
        result = layer_sweep(splits, RegimeSpec(values["regime"], seed), mode, cfgs, rng,
                             report_all_layers=values["all_layers"], base_network=network)
        regime_row.add(result.test_report.map, result.best_layer_k)
        for layer_k, vmap in sorted(result.validation_map.items()):
            rows.append(MetricRow(name, "sweep-{}".format(seed), layer_k, "validation_map", vmap))
        for layer_k, report in sorted(result.test_reports.items()):
            rows.append(MetricRow(name, "sweep-{}".format(seed), layer_k, "test_map", report.map))
            all_layers.setdefault(layer_k, []).append(report.map)
        rows.append(MetricRow(name, "sweep-{}".format(seed), result.best_layer_k, "selected_test_map",
                              result.test_report.map))

    table = format_table([regime_row], title=values["dataset"])
    if all_layers:
        per_layer = []
        for layer_k in sorted(all_layers):
            row = SummaryRow(values["regime"], regime_row.mode)
            for m in all_layers[layer_k]:
                row.add(m, layer_k)
            per_layer.append(row)
        table += "\n" + format_table(per_layer, title="test mAP per layer")
    print(table, end="")
    if values.get("out"):
        out = stem(values["out"])
        append_metrics(out + EXT_METRICS, rows)
        with open(out + ".txt", "w") as outf:
            outf.write(table)
        write_run(values)
    return EXIT_OK


def split_dataset(splits, split, database="train+validation"):
    if split == "database":
        return retrieval_database(splits, database)
    return getattr(splits, split)


def cmd_extract(values):
    require(values, "ckpt", "out")
    check_data_dir(values)
    ckpt = load_checkpoint(values["ckpt"])
    network = ckpt.to_network()
    layer_k = values["layer"] or network.depth
    if layer_k > network.depth:
        raise UsageError("--layer {} exceeds the {} deep layers of {}".format(layer_k, network.depth, values["ckpt"]))
    splits = load(values, ckpt.provenance.get("seed"))
    store = build_store(network, split_dataset(splits, values["split"]), layer_k)
    digest = save_features(stem(values["out"]) + EXT_FEATURES, store)
    write_run(values)
    print("{} rows={} dim={} sha256={}".format(stem(values["out"]) + EXT_FEATURES, len(store), store.dim, digest))
    return EXIT_OK


def cmd_eval_map(values):
    if values.get("feat"):
        require(values, "query_feat")
        store = load_features(values["feat"])
        queries = load_features(values["query_feat"])
        if queries.dim != store.dim:
            raise UsageError("feature dimensions differ: {} vs {}".format(store.dim, queries.dim))
        report = evaluate_features(store, queries.features, queries.labels)
    else:
        require(values, "ckpt")
        check_data_dir(values)
        ckpt = load_checkpoint(values["ckpt"])
        network = ckpt.to_network()
        layer_k = values["layer"] or network.depth
        if layer_k > network.depth:
            raise UsageError("--layer {} exceeds the {} deep layers".format(layer_k, network.depth))
        splits = load(values, ckpt.provenance.get("seed"))
        database = split_dataset(splits, "database", values["database"])
        report = evaluate_map(network, database, getattr(splits, values["split"]), layer_k)

    print("mAP={!r} layer={} queries={} skipped={}".format(report.map, report.layer_k, report.num_queries,
                                                           report.skipped))
    if values.get("out"):
        out = stem(values["out"])
        append_metrics(out + EXT_METRICS, [MetricRow(run_id(values), "eval", report.layer_k, "map", report.map)])
        write_run(values)
    return EXIT_OK


def read_image(path):
    """ First record of a CIFAR .bin file, or a .npy image / feature vector """
    if path.endswith(".npy"):
        return np.load(path, allow_pickle=False)
    with open(path, "rb") as inf:
        data = inf.read()
    # CIFAR-10 records have one label byte, CIFAR-100 records two
    for fine in (False, True):
        size = 1 + int(fine) + int(np.prod(IMAGE_SHAPE))
        if len(data) % size == 0:
            pixels, _ = parse_records(data[:size], fine, path)
            return pixels[0]
    raise UsageError("{} holds no whole CIFAR record".format(path))


def cmd_query(values):
    require(values, "feat", "image")
    store = load_features(values["feat"])
    image = read_image(values["image"])
    if image.ndim == 1:
        if image.shape[0] != store.dim:
            raise UsageError("feature vector has {} entries, store has {}".format(image.shape[0], store.dim))
        query = image.astype(store.features.dtype)
    else:
        require(values, "ckpt")
        if tuple(image.shape) != IMAGE_SHAPE:
            raise UsageError("image shape must be {}, got {}".format(IMAGE_SHAPE, image.shape))
        ckpt = load_checkpoint(values["ckpt"])
        normalization = ckpt.provenance.get("normalization")
        query = ckpt.to_network().extract_features(to_float(image[None], normalization), store.layer_k)[0]

    topk = values["topk"]
    if topk > len(store):
        logging.warning("query: --topk {} exceeds the {} stored items, clamped".format(topk, len(store)))
        topk = len(store)
    for rank, (index, label, distance) in enumerate(nearest(store, query, topk), start=1):
        print("{}\t{}\t{}\t{!r}".format(rank, index, label, distance))
    return EXIT_OK


def estimate_full_hours(cfgs, grid):
    """ Very rough wall-clock estimate for the full grid on one core """
    train_images = 40000
    images = grid["seeds"] * (cfgs.hpca.epochs * train_images
                              + len(REGIMES) * 2 * NUM_DEEP_LAYERS * cfgs.sgd.epochs * train_images / 4)
    return images / FULL_SCALE_IMAGES_PER_SECOND / 3600


def cmd_reproduce(values):
    check_data_dir(values)
    grid = dict(SMOKE if values["scale"] == "smoke" else FULL)
    if values.get("seeds") is not None:
        grid["seeds"] = values["seeds"]
    run = {"dataset": values["table"], "network": grid["network"], "sgd_epochs": grid["sgd_epochs"],
           "hpca_epochs": grid["hpca_epochs"]}
    cfgs = experiment(run)
    if values["scale"] == "full":
        logging.warning("reproduce: full scale runs {} regimes x 2 modes x {} seeds x {} layers; estimated "
                        "runtime {:.0f} hours".format(len(REGIMES), grid["seeds"], NUM_DEEP_LAYERS,
                                                      estimate_full_hours(cfgs, grid)))

    summary = {(regime, mode): SummaryRow(regime, mode) for regime in REGIMES for mode in SOURCES}
    for seed in range(values["seed"], values["seed"] + grid["seeds"]):
        splits = load_splits(values["data_dir"], values["table"], seed, grid["limit"])
        rng = make_rng(seed)
        bases = {}
        for mode in SOURCES:
            bases[mode], _ = prepare_base(splits, mode, cfgs, rng)
        for regime in REGIMES:
            for mode in SOURCES:
                result = layer_sweep(splits, RegimeSpec(regime, seed), mode, cfgs, rng, base_network=bases[mode])
                summary[(regime, mode)].add(result.test_report.map, result.best_layer_k)
                logging.info("reproduce: seed {} regime {}% {} test mAP={:.4f} layer={}".format(
                    seed, regime, mode, result.test_report.map, result.best_layer_k))

    rows = [summary[(regime, mode)] for regime in REGIMES for mode in SOURCES]
    table = format_table(rows, title="{} ({} scale)".format(values["table"], values["scale"]))
    print(table, end="")
    if values.get("out"):
        out = stem(values["out"])
        with open(out + ".txt", "w") as outf:
            outf.write(table)
        append_metrics(out + EXT_METRICS, [MetricRow(run_id(values), "reproduce-{}-{}".format(r.regime, r.mode),
                                                     layer, "test_map", m)
                                           for r in rows for m, layer in zip(r.maps, r.layers)])
        write_run(values)
    return EXIT_OK


def cmd_fetch(values):
    require(values, "data_dir")
    print(fetch_cifar(values["dataset"], values["data_dir"]))
    return EXIT_OK


def run(argv):
    """ Parses, validates and dispatches; returns the exit code. Usage errors raise UsageError. """
    values = parse_args(argv)
    check_values(values)
    return values["handler"](values)
