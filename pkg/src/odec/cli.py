"""Command-line entry point: ``odec <command> [options]``.

Option values resolve with precedence flags > ``ODEC_*`` environment
variables > the ``run`` section of ``--config`` > built-in defaults. The
resolved configuration and the digests of all input files are embedded in
every artifact a command writes.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench, serialize
from .baselines import apoz_prune, apoz_scores, svd_compress
from .data import load_idx, synth_dataset
from .errors import OdecError
from .mor import reduce_model
from .ode import SolverConfig
from .snapshots import collect, load_snapshots, retained_energy, save_snapshots
from . import matcore
from .trainer import TrainConfig, fit, write_metrics
from .zoo import RnnSpec, conv_model, dense_model, rnn_model

log = logging.getLogger("odec")

ENV_PREFIX = "ODEC_"


def _bool(v):
    if isinstance(v, bool):
        return v
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def _shape(v):
    if isinstance(v, (list, tuple)):
        return tuple(int(x) for x in v)
    return tuple(int(x) for x in str(v).lower().split("x"))


def _ints(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def _strs(v):
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


# name: (type, default, help)
OPTIONS = {
    "model": (str, None, "model file"),
    "out": (str, None, "output file"),
    "snapshots": (str, None, "snapshot file"),
    "arch": (str, "dense", "dense, conv or rnn"),
    "n": (int, 128, "ODE state dimension (dense, rnn)"),
    "channels": (int, 8, "channels of the convolutional ODE block"),
    "gain": (float, 1.0, "scale of the random ODE weights"),
    "gamma": (float, 0.01, "antisymmetric shift (rnn)"),
    "solver": (str, "rk4", "euler or rk4 (feed-forward models)"),
    "t_end": (float, 1.0, "integration end time"),
    "dt": (float, 0.1, "solver step"),
    "seed": (int, 0, "random seed"),
    "method": (str, "pod-deim", "pod-deim, svd or apoz"),
    "k": (int, None, "compressed dimension"),
    "m": (int, None, "DEIM points (defaults to k)"),
    "o": (int, 0, "oversampling points"),
    "fold": (_bool, False, "fold projections into adjacent linear layers"),
    "stride": (int, 2, "record every N-th solver step"),
    "samples": (int, 500, "training samples used for snapshots / scores"),
    "epochs": (int, 30, "training epochs"),
    "lr": (float, 0.04, "initial learning rate"),
    "decay": (float, 0.9, "learning-rate decay per epoch"),
    "batch_size": (int, 32, "mini-batch size"),
    "timing_reps": (int, 10, "timed repetitions (median reported)"),
    "threads": (int, 1, "BLAS threads during timing"),
    "methods": (_strs, ["pod-deim", "svd", "apoz"], "comma-separated methods"),
    "dims": (_ints, [], "comma-separated dimensions"),
    "stages": (_strs, ["none", "short", "long"], "comma-separated tuning stages"),
    "metrics": (str, None, "per-epoch metrics CSV"),
    "curve": (str, None, "relative-curve CSV"),
    "table": (str, None, "wide table CSV (one row per method and dimension)"),
    "svg": (str, None, "static SVG chart of the relative curve"),
    "train_images": (str, None, "IDX training images (synthetic data if absent)"),
    "train_labels": (str, None, "IDX training labels"),
    "test_images": (str, None, "IDX test images"),
    "test_labels": (str, None, "IDX test labels"),
    "data_seed": (int, 0, "seed of the synthetic dataset"),
    "classes": (int, 10, "classes of the synthetic dataset"),
    "train_samples": (int, 2000, "synthetic training samples"),
    "test_samples": (int, 1000, "synthetic test samples"),
    "shape": (_shape, (1, 8, 8), "synthetic image shape CxHxW"),
    "margin": (float, 1.0, "synthetic class separation"),
}

DATA = ["train_images", "train_labels", "test_images", "test_labels", "data_seed", "classes",
        "train_samples", "test_samples", "shape", "margin"]

COMMANDS = {
    "init-model": (["out", "arch", "n", "channels", "gain", "gamma", "solver", "t_end", "dt",
                    "seed", "classes", "shape"], "create a random reservoir-style model"),
    "train-readout": (["model", "out", "epochs", "lr", "decay", "batch_size", "seed",
                       "metrics"] + DATA, "fit the layers after the ODE block"),
    "snapshot": (["model", "out", "samples", "stride"] + DATA, "record ODE snapshots"),
    "reduce": (["model", "out", "method", "snapshots", "k", "m", "o", "fold", "samples"] + DATA,
               "compress the ODE block"),
    "eval": (["model", "out", "timing_reps", "threads"] + DATA, "accuracy and wall time"),
    "sweep": (["model", "snapshots", "out", "methods", "dims", "stages", "m", "o", "fold",
               "samples", "timing_reps", "threads", "epochs", "lr", "decay", "batch_size", "seed",
               "curve", "table", "svg"] + DATA, "compression sweep report"),
    "inspect": (["model", "snapshots"], "summarise a model or snapshot file"),
}

REQUIRED = {
    "init-model": ["out"],
    "train-readout": ["model", "out"],
    "snapshot": ["model", "out"],
    "reduce": ["model", "out", "k"],
    "eval": ["model"],
    "sweep": ["model", "out"],
}


def build_parser():
    parser = argparse.ArgumentParser(prog="odec", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with a 'run' section of option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (opts, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        for opt in opts:
            _, default, h = OPTIONS[opt]
            flag = "--" + opt.replace("_", "-")
            if opt == "fold":
                p.add_argument(flag, dest=opt, action="store_const", const=True, default=None,
                               help=h)
            else:
                p.add_argument(flag, dest=opt, default=None, help=f"{h} (default: {default})")
    return parser


def resolve(command, flags, config_path=None, environ=None):
    """Resolved option dict for ``command``; see the module docstring for precedence."""
    environ = os.environ if environ is None else environ
    file_values = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        file_values = doc.get("run", {})
        if not isinstance(file_values, dict):
            raise OdecError("config file 'run' section must be an object")
    out = {}
    for opt in COMMANDS[command][0]:
        conv, default, _ = OPTIONS[opt]
        env_key = ENV_PREFIX + opt.upper()
        if flags.get(opt) is not None:
            raw = flags[opt]
        elif env_key in environ:
            raw = environ[env_key]
        elif opt in file_values:
            raw = file_values[opt]
        else:
            raw = default
        out[opt] = None if raw is None else conv(raw)
    for opt in REQUIRED.get(command, []):
        if out.get(opt) is None:
            raise OdecError(f"{command}: missing required option --{opt.replace('_', '-')}")
    return out


def config_digest(cfg):
    text = json.dumps(cfg, sort_keys=True, default=list)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance(cfg, command, config_path):
    inputs = {}
    for key in ("model", "snapshots", "train_images", "train_labels", "test_images",
                "test_labels"):
        path = cfg.get(key)
        if path and os.path.exists(path) and key in COMMANDS[command][0]:
            inputs[key] = serialize.file_digest(path)
    if config_path:
        inputs["config"] = serialize.file_digest(config_path)
    return {"command": command, "run_config": json.loads(json.dumps(cfg, default=list)),
            "run_config_sha256": config_digest(cfg), "inputs": inputs}


def datasets(cfg):
    if cfg.get("train_images"):
        train = load_idx(cfg["train_images"], cfg["train_labels"], "train", "idx")
        test = None
        if cfg.get("test_images"):
            test = load_idx(cfg["test_images"], cfg["test_labels"], "test", "idx")
        return train, test
    kw = dict(seed=cfg["data_seed"], classes=cfg["classes"], shape=cfg["shape"],
              margin=cfg["margin"])
    return (synth_dataset(samples=cfg["train_samples"], split="train", **kw),
            synth_dataset(samples=cfg["test_samples"], split="test", **kw))


def _need_test(test):
    if test is None:
        raise OdecError("this command needs --test-images/--test-labels with IDX training data")
    return test


def _with_provenance(model, prov):
    return replace(model, sections={**model.sections, "provenance": prov})


def cmd_init_model(cfg, prov):
    if cfg["arch"] == "rnn":
        model = rnn_model(cfg["n"], cfg["classes"], seed=cfg["seed"], gamma=cfg["gamma"],
                          dt=cfg["dt"])
    else:
        solver = SolverConfig(cfg["solver"], 0.0, cfg["t_end"], cfg["dt"])
        if cfg["arch"] == "dense":
            model = dense_model(cfg["shape"], cfg["n"], cfg["classes"], cfg["seed"],
                                cfg["gain"], solver=solver)
        elif cfg["arch"] == "conv":
            model = conv_model(cfg["shape"], cfg["channels"], cfg["classes"], cfg["seed"],
                               cfg["gain"], solver=solver)
        else:
            raise OdecError(f"unknown architecture {cfg['arch']!r}")
    serialize.save_model(_with_provenance(model, prov), cfg["out"])
    log.info("wrote %s model with ODE dimension %d to %s", cfg["arch"], model.block.dim,
             cfg["out"])


def _train_cfg(cfg, epochs=None):
    return TrainConfig(epochs=cfg["epochs"] if epochs is None else epochs,
                       batch_size=cfg["batch_size"], lr=cfg["lr"], decay=cfg["decay"],
                       seed=cfg["seed"])


def cmd_train_readout(cfg, prov):
    model = serialize.load_model(cfg["model"])
    train, test = datasets(cfg)
    model, metrics = fit(model, train, _train_cfg(cfg), validation=test)
    serialize.save_model(_with_provenance(model, prov), cfg["out"])
    if cfg.get("metrics"):
        write_metrics(metrics, cfg["metrics"])
    if metrics:
        log.info("final train accuracy %.4f", metrics[-1]["train_acc"])


def cmd_snapshot(cfg, prov):
    model = serialize.load_model(cfg["model"])
    train, _ = datasets(cfg)
    snaps = collect(model, train, cfg["samples"], cfg["stride"])
    snaps = replace(snaps, provenance={**snaps.provenance,
                                       "run_config_sha256": prov["run_config_sha256"],
                                       "inputs": prov["inputs"]})
    save_snapshots(snaps, cfg["out"])
    log.info("wrote %d snapshot columns to %s", snaps.count, cfg["out"])


def cmd_reduce(cfg, prov):
    model = serialize.load_model(cfg["model"])
    method = cfg["method"]
    if method == "pod-deim":
        if not cfg.get("snapshots"):
            raise OdecError("pod-deim needs --snapshots")
        snaps = load_snapshots(cfg["snapshots"])
        reduced = reduce_model(model, snaps, cfg["k"], cfg["m"], cfg["o"], cfg["fold"])
    elif method == "svd":
        reduced = svd_compress(model, cfg["k"])
    elif method == "apoz":
        train, _ = datasets(cfg)
        reduced = apoz_prune(model, apoz_scores(model, train, cfg["samples"]), cfg["k"])
    else:
        raise OdecError(f"unknown method {method!r}")
    serialize.save_model(_with_provenance(reduced, prov), cfg["out"])
    log.info("wrote %s model (k=%d) to %s", method, cfg["k"], cfg["out"])


def _result_dict(r):
    return {k: getattr(r, k) for k in r.__dataclass_fields__}


def _method_of(model):
    sections = getattr(model, "sections", {}) or {}
    info = sections.get("mor") or sections.get("compression") or {}
    return info.get("method", "original")


def cmd_eval(cfg, prov):
    model = serialize.load_model(cfg["model"])
    _, test = datasets(cfg)
    r = bench.evaluate(model, _need_test(test), cfg["timing_reps"], method=_method_of(model),
                       threads=cfg["threads"])
    doc = {"result": _result_dict(r), "provenance": prov}
    text = json.dumps(doc, indent=1)
    if cfg.get("out"):
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    print(text)


def cmd_sweep(cfg, prov):
    model = serialize.load_model(cfg["model"])
    train, test = datasets(cfg)
    snaps = load_snapshots(cfg["snapshots"]) if cfg.get("snapshots") else None
    bundle = bench.sweep(model, snaps, train, _need_test(test), cfg["methods"], cfg["dims"],
                         cfg["stages"], _train_cfg(cfg), cfg["timing_reps"], cfg["m"],
                         cfg["o"], cfg["fold"], cfg["samples"], cfg["threads"],
                         stage_epochs={**bench.STAGE_EPOCHS, "long": cfg["epochs"]})
    flat = {"run_config_sha256": prov["run_config_sha256"],
            **{f"input.{k}": v for k, v in prov["inputs"].items()}}
    bench.write_report(bundle, cfg["out"], flat)
    if cfg.get("curve"):
        bench.write_curve(bundle.curve, cfg["curve"])
    if cfg.get("table"):
        bench.write_table(bundle, cfg["table"])
    if cfg.get("svg"):
        with open(cfg["svg"], "w") as fh:
            fh.write(bench.curve_svg(bundle.curve))
    log.info("wrote %d result rows to %s", len(bundle.results), cfg["out"])


def cmd_inspect(cfg, prov):
    info = {}
    if cfg.get("model"):
        model = serialize.load_model(cfg["model"])
        if isinstance(model, RnnSpec):
            info["model"] = {"type": "rnn", "hidden": model.hidden, "input_dim": model.input_dim,
                             "block": type(model.block).__name__}
        else:
            info["model"] = {"type": "feedforward", "input_shape": list(model.input_shape),
                             "layers": [l.kind for l in model.layers],
                             "ode_dim": model.block.dim, "block": type(model.block).__name__}
        info["model"]["sections"] = sorted(model.sections)
        if "mor" in model.sections:
            info["model"]["mor"] = {k: v for k, v in model.sections["mor"].items()
                                    if k != "points"}
    if cfg.get("snapshots"):
        snaps = load_snapshots(cfg["snapshots"])
        s = matcore.svd(snaps.X).singular_values
        e = retained_energy(s)
        info["snapshots"] = {
            "n": snaps.n, "columns": snaps.count, "provenance": snaps.provenance,
            "k_for_energy": {str(t): int(np.searchsorted(e, t) + 1)
                             for t in (0.9, 0.99, 0.999)},
        }
    if not info:
        raise OdecError("inspect needs --model and/or --snapshots")
    print(json.dumps(info, indent=1))


HANDLERS = {
    "init-model": cmd_init_model,
    "train-readout": cmd_train_readout,
    "snapshot": cmd_snapshot,
    "reduce": cmd_reduce,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
}


def run(argv=None, environ=None):
    """Execute one command; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = resolve(args.command, flags, args.config, environ)
        prov = provenance(cfg, args.command, args.config)
        HANDLERS[args.command](cfg, prov)
    except (OdecError, ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
