"""Batch command-line surface tying the package together.

Subcommands:
  prepare    ingest jets (binary, text, or npz archives) or generate the
             synthetic benchmark, then split into train/val/test containers
  train      run one training trial from a config file
  search     exhaustive or sequential hyperparameter search
  evaluate   score a checkpoint on a dataset: ROC curve, SVG plot, k-fold AUC
  compress   map a dataset to its latent form under a frozen encoder
  reproduce  scripted desk-scale paradigm comparison table

Config files are the single source of truth for hyperparameters; flags only
select the config path, output directory, seed override, and worker count
(the GGC_WORKERS environment variable also sets the worker count, with the
flag taking precedence). Every output directory receives a manifest.json
recording the command, the config file and its digest, the resolved
settings, and wall-clock timestamps — timestamps live only in the manifest
so every CSV output stays byte-identical across single-threaded reruns.
Failures print one machine-parsable JSON line to stderr and exit nonzero;
config validation reports every violation at once rather than the first.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from . import __version__
from . import autodiff as ad
from .errors import ConfigError, GgcError
from .evaluate import kfold_auc, plot_roc_svg, roc_auc, write_roc_csv, write_summary_csv
from .graphs import Dataset, read_dataset, write_dataset
from .jetdata import (
    apply_normalization,
    convert_npz,
    fit_normalization,
    jets_to_dataset,
    read_jets,
    read_jets_text,
    split_and_subsample,
    synth_dataset,
    write_stats,
)
from .kernels import BACKEND
from .training import (
    TrainConfig,
    extract_latents,
    grid_search,
    make_models,
    score_dataset,
    train,
)

_SOURCES = ("synthetic", "jets", "jets-text", "npz")
_MISSING = object()


# ---------------------------------------------------------------------------
# config files


@dataclass(frozen=True)
class _Field:
    """One config key: how to coerce it and what to use when absent."""

    kind: str  # str | int | float | bool | ints | floats
    default: object = _MISSING  # _MISSING marks a required key


def _coerce(kind, text):
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        lowered = text.lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "ints":
        return tuple(int(part) for part in text.split(","))
    if kind == "floats":
        return tuple(float(part) for part in text.split(","))
    raise ValueError(f"unhandled field kind {kind!r}")


def parse_config_text(text):
    """Parse line-oriented `key = value` config text.

    `#` starts a comment and blank lines are skipped. Returns the raw string
    mapping plus a list of malformed-line problems.
    """
    raw = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected key = value, got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key}")
            continue
        raw[key] = value.strip()
    return raw, problems


def resolve_config(raw, schema):
    """Coerce raw strings against a schema, collecting every violation."""
    problems = []
    resolved = {}
    for key, field in schema.items():
        if key not in raw:
            if field.default is _MISSING:
                problems.append(f"missing required key: {key}")
            else:
                resolved[key] = field.default
            continue
        try:
            resolved[key] = _coerce(field.kind, raw[key])
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    for key in sorted(set(raw) - set(schema)):
        problems.append(f"unknown key: {key}")
    return resolved, problems


def load_config(path, schema):
    """Read and resolve a config file; raise ConfigError listing all problems."""
    with open(path, "r", encoding="utf-8") as fh:
        raw, problems = parse_config_text(fh.read())
    resolved, more = resolve_config(raw, schema)
    problems.extend(more)
    if problems:
        raise ConfigError("; ".join(problems))
    return resolved


_TRAIN_DEFAULTS = TrainConfig()

_TRAIN_FIELDS = {
    "paradigm": _Field("str", _TRAIN_DEFAULTS.paradigm),
    "ae_kind": _Field("str", _TRAIN_DEFAULTS.ae_kind),
    "clf_kind": _Field("str", _TRAIN_DEFAULTS.clf_kind),
    "batch_size": _Field("int", _TRAIN_DEFAULTS.batch_size),
    "learning_rate": _Field("float", _TRAIN_DEFAULTS.learning_rate),
    "layers": _Field("int", _TRAIN_DEFAULTS.layers),
    "lam": _Field("float", _TRAIN_DEFAULTS.lam),
    "epochs": _Field("int", _TRAIN_DEFAULTS.epochs),
    "patience": _Field("int", _TRAIN_DEFAULTS.patience),
    "seed": _Field("int", _TRAIN_DEFAULTS.seed),
    "shapes": _Field("ints", _TRAIN_DEFAULTS.shapes),
    "compression_rate": _Field("float", _TRAIN_DEFAULTS.compression_rate),
    "kernels": _Field("int", _TRAIN_DEFAULTS.kernels),
    "gcn_hidden": _Field("int", _TRAIN_DEFAULTS.gcn_hidden),
    "train_cap": _Field("int", _TRAIN_DEFAULTS.train_cap),
}


def _build_train_config(resolved, seed_override):
    cfg = TrainConfig(**{key: resolved[key] for key in _TRAIN_FIELDS})
    cfg = replace(cfg, shapes=tuple(cfg.shapes))
    if seed_override is not None:
        cfg = replace(cfg, seed=int(seed_override))
    problems = cfg.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def _config_as_dict(cfg: TrainConfig):
    return {
        key: (list(getattr(cfg, key)) if key == "shapes" else getattr(cfg, key))
        for key in _TRAIN_FIELDS
    }


def write_model_config(path, cfg: TrainConfig, input_dim):
    """Persist the resolved training config next to its checkpoint.

    evaluate and compress rebuild the exact model architecture from this
    file, so a checkpoint never travels without it.
    """
    lines = [f"input_dim = {int(input_dim)}"]
    for key in _TRAIN_FIELDS:
        value = getattr(cfg, key)
        if key == "shapes":
            value = ",".join(str(int(s)) for s in value)
        lines.append(f"{key} = {value}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model_config(path):
    """Read a model config written by `write_model_config`."""
    schema = dict(_TRAIN_FIELDS)
    schema["input_dim"] = _Field("int")
    resolved = load_config(path, schema)
    cfg = _build_train_config(resolved, None)
    return cfg, resolved["input_dim"]


# ---------------------------------------------------------------------------
# shared plumbing


def _emit(line):
    print(line, flush=True)


def _log(**fields):
    _emit(" ".join(f"{k}={v}" for k, v in fields.items()))


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _worker_count(args):
    if getattr(args, "workers", None) is not None:
        return max(1, int(args.workers))
    env = os.environ.get("GGC_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"GGC_WORKERS: {exc}") from exc
    return 1


def write_manifest(out_dir, command, config_path, resolved, seed, started, wall_clock):
    """Record what produced an output directory.

    Timestamps and wall-clock live only here, never in CSV outputs, so data
    artifacts stay byte-identical across reruns.
    """
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config_sha256": _sha256(config_path) if config_path else None,
        "resolved_config": resolved,
        "output_dir": str(out_dir),
        "seed": seed,
        "package_version": __version__,
        "kernel_backend": BACKEND,
        "started": started,
        "finished": _utc_now(),
        "wall_clock_seconds": round(wall_clock, 3),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_model(checkpoint_path, model_config_path):
    """Rebuild (config, autoencoder, classifier) from a saved trial."""
    cfg, input_dim = read_model_config(model_config_path)
    ae, clf = make_models(cfg, input_dim)
    arrays, _ = ad.load_checkpoint(checkpoint_path)
    params = {**(ae.params() if ae is not None else {}), **clf.params()}
    ad.load_into(params, arrays)
    return cfg, ae, clf


# ---------------------------------------------------------------------------
# commands


_PREPARE_SCHEMA = {
    "source": _Field("str"),
    "input": _Field("str", None),
    "samples": _Field("int", None),
    "separation": _Field("float", 1.0),
    "node_lo": _Field("int", 10),
    "node_hi": _Field("int", 40),
    "feature_dim": _Field("int", 13),
    "limit": _Field("int", None),
    "normalize": _Field("bool", None),
    "train_size": _Field("int"),
    "val_size": _Field("int"),
    "test_size": _Field("int"),
    "seed": _Field("int", 42),
}


def cmd_prepare(args):
    resolved = load_config(args.config, _PREPARE_SCHEMA)
    problems = []
    source = resolved["source"]
    if source not in _SOURCES:
        problems.append(f"source must be one of {', '.join(_SOURCES)}, got {source!r}")
    if source == "synthetic" and resolved["samples"] is None:
        problems.append("synthetic source requires samples")
    if source in ("jets", "jets-text", "npz") and resolved["input"] is None:
        problems.append(f"{source} source requires input")
    for key in ("train_size", "val_size", "test_size"):
        if resolved[key] < 1:
            problems.append(f"{key} must be positive, got {resolved[key]}")
    if problems:
        raise ConfigError("; ".join(problems))
    seed = int(args.seed) if args.seed is not None else resolved["seed"]
    normalize = resolved["normalize"]
    if normalize is None:
        normalize = source != "synthetic"

    if source == "synthetic":
        ds = synth_dataset(
            resolved["samples"],
            resolved["separation"],
            seed,
            node_range=(resolved["node_lo"], resolved["node_hi"]),
            feature_dim=resolved["feature_dim"],
        )
    else:
        path = resolved["input"]
        if source == "npz":
            converted = os.path.join(args.out, "jets.ggj")
            count = convert_npz(path, converted, limit=resolved["limit"])
            _log(event="convert", source=path, jets=count)
            path = converted
        jets = read_jets_text(path) if source == "jets-text" else read_jets(path)
        ds = jets_to_dataset(jets, workers=_worker_count(args))
    _log(event="ingest", source=source, graphs=len(ds), feature_dim=ds.feature_dim)

    sizes = (resolved["train_size"], resolved["val_size"], resolved["test_size"])
    train_ds, val_ds, test_ds = split_and_subsample(ds, sizes, seed)
    if normalize:
        stats = fit_normalization(train_ds)
        train_ds = apply_normalization(train_ds, stats)
        val_ds = apply_normalization(val_ds, stats)
        test_ds = apply_normalization(test_ds, stats)
        write_stats(os.path.join(args.out, "stats.txt"), stats)
    for name, split in (("train", train_ds), ("val", val_ds), ("test", test_ds)):
        write_dataset(os.path.join(args.out, f"{name}.ggd"), split)
        _log(event="split", name=name, graphs=len(split), normalized=split.normalized)
    resolved = dict(resolved, normalize=normalize)
    return resolved, seed


_TRAIN_SCHEMA = {"train": _Field("str"), "val": _Field("str"), **_TRAIN_FIELDS}


def cmd_train(args):
    resolved = load_config(args.config, _TRAIN_SCHEMA)
    cfg = _build_train_config(resolved, args.seed)
    train_ds = read_dataset(resolved["train"])
    val_ds = read_dataset(resolved["val"])
    outcome = train(cfg, train_ds, val_ds, out_dir=args.out, log_fn=_emit)
    write_model_config(os.path.join(args.out, "model.config"), cfg, train_ds.feature_dim)
    _log(
        event="done",
        final_val_auc=repr(outcome.record.final_val_auc),
        best_epochs=";".join(f"{k}:{v}" for k, v in sorted(outcome.record.best_epochs.items())),
    )
    resolved = dict(resolved, **_config_as_dict(cfg))
    return resolved, cfg.seed


_SEARCH_SCHEMA = {
    **_TRAIN_SCHEMA,
    "mode": _Field("str", "exhaustive"),
    "grid.batch_size": _Field("ints", None),
    "grid.learning_rate": _Field("floats", None),
    "grid.layers": _Field("ints", None),
    "grid.lam": _Field("floats", None),
}


def write_trials_csv(path, records):
    """One row per trial: the searched axes plus the validation AUC."""
    lines = ["trial,batch_size,learning_rate,layers,lam,final_val_auc"]
    for index, record in enumerate(records):
        cfg = record.config
        lines.append(
            f"{index},{cfg.batch_size},{cfg.learning_rate!r},{cfg.layers},"
            f"{cfg.lam!r},{record.final_val_auc!r}"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_search(args):
    resolved = load_config(args.config, _SEARCH_SCHEMA)
    cfg = _build_train_config(resolved, args.seed)
    mode = resolved["mode"]
    space = {}
    for axis in ("batch_size", "learning_rate", "layers", "lam"):
        values = resolved[f"grid.{axis}"]
        if values is not None:
            space[axis] = list(values)
    train_ds = read_dataset(resolved["train"])
    val_ds = read_dataset(resolved["val"])
    result = grid_search(
        cfg, space, mode, train_ds, val_ds, workers=_worker_count(args), log_fn=_emit
    )
    write_trials_csv(os.path.join(args.out, "trials.csv"), result.records)
    best_path = os.path.join(args.out, "best.config")
    lines = [f"train = {resolved['train']}", f"val = {resolved['val']}"]
    for key in _TRAIN_FIELDS:
        value = getattr(result.best_config, key)
        if key == "shapes":
            value = ",".join(str(int(s)) for s in value)
        lines.append(f"{key} = {value}")
    with open(best_path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    best_record = result.records[result.best_index]
    _log(
        event="search-done",
        mode=mode,
        trials=len(result.records),
        best_trial=result.best_index,
        best_val_auc=repr(best_record.final_val_auc),
    )
    resolved = dict(resolved, **_config_as_dict(cfg))
    return resolved, cfg.seed


_EVALUATE_SCHEMA = {
    "checkpoint": _Field("str"),
    "model": _Field("str"),
    "dataset": _Field("str"),
    "folds": _Field("int", 5),
    "fold_seed": _Field("int", 42),
    "name": _Field("str", "model"),
}


def cmd_evaluate(args):
    resolved = load_config(args.config, _EVALUATE_SCHEMA)
    cfg, ae, clf = _load_model(resolved["checkpoint"], resolved["model"])
    ds = read_dataset(resolved["dataset"])
    scores, labels = score_dataset(ae, clf, ds)
    curve = roc_auc(scores, labels)
    folds = kfold_auc(scores, labels, k=resolved["folds"], seed=resolved["fold_seed"])
    write_roc_csv(os.path.join(args.out, "roc.csv"), curve)
    plot_roc_svg(os.path.join(args.out, "roc.svg"), {resolved["name"]: curve})
    report = [
        f"auc={curve.auc!r}",
        "fold_aucs=" + ",".join(repr(a) for a in folds.fold_aucs),
        f"mean_auc={folds.mean!r}",
        f"std_auc={folds.std!r}",
        f"excluded_folds={len(folds.excluded)}",
        f"degenerate={folds.degenerate}",
    ]
    with open(os.path.join(args.out, "evaluation.txt"), "w", encoding="ascii") as fh:
        fh.write("\n".join(report) + "\n")
    for line in report:
        _emit(line)
    return resolved, cfg.seed


_COMPRESS_SCHEMA = {
    "checkpoint": _Field("str"),
    "model": _Field("str"),
    "dataset": _Field("str"),
}


def cmd_compress(args):
    resolved = load_config(args.config, _COMPRESS_SCHEMA)
    cfg, ae, _ = _load_model(resolved["checkpoint"], resolved["model"])
    if ae is None:
        raise ConfigError("uncompressed checkpoint has no encoder to compress with")
    ds = read_dataset(resolved["dataset"])
    latent = extract_latents(ae, ds)
    write_dataset(os.path.join(args.out, "latent.ggd"), latent)
    nodes_in = sum(g.num_nodes for g in ds.graphs)
    nodes_out = sum(g.num_nodes for g in latent.graphs)
    _log(
        event="compress",
        graphs=len(ds),
        nodes_in=nodes_in,
        nodes_out=nodes_out,
        feature_dim_in=ds.feature_dim,
        feature_dim_out=latent.feature_dim,
    )
    return resolved, cfg.seed


_REPRODUCE_SCALES = {
    "desk": {
        "samples": 2000,
        "sizes": (1200, 300, 500),
        "epochs": 15,
        "patience": 5,
        "batch_size": 32,
    },
    "smoke": {
        "samples": 160,
        "sizes": (100, 30, 30),
        "epochs": 2,
        "patience": 2,
        "batch_size": 16,
    },
}

_REPRODUCE_SEPARATION = 0.6


def _reproduce_rows():
    rows = [("uncompressed", None, "gnn")]
    for paradigm in ("two-step", "guided"):
        for ae_kind in ("miagae", "sag"):
            for clf_kind in ("gnn", "qgnn1", "qgnn2"):
                rows.append((paradigm, ae_kind, clf_kind))
    return rows


def cmd_reproduce(args):
    scale = _REPRODUCE_SCALES[args.scale]
    seed = int(args.seed) if args.seed is not None else 42
    sizes = scale["sizes"]
    full = synth_dataset(scale["samples"], _REPRODUCE_SEPARATION, seed)
    train_ds = Dataset(full.graphs[: sizes[0]])
    val_ds = Dataset(full.graphs[sizes[0] : sizes[0] + sizes[1]])
    test_ds = Dataset(full.graphs[sizes[0] + sizes[1] : sum(sizes)])
    _log(event="data", scale=args.scale, train=len(train_ds), val=len(val_ds), test=len(test_ds))

    summary_rows = []
    for paradigm, ae_kind, clf_kind in _reproduce_rows():
        cfg = TrainConfig(
            paradigm=paradigm,
            ae_kind=ae_kind or _TRAIN_DEFAULTS.ae_kind,
            clf_kind=clf_kind,
            batch_size=scale["batch_size"],
            learning_rate=0.001,
            layers=2,
            lam=0.5,
            epochs=scale["epochs"],
            patience=scale["patience"],
            seed=seed,
        )
        row_name = f"{paradigm}-{ae_kind or 'none'}-{clf_kind}"
        row_dir = os.path.join(args.out, "rows", row_name)
        os.makedirs(row_dir, exist_ok=True)
        outcome = train(cfg, train_ds, val_ds, out_dir=row_dir, log_fn=lambda line: None)
        write_model_config(os.path.join(row_dir, "model.config"), cfg, train_ds.feature_dim)
        scores, labels = score_dataset(outcome.autoencoder, outcome.classifier, test_ds)
        folds = kfold_auc(scores, labels, k=5, seed=seed)
        summary_rows.append(
            {
                "paradigm": paradigm,
                "autoencoder": ae_kind or "none",
                "classifier": clf_kind,
                "mean_auc": folds.mean,
                "std_auc": folds.std,
            }
        )
        _log(
            event="row",
            paradigm=paradigm,
            autoencoder=ae_kind or "none",
            classifier=clf_kind,
            mean_auc=repr(folds.mean),
            std_auc=repr(folds.std),
        )
    write_summary_csv(os.path.join(args.out, "comparison.csv"), summary_rows)

    _emit("")
    _emit(f"{'paradigm':<14}{'autoencoder':<13}{'classifier':<12}{'AUC':<8}{'std':<8}")
    for row in summary_rows:
        _emit(
            f"{row['paradigm']:<14}{row['autoencoder']:<13}{row['classifier']:<12}"
            f"{row['mean_auc']:<8.3f}{row['std_auc']:<8.3f}"
        )
    resolved = {
        "scale": args.scale,
        "separation": _REPRODUCE_SEPARATION,
        **{k: (list(v) if isinstance(v, tuple) else v) for k, v in scale.items()},
    }
    return resolved, seed


# ---------------------------------------------------------------------------
# entry point


_HANDLERS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "search": cmd_search,
    "evaluate": cmd_evaluate,
    "compress": cmd_compress,
    "reproduce": cmd_reproduce,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ggc",
        description="Guided graph compression: prepare data, train, search, "
        "evaluate, compress, and reproduce the paradigm comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name, help_text, needs_config=True):
        cmd = sub.add_parser(name, help=help_text)
        if needs_config:
            cmd.add_argument("--config", required=True, help="path to a key = value config file")
        cmd.add_argument("--out", required=True, help="output directory (created if absent)")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument(
            "--workers", type=int, default=None, help="worker processes (or GGC_WORKERS)"
        )
        return cmd

    add_command("prepare", "ingest or generate a dataset and split it")
    add_command("train", "run one training trial")
    add_command("search", "hyperparameter search over the canonical axes")
    add_command("evaluate", "ROC curve, SVG plot, and k-fold AUC for a checkpoint")
    add_command("compress", "write the latent dataset under a frozen encoder")
    reproduce = add_command("reproduce", "scripted paradigm comparison", needs_config=False)
    reproduce.add_argument(
        "--scale",
        choices=sorted(_REPRODUCE_SCALES),
        default="desk",
        help="data and epoch budget for the comparison",
    )
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = _HANDLERS[args.command]
    started = _utc_now()
    t0 = time.perf_counter()
    try:
        os.makedirs(args.out, exist_ok=True)
        resolved, seed = handler(args)
    except GgcError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except OSError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    write_manifest(
        args.out,
        args.command,
        getattr(args, "config", None),
        resolved,
        seed,
        started,
        time.perf_counter() - t0,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
