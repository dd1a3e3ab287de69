"""Training paradigms, blended loss, early-stopped epoch loop, and grid search.

Three paradigms are supported: "uncompressed" trains the classical classifier
directly on raw graphs; "two-step" first trains the autoencoder on
reconstruction alone, freezes it, and trains a classifier on the extracted
latent graphs; "guided" trains encoder, decoder, and classifier jointly under
the blended loss, with the encoder receiving gradients from both terms, the
decoder only from the reconstruction term, and the classifier only from the
classification term.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .classical import GcnClassifier, bce_loss
from .errors import ConfigError, TrainingError
from .evaluate import roc_auc
from .gae import Autoencoder, EncoderConfig, pool_size, reconstruction_loss
from .graphs import Dataset, Graph, write_debug_text
from .qgnn import QgnnClassifier
from .qsim import MAX_QUBITS

PARADIGMS = ("uncompressed", "two-step", "guided")
AE_KINDS = ("miagae", "sag")
CLF_KINDS = ("gnn", "qgnn1", "qgnn2")

#: Canonical hyperparameter-axis order for both search protocols.
SEARCH_AXES = ("batch_size", "learning_rate", "layers", "lam")

PHASE_AUTOENCODER = "autoencoder"
PHASE_CLASSIFIER = "classifier"
PHASE_GUIDED = "guided"


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines one training trial.

    layers only matters for the quantum classifiers and lam only in guided
    mode; both are carried (and recorded) regardless. train_cap bounds the
    training samples of every phase except the two-step autoencoder phase,
    which always sees the full split.
    """

    paradigm: str = "guided"
    ae_kind: str = "miagae"
    clf_kind: str = "gnn"
    batch_size: int = 32
    learning_rate: float = 0.001
    layers: int = 2
    lam: float = 0.5
    epochs: int = 100
    patience: int = 25
    seed: int = 42
    shapes: tuple = (13, 13, 2)
    compression_rate: float = 0.4
    kernels: int = 1
    gcn_hidden: int = 32
    train_cap: int = 10000

    def validate(self):
        """Return every violation, not just the first."""
        problems = []
        if self.paradigm not in PARADIGMS:
            problems.append(f"paradigm must be one of {PARADIGMS}, got {self.paradigm!r}")
        if self.ae_kind not in AE_KINDS:
            problems.append(f"ae_kind must be one of {AE_KINDS}, got {self.ae_kind!r}")
        if self.clf_kind not in CLF_KINDS:
            problems.append(f"clf_kind must be one of {CLF_KINDS}, got {self.clf_kind!r}")
        if self.paradigm == "uncompressed" and self.clf_kind != "gnn":
            problems.append("uncompressed paradigm requires the gnn classifier")
        if self.batch_size < 1:
            problems.append(f"batch_size must be positive, got {self.batch_size}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            problems.append(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.layers < 1:
            problems.append(f"layers must be positive, got {self.layers}")
        if not 0.0 <= self.lam <= 1.0:
            problems.append(f"lam must lie in [0, 1], got {self.lam!r}")
        if self.epochs < 1:
            problems.append(f"epochs must be positive, got {self.epochs}")
        if self.patience < 0:
            problems.append(f"patience must be nonnegative, got {self.patience}")
        if not self.shapes or any(int(s) < 1 for s in self.shapes):
            problems.append(f"shapes must be positive layer widths, got {self.shapes!r}")
        if not 0.0 < self.compression_rate <= 1.0:
            problems.append(
                f"compression_rate must lie in (0, 1], got {self.compression_rate!r}"
            )
        if self.kernels < 1:
            problems.append(f"kernels must be positive, got {self.kernels}")
        if self.gcn_hidden < 1:
            problems.append(f"gcn_hidden must be positive, got {self.gcn_hidden}")
        if self.train_cap < 1:
            problems.append(f"train_cap must be positive, got {self.train_cap}")
        return problems


@dataclass(frozen=True)
class EpochRow:
    """One epoch's loss summary; fields not tracked by a phase stay None."""

    phase: str
    epoch: int
    train_lr: float | None
    train_lc: float | None
    train_loss: float
    val_lr: float | None
    val_lc: float | None
    val_loss: float


@dataclass(frozen=True)
class TrialRecord:
    """Everything a finished trial reports.

    wall_clock is excluded from the CSV emissions so reruns are
    byte-identical; it lands in the run manifest instead.
    """

    config: TrainConfig
    rows: tuple
    best_epochs: dict
    final_val_auc: float
    wall_clock: float


@dataclass
class TrainOutcome:
    """A TrialRecord plus the trained (best-epoch) models."""

    record: TrialRecord
    autoencoder: Autoencoder | None
    classifier: object


def guided_loss(l_r, l_c, lam):
    """Blend reconstruction and classification losses: (1-lam)*l_r + lam*l_c."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"classification weight {lam} outside [0, 1]")
    return ad.add(ad.scalar_mul(l_r, 1.0 - lam), ad.scalar_mul(l_c, lam))


def make_models(config: TrainConfig, input_dim):
    """Build the autoencoder (None when uncompressed) and classifier for a config."""
    rng = np.random.default_rng(config.seed)
    ae = None
    clf_dim = int(input_dim)
    if config.paradigm != "uncompressed":
        enc_cfg = EncoderConfig(
            input_dim=int(input_dim),
            shapes=tuple(int(s) for s in config.shapes),
            compression_rate=config.compression_rate,
            kernels=config.kernels,
        )
        ae = Autoencoder(enc_cfg, config.ae_kind, rng)
        clf_dim = int(config.shapes[-1])
    if config.clf_kind == "gnn":
        clf = GcnClassifier(clf_dim, config.gcn_hidden, rng)
    else:
        clf = QgnnClassifier(config.clf_kind, config.layers, clf_dim, rng)
    return ae, clf


def extract_latents(ae: Autoencoder, ds: Dataset) -> Dataset:
    """Run the frozen encoder over a dataset and wrap latents as plain graphs."""
    graphs = []
    for g in ds.graphs:
        x, z = ae.encoder.forward(g)
        graphs.append(Graph(x.data, z.edge_src, z.edge_dst, z.edge_weight, g.label))
    return Dataset(graphs, normalized=ds.normalized)


def score_dataset(ae, clf, ds: Dataset):
    """Continuous ROC scores (and labels) for a dataset under trained models."""
    graphs = extract_latents(ae, ds).graphs if ae is not None else ds.graphs
    scores = np.array([clf.score_graph(g) for g in graphs], dtype=np.float64)
    labels = np.array([g.label for g in graphs], dtype=np.int64)
    return scores, labels


def _cap_dataset(ds: Dataset, cap, seed):
    """Deterministic subsample to at most cap graphs."""
    if cap is None or len(ds) <= cap:
        return ds
    idx = np.sort(np.random.default_rng((seed, 101)).choice(len(ds), size=int(cap), replace=False))
    return Dataset([ds.graphs[i] for i in idx], ds.normalized)


def _batches(n, batch_size, seed, epoch):
    order = np.random.default_rng((seed, epoch)).permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _snapshot(params):
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params, snapshot):
    for name, p in params.items():
        p.data = snapshot[name].copy()


def _classifier_losses(clf, graphs):
    probs = [
        clf.prob(ad.constant(g.features), g.edge_src, g.edge_dst, g.edge_weight)
        for g in graphs
    ]
    labels = np.array([g.label for g in graphs], dtype=np.float64)
    return bce_loss(ad.stack_scalars(probs), labels)


def _autoencoder_losses(ae, graphs):
    recons = [ae.forward(g)[2] for g in graphs]
    return reconstruction_loss(graphs, recons)


def _guided_losses(ae, clf, graphs):
    recons, probs = [], []
    for g in graphs:
        x, z, recon = ae.forward(g)
        recons.append(recon)
        probs.append(clf.prob(x, z.edge_src, z.edge_dst, z.edge_weight))
    labels = np.array([g.label for g in graphs], dtype=np.float64)
    return reconstruction_loss(graphs, recons), bce_loss(ad.stack_scalars(probs), labels)


def compressed_node_count(n, rate, depth):
    """Latent node count after depth pooling steps at the given keep rate."""
    for _ in range(depth):
        n = pool_size(n, rate)
    return n


def _require_quantum_budget(config: TrainConfig, node_counts):
    if config.clf_kind == "gnn":
        return
    biggest = max(node_counts, default=0)
    if biggest > MAX_QUBITS:
        raise TrainingError(
            f"latent graph with {biggest} nodes exceeds the {MAX_QUBITS}-qubit simulator budget"
        )


def _abort_non_finite(out_dir, phase, epoch, idx, graphs, value):
    message = (
        f"non-finite loss {value!r} in phase {phase} epoch {epoch} "
        f"batch indices {sorted(int(i) for i in idx)}"
    )
    if out_dir is not None:
        path = os.path.join(out_dir, f"diagnostic_{phase}_epoch{epoch}.txt")
        write_debug_text(path, Dataset(list(graphs)))
        message += f"; offending batch dumped to {path}"
    raise TrainingError(message)


def _run_phase(phase, config, params, train_loss_fn, val_loss_fn, n_train, log, out_dir, rows):
    """Early-stopped epoch loop shared by every phase.

    train_loss_fn(indices) -> (loss Value, lr float|None, lc float|None) under
    an open tape; val_loss_fn() -> (monitored, lr, lc, total) as plain floats.
    Restores the best-epoch parameter snapshot before returning its index.
    """
    opt = ad.Adam(params, lr=config.learning_rate)
    best_value = math.inf
    best_epoch = 0
    best_snap = _snapshot(params)
    for epoch in range(config.epochs):
        sum_lr = sum_lc = sum_loss = 0.0
        seen = 0
        have_lr = have_lc = False
        for idx in _batches(n_train, config.batch_size, config.seed, epoch):
            with ad.Tape():
                loss, part_lr, part_lc = train_loss_fn(idx)
                value = loss.item()
                if not np.isfinite(value):
                    _abort_non_finite(out_dir, phase, epoch, idx, train_loss_fn.graphs(idx), value)
                ad.backward(loss)
            opt.step()
            ad.zero_grad(params)
            weight = len(idx)
            seen += weight
            sum_loss += value * weight
            if part_lr is not None:
                sum_lr += part_lr * weight
                have_lr = True
            if part_lc is not None:
                sum_lc += part_lc * weight
                have_lc = True
        train_loss = sum_loss / seen
        train_lr = sum_lr / seen if have_lr else None
        train_lc = sum_lc / seen if have_lc else None

        monitored, val_lr, val_lc, val_loss = val_loss_fn()
        if not np.isfinite(monitored):
            raise TrainingError(
                f"non-finite validation loss {monitored!r} in phase {phase} epoch {epoch}"
            )
        rows.append(
            EpochRow(phase, epoch, train_lr, train_lc, train_loss, val_lr, val_lc, val_loss)
        )
        improved = monitored < best_value
        if improved:
            best_value = monitored
            best_epoch = epoch
            best_snap = _snapshot(params)
        log(
            f"event=epoch phase={phase} epoch={epoch} train_loss={train_loss!r} "
            f"val_loss={val_loss!r} improved={int(improved)}"
        )
        if epoch - best_epoch >= config.patience and epoch > 0:
            log(f"event=early_stop phase={phase} epoch={epoch} best_epoch={best_epoch}")
            break
    _restore(params, best_snap)
    return best_epoch


class _PhaseLoss:
    """Bundles a batch-loss closure with access to the offending graphs."""

    def __init__(self, dataset, fn):
        self._dataset = dataset
        self._fn = fn

    def __call__(self, idx):
        return self._fn([self._dataset.graphs[i] for i in idx])

    def graphs(self, idx):
        return [self._dataset.graphs[i] for i in idx]


def train(config: TrainConfig, train_ds: Dataset, val_ds: Dataset, out_dir=None, log_fn=None):
    """Run one trial under a config; returns a TrainOutcome.

    When out_dir is given, the per-epoch CSV, the trial summary, any
    non-finite-loss diagnostics, and the best-epoch checkpoint are written
    there.
    """
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise TrainingError("training and validation splits must be nonempty")
    log = log_fn if log_fn is not None else (lambda line: None)
    started = time.perf_counter()

    ae, clf = make_models(config, train_ds.feature_dim)
    capped = _cap_dataset(train_ds, config.train_cap, config.seed)
    rows = []
    best_epochs = {}

    if config.paradigm == "uncompressed":
        params = clf.params()

        def val_losses():
            value = _classifier_losses(clf, val_ds.graphs).item()
            return value, None, value, value

        best_epochs[PHASE_CLASSIFIER] = _run_phase(
            PHASE_CLASSIFIER,
            config,
            params,
            _PhaseLoss(capped, lambda gs: _split_clf(clf, gs)),
            val_losses,
            len(capped),
            log,
            out_dir,
            rows,
        )
    elif config.paradigm == "two-step":
        ae_params = ae.params()

        def ae_val_losses():
            value = _autoencoder_losses(ae, val_ds.graphs).item()
            return value, value, None, value

        best_epochs[PHASE_AUTOENCODER] = _run_phase(
            PHASE_AUTOENCODER,
            config,
            ae_params,
            _PhaseLoss(train_ds, lambda gs: _split_ae(ae, gs)),
            ae_val_losses,
            len(train_ds),
            log,
            out_dir,
            rows,
        )
        latent_train = extract_latents(ae, capped)
        latent_val = extract_latents(ae, val_ds)
        _require_quantum_budget(
            config, (g.num_nodes for ds in (latent_train, latent_val) for g in ds.graphs)
        )
        clf_params = clf.params()

        def clf_val_losses():
            value = _classifier_losses(clf, latent_val.graphs).item()
            return value, None, value, value

        best_epochs[PHASE_CLASSIFIER] = _run_phase(
            PHASE_CLASSIFIER,
            config,
            clf_params,
            _PhaseLoss(latent_train, lambda gs: _split_clf(clf, gs)),
            clf_val_losses,
            len(latent_train),
            log,
            out_dir,
            rows,
        )
    else:
        depth = len(config.shapes)
        _require_quantum_budget(
            config,
            (
                compressed_node_count(g.num_nodes, config.compression_rate, depth)
                for ds in (capped, val_ds)
                for g in ds.graphs
            ),
        )
        params = {**ae.params(), **clf.params()}

        def guided_val_losses():
            l_r, l_c = _guided_losses(ae, clf, val_ds.graphs)
            total = guided_loss(l_r, l_c, config.lam).item()
            return total, l_r.item(), l_c.item(), total

        def guided_batch(gs):
            l_r, l_c = _guided_losses(ae, clf, gs)
            return guided_loss(l_r, l_c, config.lam), l_r.item(), l_c.item()

        best_epochs[PHASE_GUIDED] = _run_phase(
            PHASE_GUIDED,
            config,
            params,
            _PhaseLoss(capped, guided_batch),
            guided_val_losses,
            len(capped),
            log,
            out_dir,
            rows,
        )

    scores, labels = score_dataset(ae, clf, val_ds)
    final_auc = roc_auc(scores, labels).auc
    record = TrialRecord(
        config, tuple(rows), dict(best_epochs), float(final_auc), time.perf_counter() - started
    )
    log(f"event=trial_done paradigm={config.paradigm} final_val_auc={record.final_val_auc!r}")

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_epochs_csv(os.path.join(out_dir, "epochs.csv"), record)
        write_trial_summary(os.path.join(out_dir, "summary.txt"), record)
        all_params = dict(clf.params()) if ae is None else {**ae.params(), **clf.params()}
        ad.save_checkpoint(os.path.join(out_dir, "model.ckpt"), all_params)
    return TrainOutcome(record, ae, clf)


def _split_clf(clf, graphs):
    loss = _classifier_losses(clf, graphs)
    return loss, None, loss.item()


def _split_ae(ae, graphs):
    loss = _autoencoder_losses(ae, graphs)
    return loss, loss.item(), None


def _format_cell(value):
    return "" if value is None else repr(float(value))


def write_epochs_csv(path, record: TrialRecord):
    """One CSV row per epoch; floats use repr so reruns are byte-identical."""
    lines = ["phase,epoch,train_lr,train_lc,train_loss,val_lr,val_lc,val_loss,is_best"]
    for row in record.rows:
        is_best = 1 if record.best_epochs.get(row.phase) == row.epoch else 0
        lines.append(
            ",".join(
                [
                    row.phase,
                    str(row.epoch),
                    _format_cell(row.train_lr),
                    _format_cell(row.train_lc),
                    _format_cell(row.train_loss),
                    _format_cell(row.val_lr),
                    _format_cell(row.val_lc),
                    _format_cell(row.val_loss),
                    str(is_best),
                ]
            )
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trial_summary(path, record: TrialRecord):
    """Key=value summary record for one finished trial (wall-clock excluded)."""
    cfg = record.config
    lines = [
        f"paradigm={cfg.paradigm}",
        f"ae_kind={cfg.ae_kind}",
        f"clf_kind={cfg.clf_kind}",
        f"batch_size={cfg.batch_size}",
        f"learning_rate={cfg.learning_rate!r}",
        f"layers={cfg.layers}",
        f"lam={cfg.lam!r}",
        f"epochs={cfg.epochs}",
        f"patience={cfg.patience}",
        f"seed={cfg.seed}",
        f"shapes={','.join(str(s) for s in cfg.shapes)}",
        f"compression_rate={cfg.compression_rate!r}",
        f"kernels={cfg.kernels}",
        f"gcn_hidden={cfg.gcn_hidden}",
        f"train_cap={cfg.train_cap}",
    ]
    for phase in sorted(record.best_epochs):
        lines.append(f"best_epoch.{phase}={record.best_epochs[phase]}")
    lines.append(f"epoch_rows={len(record.rows)}")
    lines.append(f"final_val_auc={record.final_val_auc!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SearchResult:
    """Winning config plus every trial record in deterministic order."""

    best_config: TrainConfig
    best_index: int
    records: tuple


def _trial_worker(args):
    config, train_ds, val_ds = args
    return train(config, train_ds, val_ds).record


def _run_trials(configs, train_ds, val_ds, workers, log):
    if workers is not None and workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            records = list(pool.map(_trial_worker, [(c, train_ds, val_ds) for c in configs]))
    else:
        records = [train(c, train_ds, val_ds, log_fn=log).record for c in configs]
    return records


def _argmax_first(values):
    best_i = 0
    for i, v in enumerate(values):
        if v > values[best_i]:
            best_i = i
    return best_i


def grid_search(config: TrainConfig, space, mode, train_ds, val_ds, workers=None, log_fn=None):
    """Hyperparameter search over the canonical axes.

    space maps axis names (a subset of SEARCH_AXES) to candidate lists.
    "exhaustive" runs the full cartesian product in canonical axis order;
    "sequential" optimizes one axis at a time in canonical order, fixing each
    winner before moving on, so the trial count is the sum of axis lengths.
    The winner is the trial with the best validation AUC, earlier trial on
    ties.
    """
    if mode not in ("exhaustive", "sequential"):
        raise ConfigError(f"search mode must be exhaustive or sequential, got {mode!r}")
    if not space:
        raise ConfigError("search space is empty")
    unknown = sorted(set(space) - set(SEARCH_AXES))
    if unknown:
        raise ConfigError(f"unknown search axes: {', '.join(unknown)}")
    for axis, values in space.items():
        if not values:
            raise ConfigError(f"search axis {axis} has no values")
    log = log_fn if log_fn is not None else (lambda line: None)
    axes = [a for a in SEARCH_AXES if a in space]

    if mode == "exhaustive":
        combos = list(itertools.product(*[space[a] for a in axes]))
        configs = [replace(config, **dict(zip(axes, combo))) for combo in combos]
        records = _run_trials(configs, train_ds, val_ds, workers, log)
        for i, record in enumerate(records):
            log(f"event=trial index={i} val_auc={record.final_val_auc!r}")
        best_index = _argmax_first([r.final_val_auc for r in records])
        return SearchResult(configs[best_index], best_index, tuple(records))

    current = {}
    records = []
    best_index = 0
    for axis in axes:
        configs = [replace(config, **current, **{axis: value}) for value in space[axis]]
        axis_records = _run_trials(configs, train_ds, val_ds, workers, log)
        offset = len(records)
        for i, record in enumerate(axis_records):
            log(f"event=trial index={offset + i} axis={axis} val_auc={record.final_val_auc!r}")
        winner = _argmax_first([r.final_val_auc for r in axis_records])
        current[axis] = space[axis][winner]
        best_index = offset + winner
        records.extend(axis_records)
        log(f"event=search_axis axis={axis} winner={space[axis][winner]!r}")
    return SearchResult(replace(config, **current), best_index, tuple(records))
