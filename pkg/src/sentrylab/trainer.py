"""Source pretraining and selective entropy adaptation.

One adaptation step, in order:

1. draw a class-balanced source batch and a pseudo-class-balanced target batch
2. clean target predictions ``yhat``
3. committees of augmented copies and their consistency verdicts
4. choose the entropy-min / entropy-max inputs for the selection mode
5. store ``yhat`` as the instances' pseudolabels and push it onto the queue
6. cross-entropy + information entropy (against the queue) + selective
   entropy, then one optimiser step

Target pools are rebuilt from the stored pseudolabels after every epoch.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis.metrics import checker_precision, confusion_matrix, mean_per_class_accuracy
from .augment import VOTING, TransformFamily, check_committees, committee_batch
from .core.checkpoint import save_checkpoint
from .core.losses import loss_ce, loss_total, selective_entropy, smooth_distribution
from .core.model import Classifier, pseudolabel, zeros_like_params
from .core.optim import DivergenceError, OptimizerState, grad_step
from .data.dataset import Dataset
from .data.sampler import make_sampler, next_batch, refresh_pseudo_pools

log = logging.getLogger(__name__)

SELECTION_MODES = ("committee", "all", "oracle", "none")
UPDATE_MODES = ("per-batch", "per-epoch")


@dataclass
class TrainConfig:
    epochs: int = 20
    source_epochs: int = 20
    batch_size: int = 128
    optimizer: str = "adam"
    lr: float = 2e-4
    momentum: float = 0.9
    weight_decay: float = 0.0
    lambda_ie: float = 0.1
    lambda_sentry: float = 1.0
    k: int = 3
    num_ops: int = 3
    severity: float = 2.0
    queue_size: int = 256
    voting: str = "majority"
    # committee: consistency checker; all: every instance minimised on the
    # clean input; oracle: ground-truth correctness; none: no selective term
    selection: str = "committee"
    entmax: bool = True
    backprop_augmented: bool = True
    source_sampler: str = "balanced"
    target_sampler: str = "pseudo"
    update_mode: str = "per-batch"
    seed: int = 0
    diagnostics: bool = True
    checkpoint_every: int = 0

    def validate(self, target: Dataset | None = None):
        checks = [
            (self.lambda_ie >= 0, "lambda_ie", "must be >= 0"),
            (self.lambda_sentry >= 0, "lambda_sentry", "must be >= 0"),
            (self.k >= 1, "k", "must be >= 1"),
            (self.num_ops >= 1, "num_ops", "must be >= 1"),
            (self.severity >= 0, "severity", "must be >= 0"),
            (self.queue_size >= 1, "queue_size", "must be >= 1"),
            (self.batch_size >= 1, "batch_size", "must be >= 1"),
            (self.epochs >= 0 and self.source_epochs >= 0, "epochs", "must be >= 0"),
            (self.lr > 0, "lr", "must be > 0"),
            (self.voting in VOTING, "voting", f"must be one of {VOTING}"),
            (self.selection in SELECTION_MODES, "selection", f"must be one of {SELECTION_MODES}"),
            (self.update_mode in UPDATE_MODES, "update_mode", f"must be one of {UPDATE_MODES}"),
            (self.optimizer in ("adam", "sgd"), "optimizer", "must be adam or sgd"),
            (self.source_sampler in ("balanced", "uniform"), "source_sampler", "must be balanced or uniform"),
            (self.target_sampler in ("pseudo", "uniform"), "target_sampler", "must be pseudo or uniform"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        if self.selection == "oracle" and target is not None and not target.has_labels:
            raise ConfigError("selection", "oracle selection needs target ground truth")

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(self.optimizer, self.lr, momentum=self.momentum,
                              weight_decay=self.weight_decay)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class PseudoLabelQueue:
    """Fixed-capacity FIFO of recent pseudolabels."""

    def __init__(self, capacity: int, n_classes: int):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.capacity = capacity
        self.n_classes = n_classes
        self._buf = deque(maxlen=capacity)

    def __len__(self):
        return len(self._buf)

    def enqueue(self, labels):
        self._buf.extend(int(c) for c in np.atleast_1d(labels))

    def items(self) -> list[int]:
        return list(self._buf)

    def distribution(self) -> np.ndarray:
        counts = np.bincount(np.asarray(self._buf, dtype=np.int64), minlength=self.n_classes)
        return smooth_distribution(counts)


CSV_COLUMNS = ("epoch", "loss_ce", "loss_ie", "loss_sentry", "loss_total", "target_acc",
               "frac_min", "frac_max", "prec_correct", "prec_incorrect", "pseudo_hist")


@dataclass
class EpochRow:
    epoch: int
    loss_ce: float
    loss_ie: float
    loss_sentry: float
    loss_total: float
    target_acc: float | None
    frac_min: float
    frac_max: float
    prec_correct: float | None
    prec_incorrect: float | None
    pseudo_hist: tuple[int, ...]


@dataclass
class RunRecord:
    rows: list[EpochRow] = field(default_factory=list)
    # per epoch: dict of equal-length arrays, one entry per target draw
    logs: list[dict[str, np.ndarray]] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def logs_to_csv(self, path):
        cols = ("epoch", "step", "index", "clean_pred", "n_match", "consistent", "selected", "true_label")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for e, lg in enumerate(self.logs, start=1):
                for vals in zip(*(lg[c] for c in cols[1:])):
                    w.writerow([e, *(int(v) for v in vals)])

    @property
    def final_accuracy(self) -> float | None:
        return self.rows[-1].target_acc if self.rows else self.summary.get("initial_target_acc")


def read_epochs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = {}
        for k, v in r.items():
            if k == "pseudo_hist":
                d[k] = tuple(int(x) for x in v.split(";")) if v else ()
            elif k == "epoch":
                d[k] = int(v)
            else:
                d[k] = float(v) if v != "" else None
        out.append(d)
    return out


def read_verdict_log(path) -> list[dict[str, np.ndarray]]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    cols = ("epoch", "step", "index", "clean_pred", "n_match", "consistent", "selected", "true_label")
    if data.size == 0:
        return []
    out = []
    for e in range(1, int(data[:, 0].max()) + 1):
        rows = data[data[:, 0] == e]
        out.append({c: rows[:, i] for i, c in enumerate(cols) if i > 0})
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ";".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def evaluate(model: Classifier, dataset: Dataset) -> float:
    """Mean per-class accuracy (evaluation path)."""
    pred = pseudolabel(model, dataset.X)
    cm = confusion_matrix(dataset.labels_for("eval"), pred, dataset.n_classes)
    return mean_per_class_accuracy(cm)


def _check_finite(value, where):
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite loss during {where}")


def train_source(model: Classifier, source: Dataset, config: TrainConfig, source_test: Dataset | None = None,
                 steps_per_epoch: int | None = None, epochs: int | None = None) -> tuple[Classifier, RunRecord]:
    """Supervised cross-entropy training with the configured source sampler.

    ``steps_per_epoch`` defaults to ``len(source) // batch_size``.
    """
    config.validate()
    model = model.copy()
    epochs = config.source_epochs if epochs is None else epochs
    src_rng = _streams(config.seed)[0]
    sampler = make_sampler(config.source_sampler, source, src_rng)
    y_all = source.labels_for("train")
    opt = config.optimizer_state()
    steps = steps_per_epoch or max(1, len(source) // config.batch_size)
    record = RunRecord()
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for _ in range(steps):
            idx = next_batch(sampler, config.batch_size)
            loss = loss_ce(model, source.X[idx], y_all[idx])
            _check_finite(loss.value, "source training")
            grad_step(model, loss.grad, opt)
            losses.append(loss.value)
        acc = evaluate(model, source_test) if source_test is not None else None
        m = float(np.mean(losses))
        record.rows.append(EpochRow(epoch, m, 0.0, 0.0, m, acc, 0.0, 0.0, None, None, ()))
        record.wall_clock.append(time.perf_counter() - t0)
    record.summary["source_train_acc"] = evaluate(model, source)
    if source_test is not None:
        record.summary["source_test_acc"] = evaluate(model, source_test)
    return model, record


def _selection_inputs(cfg: TrainConfig, xt, members, verdicts, correct):
    """Entropy-min and entropy-max inputs plus per-draw selection codes (+1/-1/0)."""
    n = len(xt)
    if cfg.selection == "none" or cfg.lambda_sentry == 0:
        return None, None, np.zeros(n, dtype=np.int64)
    if cfg.selection == "all":
        return xt, None, np.ones(n, dtype=np.int64)
    if cfg.selection == "committee":
        good = np.array([v.consistent for v in verdicts])
        pick = np.array([v.last_match if v.consistent else v.last_mismatch for v in verdicts])
    else:
        # oracle: ground truth decides the group; both groups use the last
        # member that still shows the clean prediction, so entropy max acts
        # on a view carrying the error. -1 falls back to the clean input
        good = np.asarray(correct, dtype=bool)
        pick = np.array([-1 if v.last_match is None else v.last_match for v in verdicts], dtype=np.int64)
    if cfg.backprop_augmented:
        chosen = members[np.arange(n), np.maximum(pick, 0)]
        chosen[pick < 0] = xt[pick < 0]
    else:
        chosen = xt
    codes = np.where(good, 1, -1 if cfg.entmax else 0)
    x_min = chosen[good]
    x_max = chosen[~good] if cfg.entmax else None
    return x_min, x_max, codes


def adapt_sentry(model: Classifier, source: Dataset, target: Dataset, config: TrainConfig,
                 target_test: Dataset | None = None, family: TransformFamily | None = None,
                 checkpoint_dir=None) -> tuple[Classifier, RunRecord]:
    """Adapt a source-trained model to the unlabeled target domain."""
    cfg = config
    cfg.validate(target)
    family = family or TransformFamily(image_shape=target.image_shape)
    model = model.copy()
    src_rng, tgt_rng, aug_rng = _streams(cfg.seed)
    C = model.n_classes

    target.set_pseudolabels(slice(None), pseudolabel(model, target.X))
    src_sampler = make_sampler(cfg.source_sampler, source, src_rng)
    tgt_sampler = make_sampler(cfg.target_sampler, target, tgt_rng)
    y_src = source.labels_for("train")
    queue = PseudoLabelQueue(cfg.queue_size, C)
    opt = cfg.optimizer_state()
    steps = max(1, min(len(source), len(target)) // cfg.batch_size)
    need_committee = cfg.lambda_sentry > 0 and cfg.selection in ("committee", "oracle")
    need_labels = cfg.diagnostics and target.has_labels

    record = RunRecord()
    if target_test is not None and cfg.diagnostics:
        record.summary["initial_target_acc"] = evaluate(model, target_test)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        sums = {"ce": 0.0, "ie": 0.0, "sentry": 0.0, "total": 0.0}
        acc_grad = zeros_like_params(model) if cfg.update_mode == "per-epoch" else None
        lg = {k: [] for k in ("step", "index", "clean_pred", "n_match", "consistent", "selected")}
        for step in range(steps):
            si = next_batch(src_sampler, cfg.batch_size)
            ti = next_batch(tgt_sampler, cfg.batch_size)
            xt = target.X[ti]
            yhat = pseudolabel(model, xt)

            members, verdicts = None, None
            if need_committee:
                members = committee_batch(aug_rng, xt, cfg.k, cfg.num_ops, cfg.severity, family)
                verdicts = check_committees(model, xt, members, cfg.voting, clean_preds=yhat)
            correct = None
            if cfg.selection == "oracle" and cfg.lambda_sentry > 0:
                correct = yhat == target.labels_for("oracle", ti)
            x_min, x_max, codes = _selection_inputs(cfg, xt, members, verdicts, correct)

            target.set_pseudolabels(ti, yhat)
            queue.enqueue(yhat)

            sentry = None
            if cfg.lambda_sentry > 0 and cfg.selection != "none":
                sentry = selective_entropy(model, x_min, x_max, n_total=len(ti))
            total, parts = loss_total(model, source.X[si], y_src[si], xt, queue.distribution(), sentry,
                                      cfg.lambda_ie, cfg.lambda_sentry)
            _check_finite(total.value, f"adaptation epoch {epoch}")
            if acc_grad is None:
                grad_step(model, total.grad, opt)
            else:
                for k_, g in total.grad.items():
                    acc_grad[k_] += g / steps
            for k_ in sums:
                sums[k_] += parts[k_] / steps

            lg["step"].append(np.full(len(ti), step))
            lg["index"].append(ti)
            lg["clean_pred"].append(yhat)
            lg["n_match"].append(np.array([sum(v.matches) for v in verdicts]) if verdicts
                                 else np.full(len(ti), -1))
            lg["consistent"].append(np.array([v.consistent for v in verdicts], dtype=np.int64) if verdicts
                                    else np.full(len(ti), -1))
            lg["selected"].append(codes)
        if acc_grad is not None:
            grad_step(model, acc_grad, opt)
        refresh_pseudo_pools(tgt_sampler, target)

        lg = {k: np.concatenate(v) for k, v in lg.items()}
        lg["true_label"] = target.labels_for("eval", lg["index"]) if need_labels else np.full(len(lg["index"]), -1)
        record.logs.append(lg)
        prec = checker_precision(lg["consistent"] == 1, lg["clean_pred"], lg["true_label"]) \
            if need_labels and need_committee else None
        acc = evaluate(model, target_test) if target_test is not None and cfg.diagnostics else None
        hist = tuple(int(c) for c in np.bincount(target.pseudo, minlength=C))
        record.rows.append(EpochRow(
            epoch, sums["ce"], sums["ie"], sums["sentry"], sums["total"], acc,
            float(np.mean(lg["selected"] == 1)), float(np.mean(lg["selected"] == -1)),
            prec.correct if prec else None, prec.incorrect if prec else None, hist,
        ))
        record.wall_clock.append(time.perf_counter() - t0)
        if checkpoint_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"epoch{epoch:04d}.npz", model)
        log.info("epoch %d: acc=%s min=%.3f max=%.3f", epoch, acc, record.rows[-1].frac_min,
                 record.rows[-1].frac_max)
    record.summary["final_target_acc"] = record.rows[-1].target_acc if record.rows else \
        record.summary.get("initial_target_acc")
    return model, record


def expand_grid(axes: dict[str, list]) -> list[dict]:
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise ValueError("ablation grid is empty")
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def run_ablation_grid(model, source, target, base: TrainConfig, axes: dict[str, list],
                      target_test=None, family=None) -> list[tuple[dict, RunRecord]]:
    """Run every cell of the cross product over ``TrainConfig`` fields with shared seeds."""
    valid = set(asdict(base))
    bad = [k for k in axes if k not in valid]
    if bad:
        raise ConfigError(bad[0], "not a training option")
    results = []
    for cell in expand_grid(axes):
        cfg = replace(base, **cell)
        tgt = target.subset(np.arange(len(target)))
        _, rec = adapt_sentry(model, source, tgt, cfg, target_test, family)
        results.append((cell, rec))
    return results


def grid_summary_csv(results, path=None) -> str:
    keys = list(results[0][0]) if results else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*keys, "final_target_acc", "final_frac_min", "final_frac_max"])
    for cell, rec in results:
        last = rec.rows[-1] if rec.rows else None
        w.writerow([*(_fmt(cell[k]) for k in keys), _fmt(rec.final_accuracy),
                    _fmt(last.frac_min if last else None), _fmt(last.frac_max if last else None)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def summary_text(record: RunRecord, extra: dict | None = None) -> str:
    data = dict(record.summary)
    data["epochs"] = len(record.rows)
    data["wall_clock_s"] = round(float(sum(record.wall_clock)), 3)
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True, default=str) + "\n"
