"""Training loop, evaluation metrics, and throughput measurement.

Training is single-threaded over seeded batch shuffles so that two runs
with the same config produce bit-identical histories. Checkpoint selection
follows validation accuracy (ties go to the earlier epoch) with early
stopping after ``patience`` + 1 non-improving epochs.

Each metric is computed as a single integer ratio -- precision TP/(TP+FP),
recall TP/(TP+FN), F1 2TP/(2TP+FP+FN), accuracy (TP+TN)/total -- so the
float result is the correctly rounded value of the exact rational number.
Zero denominators yield 0 by definition.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .errors import EmptyMatrixError, EmptyTestSetError
from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 3e-4
    weight_decay: float = 0.0
    seed: int = 0
    patience: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 1, batch_size >= 1, lr > 0 required")


class Adam:
    """Adam with decoupled weight decay over a model's trainable items."""

    def __init__(self, model, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in model.trainable_items()}
        self.v = {k: np.zeros_like(v) for k, v in model.trainable_items()}

    def step(self, model, grads) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for key, arr in model.trainable_items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            if c.weight_decay:
                arr -= arr.dtype.type(c.learning_rate * c.weight_decay) * arr
            update = (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            arr -= arr.dtype.type(c.learning_rate) * update


@dataclass
class TrainResult:
    history: list                     # per-epoch dicts
    best_epoch: int
    best_val_accuracy: float
    diverged: bool = False
    stopped_early: bool = False


def _snapshot(model) -> dict:
    return {k: v.copy() for k, v in model.trainable_items()}


def _restore(model, snap: dict) -> None:
    for key, arr in model.trainable_items():
        arr[...] = snap[key]


def train(model, train_data, val_data, cfg: TrainConfig) -> TrainResult:
    """Fit ``model`` in place, leaving it at the best-validation checkpoint.

    ``train_data``/``val_data`` are (sequences, labels) pairs of encoded
    :class:`~dgadetect.tokenizer.TokenSequence` lists and int label arrays.
    A non-finite batch loss aborts the run, keeping the last finite best
    checkpoint and flagging ``diverged`` in the result.
    """
    seqs, labels = train_data
    if not seqs or not val_data[0]:
        raise EmptyTestSetError("train and validation sets must be non-empty")
    labels = np.asarray(labels, dtype=np.int64)
    optimizer = Adam(model, cfg)
    shuffle_rng = SplitMix64(derive_seed(cfg.seed, "epoch_shuffle"))
    dropout_rng = (np.random.default_rng(derive_seed(cfg.seed, "dropout"))
                   if model.config.dropout > 0 else None)

    history: list[dict] = []
    best_val, best_epoch, best_snap = -1.0, -1, _snapshot(model)
    diverged = False
    stopped_early = False
    non_improving = 0

    for epoch in range(cfg.epochs):
        order = list(range(len(seqs)))
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = [seqs[i] for i in idx]
            y = labels[idx]
            value, grads = neural.backward(model, batch, y, loss="class",
                                           dropout_rng=dropout_rng)
            if not np.isfinite(value):
                diverged = True
                break
            optimizer.step(model, grads)
            epoch_loss += value * len(idx)
            probs = neural.forward(model, batch)
            correct += int((probs.class_probs.argmax(1) == y).sum())
        if diverged:
            break
        train_loss = epoch_loss / len(order)
        train_acc = correct / len(order)
        val_loss, val_acc = _validate(model, val_data, cfg.batch_size)
        history.append({
            "epoch": epoch, "train_loss": train_loss, "train_accuracy": train_acc,
            "val_loss": val_loss, "val_accuracy": val_acc,
        })
        if val_acc > best_val:
            best_val, best_epoch, best_snap = val_acc, epoch, _snapshot(model)
            non_improving = 0
        else:
            non_improving += 1
            if non_improving > cfg.patience:
                stopped_early = True
                break

    _restore(model, best_snap)
    return TrainResult(history=history, best_epoch=best_epoch,
                       best_val_accuracy=best_val, diverged=diverged,
                       stopped_early=stopped_early)


def _validate(model, data, batch_size) -> tuple[float, float]:
    seqs, labels = data
    labels = np.asarray(labels, dtype=np.int64)
    total_loss = 0.0
    correct = 0
    for start in range(0, len(seqs), batch_size):
        batch = seqs[start:start + batch_size]
        y = labels[start:start + batch_size]
        total_loss += neural.loss_class(model, batch, y) * len(batch)
        probs = neural.forward(model, batch)
        correct += int((probs.class_probs.argmax(1) == y).sum())
    return total_loss / len(seqs), correct / len(seqs)


# --- metrics ---

def binary_metrics(tp: int, fp: int, fn: int, tn: int):
    """(accuracy, precision, recall, f1) from one-vs-rest counts."""
    total = tp + fp + fn + tn
    if total == 0:
        raise EmptyMatrixError("confusion matrix has no samples")
    accuracy = (tp + tn) / total
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return accuracy, precision, recall, f1


@dataclass
class ConfusionMatrix:
    """k x k table; rows are true classes, columns predictions."""

    table: np.ndarray
    class_names: list

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_names) -> "ConfusionMatrix":
        k = len(class_names)
        table = np.zeros((k, k), dtype=np.int64)
        np.add.at(table, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(table=table, class_names=list(class_names))

    @property
    def total(self) -> int:
        return int(self.table.sum())

    def counts(self, class_index: int) -> tuple[int, int, int, int]:
        """One-vs-rest (TP, FP, FN, TN) for a class."""
        tp = int(self.table[class_index, class_index])
        fp = int(self.table[:, class_index].sum()) - tp
        fn = int(self.table[class_index, :].sum()) - tp
        tn = self.total - tp - fp - fn
        return tp, fp, fn, tn

    def accuracy(self) -> float:
        if self.total == 0:
            raise EmptyMatrixError("confusion matrix has no samples")
        return int(np.trace(self.table)) / self.total


def metrics(cm: ConfusionMatrix, class_index: int = 1):
    """(accuracy, precision, recall, f1) for one class of a confusion
    matrix; accuracy is the overall multi-class accuracy."""
    tp, fp, fn, tn = cm.counts(class_index)
    _, precision, recall, f1 = binary_metrics(tp, fp, fn, tn)
    return cm.accuracy(), precision, recall, f1


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    per_class: list
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: list                     # k x k nested lists
    class_names: list
    throughput: dict = field(default_factory=dict)  # phase -> samples/sec

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": [
                {"label": c.label, "precision": c.precision, "recall": c.recall,
                 "f1": c.f1, "support": c.support}
                for c in self.per_class
            ],
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion,
            "class_names": list(self.class_names),
            "throughput": dict(self.throughput),
        }

    def comparable_dict(self) -> dict:
        """Everything except wall-clock-derived fields."""
        d = self.to_dict()
        d.pop("throughput")
        return d


def report_from_confusion(cm: ConfusionMatrix) -> EvalReport:
    per_class = []
    for i, name in enumerate(cm.class_names):
        tp, fp, fn, tn = cm.counts(i)
        _, precision, recall, f1 = binary_metrics(tp, fp, fn, tn)
        per_class.append(ClassMetrics(label=str(name), precision=precision,
                                      recall=recall, f1=f1, support=tp + fn))
    k = len(per_class)
    return EvalReport(
        accuracy=cm.accuracy(),
        per_class=per_class,
        macro_precision=sum(c.precision for c in per_class) / k,
        macro_recall=sum(c.recall for c in per_class) / k,
        macro_f1=sum(c.f1 for c in per_class) / k,
        confusion=cm.table.tolist(),
        class_names=list(cm.class_names),
    )


def predict_classes(model, seqs, batch_size: int = 256) -> np.ndarray:
    """Argmax class indices; ties resolve to the lowest class index."""
    preds = np.empty(len(seqs), dtype=np.int64)
    for start in range(0, len(seqs), batch_size):
        batch = seqs[start:start + batch_size]
        probs = neural.forward(model, batch).class_probs
        preds[start:start + len(batch)] = probs.argmax(1)
    return preds


def evaluate(model, test_data, class_names=None, batch_size: int = 256) -> EvalReport:
    """Score a test set: argmax predictions, per-class PRF, and accuracy
    cross-checked against mean per-sample correctness."""
    seqs, labels = test_data
    if not seqs:
        raise EmptyTestSetError("test set is empty")
    labels = np.asarray(labels, dtype=np.int64)
    if class_names is None:
        class_names = [str(i) for i in range(model.config.n_classes)]
    preds = predict_classes(model, seqs, batch_size)
    cm = ConfusionMatrix.from_predictions(labels, preds, class_names)
    report = report_from_confusion(cm)
    direct = int((preds == labels).sum()) / len(seqs)
    assert report.accuracy == direct  # two-path equality, exact
    return report


def benchmark(step_fn, n_samples: int, runs: int = 3,
              timer=time.perf_counter) -> float:
    """Median samples/sec of ``step_fn`` over ``runs`` warm executions.

    One untimed warm-up call precedes measurement. The timer is injectable
    for tests.
    """
    step_fn()
    rates = []
    for _ in range(max(3, runs)):
        t0 = timer()
        step_fn()
        t1 = timer()
        elapsed = max(t1 - t0, 1e-12)
        rates.append(n_samples / elapsed)
    rates.sort()
    return rates[len(rates) // 2]
