"""Feedforward classifiers for decoded architectures: init, train, predict, score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import _reference as ref
from .architecture import DecodedArchitecture
from .errors import DegenerateDataError, EmptyDataError, ShapeError
from .market_data import FeatureDataset

ACTIVATION_CODES = {"tansig": ref.TANH, "logsig": ref.LOGISTIC}


@dataclass
class WeightSet:
    """Per-layer ``(fan_in, fan_out)`` matrices and bias vectors, output layer last."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "WeightSet":
        return WeightSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def shapes(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        return [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightSet) or self.shapes() != other.shapes():
            return False
        return bool(np.array_equal(self.flat(), other.flat()))


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    patience: int = 10
    tolerance: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_epochs >= 0, batch_size >= 1 and patience >= 1 required")
        if not self.learning_rate > 0 or not 0 <= self.momentum < 1:
            raise ValueError("learning_rate must be positive and momentum in [0, 1)")


@dataclass(frozen=True)
class EvalReport:
    tp: int
    tn: int
    fp: int
    fn: int
    overall_accuracy: float
    balanced_accuracy: float
    balanced_error: float
    mcc: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def layer_dims(arch: DecodedArchitecture) -> list[int]:
    return [arch.n_inputs, *(s for s, _ in arch.active_layers), 1]


def _codes(arch: DecodedArchitecture) -> np.ndarray:
    return np.array([ACTIVATION_CODES[f] for _, f in arch.active_layers], dtype=np.int64)


def init_weights(arch: DecodedArchitecture, seed: int) -> WeightSet:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = layer_dims(arch)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return WeightSet(weights, biases)


def _check_shapes(arch: DecodedArchitecture, weights: WeightSet) -> None:
    dims = layer_dims(arch)
    expected = [((a, b), (b,)) for a, b in zip(dims, dims[1:])]
    if weights.shapes() != expected:
        raise ShapeError(f"weights {weights.shapes()} do not match architecture {expected}")


def forward(arch: DecodedArchitecture, weights: WeightSet, x) -> np.ndarray | float:
    """Output probability for one projected feature vector or a matrix of them."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != arch.n_inputs:
        raise ShapeError(f"input width {X.shape[-1]} != {arch.n_inputs} selected features")
    _check_shapes(arch, weights)
    _, z = ref.forward_pass(X, weights.weights, weights.biases, _codes(arch))
    p = ref.logistic(z)
    return float(p[0]) if single else p


def predict(arch: DecodedArchitecture, weights: WeightSet, X) -> np.ndarray:
    return (np.asarray(forward(arch, weights, np.atleast_2d(X))) > 0.5).astype(np.int8)


def project(arch: DecodedArchitecture, ds: FeatureDataset) -> np.ndarray:
    return np.ascontiguousarray(ds.X[:, list(arch.selected_features)])


def class_weights(y: np.ndarray) -> np.ndarray:
    """Per-sample weights inversely proportional to class frequency (mean 1)."""
    y = np.asarray(y)
    n = len(y)
    n1 = int(y.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise DegenerateDataError("training set contains a single class")
    return np.where(y == 1, n / (2.0 * n1), n / (2.0 * n0))


def loss_and_gradient(arch: DecodedArchitecture, weights: WeightSet, X, y, sample_weight=None):
    """Mean class-weighted cross-entropy and its gradient as a :class:`WeightSet`."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    sw = class_weights(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    _check_shapes(arch, weights)
    loss, gw, gb = ref.loss_and_grad(X, y, sw, weights.weights, weights.biases, _codes(arch))
    return loss, WeightSet(gw, gb)


def train(arch: DecodedArchitecture, weights0: WeightSet, train_set: FeatureDataset,
          cfg: TrainConfig, backend=None) -> WeightSet:
    """Minimise class-weighted cross-entropy with mini-batch momentum SGD.

    Stops after ``cfg.max_epochs`` or once the epoch loss has improved by less
    than ``cfg.tolerance`` for ``cfg.patience`` consecutive epochs.
    """
    _check_shapes(arch, weights0)
    y = train_set.y.astype(float)
    sw = class_weights(y)
    if cfg.max_epochs == 0:
        return weights0.copy()
    run_epoch = backend or _kernels.run_epoch
    X = project(arch, train_set)
    acts = _codes(arch)
    w = weights0.copy()
    vel_w = [np.zeros_like(a) for a in w.weights]
    vel_b = [np.zeros_like(a) for a in w.biases]
    rng = np.random.default_rng(cfg.seed)
    prev = math.inf
    stall = 0
    for _ in range(cfg.max_epochs):
        perm = rng.permutation(len(y)).astype(np.int64)
        snapshot = w.copy()
        loss = run_epoch(X, y, sw, perm, cfg.batch_size, cfg.learning_rate, cfg.momentum,
                         w.weights, w.biases, vel_w, vel_b, acts)
        if not math.isfinite(loss) or not np.all(np.isfinite(w.flat())):
            return snapshot
        stall = stall + 1 if prev - loss < cfg.tolerance else 0
        if stall >= cfg.patience:
            break
        prev = loss
    return w


def metrics_from_counts(tp: int, tn: int, fp: int, fn: int) -> EvalReport:
    n = tp + tn + fp + fn
    if n == 0:
        raise EmptyDataError("no predictions to score")
    recalls = []
    if tp + fn > 0:
        recalls.append(tp / (tp + fn))
    if tn + fp > 0:
        recalls.append(tn / (tn + fp))
    balanced = sum(recalls) / len(recalls)
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(den) if den > 0 else 0.0
    return EvalReport(tp, tn, fp, fn, (tp + tn) / n, balanced, 1.0 - balanced, mcc)


def metrics_from_predictions(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise ShapeError("labels and predictions differ in length")
    tp = int(np.sum(y_true & y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    return metrics_from_counts(tp, tn, fp, fn)


def evaluate(arch: DecodedArchitecture, weights: WeightSet, ds: FeatureDataset) -> EvalReport:
    if len(ds) == 0:
        raise EmptyDataError("cannot evaluate on an empty dataset")
    return metrics_from_predictions(ds.y, predict(arch, weights, project(arch, ds)))


@dataclass
class AggregateReport:
    """Mean and standard deviation of metrics over repeated train/test cycles."""

    reports: list[EvalReport] = field(default_factory=list)

    def _stat(self, name: str, fn) -> float:
        vals = np.array([getattr(r, name) for r in self.reports])
        return float(fn(vals))

    def mean(self, name: str) -> float:
        return self._stat(name, np.mean)

    def std(self, name: str) -> float:
        return self._stat(name, lambda v: v.std(ddof=1) if len(v) > 1 else 0.0)

    def to_dict(self) -> dict:
        out = {"cycles": len(self.reports)}
        for name in ("overall_accuracy", "balanced_accuracy", "balanced_error", "mcc"):
            out[f"{name}_mean"] = self.mean(name)
            out[f"{name}_sd"] = self.std(name)
        return out
