"""Sigmoid multilayer perceptron trained by backpropagation, and holdout evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np
from numba.typed import List

from .evaluate import ClassMetrics, class_metrics

log = logging.getLogger(__name__)

N_FEATURES = 10
MODEL_FORMAT = "dermabcd-mlp/1"


class TrainingError(RuntimeError):
    """Training diverged (non-finite error)."""


@dataclass
class MlpConfig:
    """Network layout and gradient-descent settings.

    ``hidden`` lists the hidden layer widths (one or two layers). The error is
    the mean over samples of the squared difference between the output and the
    0/1 target; training stops after ``epochs`` passes or as soon as the error
    drops below ``target_error``. ``batch="online"`` updates after every sample
    (visited in a seeded random order), ``"full"`` once per pass.
    """

    hidden: tuple[int, ...] = (4,)
    learning_rate: float = 0.1
    epochs: int = 100
    target_error: float = 0.1
    weight_init: tuple[float, float] = (0.0, 1.0)
    rng_seed: int = 0
    n_inputs: int = N_FEATURES
    batch: str = "online"

    @property
    def layout(self) -> tuple[int, ...]:
        return (self.n_inputs, *self.hidden, 1)

    def validate(self) -> None:
        if not 1 <= len(self.hidden) <= 2 or min(self.hidden) < 1:
            raise ValueError("need one or two hidden layers of at least one unit")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch not in ("online", "full"):
            raise ValueError("batch must be 'online' or 'full'")
        lo, hi = self.weight_init
        if not lo < hi:
            raise ValueError("weight_init must be an interval (lo, hi) with lo < hi")

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        d = dict(d)
        for key in ("hidden", "weight_init"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layout(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1], *(w.shape[0] for w in self.weights))

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def zeros(cls, layout: Sequence[int]) -> "Mlp":
        return cls([np.zeros((o, i)) for i, o in zip(layout[:-1], layout[1:])],
                   [np.zeros(o) for o in layout[1:]])

    @classmethod
    def init(cls, cfg: MlpConfig) -> "Mlp":
        cfg.validate()
        rng = np.random.default_rng(cfg.rng_seed)
        lo, hi = cfg.weight_init
        net = cls.zeros(cfg.layout)
        for w, b in zip(net.weights, net.biases):
            w[:] = rng.uniform(lo, hi, size=w.shape)
            b[:] = rng.uniform(lo, hi, size=b.shape)
        return net


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _activations(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for w, b in zip(net.weights, net.biases):
        acts.append(sigmoid(acts[-1] @ w.T + b))
    return acts


def forward(net: Mlp, x) -> np.ndarray | float:
    """Output score(s) in (0, 1) for one input vector or a batch of rows."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite network input")
    out = _activations(net, np.atleast_2d(arr))[-1][:, 0]
    return float(out[0]) if arr.ndim == 1 else out


def predict(net: Mlp, x, threshold: float = 0.5) -> np.ndarray:
    return (np.atleast_1d(forward(net, x)) >= threshold).astype(int)


def mse(net: Mlp, x: np.ndarray, y: np.ndarray) -> float:
    out = _activations(net, np.atleast_2d(x))[-1][:, 0]
    return float(np.mean((out - y) ** 2))


class Gradient(NamedTuple):
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss: float


def backprop_gradient(net: Mlp, x: np.ndarray, y: np.ndarray) -> Gradient:
    """Exact gradient of the mean squared error over the batch."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    acts = _activations(net, x)
    out = acts[-1][:, 0]
    n = x.shape[0]
    delta = (2.0 / n) * (out - y)[:, None] * acts[-1] * (1 - acts[-1])
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    for k in range(len(net.weights) - 1, -1, -1):
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ net.weights[k]) * acts[k] * (1 - acts[k])
    return Gradient(gw, gb, float(np.mean((out - y) ** 2)))


class TrainResult(NamedTuple):
    net: Mlp
    errors: list[float]


def _descend(net: Mlp, grad: Gradient, lr: float) -> None:
    for w, b, gw, gb in zip(net.weights, net.biases, grad.weights, grad.biases):
        w -= lr * gw
        b -= lr * gb


@numba.njit(cache=True)
def _online_pass(ws, bs, x, y, order, lr):
    # per-sample descent; same arithmetic as backprop_gradient on a batch of one
    n_layers = len(ws)
    for i in order:
        acts = List()
        acts.append(x[i].copy())
        for k in range(n_layers):
            z = ws[k] @ acts[k] + bs[k]
            acts.append(1.0 / (1.0 + np.exp(-z)))
        out = acts[n_layers]
        delta = 2.0 * (out - y[i]) * out * (1.0 - out)
        for k in range(n_layers - 1, -1, -1):
            back = ws[k].T @ delta
            ws[k] -= lr * np.outer(delta, acts[k])
            bs[k] -= lr * delta
            if k > 0:
                delta = back * acts[k] * (1.0 - acts[k])


def train(net: Mlp, x: np.ndarray, y: np.ndarray, cfg: MlpConfig) -> TrainResult:
    """Gradient descent on the squared error.

    ``errors`` holds the training-set error before each pass, plus the final
    error when the epoch budget runs out.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {0.0, 1.0}:
        raise ValueError("training labels must contain both classes")
    net = net.copy()
    ws, bs = List(net.weights), List(net.biases)
    order_rng = np.random.default_rng([cfg.rng_seed, 1])
    errors = []
    for epoch in range(cfg.epochs):
        err = mse(net, x, y)
        if not np.isfinite(err):
            raise TrainingError(f"error became non-finite at epoch {epoch}")
        errors.append(err)
        if err < cfg.target_error:
            return TrainResult(net, errors)
        if cfg.batch == "full":
            _descend(net, backprop_gradient(net, x, y), cfg.learning_rate)
        else:
            _online_pass(ws, bs, x, y, order_rng.permutation(len(y)), float(cfg.learning_rate))
    final = mse(net, x, y)
    if not np.isfinite(final):
        raise TrainingError("error became non-finite after the last epoch")
    errors.append(final)
    return TrainResult(net, errors)


# ---------------------------------------------------------------------------
# data handling


@dataclass(frozen=True)
class MinMax:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "MinMax":
        x = np.asarray(x, dtype=np.float64)
        return cls(x.min(axis=0), x.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (np.asarray(x, dtype=np.float64) - self.lo) / safe, 0.0)


@dataclass
class Dataset:
    ids: list[str]
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=int)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate record ids")
        if not (len(self.ids) == len(self.x) == len(self.y)):
            raise ValueError("ids, features and labels differ in length")

    def __len__(self) -> int:
        return len(self.ids)


def stratified_split(y: np.ndarray, fraction: float, rng: np.random.Generator):
    """Indices (train, test) keeping each class's proportion, at least one of each per side."""
    train, test = [], []
    for label in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == label))
        if len(idx) < 2:
            raise ValueError(f"class {label} has fewer than two samples")
        k = min(max(int(round(fraction * len(idx))), 1), len(idx) - 1)
        train.extend(idx[:k])
        test.extend(idx[k:])
    return np.sort(train), np.sort(test)


@dataclass
class HoldoutReport:
    runs: list[ClassMetrics] = field(default_factory=list)

    @property
    def mean(self) -> ClassMetrics:
        return ClassMetrics(
            sn=float(np.mean([m.sn for m in self.runs])),
            sp=float(np.mean([m.sp for m in self.runs])),
            tcr=float(np.mean([m.tcr for m in self.runs])),
        )

    def table(self, label: str = "") -> str:
        m = self.mean.as_percent()
        head = f"{'config':<16}{'Sn(%)':>9}{'Sp(%)':>9}{'TCR(%)':>9}"
        row = f"{label:<16}{m['Sn(%)']:>9.2f}{m['Sp(%)']:>9.2f}{m['TCR(%)']:>9.2f}"
        return head + "\n" + row


def holdout_eval(data: Dataset, cfg: MlpConfig, split: float = 0.7, runs: int = 100,
                 seed: int = 0) -> HoldoutReport:
    """Repeat: stratified split, normalise on the training rows, train, score the test rows."""
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    report = HoldoutReport()
    for run, ss in enumerate(np.random.SeedSequence(seed).spawn(runs)):
        rng = np.random.default_rng(ss)
        tr, te = stratified_split(data.y, split, rng)
        norm = MinMax.fit(data.x[tr])
        run_cfg = MlpConfig(**{**asdict(cfg), "rng_seed": int(rng.integers(2**31))})
        net = train(Mlp.init(run_cfg), norm.transform(data.x[tr]), data.y[tr], run_cfg).net
        report.runs.append(class_metrics(predict(net, norm.transform(data.x[te])), data.y[te]))
    return report


# ---------------------------------------------------------------------------
# persistence


@dataclass
class Model:
    net: Mlp
    norm: MinMax
    config: MlpConfig

    def score(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(forward(self.net, self.norm.transform(np.atleast_2d(x))))

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "layout": list(self.net.layout),
            "weights": [w.tolist() for w in self.net.weights],
            "biases": [b.tolist() for b in self.net.biases],
            "normalization": {"lo": self.norm.lo.tolist(), "hi": self.norm.hi.tolist()},
            "config": {**asdict(self.config), "hidden": list(self.config.hidden),
                       "weight_init": list(self.config.weight_init)},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Model":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} document")
        net = Mlp([np.asarray(w, dtype=np.float64) for w in doc["weights"]],
                  [np.asarray(b, dtype=np.float64) for b in doc["biases"]])
        if list(net.layout) != doc["layout"]:
            raise ValueError("weight shapes do not match the stored layout")
        norm = MinMax(np.asarray(doc["normalization"]["lo"]), np.asarray(doc["normalization"]["hi"]))
        return cls(net, norm, MlpConfig.from_dict(doc["config"]))


def fit_model(data: Dataset, cfg: MlpConfig) -> tuple[Model, list[float]]:
    norm = MinMax.fit(data.x)
    result = train(Mlp.init(cfg), norm.transform(data.x), data.y, cfg)
    return Model(result.net, norm, cfg), result.errors


def save_model(path: str | Path, model: Model) -> None:
    Path(path).write_text(model.to_json() + "\n")


def load_model(path: str | Path) -> Model:
    return Model.from_json(Path(path).read_text())
