"""Small deterministic epoch classifier: pre-training, fine-tuning, prediction.

A two-hidden-layer tanh perceptron on the 5 band-power features. Training is
mini-batch momentum gradient descent on cross-entropy with validation-best
model selection (macro-F1, ties to the earliest epoch). The hot loop runs in
the compiled kernel when available (see ``xferbench.kernels``).
"""
from __future__ import annotations

import base64
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xferbench import kernels, signals
from xferbench.errors import EmptySet, IncompatibleInputSpec, InvalidParams, NonFiniteLoss
from xferbench.metrics import score
from xferbench.stages import N_STAGES
from xferbench.synthgen import N_FEATURES, EpochSet

INIT_SD = 0.1
SD_FLOOR = 1e-8
CHECKPOINT_FORMAT = "xferbench-checkpoint"
CHECKPOINT_VERSION = 1
LAYER_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    max_epochs: int = 50
    seed: int = 0
    hidden: tuple[int, int] = (32, 32)
    weight_decay: float = 0.0

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidParams("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise InvalidParams("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise InvalidParams("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise InvalidParams("max_epochs must be >= 0")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise InvalidParams("hidden must be two positive widths")
        if self.weight_decay < 0:
            raise InvalidParams("weight_decay must be >= 0")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass(eq=False)
class ModelCheckpoint:
    """Immutable trained model. Weights are stored as float32."""

    weights: list[np.ndarray]
    input_spec: dict
    norm_mean: np.ndarray
    norm_sd: np.ndarray
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.ascontiguousarray(w, dtype=np.float32) for w in self.weights]
        self.norm_mean = np.asarray(self.norm_mean, dtype=np.float64)
        self.norm_sd = np.asarray(self.norm_sd, dtype=np.float64)
        for w in self.weights:
            w.setflags(write=False)
            if not np.all(np.isfinite(w)):
                raise NonFiniteLoss("checkpoint weights must be finite")
        if np.any(self.norm_sd <= 0):
            raise InvalidParams("normalization sd must be positive")

    def params64(self) -> list[np.ndarray]:
        return [w.astype(np.float64) for w in self.weights]

    def digest(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ModelCheckpoint):
            return NotImplemented
        return to_bytes(self) == to_bytes(other)


# -- inputs ---------------------------------------------------------------


def input_spec_for(es: EpochSet) -> dict:
    if es.mode == "Features":
        return {"mode": "Features", "feature_dim": N_FEATURES}
    return {"mode": "Signal", "rate_hz": int(es.rate_hz)}


def featurize(es: EpochSet, spec: dict) -> np.ndarray:
    """Feature matrix of ``es`` as seen by a model with ``spec``.

    Signal epochs are Fourier-resampled to the model's rate before band-power
    featurization; feature epochs are used as-is.
    """
    if es.mode != spec["mode"]:
        raise IncompatibleInputSpec(f"{es.mode} epochs cannot feed a {spec['mode']} model")
    if es.mode == "Features":
        if es.data.ndim != 2 or es.data.shape[1] != spec["feature_dim"]:
            raise IncompatibleInputSpec(f"expected {spec['feature_dim']} features per epoch")
        return np.asarray(es.data, dtype=np.float64)
    data = np.asarray(es.data, dtype=np.float64)
    if es.rate_hz != spec["rate_hz"]:
        data = signals.resample_batch(data, es.rate_hz, spec["rate_hz"])
    return signals.bandpower_batch(data, spec["rate_hz"])


def _normalize(X, mean, sd):
    return np.ascontiguousarray((X - mean) / sd)


# -- training -------------------------------------------------------------


def init_params(rng: np.random.Generator, dims) -> list[np.ndarray]:
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        params.append(np.ascontiguousarray(rng.normal(0.0, INIT_SD, (fan_in, fan_out))))
        params.append(np.zeros(fan_out))
    return params


def _val_mf1(params32, X, y) -> float:
    _, _, logp = kernels.python_backend.forward([p.astype(np.float64) for p in params32], X)
    return score(y, np.argmax(logp, axis=1)).mf1


def _fit(params, Xtr, ytr, Xv, yv, cfg: TrainConfig, rng: np.random.Generator):
    """Train in place; returns (best float32 weights, best epoch, best val MF1)."""
    k = kernels.impl
    velocity = [np.zeros_like(p) for p in params]
    best = [p.astype(np.float32) for p in params]
    best_epoch, best_mf1 = 0, _val_mf1(best, Xv, yv)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(ytr)).astype(np.int64)
        loss = k.train_epoch(params, velocity, Xtr, ytr, order, cfg.learning_rate,
                             cfg.momentum, cfg.weight_decay, cfg.batch_size)
        with np.errstate(over="ignore"):
            snap = [p.astype(np.float32) for p in params]
        if not math.isfinite(loss) or not all(np.all(np.isfinite(p)) for p in snap):
            raise NonFiniteLoss(f"training diverged at epoch {epoch} (loss {loss})")
        mf1 = _val_mf1(snap, Xv, yv)
        if mf1 > best_mf1:
            best, best_epoch, best_mf1 = snap, epoch, mf1
    return best, best_epoch, best_mf1


def _check_sets(train: EpochSet, val: EpochSet):
    if len(train) == 0:
        raise EmptySet("training set is empty")
    if len(val) == 0:
        raise EmptySet("validation set is empty")
    if train.mode != val.mode or train.rate_hz != val.rate_hz:
        raise IncompatibleInputSpec("training and validation sets differ in input spec")


def pretrain(train: EpochSet, val: EpochSet, cfg: TrainConfig | None = None,
             source: str | None = None) -> ModelCheckpoint:
    """Train from a seeded Gaussian initialization; validation-best checkpoint."""
    cfg = cfg or TrainConfig()
    _check_sets(train, val)
    spec = input_spec_for(train)
    Xtr = featurize(train, spec)
    mean = Xtr.mean(axis=0)
    sd = Xtr.std(axis=0)
    sd = np.where(sd > SD_FLOOR, sd, 1.0)
    Xtr = _normalize(Xtr, mean, sd)
    Xv = _normalize(featurize(val, spec), mean, sd)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(rng, (Xtr.shape[1], *cfg.hidden, N_STAGES))
    best, epoch, mf1 = _fit(params, Xtr, train.labels.astype(np.int64), Xv,
                            val.labels.astype(np.int64), cfg, rng)
    meta = {"source": source, "seed": cfg.seed, "init": "scratch",
            "epochs_trained": epoch, "best_val_mf1": mf1}
    return ModelCheckpoint(best, spec, mean, sd, meta)


def finetune(init: ModelCheckpoint, train: EpochSet, val: EpochSet,
             cfg: TrainConfig | None = None, target: str | None = None) -> ModelCheckpoint:
    """Continue training every parameter of ``init`` on new data.

    The loop is the same as ``pretrain``; only the starting weights differ.
    The input normalization learned with ``init`` is kept.
    """
    cfg = cfg or TrainConfig()
    _check_sets(train, val)
    spec = init.input_spec
    Xtr = _normalize(featurize(train, spec), init.norm_mean, init.norm_sd)
    Xv = _normalize(featurize(val, spec), init.norm_mean, init.norm_sd)
    if Xtr.shape[1] != init.weights[0].shape[0]:
        raise IncompatibleInputSpec("feature width does not match the checkpoint")
    rng = np.random.default_rng(cfg.seed)
    params = [np.ascontiguousarray(p) for p in init.params64()]
    best, epoch, mf1 = _fit(params, Xtr, train.labels.astype(np.int64), Xv,
                            val.labels.astype(np.int64), cfg, rng)
    meta = {"source": init.train_meta.get("source"), "target": target, "seed": cfg.seed,
            "init": "finetune", "epochs_trained": epoch, "best_val_mf1": mf1}
    return ModelCheckpoint(best, spec, init.norm_mean, init.norm_sd, meta)


# -- inference ------------------------------------------------------------


def predict_proba(model: ModelCheckpoint, epochs: EpochSet) -> np.ndarray:
    X = _normalize(featurize(epochs, model.input_spec), model.norm_mean, model.norm_sd)
    _, _, logp = kernels.python_backend.forward(model.params64(), X)
    return np.exp(logp)


def predict(model: ModelCheckpoint, epochs: EpochSet) -> np.ndarray:
    """Stage ordinals; argmax with ties to the lowest ordinal."""
    X = _normalize(featurize(epochs, model.input_spec), model.norm_mean, model.norm_sd)
    _, _, logp = kernels.python_backend.forward(model.params64(), X)
    return np.argmax(logp, axis=1).astype(np.uint8)


# -- persistence ----------------------------------------------------------


def _header(model: ModelCheckpoint) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_spec": model.input_spec,
        "normalization": {"mean": model.norm_mean.tolist(), "sd": model.norm_sd.tolist()},
        "train_meta": model.train_meta,
        "layers": [
            {"name": name, "shape": list(w.shape),
             "data": base64.b64encode(w.astype("<f4").tobytes()).decode("ascii")}
            for name, w in zip(LAYER_NAMES, model.weights)
        ],
    }


def to_bytes(model: ModelCheckpoint) -> bytes:
    return (json.dumps(_header(model), indent=1) + "\n").encode("utf-8")


def from_bytes(buf: bytes) -> ModelCheckpoint:
    d = json.loads(buf.decode("utf-8"))
    if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a version-1 xferbench checkpoint")
    weights = []
    for layer in d["layers"]:
        raw = base64.b64decode(layer["data"])
        weights.append(np.frombuffer(raw, dtype="<f4").reshape(layer["shape"]).astype(np.float32))
    norm = d["normalization"]
    return ModelCheckpoint(weights, d["input_spec"], norm["mean"], norm["sd"], d["train_meta"])


def save(model: ModelCheckpoint, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(model))
    return path


def load(path: str | Path) -> ModelCheckpoint:
    return from_bytes(Path(path).read_bytes())
