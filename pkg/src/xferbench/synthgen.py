"""Seeded synthetic cohorts along the channel-area / environment / condition axes.

Each cohort is one single-channel dataset. Hypnograms come from a first-order
Markov chain; per-epoch payloads are either 5 band-power features or a raw
signal synthesized from those band powers. Cohorts persist as one
little-endian ``XFB1`` file per subject plus a ``cohort.json`` index.
"""
from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from xferbench import stages
from xferbench.errors import FormatError, InvalidParams, TooFewSubjects
from xferbench.seeds import hash64, rng_for
from xferbench.signals import BANDS
from xferbench.stages import N_STAGES, StageLabel

AREAS = ("F", "C", "P", "O")
CONDITIONS = ("Healthy", "Apnea")
MODES = ("Features", "Signal")

# rows W, N1, N2, N3, REM; cols delta, theta, alpha, sigma, beta
BASE_SIGNATURES = np.array(
    [
        [0.5, 0.5, 2.0, 0.5, 1.5],
        [1.0, 2.0, 0.7, 0.5, 0.7],
        [1.5, 1.0, 0.5, 2.0, 0.5],
        [3.0, 1.0, 0.3, 0.5, 0.2],
        [1.0, 1.5, 0.8, 0.5, 1.0],
    ]
)
N_FEATURES = BASE_SIGNATURES.shape[1]

HEALTHY_STAY = 0.85
APNEA_STAY = 0.75
# off-diagonal transition shares, renormalized to 1 - stay
_OFF_DIAGONAL = np.array(
    [
        [0.0, 0.70, 0.20, 0.00, 0.10],
        [0.30, 0.0, 0.60, 0.00, 0.10],
        [0.15, 0.15, 0.0, 0.50, 0.20],
        [0.10, 0.00, 0.90, 0.0, 0.00],
        [0.30, 0.30, 0.40, 0.00, 0.0],
    ]
)

# Signal mode white-noise sd, as a fraction of the feature noise sd
_SIGNAL_NOISE_RATIO = 0.25
_MIN_BAND_POWER = 1e-3

_AXIS_SALT = "xferbench-axis-v1"


def channel_area(channel: str) -> str:
    """Brain area of an electrode label, from its first electrode's first letter.

    ``Fpz-Cz`` -> F, ``Pz-Oz`` -> P, ``O2`` -> O.
    """
    head = channel.strip()[:1].upper()
    if head not in AREAS:
        raise ValueError(f"cannot derive a brain area from channel {channel!r}")
    return head


@dataclass(frozen=True)
class DatasetDescriptor:
    dataset_id: str
    environment_id: str
    condition: str
    channel: str
    sampling_rate_hz: int
    epoch_seconds: int = 30

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise InvalidParams(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.sampling_rate_hz <= 0 or self.epoch_seconds <= 0:
            raise InvalidParams("sampling rate and epoch length must be positive")
        channel_area(self.channel)

    @property
    def area(self) -> str:
        return channel_area(self.channel)

    @property
    def samples_per_epoch(self) -> int:
        return self.sampling_rate_hz * self.epoch_seconds

    @property
    def key(self) -> str:
        return f"{self.dataset_id}/{self.channel}"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class GenParams:
    n_subjects: int = 12
    epochs_per_subject: int = 400
    seed: int = 0
    env_shift: float = 1.5
    area_shift: float = 0.8
    cond_shift: float = 0.4
    noise_sd: float = 0.5
    mode: str = "Features"
    apnea_n1_boost: float = 1.6

    def validate(self) -> "GenParams":
        if self.n_subjects < 1 or self.epochs_per_subject < 1:
            raise InvalidParams("n_subjects and epochs_per_subject must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidParams("seed must fit in 64 bits")
        for name in ("env_shift", "area_shift", "cond_shift", "noise_sd"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParams(f"{name} must be finite and >= 0, got {v!r}")
        if not (self.apnea_n1_boost > 0 and math.isfinite(self.apnea_n1_boost)):
            raise InvalidParams("apnea_n1_boost must be positive")
        if self.mode not in MODES:
            raise InvalidParams(f"mode must be one of {MODES}, got {self.mode!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenParams":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidParams(f"unknown GenParams field(s): {sorted(extra)}")
        return cls(**d).validate()


@dataclass(eq=False)
class SubjectRecording:
    subject_id: str
    data: np.ndarray  # (n_epochs, 5) or (n_epochs, rate*seconds), float32
    labels: np.ndarray  # (n_epochs,), uint8 stage ordinals

    def __post_init__(self):
        if len(self.data) != len(self.labels):
            raise ValueError("data and labels differ in length")

    def __eq__(self, other):
        if not isinstance(other, SubjectRecording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.data.dtype == other.data.dtype
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and np.array_equal(self.labels, other.labels)
        )

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class EpochSet:
    """A pooled set of epochs ready for the scorer."""

    data: np.ndarray
    labels: np.ndarray
    mode: str
    rate_hz: int

    def __len__(self):
        return len(self.labels)


@dataclass(eq=False)
class Cohort:
    descriptor: DatasetDescriptor
    subjects: list[SubjectRecording]
    gen_params: GenParams

    def __post_init__(self):
        ids = [s.subject_id for s in self.subjects]
        if not ids:
            raise InvalidParams("a cohort needs at least one subject")
        if len(set(ids)) != len(ids):
            raise InvalidParams("subject ids must be unique")

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (
            self.descriptor == other.descriptor
            and self.gen_params == other.gen_params
            and len(self.subjects) == len(other.subjects)
            and all(a == b for a, b in zip(self.subjects, other.subjects))
        )

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def epoch_set(self, subject_ids: Sequence[str] | None = None) -> EpochSet:
        chosen = self.subjects if subject_ids is None else [self.subject(s) for s in subject_ids]
        if chosen:
            data = np.concatenate([s.data for s in chosen])
            labels = np.concatenate([s.labels for s in chosen])
        else:
            data = np.zeros((0, self.payload_size), dtype=np.float32)
            labels = np.zeros(0, dtype=np.uint8)
        return EpochSet(data, labels, self.gen_params.mode, self.descriptor.sampling_rate_hz)

    def subject(self, subject_id: str) -> SubjectRecording:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(subject_id)

    @property
    def payload_size(self) -> int:
        if self.gen_params.mode == "Features":
            return N_FEATURES
        return self.descriptor.samples_per_epoch


# -- generator -------------------------------------------------------------


def axis_direction(axis: str, value: str) -> np.ndarray:
    """Unit vector in feature space for one value of a characteristic axis."""
    v = rng_for(_AXIS_SALT, axis, value).standard_normal(N_FEATURES)
    return v / np.linalg.norm(v)


def environment_noise_factor(environment_id: str) -> float:
    return float(rng_for(_AXIS_SALT, "env-noise", environment_id).uniform(0.8, 1.25))


def transition_matrix(condition: str = "Healthy", apnea_n1_boost: float = 1.6) -> np.ndarray:
    """Row-stochastic 5x5 hypnogram transition matrix for a subject condition."""
    if condition not in CONDITIONS:
        raise InvalidParams(f"unknown condition {condition!r}")
    stay = HEALTHY_STAY if condition == "Healthy" else APNEA_STAY
    off = _OFF_DIAGONAL / _OFF_DIAGONAL.sum(axis=1, keepdims=True)
    P = off * (1.0 - stay) + np.eye(N_STAGES) * stay
    if condition == "Apnea":
        P[:, StageLabel.W] *= apnea_n1_boost
        P[:, StageLabel.N1] *= apnea_n1_boost
        P /= P.sum(axis=1, keepdims=True)
    return P


def sample_hypnogram(rng: np.random.Generator, P: np.ndarray, n: int,
                     start: int = StageLabel.W) -> np.ndarray:
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(n)
    out = np.empty(n, dtype=np.uint8)
    s = int(start)
    for i in range(n):
        if i:
            s = int(np.searchsorted(cum[s], u[i], side="right"))
        out[i] = s
    return out


def _synth_signal(powers: np.ndarray, rate: int, seconds: int, rng: np.random.Generator,
                  noise_sd: float) -> np.ndarray:
    n_ep = powers.shape[0]
    n = rate * seconds
    t = np.arange(n) / rate
    lo = np.array([b[1] for b in BANDS])
    hi = np.array([b[2] for b in BANDS])
    f = rng.uniform(lo, hi, size=(n_ep, len(BANDS)))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(n_ep, len(BANDS)))
    amp = np.sqrt(np.maximum(powers, _MIN_BAND_POWER))
    sig = np.zeros((n_ep, n))
    for b in range(len(BANDS)):
        sig += amp[:, b, None] * np.sin(2.0 * np.pi * f[:, b, None] * t + phi[:, b, None])
    sig += noise_sd * rng.standard_normal((n_ep, n))
    return sig


def generate(descriptor: DatasetDescriptor, params: GenParams,
             trim_wake_minutes: float | None = None) -> Cohort:
    """Generate one cohort deterministically from ``(descriptor, params.seed)``.

    Hypnograms depend only on the dataset (so every channel of a dataset
    shares subjects and labels); payload noise also depends on the channel.
    """
    params.validate()
    d = descriptor
    P = transition_matrix(d.condition, params.apnea_n1_boost)
    gain = 1.0 + params.area_shift * axis_direction("area", d.area)
    offset = (params.env_shift * axis_direction("environment", d.environment_id)
              + params.cond_shift * axis_direction("condition", d.condition))
    sd = params.noise_sd * environment_noise_factor(d.environment_id)
    signatures = BASE_SIGNATURES * gain + offset

    subjects = []
    for i in range(params.n_subjects):
        sid = f"S{i:03d}"
        labels = sample_hypnogram(rng_for(params.seed, "labels", d.dataset_id, i), P,
                                  params.epochs_per_subject)
        if trim_wake_minutes is not None:
            kept = stages.trim_wake([(j, StageLabel(int(l))) for j, l in enumerate(labels)],
                                    trim_wake_minutes, d.epoch_seconds)
            labels = labels[[j for j, _ in kept]]
        noise_rng = rng_for(params.seed, "payload", d.dataset_id, d.channel, i)
        feats = signatures[labels] + sd * noise_rng.standard_normal((len(labels), N_FEATURES))
        if params.mode == "Features":
            data = feats.astype(np.float32)
        else:
            data = _synth_signal(feats, d.sampling_rate_hz, d.epoch_seconds, noise_rng,
                                 sd * _SIGNAL_NOISE_RATIO).astype(np.float32)
        subjects.append(SubjectRecording(sid, data, labels.astype(np.uint8)))
    return Cohort(d, subjects, params)


# -- splits ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_subjects: tuple[str, ...]
    val_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]
    seed: int = field(default=0)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_sizes(n: int) -> tuple[int, int, int]:
    """(train, val, test) subject counts for an 80/20 then 90/10 split."""
    n_test = _round_half_up(0.2 * n)
    n_val = max(1, _round_half_up(0.1 * (n - n_test)))
    return n - n_test - n_val, n_val, n_test


def split_subjects(cohort_or_ids: Cohort | Sequence[str], seed: int) -> SplitSpec:
    ids = cohort_or_ids.subject_ids if isinstance(cohort_or_ids, Cohort) else list(cohort_or_ids)
    if len(ids) < 5:
        raise TooFewSubjects(f"need at least 5 subjects to split, got {len(ids)}")
    n_train, n_val, n_test = split_sizes(len(ids))
    perm = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    return SplitSpec(
        train_subjects=tuple(sorted(shuffled[n_test + n_val:])),
        val_subjects=tuple(sorted(shuffled[n_test:n_test + n_val])),
        test_subjects=tuple(sorted(shuffled[:n_test])),
        seed=seed,
    )


# -- persistence ----------------------------------------------------------

MAGIC = b"XFB1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBIHI")
_MODE_CODES = {"Features": 0, "Signal": 1}
_INDEX_NAME = "cohort.json"


def _record_dtype(payload: int) -> np.dtype:
    return np.dtype([("x", "<f4", (payload,)), ("y", "u1")])


def encode_subject(rec: SubjectRecording, mode: str, rate: int, epoch_seconds: int) -> bytes:
    payload = N_FEATURES if mode == "Features" else rate * epoch_seconds
    if rec.data.ndim != 2 or rec.data.shape[1] != payload:
        raise ValueError(f"subject {rec.subject_id}: expected payload width {payload}")
    arr = np.empty(len(rec), dtype=_record_dtype(payload))
    arr["x"] = rec.data
    arr["y"] = rec.labels
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, _MODE_CODES[mode], rate, epoch_seconds, len(rec))
    return header + arr.tobytes()


def decode_subject(buf: bytes, subject_id: str) -> tuple[SubjectRecording, str, int, int]:
    """Parse one subject file; returns (recording, mode, rate, epoch_seconds)."""
    if len(buf) < _HEADER.size:
        raise FormatError(f"{subject_id}: file shorter than the {_HEADER.size}-byte header")
    magic, version, mode_code, rate, secs, n = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{subject_id}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{subject_id}: unsupported version {version}")
    modes = {v: k for k, v in _MODE_CODES.items()}
    if mode_code not in modes:
        raise FormatError(f"{subject_id}: bad mode byte {mode_code}")
    mode = modes[mode_code]
    if rate == 0 or secs == 0:
        raise FormatError(f"{subject_id}: zero sampling rate or epoch length")
    payload = N_FEATURES if mode == "Features" else rate * secs
    dt = _record_dtype(payload)
    expected = _HEADER.size + n * dt.itemsize
    if len(buf) != expected:
        raise FormatError(f"{subject_id}: length {len(buf)} != expected {expected}")
    arr = np.frombuffer(buf, dtype=dt, offset=_HEADER.size, count=n)
    labels = arr["y"].copy()
    if labels.size and labels.max() >= N_STAGES:
        raise FormatError(f"{subject_id}: label ordinal out of range")
    data = np.ascontiguousarray(arr["x"]).astype(np.float32, copy=True).reshape(n, payload)
    return SubjectRecording(subject_id, data, labels), mode, rate, secs


def write_cohort(cohort: Cohort, path: str | Path) -> Path:
    """Write ``cohort.json`` plus one ``<subject>.xfb`` file per subject into ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    d = cohort.descriptor
    entries = []
    for rec in cohort.subjects:
        fname = f"{rec.subject_id}.xfb"
        (path / fname).write_bytes(
            encode_subject(rec, cohort.gen_params.mode, d.sampling_rate_hz, d.epoch_seconds))
        entries.append({"id": rec.subject_id, "file": fname})
    index = {
        "format": "xferbench-cohort",
        "version": FORMAT_VERSION,
        "descriptor": d.to_dict(),
        "gen_params": cohort.gen_params.to_dict(),
        "subjects": entries,
    }
    (path / _INDEX_NAME).write_text(json.dumps(index, indent=1) + "\n", encoding="utf-8")
    return path


def read_cohort(path: str | Path) -> Cohort:
    path = Path(path)
    try:
        index = json.loads((path / _INDEX_NAME).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path / _INDEX_NAME}: {exc}") from exc
    if index.get("format") != "xferbench-cohort" or index.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: not a version-{FORMAT_VERSION} cohort index")
    desc = DatasetDescriptor(**index["descriptor"])
    params = GenParams.from_dict(index["gen_params"])
    subjects = []
    for entry in index["subjects"]:
        rec, mode, rate, secs = decode_subject((path / entry["file"]).read_bytes(), entry["id"])
        if mode != params.mode or rate != desc.sampling_rate_hz or secs != desc.epoch_seconds:
            raise FormatError(f"{entry['file']}: header disagrees with cohort index")
        subjects.append(rec)
    return Cohort(desc, subjects, params)


def cohort_seed(params: GenParams, descriptor: DatasetDescriptor) -> int:
    """Identity hash of a generated cohort; handy as a cache key."""
    return hash64(params.to_dict(), descriptor.to_dict())
