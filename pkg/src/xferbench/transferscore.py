"""Transfer impact and transferability analysis over a ledger of evaluations.

Impact: relative degradation r of a direct transfer versus the target's own
model, averaged per pair over repeats and then within each difference group.
Transferability: per target, pairwise source comparisons of fine-tuned MF1
(relative to the target's own MF1), thresholded into a positive reciprocal
matrix whose principal eigenvector weights the sources; stacking those rows
gives W, and W's column means give each source's generalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from xferbench.errors import (DivisionByZero, DuplicateRecord, EmptyMatrix, MissingRecord,
                              NonPositiveEntry, NotAntisymmetric)
from xferbench.metrics import MetricSet
from xferbench.plan import GROUP_ORDER, ChannelSlot, GroupKey, TransferPair

SETTINGS = ("FS", "DT", "FT")
DEFAULT_ALPHA = 1.0
SENSITIVITY_ALPHAS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class EvalRecord:
    setting: str
    source: str | None  # "dataset/channel"; None for FS
    target: str
    repeat: int
    seed: int
    metrics: MetricSet
    n_test: int = 0

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.setting == "FS":
            if self.source not in (None, self.target):
                raise ValueError("FS records have no separate source")
        elif self.source is None or self.source == self.target:
            raise ValueError(f"{self.setting} record needs a source distinct from its target")

    @property
    def key(self) -> tuple:
        src = None if self.setting == "FS" else self.source
        return (self.setting, src, self.target, self.repeat)


class RecordIndex:
    """Lookup of records by key with repeat averaging."""

    def __init__(self, records: Iterable[EvalRecord], repeats: Sequence[int] | None = None):
        self.by_key: dict[tuple, EvalRecord] = {}
        for r in records:
            if r.key in self.by_key:
                raise DuplicateRecord(f"duplicate record {r.key}")
            self.by_key[r.key] = r
        if repeats is None:
            repeats = sorted({r.repeat for r in self.by_key.values()})
        self.repeats = tuple(repeats)

    def missing(self, setting: str, source: str | None, target: str) -> list[tuple]:
        return [(setting, source, target, k) for k in self.repeats
                if (setting, source, target, k) not in self.by_key]

    def values(self, setting, source, target, metric="mf1") -> list[float]:
        miss = self.missing(setting, source, target)
        if miss or not self.repeats:
            raise MissingRecord(miss or [(setting, source, target, None)])
        return [getattr(self.by_key[(setting, source, target, k)].metrics, metric)
                for k in self.repeats]

    def mean(self, setting, source, target, metric="mf1") -> float:
        return float(np.mean(self.values(setting, source, target, metric)))

    def has(self, setting, source, target) -> bool:
        return bool(self.repeats) and not self.missing(setting, source, target)


def _index(ledger) -> RecordIndex:
    return ledger if isinstance(ledger, RecordIndex) else RecordIndex(ledger)


# -- impact ---------------------------------------------------------------


def relative_diff(p_tt: float, p_st: float) -> float:
    """Percent degradation of the transferred model versus the target's own."""
    if p_st == 0:
        raise DivisionByZero("transferred performance is zero")
    return (p_tt / p_st - 1.0) * 100.0


@dataclass(frozen=True)
class ImpactRow:
    group: GroupKey
    n_pairs: int
    fs_acc: float | None = None
    fs_mf1: float | None = None
    dt_acc: float | None = None
    dt_mf1: float | None = None
    ft_acc: float | None = None
    ft_mf1: float | None = None
    r: float | None = None

    @property
    def empty(self) -> bool:
        return self.n_pairs == 0


@dataclass(frozen=True)
class ImpactReport:
    rows: tuple[ImpactRow, ...]

    def row(self, group: GroupKey) -> ImpactRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)

    @property
    def empty_groups(self) -> list[GroupKey]:
        return [r.group for r in self.rows if r.empty]


def _require(index: RecordIndex, keys):
    miss = []
    for setting, source, target in keys:
        if not index.repeats:
            miss.append((setting, source, target, None))
        else:
            miss.extend(index.missing(setting, source, target))
    if miss:
        raise MissingRecord(sorted(set(miss), key=repr))


def impact_report(ledger, groups: Mapping[GroupKey, Sequence[TransferPair]]) -> ImpactReport:
    """Per-group means of FS/DT/FT metrics and of the per-pair r values.

    Metric means run over every (pair, repeat) value; r is computed per pair
    from repeat-averaged MF1 and then averaged over the group's pairs. FT
    columns are filled only when every grouped pair has FT records.
    """
    index = _index(ledger)
    pairs = [p for g in GROUP_ORDER for p in groups.get(g, ())]
    _require(index, [k for p in pairs
                     for k in (("FS", None, p.target.key), ("DT", p.source.key, p.target.key))])
    has_ft = bool(pairs) and all(index.has("FT", p.source.key, p.target.key) for p in pairs)
    rows = []
    for g in GROUP_ORDER:
        gp = list(groups.get(g, ()))
        if not gp:
            rows.append(ImpactRow(g, 0))
            continue
        vals: dict[str, list[float]] = {}
        for setting in ("FS", "DT", "FT") if has_ft else ("FS", "DT"):
            for metric in ("acc", "mf1"):
                vals[f"{setting.lower()}_{metric}"] = [
                    v for p in gp
                    for v in index.values(setting, None if setting == "FS" else p.source.key,
                                          p.target.key, metric)]
        rs = [relative_diff(index.mean("FS", None, p.target.key),
                            index.mean("DT", p.source.key, p.target.key)) for p in gp]
        rows.append(ImpactRow(g, len(gp), r=float(np.mean(rs)),
                              **{k: float(np.mean(v)) for k, v in vals.items()}))
    return ImpactReport(tuple(rows))


# -- pairwise comparison --------------------------------------------------


@dataclass(frozen=True)
class PairwiseMatrix:
    target: str
    sources: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray


def pairwise_raw(ledger, target: str, sources: Sequence[str]) -> np.ndarray:
    """h[i][j]: percent by which source i's fine-tuned MF1 beats source j's,
    relative to the target's own (from-scratch) MF1."""
    index = _index(ledger)
    _require(index, [("FS", None, target)] + [("FT", s, target) for s in sources])
    p_t = index.mean("FS", None, target)
    if p_t == 0:
        raise DivisionByZero(f"from-scratch MF1 of {target} is zero")
    p = np.array([index.mean("FT", s, target) for s in sources])
    return (p[:, None] - p[None, :]) / p_t * 100.0


def normalize(raw, alpha: float = DEFAULT_ALPHA, atol: float = 1e-9) -> np.ndarray:
    """Positive reciprocal matrix from an antisymmetric difference matrix.

    Entries above ``alpha`` are kept, entries below ``-alpha`` become the
    reciprocal of their mirror, everything else (and the diagonal) is 1.
    """
    h = np.asarray(raw, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotAntisymmetric("pairwise matrix must be square")
    tol = atol * np.maximum(1.0, np.abs(h))
    if np.any(np.abs(h + h.T) > tol):
        raise NotAntisymmetric("pairwise matrix is not antisymmetric")
    m = np.ones_like(h)
    up = h > alpha
    m[up] = h[up]
    down = h < -alpha
    m[down] = 1.0 / np.abs(h.T[down])
    np.fill_diagonal(m, 1.0)
    return m


def _check_positive(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise EmptyMatrix("need a non-empty square matrix")
    if not np.all(np.isfinite(m)) or np.any(m <= 0):
        raise NonPositiveEntry("comparison matrix entries must be positive and finite")
    return m


def approx_eigenvector(m) -> np.ndarray:
    """Principal-eigenvector estimate by averaging the column-normalized matrix."""
    m = _check_positive(m)
    return (m / m.sum(axis=0, keepdims=True)).mean(axis=1)


def power_eigenvector(m, tol: float = 1e-15, max_iter: int = 100_000) -> np.ndarray:
    """Principal eigenvector by power iteration, scaled to sum to 1."""
    m = _check_positive(m)
    v = np.full(m.shape[0], 1.0 / m.shape[0])
    for _ in range(max_iter):
        w = m @ v
        w /= w.sum()
        if np.max(np.abs(w - v)) < tol:
            return w
        v = w
    return v


EIGEN_METHODS = {"approx": approx_eigenvector, "power": power_eigenvector}


# Saaty's random consistency index by matrix order
RANDOM_INDEX = {3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41, 9: 1.45, 10: 1.49,
                11: 1.51, 12: 1.48, 13: 1.56, 14: 1.57, 15: 1.59}


def consistency_ratio(m) -> float:
    """Saaty consistency ratio CI/RI; 0 for matrices of order below 3."""
    m = _check_positive(m)
    n = m.shape[0]
    if n < 3:
        return 0.0
    lam = float(np.max(np.real(np.linalg.eigvals(m))))
    return (lam - n) / (n - 1) / RANDOM_INDEX[min(n, 15)]


# -- transferability ------------------------------------------------------


def source_columns(universe: Sequence[ChannelSlot]) -> tuple[list[str], dict[str, str]]:
    """Column ids (one per source slot) and the concrete-channel -> column map.

    A slot's alternate channel is folded into the slot's column, written
    like ``MASS-SS1/F3|F4``.
    """
    cols, owner = [], {}
    for s in universe:
        if not s.usable_as_source:
            continue
        if s.alternate_channel is None:
            col = f"{s.dataset_id}/{s.primary_channel}"
        else:
            col = f"{s.dataset_id}/{s.alternate_channel}|{s.primary_channel}"
        cols.append(col)
        for ch in s.channels:
            owner[f"{s.dataset_id}/{ch}"] = col
    return cols, owner


@dataclass(frozen=True)
class TransferabilityMatrix:
    targets: tuple[str, ...]
    sources: tuple[str, ...]
    values: np.ndarray  # NaN marks infeasible (absent) cells
    pairwise: dict = field(default_factory=dict, compare=False)

    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def row(self, target: str) -> dict[str, float]:
        i = self.targets.index(target)
        return {s: float(v) for s, v in zip(self.sources, self.values[i]) if not np.isnan(v)}


def target_sources(pairs: Sequence[TransferPair]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for p in pairs:
        out.setdefault(p.target.key, []).append(p.source.key)
    return out


def build_w(ledger, pairs: Sequence[TransferPair], universe: Sequence[ChannelSlot],
            alpha: float = DEFAULT_ALPHA, method: str = "approx") -> TransferabilityMatrix:
    """Stack one eigenvector row per target; columns follow universe order."""
    index = _index(ledger)
    eig = EIGEN_METHODS[method]
    cols, owner = source_columns(universe)
    by_target = target_sources(pairs)
    tgts = list(by_target)
    _require(index, [k for t, srcs in by_target.items()
                     for k in [("FS", None, t)] + [("FT", s, t) for s in srcs]])
    W = np.full((len(tgts), len(cols)), np.nan)
    mats = {}
    for i, t in enumerate(tgts):
        srcs = by_target[t]
        raw = pairwise_raw(index, t, srcs)
        norm = normalize(raw, alpha)
        v = eig(norm)
        mats[t] = PairwiseMatrix(t, tuple(srcs), raw, norm)
        for s, w in zip(srcs, v):
            W[i, cols.index(owner[s])] = w
    return TransferabilityMatrix(tuple(tgts), tuple(cols), W, mats)


def generalization_vector(w: TransferabilityMatrix) -> dict[str, float]:
    """Mean of each source column over its present cells."""
    if w.values.size == 0 or not w.present().any():
        raise EmptyMatrix("transferability matrix has no present cells")
    out = {}
    for j, s in enumerate(w.sources):
        col = w.values[:, j]
        col = col[~np.isnan(col)]
        if col.size:
            out[s] = float(col.mean())
    return out


def alpha_sensitivity(ledger, pairs, universe, alphas=SENSITIVITY_ALPHAS,
                      method: str = "approx") -> dict[float, dict[str, float]]:
    """Generalization vector under each threshold in ``alphas``."""
    index = _index(ledger)
    return {a: generalization_vector(build_w(index, pairs, universe, a, method)) for a in alphas}
