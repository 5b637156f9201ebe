"""Sleep-stage taxonomy, R&K to AASM harmonization and epoch filtering."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TypeVar

from xferbench.errors import EmptyAfterFilter, EmptyInput, NoSleepPeriod

E = TypeVar("E")


class RawStageLabel(str, enum.Enum):
    """Source annotation labels, including the R&K N4 stage and artifacts."""

    W = "W"
    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    N4 = "N4"
    REM = "REM"
    MOVEMENT = "MOVEMENT"
    UNKNOWN = "UNKNOWN"


class StageLabel(enum.IntEnum):
    """The five AASM stages. Ordinals are fixed and used in every file format."""

    W = 0
    N1 = 1
    N2 = 2
    N3 = 3
    REM = 4

    @classmethod
    def parse(cls, name: str) -> "StageLabel":
        return cls[name]


N_STAGES = len(StageLabel)
STAGE_NAMES = tuple(s.name for s in StageLabel)

_HARMONIZE = {
    RawStageLabel.W: StageLabel.W,
    RawStageLabel.N1: StageLabel.N1,
    RawStageLabel.N2: StageLabel.N2,
    RawStageLabel.N3: StageLabel.N3,
    RawStageLabel.N4: StageLabel.N3,
    RawStageLabel.REM: StageLabel.REM,
    RawStageLabel.MOVEMENT: None,
    RawStageLabel.UNKNOWN: None,
}


def harmonize(label: RawStageLabel | StageLabel | str) -> StageLabel | None:
    """Map a raw label onto the AASM scheme.

    N4 merges into N3; MOVEMENT and UNKNOWN return ``None`` (epoch dropped).
    Already-harmonized ``StageLabel`` values pass through unchanged.
    """
    if isinstance(label, StageLabel):
        return label
    return _HARMONIZE[RawStageLabel(label)]


def filter_epochs(seq: Iterable[tuple[E, RawStageLabel]]) -> list[tuple[E, StageLabel]]:
    """Drop MOVEMENT/UNKNOWN epochs and harmonize the rest, preserving order."""
    seq = list(seq)
    if not seq:
        raise EmptyInput("filter_epochs needs a non-empty sequence")
    out = []
    for epoch, raw in seq:
        stage = harmonize(raw)
        if stage is not None:
            out.append((epoch, stage))
    if not out:
        raise EmptyAfterFilter(f"all {len(seq)} epochs were MOVEMENT/UNKNOWN")
    return out


def trim_wake(
    seq: Sequence[tuple[E, StageLabel]],
    keep_minutes: float = 30.0,
    epoch_seconds: float = 30.0,
) -> list[tuple[E, StageLabel]]:
    """Shorten the leading and trailing wake runs around the sleep period.

    At most ``keep_minutes`` of wake is kept immediately before the first and
    after the last non-W epoch. Interior epochs are never touched.
    """
    if epoch_seconds <= 0:
        raise ValueError("epoch_seconds must be positive")
    if keep_minutes < 0:
        raise ValueError("keep_minutes must be non-negative")
    seq = list(seq)
    sleep_idx = [i for i, (_, s) in enumerate(seq) if s != StageLabel.W]
    if not sleep_idx:
        raise NoSleepPeriod("sequence contains only wake epochs")
    keep = int(math.floor(keep_minutes * 60.0 / epoch_seconds + 1e-9))
    first, last = sleep_idx[0], sleep_idx[-1]
    start = max(0, first - keep)
    stop = min(len(seq), last + 1 + keep)
    return seq[start:stop]


@dataclass(frozen=True)
class StageDistribution:
    counts: tuple[int, ...]
    total: int

    @property
    def fractions(self) -> tuple[float, ...]:
        return tuple(c / self.total for c in self.counts)

    def fraction(self, stage: StageLabel) -> float:
        return self.counts[int(stage)] / self.total

    def as_dict(self) -> dict[str, int]:
        return dict(zip(STAGE_NAMES, self.counts))


def stage_distribution(labels: Iterable[StageLabel | int]) -> StageDistribution:
    counts = [0] * N_STAGES
    n = 0
    for lab in labels:
        counts[int(lab)] += 1
        n += 1
    if n == 0:
        raise EmptyInput("stage_distribution of an empty label list")
    return StageDistribution(tuple(counts), n)


def distribution_from_counts(counts: dict[str, int]) -> StageDistribution:
    """Build a distribution from published per-stage epoch counts."""
    c = tuple(int(counts[name]) for name in STAGE_NAMES)
    if sum(c) == 0:
        raise EmptyInput("all counts are zero")
    return StageDistribution(c, sum(c))
