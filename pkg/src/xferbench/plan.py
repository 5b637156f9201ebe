"""Transfer-pair enumeration over a channel universe and Table-2 style grouping.

A universe is an ordered list of ``ChannelSlot``. A slot is one recording
channel of one dataset, optionally paired with an alternate channel over the
same brain area. The alternate is only used as a source when the target is
the slot's own primary channel, so no model is ever transferred onto the
exact dataset+channel it was trained on.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

from xferbench.errors import EmptyUniverse, InvalidParams
from xferbench.synthgen import DatasetDescriptor, GenParams, channel_area


@dataclass(frozen=True)
class ChannelSlot:
    dataset_id: str
    environment_id: str
    condition: str
    sampling_rate_hz: int
    primary_channel: str
    alternate_channel: str | None = None
    usable_as_source: bool = True
    usable_as_target: bool = False
    epoch_seconds: int = 30

    def __post_init__(self):
        if self.alternate_channel is not None:
            if channel_area(self.alternate_channel) != channel_area(self.primary_channel):
                raise InvalidParams(
                    f"{self.dataset_id}: alternate {self.alternate_channel} is not over the "
                    f"same area as {self.primary_channel}")

    def descriptor(self, channel: str | None = None) -> DatasetDescriptor:
        return DatasetDescriptor(self.dataset_id, self.environment_id, self.condition,
                                 channel or self.primary_channel, self.sampling_rate_hz,
                                 self.epoch_seconds)

    @property
    def channels(self) -> tuple[str, ...]:
        if self.alternate_channel is None:
            return (self.primary_channel,)
        return (self.primary_channel, self.alternate_channel)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "environment_id": self.environment_id,
            "condition": self.condition,
            "sampling_rate_hz": self.sampling_rate_hz,
            "primary_channel": self.primary_channel,
            "alternate_channel": self.alternate_channel,
            "usable_as_source": self.usable_as_source,
            "usable_as_target": self.usable_as_target,
            "epoch_seconds": self.epoch_seconds,
        }


@dataclass(frozen=True)
class DiffFlags:
    channel_diff: bool
    env_diff: bool
    cond_diff: bool


@dataclass(frozen=True, order=True)
class GroupKey:
    env_diff: bool
    channel_diff: bool
    cond_diff: bool

    def label(self) -> str:
        word = {False: "same", True: "diff"}
        return (f"env={word[self.env_diff]},channel={word[self.channel_diff]},"
                f"cond={word[self.cond_diff]}")


# row order of the impact table: environment, then channel, then condition
GROUP_ORDER = tuple(GroupKey(e, c, k) for e, c, k in product((False, True), repeat=3))


def diff_flags(source: DatasetDescriptor, target: DatasetDescriptor) -> DiffFlags:
    return DiffFlags(
        channel_diff=source.area != target.area,
        env_diff=source.environment_id != target.environment_id,
        cond_diff=source.condition != target.condition,
    )


@dataclass(frozen=True)
class TransferPair:
    source: DatasetDescriptor
    target: DatasetDescriptor

    def __post_init__(self):
        if self.source.key == self.target.key:
            raise InvalidParams(f"source and target are both {self.source.key}")

    @property
    def diff_flags(self) -> DiffFlags:
        return diff_flags(self.source, self.target)

    @property
    def group(self) -> GroupKey:
        f = self.diff_flags
        return GroupKey(f.env_diff, f.channel_diff, f.cond_diff)

    @property
    def key(self) -> tuple[str, str]:
        return self.source.key, self.target.key


def _check(universe: Sequence[ChannelSlot]):
    if not universe:
        raise EmptyUniverse("the channel universe is empty")


def enumerate_sources(universe: Sequence[ChannelSlot]) -> list[DatasetDescriptor]:
    """Every concrete source channel, alternates included, in universe order."""
    _check(universe)
    return [s.descriptor(ch) for s in universe if s.usable_as_source for ch in s.channels]


def targets(universe: Sequence[ChannelSlot]) -> list[DatasetDescriptor]:
    _check(universe)
    return [s.descriptor() for s in universe if s.usable_as_target]


def enumerate_pairs(universe: Sequence[ChannelSlot], exhaustive: bool = False) -> list[TransferPair]:
    """Feasible (source, target) pairs, grouped by target in universe order.

    For each target every source slot contributes one pair. A slot whose
    primary is the target itself contributes its alternate instead, or
    nothing when it has none. ``exhaustive`` pairs every concrete source
    channel with every target instead.
    """
    _check(universe)
    pairs = []
    for t in targets(universe):
        if exhaustive:
            for s in enumerate_sources(universe):
                if s.key != t.key:
                    pairs.append(TransferPair(s, t))
            continue
        for slot in universe:
            if not slot.usable_as_source:
                continue
            src = slot.descriptor()
            if src.key == t.key:
                if slot.alternate_channel is None:
                    continue
                src = slot.descriptor(slot.alternate_channel)
            pairs.append(TransferPair(src, t))
    return pairs


def group_pairs(pairs: Iterable[TransferPair]) -> dict[GroupKey, list[TransferPair]]:
    """Partition pairs by difference flags; all eight groups are always present."""
    groups: dict[GroupKey, list[TransferPair]] = {g: [] for g in GROUP_ORDER}
    for p in pairs:
        groups[p.group].append(p)
    return groups


def sources_for(pairs: Iterable[TransferPair], target_key: str) -> list[DatasetDescriptor]:
    return [p.source for p in pairs if p.target.key == target_key]


# -- manifests ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    """Per-dataset generation settings carried by a manifest."""

    dataset_id: str
    gen_params: GenParams
    trim_wake_minutes: float | None = None


@dataclass(frozen=True)
class Manifest:
    name: str
    universe: tuple[ChannelSlot, ...]
    datasets: dict = field(default_factory=dict)  # dataset_id -> DatasetSpec
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def spec(self, dataset_id: str) -> DatasetSpec:
        return self.datasets[dataset_id]


def universe_from_dicts(rows: Iterable[dict]) -> tuple[ChannelSlot, ...]:
    return tuple(ChannelSlot(**r) for r in rows)


def universe_to_dicts(universe: Sequence[ChannelSlot]) -> list[dict]:
    return [s.to_dict() for s in universe]


def parse_manifest(d: dict) -> Manifest:
    """Build a manifest from its JSON form.

    Layout: ``{"name", "gen_params": {...defaults}, "datasets": [{"dataset_id",
    "environment_id", "condition", "sampling_rate_hz", "trim_wake_minutes"?,
    "gen_params"?: {...overrides}, "channels": [{"channel", "alternate"?,
    "target"?}]}]}``.
    """
    try:
        defaults = dict(d.get("gen_params", {}))
        slots, specs = [], {}
        for ds in d["datasets"]:
            did = ds["dataset_id"]
            if did in specs:
                raise InvalidParams(f"dataset {did!r} listed twice")
            gp = GenParams.from_dict({**defaults, **ds.get("gen_params", {})})
            specs[did] = DatasetSpec(did, gp, ds.get("trim_wake_minutes"))
            for ch in ds["channels"]:
                slots.append(ChannelSlot(
                    dataset_id=did,
                    environment_id=ds["environment_id"],
                    condition=ds["condition"],
                    sampling_rate_hz=int(ds["sampling_rate_hz"]),
                    primary_channel=ch["channel"],
                    alternate_channel=ch.get("alternate"),
                    usable_as_source=ch.get("source", True),
                    usable_as_target=ch.get("target", False),
                    epoch_seconds=int(ds.get("epoch_seconds", 30)),
                ))
    except (KeyError, TypeError) as exc:
        raise InvalidParams(f"malformed manifest: {exc!r}") from exc
    keys = [f"{s.dataset_id}/{c}" for s in slots for c in s.channels]
    if len(set(keys)) != len(keys):
        raise InvalidParams("a dataset channel appears in more than one slot")
    return Manifest(d.get("name", "manifest"), tuple(slots), specs, d)


def load_manifest(path: str | Path | None = None) -> Manifest:
    """Load a manifest file; ``None`` gives the built-in six-dataset universe."""
    if path is None:
        text = resources.files("xferbench.data").joinpath("builtin.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_manifest(json.loads(text))


def builtin_universe() -> tuple[ChannelSlot, ...]:
    return load_manifest().universe


def with_gen_params(manifest: Manifest, **overrides) -> Manifest:
    """Copy of ``manifest`` with GenParams fields overridden for every dataset."""
    raw = json.loads(json.dumps(manifest.raw))
    raw["gen_params"] = {**raw.get("gen_params", {}), **overrides}
    for ds in raw["datasets"]:
        for k in overrides:
            ds.get("gen_params", {}).pop(k, None)
    return parse_manifest(raw)
