"""Append-only JSON-lines ledger of evaluation records.

Line 1 is a ``meta`` object (schema version, manifest hash, seeds, tool
version, the channel universe). Every further line is one ``record``. Keys
are written in a fixed order; on completion the records are rewritten sorted
by key so the file bytes do not depend on job completion order.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from xferbench.errors import DuplicateRecord, FormatError
from xferbench.metrics import MetricSet
from xferbench.plan import universe_from_dicts
from xferbench.transferscore import SETTINGS, EvalRecord

SCHEMA = 1
_SETTING_RANK = {s: i for i, s in enumerate(SETTINGS)}


def record_to_dict(r: EvalRecord) -> dict:
    return {
        "schema": SCHEMA,
        "kind": "record",
        "setting": r.setting,
        "source": None if r.setting == "FS" else r.source,
        "target": r.target,
        "repeat": r.repeat,
        "seed": r.seed,
        "acc": r.metrics.acc,
        "mf1": r.metrics.mf1,
        "per_class_f1": list(r.metrics.per_class_f1),
        "n_test": r.n_test,
    }


def record_from_dict(d: dict) -> EvalRecord:
    try:
        m = MetricSet(float(d["acc"]), tuple(float(v) for v in d["per_class_f1"]), float(d["mf1"]))
        return EvalRecord(d["setting"], d.get("source"), d["target"], int(d["repeat"]),
                          int(d.get("seed", 0)), m, int(d.get("n_test", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad ledger record {d!r}: {exc}") from exc


def sort_key(r: EvalRecord):
    return (r.target, _SETTING_RANK[r.setting], r.source or "", r.repeat)


def dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


@dataclass
class Ledger:
    meta: dict
    records: list[EvalRecord] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.key in seen:
                raise DuplicateRecord(f"duplicate record {r.key}")
            seen.add(r.key)
        self._keys = seen

    def keys(self) -> set:
        return set(self._keys)

    def add(self, r: EvalRecord):
        if r.key in self._keys:
            raise DuplicateRecord(f"duplicate record {r.key}")
        self._keys.add(r.key)
        self.records.append(r)

    def universe(self):
        if "universe" not in self.meta:
            return None
        return universe_from_dicts(self.meta["universe"])

    @property
    def repeats(self) -> list[int]:
        if "repeats" in self.meta:
            return list(range(int(self.meta["repeats"])))
        return sorted({r.repeat for r in self.records})

    def canonical(self) -> "Ledger":
        return Ledger(dict(self.meta), sorted(self.records, key=sort_key))

    def to_text(self) -> str:
        lines = [dumps({"schema": SCHEMA, "kind": "meta", **_strip(self.meta)})]
        lines += [dumps(record_to_dict(r)) for r in sorted(self.records, key=sort_key)]
        return "\n".join(lines) + "\n"


def _strip(meta: dict) -> dict:
    return {k: v for k, v in meta.items() if k not in ("schema", "kind")}


def parse(text: str, source: str = "<ledger>") -> Ledger:
    meta, records = None, []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{source}:{n}: {exc}") from exc
        if not isinstance(d, dict) or d.get("schema") != SCHEMA:
            raise FormatError(f"{source}:{n}: missing or unsupported schema version")
        kind = d.get("kind")
        if kind == "meta":
            if meta is not None or records:
                raise FormatError(f"{source}:{n}: meta must be the first and only header line")
            meta = _strip(d)
        elif kind == "record":
            records.append(record_from_dict(d))
        else:
            raise FormatError(f"{source}:{n}: unknown line kind {kind!r}")
    return Ledger(meta or {}, records)


def read(path: str | Path) -> Ledger:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), str(path))


def write(path: str | Path, ledger: Ledger) -> Path:
    """Atomically write ``ledger`` in canonical order."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(ledger.to_text(), encoding="utf-8")
    os.replace(tmp, path)
    return path


class Appender:
    """Single writer that appends records as jobs finish.

    Interrupted files keep every flushed line, so a rerun can skip the keys
    already present.
    """

    def __init__(self, path: str | Path, ledger: Ledger):
        self.path = Path(path)
        self.ledger = ledger
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "a", encoding="utf-8")
        if fresh:
            self._fh.write(dumps({"schema": SCHEMA, "kind": "meta", **_strip(ledger.meta)}) + "\n")
            for r in ledger.records:
                self._fh.write(dumps(record_to_dict(r)) + "\n")
            self._fh.flush()

    def append(self, records: Iterable[EvalRecord]):
        for r in records:
            self.ledger.add(r)
            self._fh.write(dumps(record_to_dict(r)) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
