import json

import pytest
from hypothesis import given, strategies as st

from helpers import rec
from xferbench import ledger as L
from xferbench.errors import DuplicateRecord, FormatError

META = {"tool": "xferbench", "repeats": 2}


def sample():
    return L.Ledger(dict(META), [
        rec("FT", "B/C4", "A/F4", 1, 0.61),
        rec("DT", "B/C4", "A/F4", 0, 0.42),
        rec("FS", None, "B/C4", 0, 0.7),
        rec("FS", None, "A/F4", 1, 0.8),
        rec("FS", None, "A/F4", 0, 0.79),
    ])


def test_round_trip(tmp_path):
    led = sample()
    p = L.write(tmp_path / "l.jsonl", led)
    back = L.read(p)
    assert back.meta == META
    assert [r.key for r in back.records] == [r.key for r in led.canonical().records]
    assert [r.metrics for r in back.records] == [r.metrics for r in led.canonical().records]
    assert p.read_text() == back.to_text()
    assert not (tmp_path / "l.jsonl.tmp").exists()


def test_canonical_order():
    keys = [(r.target, r.setting, r.source, r.repeat) for r in sample().canonical().records]
    assert keys == [("A/F4", "FS", None, 0), ("A/F4", "FS", None, 1), ("A/F4", "DT", "B/C4", 0),
                    ("A/F4", "FT", "B/C4", 1), ("B/C4", "FS", None, 0)]


@given(st.permutations(range(5)))
def test_text_independent_of_insertion_order(perm):
    recs = sample().records
    assert L.Ledger(dict(META), [recs[i] for i in perm]).to_text() == sample().to_text()


def test_line_format():
    lines = sample().to_text().splitlines()
    meta = json.loads(lines[0])
    assert meta["schema"] == 1 and meta["kind"] == "meta"
    first = json.loads(lines[1])
    assert list(first) == ["schema", "kind", "setting", "source", "target", "repeat", "seed",
                           "acc", "mf1", "per_class_f1", "n_test"]
    assert first["source"] is None and first["setting"] == "FS"


def test_duplicates_rejected():
    led = sample()
    with pytest.raises(DuplicateRecord):
        led.add(rec("FS", None, "A/F4", 0, 0.5))
    with pytest.raises(DuplicateRecord):
        L.Ledger({}, [rec("FS", None, "A", 0, 0.5)] * 2)


@pytest.mark.parametrize("text", [
    '{"schema": 2, "kind": "meta"}\n',
    '{"kind": "meta"}\n',
    '{"schema": 1, "kind": "meta"}\n{"schema": 1, "kind": "meta"}\n',
    '{"schema": 1, "kind": "meta"}\n{"schema": 1, "kind": "nope"}\n',
    '{"schema": 1, "kind": "meta"}\n{"schema": 1, "kind": "record", "setting": "FS"}\n',
    '{"schema": 1, "kind": "meta"}\n{"schema": 1, "kind": "rec',
])
def test_bad_input(text):
    with pytest.raises(FormatError):
        L.parse(text)


def test_appender_resumable(tmp_path):
    p = tmp_path / "l.jsonl"
    led = L.Ledger(dict(META))
    recs = sample().records
    with L.Appender(p, led) as app:
        app.append(recs[:2])
    with L.Appender(p, L.read(p)) as app:
        app.append(recs[2:])
    back = L.read(p)
    assert back.keys() == sample().keys()
    assert back.to_text() == sample().to_text()
    assert back.repeats == [0, 1]
    assert L.Ledger({}, recs).repeats == [0, 1]
