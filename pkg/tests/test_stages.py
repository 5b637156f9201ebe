import pytest
from hypothesis import given, strategies as st

from xferbench.errors import EmptyAfterFilter, EmptyInput, NoSleepPeriod
from xferbench.stages import (RawStageLabel, StageLabel, distribution_from_counts, filter_epochs,
                              harmonize, stage_distribution, trim_wake)

W, N1, N2, N3, REM = StageLabel
raw_labels = st.sampled_from(list(RawStageLabel))
stage_labels = st.sampled_from(list(StageLabel))


def test_eight_raw_codes_roundtrip():
    names = ["W", "N1", "N2", "N3", "N4", "REM", "MOVEMENT", "UNKNOWN"]
    assert [r.value for r in RawStageLabel] == names
    for n in names:
        assert RawStageLabel(n).value == n


def test_stage_ordinals_fixed():
    assert [int(s) for s in StageLabel] == [0, 1, 2, 3, 4]
    assert [s.name for s in StageLabel] == ["W", "N1", "N2", "N3", "REM"]


@pytest.mark.parametrize("raw,want", [
    ("N4", N3), ("W", W), ("N1", N1), ("N2", N2), ("N3", N3), ("REM", REM),
    ("MOVEMENT", None), ("UNKNOWN", None),
])
def test_harmonize(raw, want):
    assert harmonize(RawStageLabel(raw)) == want


@given(stage_labels)
def test_harmonize_idempotent_on_image(s):
    assert harmonize(s) == s
    assert harmonize(RawStageLabel(s.name)) == s


def test_filter_epochs_example():
    out = filter_epochs([("e1", RawStageLabel.W), ("e2", RawStageLabel.MOVEMENT),
                         ("e3", RawStageLabel.N4)])
    assert out == [("e1", W), ("e3", N3)]


def test_filter_epochs_all_wake():
    assert filter_epochs([(i, RawStageLabel.W) for i in range(5)]) == [(i, W) for i in range(5)]


def test_filter_epochs_errors():
    with pytest.raises(EmptyAfterFilter):
        filter_epochs([(0, RawStageLabel.UNKNOWN), (1, RawStageLabel.UNKNOWN)])
    with pytest.raises(EmptyInput):
        filter_epochs([])


@given(st.lists(raw_labels, min_size=1, max_size=60))
def test_filter_length_law(labels):
    seq = list(enumerate(labels))
    dropped = sum(l in (RawStageLabel.MOVEMENT, RawStageLabel.UNKNOWN) for l in labels)
    if dropped == len(labels):
        with pytest.raises(EmptyAfterFilter):
            filter_epochs(seq)
        return
    out = filter_epochs(seq)
    assert len(out) == len(labels) - dropped
    assert [i for i, _ in out] == sorted(i for i, _ in out)


def test_trim_wake_keeps_30_minutes():
    seq = [(i, W) for i in range(120)] + [(120, N2), (121, N3)]
    out = trim_wake(seq, keep_minutes=30, epoch_seconds=30)
    assert sum(1 for _, s in out if s == W) == 60
    assert out[0][0] == 60 and out[-1][0] == 121


def test_trim_wake_noop_and_trailing():
    seq = [(0, N1), (1, W), (2, N2)]
    assert trim_wake(seq) == seq
    seq = [(0, N1)] + [(i, W) for i in range(1, 100)]
    assert len(trim_wake(seq, 30, 30)) == 61


def test_trim_wake_all_wake():
    with pytest.raises(NoSleepPeriod):
        trim_wake([(i, W) for i in range(10)])


@given(st.lists(stage_labels, min_size=1, max_size=80), st.integers(0, 20))
def test_trim_wake_properties(labels, keep_epochs):
    seq = list(enumerate(labels))
    if all(s == W for s in labels):
        with pytest.raises(NoSleepPeriod):
            trim_wake(seq, keep_epochs * 0.5, 30)
        return
    out = trim_wake(seq, keep_epochs * 0.5, 30)
    assert len(out) <= len(seq)
    assert [x for x in seq if x[1] != W] == [x for x in out if x[1] != W]
    # output is a contiguous window of the input
    assert seq[out[0][0]:out[-1][0] + 1] == out


def test_distribution_published_counts():
    mass = distribution_from_counts({"W": 12242, "N1": 7112, "N2": 22167, "N3": 3407, "REM": 6365})
    assert mass.total == 51293
    assert mass.fraction(N1) == pytest.approx(0.1387, abs=5e-5)
    isruc = distribution_from_counts({"W": 20098, "N1": 11062, "N2": 27511, "N3": 17251, "REM": 11265})
    assert isruc.fraction(N1) == pytest.approx(0.1269, abs=5e-5)


def test_distribution_trivial_and_empty():
    d = stage_distribution([W, W, W, W])
    assert d.fraction(W) == 1.0 and d.as_dict()["W"] == 4
    with pytest.raises(EmptyInput):
        stage_distribution([])


@given(st.lists(stage_labels, min_size=1, max_size=200))
def test_distribution_fractions_sum_to_one(labels):
    d = stage_distribution(labels)
    assert d.total == sum(d.counts) == len(labels)
    assert abs(sum(d.fractions) - 1.0) < 1e-12
