import time
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from xferbench import plan
from xferbench.errors import EmptyUniverse, InvalidParams
from xferbench.plan import ChannelSlot, GroupKey


@pytest.fixture(scope="module")
def universe():
    return plan.builtin_universe()


def test_builtin_counts(universe):
    t0 = time.perf_counter()
    assert len(plan.enumerate_sources(universe)) == 23
    assert len(plan.targets(universe)) == 9
    pairs = plan.enumerate_pairs(universe)
    assert len(pairs) == 134
    per_target = Counter(p.target.key for p in pairs)
    assert per_target.pop("Sleep-EDF-SC/Fpz-Cz") == 14
    assert set(per_target.values()) == {15}
    assert time.perf_counter() - t0 < 1.0


def test_target_list(universe):
    keys = [t.key for t in plan.targets(universe)]
    assert keys == ["MASS-SS1/F4", "MASS-SS1/C4", "MASS-SS3/F4", "MASS-SS3/C4",
                    "Sleep-EDF-SC/Fpz-Cz", "ISRUC-SG1/F4", "ISRUC-SG1/C4",
                    "SHHS1-Normal/C4", "SHHS1-OSA/C4"]


def test_alternate_substitution(universe):
    srcs = {p.source.key for p in plan.enumerate_pairs(universe) if p.target.key == "MASS-SS1/F4"}
    assert "MASS-SS1/F3" in srcs and "MASS-SS1/F4" not in srcs
    assert "MASS-SS1/C4" in srcs and "MASS-SS1/C3" not in srcs


def test_groups(universe):
    groups = plan.group_pairs(plan.enumerate_pairs(universe))
    assert list(groups) == list(plan.GROUP_ORDER)
    assert groups[GroupKey(env_diff=False, channel_diff=True, cond_diff=True)] == []
    assert [g for g, ps in groups.items() if not ps] == [GroupKey(False, True, True)]
    by_key = {p.key: p for ps in groups.values() for p in ps}
    assert by_key[("SHHS1-OSA/C4", "SHHS1-Normal/C4")].group == GroupKey(False, False, True)
    assert by_key[("MASS-SS1/F3", "MASS-SS1/F4")].group == GroupKey(False, False, False)
    # MASS-SS1 and MASS-SS3 are different environments
    assert by_key[("MASS-SS3/F4", "MASS-SS1/F4")].diff_flags.env_diff


def test_single_dataset_universes():
    u = [ChannelSlot("D", "E", "Healthy", 100, "C4", usable_as_target=True)]
    assert len(plan.enumerate_sources(u)) == 1
    assert plan.enumerate_pairs(u) == []
    with pytest.raises(EmptyUniverse):
        plan.enumerate_sources([])
    with pytest.raises(EmptyUniverse):
        plan.enumerate_pairs([])


def test_alternate_must_share_area():
    with pytest.raises(InvalidParams):
        ChannelSlot("D", "E", "Healthy", 100, "F4", alternate_channel="C3")


def test_exhaustive_flag(universe):
    pairs = plan.enumerate_pairs(universe, exhaustive=True)
    assert len(pairs) == 9 * 23 - 9
    assert len({p.key for p in pairs}) == len(pairs)


CHANNELS = {"F": ("F4", "F3"), "C": ("C4", "C3"), "P": ("Pz", None), "O": ("O2", "O1")}


@st.composite
def universes(draw):
    slots = []
    n_ds = draw(st.integers(1, 5))
    for d in range(n_ds):
        env = draw(st.sampled_from(["e1", "e2", "e3"]))
        cond = draw(st.sampled_from(["Healthy", "Apnea"]))
        areas = draw(st.lists(st.sampled_from("FCPO"), min_size=1, max_size=4, unique=True))
        for a in areas:
            prim, alt = CHANNELS[a]
            use_alt = alt is not None and draw(st.booleans())
            slots.append(ChannelSlot(f"D{d}", env, cond, 100, prim, alt if use_alt else None,
                                     usable_as_target=draw(st.booleans())))
    return slots


def brute_force(u):
    out = []
    for t in [s for s in u if s.usable_as_target]:
        for s in u:
            if (s.dataset_id, s.primary_channel) == (t.dataset_id, t.primary_channel):
                if s.alternate_channel:
                    out.append((f"{s.dataset_id}/{s.alternate_channel}", f"{t.dataset_id}/{t.primary_channel}"))
            else:
                out.append((f"{s.dataset_id}/{s.primary_channel}", f"{t.dataset_id}/{t.primary_channel}"))
    return out


@settings(max_examples=200)
@given(universes())
def test_pair_count_law(u):
    pairs = plan.enumerate_pairs(u)
    assert [p.key for p in pairs] == brute_force(u)
    n_t = len(plan.targets(u))
    lacking = sum(1 for s in u if s.usable_as_target and s.alternate_channel is None)
    assert len(pairs) == n_t * len(u) - lacking
    for p in pairs:
        f = p.diff_flags
        assert f.channel_diff == (p.source.area != p.target.area)
        assert f.env_diff == (p.source.environment_id != p.target.environment_id)
        assert f.cond_diff == (p.source.condition != p.target.condition)
    groups = plan.group_pairs(pairs)
    flat = [p for ps in groups.values() for p in ps]
    assert len(flat) == len(pairs) and set(map(id, flat)) == set(map(id, pairs))
    assert all(p.group == g for g, ps in groups.items() for p in ps)


def test_manifest_roundtrip(small_manifest):
    u = small_manifest.universe
    assert plan.universe_from_dicts(plan.universe_to_dicts(u)) == u
    assert small_manifest.spec("A").gen_params.n_subjects == 6
    assert len(small_manifest.digest) == 64


def test_manifest_rejects_duplicates(small_manifest):
    raw = dict(small_manifest.raw)
    raw["datasets"] = raw["datasets"] + raw["datasets"][:1]
    with pytest.raises(InvalidParams):
        plan.parse_manifest(raw)
    with pytest.raises(InvalidParams):
        plan.parse_manifest({"datasets": [{"dataset_id": "A"}]})


def test_with_gen_params(small_manifest):
    m = plan.with_gen_params(small_manifest, n_subjects=9)
    assert m.spec("B").gen_params.n_subjects == 9
    assert m.digest != small_manifest.digest
