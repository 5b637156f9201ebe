"""Acceptance criteria 1-8, each at its stated tolerance and runtime budget.

A summary line per criterion is printed at the end of the pytest run.
Criterion 7 runs the full three-repeat synthetic study twice (several
minutes on one core).
"""
import json
import time
from importlib import resources

import numpy as np
import pytest

from helpers import MINI, brute_impact, ledger_for, oracle, random_reciprocal, rec
from xferbench import kernels, ledger as ledger_mod, plan, scorer, study, synthgen, transferscore as ts
from xferbench.metrics import metric_set, score
from xferbench.signals import Epoch, fourier_resample, resampled_length


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.2f}s, budget {self.limit}s"


# 1 -------------------------------------------------------------------------


@pytest.mark.criterion(1, "plan counts on the built-in universe")
def test_c1_plan_counts():
    with Clock(1.0):
        u = plan.load_manifest().universe
        sources = plan.enumerate_sources(u)
        targets = plan.targets(u)
        pairs = plan.enumerate_pairs(u)
        assert len(sources) == 23
        assert len(targets) == 9
        assert len(pairs) == 134
        per_target = {t.key: sum(1 for p in pairs if p.target.key == t.key) for t in targets}
        assert [k for k, v in per_target.items() if v == 14] == ["Sleep-EDF-SC/Fpz-Cz"]
        assert all(v == 15 for k, v in per_target.items() if k != "Sleep-EDF-SC/Fpz-Cz")
        groups = plan.group_pairs(pairs)
        assert [g for g, ps in groups.items() if not ps] == [plan.GroupKey(False, True, True)]


# 2 -------------------------------------------------------------------------


@pytest.mark.criterion(2, "relative difference and impact arithmetic")
def test_c2_arithmetic():
    with Clock(1.0):
        assert abs(ts.relative_diff(0.80, 0.64) - 25.0) < 1e-12
        recs = [rec("FS", None, "T", 0, 0.80), rec("FT", "i", "T", 0, 0.80), rec("FT", "j", "T", 0, 0.78)]
        h = ts.pairwise_raw(recs, "T", ["i", "j"])
        assert abs(h[0, 1] - 2.5) < 1e-12
        pairs = plan.enumerate_pairs(MINI)
        groups = plan.group_pairs(pairs)
        rng = np.random.default_rng(2024)
        for _ in range(50):
            records = ledger_for(pairs, int(rng.integers(1, 4)), rng)
            got = ts.impact_report(records, groups)
            want = brute_impact(records, groups)
            for row in got.rows:
                if want[row.group] is None:
                    assert row.empty
                else:
                    assert abs(row.r - want[row.group][0]) < 1e-9
                    assert abs(row.dt_mf1 - want[row.group][1]) < 1e-9


# 3 -------------------------------------------------------------------------


@pytest.mark.criterion(3, "normalization and eigenvector properties")
def test_c3_matrices():
    with Clock(10.0):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(1, 16))
            a = np.triu(rng.uniform(-40, 40, (n, n)), 1)
            m = ts.normalize(a - a.T, alpha=float(rng.choice([0.5, 1.0, 2.0])))
            assert np.all(m > 0)
            assert np.max(np.abs(m * m.T - 1.0)) < 1e-9
            assert np.all(np.diag(m) == 1.0)
            for v in (ts.approx_eigenvector(m), ts.power_eigenvector(m)):
                assert abs(v.sum() - 1.0) < 1e-9
        for _ in range(300):
            m, w = random_reciprocal(rng, int(rng.integers(1, 16)))
            a, p = ts.approx_eigenvector(m), ts.power_eigenvector(m)
            assert np.max(np.abs(a - p)) < 1e-9
            assert abs(a.sum() - 1) < 1e-9 and abs(p.sum() - 1) < 1e-9
        checked = 0
        for _ in range(600):
            m, _ = random_reciprocal(rng, int(rng.integers(3, 16)), float(rng.uniform(0.02, 0.4)))
            if ts.consistency_ratio(m) >= 0.1:
                continue
            checked += 1
            a, p = ts.approx_eigenvector(m), ts.power_eigenvector(m)
            assert np.max(np.abs(a - p)) <= 0.05
            assert abs(a.sum() - 1) < 1e-9 and abs(p.sum() - 1) < 1e-9
        assert checked >= 100


# 4 -------------------------------------------------------------------------


@pytest.mark.criterion(4, "metrics against the longhand oracle")
def test_c4_metrics():
    with Clock(5.0):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            cm = rng.integers(0, 30, (5, 5)) * (rng.random((5, 5)) < 0.7)
            if cm.sum() == 0:
                cm[0, 0] = 1
            m = metric_set(cm)
            acc, f1s, mf1 = oracle(cm)
            assert abs(m.acc - acc) < 1e-9
            assert np.max(np.abs(np.array(m.per_class_f1) - f1s)) < 1e-9
            assert abs(m.mf1 - mf1) < 1e-9
        assert abs(score([0, 0, 2, 2, 4], [0, 2, 2, 2, 4]).mf1 - 0.49333) < 1e-5


# 5 -------------------------------------------------------------------------


def _central_diff(k, params, X, y, eps=1e-5):
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            lp, _ = k.loss_grad(params, X, y, 0.0)
            p[idx] = old - eps
            lm, _ = k.loss_grad(params, X, y, 0.0)
            p[idx] = old
            g[idx] = (lp - lm) / (2 * eps)
        out.append(g)
    return out


@pytest.mark.criterion(5, "gradient check and bit-identical checkpoints")
def test_c5_scorer():
    with Clock(30.0):
        k = kernels.impl
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            dims = (5, int(rng.integers(2, 7)), int(rng.integers(2, 7)), 5)
            params = [np.ascontiguousarray(rng.normal(0, 0.5, p.shape)) for p in scorer.init_params(rng, dims)]
            n = int(rng.integers(4, 20))
            X = rng.normal(size=(n, 5))
            y = rng.integers(0, 5, n).astype(np.int64)
            _, g = k.loss_grad(params, X, y, 0.0)
            for a, b in zip(g, _central_diff(k, params, X, y)):
                rel = np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))
                worst = max(worst, float(rel.max()))
        assert worst < 1e-4, worst

        d = synthgen.DatasetDescriptor("D", "E", "Healthy", "C4", 100)
        c = synthgen.generate(d, synthgen.GenParams(n_subjects=6, epochs_per_subject=200, seed=1))
        sp = synthgen.split_subjects(c, 1)
        tr, va = c.epoch_set(sp.train_subjects), c.epoch_set(sp.val_subjects)
        cfg = scorer.TrainConfig(max_epochs=5, seed=42)
        a, b = scorer.pretrain(tr, va, cfg), scorer.pretrain(tr, va, cfg)
        assert scorer.to_bytes(a) == scorer.to_bytes(b)
        fa, fb = scorer.finetune(a, tr, va, cfg), scorer.finetune(b, tr, va, cfg)
        assert scorer.to_bytes(fa) == scorer.to_bytes(fb)


# 6 -------------------------------------------------------------------------


@pytest.mark.criterion(6, "Fourier resampling")
def test_c6_resampling():
    with Clock(5.0):
        assert resampled_length(7680, 256, 100) == 3000
        assert len(fourier_resample(Epoch(np.zeros(7680), 256), 100).samples) == 3000
        t256 = np.arange(7680) / 256
        t100 = np.arange(3000) / 100
        out = fourier_resample(Epoch(np.sin(2 * np.pi * 5 * t256), 256), 100)
        assert np.corrcoef(out.samples, np.sin(2 * np.pi * 5 * t100))[0, 1] > 0.99
        for src, dst in ((256, 100), (100, 256), (200, 125), (125, 200), (128, 100)):
            out = fourier_resample(Epoch(np.full(src * 30, 3.25), src), dst)
            assert np.max(np.abs(out.samples - 3.25)) < 1e-9


# 7 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def study_runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("study")
    m = plan.load_manifest()
    assert m.spec("MASS-SS1").gen_params.n_subjects == 12
    assert m.spec("MASS-SS1").gen_params.epochs_per_subject == 400
    cfg = study.StudyConfig(m, repeats=3, jobs=study.default_jobs())
    t0 = time.perf_counter()
    a = d / "a.jsonl"
    study.run_study(cfg, a)
    b = d / "b.jsonl"
    study.run_study(cfg, b)
    elapsed = time.perf_counter() - t0
    return study.analyze(a), a, b, elapsed


def _ft_dt_fs(led_path):
    led = ledger_mod.read(led_path)
    mean = lambda s: float(np.mean([r.metrics.mf1 for r in led.records if r.setting == s]))
    return mean("FT"), mean("DT"), mean("FS")


@pytest.mark.slow
@pytest.mark.criterion(7, "end-to-end synthetic study")
def test_c7a_ft_beats_dt(study_runs):
    a = study_runs[0]
    for row in a.impact.rows:
        if not row.empty:
            assert row.ft_mf1 >= row.dt_mf1, row.group.label()


@pytest.mark.slow
@pytest.mark.criterion(7, "end-to-end synthetic study")
def test_c7b_ft_near_fs(study_runs):
    ft, _, fs = _ft_dt_fs(study_runs[1])
    assert ft >= fs - 0.01


@pytest.mark.slow
@pytest.mark.criterion(7, "end-to-end synthetic study")
def test_c7c_group_ordering(study_runs):
    rows = {r.group: r for r in study_runs[0].impact.rows if not r.empty}
    channel_only = rows[plan.GroupKey(False, True, False)].r
    cond_only = rows[plan.GroupKey(False, False, True)].r
    env = [r.r for g, r in rows.items() if g.env_diff]
    assert len(env) == 4
    assert min(env) > channel_only > cond_only


@pytest.mark.slow
@pytest.mark.criterion(7, "end-to-end synthetic study")
def test_c7d_rerun_identical_and_budget(study_runs):
    _, a, b, elapsed = study_runs
    assert a.read_bytes() == b.read_bytes()
    # both runs together, on however many cores are available
    assert elapsed < 20 * 60


# 8 -------------------------------------------------------------------------


@pytest.mark.criterion(8, "fixture ledger reproduces hand-computed outputs")
def test_c8_fixture():
    with Clock(1.0):
        data = resources.files("xferbench.data")
        led = ledger_mod.parse(data.joinpath("fixture_ledger.jsonl").read_text("utf-8"))
        exp = json.loads(data.joinpath("fixture_expected.json").read_text("utf-8"))
        a = study.analyze(led, alpha=exp["alpha"])
        assert len(a.w.targets) == 2 and len(a.w.sources) == 3
        for t, h in exp["H"].items():
            assert np.max(np.abs(a.w.pairwise[t].normalized - np.array(h["values"]))) < 1e-9
        assert np.allclose(a.w.values, np.array(exp["W"], dtype=float), atol=1e-9, rtol=0)
        for s, v in exp["generalization"].items():
            assert abs(a.generalization[s] - v) < 1e-9
