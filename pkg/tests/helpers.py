import numpy as np

from xferbench.metrics import MetricSet
from xferbench.plan import ChannelSlot
from xferbench.transferscore import EvalRecord


def rec(setting, source, target, repeat, mf1, acc=None):
    acc = mf1 if acc is None else acc
    return EvalRecord(setting, source, target, repeat, 0, MetricSet(acc, (mf1,) * 5, mf1))


def ledger_for(pairs, repeats, rng, ft=True):
    """Random complete FS/DT/FT records for ``pairs``."""
    out = []
    targets = sorted({p.target.key for p in pairs})
    for r in range(repeats):
        for t in targets:
            out.append(rec("FS", None, t, r, rng.uniform(0.5, 0.9), rng.uniform(0.6, 0.95)))
        for p in pairs:
            out.append(rec("DT", p.source.key, p.target.key, r, rng.uniform(0.2, 0.8), rng.uniform(0.3, 0.9)))
            if ft:
                out.append(rec("FT", p.source.key, p.target.key, r, rng.uniform(0.5, 0.9), rng.uniform(0.6, 0.95)))
    return out


def random_reciprocal(rng, n, noise=0.0):
    w = rng.uniform(0.2, 5.0, n)
    m = w[:, None] / w[None, :]
    if noise:
        e = rng.normal(0, noise, (n, n))
        e = np.triu(e, 1)
        e = e - e.T
        m = m * np.exp(e)
    return m, w / w.sum()


def oracle(cm):
    """Per-class precision/recall F1 written out longhand."""
    cm = np.asarray(cm)
    total = cm.sum()
    f1s = []
    for c in range(5):
        tp = cm[c, c]
        fp = sum(cm[r, c] for r in range(5) if r != c)
        fn = sum(cm[c, k] for k in range(5) if k != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return np.trace(cm) / total, f1s, sum(f1s) / 5


def slot(ds, env, cond, ch, target=False, alt=None):
    return ChannelSlot(ds, env, cond, 100, ch, alt, usable_as_target=target)


MINI = [
    slot("A", "e1", "Healthy", "F4", True, "F3"),
    slot("B", "e2", "Healthy", "C4", True),
    slot("C", "e1", "Apnea", "F4"),
]


def brute_impact(records, groups):
    out = {}
    for g, pairs in groups.items():
        if not pairs:
            out[g] = None
            continue
        rs, dt = [], []
        for p in pairs:
            fs_v = [r.metrics.mf1 for r in records if r.setting == "FS" and r.target == p.target.key]
            dt_v = [r.metrics.mf1 for r in records
                    if r.setting == "DT" and r.target == p.target.key and r.source == p.source.key]
            rs.append((sum(fs_v) / len(fs_v) / (sum(dt_v) / len(dt_v)) - 1) * 100)
            dt += dt_v
        out[g] = (sum(rs) / len(rs), sum(dt) / len(dt))
    return out
