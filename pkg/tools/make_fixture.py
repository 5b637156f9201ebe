"""Write the shipped 2-target x 3-source fixture ledger and its expected outputs.

Expected values are computed here with exact rational arithmetic, directly
from the definitions, without importing xferbench.
"""
import json
from fractions import Fraction as F
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "xferbench" / "data"

UNIVERSE = [
    dict(dataset_id="A", environment_id="envA", condition="Healthy", sampling_rate_hz=100,
         primary_channel="F4", alternate_channel="F3", usable_as_source=True,
         usable_as_target=True, epoch_seconds=30),
    dict(dataset_id="B", environment_id="envB", condition="Apnea", sampling_rate_hz=125,
         primary_channel="C4", alternate_channel="C3", usable_as_source=True,
         usable_as_target=True, epoch_seconds=30),
    dict(dataset_id="X", environment_id="envA", condition="Healthy", sampling_rate_hz=200,
         primary_channel="O2", alternate_channel=None, usable_as_source=True,
         usable_as_target=False, epoch_seconds=30),
]
COLUMNS = ["A/F3|F4", "B/C3|C4", "X/O2"]

# MF1 per repeat (two repeats)
FS = {"A/F4": ("0.81", "0.79"), "B/C4": ("0.75", "0.75")}
FT = {
    "A/F4": {"A/F3": ("0.78", "0.80"), "B/C4": ("0.71", "0.73"), "X/O2": ("0.7856", "0.7856")},
    "B/C4": {"A/F4": ("0.60", "0.60"), "B/C3": ("0.75", "0.73"), "X/O2": ("0.66", "0.66")},
}
DT = {
    "A/F4": {"A/F3": ("0.77", "0.79"), "B/C4": ("0.40", "0.44"), "X/O2": ("0.50", "0.52")},
    "B/C4": {"A/F4": ("0.30", "0.34"), "B/C3": ("0.70", "0.72"), "X/O2": ("0.45", "0.45")},
}
COL_OF = {"A/F3": 0, "A/F4": 0, "B/C3": 1, "B/C4": 1, "X/O2": 2}
ALPHA = F(1)


def mean(vals):
    return sum(F(v) for v in vals) / len(vals)


def record(setting, source, target, repeat, mf1):
    # acc is only carried along; per-class F1 chosen so their mean is mf1
    m = float(F(mf1))
    return {"schema": 1, "kind": "record", "setting": setting, "source": source,
            "target": target, "repeat": repeat, "seed": 1000 + repeat,
            "acc": float(F(mf1) + F(1, 20)), "mf1": m, "per_class_f1": [m] * 5, "n_test": 100}


def normalized(h):
    n = len(h)
    m = [[F(1)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if h[i][j] > ALPHA:
                m[i][j] = h[i][j]
            elif h[i][j] < -ALPHA:
                m[i][j] = 1 / abs(h[j][i])
    return m


def eigen(m):
    n = len(m)
    colsum = [sum(m[k][j] for k in range(n)) for j in range(n)]
    return [sum(m[i][j] / colsum[j] for j in range(n)) / n for i in range(n)]


def main():
    lines = [{"schema": 1, "kind": "meta", "tool": "hand-built fixture", "repeats": 2,
              "exhaustive": False, "universe": UNIVERSE}]
    for t in FS:
        for r in range(2):
            lines.append(record("FS", None, t, r, FS[t][r]))
        for s in FT[t]:
            for r in range(2):
                lines.append(record("DT", s, t, r, DT[t][s][r]))
                lines.append(record("FT", s, t, r, FT[t][s][r]))
    expected = {"alpha": 1.0, "columns": COLUMNS, "targets": list(FS), "H": {}, "H_raw": {},
                "W": [], "generalization": {}}
    W = []
    for t in FS:
        srcs = list(FT[t])
        p_t = mean(FS[t])
        p = [mean(FT[t][s]) for s in srcs]
        h = [[(p[i] - p[j]) / p_t * 100 for j in range(3)] for i in range(3)]
        m = normalized(h)
        v = eigen(m)
        row = [None] * 3
        for s, w in zip(srcs, v):
            row[COL_OF[s]] = w
        W.append(row)
        expected["H_raw"][t] = {"sources": srcs, "values": [[float(x) for x in r] for r in h]}
        expected["H"][t] = {"sources": srcs, "values": [[float(x) for x in r] for r in m]}
        expected["W"].append([float(x) for x in row])
    for j, c in enumerate(COLUMNS):
        col = [W[i][j] for i in range(len(W)) if W[i][j] is not None]
        expected["generalization"][c] = float(sum(col) / len(col))
    (OUT / "fixture_ledger.jsonl").write_text(
        "".join(json.dumps(l, separators=(", ", ": ")) + "\n" for l in lines), encoding="utf-8")
    (OUT / "fixture_expected.json").write_text(json.dumps(expected, indent=1) + "\n",
                                               encoding="utf-8")


if __name__ == "__main__":
    main()
