"""CSV tables and standalone SVG heatmaps for an analysis.

``write_csvs`` emits impact.csv, w_matrix.csv, generalization.csv and one
h_<target>.csv (normalized) plus hraw_<target>.csv per target; ``render_svgs``
reads those CSVs back and writes an .svg twin for each matrix.
"""
from __future__ import annotations

import csv
import math
from html import escape
from pathlib import Path

import numpy as np

EMPTY = ""


def safe_name(key: str) -> str:
    return key.replace("/", "__").replace("|", "+")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return EMPTY
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _pct(v):
    return None if v is None else 100.0 * v


def write_matrix_csv(path: Path, row_ids, col_ids, values):
    _write(path, ["target"] + list(col_ids),
           ([rid] + [float(v) for v in row] for rid, row in zip(row_ids, values)))


def write_csvs(analysis, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    word = {False: "same", True: "diff"}
    p = out / "impact.csv"
    _write(p, ["environment", "channel", "condition", "n_pairs", "empty", "fs_acc", "fs_mf1",
               "dt_acc", "dt_mf1", "ft_acc", "ft_mf1", "r"],
           ([word[r.group.env_diff], word[r.group.channel_diff], word[r.group.cond_diff],
             r.n_pairs, r.empty, _pct(r.fs_acc), _pct(r.fs_mf1), _pct(r.dt_acc), _pct(r.dt_mf1),
             _pct(r.ft_acc), _pct(r.ft_mf1), r.r] for r in analysis.impact.rows))
    written.append(p)

    w = analysis.w
    p = out / "w_matrix.csv"
    write_matrix_csv(p, w.targets, w.sources, w.values)
    written.append(p)

    p = out / "generalization.csv"
    _write(p, ["source", "generalization"], analysis.generalization.items())
    written.append(p)

    for t, pm in w.pairwise.items():
        for prefix, mat in (("h", pm.normalized), ("hraw", pm.raw)):
            p = out / f"{prefix}_{safe_name(t)}.csv"
            _write(p, ["source"] + list(pm.sources),
                   ([s] + [float(v) for v in row] for s, row in zip(pm.sources, mat)))
            written.append(p)

    if analysis.sensitivity:
        p = out / "sensitivity.csv"
        alphas = list(analysis.sensitivity)
        srcs = list(analysis.sensitivity[alphas[0]])
        _write(p, ["source"] + [f"alpha={a:g}" for a in alphas],
               ([s] + [analysis.sensitivity[a][s] for a in alphas] for s in srcs))
        written.append(p)
    return written


def read_matrix_csv(path: str | Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0][1:]
    ids = [r[0] for r in rows[1:]]
    vals = np.array([[float(v) if v != EMPTY else np.nan for v in r[1:]] for r in rows[1:]])
    return ids, cols, vals.reshape(len(ids), len(cols))


# -- SVG ------------------------------------------------------------------


def _lerp(c0, c1, t):
    return tuple(int(round(a + (b - a) * t)) for a, b in zip(c0, c1))


RED, GREEN, BLUE, WHITE = (215, 48, 39), (26, 152, 80), (49, 54, 149), (255, 255, 255)
ABSENT = (210, 210, 210)


def ratio_color(v: float, vmax: float) -> tuple[int, int, int]:
    """Diverging log scale with green at 1: red below, blue above."""
    if not np.isfinite(v) or v <= 0:
        return ABSENT
    span = math.log(max(vmax, 1.0 + 1e-9))
    t = max(-1.0, min(1.0, math.log(v) / span))
    return _lerp(GREEN, BLUE, t) if t >= 0 else _lerp(GREEN, RED, -t)


def weight_color(v: float, vmax: float) -> tuple[int, int, int]:
    if not np.isfinite(v):
        return ABSENT
    return _lerp(WHITE, GREEN, max(0.0, min(1.0, v / vmax if vmax > 0 else 0.0)))


def heatmap_svg(row_ids, col_ids, values, title: str, kind: str = "ratio", cell: int = 44,
                digits: int = 3) -> str:
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    if kind == "ratio":
        vmax = float(max(np.max(finite), 1.0 / np.min(finite[finite > 0]))) if finite.size else 1.0
        color = ratio_color
    else:
        vmax = float(np.max(finite)) if finite.size else 1.0
        color = weight_color
    left = 8 + 7 * max((len(r) for r in row_ids), default=4)
    top = 40 + 6 * max((len(c) for c in col_ids), default=4)
    width = left + cell * len(col_ids) + 10
    height = top + cell * len(row_ids) + 10
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">',
           f'<text x="{left}" y="16" font-size="13">{escape(title)}</text>']
    for j, c in enumerate(col_ids):
        x = left + j * cell + cell / 2
        out.append(f'<text transform="translate({x:.1f},{top - 4}) rotate(-60)">{escape(c)}</text>')
    for i, r in enumerate(row_ids):
        y = top + i * cell
        out.append(f'<text x="{left - 4}" y="{y + cell / 2 + 3:.1f}" text-anchor="end">{escape(r)}</text>')
        for j in range(len(col_ids)):
            v = values[i, j]
            rgb = color(v, vmax)
            x = left + j * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="rgb{rgb}" stroke="white"/>')
            label = "-" if not np.isfinite(v) else f"{v:.{digits}f}"
            ink = "black" if sum(rgb) > 380 else "white"
            out.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 3:.1f}" text-anchor="middle" '
                       f'fill="{ink}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def table_svg(header, rows, title: str) -> str:
    """Plain text table; the impact summary is not a matrix."""
    widths = [max(len(str(h)), *(len(str(r[k])) for r in rows)) * 7 + 14
              for k, h in enumerate(header)]
    height = 30 + 18 * (len(rows) + 1) + 8
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{sum(widths) + 16}" height="{height}" '
           f'font-family="monospace" font-size="11">',
           f'<text x="8" y="16" font-family="sans-serif" font-size="13">{escape(title)}</text>']
    for i, row in enumerate([header] + list(rows)):
        y = 40 + 18 * i
        x = 8
        if i % 2 == 1:
            out.append(f'<rect x="4" y="{y - 13}" width="{sum(widths) + 8}" height="18" fill="#f0f0f0"/>')
        for k, v in enumerate(row):
            weight = ' font-weight="bold"' if i == 0 else ""
            out.append(f'<text x="{x}" y="{y}"{weight}>{escape(str(v))}</text>')
            x += widths[k]
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _short(v: str) -> str:
    try:
        return f"{float(v):.1f}"
    except ValueError:
        return v or "-"


def render_svgs(out_dir: str | Path) -> list[Path]:
    """Write an SVG next to every CSV found in ``out_dir``."""
    out = Path(out_dir)
    written = []
    i_csv = out / "impact.csv"
    if i_csv.exists():
        with open(i_csv, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        keep = [0, 1, 2, 3, 6, 8, 10, 11]
        header = [rows[0][k] for k in keep]
        body = [[r[k] if k < 4 else _short(r[k]) for k in keep] for r in rows[1:]]
        p = out / "impact.svg"
        p.write_text(table_svg(header, body, "Transfer impact by difference group (MF1 %, r %)"),
                     encoding="utf-8")
        written.append(p)
    w_csv = out / "w_matrix.csv"
    if w_csv.exists():
        ids, cols, vals = read_matrix_csv(w_csv)
        p = out / "w_matrix.svg"
        p.write_text(heatmap_svg(ids, cols, vals, "Transferability W (rows: targets)", "weight"),
                     encoding="utf-8")
        written.append(p)
    g_csv = out / "generalization.csv"
    if g_csv.exists():
        ids, cols, vals = read_matrix_csv(g_csv)
        p = out / "generalization.svg"
        p.write_text(heatmap_svg(["mean"], ids, vals.T, "Generalization (column means of W)",
                                 "weight"), encoding="utf-8")
        written.append(p)
    for h_csv in sorted(out.glob("h_*.csv")):
        ids, cols, vals = read_matrix_csv(h_csv)
        p = h_csv.with_suffix(".svg")
        title = f"Normalized pairwise comparison, target {h_csv.stem[2:].replace('__', '/')}"
        p.write_text(heatmap_svg(ids, cols, vals, title, "ratio", digits=2), encoding="utf-8")
        written.append(p)
    if not written:
        raise FileNotFoundError(f"no analysis CSVs in {out}")
    return written
