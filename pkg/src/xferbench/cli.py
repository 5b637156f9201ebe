"""``xferbench`` command line: gen, run, analyze, report, verify-plan."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from xferbench import __version__, plan, report, study
from xferbench.errors import XferBenchError
from xferbench.scorer import TrainConfig

log = logging.getLogger("xferbench")


def _manifest(path):
    return plan.load_manifest(None if path in (None, "builtin") else path)


def cmd_gen(args) -> int:
    m = _manifest(args.manifest)
    paths = study.generate_cohorts(m, args.out)
    print(f"wrote {len(paths)} cohorts to {args.out}")
    return 0


def cmd_run(args) -> int:
    m = _manifest(args.manifest)
    train = TrainConfig(learning_rate=args.lr, momentum=args.momentum, batch_size=args.batch_size,
                        max_epochs=args.max_epochs, weight_decay=args.weight_decay)
    cfg = study.StudyConfig(
        manifest=m, repeats=args.repeats, seed=args.seed, train=train, jobs=args.jobs,
        exhaustive=args.exhaustive,
        cohort_dir=Path(args.cohorts) if args.cohorts else None,
        checkpoint_dir=Path(args.checkpoints) if args.checkpoints else None)
    led = study.run_study(cfg, args.ledger)
    counts = {}
    for r in led.records:
        counts[r.setting] = counts.get(r.setting, 0) + 1
    print(f"ledger {args.ledger}: " + ", ".join(f"{k}={counts.get(k, 0)}" for k in ("FS", "DT", "FT")))
    return 0


def cmd_analyze(args) -> int:
    universe = _manifest(args.manifest).universe if args.manifest else None
    a = study.analyze(args.ledger, alpha=args.alpha, method=args.eigen, universe=universe,
                      sensitivity=args.sensitivity)
    paths = report.write_csvs(a, args.out)
    for row in a.impact.rows:
        r = "empty" if row.empty else f"n={row.n_pairs:3d} r={row.r:7.2f}"
        print(f"{row.group.label():40s} {r}")
    print(f"wrote {len(paths)} CSV files to {args.out}")
    return 0


def cmd_report(args) -> int:
    paths = report.render_svgs(args.out)
    print(f"wrote {len(paths)} SVG files to {args.out}")
    return 0


def cmd_verify_plan(args) -> int:
    u = _manifest(args.manifest).universe
    sources = plan.enumerate_sources(u)
    targets = plan.targets(u)
    pairs = plan.enumerate_pairs(u, args.exhaustive)
    groups = plan.group_pairs(pairs)
    print(f"sources: {len(sources)}")
    print(f"targets: {len(targets)}")
    print(f"pairs:   {len(pairs)}")
    for t in targets:
        print(f"  {t.key}: {sum(1 for p in pairs if p.target.key == t.key)} sources")
    empty = [g.label() for g, ps in groups.items() if not ps]
    print("empty groups: " + (", ".join(empty) if empty else "none"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xferbench", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate and write synthetic cohorts")
    p.add_argument("--manifest", default="builtin")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("run", help="run or resume the transfer study")
    p.add_argument("--manifest", default="builtin")
    p.add_argument("--ledger", required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cohorts", help="directory written by 'gen' (default: generate in memory)")
    p.add_argument("--checkpoints", help="cache directory for pre-trained checkpoints")
    p.add_argument("--exhaustive", action="store_true", help="pair every source with every target")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("analyze", help="impact table, W and generalization from a ledger")
    p.add_argument("--ledger", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--eigen", choices=("approx", "power"), default="approx")
    p.add_argument("--manifest", help="universe override for ledgers without one")
    p.add_argument("--sensitivity", action="store_true", help="also sweep alpha over 0.5, 1, 2")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("report", help="render SVG heatmaps from analysis CSVs")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("verify-plan", help="print source/target/pair counts for a manifest")
    p.add_argument("--manifest", default="builtin")
    p.add_argument("--exhaustive", action="store_true")
    p.set_defaults(fn=cmd_verify_plan)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (XferBenchError, FileNotFoundError) as exc:
        print(f"xferbench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
