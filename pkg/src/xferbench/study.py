"""Study orchestration: cohorts -> pre-training -> FS/DT/FT evaluations -> ledger.

Jobs are pure functions of (manifest, study seed, job key, repeat). The
parent process is the only ledger writer; records are appended as jobs
finish and the file is rewritten in canonical order at the end, so the bytes
do not depend on the number of workers or on interruptions.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from xferbench import __version__, kernels, ledger as ledger_mod, plan, scorer, synthgen
from xferbench.errors import JobFailed, LedgerMismatch, MissingRecord
from xferbench.metrics import MetricSet, score
from xferbench.seeds import hash64
from xferbench.transferscore import (DEFAULT_ALPHA, EvalRecord, ImpactReport, RecordIndex,
                                     TransferabilityMatrix, alpha_sensitivity, build_w,
                                     generalization_vector, impact_report)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudyConfig:
    manifest: plan.Manifest
    repeats: int = 3
    seed: int = 0
    train: scorer.TrainConfig = field(default_factory=scorer.TrainConfig)
    jobs: int = 1
    exhaustive: bool = False
    cohort_dir: Path | None = None  # read cohorts written by ``gen`` instead of regenerating
    checkpoint_dir: Path | None = None  # cache of pre-trained checkpoints

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def meta(self) -> dict:
        return {
            "tool": "xferbench",
            "tool_version": __version__,
            "manifest_name": self.manifest.name,
            "manifest_hash": self.manifest.digest,
            "study_seed": self.seed,
            "repeats": self.repeats,
            "exhaustive": self.exhaustive,
            "backend": kernels.BACKEND,
            "train_config": self.train.to_dict(),
            "universe": plan.universe_to_dicts(self.manifest.universe),
        }


def job_seed(study_seed: int, job_key: tuple, repeat: int) -> int:
    return hash64(study_seed, job_key, repeat)


def split_seed(study_seed: int, dataset_id: str) -> int:
    return hash64(study_seed, "split", dataset_id)


# -- worker-side data access ----------------------------------------------

_WORKER: dict = {}


def _init_worker(manifest_raw: dict, cohort_dir, study_seed: int):
    _WORKER.clear()
    _WORKER.update(manifest=plan.parse_manifest(manifest_raw), cohort_dir=cohort_dir,
                   seed=study_seed)
    _cohort.cache_clear()


def cohort_path(cohort_dir, key: str) -> Path:
    return Path(cohort_dir) / key.replace("/", "__")


@lru_cache(maxsize=None)
def _cohort(key: str) -> synthgen.Cohort:
    m: plan.Manifest = _WORKER["manifest"]
    if _WORKER["cohort_dir"] is not None:
        return synthgen.read_cohort(cohort_path(_WORKER["cohort_dir"], key))
    dataset_id, channel = key.split("/", 1)
    slot = next(s for s in m.universe if s.dataset_id == dataset_id and channel in s.channels)
    spec = m.spec(dataset_id)
    return synthgen.generate(slot.descriptor(channel), spec.gen_params, spec.trim_wake_minutes)


def _sets(key: str):
    """(train, val, test) epoch sets; the split depends only on the dataset."""
    c = _cohort(key)
    sp = synthgen.split_subjects(c, split_seed(_WORKER["seed"], c.descriptor.dataset_id))
    return c.epoch_set(sp.train_subjects), c.epoch_set(sp.val_subjects), c.epoch_set(sp.test_subjects)


def evaluate(model: scorer.ModelCheckpoint, test) -> MetricSet:
    return score(test.labels, scorer.predict(model, test))


def _pretrain_job(source: str, repeat: int, cfg: scorer.TrainConfig, fs_target: bool,
                  dt_targets: tuple[str, ...], ckpt_dir) -> tuple[bytes, list[EvalRecord]]:
    seed = job_seed(_WORKER["seed"], ("pretrain", source), repeat)
    model = None
    cached = Path(ckpt_dir) / f"{source.replace('/', '__')}.r{repeat}.ckpt.json" if ckpt_dir else None
    if cached is not None and cached.exists():
        model = scorer.load(cached)
        if model.train_meta.get("seed") != seed:
            model = None
    if model is None:
        train, val, _ = _sets(source)
        model = scorer.pretrain(train, val, cfg.replace(seed=seed), source=source)
        if cached is not None:
            cached.parent.mkdir(parents=True, exist_ok=True)
            scorer.save(model, cached)
    out = []
    if fs_target:
        test = _sets(source)[2]
        out.append(EvalRecord("FS", None, source, repeat, seed, evaluate(model, test), len(test)))
    for t in dt_targets:
        test = _sets(t)[2]
        out.append(EvalRecord("DT", source, t, repeat, seed, evaluate(model, test), len(test)))
    return scorer.to_bytes(model), out


def _finetune_job(source: str, target: str, repeat: int, cfg: scorer.TrainConfig,
                  init_bytes: bytes) -> list[EvalRecord]:
    seed = job_seed(_WORKER["seed"], ("FT", source, target), repeat)
    init = scorer.from_bytes(init_bytes)
    train, val, test = _sets(target)
    model = scorer.finetune(init, train, val, cfg.replace(seed=seed), target=target)
    return [EvalRecord("FT", source, target, repeat, seed, evaluate(model, test), len(test))]


def _call(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # noqa: BLE001 - re-raised with the job identity
        raise JobFailed(f"{fn.__name__.strip('_')}{args[:3]!r}", exc) from exc


# -- expected records -----------------------------------------------------


def expected_keys(universe, repeats, exhaustive=False) -> list[tuple]:
    pairs = plan.enumerate_pairs(universe, exhaustive)
    keys = []
    for r in repeats:
        keys += [("FS", None, t.key, r) for t in plan.targets(universe)]
        keys += [(s, p.source.key, p.target.key, r) for p in pairs for s in ("DT", "FT")]
    return keys


def _load_existing(path: Path, meta: dict) -> ledger_mod.Ledger:
    if not path.exists() or path.stat().st_size == 0:
        return ledger_mod.Ledger(meta)
    text = path.read_text(encoding="utf-8")
    if not text.endswith("\n"):  # interrupted mid-line
        text = text[:text.rfind("\n") + 1]
    led = ledger_mod.parse(text, str(path))
    if led.meta != meta:
        diff = sorted(k for k in set(led.meta) | set(meta) if led.meta.get(k) != meta.get(k))
        raise LedgerMismatch(f"{path} was written for a different study (fields {diff})")
    ledger_mod.write(path, led)
    return led


def run_study(cfg: StudyConfig, ledger_path: str | Path, stop_after: int | None = None) -> ledger_mod.Ledger:
    """Run (or resume) the study and return the canonical ledger.

    ``stop_after`` ends the run after that many jobs; it exists to exercise
    resumption.
    """
    ledger_path = Path(ledger_path)
    meta = cfg.meta()
    led = _load_existing(ledger_path, meta)
    done = led.keys()
    universe = cfg.manifest.universe
    pairs = plan.enumerate_pairs(universe, cfg.exhaustive)
    target_keys = {t.key for t in plan.targets(universe)}
    sources = [s.key for s in plan.enumerate_sources(universe)]
    dt_of = {s: tuple(p.target.key for p in pairs if p.source.key == s) for s in sources}
    repeats = range(cfg.repeats)

    pre_jobs, ft_jobs = [], []
    for r in repeats:
        for s in sources:
            fs = s in target_keys and ("FS", None, s, r) not in done
            dts = tuple(t for t in dt_of[s] if ("DT", s, t, r) not in done)
            fts = [(s, t, r) for t in dt_of[s] if ("FT", s, t, r) not in done]
            if fs or dts or fts:
                pre_jobs.append((s, r, fs, dts))
            ft_jobs += fts
    log.info("study: %d pretrain jobs, %d fine-tune jobs pending", len(pre_jobs), len(ft_jobs))

    budget = [stop_after if stop_after is not None else len(pre_jobs) + len(ft_jobs)]
    ckpt_dir = str(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    init_args = (cfg.manifest.raw, str(cfg.cohort_dir) if cfg.cohort_dir else None, cfg.seed)

    with ledger_mod.Appender(ledger_path, led) as app:
        if cfg.jobs == 1:
            _init_worker(*init_args)
            submit = _Inline()
        else:
            submit = ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=init_args)
        with submit as ex:
            checkpoints = {}
            futs = [((s, r), ex.submit(_call, _pretrain_job, s, r, cfg.train, fs, dts, ckpt_dir))
                    for s, r, fs, dts in pre_jobs]
            for key, f in futs:
                if budget[0] <= 0:
                    break
                blob, recs = f.result()
                checkpoints[key] = blob
                app.append(r for r in recs if r.key not in done)
                budget[0] -= 1
            futs = []
            for s, t, r in ft_jobs:
                if (s, r) in checkpoints:
                    futs.append(ex.submit(_call, _finetune_job, s, t, r, cfg.train, checkpoints[(s, r)]))
            for f in futs:
                if budget[0] <= 0:
                    break
                app.append(f.result())
                budget[0] -= 1
            if budget[0] <= 0 and hasattr(ex, "shutdown"):
                ex.shutdown(cancel_futures=True)
    final = led.canonical()
    if stop_after is None or budget[0] > 0:
        ledger_mod.write(ledger_path, final)
    return final


class _Inline:
    """Executor stand-in that runs each job on submit, in process."""

    class _Done:
        def __init__(self, value=None, exc=None):
            self._v, self._e = value, exc

        def result(self):
            if self._e is not None:
                raise self._e
            return self._v

    def submit(self, fn, *args):
        try:
            return self._Done(fn(*args))
        except Exception as exc:  # noqa: BLE001 - surfaced by result()
            return self._Done(exc=exc)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def generate_cohorts(manifest: plan.Manifest, out_dir: str | Path) -> list[Path]:
    """Write every concrete channel's cohort under ``out_dir``."""
    out = []
    for slot in manifest.universe:
        spec = manifest.spec(slot.dataset_id)
        for ch in slot.channels:
            d = slot.descriptor(ch)
            c = synthgen.generate(d, spec.gen_params, spec.trim_wake_minutes)
            out.append(synthgen.write_cohort(c, cohort_path(out_dir, d.key)))
    return out


# -- analysis -------------------------------------------------------------


@dataclass(frozen=True)
class Analysis:
    impact: ImpactReport
    w: TransferabilityMatrix
    generalization: dict[str, float]
    alpha: float
    sensitivity: dict | None = None


def check_complete(led: ledger_mod.Ledger, universe, exhaustive=False):
    expected = set(expected_keys(universe, led.repeats, exhaustive))
    have = led.keys()
    missing = sorted(expected - have, key=repr)
    if missing:
        raise MissingRecord(missing)
    extra = sorted(have - expected, key=repr)
    if extra:
        raise LedgerMismatch(f"{len(extra)} record(s) outside the plan, e.g. {extra[0]}")


def analyze(ledger_or_path, alpha: float = DEFAULT_ALPHA, method: str = "approx",
            universe=None, sensitivity: bool = False) -> Analysis:
    """Impact table, W and generalization vector from a complete ledger.

    The channel universe comes from the ledger's meta line unless given.
    """
    led = ledger_or_path if isinstance(ledger_or_path, ledger_mod.Ledger) else ledger_mod.read(ledger_or_path)
    universe = universe if universe is not None else led.universe()
    if universe is None:
        raise LedgerMismatch("ledger has no universe in its meta line; pass a manifest")
    exhaustive = bool(led.meta.get("exhaustive", False))
    check_complete(led, universe, exhaustive)
    pairs = plan.enumerate_pairs(universe, exhaustive)
    index = RecordIndex(led.records, led.repeats)
    impact = impact_report(index, plan.group_pairs(pairs))
    w = build_w(index, pairs, universe, alpha, method)
    sens = alpha_sensitivity(index, pairs, universe, method=method) if sensitivity else None
    return Analysis(impact, w, generalization_vector(w), alpha, sens)


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
