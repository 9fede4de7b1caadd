"""Grid evaluation: conditions, per-condition normalisation, ranking.

A condition is (network trace, video sequence, sampled user).  Every
algorithm runs on every condition; per condition the scores are normalised as
(S - MAX) / (MAX - MIN) with MIN the designated baseline's score, and each
algorithm's normalised scores are summed over all conditions.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .algorithms import make_algorithm, resolve
from .engine import AlgorithmError, NonTerminating, Session, SessionConfig, run_session
from .retention import sample_watch_duration
from .scoring import QoeCoefficients
from .traces import (PUBLIC_THRESHOLDS, NetworkTrace, TraceError, VideoAsset, bundled_manifest_path,
                     classify, load_manifest, load_network_traces)

log = logging.getLogger(__name__)

DEFAULT_ALGORITHMS = ("no_prefetch", "fixed_prefetch", "threshold")


class EmptyInput(ValueError):
    pass


class MissingBaseline(ValueError):
    pass


class ConfigError(ValueError):
    pass


def mix_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit seed from a master seed and labels (order of the grid is irrelevant)."""
    text = "\x1f".join([str(master_seed), *map(str, parts)])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class Condition:
    trace_id: str
    sequence_id: str
    user_index: int
    seed: int

    @property
    def key(self) -> str:
        return f"{self.trace_id}|{self.sequence_id}|{self.user_index}"


def build_grid(networks: Sequence[str], sequences: Sequence[str], n_user_samples: int,
               master_seed: int) -> list[Condition]:
    if not networks or not sequences:
        raise EmptyInput("need at least one network trace and one video sequence")
    if n_user_samples < 1:
        raise EmptyInput(f"need at least one user sample, got {n_user_samples}")
    return [Condition(t, s, u, mix_seed(master_seed, "condition", t, s, u))
            for t in networks for s in sequences for u in range(n_user_samples)]


def user_watch_durations(sequence: Sequence[VideoAsset], master_seed: int, sequence_id: str,
                         user_index: int) -> tuple[int, ...]:
    """Watch durations of one sampled user; shared by every network trace and algorithm."""
    rng = np.random.default_rng(mix_seed(master_seed, "user", sequence_id, user_index))
    return tuple(sample_watch_duration(v.retention, v.duration_ms, rng) for v in sequence)


@dataclass(frozen=True)
class AlgorithmSpec:
    label: str
    kind: str
    params: tuple[tuple[str, object], ...] = ()

    @classmethod
    def of(cls, label: str, kind: str | None = None, **params) -> "AlgorithmSpec":
        return cls(label, kind or label, tuple(sorted(params.items())))

    def build(self, seed: int):
        params = dict(self.params)
        cls = resolve(self.kind)
        if dataclasses.is_dataclass(cls) and "seed" not in params and any(
                f.name == "seed" for f in dataclasses.fields(cls)):
            params["seed"] = seed
        return make_algorithm(self.kind, params)


@dataclass
class EvalSetup:
    networks: dict[str, NetworkTrace]
    sequences: dict[str, tuple[VideoAsset, ...]]
    algorithms: tuple[AlgorithmSpec, ...]
    master_seed: int = 0
    coefficients: QoeCoefficients = field(default_factory=QoeCoefficients)
    session_config: SessionConfig = field(default_factory=SessionConfig)


@dataclass
class RawScores:
    labels: tuple[str, ...]
    scores: dict[str, dict[str, float | None]]  # condition key -> label -> score
    failures: dict[str, dict[str, str]]

    def column(self, label: str) -> list[float | None]:
        return [self.scores[k][label] for k in sorted(self.scores)]


_SETUP: EvalSetup | None = None


def _init_worker(setup: EvalSetup):
    global _SETUP
    _SETUP = setup


def run_condition(setup: EvalSetup, cond: Condition):
    seq = setup.sequences[cond.sequence_id]
    net = setup.networks[cond.trace_id]
    watch = user_watch_durations(seq, setup.master_seed, cond.sequence_id, cond.user_index)
    scores, failures = {}, {}
    for spec in setup.algorithms:
        session = Session(seq, net, watch, setup.session_config)
        try:
            result = run_session(session, spec.build(cond.seed), setup.coefficients)
            scores[spec.label] = result.score
        except (AlgorithmError, NonTerminating) as e:
            scores[spec.label] = None
            failures[spec.label] = str(e)
    return cond.key, scores, failures


def _run_in_worker(cond: Condition):
    return run_condition(_SETUP, cond)


def evaluate(setup: EvalSetup, conditions: Sequence[Condition], workers: int = 1) -> RawScores:
    if not setup.algorithms:
        raise EmptyInput("no algorithms to evaluate")
    if workers <= 1:
        results = [run_condition(setup, c) for c in conditions]
    else:
        chunk = max(1, len(conditions) // (workers * 4))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(setup,)) as pool:
            results = list(pool.map(_run_in_worker, conditions, chunksize=chunk))
    scores, failures = {}, {}
    for key, s, f in results:
        scores[key] = s
        if f:
            failures[key] = f
    return RawScores(tuple(a.label for a in setup.algorithms), scores, failures)


@dataclass(frozen=True)
class ConditionResult:
    raw: dict[str, float]
    max: float
    min: float
    normalized: dict[str, float]


def normalize_condition(raw: Mapping[str, float | None], baseline: str,
                        mode: str = "paper") -> ConditionResult:
    """Normalise one condition; failed runs (None) take the baseline's score."""
    if raw.get(baseline) is None:
        raise MissingBaseline(f"baseline {baseline!r} has no score for this condition")
    lo = raw[baseline]
    filled = {k: (lo if v is None else v) for k, v in raw.items()}
    hi = max(filled.values())
    if hi == lo:
        norm = {k: 0.0 for k in filled}
    elif mode == "paper":
        norm = {k: (v - hi) / (hi - lo) for k, v in filled.items()}
    elif mode == "minmax":
        norm = {k: (v - lo) / (hi - lo) for k, v in filled.items()}
    else:
        raise ValueError(f"unknown normalisation {mode!r}")
    return ConditionResult(filled, hi, lo, norm)


def normalize(raw: RawScores, baseline: str, mode: str = "paper") -> dict[str, ConditionResult]:
    if baseline not in raw.labels:
        raise MissingBaseline(f"baseline {baseline!r} not among evaluated algorithms {raw.labels}")
    return {k: normalize_condition(raw.scores[k], baseline, mode) for k in sorted(raw.scores)}


@dataclass(frozen=True)
class RankingReport:
    totals: dict[str, float]
    order: tuple[str, ...]
    per_category: dict[str, dict[str, float]]  # label -> category -> sum

    def to_json(self) -> dict:
        return {
            "ranking": [{"rank": i + 1, "algorithm": a, "score": self.totals[a]}
                        for i, a in enumerate(self.order)],
            "per_category": self.per_category,
        }


def rank(results: Mapping[str, ConditionResult], categories: Mapping[str, str] | None = None) -> RankingReport:
    """Sum normalised scores per algorithm; sort descending, ties by name."""
    totals: dict[str, float] = {}
    per_cat: dict[str, dict[str, float]] = {}
    for key in sorted(results):
        cat = categories.get(key) if categories else None
        for label, v in results[key].normalized.items():
            totals[label] = totals.get(label, 0.0) + v
            if cat is not None:
                d = per_cat.setdefault(label, {})
                d[cat] = d.get(cat, 0.0) + v
    order = tuple(sorted(totals, key=lambda a: (-totals[a], a)))
    return RankingReport(totals, order, {a: per_cat.get(a, {}) for a in order})


# ---------------------------------------------------------------- config + outputs


@dataclass
class EvalConfig:
    traces: list[str]
    manifest: str = "bundled"
    sequences: list[str] = field(default_factory=list)
    n_users: int = 50
    seed: int = 0
    thresholds: tuple[float, float] = PUBLIC_THRESHOLDS
    baseline: str = "no_prefetch"
    normalization: str = "paper"
    max_steps: int = SessionConfig.max_steps
    coefficients: QoeCoefficients = field(default_factory=QoeCoefficients)
    algorithms: list[AlgorithmSpec] = field(
        default_factory=lambda: [AlgorithmSpec.of(a) for a in DEFAULT_ALGORITHMS])


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def load_eval_config(path: str | Path) -> EvalConfig:
    """Read an INI evaluation config.

    ``[evaluate]`` holds grid settings, ``[qoe]`` the coefficients, and each
    ``[algorithm LABEL]`` section one contestant (``type`` names the registered
    algorithm, defaulting to LABEL; other keys are its parameters).
    """
    path = Path(path)
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    if not cp.has_section("evaluate"):
        raise ConfigError(f"{path}: missing [evaluate] section")
    ev = cp["evaluate"]
    base = path.parent

    def rel(p: str) -> str:
        return str((base / p).resolve()) if not Path(p).is_absolute() else p

    try:
        traces = [rel(p) for p in ev.get("traces", "").replace(",", " ").split()]
        if not traces:
            raise ConfigError(f"{path}: [evaluate] traces is empty")
        manifest = ev.get("manifest", "bundled").strip()
        cfg = EvalConfig(
            traces=traces,
            manifest=manifest if manifest == "bundled" else rel(manifest),
            sequences=ev.get("sequences", "").replace(",", " ").split(),
            n_users=ev.getint("n_users", 50),
            seed=ev.getint("seed", 0),
            baseline=ev.get("baseline", "no_prefetch").strip(),
            normalization=ev.get("normalization", "paper").strip(),
            max_steps=ev.getint("max_steps", SessionConfig.max_steps),
        )
        if "thresholds" in ev:
            th = _floats(ev["thresholds"])
            if len(th) != 2 or not th[0] < th[1]:
                raise ConfigError(f"{path}: thresholds must be two increasing numbers")
            cfg.thresholds = th
        if cp.has_section("qoe"):
            cfg.coefficients = QoeCoefficients(**{k: float(v) for k, v in cp["qoe"].items()})
    except (ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: {e}") from None
    algos = []
    for sec in cp.sections():
        if sec.startswith("algorithm"):
            label = sec[len("algorithm"):].strip()
            params = dict(cp[sec])
            kind = params.pop("type", label)
            if not label:
                raise ConfigError(f"{path}: algorithm section needs a label")
            try:
                make_algorithm(kind, params)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"{path}: [{sec}]: {e}") from None
            algos.append(AlgorithmSpec(label, kind, tuple(sorted(params.items()))))
    if algos:
        cfg.algorithms = algos
    if cfg.baseline not in {a.label for a in cfg.algorithms}:
        raise ConfigError(f"{path}: baseline {cfg.baseline!r} is not one of the algorithms")
    return cfg


def setup_from_config(cfg: EvalConfig) -> tuple[EvalSetup, list[Condition], dict[str, str]]:
    networks = load_network_traces(cfg.traces)
    if not networks:
        raise TraceError("no network traces found")
    ids = [n.id for n in networks]
    if len(set(ids)) != len(ids):
        raise TraceError(f"duplicate network trace ids: {sorted(i for i in ids if ids.count(i) > 1)}")
    manifest = load_manifest(bundled_manifest_path() if cfg.manifest == "bundled" else cfg.manifest)
    seq_ids = cfg.sequences or sorted(manifest.sequences)
    sequences = {s: manifest.sequence(s) for s in seq_ids}
    setup = EvalSetup({n.id: n for n in networks}, sequences, tuple(cfg.algorithms), cfg.seed,
                      cfg.coefficients, SessionConfig(max_steps=cfg.max_steps))
    conditions = build_grid(ids, seq_ids, cfg.n_users, cfg.seed)
    cats = {n.id: classify(n, cfg.thresholds).value for n in networks}
    categories = {c.key: cats[c.trace_id] for c in conditions}
    return setup, conditions, categories


def _fmt(v) -> str:
    return "error" if v is None else repr(float(v))


def write_outputs(out_dir: str | Path, conditions: Sequence[Condition], raw: RawScores,
                  results: Mapping[str, ConditionResult], report: RankingReport,
                  baseline: str, mode: str):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    conds = sorted(conditions, key=lambda c: c.key)
    labels = list(raw.labels)
    for fname, getter in (("raw_scores.csv", lambda k, a: raw.scores[k][a]),
                          ("normalized.csv", lambda k, a: results[k].normalized[a])):
        with open(out / fname, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["condition", "trace", "sequence", "user", *labels])
            for c in conds:
                w.writerow([c.key, c.trace_id, c.sequence_id, c.user_index,
                            *(_fmt(getter(c.key, a)) for a in labels)])
    with open(out / "per_category.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        cats = ["Low", "Medium", "High"]
        w.writerow(["algorithm", *cats])
        for a in report.order:
            w.writerow([a, *(repr(report.per_category[a].get(c, 0.0)) for c in cats)])
    doc = report.to_json()
    doc.update({
        "baseline": baseline,
        "normalization": mode,
        "conditions": len(conds),
        "failures": {k: raw.failures[k] for k in sorted(raw.failures)},
    })
    (out / "ranking.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_evaluation(cfg: EvalConfig, out_dir: str | Path, workers: int = 1) -> RankingReport:
    t0 = time.perf_counter()
    setup, conditions, categories = setup_from_config(cfg)
    log.info("evaluating %d algorithms on %d conditions with %d workers",
             len(setup.algorithms), len(conditions), workers)
    raw = evaluate(setup, conditions, workers)
    results = normalize(raw, cfg.baseline, cfg.normalization)
    report = rank(results, categories)
    write_outputs(out_dir, conditions, raw, results, report, cfg.baseline, cfg.normalization)
    log.info("evaluation finished in %.1f s", time.perf_counter() - t0)
    return report


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SVSIM_WORKERS", "1")))
    except ValueError:
        return 1
