"""Experiment configuration, pipelines and report files."""

from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ingest
from .core import ItemIndex, Recommender, make_rng
from .evaluation import DEFAULT_CUTOFFS, EvalReport, PopularityTable, aggregate_slices, evaluate, wilcoxon_signed_rank
from .factorize import BPRMF, FISM, FOSSIL, FPMC, SMF, FactorModelConfig
from .gru import GRU4Rec, GruConfig
from .neighbors import SFSKNN, SSKNN, VSKNN, ItemKNN, SessionKNN
from .rules import AssociationRules, MarkovChain, SequentialRules

log = logging.getLogger(__name__)

REPORT_METRICS = ("MRR", "HR", "COV", "POP", "P", "R")


class ConfigError(ValueError):
    pass


# -- algorithms -----------------------------------------------------------

ALGORITHMS: dict[str, type[Recommender]] = {
    cls.name: cls
    for cls in (
        AssociationRules, MarkovChain, SequentialRules, BPRMF, ItemKNN, SessionKNN,
        VSKNN, SSKNN, SFSKNN, GRU4Rec, FPMC, FISM, FOSSIL, SMF,
    )
}
SEEDED = {"bprmf", "fpmc", "fism", "fossil", "smf", "gru4rec"}


def make_algorithm(name: str, params: dict | None = None, seed: int = 42) -> Recommender:
    """Instantiate a registered algorithm with parameter overrides."""
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; known: {sorted(ALGORITHMS)}")
    params = dict(params or {})
    cls = ALGORITHMS[name]
    if name in SEEDED:
        params.setdefault("seed", seed)
        allowed = GruConfig.__dataclass_fields__ if name == "gru4rec" else FactorModelConfig.__dataclass_fields__
        unknown = set(params) - set(allowed)
        if unknown:
            raise ConfigError(f"{name}: unknown parameter(s) {sorted(unknown)}")
        return cls(**params)
    return cls(**params)


# -- configuration --------------------------------------------------------


def load_profile(name: str) -> dict:
    """Shipped per-dataset profile (split, sessionization, algorithm defaults)."""
    try:
        text = resources.files("sbrbench").joinpath("profiles", f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown profile {name!r}") from None
    return json.loads(text)


def list_profiles() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("sbrbench").joinpath("profiles").iterdir() if p.name.endswith(".json"))


def bundled_data_path(name: str) -> Path:
    """Filesystem path of a data file shipped inside the package."""
    return Path(str(resources.files("sbrbench").joinpath("data", name)))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class AlgorithmSpec:
    name: str
    params: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if not self.label:
            self.label = self.name


@dataclass
class ExperimentConfig:
    dataset_name: str
    dataset_path: Path | None
    columns: ingest.ColumnSpec | None
    sessionization: str = "key"
    idle_gap: int = 1800
    split: ingest.SplitSpec = field(default_factory=ingest.SplitSpec)
    algorithms: list[AlgorithmSpec] = field(default_factory=list)
    cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS
    seed: int = 42
    output: Path = Path("results")
    min_item_support: int = 1
    threads: int = 1
    sessions: list | None = None  # in-memory dataset, bypasses loading

    def __post_init__(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if list(self.cutoffs) != sorted(self.cutoffs) or not self.cutoffs:
            raise ConfigError("cutoffs must be a non-empty ascending list")
        if self.sessions is None and self.dataset_path is not None and not Path(self.dataset_path).is_file():
            raise FileNotFoundError(f"dataset not found: {self.dataset_path}")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if "profile" in raw:
            raw = _merge(load_profile(raw["profile"]), {k: v for k, v in raw.items() if k != "profile"})
        ds = raw.get("dataset", {})
        path = ds.get("path")
        if path is not None and path.startswith("package:"):
            path = bundled_data_path(path[len("package:") :])
        elif path is not None:
            path = Path(path)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
        cols = ds.get("columns")
        columns = ingest.ColumnSpec(**cols) if cols else None
        sess = raw.get("sessionization", {})
        defaults = raw.get("algorithm_defaults", {})
        algos = []
        for a in raw.get("algorithms", []):
            a = {"name": a} if isinstance(a, str) else dict(a)
            params = _merge(defaults.get(a["name"], {}), a.get("params", {}))
            algos.append(AlgorithmSpec(a["name"], params, a.get("label", "")))
        for a in algos:
            if a.name not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a.name!r}")
        return cls(
            dataset_name=ds.get("name", raw.get("name", "dataset")),
            dataset_path=path,
            columns=columns,
            sessionization=sess.get("mode", "key"),
            idle_gap=int(sess.get("idle_gap", 1800)),
            split=ingest.SplitSpec(**raw.get("split", {})),
            algorithms=algos,
            cutoffs=tuple(raw.get("cutoffs", DEFAULT_CUTOFFS)),
            seed=int(raw.get("seed", 42)),
            output=Path(raw.get("output", "results")),
            min_item_support=int(raw.get("min_item_support", 1)),
            threads=int(raw.get("threads", 1)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config not found: {path}")
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)


# -- data preparation -----------------------------------------------------


@dataclass
class Prepared:
    slices: list[ingest.Slice]
    items: ItemIndex
    n_items: int


def load_sessions(config: ExperimentConfig) -> tuple[list, ItemIndex]:
    if config.sessions is not None:
        sessions = list(config.sessions)
        n = 1 + max(max(s.items) for s in sessions)
        return sessions, ItemIndex(range(n))
    if config.dataset_path is None or config.columns is None:
        raise ConfigError("config names no dataset path/columns")
    records = ingest.load_events(config.dataset_path, config.columns)
    records, items = ingest.intern_items(records)
    sessions = ingest.sessionize(records, config.sessionization, config.idle_gap)
    return sessions, items


def prepare(config: ExperimentConfig, cache_dir: Path | None = None) -> Prepared:
    """Sessionize, filter, split and prune; optionally cache the slices as TSV files."""
    sessions, items = load_sessions(config)
    sessions = ingest.filter_sessions(sessions, 2)
    if config.min_item_support > 1:
        sessions = ingest.filter_sessions(ingest.filter_item_support(sessions, config.min_item_support), 2)
    slices = [ingest.prune_test(s) for s in ingest.split(sessions, config.split, config.seed)]
    for sl in slices:
        sl.check()
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        for sl in slices:
            ingest.write_slice_file(cache_dir / f"slice_{sl.slice_index}_train.tsv", sl.train, items)
            ingest.write_slice_file(cache_dir / f"slice_{sl.slice_index}_test.tsv", sl.test, items)
        meta = {"dataset": config.dataset_name, "n_slices": len(slices), "test_start": [s.test_start for s in slices]}
        (cache_dir / "slices.json").write_text(json.dumps(meta, indent=2) + "\n")
    return Prepared(slices, items, len(items))


def load_prepared(cache_dir) -> Prepared:
    cache_dir = Path(cache_dir)
    meta = json.loads((cache_dir / "slices.json").read_text())
    items = ItemIndex()
    slices = []
    for n in range(meta["n_slices"]):
        train = ingest.read_slice_file(cache_dir / f"slice_{n}_train.tsv", items)
        test = ingest.read_slice_file(cache_dir / f"slice_{n}_test.tsv", items)
        slices.append(ingest.Slice(train, test, n, meta["test_start"][n]))
    return Prepared(slices, items, len(items))


# -- running --------------------------------------------------------------


def run_algorithm(spec: AlgorithmSpec, slices: Sequence[ingest.Slice], n_items: int, cutoffs, seed: int) -> EvalReport:
    reports = []
    for sl in slices:
        model = make_algorithm(spec.name, spec.params, seed)
        t0 = time.perf_counter()
        model.fit(sl.train, n_items)
        fit_seconds = time.perf_counter() - t0
        pop = PopularityTable(model.popularity)
        rep = evaluate(model, sl.test, cutoffs, pop)
        rep.fit_seconds = fit_seconds
        rep.memory_bytes = model.nbytes()
        reports.append(rep)
    return aggregate_slices(reports)


def run_slices(config: ExperimentConfig, slices, n_items: int) -> tuple[dict[str, EvalReport], dict[str, str]]:
    """Fit and evaluate every algorithm; failures are logged and isolated."""

    def job(spec):
        try:
            return spec.label, run_algorithm(spec, slices, n_items, config.cutoffs, config.seed), None
        except Exception as exc:  # noqa: BLE001 - isolate per algorithm
            log.error("%s failed: %s", spec.label, exc)
            return spec.label, None, f"{type(exc).__name__}: {exc}"

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            outcomes = list(pool.map(job, config.algorithms))
    else:
        outcomes = [job(a) for a in config.algorithms]
    results = {label: rep for label, rep, err in outcomes if rep is not None}
    failures = {label: err for label, rep, err in outcomes if err is not None}
    return results, failures


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_results(results: dict[str, EvalReport], out: Path, dataset: str, cutoffs) -> list[Path]:
    """One ``results_<dataset>_<k>.csv`` per cutoff, semicolon separated."""
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in cutoffs:
        path = out / f"results_{dataset}_{k}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, delimiter=";", lineterminator="\n")
            w.writerow(["Algorithm"] + [f"{m}@{k}" for m in REPORT_METRICS])
            for label, rep in results.items():
                w.writerow([label] + [_fmt(rep.metrics[f"{m}@{k}"]) for m in REPORT_METRICS])
        paths.append(path)
    return paths


def write_timing(results: dict[str, EvalReport], out: Path, dataset: str) -> Path:
    path = out / f"timing_{dataset}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=";", lineterminator="\n")
        keys = list(EvalReport().timing())
        w.writerow(["Algorithm"] + keys)
        for label, rep in results.items():
            t = rep.timing()
            w.writerow([label] + [f"{t[k]:.4f}" for k in keys])
    return path


def write_significance(results: dict[str, EvalReport], out: Path, dataset: str, alpha: float = 0.05) -> Path:
    """Each algorithm against the best one by MRR at the largest cutoff, paired per test session."""
    path = out / f"significance_{dataset}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=";", lineterminator="\n")
        w.writerow(["Algorithm", "Baseline", "statistic", "p_value", "significant"])
        if results:
            key = max(k for k in next(iter(results.values())).metrics if k.startswith("MRR@"))
            best = max(results, key=lambda a: results[a].metrics[key])
            for label, rep in results.items():
                if label == best:
                    continue
                try:
                    stat, p, sig = wilcoxon_signed_rank(rep.session_mrr, results[best].session_mrr, alpha)
                    w.writerow([label, best, f"{stat:.1f}", f"{p:.6g}", int(sig)])
                except ValueError:
                    w.writerow([label, best, "", "", ""])
    return path


def run_experiment(config: ExperimentConfig, prepared: Prepared | None = None) -> dict[str, EvalReport]:
    """Full pipeline: prepare, run every algorithm on every slice, write reports."""
    prepared = prepared or prepare(config)
    results, failures = run_slices(config, prepared.slices, prepared.n_items)
    out = Path(config.output)
    write_results(results, out, config.dataset_name, config.cutoffs)
    write_timing(results, out, config.dataset_name)
    write_significance(results, out, config.dataset_name)
    if failures:
        (out / f"failures_{config.dataset_name}.json").write_text(json.dumps(failures, indent=2) + "\n")
    return results


# -- tuning ---------------------------------------------------------------


@dataclass
class TuneSpec:
    """Random search space.

    ``space`` maps a parameter to either a list of choices or a dict with
    ``low``/``high`` and optional ``log`` and ``int`` flags.
    """

    algorithm: str
    space: dict[str, Any]
    iterations: int = 100
    objective: str = "HR@20"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "TuneSpec":
        return cls(raw["algorithm"], raw["space"], int(raw.get("iterations", 100)), raw.get("objective", "HR@20"))


def draw_parameters(spec: TuneSpec, rng) -> list[dict]:
    """Parameter sets to try.

    Finite grids are sampled without replacement (all of them when the
    budget allows); spaces with continuous ranges are sampled independently.
    """
    names = list(spec.space)
    if all(isinstance(spec.space[n], list) for n in names):
        grid = list(itertools.product(*(spec.space[n] for n in names)))
        order = rng.permutation(len(grid))[: min(spec.iterations, len(grid))]
        return [dict(zip(names, grid[i])) for i in order]
    draws = []
    for _ in range(spec.iterations):
        params = {}
        for n in names:
            dom = spec.space[n]
            if isinstance(dom, list):
                params[n] = dom[int(rng.integers(0, len(dom)))]
            else:
                lo, hi = float(dom["low"]), float(dom["high"])
                v = math.exp(rng.uniform(math.log(lo), math.log(hi))) if dom.get("log") else rng.uniform(lo, hi)
                params[n] = int(round(v)) if dom.get("int") else float(v)
        draws.append(params)
    return draws


def _json_safe(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def tune(config: ExperimentConfig, spec: TuneSpec, prepared: Prepared | None = None) -> tuple[dict, list[dict]]:
    """Random search on a validation split of the first training window.

    Returns the best parameter set (first draw wins ties) and the trial log,
    which is also written as line-delimited JSON.
    """
    prepared = prepared or prepare(config)
    val = ingest.make_validation_split(prepared.slices[0].train, config.split, config.seed)
    base = next((a.params for a in config.algorithms if a.name == spec.algorithm), {})
    rng = make_rng(config.seed, "tune", spec.algorithm)
    trials, best, best_value = [], None, -math.inf
    for n, draw in enumerate(draw_parameters(spec, rng)):
        params = {**base, **{k: _json_safe(v) for k, v in draw.items()}}
        entry = {"trial": n, "params": params}
        try:
            rep = run_algorithm(AlgorithmSpec(spec.algorithm, params), [val], prepared.n_items, config.cutoffs, config.seed)
            value = rep.metrics[spec.objective]
            entry["objective"] = value
            if value > best_value:
                best, best_value = params, value
        except Exception as exc:  # noqa: BLE001 - a failing draw is just a bad trial
            entry["error"] = f"{type(exc).__name__}: {exc}"
        trials.append(entry)
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    with (out / f"trials_{config.dataset_name}_{spec.algorithm}.jsonl").open("w") as fh:
        for t in trials:
            fh.write(json.dumps(t, sort_keys=True) + "\n")
    if best is None:
        raise RuntimeError(f"tuning {spec.algorithm}: no successful trial")
    return best, trials


# -- cold start -----------------------------------------------------------


def coldstart_sweep(config: ExperimentConfig, keep_days: Sequence[float | None], prepared: Prepared | None = None) -> Path:
    """Rerun with training windows truncated to the last ``keep_days`` days.

    ``None`` keeps the full window. Writes a long-format CSV
    (algorithm, keep_days, metric, value).
    """
    prepared = prepared or prepare(config)
    rows = []
    for days in keep_days:
        slices = []
        for sl in prepared.slices:
            if days is None:
                slices.append(sl)
                continue
            train = ingest.truncate_train(sl.train, days, sl.test_start)
            slices.append(ingest.prune_test(replace(sl, train=train)))
        results, _ = run_slices(config, slices, prepared.n_items)
        label = "full" if days is None else f"{days:g}"
        for algo, rep in results.items():
            for metric, value in rep.metrics.items():
                rows.append((algo, label, metric, _fmt(value)))
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"coldstart_{config.dataset_name}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=";", lineterminator="\n")
        w.writerow(["algorithm", "keep_days", "metric", "value"])
        w.writerows(rows)
    return path


# -- reports --------------------------------------------------------------


def read_results(paths: Sequence[Path]) -> tuple[list[str], dict[str, dict[str, float]]]:
    table: dict[str, dict[str, float]] = {}
    cutoffs = set()
    for path in paths:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh, delimiter=";"))
        if not rows or rows[0][0] != "Algorithm":
            raise ValueError(f"{path}: not a results file")
        header = rows[0]
        for col in header[1:]:
            cutoffs.add(int(col.split("@")[1]))
        for row in rows[1:]:
            if len(row) != len(header):
                raise ValueError(f"{path}: malformed row {row}")
            table.setdefault(row[0], {}).update({h: float(v) for h, v in zip(header[1:], row[1:])})
    return sorted(cutoffs, reverse=True), table


def report(paths: Sequence[Path]) -> tuple[str, str]:
    """Merge per-cutoff result files into one table sorted by MRR at the largest cutoff.

    Returns (semicolon CSV, aligned text).
    """
    cutoffs, table = read_results(paths)
    if not cutoffs:
        raise ValueError("no result files given")
    columns = [f"{m}@{k}" for k in cutoffs for m in REPORT_METRICS]
    key = f"MRR@{cutoffs[0]}"
    order = sorted(table, key=lambda a: (-table[a].get(key, -math.inf), a))
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=";", lineterminator="\n")
    w.writerow(["Algorithm"] + columns)
    rows = [[a] + [_fmt(table[a][c]) if c in table[a] else "" for c in columns] for a in order]
    w.writerows(rows)
    header = ["Algorithm"] + columns
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(widths[i]) if i == 0 else str(c).rjust(widths[i]) for i, c in enumerate(r)) for r in [header] + rows]
    return buf.getvalue(), "\n".join(lines) + "\n"
