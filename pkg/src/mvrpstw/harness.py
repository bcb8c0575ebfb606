"""Experiment runners: benchmark tables, sensitivity curves and robustness conditions."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .heuristics import GA1, GA2, ILS1, ILS2, nearest_neighbor, solve_ga, solve_ils
from .instances import GenConfig, content_hash, generate, preset
from .model import MAAM
from .oracle import solve_exact
from .problem import Instance, Solution, evaluate_solution, pad_virtual_customers, scale_capacity, \
    strip_virtual_customers
from .trainer import TrainConfig, train

CLASSIC_METHODS = ("oracle", "nn", "ga1", "ga2", "ils1", "ils2")
METHODS = CLASSIC_METHODS + ("maam",)
TIME_COLUMNS = frozenset({"mean_seconds", "seconds"})
SWEEP_AXES = {"dim": "embed_dim", "layers": "n_layers", "heads": "n_heads"}


class ConfigError(ValueError):
    """Bad experiment setup, detected before any work starts."""


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReportRow:
    method: str
    preset: str
    n_customers: int
    fleet_size: int
    mean_cost: float
    mean_travel: float
    mean_penalty: float
    mean_seconds: float
    n_instances: int
    seed: int
    instances_hash: str


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def add(self, row: ReportRow) -> None:
        if any(r.method == row.method and r.preset == row.preset for r in self.rows):
            raise ValueError(f"duplicate report row {row.method}/{row.preset}")
        self.rows.append(row)

    def row(self, method: str, preset_name: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.preset == preset_name:
                return r
        raise KeyError((method, preset_name))

    def write_csv(self, path) -> None:
        _write_rows(path, [asdict(r) for r in self.rows], [f.name for f in fields(ReportRow)])

    @classmethod
    def read_csv(cls, path) -> "ExperimentReport":
        types = {f.name: f.type for f in fields(ReportRow)}
        conv = {"int": int, "float": float, "str": str}
        rep = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rep.add(ReportRow(**{k: conv[types[k]](v) for k, v in rec.items()}))
        return rep


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _write_rows(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])


def strip_time_columns(text: str) -> str:
    """CSV text with wall-time columns removed, for reproducibility comparisons."""
    lines = list(csv.reader(text.splitlines()))
    if not lines:
        return ""
    keep = [i for i, c in enumerate(lines[0]) if c not in TIME_COLUMNS]
    return "\n".join(",".join(line[i] for i in keep) for line in lines)


# ---------------------------------------------------------------- solving

def solve_classic(method: str, inst: Instance, seed: int = 0) -> Solution:
    if method == "oracle":
        return solve_exact(inst).best
    if method == "nn":
        return nearest_neighbor(inst)
    if method in ("ga1", "ga2"):
        return solve_ga(inst, replace(GA1 if method == "ga1" else GA2, seed=seed))
    if method in ("ils1", "ils2"):
        return solve_ils(inst, replace(ILS1 if method == "ils1" else ILS2, seed=seed))
    raise ConfigError(f"unknown method {method!r}")


def _timed_classic(args):
    method, inst, seed = args
    start = time.perf_counter()
    sol = solve_classic(method, inst, seed)
    return sol, time.perf_counter() - start


def run_classic(method: str, instances: Sequence[Instance], seed: int = 0,
                jobs: int = 1) -> tuple[list, list]:
    """Solve every instance; results keep instance order whatever the job count."""
    tasks = [(method, inst, seed) for inst in instances]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_timed_classic, tasks))
    else:
        out = [_timed_classic(t) for t in tasks]
    return [s for s, _ in out], [t for _, t in out]


def run_maam(model: MAAM, instances: Sequence[Instance], mode: str = "greedy", samples: int = 1,
             seed: int = 0) -> tuple[list, list]:
    if not instances:
        return [], []
    start = time.perf_counter()
    sols = model.solve(instances, mode=mode, samples=samples, seed=seed)
    per = (time.perf_counter() - start) / len(instances)
    return sols, [per] * len(instances)


def summarize(method: str, label: str, instances: Sequence[Instance], sols: Sequence[Solution],
              seconds: Sequence[float], seed: int) -> ReportRow:
    travel = [s.cost.travel for s in sols]
    penalty = [s.cost.penalty for s in sols]
    total = [s.cost.total for s in sols]
    first = instances[0]
    return ReportRow(method, label, first.n, first.fleet_size, float(np.mean(total)), float(np.mean(travel)),
                     float(np.mean(penalty)), float(np.mean(seconds)), len(sols), seed, content_hash(instances))


def resolve_preset(name_or_cfg) -> GenConfig:
    if isinstance(name_or_cfg, GenConfig):
        return name_or_cfg
    try:
        return preset(name_or_cfg)
    except KeyError as exc:
        raise ConfigError(f"unknown preset {name_or_cfg!r}") from exc


def load_model(ckpt, fleet_size: Optional[int] = None) -> MAAM:
    if ckpt is None:
        raise ConfigError("method maam needs a checkpoint (--ckpt)")
    if not Path(ckpt).is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    model = MAAM.load(ckpt)
    if fleet_size is not None and model.cfg.fleet_size != fleet_size:
        raise ConfigError(f"checkpoint is for {model.cfg.fleet_size} vehicles, instances have {fleet_size}")
    return model


def _check_methods(methods: Sequence[str]) -> None:
    if not methods:
        raise ConfigError("no methods given")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")


def run_benchmark(methods: Sequence[str], preset_name, count: int, seed: int = 0, ckpt=None,
                  jobs: int = 1, mode: str = "greedy", samples: int = 1,
                  solutions: Optional[dict] = None) -> ExperimentReport:
    """Run every method on one generated evaluation set.

    ``solutions``, if given, receives the per-method solution lists.
    """
    _check_methods(methods)
    cfg = resolve_preset(preset_name)
    model = load_model(ckpt, cfg.fleet_size) if "maam" in methods else None
    if count < 0:
        raise ConfigError("count must be >= 0")
    report = ExperimentReport()
    if count == 0:
        return report
    instances = generate(cfg, count, seed=seed)
    for method in methods:
        if method == "maam":
            sols, secs = run_maam(model, instances, mode, samples, seed)
        else:
            sols, secs = run_classic(method, instances, seed, jobs)
        report.add(summarize(method, cfg.name, instances, sols, secs, seed))
        if solutions is not None:
            solutions[method] = sols
    return report


def run_robustness(ckpt, base_preset, customer_counts: Sequence[int] = (), capacity_factors: Sequence[float] = (),
                   count: int = 100, seed: int = 0, methods: Sequence[str] = ("nn", "ils1"),
                   jobs: int = 1, solutions: Optional[dict] = None) -> ExperimentReport:
    """Evaluate a trained model on fewer customers (padded) and on rescaled capacities.

    Rows are labelled ``<preset>:n=<count>`` and ``<preset>:cap=<factor>``. For
    padded conditions ``maam`` is the cost on the real instance after removing
    the virtual customers and ``maam_padded`` the cost on the padded instance;
    baselines always solve the real instance.
    """
    base = resolve_preset(base_preset)
    _check_methods(list(methods) + ["maam"])
    model = load_model(ckpt, base.fleet_size)
    trained_n = base.n_customers
    for n in customer_counts:
        if not 1 <= n <= trained_n:
            raise ConfigError(f"customer count {n} outside 1..{trained_n} (the trained size)")
    for f in capacity_factors:
        if not f > 0:
            raise ConfigError(f"capacity factor must be positive, got {f}")
    report = ExperimentReport()
    if count <= 0:
        return report

    def record(label, instances, method, sols, secs):
        report.add(summarize(method, label, instances, sols, secs, seed))
        if solutions is not None:
            solutions[(method, label)] = sols

    for n in customer_counts:
        label = f"{base.name}:n={n}"
        instances = generate(replace(base, n_customers=n), count, seed=seed)
        for method in methods:
            if method != "maam":
                record(label, instances, method, *run_classic(method, instances, seed, jobs))
        padded = [pad_virtual_customers(inst, trained_n) for inst in instances]
        psols, secs = run_maam(model, padded, seed=seed)
        real = [evaluate_solution(inst, strip_virtual_customers(s.routes, n))
                for inst, s in zip(instances, psols)]
        record(label, instances, "maam", real, secs)
        record(label, instances, "maam_padded", psols, secs)
    for f in capacity_factors:
        label = f"{base.name}:cap={f:g}"
        instances = [scale_capacity(inst, f) for inst in generate(base, count, seed=seed)]
        for method in methods:
            if method != "maam":
                record(label, instances, method, *run_classic(method, instances, seed, jobs))
        record(label, instances, "maam", *run_maam(model, instances, seed=seed))
    return report


# ---------------------------------------------------------------- sensitivity

SWEEP_COLUMNS = ["epoch", "value", "eval_cost"]


def run_sensitivity(axis: str, values: Sequence[int], train_cfg: TrainConfig) -> list[dict]:
    """Train one model per value of ``axis``; returns rows (epoch, value, eval_cost), epoch 0 = untrained."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values")
    rows = []
    for v in values:
        try:
            cfg = replace(train_cfg, **{SWEEP_AXES[axis]: int(v)})
            cfg.model_config()
        except ValueError as exc:
            raise ConfigError(f"{axis}={v}: {exc}") from exc
        try:
            _, tlog = train(cfg)
        except Exception as exc:
            raise SweepError(f"training failed for {axis}={v}: {exc}") from exc
        rows.append({"epoch": 0, "value": v, "eval_cost": tlog.initial_eval_cost})
        rows.extend({"epoch": r["epoch"], "value": v, "eval_cost": r["eval_cost_mean"]} for r in tlog.records)
    return rows


def write_sweep_csv(path, rows: Sequence[dict]) -> None:
    _write_rows(path, rows, SWEEP_COLUMNS)

