"""Seeded instance generation for the experiment distributions, plus JSON-lines IO.

Random numbers come from numpy's PCG64 bit generator, so a (config, count)
pair reproduces the same instances on every platform. Each instance draws,
in order: depot (x, y); customer coordinates; demands; windows; alpha; beta.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from .problem import CAPACITY_EPS, Customer, Instance, Solution

MAX_RESAMPLES = 10**6


class GenerationError(RuntimeError):
    pass


class InstanceFormatError(ValueError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.lineno = lineno


@dataclass(frozen=True)
class GenConfig:
    n_customers: int
    fleet_size: int
    capacity: float
    window_horizon: float
    demand_max: float
    alpha_range: tuple[float, float] = (0.0, 0.2)
    beta_range: tuple[float, float] = (0.0, 1.0)
    window_length: Optional[float] = None
    coord_box: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_customers < 1 or self.fleet_size < 1:
            raise ValueError("n_customers and fleet_size must be >= 1")
        if not (self.capacity > 0 and self.demand_max > 0 and self.window_horizon >= 0):
            raise ValueError("capacity and demand_max must be positive, horizon non-negative")
        if self.window_length is not None and not 0 <= self.window_length <= self.window_horizon:
            raise ValueError("window_length must lie in [0, window_horizon]")
        for lo, hi in (self.alpha_range, self.beta_range):
            if not 0 <= lo <= hi:
                raise ValueError("penalty ranges must satisfy 0 <= lo <= hi")

    @property
    def name(self) -> str:
        return f"{self.n_customers}C-{self.fleet_size}V"


def _preset_table() -> dict[str, GenConfig]:
    table = {}

    def add(n, m, q, horizon, dmax, **kw):
        table[f"{n}C-{m}V"] = GenConfig(n, m, float(q), float(horizon), float(dmax), **kw)

    add(20, 2, 60, 10, 10)
    add(20, 3, 60, 10, 15)
    for m, dmax in zip((2, 3, 4, 5), (10, 15, 20, 25)):
        add(50, m, 150, 20, dmax)
        add(100, m, 300, 40, dmax)
    add(150, 5, 180, 60, 10, window_length=20.0, alpha_range=(0.1, 0.1), beta_range=(0.5, 0.5))
    # Desk-scale sizes sharing the 20-customer feature distributions.
    add(6, 2, 60, 10, 10)
    add(10, 2, 30, 10, 10)
    return table


PRESETS = _preset_table()


def preset(name: str, **overrides) -> GenConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def packable(demands: Iterable[float], fleet_size: int, capacity: float) -> bool:
    """First-fit-decreasing check that the demands fit into the fleet."""
    bins = [0.0] * fleet_size
    for d in sorted(demands, reverse=True):
        for k in range(fleet_size):
            if bins[k] + d <= capacity + CAPACITY_EPS:
                bins[k] += d
                break
        else:
            return False
    return True


def _uniform(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    if lo == hi:
        return np.full(size, lo)
    return rng.uniform(lo, hi, size)


def _sample_one(cfg: GenConfig, rng: np.random.Generator) -> Instance:
    n, box = cfg.n_customers, cfg.coord_box
    for _ in range(MAX_RESAMPLES):
        depot = rng.uniform(0.0, box, 2)
        xy = rng.uniform(0.0, box, (n, 2))
        # (0, demand_max]: zero demand is reserved for virtual customers
        demand = cfg.demand_max * (1.0 - rng.random(n))
        if cfg.window_length is None:
            w = np.sort(rng.uniform(0.0, cfg.window_horizon, (n, 2)), axis=1)
            e, l = w[:, 0], w[:, 1]
        else:
            e = rng.uniform(0.0, cfg.window_horizon - cfg.window_length, n)
            l = e + cfg.window_length
        alpha = _uniform(rng, *cfg.alpha_range, n)
        beta = _uniform(rng, *cfg.beta_range, n)
        if demand.sum() > cfg.fleet_size * cfg.capacity:
            continue
        if not packable(demand, cfg.fleet_size, cfg.capacity):
            continue
        customers = tuple(
            Customer(i + 1, float(xy[i, 0]), float(xy[i, 1]), float(demand[i]),
                     float(e[i]), float(l[i]), float(alpha[i]), float(beta[i]))
            for i in range(n)
        )
        return Instance((float(depot[0]), float(depot[1])), customers, cfg.fleet_size, cfg.capacity)
    raise GenerationError(f"no feasible instance for {cfg.name} after {MAX_RESAMPLES} resamples")


def generate(cfg: GenConfig, count: int, seed: Optional[int] = None) -> list[Instance]:
    """Draw ``count`` feasible instances; ``seed`` overrides ``cfg.seed``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.Generator(np.random.PCG64(cfg.seed if seed is None else seed))
    return [_sample_one(cfg, rng) for _ in range(count)]


# ---------------------------------------------------------------- file IO

_INSTANCE_KEYS = {"depot", "capacity", "fleet_size", "customers"}
_CUSTOMER_KEYS = {"id", "x", "y", "demand", "e", "l", "alpha", "beta"}
_SOLUTION_KEYS = {"routes", "travel", "penalty", "total"}


def instance_to_record(inst: Instance) -> dict:
    return {
        "depot": list(inst.depot),
        "capacity": inst.capacity,
        "fleet_size": inst.fleet_size,
        "customers": [
            {"id": c.id, "x": c.x, "y": c.y, "demand": c.demand,
             "e": c.e, "l": c.l, "alpha": c.alpha, "beta": c.beta}
            for c in inst.customers
        ],
    }


def instance_from_record(rec: dict) -> Instance:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    keys = set(rec)
    if keys != _INSTANCE_KEYS:
        raise ValueError(f"unknown fields {sorted(keys - _INSTANCE_KEYS)}, "
                         f"missing fields {sorted(_INSTANCE_KEYS - keys)}")
    customers = []
    for c in rec["customers"]:
        ck = set(c)
        if ck != _CUSTOMER_KEYS:
            raise ValueError(f"customer fields: unknown {sorted(ck - _CUSTOMER_KEYS)}, "
                             f"missing {sorted(_CUSTOMER_KEYS - ck)}")
        customers.append(Customer(int(c["id"]), float(c["x"]), float(c["y"]), float(c["demand"]),
                                  float(c["e"]), float(c["l"]), float(c["alpha"]), float(c["beta"])))
    depot = rec["depot"]
    if len(depot) != 2:
        raise ValueError("depot must have two coordinates")
    fleet = rec["fleet_size"]
    if isinstance(fleet, bool) or not isinstance(fleet, int):
        raise ValueError("fleet_size must be an integer")
    return Instance((float(depot[0]), float(depot[1])), tuple(customers), fleet, float(rec["capacity"]))


def _dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def write_instances(path, instances: Iterable[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(_dumps(instance_to_record(inst)) + "\n")


def _read_lines(path, parse):
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(parse(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise InstanceFormatError(path, lineno, str(exc)) from exc
    return out


def read_instances(path) -> list[Instance]:
    return _read_lines(path, instance_from_record)


def solution_from_record(rec: dict) -> dict:
    keys = set(rec)
    if keys != _SOLUTION_KEYS:
        raise ValueError(f"solution fields: unknown {sorted(keys - _SOLUTION_KEYS)}, "
                         f"missing {sorted(_SOLUTION_KEYS - keys)}")
    return {"routes": [[int(c) for c in r] for r in rec["routes"]],
            "travel": float(rec["travel"]), "penalty": float(rec["penalty"]),
            "total": float(rec["total"])}


def write_solutions(path, solutions: Iterable[Solution]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sol in solutions:
            fh.write(_dumps(sol.to_record()) + "\n")


def read_solutions(path) -> list[dict]:
    return _read_lines(path, solution_from_record)


def content_hash(instances: Iterable[Instance]) -> str:
    """Short digest identifying an instance set; equal sets give equal hashes."""
    h = hashlib.sha256()
    for inst in instances:
        h.update(_dumps(instance_to_record(inst)).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]
