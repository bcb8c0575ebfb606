"""MVRPSTW environment: instances, route validation, cost and reward."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np

# Absolute slack used when comparing accumulated loads against capacity.
CAPACITY_EPS = 1e-9


class ValidationError(ValueError):
    """Raised when a route set does not describe a valid solution."""

    def __init__(self, message: str, offenders: Sequence[int] = ()):
        super().__init__(message)
        self.offenders = list(offenders)


class CapacityError(ValidationError):
    def __init__(self, route_index: int, prefix: Sequence[int], load: float, capacity: float):
        super().__init__(
            f"route {route_index} overloaded after prefix {list(prefix)}: "
            f"load {load:.6g} > capacity {capacity:.6g}",
            offenders=list(prefix),
        )
        self.route_index = route_index
        self.prefix = list(prefix)


@dataclass(frozen=True)
class Customer:
    id: int
    x: float
    y: float
    demand: float
    e: float
    l: float
    alpha: float
    beta: float

    def __post_init__(self):
        vals = (self.x, self.y, self.demand, self.e, self.l, self.alpha, self.beta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"customer {self.id}: non-finite field")
        if self.e > self.l:
            raise ValueError(f"customer {self.id}: window_open {self.e} > window_close {self.l}")
        if self.demand < 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError(f"customer {self.id}: demand and penalty coefficients must be >= 0")

    @property
    def coord(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Instance:
    depot: tuple[float, float]
    customers: tuple[Customer, ...]
    fleet_size: int
    capacity: float

    def __post_init__(self):
        object.__setattr__(self, "depot", (float(self.depot[0]), float(self.depot[1])))
        object.__setattr__(self, "customers", tuple(self.customers))
        if not all(math.isfinite(v) for v in self.depot):
            raise ValueError("depot coordinate must be finite")
        if self.fleet_size < 1:
            raise ValueError("fleet_size must be positive")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        ids = [c.id for c in self.customers]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"customer ids must be 1..N in order, got {ids}")
        total = sum(c.demand for c in self.customers)
        if total > self.fleet_size * self.capacity + CAPACITY_EPS:
            raise ValueError(
                f"total demand {total:.6g} exceeds fleet capacity {self.fleet_size * self.capacity:.6g}"
            )

    @property
    def n(self) -> int:
        return len(self.customers)

    @cached_property
    def coords(self) -> np.ndarray:
        """(N+1, 2) coordinates, row 0 is the depot."""
        pts = [self.depot] + [c.coord for c in self.customers]
        return np.array(pts, dtype=np.float64)

    @cached_property
    def demands(self) -> np.ndarray:
        """(N+1,) demands, index 0 is the depot (zero)."""
        return np.array([0.0] + [c.demand for c in self.customers])

    @cached_property
    def windows(self) -> np.ndarray:
        """(N+1, 4) rows of (e, l, alpha, beta); the depot row is unconstrained."""
        rows = [(0.0, math.inf, 0.0, 0.0)] + [(c.e, c.l, c.alpha, c.beta) for c in self.customers]
        return np.array(rows, dtype=np.float64)

    @cached_property
    def dist(self) -> np.ndarray:
        """Full (N+1, N+1) Euclidean distance matrix."""
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def features(self, horizon: float) -> np.ndarray:
        """Raw node features [x, y, demand, e, l]; the depot uses demand 0, e=0, l=horizon."""
        out = np.empty((self.n + 1, 5))
        out[:, :2] = self.coords
        out[:, 2] = self.demands
        out[0, 3:] = (0.0, horizon)
        out[1:, 3] = [c.e for c in self.customers]
        out[1:, 4] = [c.l for c in self.customers]
        return out


@dataclass(frozen=True)
class CostBreakdown:
    travel: float
    penalty: float

    @property
    def total(self) -> float:
        return self.travel + self.penalty


@dataclass(frozen=True)
class Solution:
    routes: tuple[tuple[int, ...], ...]
    arrival_times: dict
    cost: CostBreakdown

    def to_record(self) -> dict:
        return {
            "routes": [list(r) for r in self.routes],
            "travel": self.cost.travel,
            "penalty": self.cost.penalty,
            "total": self.cost.total,
        }


def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    if not all(math.isfinite(v) for v in (*a, *b)):
        raise ValueError(f"non-finite coordinate in {a!r} or {b!r}")
    return math.hypot(a[0] - b[0], a[1] - b[1])


def window_penalty(arrival: float, cust: Customer) -> float:
    """Piecewise-linear soft window penalty: alpha per unit early, beta per unit late."""
    if arrival < cust.e:
        return cust.alpha * (cust.e - arrival)
    if arrival > cust.l:
        return cust.beta * (arrival - cust.l)
    return 0.0


def validate_routes(inst: Instance, routes: Sequence[Sequence[int]]) -> tuple[tuple[int, ...], ...]:
    """Check that routes cover every customer exactly once within capacity.

    Fewer than ``fleet_size`` routes is accepted (the rest are empty); the
    normalized result always has exactly ``fleet_size`` entries.
    """
    routes = [tuple(int(c) for c in r) for r in routes]
    if len(routes) > inst.fleet_size:
        raise ValidationError(f"{len(routes)} routes given for a fleet of {inst.fleet_size}")
    routes += [()] * (inst.fleet_size - len(routes))

    seen: dict[int, int] = {}
    bad = []
    for r in routes:
        for c in r:
            if not 1 <= c <= inst.n:
                bad.append(c)
            seen[c] = seen.get(c, 0) + 1
    if bad:
        raise ValidationError(f"unknown customer ids {sorted(set(bad))}", sorted(set(bad)))
    dup = sorted(c for c, k in seen.items() if k > 1)
    missing = [c for c in range(1, inst.n + 1) if c not in seen]
    if dup or missing:
        raise ValidationError(
            f"duplicate customers {dup}, missing customers {missing}", dup + missing
        )

    for m, r in enumerate(routes):
        load = 0.0
        for k, c in enumerate(r):
            load += inst.customers[c - 1].demand
            if load > inst.capacity + CAPACITY_EPS:
                raise CapacityError(m, r[: k + 1], load, inst.capacity)
    return tuple(routes)


def evaluate_solution(inst: Instance, routes: Sequence[Sequence[int]]) -> Solution:
    """Validate ``routes`` and compute arrival times and the cost breakdown.

    Vehicles leave the depot at time 0, travel at unit speed, never wait and
    have zero service time. Return legs count as travel but carry no penalty.
    """
    routes = validate_routes(inst, routes)
    arrivals = {}
    travel = 0.0
    penalty = 0.0
    for r in routes:
        pos = inst.depot
        clock = 0.0
        for c in r:
            cust = inst.customers[c - 1]
            leg = euclidean_distance(pos, cust.coord)
            clock += leg
            travel += leg
            arrivals[c] = clock
            penalty += window_penalty(clock, cust)
            pos = cust.coord
        if r:
            travel += euclidean_distance(pos, inst.depot)
    return Solution(routes, arrivals, CostBreakdown(travel, penalty))


def reward(sol: Solution) -> float:
    return -sol.cost.total


def pad_virtual_customers(inst: Instance, target_n: int) -> Instance:
    """Append zero-demand clones of customer 1 until the instance has ``target_n`` customers."""
    if target_n < inst.n:
        raise ValueError(f"target_n {target_n} is below the customer count {inst.n}")
    if inst.n < 1:
        raise ValueError("cannot pad an instance without customers")
    src = inst.customers[0]
    extra = [replace(src, id=i, demand=0.0) for i in range(inst.n + 1, target_n + 1)]
    return replace(inst, customers=inst.customers + tuple(extra))


def strip_virtual_customers(routes: Sequence[Sequence[int]], n_real: int) -> list[list[int]]:
    """Drop padded customer ids (> n_real) from a route set."""
    return [[c for c in r if c <= n_real] for r in routes]


def scale_capacity(inst: Instance, factor: float) -> Instance:
    """Multiply the capacity and every demand by ``factor``."""
    if not factor > 0:
        raise ValueError(f"capacity factor must be positive, got {factor}")
    custs = tuple(replace(c, demand=c.demand * factor) for c in inst.customers)
    return replace(inst, customers=custs, capacity=inst.capacity * factor)
