"""Exhaustive branch-and-bound solver for tiny instances.

Used as ground truth for the heuristics and the learned model. The search
builds routes one after another; a route may only be closed if it contains
the smallest customer still unassigned when it was opened, which removes
vehicle-relabeling symmetry. Pruning uses a travel lower bound that never
cuts an optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .problem import CAPACITY_EPS, Instance, Solution, evaluate_solution

MAX_CUSTOMERS = 9


class OracleSizeError(ValueError):
    pass


class NodeLimitError(RuntimeError):
    """Search budget exhausted; ``incumbent`` holds the best solution found (or None)."""

    def __init__(self, nodes: int, incumbent):
        super().__init__(f"node limit reached after {nodes} nodes")
        self.nodes = nodes
        self.incumbent = incumbent


@dataclass(frozen=True)
class OracleResult:
    best: Solution
    optimal_cost: float
    nodes_explored: int


def independent_cost(inst: Instance, routes: Sequence[Sequence[int]]) -> tuple[float, float]:
    """Recompute (travel, penalty) from raw coordinates, without problem-core helpers."""
    pts = [inst.depot] + [(c.x, c.y) for c in inst.customers]
    travel = 0.0
    penalty = 0.0
    for r in routes:
        if not r:
            continue
        path = [0] + list(r) + [0]
        t = 0.0
        for a, b in zip(path[:-1], path[1:]):
            leg = math.hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1])
            travel += leg
            if b == 0:
                continue
            t += leg
            c = inst.customers[b - 1]
            penalty += max(0.0, c.e - t) * c.alpha + max(0.0, t - c.l) * c.beta
    return travel, penalty


def canonical(routes: Sequence[Sequence[int]], fleet_size: int) -> tuple[tuple[int, ...], ...]:
    """Sorted non-empty routes followed by empty ones; used for tie-breaking."""
    full = sorted(tuple(r) for r in routes if r)
    return tuple(full) + ((),) * (fleet_size - len(full))


def solve_exact(inst: Instance, node_limit: int = 50_000_000) -> OracleResult:
    n, M, Q = inst.n, inst.fleet_size, inst.capacity
    if n > MAX_CUSTOMERS:
        raise OracleSizeError(f"exact search is capped at {MAX_CUSTOMERS} customers, got {n}")
    if node_limit <= 0:
        raise ValueError("node_limit must be positive")

    pts = [inst.depot] + [(c.x, c.y) for c in inst.customers]
    dist = [[math.hypot(a[0] - b[0], a[1] - b[1]) for b in pts] for a in pts]
    dem = [0.0] + [c.demand for c in inst.customers]
    win = [None] + [(c.e, c.l, c.alpha, c.beta) for c in inst.customers]
    # cheapest way to enter each customer, summed over the unassigned ones
    min_in = [0.0] + [min(dist[k][j] for k in range(n + 1) if k != j) for j in range(1, n + 1)]

    best_cost = math.inf
    best_routes = None
    nodes = 0
    done: list[list[int]] = []

    def consider(routes):
        nonlocal best_cost, best_routes
        travel, penalty = independent_cost(inst, routes)
        cost = travel + penalty
        canon = canonical(routes, M)
        if cost < best_cost or (cost == best_cost and canon < best_routes):
            best_cost, best_routes = cost, canon

    def dfs(route, anchor, unassigned, pos, clock, load, cost):
        # route: open route; anchor: smallest customer unassigned when it opened
        nonlocal nodes
        nodes += 1
        if nodes > node_limit:
            raise NodeLimitError(nodes, best_routes)
        rest = sum(min_in[j] for j in unassigned)
        back = dist[pos][0] if route else 0.0
        if cost + max(rest, back) > best_cost:
            return
        if route and (anchor in route or not unassigned):
            # close the current route
            closed = cost + dist[pos][0]
            if not unassigned:
                consider(done + [list(route)])
            elif len(done) + 1 < M:
                done.append(list(route))
                nxt = min(unassigned)
                dfs([], nxt, unassigned, 0, 0.0, 0.0, closed)
                done.pop()
        for j in sorted(unassigned):
            if load + dem[j] > Q + CAPACITY_EPS:
                continue
            t = clock + dist[pos][j]
            e, l, a, b = win[j]
            pen = a * (e - t) if t < e else (b * (t - l) if t > l else 0.0)
            unassigned.remove(j)
            route.append(j)
            dfs(route, anchor, unassigned, j, t, load + dem[j], cost + dist[pos][j] + pen)
            route.pop()
            unassigned.add(j)

    if n == 0:
        consider([])
    else:
        dfs([], 1, set(range(1, n + 1)), 0, 0.0, 0.0, 0.0)
    if best_routes is None:
        raise ValueError("instance has no capacity-feasible solution")
    sol = evaluate_solution(inst, best_routes)
    return OracleResult(sol, best_cost, nodes)
