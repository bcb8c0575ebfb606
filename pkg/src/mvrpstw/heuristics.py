"""Classical baselines: giant-tour genetic algorithm and iterated local search."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

from .packing import CompletionGuard, ffd_assign
from .problem import CAPACITY_EPS, Instance, Solution, evaluate_solution

IMPROVE_EPS = 1e-9


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    max_iters: int = 300
    crossover_rate: float = 0.8
    mutation_rate: float = 0.05
    stall_limit: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.max_iters < 1 or self.stall_limit < 1:
            raise ValueError("population >= 2, max_iters >= 1 and stall_limit >= 1 required")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise ValueError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class IlsConfig:
    max_iters: int = 100
    stall_limit: int = 5
    perturbation_strength: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.perturbation_strength < 1 or self.stall_limit < 1:
            raise ValueError("max_iters, stall_limit and perturbation_strength must be >= 1")


GA1 = GaConfig(population=100, max_iters=300)
GA2 = GaConfig(population=300, max_iters=1000)
ILS1 = IlsConfig(max_iters=100)
ILS2 = IlsConfig(max_iters=500)


class _Costs:
    """Plain-list views of an instance for tight loops."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.d = inst.dist.tolist()
        self.dem = inst.demands.tolist()
        self.win = [None] + [(c.e, c.l, c.alpha, c.beta) for c in inst.customers]
        self.Q = inst.capacity

    def route(self, r) -> float:
        d, win = self.d, self.win
        pos, t, cost = 0, 0.0, 0.0
        for c in r:
            leg = d[pos][c]
            t += leg
            cost += leg
            e, l, a, b = win[c]
            if t < e:
                cost += a * (e - t)
            elif t > l:
                cost += b * (t - l)
            pos = c
        return cost + d[pos][0]

    def load(self, r) -> float:
        return sum(self.dem[c] for c in r)

    def fits(self, load: float) -> bool:
        return load <= self.Q + CAPACITY_EPS


def nearest_neighbor(inst: Instance) -> Solution:
    """Round-robin construction: each vehicle in turn takes its nearest admissible customer."""
    d = inst.dist
    M = inst.fleet_size
    guard = CompletionGuard(inst.demands, inst.capacity, M)
    routes = [[] for _ in range(M)]
    m = 0
    while not guard.done:
        if all(guard.retired):
            raise RuntimeError("nearest-neighbor construction ran out of admissible vehicles")
        if guard.retired[m]:
            m = (m + 1) % M
            continue
        cands = guard.allowed(m)
        if not cands:
            guard.retire(m)
            m = (m + 1) % M
            continue
        pos = routes[m][-1] if routes[m] else 0
        j = min(cands, key=lambda c: (d[pos, c], c))
        guard.commit(m, j)
        routes[m].append(j)
        m = (m + 1) % M
    return evaluate_solution(inst, routes)


# ---------------------------------------------------------------- ILS

def _local_search(cs: _Costs, routes: list[list[int]], costs: list[float]) -> None:
    """Best-improvement descent over 2-opt, relocate and swap; edits in place."""
    M = len(routes)
    while True:
        best_delta, best_move = -IMPROVE_EPS, None
        # intra-route 2-opt
        for p, r in enumerate(routes):
            for i in range(len(r) - 1):
                for j in range(i + 1, len(r)):
                    cand = r[:i] + r[i:j + 1][::-1] + r[j + 1:]
                    delta = cs.route(cand) - costs[p]
                    if delta < best_delta:
                        best_delta, best_move = delta, ((p, cand),)
        loads = [cs.load(r) for r in routes]
        for p in range(M):
            rp = routes[p]
            for i, c in enumerate(rp):
                without = rp[:i] + rp[i + 1:]
                c_without = cs.route(without)
                for q in range(M):
                    if q == p:
                        continue
                    rq = routes[q]
                    # inter-route relocate
                    if cs.fits(loads[q] + cs.dem[c]):
                        for k in range(len(rq) + 1):
                            cand = rq[:k] + [c] + rq[k:]
                            delta = c_without + cs.route(cand) - costs[p] - costs[q]
                            if delta < best_delta:
                                best_delta, best_move = delta, ((p, without), (q, cand))
                    # inter-route swap (each unordered pair once)
                    if q > p:
                        for k, o in enumerate(rq):
                            if not (cs.fits(loads[p] - cs.dem[c] + cs.dem[o])
                                    and cs.fits(loads[q] - cs.dem[o] + cs.dem[c])):
                                continue
                            np_ = rp[:i] + [o] + rp[i + 1:]
                            nq = rq[:k] + [c] + rq[k + 1:]
                            delta = cs.route(np_) + cs.route(nq) - costs[p] - costs[q]
                            if delta < best_delta:
                                best_delta, best_move = delta, ((p, np_), (q, nq))
        if best_move is None:
            return
        for p, r in best_move:
            routes[p] = r
            costs[p] = cs.route(r)


def _perturb(cs: _Costs, routes: list[list[int]], strength: int, rng: random.Random) -> list[list[int]]:
    """Apply ``strength`` random capacity-feasible inter-route relocates."""
    routes = [list(r) for r in routes]
    M = len(routes)
    if M < 2:
        return routes
    for _ in range(strength):
        loads = [cs.load(r) for r in routes]
        moves = [(p, i, q) for p, r in enumerate(routes) for i, c in enumerate(r)
                 for q in range(M) if q != p and cs.fits(loads[q] + cs.dem[c])]
        if not moves:
            break
        p, i, q = moves[rng.randrange(len(moves))]
        c = routes[p].pop(i)
        routes[q].insert(rng.randrange(len(routes[q]) + 1), c)
    return routes


def solve_ils(inst: Instance, cfg: IlsConfig = ILS1, trace: Optional[list] = None) -> Solution:
    rng = random.Random(cfg.seed)
    cs = _Costs(inst)
    routes = [list(r) for r in nearest_neighbor(inst).routes]
    costs = [cs.route(r) for r in routes]
    _local_search(cs, routes, costs)
    best, best_cost = routes, sum(costs)
    if trace is not None:
        trace.append(best_cost)
    stall = 0
    for _ in range(cfg.max_iters):
        cand = _perturb(cs, best, cfg.perturbation_strength, rng)
        ccosts = [cs.route(r) for r in cand]
        _local_search(cs, cand, ccosts)
        c = sum(ccosts)
        if c < best_cost - IMPROVE_EPS:
            best, best_cost, stall = cand, c, 0
        else:
            stall += 1
        if trace is not None:
            trace.append(best_cost)
        if stall >= cfg.stall_limit:
            break
    return evaluate_solution(inst, best)


# ---------------------------------------------------------------- GA

def split_tour(cs: _Costs, tour: list[int], max_routes: int) -> Optional[tuple[float, list[list[int]]]]:
    """Optimal split of a giant tour into at most ``max_routes`` consecutive capacity-feasible routes."""
    n = len(tour)
    inf = math.inf
    # seg[i][j]: cost of serving tour[i:j] as one route (inf if overloaded)
    seg = [[inf] * (n + 1) for _ in range(n + 1)]
    d, win = cs.d, cs.win
    for i in range(n):
        load, t, cost, pos = 0.0, 0.0, 0.0, 0
        for j in range(i + 1, n + 1):
            c = tour[j - 1]
            load += cs.dem[c]
            if not cs.fits(load):
                break
            # extend the open route by c, same arithmetic order as _Costs.route
            leg = d[pos][c]
            t += leg
            cost += leg
            e, l, a, b = win[c]
            if t < e:
                cost += a * (e - t)
            elif t > l:
                cost += b * (t - l)
            pos = c
            seg[i][j] = cost + d[c][0]
    # dp[k][j]: best cost of first j customers using exactly k non-empty routes
    dp = [[inf] * (n + 1) for _ in range(max_routes + 1)]
    back = [[-1] * (n + 1) for _ in range(max_routes + 1)]
    dp[0][0] = 0.0
    for k in range(1, max_routes + 1):
        for j in range(1, n + 1):
            best, arg = inf, -1
            for i in range(j):
                v = dp[k - 1][i] + seg[i][j]
                if v < best:
                    best, arg = v, i
            dp[k][j], back[k][j] = best, arg
    if n == 0:
        return 0.0, []
    k = min(range(1, max_routes + 1), key=lambda kk: (dp[kk][n], kk))
    if dp[k][n] == inf:
        return None
    routes, j = [], n
    for kk in range(k, 0, -1):
        i = back[kk][j]
        routes.append(tour[i:j])
        j = i
    return dp[k][n], routes[::-1]


def _regroup(cs: _Costs, tour: list[int], fleet: int) -> Optional[list[int]]:
    """Reorder a tour so that the customers of one feasible packing are contiguous."""
    assign = ffd_assign([(c, cs.dem[c]) for c in tour], {k: cs.Q for k in range(fleet)})
    if assign is None:
        return None
    order = []
    for c in tour:
        if assign[c] not in order:
            order.append(assign[c])
    return [c for k in order for c in tour if assign[c] == k]


def _order_crossover(p1: list[int], p2: list[int], rng: random.Random) -> list[int]:
    n = len(p1)
    a, b = sorted(rng.sample(range(n), 2)) if n > 1 else (0, 0)
    child = [None] * n
    child[a:b + 1] = p1[a:b + 1]
    taken = set(p1[a:b + 1])
    fill = [g for g in p2[b + 1:] + p2[:b + 1] if g not in taken]
    pos = [(b + 1 + k) % n for k in range(n - (b - a + 1))]
    for i, g in zip(pos, fill):
        child[i] = g
    return child


def solve_ga(inst: Instance, cfg: GaConfig = GA1, trace: Optional[list] = None) -> Solution:
    rng = random.Random(cfg.seed)
    cs = _Costs(inst)
    M = inst.fleet_size
    ids = list(range(1, inst.n + 1))
    cache: dict[tuple, tuple] = {}

    def decode(tour):
        # -> (cost, routes, tour) or None; repaired chromosomes replace the input tour
        key = tuple(tour)
        if key not in cache:
            res = split_tour(cs, tour, M)
            if res is not None:
                cache[key] = (res[0], res[1], list(tour))
            else:
                fixed = _regroup(cs, tour, M)
                res = split_tour(cs, fixed, M) if fixed is not None else None
                cache[key] = None if res is None else (res[0], res[1], fixed)
        return cache[key]

    def feasible(tour, tries=1000):
        for _ in range(tries):
            ind = decode(tour)
            if ind is not None:
                return ind
            tour = ids[:]
            rng.shuffle(tour)
        raise RuntimeError("could not find a capacity-feasible chromosome")

    pop = []
    for _ in range(cfg.population):
        t = ids[:]
        rng.shuffle(t)
        pop.append(feasible(t))
    # individual = (cost, routes, tour)
    best = min(pop, key=lambda ind: ind[0])
    if trace is not None:
        trace.append(best[0])

    def tournament():
        a, b = rng.randrange(len(pop)), rng.randrange(len(pop))
        return pop[a] if pop[a][0] <= pop[b][0] else pop[b]

    stall = 0
    for _ in range(cfg.max_iters):
        nxt = [best]
        while len(nxt) < cfg.population:
            p1, p2 = tournament(), tournament()
            if rng.random() < cfg.crossover_rate:
                child = _order_crossover(p1[2], p2[2], rng)
            else:
                child = list(p1[2])
            for i in range(len(child)):
                if rng.random() < cfg.mutation_rate:
                    j = rng.randrange(len(child))
                    child[i], child[j] = child[j], child[i]
            nxt.append(feasible(child))
        pop = nxt
        gen_best = min(pop, key=lambda ind: ind[0])
        if gen_best[0] < best[0] - IMPROVE_EPS:
            best, stall = gen_best, 0
        else:
            stall += 1
        if trace is not None:
            trace.append(best[0])
        if stall >= cfg.stall_limit:
            break
    return evaluate_solution(inst, best[1])
