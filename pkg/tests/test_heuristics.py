import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvrpstw.heuristics import (GA1, GA2, ILS1, ILS2, GaConfig, IlsConfig, _Costs, _local_search,
                                _order_crossover, nearest_neighbor, solve_ga, solve_ils, split_tour)
from mvrpstw.instances import generate, preset
from mvrpstw.oracle import solve_exact
from mvrpstw.problem import validate_routes

from conftest import make_instance


def test_presets():
    assert (GA1.population, GA1.max_iters, GA1.stall_limit) == (100, 300, 5)
    assert (GA2.population, GA2.max_iters) == (300, 1000)
    assert (GA1.crossover_rate, GA1.mutation_rate) == (0.8, 0.05)
    assert (ILS1.max_iters, ILS1.stall_limit, ILS2.max_iters) == (100, 5, 500)


@pytest.mark.parametrize("kw", [dict(population=1), dict(crossover_rate=1.5), dict(stall_limit=0)])
def test_ga_config_validation(kw):
    with pytest.raises(ValueError):
        GaConfig(**kw)


def test_ils_config_validation():
    with pytest.raises(ValueError):
        IlsConfig(perturbation_strength=0)


@pytest.fixture(scope="module")
def small():
    return generate(preset("20C-3V", n_customers=9), 6, seed=21)


def test_solutions_valid_and_deterministic(small):
    for inst in small:
        for solve, cfg in ((solve_ga, GA1), (solve_ils, ILS1)):
            a, b = solve(inst, cfg), solve(inst, cfg)
            validate_routes(inst, a.routes)
            assert a == b


def test_nearest_neighbor_valid():
    for inst in generate(preset("10C-2V"), 50, seed=2):
        validate_routes(inst, nearest_neighbor(inst).routes)


def test_nearest_neighbor_picks_closest():
    inst = make_instance([(5, 0), (1, 0), (2, 0)], fleet_size=1)
    assert nearest_neighbor(inst).routes == ((2, 3, 1),)


def test_monotone_incumbents(small):
    for inst in small:
        for solve, cfg in ((solve_ga, GA1), (solve_ils, ILS2)):
            trace = []
            solve(inst, cfg, trace=trace)
            assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_ils_improves_on_its_start(small):
    for inst in small:
        assert solve_ils(inst, ILS1).cost.total <= nearest_neighbor(inst).cost.total + 1e-9


@given(st.permutations(list(range(1, 12))), st.permutations(list(range(1, 12))), st.integers(0, 10**6))
def test_order_crossover_is_a_permutation(p1, p2, seed):
    child = _order_crossover(list(p1), list(p2), random.Random(seed))
    assert sorted(child) == list(range(1, 12))


def test_split_is_optimal_over_cut_points():
    import itertools
    inst = generate(preset("20C-3V", n_customers=7), 1, seed=5)[0]
    cs = _Costs(inst)
    tour = list(range(1, 8))
    cost, routes = split_tour(cs, tour, 3)
    best = min(sum(cs.route(tour[a:b]) for a, b in zip((0,) + cuts, cuts + (7,)) if b > a)
               for k in range(3) for cuts in itertools.combinations(range(1, 7), k)
               if all(cs.fits(cs.load(tour[a:b])) for a, b in zip((0,) + cuts, cuts + (7,))))
    assert cost == pytest.approx(best, abs=1e-12)
    assert [c for r in routes for c in r] == tour


def test_two_opt_without_windows_reduces_travel():
    rng = np.random.Generator(np.random.PCG64(1))
    for _ in range(20):
        pts = rng.uniform(0, 10, (8, 2)).tolist()
        inst = make_instance(pts, fleet_size=1)
        cs = _Costs(inst)
        start = [list(rng.permutation(np.arange(1, 9)).tolist())]
        costs = [cs.route(start[0])]
        before = costs[0]
        routes = [list(start[0])]
        _local_search(cs, routes, costs)
        assert costs[0] <= before
        r = routes[0]
        # 2-opt local optimum: no reversal shortens the route
        for i in range(len(r) - 1):
            for j in range(i + 1, len(r)):
                assert cs.route(r[:i] + r[i:j + 1][::-1] + r[j + 1:]) >= costs[0] - 1e-9


def test_ga2_near_optimal_on_tiny_instances():
    insts = generate(preset("6C-2V"), 50, seed=31)
    close = 0
    for inst in insts:
        opt = solve_exact(inst).optimal_cost
        ga = solve_ga(inst, GA2).cost.total
        assert ga >= opt - 1e-9
        close += ga <= 1.05 * opt
    assert close >= 45


@pytest.mark.slow
def test_ils2_beats_ga1_on_average_at_50_customers():
    insts = generate(preset("50C-2V"), 100, seed=41)
    ils = np.mean([solve_ils(i, ILS2).cost.total for i in insts])
    ga = np.mean([solve_ga(i, GA1).cost.total for i in insts])
    assert ils <= ga
