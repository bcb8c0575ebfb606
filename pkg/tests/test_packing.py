import numpy as np
from hypothesis import given, strategies as st

from mvrpstw.instances import packable
from mvrpstw.packing import CompletionGuard, ffd_assign


def test_ffd_assign_simple():
    out = ffd_assign([(1, 6), (2, 5), (3, 4)], {0: 10, 1: 6})
    assert out == {1: 0, 2: 1, 3: 0}


def test_ffd_assign_fails():
    assert ffd_assign([(1, 6), (2, 6), (3, 6)], {0: 10, 1: 10}) is None


def _run(demands, capacity, fleet, rng, enabled=True):
    """Random round-robin construction under the guard; returns routes or None on a stall."""
    guard = CompletionGuard([0.0] + list(demands), capacity, fleet, enabled=enabled)
    routes = [[] for _ in range(fleet)]
    m = 0
    while not guard.done:
        if all(guard.retired):
            return None
        if guard.retired[m]:
            m = (m + 1) % fleet
            continue
        cands = guard.allowed(m)
        if not cands:
            guard.retire(m)
            m = (m + 1) % fleet
            continue
        c = cands[rng.integers(len(cands))]
        assert c in guard.fits(m)
        guard.commit(m, c)
        routes[m].append(c)
        m = (m + 1) % fleet
    return routes


@given(st.lists(st.floats(0.5, 10), min_size=1, max_size=14), st.integers(1, 4), st.integers(0, 2**31))
def test_guard_always_completes(demands, fleet, seed):
    capacity = 10.0
    if not packable(demands, fleet, capacity):
        return
    rng = np.random.Generator(np.random.PCG64(seed))
    routes = _run(demands, capacity, fleet, rng)
    assert routes is not None
    assert sorted(c for r in routes for c in r) == list(range(1, len(demands) + 1))
    for r in routes:
        assert sum(demands[c - 1] for c in r) <= capacity + 1e-9


def test_unguarded_construction_can_stall():
    # total 27 <= 30, yet taking the 5s first leaves two 8s for leftovers of 5
    demands = [5, 5, 8, 8, 1]
    stalls = 0
    for seed in range(200):
        if _run(demands, 15.0, 2, np.random.Generator(np.random.PCG64(seed)), enabled=False) is None:
            stalls += 1
    assert stalls > 0
    for seed in range(200):
        assert _run(demands, 15.0, 2, np.random.Generator(np.random.PCG64(seed))) is not None


def test_guard_is_inert_with_slack_capacity():
    demands = [1.0] * 6
    guard = CompletionGuard([0.0] + demands, 100.0, 2)
    assert guard.allowed(0) == guard.fits(0) == list(range(1, 7))
