"""Completion guard for round-robin route construction without depot reloads.

Total demand below fleet capacity does not guarantee that greedy
construction can finish: every vehicle may end up with a leftover smaller
than all remaining demands. The guard keeps an explicit packing of the
unserved customers into the vehicles' leftovers (the witness) and only
allows choices after which some packing still exists.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .problem import CAPACITY_EPS


def ffd_assign(items: Sequence[tuple[int, float]], leftovers: dict[int, float]) -> Optional[dict[int, int]]:
    """First-fit-decreasing packing of ``(id, demand)`` items into vehicle leftovers."""
    room = dict(leftovers)
    out = {}
    for i, d in sorted(items, key=lambda t: (-t[1], t[0])):
        for k in room:
            if d <= room[k] + CAPACITY_EPS:
                room[k] -= d
                out[i] = k
                break
        else:
            return None
    return out


class CompletionGuard:
    """Tracks leftovers, unserved customers and a packing witness for one instance.

    ``demands`` is indexed by node (index 0 is the depot and ignored).
    """

    def __init__(self, demands: Sequence[float], capacity: float, fleet_size: int, enabled: bool = True):
        self.demands = [float(d) for d in demands]
        self.left = [float(capacity)] * fleet_size
        self.retired = [False] * fleet_size
        self.unserved = set(range(1, len(self.demands)))
        self.witness: Optional[dict[int, int]] = None
        if enabled:
            self.witness = ffd_assign(self._items(), self._bins())

    def _items(self, skip: int = -1):
        return [(i, self.demands[i]) for i in self.unserved if i != skip]

    def _bins(self, m: int = -1, used: float = 0.0):
        return {k: self.left[k] - (used if k == m else 0.0)
                for k in range(len(self.left)) if not self.retired[k]}

    def fits(self, m: int) -> list[int]:
        """Unserved customers whose demand fits vehicle ``m`` (the plain capacity mask)."""
        cap = self.left[m] + CAPACITY_EPS
        return sorted(i for i in self.unserved if self.demands[i] <= cap)

    def allowed(self, m: int) -> list[int]:
        cands = self.fits(m)
        if self.witness is None or not cands:
            return cands
        total = sum(self.demands[i] for i in self.unserved)
        dmax = max(self.demands[i] for i in self.unserved)
        slack = {k: max(0.0, v - dmax) for k, v in self._bins().items()}
        others = sum(v for k, v in slack.items() if k != m)
        out = []
        for i in cands:
            d = self.demands[i]
            if self.witness.get(i) == m:
                out.append(i)
            elif total - d <= others + max(0.0, self.left[m] - d - dmax):
                # any first-fit order then completes the remaining customers
                out.append(i)
            elif ffd_assign(self._items(skip=i), self._bins(m, d)) is not None:
                out.append(i)
        return out

    def commit(self, m: int, i: int) -> None:
        d = self.demands[i]
        self.unserved.discard(i)
        self.left[m] = max(0.0, self.left[m] - d)
        if self.witness is None:
            return
        if self.witness.get(i) == m:
            del self.witness[i]
        else:
            self.witness = ffd_assign(self._items(), self._bins())
            if self.witness is None:
                raise AssertionError("guard admitted a choice that breaks every packing")

    def retire(self, m: int) -> None:
        if self.witness is not None and m in self.witness.values():
            raise AssertionError("retiring a vehicle that still holds witness customers")
        self.retired[m] = True

    @property
    def done(self) -> bool:
        return not self.unserved
