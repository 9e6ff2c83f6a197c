from __future__ import annotations

from itertools import combinations
from typing import Callable

from .dd import DdSet


class DepthExceeded(RuntimeError):
    def __init__(self, trials: int):
        super().__init__(f"exclusion depth exhausted after {trials} subsets")
        self.trials = trials


def _candidate_drops(dd: DdSet, m: int):
    ranked = [e.sig for e in dd.by_score()]
    if m == 1:
        return ([s] for s in ranked)
    # pairs ordered by the sum of their score ranks, then lexicographically
    pairs = sorted(combinations(range(len(ranked)), m), key=lambda c: (sum(c), c))
    return ([ranked[i] for i in c] for c in pairs)


def scored_exclusion(dd: DdSet, test: Callable, depth: int, max_m: int = 1):
    """Search for a DD subset that passes ``test`` by removing low-score DDs.

    ``test(subset)`` returns ``(passed, payload)``. The full set is tried first;
    then single DDs are removed one at a time with replacement in ascending
    quality-score order, then (if ``max_m`` is 2) pairs, with at most ``depth``
    subsets per level. Returns ``(subset, excluded_signals, payload, trials)``.
    Raises :class:`DepthExceeded` when every permitted subset fails.
    """
    passed, payload = test(dd)
    if passed:
        return dd, [], payload, 0
    trials = 0
    for m in range(1, max_m + 1):
        tried = 0
        for drop in _candidate_drops(dd, m):
            if tried >= depth:
                break
            if len(dd) - len(drop) < 1:
                continue
            tried += 1
            trials += 1
            sub = dd.without(drop)
            passed, payload = test(sub)
            if passed:
                return sub, list(drop), payload, trials
    raise DepthExceeded(trials)
