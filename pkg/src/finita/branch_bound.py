"""Exact minimisation of the sum of binary marginal entropies.

The optimum over all word bijections can be taken to respect the partial
order on words: if the zero bits of ``a`` are a subset of the zero bits of
``b`` then ``P(a) >= P(b)``.  Allocating the sorted probabilities in
ascending order therefore means growing a down-closed set of words (every
word with a superset of zeros already placed), which gives the search tree.
A depth-first walk prunes subtrees with an optimistic per-bit mass bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import JointDistribution, WordMapping, binary_entropy, canonicalize, sum_marginal_entropies
from .errors import LimitExceeded, NotDownClosed, UnsupportedAlphabet

DEFAULT_MAX_N = 12


def zeros_mask(word: int, n: int) -> int:
    return ~word & ((1 << n) - 1)


def is_minorant(a: int, b: int, n: int | None = None) -> bool:
    """True iff every zero bit of ``a`` is also zero in ``b``."""
    return (b & ~a) == 0


def _check_down_closed(allocated, n: int) -> None:
    if 0 not in allocated:
        raise NotDownClosed("the all-zeros word must be allocated first")
    for w in allocated:
        for b in range(n):
            if w >> b & 1 and (w & ~(1 << b)) not in allocated:
                raise NotDownClosed(f"word {w:0{n}b} is allocated before its majorant")


def largest_minorants(allocated, n: int) -> set[int]:
    """Unallocated words whose strict majorants are all allocated."""
    allocated = set(allocated)
    _check_down_closed(allocated, n)
    out = set()
    for w in range(1 << n):
        if w in allocated:
            continue
        if all((w & ~(1 << b)) in allocated for b in range(n) if w >> b & 1):
            out.add(w)
    return out


@dataclass
class SearchNode:
    """Partial allocation: ``allocated[word]`` is the index into sorted p."""

    n: int
    allocated: dict = field(default_factory=dict)

    def frontier(self) -> set[int]:
        return largest_minorants(self.allocated, self.n)


def lower_bound(node: SearchNode, p) -> float:
    """Optimistic objective for any completion of ``node``.

    For each bit, the mass already placed on words with that bit zero is
    topped up with the smallest unplaced probabilities, one per empty slot.
    """
    p = np.asarray(p, dtype=np.float64)
    n, t = node.n, len(node.allocated)
    prefix = np.concatenate([[0.0], np.cumsum(p)])
    total = 0.0
    for i in range(n):
        mass = sum(p[k] for w, k in node.allocated.items() if not w >> i & 1)
        placed = sum(1 for w in node.allocated if not w >> i & 1)
        free = (1 << (n - 1)) - placed
        pi_min = mass + prefix[t + free] - prefix[t]
        total += binary_entropy(min(pi_min, 0.5))
    return float(total)


@dataclass
class SearchStats:
    nodes: int = 0
    pruned: int = 0
    leaves: int = 0
    symmetric_skipped: int = 0
    seconds: float = 0.0
    optimal: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExactResult:
    mapping: WordMapping
    value: float
    stats: SearchStats


def _hb(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-(x * np.log2(x) + (1 - x) * np.log2(1 - x)))


class _Search:
    def __init__(self, joint: JointDistribution, prune: bool, symmetry: bool):
        n = joint.n
        self.n, self.N = n, 1 << n
        self.order = np.argsort(joint.probs, kind="stable")
        self.p = joint.probs[self.order].tolist()
        self.prefix = np.concatenate([[0.0], np.cumsum(self.p)]).tolist()
        self.prune, self.symmetry = prune, symmetry
        self.allocated = [False] * self.N
        self.assign = []  # assign[t] = word holding the t-th smallest probability
        self.mass = [0.0] * n
        self.free = [1 << (n - 1)] * n
        self.need = [bin(w).count("1") for w in range(self.N)]
        self.frontier = set()
        self.labels = [[0] * n]
        self.zero_bits = [[i for i in range(n) if not w >> i & 1] for w in range(self.N)]

    def place(self, w: int) -> None:
        t = len(self.assign)
        pt = self.p[t]
        self.allocated[w] = True
        self.assign.append(w)
        self.frontier.discard(w)
        for i in self.zero_bits[w]:
            self.mass[i] += pt
            self.free[i] -= 1
            child = w | (1 << i)
            self.need[child] -= 1
            if self.need[child] == 0:
                self.frontier.add(child)
        if self.symmetry:
            old = self.labels[-1]
            keyed = {}
            self.labels.append([keyed.setdefault((old[i], w >> i & 1), len(keyed)) for i in range(self.n)])

    def unplace(self) -> None:
        w = self.assign.pop()
        pt = self.p[len(self.assign)]
        self.allocated[w] = False
        for i in self.zero_bits[w]:
            self.mass[i] -= pt
            self.free[i] += 1
            child = w | (1 << i)
            if self.need[child] == 0:
                self.frontier.discard(child)
            self.need[child] += 1
        self.frontier.add(w)
        if self.symmetry:
            self.labels.pop()

    def bound(self) -> float:
        t = len(self.assign)
        pre = self.prefix
        total = 0.0
        for i in range(self.n):
            pi_min = self.mass[i] + pre[t + self.free[i]] - pre[t]
            total += _hb(min(pi_min, 0.5))
        return total

    def leaf_value(self) -> float:
        return sum(_hb(m) for m in self.mass)

    def children(self, stats: SearchStats) -> list[int]:
        cands = sorted(self.frontier)
        if not self.symmetry:
            return cands
        lab = self.labels[-1]
        seen, reps = set(), []
        for w in cands:
            key = tuple(sorted((lab[i], w >> i & 1) for i in range(self.n)))
            if key in seen:
                stats.symmetric_skipped += 1
                continue
            seen.add(key)
            reps.append(w)
        return reps


def solve_exact(
    joint: JointDistribution,
    max_nodes: int | None = None,
    max_seconds: float | None = None,
    *,
    prune: bool = True,
    symmetry: bool = True,
    max_n: int = DEFAULT_MAX_N,
    strict: bool = False,
) -> ExactResult:
    """Global minimum of the sum of binary marginal entropies.

    Returns the optimal mapping (all ``P(Y_i = 0) <= 1/2``), its objective
    value and search statistics.  When a node or time cap is hit the best
    incumbent is returned with ``stats.optimal = False``; with
    ``strict=True`` a :class:`LimitExceeded` carrying that result is raised.
    """
    if joint.q != 2:
        raise UnsupportedAlphabet("branch and bound handles binary vectors only")
    if joint.n > max_n:
        raise ValueError(f"n={joint.n} exceeds the configured cap {max_n}")
    start = time.perf_counter()
    stats = SearchStats()
    s = _Search(joint, prune, symmetry)

    canon, _ = canonicalize(joint)
    best_value = sum_marginal_entropies(joint)
    best_assign = None
    eps = 1e-12

    def better(v: float) -> bool:
        return v < best_value - eps if best_assign is not None else v <= best_value + eps

    def hopeless(b: float) -> bool:
        if not prune:
            return False
        return b >= best_value - eps if best_assign is not None else b > best_value + eps

    s.place(0)
    stack = [iter(s.children(stats))]
    stats.nodes = 1
    hit_limit = False
    while stack:
        if (max_nodes is not None and stats.nodes >= max_nodes) or (
            max_seconds is not None and time.perf_counter() - start > max_seconds
        ):
            hit_limit = True
            break
        w = next(stack[-1], None)
        if w is None:
            stack.pop()
            s.unplace()
            continue
        s.place(w)
        stats.nodes += 1
        if len(s.assign) == s.N:
            stats.leaves += 1
            v = s.leaf_value()
            # leaves with some pi > 1/2 are never needed: a flipped optimum sits elsewhere in the tree
            if max(s.mass) <= 0.5 + 1e-12 and better(v):
                best_value, best_assign = v, list(s.assign)
            s.unplace()
            continue
        if hopeless(s.bound()):
            stats.pruned += 1
            s.unplace()
            continue
        kids = s.children(stats)
        if len(kids) > 1:
            kids = _order_children(s, kids)
        stack.append(iter(kids))

    stats.seconds = time.perf_counter() - start
    stats.optimal = not hit_limit
    if best_assign is None:
        mapping = canon
    else:
        perm = np.empty(s.N, dtype=np.int64)
        perm[s.order] = best_assign
        mapping = WordMapping(joint.n, 2, perm)
    result = ExactResult(mapping, float(best_value), stats)
    if hit_limit and strict:
        raise LimitExceeded("search cap reached before optimality was proven", result)
    return result


def _order_children(s: _Search, kids: list[int]) -> list[int]:
    # cheapest optimistic bound first, word index breaks ties
    scored = []
    for w in kids:
        s.place(w)
        scored.append((s.bound(), w))
        s.unplace()
    scored.sort()
    return [w for _, w in scored]


def brute_force_minimum(joint: JointDistribution) -> float:
    """Minimum over every assignment of the probabilities to words (n <= 3)."""
    from itertools import permutations

    if joint.q != 2 or joint.n > 3:
        raise ValueError("brute force is limited to binary n <= 3")
    n, N = joint.n, joint.size
    perms = np.array(list(permutations(range(N))), dtype=np.int64)
    zero = np.array([[not w >> i & 1 for i in range(n)] for w in range(N)], dtype=np.float64)
    # probability k sits on word perms[:, k]
    pis = (joint.probs[None, :, None] * zero[perms]).sum(axis=1)
    return float(binary_entropy(pis).sum(axis=1).min())
