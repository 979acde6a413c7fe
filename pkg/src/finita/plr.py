"""Piecewise-linear relaxation of the binary objective.

``h_b`` on ``[0, 1/2]`` is replaced by the lower envelope of ``k`` tangent
lines.  Once every component is assigned to one linear region (a
*placement*) the relaxed objective is linear in the word probabilities,
``sum_w c_w P(Y=w) + d``, and its minimum over bijections is found by
sorting: the largest probability goes to the smallest coefficient.
Enumerating every placement and keeping the feasible ones gives an upper
bound on the optimum together with a mapping that attains it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .core import (
    JointDistribution,
    WordMapping,
    apply_mapping,
    binary_entropy,
    bit_mapping,
    entropy,
    sum_marginal_entropies,
    word_digits,
)
from .errors import NoFeasiblePlacement, SizeMismatch, UnsupportedAlphabet

REGION_TOL = 1e-12
SCHEDULES = ("midpoint", "nested", "minimax", "greedy")


def tangent_line(t: float) -> tuple[float, float]:
    """Slope and intercept of the tangent to ``h_b`` at ``t`` in (0, 1/2]."""
    return float(np.log2((1.0 - t) / t)), float(-np.log2(1.0 - t))


def _hb_scalar(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -(x * math.log2(x) + (1.0 - x) * math.log2(1.0 - x))


def _gap(x: float, t: float) -> float:
    return math.log2((1.0 - t) / t) * x - math.log2(1.0 - t) - _hb_scalar(x)


def _bisect(f, lo, hi, iters=60):
    """Last point of ``[lo, hi]`` where the monotone predicate ``f`` holds."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _greedy_cover(delta: float, kmax: int) -> list[float] | None:
    """Tangents whose envelope stays within ``delta`` of ``h_b``, or None."""
    pts, reach = [], 0.0
    while reach < 0.5:
        if len(pts) == kmax:
            return None
        # leftmost point the next tangent can still cover within delta
        def covers(t, reach=reach):
            return _gap(reach, t) <= delta

        lo = pts[-1] if pts else 1e-15
        if not covers(lo) and pts:
            return None
        t = 0.5 if covers(0.5) else _bisect(covers, lo, 0.5)
        if t <= (pts[-1] if pts else 0.0):
            return None
        pts.append(t)
        reach = 0.5 if _gap(0.5, t) <= delta else _bisect(lambda x: _gap(x, t) <= delta, t, 0.5)
    return pts


def _minimax_points(k: int) -> np.ndarray:
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        pts = _greedy_cover(mid, k)
        if pts is None:
            lo = mid
        else:
            hi, best = mid, pts
    pts = list(best)
    # spare tangents (when fewer than k suffice) refine the widest interval
    while len(pts) < k:
        gaps = np.diff([0.0] + pts)
        j = int(np.argmax(gaps))
        pts.insert(j, (pts[j - 1] if j else 0.0) + gaps[j] / 2)
    return np.array(pts)


@lru_cache(maxsize=None)
def _greedy_sequence(k: int) -> tuple:
    """First ``k`` points of a single refining sequence of tangents.

    Each new tangent goes where it removes the most area between the
    envelope and ``h_b`` (searched on a grid), so the first ``k`` points are
    always a subset of the first ``k + 1`` and the bounds decrease pointwise
    in ``k``.
    """
    if k == 0:
        return ()
    prev = _greedy_sequence(k - 1)
    if not prev:
        return (0.5,)
    xs = np.linspace(0.0, 0.5, 2001)
    cand = np.linspace(0.5 / 2000, 0.5, 2000)
    cand = cand[~np.isin(cand, prev)]
    lines = np.log2((1.0 - cand) / cand)[:, None] * xs - np.log2(1.0 - cand)[:, None]
    env = build_tangent_bound(len(prev), points=prev)(xs)
    area = np.minimum(lines, env).sum(axis=1)
    return prev + (float(cand[int(np.argmin(area))]),)


def tangent_points(k: int, schedule: str = "midpoint") -> np.ndarray:
    if k < 1:
        raise ValueError("k must be at least 1")
    j = np.arange(1, k + 1, dtype=np.float64)
    if schedule == "midpoint":
        return (j - 0.5) / (2 * k)
    if schedule == "nested":
        return j / (2 * k)
    if schedule == "minimax":
        return _minimax_points(k)
    if schedule == "greedy":
        return np.sort(np.array(_greedy_sequence(k)))
    raise ValueError(f"unknown schedule {schedule!r}; choose from {SCHEDULES}")


@dataclass(frozen=True)
class PiecewiseLinearBound:
    """Lower envelope of tangents to ``h_b``, split into regions of ``[0, 1/2]``.

    Piece ``i`` is the line ``slopes[i] * x + intercepts[i]`` on
    ``[lo[i], hi[i])``; the last region is closed at 1/2.
    """

    k: int
    tangent_points: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @property
    def pieces(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.lo.tolist(), self.hi.tolist(), self.slopes.tolist(), self.intercepts.tolist()))

    def __call__(self, x):
        """Envelope value; valid as an upper bound of ``h_b`` on all of [0, 1]."""
        x = np.asarray(x, dtype=np.float64)
        return np.min(self.slopes * x[..., None] + self.intercepts, axis=-1)

    def region_of(self, x):
        """0-based region index; boundary points go to the lower region."""
        x = np.asarray(x, dtype=np.float64)
        return np.searchsorted(self.hi[:-1], x - REGION_TOL, side="left")

    def max_gap(self, grid: int = 20001) -> float:
        xs = np.linspace(0.0, 0.5, grid)
        return float(np.max(self(xs) - binary_entropy(xs)))


def build_tangent_bound(k: int, schedule: str = "midpoint", points=None) -> PiecewiseLinearBound:
    """Envelope of ``k`` tangents to ``h_b``.

    ``schedule`` picks the abscissas: ``midpoint`` uses ``(j - 1/2)/(2k)``,
    ``nested`` uses ``j/(2k)`` (so ``k=1`` is the line ``y = 1`` and doubling
    ``k`` keeps every old tangent), ``minimax`` equalises the worst gap and
    ``greedy`` takes the first ``k`` points of one refining sequence, so its
    bounds shrink for every increase of ``k``.
    Explicit ``points`` override the schedule.
    """
    t = np.sort(np.asarray(points, dtype=np.float64) if points is not None else tangent_points(k, schedule))
    if t.size < 1 or t[0] <= 0 or t[-1] > 0.5:
        raise ValueError("tangent points must lie in (0, 1/2]")
    lines = np.array([tangent_line(v) for v in t])
    a, b = lines[:, 0], lines[:, 1]
    cuts = (b[1:] - b[:-1]) / (a[:-1] - a[1:]) if t.size > 1 else np.empty(0)
    lo = np.concatenate([[0.0], cuts])
    hi = np.concatenate([cuts, [0.5]])
    return PiecewiseLinearBound(int(t.size), t, a, b, lo, hi)


@dataclass(frozen=True)
class Placement:
    """How many components sit in each of the ``k`` regions."""

    counts: tuple

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    def regions(self) -> np.ndarray:
        """Region of every component: the first ``counts[0]`` use region 0, and so on."""
        return np.repeat(np.arange(len(self.counts)), self.counts)


def enumerate_placements(n: int, k: int):
    """Every placement of ``n`` components in ``k`` regions, ``C(n+k-1, n)`` in all."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    for regs in combinations_with_replacement(range(k), n):
        yield Placement(tuple(np.bincount(regs, minlength=k).tolist()))


def placement_count(n: int, k: int) -> int:
    return comb(n + k - 1, n)


@dataclass(frozen=True)
class CoefficientVector:
    """Per-word coefficients ``c``, constant ``d`` and ``(value, multiplicity)`` groups."""

    c: np.ndarray
    d: float
    dedup: list

    @property
    def distinct(self) -> int:
        return len(self.dedup)



def _zero_prefix(n: int) -> np.ndarray:
    """``(n+1, 2**n)`` counts of zero bits among components ``1..m`` for each ``m``.

    Stored as floats so batched gathers need no conversion; the counts are
    small integers and therefore exact.
    """
    z = 1 - word_digits(n, 2)
    return np.concatenate([np.zeros((1, z.shape[0])), np.cumsum(z, axis=1).T.astype(np.float64)])


def _coefficients(counts: np.ndarray, bound: PiecewiseLinearBound, prefix: np.ndarray):
    """Coefficient rows and constants for a batch of placements.

    ``c_w`` is accumulated region by region from integer zero counts, so
    words with the same counts get bit-identical coefficients.
    """
    counts = np.atleast_2d(counts)
    edges = np.concatenate([np.zeros((counts.shape[0], 1), dtype=np.int64), np.cumsum(counts, axis=1)], axis=1)
    c = np.zeros((counts.shape[0], prefix.shape[1]))
    d = np.zeros(counts.shape[0])
    for r in range(bound.k):
        used = counts[:, r] > 0
        if used.all():
            c += bound.slopes[r] * (prefix[edges[:, r + 1]] - prefix[edges[:, r]])
        elif used.any():
            c[used] += bound.slopes[r] * (prefix[edges[used, r + 1]] - prefix[edges[used, r]])
        d += bound.intercepts[r] * counts[:, r]
    return c, d


def coefficients_for_placement(pl: Placement, bound: PiecewiseLinearBound, n: int) -> CoefficientVector:
    """Coefficients of the linear objective when components follow ``pl``."""
    if pl.n != n or len(pl.counts) != bound.k:
        raise SizeMismatch("placement does not match n and k")
    c, d = _coefficients(np.array([pl.counts]), bound, _zero_prefix(n))
    values, mult = np.unique(c[0], return_counts=True)
    return CoefficientVector(c[0], float(d[0]), list(zip(values.tolist(), mult.tolist())))


def _desc_order(p: np.ndarray) -> np.ndarray:
    return np.argsort(-p, kind="stable")


def allocate_min(c, p, d: float | None = None) -> tuple[WordMapping, float]:
    """Bijection minimising ``sum_w c_w P(Y=w) + d``.

    ``p`` is indexed by input word.  The largest probability goes to the
    smallest coefficient; equal values are broken by word index.
    """
    if isinstance(c, CoefficientVector):
        c, d = c.c, c.d if d is None else d
    c = np.asarray(c, dtype=np.float64)
    shape = (p.n, p.q) if isinstance(p, JointDistribution) else None
    p = p.probs if isinstance(p, JointDistribution) else np.asarray(p, dtype=np.float64)
    if c.shape != p.shape:
        raise SizeMismatch("coefficient and probability vectors differ in length")
    oc = np.argsort(c, kind="stable")
    op = _desc_order(p)
    perm = np.empty(p.size, dtype=np.int64)
    perm[op] = oc
    if shape is None:
        n = p.size.bit_length() - 1
        shape = (n, 2) if 1 << n == p.size else (1, p.size)
    value = float(np.dot(c[oc], p[op]) + (d or 0.0))
    return WordMapping(*shape, perm), value


def dedup_value(cv: CoefficientVector, p) -> float:
    """Allocation minimum computed from the grouped coefficients only."""
    p = np.asarray(p, dtype=np.float64)
    ps = np.sort(p)[::-1]
    mult = np.array([m for _, m in cv.dedup], dtype=np.int64)
    vals = np.array([v for v, _ in cv.dedup])
    cuts = np.concatenate([[0], np.cumsum(mult)])
    csum = np.concatenate([[0.0], np.cumsum(ps)])
    return float(np.dot(vals, csum[cuts[1:]] - csum[cuts[:-1]]) + cv.d)


@lru_cache(maxsize=32)
def _placement_matrix(n: int, k: int) -> np.ndarray:
    out = np.array([pl.counts for pl in enumerate_placements(n, k)], dtype=np.int64).reshape(-1, k)
    out.setflags(write=False)
    return out


def coefficient_matrix(n: int, k: int, bound: PiecewiseLinearBound | None = None):
    """Sorted coefficient rows of every placement plus dedup counts.

    Returns ``(rows, d, distinct)``: ``rows[i]`` is placement ``i``'s
    coefficient vector in ascending order, so ``rows @ sort(p)[::-1] + d``
    gives every placement's allocation minimum at once.
    """
    bound = bound or build_tangent_bound(k)
    counts = _placement_matrix(n, k)
    c, d = _coefficients(counts, bound, _zero_prefix(n))
    rows = np.sort(c, axis=1)
    distinct = 1 + np.count_nonzero(np.diff(rows, axis=1), axis=1)
    return rows, d, distinct


def _fold(pi):
    return np.minimum(pi, 1.0 - pi)


def _in_regions(folded: np.ndarray, regions: np.ndarray, bound: PiecewiseLinearBound) -> np.ndarray:
    lo, hi = bound.lo[regions], bound.hi[regions]
    return np.all((folded >= lo - REGION_TOL) & (folded <= hi + REGION_TOL), axis=-1)


@dataclass(frozen=True)
class PlrResult:
    """Outcome of the relaxation.

    ``mapping`` sends every input word to its output word with all output
    ``P(Y_i = 0) <= 1/2``.  ``ub_value`` is the relaxed objective of the
    winning feasible placement and ``true_objective`` the exact sum of
    marginal entropies under ``mapping``.  ``best_true_objective`` is the
    lowest exact objective among the feasible placements that were checked.
    """

    mapping: WordMapping
    ub_value: float
    true_objective: float
    feasible_placements_visited: int
    placements_checked: int
    placements: int
    lp_min: float
    best_true_objective: float
    best_mapping: WordMapping
    joint_entropy: float
    identity_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "ub_value": self.ub_value,
            "true_objective": self.true_objective,
            "best_true_objective": self.best_true_objective,
            "joint_entropy": self.joint_entropy,
            "feasible_placements_visited": self.feasible_placements_visited,
            "placements_checked": self.placements_checked,
            "placements": self.placements,
            "lp_min": self.lp_min,
            "identity_fallback": self.identity_fallback,
        }


def _flip_to_half(joint: JointDistribution, mapping: WordMapping) -> WordMapping:
    pi = apply_mapping(joint, mapping).marginals()[:, 0]
    flips = pi > 0.5
    if not flips.any():
        return mapping
    return mapping.then(bit_mapping(joint.n, range(joint.n), flips))


def _class_grid(shape: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Zero-count vectors of every word class and their sizes for region sizes ``shape``."""
    grids = np.meshgrid(*[np.arange(l + 1) for l in shape], indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1).astype(np.float64)
    mult = np.ones(z.shape[0], dtype=np.int64)
    for j, l in enumerate(shape):
        mult *= np.array([comb(l, v) for v in range(l + 1)], dtype=np.int64)[z[:, j].astype(np.int64)]
    return z, mult


def _grouped_values(joint, bound, counts):
    """Allocation minimum of every placement, computed on word classes.

    Words with the same zero count in every region share a coefficient, so
    a placement only sorts ``prod(l_r + 1)`` class values and charges each
    class the matching run of descending probabilities.  Placements whose
    non-empty regions have the same sizes share the class grid and are
    handled as one batch.
    """
    csum = np.concatenate([[0.0], np.cumsum(np.sort(joint.probs)[::-1])])
    out = np.empty(len(counts))
    groups: dict = {}
    for i, cnt in enumerate(counts.tolist()):
        used = tuple(r for r, l in enumerate(cnt) if l)
        groups.setdefault(tuple(cnt[r] for r in used), []).append((i, used))
    for shape, members in groups.items():
        z, mult = _class_grid(shape)
        idx = np.array([i for i, _ in members])
        used = np.array([u for _, u in members])
        c = np.zeros((len(members), z.shape[0]))
        for j in range(len(shape)):
            c += bound.slopes[used[:, j]][:, None] * z[:, j]
        o = np.argsort(c, axis=1, kind="stable")
        m = mult[o]
        end = np.cumsum(m, axis=1)
        charge = csum[end] - csum[end - m]
        d = np.zeros(len(members))
        for r in range(bound.k):
            d += bound.intercepts[r] * counts[idx, r]
        out[idx] = np.einsum("ij,ij->i", np.take_along_axis(c, o, axis=1), charge) + d
    return out


def _scan_matrix(joint, bound, counts, chunk):
    """LP value and realized ``pi`` of every placement, batched."""
    n = joint.n
    prefix = _zero_prefix(n)
    zero = (1 - word_digits(n, 2)).astype(np.float64)
    pd = joint.probs[_desc_order(joint.probs)]
    values, pis = np.empty(len(counts)), np.empty((len(counts), n))
    for s in range(0, len(counts), chunk):
        c, d = _coefficients(counts[s : s + chunk], bound, prefix)
        oc = np.argsort(c, axis=1, kind="stable")
        values[s : s + chunk] = np.take_along_axis(c, oc, axis=1) @ pd + d
        q = np.empty_like(c)
        np.put_along_axis(q, oc, np.broadcast_to(pd, c.shape), axis=1)
        pis[s : s + chunk] = q @ zero
    return values, pis


def _scan_loop(joint, bound, counts):
    n = joint.n
    zero = (1 - word_digits(n, 2)).astype(np.float64)
    values, pis = np.empty(len(counts)), np.empty((len(counts), n))
    out = np.empty(joint.size)
    for i, cnt in enumerate(counts):
        cv = coefficients_for_placement(Placement(tuple(cnt.tolist())), bound, n)
        m, values[i] = allocate_min(cv, joint.probs)
        out[m.perm] = joint.probs
        pis[i] = out @ zero
    return values, pis


def _solve_placement(joint, bound, cnt):
    cv = coefficients_for_placement(Placement(tuple(int(v) for v in cnt)), bound, joint.n)
    return allocate_min(cv, joint)


METHODS = ("grouped", "matrix", "loop")


def solve_plr(
    joint: JointDistribution,
    k: int = 8,
    *,
    schedule: str = "midpoint",
    bound: PiecewiseLinearBound | None = None,
    method: str = "grouped",
    full_scan: bool = False,
    chunk: int = 2048,
) -> PlrResult:
    """Best feasible placement of the piecewise-linear relaxation.

    Every placement's unconstrained allocation value is computed; a
    placement is feasible when each component's realized ``P(Y_i = 0)``,
    folded onto ``[0, 1/2]``, falls in its assigned region (closed, with a
    1e-12 margin).  Placements are checked in ascending value order, ties
    going to the earlier placement, and the first feasible one wins.
    ``full_scan`` checks every placement instead of stopping there.

    ``method`` selects how values are computed: ``grouped`` sorts word
    classes per placement, ``matrix`` multiplies the sorted coefficient rows
    by the sorted probabilities, ``loop`` solves each placement on its own.
    """
    if joint.q != 2:
        raise UnsupportedAlphabet("the binary relaxation needs q = 2")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    bound = bound or build_tangent_bound(k, schedule)
    n = joint.n
    counts = _placement_matrix(n, bound.k)
    regions = np.array([np.repeat(np.arange(bound.k), c) for c in counts])

    pis = None
    if method == "grouped":
        values = _grouped_values(joint, bound, counts)
    elif method == "matrix":
        values, pis = _scan_matrix(joint, bound, counts, chunk)
    else:
        values, pis = _scan_loop(joint, bound, counts)
    if full_scan and pis is None:
        _, pis = _scan_matrix(joint, bound, counts, chunk)
    order = np.argsort(values, kind="stable")

    if pis is not None:
        feasible = _in_regions(_fold(pis), regions, bound)
        if not feasible.any():
            raise NoFeasiblePlacement("no placement contains its own solution")
        win = int(order[np.argmax(feasible[order])])
        checked = len(counts)
        true_all = np.where(feasible, binary_entropy(pis).sum(axis=1), np.inf)
        best = int(np.argmin(true_all))
    else:
        zero = (1 - word_digits(n, 2)).astype(np.float64)
        out = np.empty(joint.size)
        win = None
        for checked, idx in enumerate(order.tolist(), start=1):
            m, _ = _solve_placement(joint, bound, counts[idx])
            out[m.perm] = joint.probs
            if _in_regions(_fold(out @ zero), regions[idx], bound):
                win = idx
                break
        if win is None:
            raise NoFeasiblePlacement("no placement contains its own solution")
        feasible = np.zeros(len(counts), dtype=bool)
        feasible[win] = True
        best = win

    raw, ub_value = _solve_placement(joint, bound, counts[win])
    mapping = _flip_to_half(joint, raw)
    true_obj = sum_marginal_entropies(apply_mapping(joint, mapping))
    if best == win:
        best_mapping, best_true = mapping, true_obj
    else:
        best_mapping = _flip_to_half(joint, _solve_placement(joint, bound, counts[best])[0])
        best_true = sum_marginal_entropies(apply_mapping(joint, best_mapping))

    # the identity is always a candidate, so nothing returned is worse than the input
    identity_value = sum_marginal_entropies(joint)
    identity = _flip_to_half(joint, WordMapping.identity(n))
    fallback = identity_value < true_obj
    if fallback:
        mapping, true_obj = identity, identity_value
    if identity_value < best_true:
        best_mapping, best_true = identity, identity_value

    return PlrResult(
        mapping=mapping,
        ub_value=float(ub_value),
        true_objective=float(true_obj),
        feasible_placements_visited=int(feasible.sum()),
        placements_checked=int(checked),
        placements=len(counts),
        lp_min=float(values.min()),
        best_true_objective=float(best_true),
        best_mapping=best_mapping,
        joint_entropy=entropy(joint.probs),
        identity_fallback=bool(fallback),
    )
