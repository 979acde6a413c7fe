"""Relaxation for alphabets of any size.

A component with symbol masses ``mu`` has entropy
``sum_s phi(mu_s) + phi(remainder)`` with ``phi(x) = -x log2 x``.  The
``q - 1`` parameters each get a tangent of ``phi`` chosen from ``k``
abscissas; the tuple of chosen tangents is a *cell*.  Inside a cell the
remainder term is bounded by one more tangent of ``phi``, so the per-word
objective is linear and the bijection problem is again solved by sorting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .core import (
    JointDistribution,
    WordMapping,
    apply_mapping,
    entropy,
    sum_marginal_entropies,
    symbol_relabeling,
    word_digits,
)
from .errors import WorkCapExceeded
from .plr import allocate_min, tangent_points

LN2 = math.log(2.0)
DEFAULT_WORK_CAP = 500_000_000
FEAS_TOL = 1e-12
DESCENT_EPS = 1e-10


def phi(x):
    """``-x log2 x`` with ``phi(0) = 0``."""
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(x > 0, x, 1.0)
    out = np.where(x > 0, -x * np.log2(safe), 0.0)
    return out if out.shape else float(out)


def phi_tangent(t: float) -> tuple[float, float]:
    """Slope and intercept of the tangent to ``phi`` at ``t > 0``."""
    return -math.log2(t) - 1.0 / LN2, t / LN2


@dataclass(frozen=True, order=True)
class Cell:
    """Sorted multiset of 0-based region indices, one per parameter."""

    regions: tuple

    @property
    def labels(self) -> tuple:
        """1-based region numbers."""
        return tuple(r + 1 for r in self.regions)


def _region_bounds(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = -np.log2(t) - 1.0 / LN2
    b = t / LN2
    cuts = (b[1:] - b[:-1]) / (a[:-1] - a[1:]) if t.size > 1 else np.empty(0)
    return np.concatenate([[0.0], cuts]), np.concatenate([cuts, [0.5]])


def enumerate_cells(q: int, k: int, schedule: str = "midpoint", stats: dict | None = None):
    """Canonical cells for alphabet ``q`` and ``k`` regions.

    Cells whose region lower ends already sum past 1 cannot hold any
    parameter vector and are skipped; the number skipped is written to
    ``stats["filtered"]`` when a dict is passed.
    """
    if q < 2 or k < 1:
        raise ValueError("need q >= 2 and k >= 1")
    lo, _ = _region_bounds(np.sort(tangent_points(k, schedule)))
    filtered = 0
    for regs in combinations_with_replacement(range(k), q - 1):
        if sum(lo[r] for r in regs) > 1.0 + FEAS_TOL:
            filtered += 1
            continue
        yield Cell(regs)
    if stats is not None:
        stats["filtered"] = filtered


def cell_count(q: int, k: int) -> int:
    """Canonical cells before filtering."""
    return comb(q - 1 + k - 1, k - 1)


@dataclass(frozen=True)
class QaryEntropyModel:
    """Tangent bounds of ``phi`` and the per-cell linear surrogate.

    ``kappa[c]`` holds the coefficient of each symbol's mass under cell
    ``c`` (parameter slots first, remainder symbol last with coefficient 0)
    and ``const[c]`` the matching constant, so a component with masses
    ``mu`` is bounded by ``kappa[c] @ mu + const[c]`` for any cell.
    """

    q: int
    k: int
    tangent_points: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    cells: list
    kappa: np.ndarray = field(repr=False)
    const: np.ndarray = field(repr=False)
    anchors: np.ndarray = field(repr=False)
    filtered: int = 0

    @classmethod
    def build(cls, q: int, k: int, schedule: str = "midpoint", points=None) -> "QaryEntropyModel":
        t = np.sort(np.asarray(points if points is not None else tangent_points(k, schedule), dtype=np.float64))
        if t.size < 1 or t[0] <= 0 or t[-1] > 0.5:
            raise ValueError("tangent points must lie in (0, 1/2]")
        lo, hi = _region_bounds(t)
        stats: dict = {}
        if points is None:
            cells = list(enumerate_cells(q, t.size, schedule, stats))
        else:
            cells = [Cell(r) for r in combinations_with_replacement(range(t.size), q - 1)
                     if sum(lo[x] for x in r) <= 1.0 + FEAS_TOL]
            stats["filtered"] = cell_count(q, t.size) - len(cells)
        kappa = np.zeros((len(cells), q))
        const = np.zeros(len(cells))
        anchors = np.zeros(len(cells))
        for i, cell in enumerate(cells):
            ts = t[list(cell.regions)]
            raw = 1.0 - ts.sum()
            u = min(max(raw, 1.0 / q), 1.0)
            kappa[i, : q - 1] = np.log2(u / ts)
            # unclamped anchor: the parameter and remainder terms collapse to -log2(u)
            const[i] = -math.log2(u) if u == raw else (ts.sum() + u - 1.0) / LN2 - math.log2(u)
            anchors[i] = u
        slopes = -np.log2(t) - 1.0 / LN2
        return cls(q, int(t.size), t, slopes, t / LN2, lo, hi, cells, kappa, const, anchors, stats["filtered"])

    def g(self, x):
        """Envelope of the ``phi`` tangents; an upper bound of ``phi`` everywhere."""
        x = np.asarray(x, dtype=np.float64)
        return np.min(self.slopes * x[..., None] + self.intercepts, axis=-1)

    def remainder_bound(self, cell: int, x):
        """Bound on ``phi(1 - x)`` used by ``cell``, where ``x`` is the parameter sum."""
        u = self.anchors[cell]
        a, b = phi_tangent(u)
        return a * (1.0 - np.asarray(x, dtype=np.float64)) + b

    def cell_values(self, mu) -> np.ndarray:
        """Surrogate of one component under every cell, best symbol assignment."""
        mu = np.sort(np.asarray(mu, dtype=np.float64))[::-1]
        return np.sort(self.kappa, axis=1) @ mu + self.const

    def surrogate(self, mu) -> float:
        return float(self.cell_values(mu).min())

    def argmin_cell(self, mu) -> int:
        return int(np.argmin(self.cell_values(mu)))


@dataclass(frozen=True)
class QaryResult:
    mapping: WordMapping
    ub_value: float
    true_objective: float
    joint_entropy: float
    placements: int
    placements_checked: int
    cells: int
    cells_filtered: int
    identity_fallback: bool = False

    def __iter__(self):
        return iter((self.mapping, self.ub_value, self.true_objective))

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "mapping"}
        return d


@dataclass(frozen=True)
class DescentWalk:
    init_index: int
    start: tuple
    steps: int
    values: tuple
    final_value: float
    true_value: float
    feasible: bool


@dataclass(frozen=True)
class DescentResult:
    mapping: WordMapping
    value: float
    trace: list
    ub_value: float
    joint_entropy: float
    best_init: int
    identity_fallback: bool = False

    def __iter__(self):
        return iter((self.mapping, self.value, self.trace))


def relabel_symbols(joint: JointDistribution, mapping: WordMapping) -> WordMapping:
    """Compose ``mapping`` with per-component relabelings that sort symbol masses ascending."""
    mu = apply_mapping(joint, mapping).marginals()
    n, q = joint.n, joint.q
    new_label = np.empty((n, q), dtype=np.int64)
    for j in range(n):
        new_label[j, np.argsort(mu[j], kind="stable")] = np.arange(q)
    if np.all(new_label == np.arange(q)):
        return mapping
    return mapping.then(symbol_relabeling(n, q, new_label))


class _Lp:
    """Linear allocation for placements of cells over one joint."""

    def __init__(self, joint: JointDistribution, model: QaryEntropyModel):
        if model.q != joint.q:
            raise ValueError("model and joint use different alphabets")
        self.joint, self.model = joint, model
        self.n, self.q = joint.n, joint.q
        self.digits = word_digits(joint.n, joint.q)
        self.p_desc = np.sort(joint.probs)[::-1]

    def coefficients(self, place) -> tuple[np.ndarray, float]:
        c = np.zeros(self.joint.size)
        for j, cell in enumerate(place):
            c += self.model.kappa[cell][self.digits[:, j]]
        return c, float(self.model.const[list(place)].sum())

    def values(self, places: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
        out = np.empty(len(places))
        kap, const = self.model.kappa, self.model.const
        for s in range(0, len(places), chunk):
            blk = places[s : s + chunk]
            c = np.zeros((len(blk), self.joint.size))
            for j in range(self.n):
                c += kap[blk[:, j]][:, self.digits[:, j]]
            c.sort(axis=1)
            out[s : s + chunk] = c @ self.p_desc + const[blk].sum(axis=1)
        return out

    def solve(self, place):
        c, d = self.coefficients(place)
        mapping, value = allocate_min(c, self.joint, d)
        out = np.empty(self.joint.size)
        out[mapping.perm] = self.joint.probs
        mu = np.stack([np.bincount(self.digits[:, j], weights=out, minlength=self.q) for j in range(self.n)])
        return mapping, value, mu

    def check(self, place, mu) -> tuple[bool, tuple, float]:
        """Feasibility of ``place`` at realized masses, the best cells and their value.

        A placement is feasible when every component's assigned term, with
        the symbol assignment the allocation used, is already the smallest
        surrogate over all cells.
        """
        m = self.model
        ok, best, total = True, [], 0.0
        for j, cell in enumerate(place):
            vals = m.cell_values(mu[j])
            b = int(np.argmin(vals))
            assigned = float(m.kappa[cell] @ mu[j] + m.const[cell])
            if assigned > vals[b] + FEAS_TOL:
                ok = False
            best.append(b)
            total += float(vals[b])
        return ok, tuple(sorted(best)), total


def _placements(n: int, C: int) -> np.ndarray:
    return np.fromiter(
        (c for t in combinations_with_replacement(range(C), n) for c in t), dtype=np.int64
    ).reshape(-1, n)


def _with_identity(joint, mapping, true_obj):
    identity_value = sum_marginal_entropies(joint)
    if identity_value < true_obj:
        return relabel_symbols(joint, WordMapping.identity(joint.n, joint.q)), identity_value, True
    return mapping, true_obj, False


def solve_exhaustive_qary(
    joint: JointDistribution,
    k: int = 8,
    *,
    schedule: str = "midpoint",
    model: QaryEntropyModel | None = None,
    work_cap: int = DEFAULT_WORK_CAP,
) -> QaryResult:
    """Best feasible placement of ``n`` components in the cells.

    Placements are multisets of cells.  All allocation values are computed
    first; feasibility is then checked in ascending value order (ties by
    enumeration index) and the first feasible placement wins.  Raises
    :class:`WorkCapExceeded` when ``placements * q**n`` exceeds ``work_cap``.
    """
    model = model or QaryEntropyModel.build(joint.q, k, schedule)
    C = len(model.cells)
    total = comb(C + joint.n - 1, joint.n)
    if total * joint.size > work_cap:
        raise WorkCapExceeded(
            f"{total} placements x {joint.size} words exceeds the work cap {work_cap}; use objective_descent"
        )
    lp = _Lp(joint, model)
    places = _placements(joint.n, C)
    values = lp.values(places)
    order = np.argsort(values, kind="stable")
    win = None
    for checked, idx in enumerate(order.tolist(), start=1):
        place = tuple(places[idx].tolist())
        mapping, value, mu = lp.solve(place)
        if lp.check(place, mu)[0]:
            win = (mapping, value)
            break
    if win is None:  # the global minimum is always feasible; guard against rounding
        idx = int(order[0])
        mapping, value, _ = lp.solve(tuple(places[idx].tolist()))
        win, checked = (mapping, value), len(order)
    mapping = relabel_symbols(joint, win[0])
    true_obj = sum_marginal_entropies(apply_mapping(joint, mapping))
    mapping, true_obj, fallback = _with_identity(joint, mapping, true_obj)
    return QaryResult(
        mapping=mapping,
        ub_value=float(win[1]),
        true_objective=float(true_obj),
        joint_entropy=entropy(joint.probs),
        placements=int(total),
        placements_checked=int(checked),
        cells=C,
        cells_filtered=model.filtered,
        identity_fallback=fallback,
    )


def objective_descent(
    joint: JointDistribution,
    k: int = 8,
    inits: int = 100,
    seed: int = 0,
    *,
    schedule: str = "midpoint",
    model: QaryEntropyModel | None = None,
    eps: float = DESCENT_EPS,
) -> DescentResult:
    """Cell-hopping heuristic from random placements.

    Each walk solves the allocation for its placement; if the realized
    masses sit in the assumed cells the walk ends with a candidate,
    otherwise it moves to the cells that are best at the realized masses
    and solves again.  A walk also ends when the next value does not drop
    by more than ``eps`` or the next placement was already visited; its
    realized mapping is then scored with the best cells.  Only finished
    walks count against ``inits``.  The returned ``value`` is the exact sum
    of marginal entropies of the best candidate.
    """
    if inits < 1:
        raise ValueError("inits must be at least 1")
    model = model or QaryEntropyModel.build(joint.q, k, schedule)
    lp = _Lp(joint, model)
    rng = np.random.default_rng(seed)
    C = len(model.cells)
    trace, best = [], None
    for i in range(inits):
        place = tuple(sorted(rng.integers(C, size=joint.n).tolist()))
        start, visited = place, {place}
        mapping, value, mu = lp.solve(place)
        values = [value]
        while True:
            ok, nxt, score = lp.check(place, mu)
            if ok:
                final = value
                break
            if nxt in visited:
                final = score
                break
            m2, v2, mu2 = lp.solve(nxt)
            if v2 > value - eps:
                final = score
                break
            visited.add(nxt)
            place, mapping, value, mu = nxt, m2, v2, mu2
            values.append(value)
        mapped = relabel_symbols(joint, mapping)
        true_value = sum_marginal_entropies(apply_mapping(joint, mapped))
        trace.append(DescentWalk(i, start, len(values), tuple(values), float(final), float(true_value), ok))
        if best is None or true_value < best[0]:
            best = (true_value, mapped, final, i)
    true_value, mapping, ub, init = best
    mapping, true_value, fallback = _with_identity(joint, mapping, true_value)
    return DescentResult(
        mapping=mapping,
        value=float(true_value),
        trace=trace,
        ub_value=float(ub),
        joint_entropy=entropy(joint.probs),
        best_init=init,
        identity_fallback=fallback,
    )
