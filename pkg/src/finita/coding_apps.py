"""Experiment harnesses: blind source separation and block-wise source coding.

Sample data are ``N`` words over ``q**n`` symbols, kept as integers; blocks
of binary components are cut out and written back with bit operations.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .branch_bound import solve_exact
from .core import JointDistribution, WordMapping, apply_mapping, binary_entropy, entropy, sum_marginal_entropies
from .errors import BadLength, DivisibilityError, EmptyBlock, IndexOutOfRange, RegimeViolation
from .generators import bss_mixture
from .plr import solve_plr
from .qary import objective_descent, solve_exhaustive_qary


class RegimeWarning(UserWarning):
    """A cost formula is used outside the regime it approximates."""


@dataclass(frozen=True)
class SampleSet:
    """``N`` observed words of an ``n``-component, alphabet-``q`` source."""

    n: int
    q: int
    words: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.words, dtype=np.int64).ravel()
        if w.size == 0:
            raise BadLength("a sample set needs at least one word")
        if w.min() < 0 or w.max() >= self.q**self.n:
            raise IndexOutOfRange(f"words must lie in [0, {self.q ** self.n})")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @property
    def N(self) -> int:
        return int(self.words.size)

    def digits(self) -> np.ndarray:
        """``(N, n)`` digit matrix, column ``i`` is component ``i + 1``."""
        cols = [(self.words // self.q**i) % self.q for i in range(self.n)]
        return np.stack(cols, axis=1).astype(np.int64)

    def save(self, path) -> None:
        """Newline-separated words plus a ``.json`` sidecar holding ``N, n, q``."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        np.savetxt(tmp, self.words, fmt="%d")
        tmp.replace(path)
        Path(str(path) + ".json").write_text(json.dumps({"N": self.N, "n": self.n, "q": self.q}))

    @classmethod
    def load(cls, path) -> "SampleSet":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        words = np.loadtxt(path, dtype=np.int64, ndmin=1)
        if words.size != int(meta["N"]):
            raise BadLength(f"sidecar says N={meta['N']} but the file holds {words.size} words")
        return cls(int(meta["n"]), int(meta["q"]), words)


def zipf_samples(N: int, s: float = 1.4, n: int = 24, seed: int = 0) -> SampleSet:
    """Unbounded Zipf draws folded onto ``n``-bit words as ``(v - 1) mod 2**n``."""
    v = np.random.default_rng(seed).zipf(s, N)
    return SampleSet(n, 2, (v - 1) % (1 << n))


@dataclass(frozen=True)
class BlockPartition:
    """Equal-size disjoint blocks of 0-based component indices."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(int(c) for c in b) for b in self.blocks)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise EmptyBlock("every block needs at least one component")
        if len({len(b) for b in blocks}) != 1:
            raise DivisibilityError("all blocks must have the same size")
        flat = [c for b in blocks for c in b]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("blocks must be disjoint and cover components 0..n-1")
        object.__setattr__(self, "blocks", blocks)

    @property
    def B(self) -> int:
        return len(self.blocks)

    @property
    def b(self) -> int:
        return len(self.blocks[0])

    @property
    def n(self) -> int:
        return self.B * self.b

    @classmethod
    def from_order(cls, order, B: int) -> "BlockPartition":
        """Cut a component ordering into ``B`` consecutive blocks."""
        order = list(order)
        if B < 1 or len(order) % B:
            raise DivisibilityError(f"{len(order)} components cannot form {B} equal blocks")
        b = len(order) // B
        return cls(tuple(tuple(order[j * b : (j + 1) * b]) for j in range(B)))

    @classmethod
    def random(cls, n: int, B: int, rng) -> "BlockPartition":
        return cls.from_order(rng.permutation(n).tolist(), B)


def _bit_planes(s: "SampleSet") -> np.ndarray:
    """``(n, N)`` uint8 array; row ``i`` holds bit ``i`` of every word."""
    return np.stack([((s.words >> i) & 1).astype(np.uint8) for i in range(s.n)])


def _subwords(data: np.ndarray, block, q: int) -> np.ndarray:
    """Sub-word on ``block``: component ``block[j]`` becomes digit ``j + 1``.

    ``data`` is either the bit planes of binary samples or the word array.
    """
    if data.ndim == 2:
        out = np.zeros(data.shape[1], dtype=np.int32)
        for j, c in enumerate(block):
            out |= data[c].astype(np.int32) << j
        return out
    out = np.zeros(data.shape[0], dtype=np.int64)
    for j, c in enumerate(block):
        out += (data // q**c) % q * q**j
    return out


def _empirical_entropy(sub: np.ndarray, size: int) -> float:
    counts = np.bincount(sub, minlength=size)
    return entropy(counts[counts > 0] / sub.size)


def empirical_joint(s: SampleSet, block=None) -> JointDistribution:
    """Empirical distribution (counts / N) of the sub-word on ``block``.

    Component ``block[j]`` becomes digit ``j + 1`` of the sub-word; the
    default block is every component in order.
    """
    block = tuple(range(s.n)) if block is None else tuple(block)
    if not block:
        raise EmptyBlock("block must name at least one component")
    if any(c < 0 or c >= s.n for c in block):
        raise IndexOutOfRange("block component out of range")
    size = s.q ** len(block)
    sub = _subwords(s.words, block, s.q) if block != tuple(range(s.n)) else s.words
    return JointDistribution(len(block), s.q, np.bincount(sub, minlength=size) / s.N)


def empirical_entropy(s: SampleSet) -> float:
    _, counts = np.unique(s.words, return_counts=True)
    return entropy(counts / s.N)


@dataclass(frozen=True)
class CodingCostModel:
    """Sizes entering the coding-cost formulas."""

    N: int
    q: int
    n: int
    B: int = 1
    b: int | None = None

    def __post_init__(self):
        if self.b is None:
            object.__setattr__(self, "b", self.n // self.B)
        if self.B * self.b != self.n:
            raise DivisibilityError("B * b must equal n")

    @property
    def large_alphabet(self) -> bool:
        return self.N < self.q**self.n

    @property
    def small_alphabet_blocks(self) -> bool:
        return self.N > self.q**self.b

    def single_block(self, H: float) -> float:
        return self.N * H + self.N * (self.n * math.log2(self.q) - math.log2(self.N))

    def block_overhead(self) -> float:
        qb = self.q**self.b
        return self.B * (qb - 1) / 2 * (math.log2(self.N) - self.b * math.log2(self.q))

    def blockwise(self, sum_block_entropies: float) -> float:
        if not self.small_alphabet_blocks:
            raise RegimeViolation(f"N={self.N} must exceed q^b={self.q ** self.b}")
        return self.N * sum_block_entropies + self.block_overhead()

    def iteration_cost(self, exact_table: bool = False) -> float:
        """Description cost of one iteration's block mappings and component shuffle."""
        qb = self.q**self.b
        table = math.lgamma(qb + 1) / math.log(2) if exact_table else self.b * qb
        return self.B * table + self.n * math.log2(self.n)


def single_block_cost(s: SampleSet) -> float:
    """``N * H + N * log2(q^n / N)``; warns when ``N >= q^n``."""
    model = CodingCostModel(s.N, s.q, s.n)
    if not model.large_alphabet:
        warnings.warn("single-block cost assumes N < q^n", RegimeWarning, stacklevel=2)
    return model.single_block(empirical_entropy(s))


def block_entropies(s: SampleSet, p: BlockPartition, data: np.ndarray | None = None) -> list[float]:
    """Empirical entropy of every block of ``data`` (default: the samples)."""
    if data is None:
        data = _bit_planes(s) if s.q == 2 else s.words
    size = s.q**p.b
    return [_empirical_entropy(_subwords(data, blk, s.q), size) for blk in p.blocks]


def blockwise_cost(s: SampleSet, p: BlockPartition) -> float:
    """``N * sum_j H(block j) + B * (q^b - 1)/2 * log2(N / q^b)``."""
    if p.n != s.n:
        raise DivisibilityError("partition and samples differ in n")
    model = CodingCostModel(s.N, s.q, s.n, p.B, p.b)
    return model.blockwise(sum(block_entropies(s, p)))


@dataclass(frozen=True)
class Iteration:
    index: int
    partition: BlockPartition
    H_m: float
    H_b: float
    accepted: bool
    incumbent_H_m: float
    incumbent_H_b: float
    mappings: tuple = field(default=(), repr=False)


@dataclass
class Algorithm2Trace:
    """Iteration 0 is the untouched data under the first random partition."""

    N: int
    n: int
    q: int
    B: int
    joint_entropy: float
    iterations: list

    @property
    def H_m(self) -> np.ndarray:
        return np.array([it.incumbent_H_m for it in self.iterations])

    @property
    def H_b(self) -> np.ndarray:
        return np.array([it.incumbent_H_b for it in self.iterations])

    @property
    def min_H_b(self) -> float:
        return float(self.H_b.min())

    def rows(self) -> list[tuple]:
        return [(it.index, it.H_m, it.H_b, int(it.accepted)) for it in self.iterations]


def _marginal_sum(bits: np.ndarray) -> float:
    return float(binary_entropy(bits.mean(axis=1)).sum())


def _block_solver(solver: str, k: int, schedule: str):
    if solver == "plr":
        return lambda j: solve_plr(j, k, schedule=schedule).mapping
    if solver == "bb":
        return lambda j: solve_exact(j, max_seconds=30.0).mapping
    raise ValueError("solver must be 'plr' or 'bb'")


def algorithm2(
    s: SampleSet,
    B: int,
    I: int = 100,
    k: int = 8,
    seed: int = 0,
    *,
    solver: str = "plr",
    schedule: str = "midpoint",
    keep_mappings: bool = False,
) -> Algorithm2Trace:
    """Alternate random block partitions with per-block decorrelation.

    Each iteration shuffles the components into ``B`` blocks, replaces
    every block of the current data by the solver's mapping of it, and
    computes the new marginal sum ``H_m`` and block-entropy sum ``H_b``.
    The new data become the incumbent only if ``H_m`` does not exceed the
    incumbent's; otherwise the iteration is rolled back.
    """
    if s.q != 2:
        raise ValueError("block coding works on binary words")
    if s.n % B:
        raise DivisibilityError(f"{s.n} components cannot form {B} equal blocks")
    rng = np.random.default_rng(seed)
    solve = _block_solver(solver, k, schedule)
    bits = _bit_planes(s)
    first = BlockPartition.random(s.n, B, rng)
    hm = _marginal_sum(bits)
    hb = float(sum(block_entropies(s, first, bits)))
    its = [Iteration(0, first, hm, hb, True, hm, hb)]
    size = 1 << (s.n // B)
    for i in range(1, I + 1):
        part = BlockPartition.random(s.n, B, rng)
        subs, hbs, maps, h_m = [], [], [], 0.0
        for blk in part.blocks:
            sub = _subwords(bits, blk, 2)
            joint = JointDistribution(len(blk), 2, np.bincount(sub, minlength=size) / s.N)
            m = solve(joint)
            before = sum_marginal_entropies(joint)
            after = sum_marginal_entropies(apply_mapping(joint, m))
            if after > before:
                m, after = WordMapping.identity(len(blk), 2), before
            subs.append(sub)
            maps.append(m)
            hbs.append(entropy(joint.probs))
            # the blocks cover every component, so their marginal sums add up to H_m
            h_m += after
        h_b = float(sum(hbs))
        accept = h_m <= hm
        if accept:
            bits = bits.copy()
            for blk, sub, m in zip(part.blocks, subs, maps):
                new = m.perm[sub]
                for j, c in enumerate(blk):
                    bits[c] = (new >> j) & 1
            hm, hb = h_m, h_b
        its.append(Iteration(i, part, h_m, h_b, accept, hm, hb, tuple(maps) if keep_mappings else ()))
    return Algorithm2Trace(s.N, s.n, s.q, B, empirical_entropy(s), its)


@dataclass(frozen=True)
class TotalCost:
    I0: int
    bits: float
    best_I0: int
    best_bits: float
    curve: np.ndarray = field(repr=False)


def total_cost(trace: Algorithm2Trace, model: CodingCostModel | None = None, I0: int | None = None,
               *, exact_table: bool = False) -> TotalCost:
    """Cost of stopping after ``I0`` iterations, and the best stopping point.

    ``N * H_b(I0) + B (q^b - 1)/2 log2(N / q^b) + I0 * (B b q^b + n log2 n)``
    with ``H_b`` the incumbent's block-entropy sum.  ``exact_table``
    charges ``log2((q^b)!)`` per block mapping instead of ``b q^b``.
    """
    model = model or CodingCostModel(trace.N, trace.q, trace.n, trace.B)
    hb = trace.H_b
    steps = np.arange(hb.size)
    curve = trace.N * hb + model.block_overhead() + steps * model.iteration_cost(exact_table)
    if I0 is None:
        I0 = int(np.argmin(curve))
    if not 0 <= I0 < hb.size:
        raise IndexOutOfRange(f"I0 must lie in [0, {hb.size - 1}]")
    best = int(np.argmin(curve))
    return TotalCost(I0, float(curve[I0]), best, float(curve[best]), curve)


@dataclass(frozen=True)
class NaiveResult:
    best: float
    partition: BlockPartition
    values: np.ndarray = field(repr=False)


def naive_block_search(s: SampleSet, B: int, trials: int = 1000, seed: int = 0) -> NaiveResult:
    """Lowest block-entropy sum over random component shuffles, no mappings applied."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    data = _bit_planes(s) if s.q == 2 else s.words
    values, best = np.empty(trials), None
    for t in range(trials):
        part = BlockPartition.random(s.n, B, rng)
        values[t] = sum(block_entropies(s, part, data))
        if best is None or values[t] < values[best[0]]:
            best = (t, part)
    return NaiveResult(float(values[best[0]]), best[1], values)


def bss_experiment(q: int, s: float = 1.6, method: str = "exhaustive", k: int = 8, inits: int = 100,
                   seed: int = 0) -> dict:
    """Mix two i.i.d. Zipf sources and try to separate them again."""
    joint, _ = bss_mixture(q, s, seed)
    if method == "exhaustive":
        res = solve_exhaustive_qary(joint, k)
        found = res.true_objective
    elif method == "descent":
        found = objective_descent(joint, k, inits, seed).value
    else:
        raise ValueError("method must be 'exhaustive' or 'descent'")
    h = entropy(joint.probs)
    return {
        "q": q,
        "joint_entropy": h,
        "sum_marginals_input": sum_marginal_entropies(joint),
        "sum_marginals_found": float(found),
        "gap": float(found - h),
    }


def codebook_experiment(freqs, k: int = 8) -> dict:
    """Re-encode 8-bit symbols with frequencies ``freqs`` to lower the marginal sum."""
    f = np.asarray(freqs, dtype=np.float64).ravel()
    if f.size != 256:
        raise BadLength("a codebook table has 256 entries")
    if np.any(f < 0) or f.sum() <= 0:
        raise ValueError("frequencies must be non-negative with a positive total")
    joint = JointDistribution(8, 2, f / f.sum())
    res = solve_plr(joint, k)
    return {
        "joint_entropy": entropy(joint.probs),
        "sum_marginals_input": sum_marginal_entropies(joint),
        "sum_marginals_found": res.true_objective,
        "mapping": res.mapping,
    }
