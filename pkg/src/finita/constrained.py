"""Linear mappings over the binary field.

Output bit ``i`` of ``y = A x`` is the parity of ``rows[i] & x``, with bit
``j`` of a word being component ``j + 1``.  ``P(Y_i = 0)`` of every linear
output is read off a Walsh-Hadamard transform of the joint, so evaluating
a matrix costs ``O(n)`` after one ``O(n 2^n)`` transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import JointDistribution, WordMapping, apply_mapping, sum_marginal_entropies
from .errors import BadLength, InfeasibleConfig, Singular, UnsupportedAlphabet

DEFAULT_R2_CAP = 20


@dataclass(frozen=True)
class Gf2Matrix:
    """``n x n`` binary matrix; ``rows[i]`` has bit ``j`` set when ``A[i, j] = 1``."""

    n: int
    rows: tuple

    def __post_init__(self):
        rows = tuple(int(r) for r in self.rows)
        if len(rows) != self.n or any(r < 0 or r >> self.n for r in rows):
            raise ValueError(f"need {self.n} rows of {self.n} bits")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        return cls(n, tuple(1 << i for i in range(n)))

    @classmethod
    def from_array(cls, a) -> "Gf2Matrix":
        a = np.asarray(a, dtype=np.int64) & 1
        return cls(a.shape[0], tuple(int(sum(int(v) << j for j, v in enumerate(row))) for row in a))

    def to_array(self) -> np.ndarray:
        return np.array([[r >> j & 1 for j in range(self.n)] for r in self.rows], dtype=np.int64)

    def __matmul__(self, other: "Gf2Matrix") -> "Gf2Matrix":
        out = []
        for r in self.rows:
            acc = 0
            for k in range(self.n):
                if r >> k & 1:
                    acc ^= other.rows[k]
            out.append(acc)
        return Gf2Matrix(self.n, tuple(out))

    def row_weights(self) -> list[int]:
        return [bin(r).count("1") for r in self.rows]

    def is_banded(self) -> bool:
        n = self.n
        return all(r & ~((1 << i) | (1 << (i + 1) % n)) == 0 for i, r in enumerate(self.rows))

    def to_dict(self) -> dict:
        return {"n": self.n, "rows": self.to_array().tolist()}


def gf2_rank(m: Gf2Matrix) -> int:
    rows = list(m.rows)
    rank = 0
    for bit in range(m.n):
        pivot = next((i for i in range(rank, len(rows)) if rows[i] >> bit & 1), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] >> bit & 1:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


def gf2_invertible(m: Gf2Matrix) -> bool:
    return gf2_rank(m) == m.n


def _banded(n: int, diag: int, sup: int) -> Gf2Matrix:
    return Gf2Matrix(n, tuple((diag >> i & 1) << i | (sup >> i & 1) << ((i + 1) % n) for i in range(n)))


def enumerate_banded_invertible(n: int) -> list[Gf2Matrix]:
    """All invertible matrices supported on the diagonal and cyclic superdiagonal.

    Only the identity and the cyclic shift contribute to the determinant,
    so the matrix is invertible exactly when one of the two bands is full
    and the other is not: ``2 (2^n - 1)`` matrices.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    full = (1 << n) - 1
    out = [_banded(n, full, s) for s in range(full)]
    out += [_banded(n, d, full) for d in range(full)]
    return out


def brute_force_banded_invertible(n: int) -> list[Gf2Matrix]:
    """Invertible matrices among all ``2^(2n)`` banded candidates, by elimination."""
    seen, out = set(), []
    for d in range(1 << n):
        for s in range(1 << n):
            m = _banded(n, d, s)
            if m.rows not in seen and gf2_invertible(m):
                seen.add(m.rows)
                out.append(m)
    return out


def linear_word_map(m: Gf2Matrix) -> WordMapping:
    """Permutation of words induced by ``x -> A x``."""
    if not gf2_invertible(m):
        raise Singular("matrix is singular over the binary field")
    words = np.arange(1 << m.n, dtype=np.int64)
    out = np.zeros_like(words)
    for i, r in enumerate(m.rows):
        out |= (_parity(words & r)) << i
    return WordMapping(m.n, 2, out)


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    shift = 32
    while shift:
        x ^= x >> shift
        shift //= 2
    return x & 1


def apply_linear_map(joint: JointDistribution, m: Gf2Matrix) -> JointDistribution:
    if joint.q != 2:
        raise UnsupportedAlphabet("linear maps need a binary alphabet")
    if m.n != joint.n:
        raise ValueError("matrix and joint differ in n")
    return apply_mapping(joint, linear_word_map(m))


def walsh_hadamard(probs) -> np.ndarray:
    """``W[s] = sum_x p(x) (-1)^{|s & x|}``; ``P(parity(s & X) = 0) = (1 + W[s]) / 2``."""
    a = np.array(probs, dtype=np.float64)
    h = 1
    while h < a.size:
        a = a.reshape(-1, 2, h)
        a = np.concatenate([a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]], axis=1)
        a = a.reshape(-1)
        h *= 2
    return a


def _hb(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -(x * math.log2(x) + (1.0 - x) * math.log2(1.0 - x))


def linear_objective(wht, m: Gf2Matrix) -> float:
    """Sum of output-bit entropies of ``A x`` from the transform table ``wht``."""
    return float(sum(_hb((1.0 + float(wht[r])) / 2.0) for r in m.rows))


def search_r2(joint: JointDistribution, *, max_n: int = DEFAULT_R2_CAP, permute_outputs: bool = False):
    """Best banded invertible matrix for the sum of marginal entropies.

    Ties go to the first matrix in enumeration order.  ``permute_outputs``
    reorders the winner's output bits by decreasing ``P(Y_i = 0)``; the
    value does not change.
    """
    if joint.q != 2:
        raise UnsupportedAlphabet("linear search needs a binary alphabet")
    if joint.n > max_n:
        raise ValueError(f"n={joint.n} exceeds the configured cap {max_n}")
    if joint.n == 1:
        return Gf2Matrix.identity(1), sum_marginal_entropies(joint)
    wht = walsh_hadamard(joint.probs).tolist()
    best, best_value = None, math.inf
    for m in enumerate_banded_invertible(joint.n):
        v = linear_objective(wht, m)
        if v < best_value:
            best, best_value = m, v
    if permute_outputs:
        pi = [(1.0 + wht[r]) / 2.0 for r in best.rows]
        order = sorted(range(joint.n), key=lambda i: (-pi[i], i))
        best = Gf2Matrix(joint.n, tuple(best.rows[i] for i in order))
    return best, best_value


@dataclass(frozen=True)
class ImmuneConfig:
    """Settings of the clonal-selection search.

    Each clone of an individual with affinity ``a = 1 - sum H(Y_i) / n``
    receives a number of bit flips drawn uniformly from
    ``1..max(1, ceil(beta * (1 - a) * n))``, so low-affinity individuals
    can move further.  ``fresh`` random
    individuals replace the worst ones every generation.
    """

    population: int = 20
    clones: int = 5
    beta: float = 2.0
    fresh: int = 4
    generations: int = 100
    r: int = 2
    seed: int = 0
    retries: int = 20
    initial: tuple | None = field(default=None, repr=False)

    def validate(self, n: int) -> None:
        if self.r < 1:
            raise InfeasibleConfig("no invertible matrix has all row weights below 1")
        if self.population < 1 or self.clones < 0 or self.generations < 0:
            raise InfeasibleConfig("population must be positive and counts non-negative")
        if not 0 <= self.fresh <= self.population:
            raise InfeasibleConfig("fresh must lie between 0 and the population size")
        if self.initial is not None:
            for m in self.initial:
                if m.n != n or not _feasible(m, self.r):
                    raise InfeasibleConfig("initial individuals must be invertible with row weight <= r")


def _feasible(m: Gf2Matrix, r: int) -> bool:
    return max(m.row_weights()) <= r and gf2_invertible(m)


def random_feasible_matrix(n: int, r: int, rng, tries: int = 1000) -> Gf2Matrix:
    """Random invertible matrix with row weight at most ``r``.

    Rows are drawn with a uniform weight in ``1..r``; after ``tries``
    singular draws a random permutation matrix is returned.
    """
    r = min(r, n)
    for _ in range(tries):
        rows = []
        for _ in range(n):
            w = int(rng.integers(1, r + 1))
            bits = rng.choice(n, size=w, replace=False)
            rows.append(int(sum(1 << int(b) for b in bits)))
        m = Gf2Matrix(n, tuple(rows))
        if gf2_invertible(m):
            return m
    return Gf2Matrix(n, tuple(1 << int(j) for j in rng.permutation(n)))


def _mutate(m: Gf2Matrix, flips: int, r: int, rng) -> Gf2Matrix:
    rows = list(m.rows)
    n = m.n
    picked: set = set()
    while len(picked) < min(flips, n * n):
        picked.add(int(rng.integers(n * n)))
    for pos in sorted(picked):
        i, j = divmod(pos, n)
        rows[i] ^= 1 << j
    for i, row in enumerate(rows):
        w = bin(row).count("1")
        if w > r:
            bits = [j for j in range(n) if row >> j & 1]
            for j in rng.choice(bits, size=w - r, replace=False):
                rows[i] &= ~(1 << int(j))
    return Gf2Matrix(n, tuple(rows))


@dataclass(frozen=True)
class ImmuneResult:
    matrix: Gf2Matrix
    value: float
    history: list

    def __iter__(self):
        return iter((self.matrix, self.value, self.history))


def immune_search(joint: JointDistribution, cfg: ImmuneConfig = ImmuneConfig()) -> ImmuneResult:
    """Clonal-selection search over invertible matrices with row weight ``<= cfg.r``.

    Every generation each individual is cloned and mutated (bit flips, then
    excess bits of heavy rows are cleared; singular clones are re-mutated up
    to ``cfg.retries`` times and otherwise dropped), the best member of each
    family survives, and the ``cfg.fresh`` worst survivors are replaced by
    random feasible matrices.  The best individual ever seen is kept, so
    ``history`` (best value after each generation, starting with the
    initial population) never increases.
    """
    if joint.q != 2:
        raise UnsupportedAlphabet("linear search needs a binary alphabet")
    n = joint.n
    cfg.validate(n)
    rng = np.random.default_rng(cfg.seed)
    wht = walsh_hadamard(joint.probs).tolist()

    def score(m):
        return linear_objective(wht, m)

    if cfg.initial is not None:
        pop = list(cfg.initial)
    else:
        pop = [random_feasible_matrix(n, cfg.r, rng) for _ in range(cfg.population)]
    vals = [score(m) for m in pop]
    b = int(np.argmin(vals))
    best, best_value = pop[b], vals[b]
    history = [best_value]

    for _ in range(cfg.generations):
        nxt, nxt_vals = [], []
        for m, v in zip(pop, vals):
            affinity = 1.0 - v / n
            top = max(1, math.ceil(cfg.beta * (1.0 - affinity) * n))
            fam, fam_vals = [m], [v]
            for _ in range(cfg.clones):
                for _ in range(cfg.retries + 1):
                    c = _mutate(m, int(rng.integers(1, top + 1)), cfg.r, rng)
                    if gf2_invertible(c):
                        fam.append(c)
                        fam_vals.append(score(c))
                        break
            i = int(np.argmin(fam_vals))
            nxt.append(fam[i])
            nxt_vals.append(fam_vals[i])
        if cfg.fresh:
            worst = np.argsort(nxt_vals, kind="stable")[::-1][: cfg.fresh]
            for i in worst.tolist():
                nxt[i] = random_feasible_matrix(n, cfg.r, rng)
                nxt_vals[i] = score(nxt[i])
        pop, vals = nxt, nxt_vals
        i = int(np.argmin(vals))
        if vals[i] < best_value:
            best, best_value = pop[i], vals[i]
        history.append(best_value)
    return ImmuneResult(best, float(best_value), history)


def is_balanced(truth_table) -> bool:
    """True when the table has as many ones as zeros."""
    t = np.asarray(truth_table).ravel()
    if t.size == 0 or t.size & (t.size - 1):
        raise BadLength("truth table length must be a power of two")
    return int(np.count_nonzero(t)) * 2 == t.size


def output_truth_tables(mapping: WordMapping) -> np.ndarray:
    """``(n, 2^n)`` table: row ``i`` is output bit ``i`` as a function of the input word."""
    if mapping.q != 2:
        raise UnsupportedAlphabet("truth tables need a binary alphabet")
    return np.stack([(mapping.perm >> i) & 1 for i in range(mapping.n)])
