"""Structured and random joint distributions.

Includes the fixtures used for exact recovery, the Markov and block-i.i.d.
sources whose probability vectors repeat heavily, and finite Zipf laws.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .core import JointDistribution, MarginalParams, WordMapping, apply_mapping, word_digits
from .errors import DivisibilityError, ParameterOutOfRange

PI_RANGE = (0.05, 0.45)


def zipf(q: int, s: float) -> np.ndarray:
    """Finite Zipf law: entry ``k`` (1-based) proportional to ``k**-s``."""
    if q < 1 or s <= 0:
        raise ValueError("zipf needs q >= 1 and s > 0")
    w = np.arange(1, q + 1, dtype=np.float64) ** -s
    return w / w.sum()


def product_joint(pi) -> JointDistribution:
    """Independent binary components with ``P(Y_i = 0) = pi[i-1]``."""
    if isinstance(pi, MarginalParams):
        pi = pi.pi
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 1 or pi.size == 0:
        raise ValueError("pi must be a non-empty vector")
    if np.any(pi <= 0) or np.any(pi >= 1):
        raise ParameterOutOfRange("every pi must lie in (0, 1)")
    return JointDistribution(pi.size, 2, product_probs(pi))


def product_probs(pi) -> np.ndarray:
    """Word probabilities of independent bits, without validation."""
    probs = np.ones(1)
    for p in pi:
        probs = np.outer([p, 1.0 - p], probs).ravel()
    return probs


def product_joint_qary(marginals) -> JointDistribution:
    """Independent components with the given ``(n, q)`` marginals."""
    m = np.atleast_2d(np.asarray(marginals, dtype=np.float64))
    n, q = m.shape
    d = word_digits(n, q)
    probs = np.prod(m[np.arange(n), d], axis=1)
    return JointDistribution(n, q, probs / probs.sum())


def random_word_mapping(n: int, q: int, rng) -> WordMapping:
    return WordMapping(n, q, rng.permutation(q**n))


def random_product_scrambled(n: int, seed: int = 0):
    """Scrambled product source with known ground truth.

    Returns ``(joint, pi, mapping)`` where ``joint`` is the product of
    Bernoulli components with ``P(Y_i = 0) = pi`` pushed through ``mapping``.
    """
    rng = np.random.default_rng(seed)
    pi = rng.uniform(*PI_RANGE, size=n)
    mapping = random_word_mapping(n, 2, rng)
    return apply_mapping(product_joint(pi), mapping), pi, mapping


def random_joint(n: int, q: int = 2, rng=None, alpha: float = 1.0) -> JointDistribution:
    """Dirichlet(alpha) draw over all ``q**n`` words."""
    rng = np.random.default_rng(rng)
    return JointDistribution(n, q, rng.dirichlet(np.full(q**n, alpha)))


@dataclass(frozen=True)
class MarkovSpec:
    """Stationary first-order binary Markov chain over ``n`` positions.

    ``flip`` is P(0 -> 1).  ``flip_back`` is P(1 -> 0) and defaults to
    ``flip`` (the symmetric chain).  The first position is drawn from the
    stationary law, which is [1/2, 1/2] in the symmetric case.
    """

    n: int
    flip: float
    flip_back: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        for v in (self.flip, self.back):
            if not 0 < v < 1:
                raise ParameterOutOfRange("transition probabilities must lie in (0, 1)")

    @property
    def back(self) -> float:
        return self.flip if self.flip_back is None else self.flip_back

    @property
    def init(self) -> np.ndarray:
        a, b = self.flip, self.back
        return np.array([b / (a + b), a / (a + b)])


MARKOV_CAP = 24


def markov_joint(spec: MarkovSpec) -> JointDistribution:
    """Dense joint of the chain; bit 1 (least significant) is the first position."""
    if spec.n > MARKOV_CAP:
        raise ValueError(f"n={spec.n} exceeds the dense cap {MARKOV_CAP}")
    n = spec.n
    d = word_digits(n, 2)
    a, b = spec.flip, spec.back
    trans = np.array([[1 - a, a], [b, 1 - b]])
    probs = spec.init[d[:, 0]].copy()
    for i in range(1, n):
        probs *= trans[d[:, i - 1], d[:, i]]
    return JointDistribution(n, 2, probs)


def markov_class_count(n: int) -> int:
    """Number of distinct (first bit, number of ones, number of transitions) triples.

    Every word of a stationary binary first-order chain has a probability
    determined by this triple, so this counts the probability classes; it
    equals ``n*(n-1) + 2``.  A symmetric chain collapses the classes further,
    since there only the transition count matters.
    """
    d = word_digits(n, 2)
    ones = d.sum(axis=1)
    trans = (d[:, 1:] != d[:, :-1]).sum(axis=1) if n > 1 else np.zeros(2**n, dtype=np.int64)
    return len(set(zip(d[:, 0].tolist(), ones.tolist(), trans.tolist())))


def count_unique_probs(joint, tol: float = 1e-12) -> int:
    """Number of groups of probabilities equal up to relative tolerance ``tol``.

    Groups are formed by chaining sorted neighbours with
    ``|a - b| <= tol * max(a, b)``.
    """
    p = joint.probs if isinstance(joint, JointDistribution) else np.asarray(joint, dtype=np.float64)
    if p.size == 0:
        return 0
    s = np.sort(p)
    gaps = np.diff(s) > tol * np.maximum(s[1:], s[:-1])
    return int(gaps.sum()) + 1


def block_iid_joint(n: int, r: int, block_dist) -> JointDistribution:
    """Product of ``n // r`` copies of ``block_dist`` (a law over ``2**r`` words)."""
    if r < 1 or n % r:
        raise DivisibilityError(f"block size {r} does not divide n={n}")
    block = np.asarray(block_dist, dtype=np.float64)
    if block.size != 2**r:
        raise ValueError(f"block_dist must have {2**r} entries")
    probs = np.ones(1)
    # later blocks occupy the more significant bits
    for _ in range(n // r):
        probs = np.outer(block, probs).ravel()
    return JointDistribution(n, 2, probs)


def block_iid_unique_bound(n: int, r: int) -> int:
    m = n // r
    return comb(m + 2**r - 1, m)


def bss_mixture(q: int, s: float, seed: int = 0) -> tuple[JointDistribution, np.ndarray]:
    """Two i.i.d. Zipf sources mixed as ``(X1, sigma(X1 + X2 mod q))``.

    ``sigma`` is a seeded random relabelling of the second output's symbols.
    Returns the mixed joint and ``sigma``.
    """
    rng = np.random.default_rng(seed)
    p = zipf(q, s)
    sigma = rng.permutation(q)
    out = np.zeros(q * q)
    for x1 in range(q):
        for x2 in range(q):
            y2 = sigma[(x1 + x2) % q]
            out[x1 + q * y2] += p[x1] * p[x2]
    return JointDistribution(2, q, out), sigma
