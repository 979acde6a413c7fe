"""Distributions over finite-alphabet words, word mappings and entropy functionals.

Words are integers in ``[0, q**n)``.  Component 1 is the least-significant
base-``q`` digit, so digit ``i`` (1-based) of word ``w`` is
``(w // q**(i-1)) % q``.  All entropies are in bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    IndexOutOfRange,
    NegativeMass,
    NotBijective,
    NotNormalized,
    SizeMismatch,
    UnsupportedAlphabet,
)

NEG_TOL = 1e-12
NORM_TOL = 1e-9


def _as_prob_vector(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise SizeMismatch(f"expected a 1-d probability vector, got shape {arr.shape}")
    if arr.size and arr.min() < -NEG_TOL:
        raise NegativeMass(f"entry {arr.min():.3e} is negative")
    total = arr.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise NotNormalized(f"probabilities sum to {total!r}")
    return np.clip(arr, 0.0, None)


def _plogp(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz])
    return out


def entropy(p) -> float:
    """Shannon entropy in bits; zero entries contribute nothing."""
    arr = _as_prob_vector(p)
    # np.sum is pairwise, which keeps the 1e-12 invariants honest for 2**24 words
    return float(max(-np.sum(_plogp(arr)), 0.0))


def binary_entropy(x):
    """h_b(x) elementwise, with h_b(0) = h_b(1) = 0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.clip(1.0 - x, 0.0, 1.0)
    x = np.clip(x, 0.0, 1.0)
    out = -(_plogp(np.atleast_1d(x)) + _plogp(np.atleast_1d(y)))
    return out.reshape(x.shape) if x.shape else float(out[0])


@lru_cache(maxsize=64)
def word_digits(n: int, q: int) -> np.ndarray:
    """``(q**n, n)`` int array; column ``i`` is the digit of component ``i+1``."""
    words = np.arange(q**n, dtype=np.int64)
    cols = [(words // q**i) % q for i in range(n)]
    out = np.stack(cols, axis=1) if cols else np.zeros((1, 0), dtype=np.int64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class JointDistribution:
    n: int
    q: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.q < 2:
            raise UnsupportedAlphabet("q must be at least 2")
        arr = _as_prob_vector(self.probs)
        if arr.size != self.q**self.n:
            raise SizeMismatch(f"need {self.q**self.n} probabilities, got {arr.size}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def size(self) -> int:
        return self.q**self.n

    def tensor(self) -> np.ndarray:
        """View as an n-d array; axis ``n - i`` belongs to component ``i``."""
        return self.probs.reshape((self.q,) * self.n)

    def marginals(self) -> np.ndarray:
        """``(n, q)`` array of every component marginal."""
        t = self.tensor()
        out = np.empty((self.n, self.q))
        for i in range(self.n):
            axis = self.n - 1 - i
            others = tuple(a for a in range(self.n) if a != axis)
            out[i] = t.sum(axis=others) if others else t
        return out

    def to_dict(self) -> dict:
        return {"n": self.n, "q": self.q, "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict, renormalize: bool = False) -> "JointDistribution":
        probs = np.asarray(d["probs"], dtype=np.float64)
        if renormalize:
            probs = np.clip(probs, 0.0, None)
            probs = probs / probs.sum()
        return cls(int(d["n"]), int(d["q"]), probs)

    @classmethod
    def uniform(cls, n: int, q: int = 2) -> "JointDistribution":
        return cls(n, q, np.full(q**n, 1.0 / q**n))


@dataclass(frozen=True)
class WordMapping:
    """Bijection on word indices: word ``w`` is sent to ``perm[w]``."""

    n: int
    q: int
    perm: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.perm, dtype=np.int64)
        size = self.q**self.n
        if arr.shape != (size,):
            raise SizeMismatch(f"perm must have {size} entries, got {arr.shape}")
        seen = np.zeros(size, dtype=bool)
        if arr.min() < 0 or arr.max() >= size:
            raise NotBijective("perm has entries out of range")
        seen[arr] = True
        if not seen.all():
            raise NotBijective("perm is not a bijection")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "perm", arr)

    @classmethod
    def identity(cls, n: int, q: int = 2) -> "WordMapping":
        return cls(n, q, np.arange(q**n))

    def inverse(self) -> "WordMapping":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return WordMapping(self.n, self.q, inv)

    def then(self, other: "WordMapping") -> "WordMapping":
        """Apply ``self`` first, then ``other``."""
        if (other.n, other.q) != (self.n, self.q):
            raise SizeMismatch("mappings act on different word spaces")
        return WordMapping(self.n, self.q, other.perm[self.perm])

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.perm, np.arange(self.perm.size)))

    def to_dict(self) -> dict:
        return {"n": self.n, "q": self.q, "perm": self.perm.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "WordMapping":
        return cls(int(d["n"]), int(d["q"]), np.asarray(d["perm"], dtype=np.int64))


@dataclass(frozen=True)
class MarginalParams:
    """Per-component marginals; ``pi`` is P(Y_i = 0) for binary vectors."""

    marginals: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.marginals, dtype=np.float64)).copy()
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise NotNormalized("every marginal must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "marginals", m)

    @classmethod
    def from_pi(cls, pi) -> "MarginalParams":
        pi = np.asarray(pi, dtype=np.float64)
        return cls(np.stack([pi, 1.0 - pi], axis=1))

    @property
    def n(self) -> int:
        return self.marginals.shape[0]

    @property
    def pi(self) -> np.ndarray:
        return self.marginals[:, 0]


def marginal(joint: JointDistribution, i: int) -> np.ndarray:
    """Marginal of component ``i`` (1-based)."""
    if not 1 <= i <= joint.n:
        raise IndexOutOfRange(f"component {i} not in 1..{joint.n}")
    return joint.marginals()[i - 1]


def sum_marginal_entropies(joint: JointDistribution) -> float:
    return float(sum(entropy(m) for m in joint.marginals()))


def total_correlation(joint: JointDistribution) -> float:
    """``sum_i H(Y_i) - H(Y)``; rounding noise below zero is reported as 0."""
    tc = sum_marginal_entropies(joint) - entropy(joint.probs)
    return 0.0 if -1e-9 < tc < 0.0 else tc


def apply_mapping(joint: JointDistribution, m: WordMapping) -> JointDistribution:
    if (m.n, m.q) != (joint.n, joint.q):
        raise SizeMismatch("mapping and joint act on different word spaces")
    out = np.empty_like(joint.probs)
    out[m.perm] = joint.probs
    return JointDistribution(joint.n, joint.q, out)


def bit_mapping(n: int, order, flips) -> WordMapping:
    """Binary word mapping that relabels and flips bits.

    Output bit ``j`` (0-based) is input bit ``order[j]`` XOR ``flips[order[j]]``.
    """
    x = np.arange(2**n, dtype=np.int64)
    y = np.zeros_like(x)
    for j, src in enumerate(order):
        bit = ((x >> src) & 1) ^ int(flips[src])
        y |= bit << j
    return WordMapping(n, 2, y)


def symbol_relabeling(n: int, q: int, labels) -> WordMapping:
    """Mapping that renames symbol ``x`` of component ``j+1`` to ``labels[j][x]``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n, q):
        raise SizeMismatch(f"labels must have shape ({n}, {q})")
    for row in labels:
        if sorted(row.tolist()) != list(range(q)):
            raise NotBijective("each row of labels must be a permutation of the alphabet")
    digits = word_digits(n, q)
    weights = q ** np.arange(n, dtype=np.int64)
    perm = (labels[np.arange(n), digits] * weights).sum(axis=1)
    return WordMapping(n, q, perm)


def canonicalize(joint: JointDistribution) -> tuple[WordMapping, MarginalParams]:
    """Flip and reorder bits so that ``pi_n <= ... <= pi_1 <= 1/2``.

    Ties keep the original component order.
    """
    if joint.q != 2:
        raise UnsupportedAlphabet("canonicalize needs a binary alphabet")
    pi = joint.marginals()[:, 0]
    flips = pi > 0.5
    folded = np.where(flips, 1.0 - pi, pi)
    order = sorted(range(joint.n), key=lambda i: (-folded[i], i))
    mapping = bit_mapping(joint.n, order, flips)
    return mapping, MarginalParams.from_pi(folded[order])


def dump_json(obj, path) -> None:
    """Write ``obj.to_dict()`` (or a plain dict) as JSON atomically."""
    import os
    import tempfile

    payload = obj.to_dict() if hasattr(obj, "to_dict") else obj
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def load_joint(path, renormalize: bool = False) -> JointDistribution:
    with open(path) as fh:
        return JointDistribution.from_dict(json.load(fh), renormalize=renormalize)


def load_mapping(path) -> WordMapping:
    with open(path) as fh:
        return WordMapping.from_dict(json.load(fh))
