"""Recover independent binary parameters from a scrambled product distribution.

If some word permutation of the joint is a product of Bernoulli components,
its sorted probabilities determine the parameters one at a time.  With
``pi_n <= ... <= pi_1 <= 1/2`` the smallest probability is the all-zeros
word, the smallest probability not yet explained by the resolved bits is
``p_1 * (1 - pi_k) / pi_k``, and the set of explained probabilities doubles
at every step by merging it with a rescaled copy of itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import JointDistribution, MarginalParams, WordMapping
from .errors import DegenerateParameter, NotDecomposable, UnsupportedAlphabet
from .generators import product_probs


@dataclass
class RecoveryState:
    """Working state of the recursion after ``k`` resolved bits.

    ``lam`` holds the sorted probabilities of the words whose bits
    ``k+1..n`` are zero and ``lam_words`` the matching product words.
    ``consumed`` flags the prefix of the sorted input known to be explained.
    """

    lam: np.ndarray
    lam_words: np.ndarray
    resolved: list = field(default_factory=list)
    consumed: np.ndarray | None = None
    comparisons: int = 0


@dataclass(frozen=True)
class Recovery:
    params: MarginalParams
    mapping: WordMapping
    residual: float
    comparisons: int


def recover_product_params(joint: JointDistribution, tol: float = 1e-9, *, return_stats: bool = False):
    """Parameters and demixing map of a scrambled product distribution.

    Returns ``(params, mapping)`` with ``params.pi`` descending
    (``pi_1 >= ... >= pi_n``, all at most 1/2) and ``mapping`` sending every
    input word to its slot in ``product_joint(params.pi)``.

    Raises
    ------
    DegenerateParameter
        If the smallest probability is zero.
    NotDecomposable
        If the sorted probabilities are not the products of the resolved
        factors, or the rebuilt product differs from the mapped input by
        more than ``tol`` anywhere.
    """
    if joint.q != 2:
        raise UnsupportedAlphabet("exact recovery is defined for binary vectors")
    n, N = joint.n, joint.size
    order = np.argsort(joint.probs)
    p = joint.probs[order]
    if np.any(p[1:] == p[:-1]):
        # repeated values: keep equal probabilities in input-word order
        order = np.argsort(joint.probs, kind="stable")
        p = joint.probs[order]
    if p[0] <= 0:
        raise DegenerateParameter("smallest probability is zero; some pi_i is degenerate")

    consumed = np.zeros(N, dtype=bool)
    consumed[0] = True
    state = RecoveryState(lam=p[:1].copy(), lam_words=np.zeros(1, dtype=np.int64), consumed=consumed)

    for k in range(n):
        size = state.lam.size
        # lam is a sorted sub-multiset of p, so the first disagreement marks the
        # smallest probability not yet explained
        head = p[:size]
        off = np.abs(head - state.lam) > tol * np.maximum(head, state.lam)
        first_free = int(np.argmax(off)) if off.any() else size
        state.comparisons += first_free + 1 + 2 * size
        consumed[:first_free] = True
        cand = p[first_free]
        ratio = cand / p[0]
        state.resolved.append(p[0] / (p[0] + cand))
        vals = np.concatenate([state.lam, state.lam * ratio])
        words = np.concatenate([state.lam_words, state.lam_words | (1 << k)])
        merged = np.argsort(vals, kind="stable")
        state.lam, state.lam_words = vals[merged], words[merged]

    if np.any(np.abs(p - state.lam) > tol * np.maximum(p, state.lam)):
        raise NotDecomposable("the sorted probabilities are not the products of the resolved factors")
    consumed[:] = True
    slot = state.lam_words
    pi = np.array(state.resolved)
    perm = np.empty(N, dtype=np.int64)
    perm[order] = slot
    mapping = WordMapping(n, 2, perm)
    params = MarginalParams.from_pi(pi)
    mapped = np.empty(N)
    mapped[perm] = joint.probs
    residual = float(np.max(np.abs(mapped - product_probs(pi))))
    if residual > tol:
        raise NotDecomposable(f"reconstruction residual {residual:.3e} exceeds {tol:.1e}")
    if return_stats:
        return Recovery(params, mapping, residual, state.comparisons)
    return params, mapping
