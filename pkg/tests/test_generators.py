from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finita.core import apply_mapping, entropy, total_correlation
from finita.errors import ParameterOutOfRange
from finita.generators import (
    MarkovSpec,
    block_iid_joint,
    block_iid_unique_bound,
    bss_mixture,
    count_unique_probs,
    markov_class_count,
    markov_joint,
    product_joint,
    product_joint_qary,
    random_product_scrambled,
    zipf,
)


def test_zipf_normalized_and_decreasing():
    p = zipf(8, 1.6)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p) < 0)
    assert p[0] / p[1] == pytest.approx(2**1.6)


def test_product_joint_rejects_degenerate():
    with pytest.raises(ParameterOutOfRange):
        product_joint([0.0, 0.3])


def test_scrambled_source_ground_truth():
    j, pi, m = random_product_scrambled(5, seed=9)
    np.testing.assert_allclose(apply_mapping(j, m.inverse()).probs, product_joint(pi).probs)


def test_qary_product_marginals():
    m = np.array([[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
    np.testing.assert_allclose(product_joint_qary(m).marginals(), m, atol=1e-15)


def test_markov_first_position_is_stationary():
    j = markov_joint(MarkovSpec(5, 0.2, 0.3))
    np.testing.assert_allclose(j.marginals()[:, 0], 0.6, atol=1e-12)


def test_markov_probability_depends_on_class_triple():
    n = 7
    spec = MarkovSpec(n, 0.2, 0.35)
    j = markov_joint(spec)
    assert count_unique_probs(j) <= markov_class_count(n)


@pytest.mark.parametrize("n", range(3, 11))
def test_class_triple_count(n):
    assert markov_class_count(n) == n * (n - 1) + 2


def test_markov_invalid_transition():
    with pytest.raises(ParameterOutOfRange):
        MarkovSpec(3, 0.0)


@pytest.mark.parametrize("n, r", [(4, 2), (6, 2), (6, 3), (8, 4)])
def test_block_iid_unique_bound(n, r):
    rng = np.random.default_rng(n * 10 + r)
    j = block_iid_joint(n, r, rng.dirichlet(np.ones(2**r)))
    assert count_unique_probs(j) <= block_iid_unique_bound(n, r)
    assert block_iid_unique_bound(n, r) == comb(n // r + 2**r - 1, n // r)


def test_count_unique_probs_tolerance():
    assert count_unique_probs(np.array([0.1, 0.1 * (1 + 1e-14), 0.2])) == 2
    assert count_unique_probs(np.array([0.1, 0.1 * (1 + 1e-9), 0.2])) == 3


@given(st.integers(2, 9), st.floats(1.0, 2.5), st.integers(0, 1000))
def test_bss_mixture_is_invertible_mix(q, s, seed):
    j, sigma = bss_mixture(q, s, seed)
    p = zipf(q, s)
    # a bijection of two i.i.d. sources keeps the joint entropy
    assert entropy(j.probs) == pytest.approx(2 * entropy(p), abs=1e-12)
    np.testing.assert_allclose(j.marginals()[0], p, atol=1e-12)
    assert sorted(sigma.tolist()) == list(range(q))
    assert total_correlation(j) >= 0
