import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finita.core import JointDistribution, WordMapping, apply_mapping
from finita.errors import DegenerateParameter, NotDecomposable, UnsupportedAlphabet
from finita.exact_recovery import recover_product_params
from finita.generators import product_joint, random_product_scrambled


def test_sorted_two_bit_example():
    j = JointDistribution(2, 2, [0.08, 0.12, 0.32, 0.48])
    params, mapping = recover_product_params(j)
    np.testing.assert_allclose(params.pi, [0.4, 0.2], atol=1e-12)
    np.testing.assert_allclose(apply_mapping(j, mapping).probs, product_joint(params.pi).probs, atol=1e-12)


def test_recovers_scrambled_source():
    j, pi, _ = random_product_scrambled(8, seed=4)
    params, mapping = recover_product_params(j)
    folded = np.sort(np.minimum(pi, 1 - pi))[::-1]
    np.testing.assert_allclose(params.pi, folded, atol=1e-9)
    np.testing.assert_allclose(apply_mapping(j, mapping).probs, product_joint(params.pi).probs, atol=1e-9)


@given(st.integers(2, 10), st.integers(0, 2**31))
def test_round_trip(n, seed):
    j, pi, _ = random_product_scrambled(n, seed)
    params, mapping = recover_product_params(j)
    assert np.all(np.diff(params.pi) <= 1e-12)
    assert np.all(params.pi <= 0.5)
    np.testing.assert_allclose(params.pi, np.sort(np.minimum(pi, 1 - pi))[::-1], atol=1e-9)


def test_comparison_counter_is_bounded():
    n = 10
    j, _, _ = random_product_scrambled(n, seed=1)
    rec = recover_product_params(j, return_stats=True)
    assert rec.comparisons <= 2 * n * 2**n
    assert rec.residual <= 1e-9


def test_equal_parameters_are_handled():
    j = apply_mapping(product_joint([0.3, 0.3, 0.3]), WordMapping(3, 2, [5, 2, 7, 0, 1, 3, 6, 4]))
    params, _ = recover_product_params(j)
    np.testing.assert_allclose(params.pi, [0.3, 0.3, 0.3], atol=1e-12)


def test_zero_mass_is_degenerate():
    with pytest.raises(DegenerateParameter):
        recover_product_params(JointDistribution(2, 2, [0.5, 0, 0, 0.5]))


def test_xor_coupling_is_not_decomposable():
    with pytest.raises(NotDecomposable):
        recover_product_params(JointDistribution(2, 2, [0.5, 0, 0, 0.5]))


def test_generic_joint_is_rejected():
    with pytest.raises(NotDecomposable):
        recover_product_params(JointDistribution(2, 2, [0.1, 0.2, 0.3, 0.4]))


def test_binary_only():
    with pytest.raises(UnsupportedAlphabet):
        recover_product_params(JointDistribution.uniform(2, 3))
