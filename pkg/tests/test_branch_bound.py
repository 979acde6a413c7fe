import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finita.branch_bound import (
    SearchNode,
    brute_force_minimum,
    is_minorant,
    largest_minorants,
    lower_bound,
    solve_exact,
)
from finita.core import JointDistribution, apply_mapping, sum_marginal_entropies
from finita.errors import LimitExceeded, NotDownClosed, UnsupportedAlphabet
from finita.generators import random_joint


def test_minorant_order():
    # zeros(0b01) = {bit 2} is inside zeros(0b00) = {bits 1, 2}
    assert is_minorant(0b01, 0b00)
    assert not is_minorant(0b00, 0b01)
    assert is_minorant(0b11, 0b10)


def test_largest_minorants_frontier():
    assert largest_minorants({0}, 3) == {1, 2, 4}
    assert largest_minorants({0, 1, 2}, 2) == {3}
    assert largest_minorants({0, 1}, 2) == {2}


def test_frontier_requires_down_closed():
    with pytest.raises(NotDownClosed):
        largest_minorants({0, 3}, 2)
    with pytest.raises(NotDownClosed):
        largest_minorants({1}, 2)


def test_n2_allocates_ascending():
    j = JointDistribution(2, 2, [0.4, 0.1, 0.3, 0.2])
    res = solve_exact(j)
    p_sorted = np.sort(j.probs)
    np.testing.assert_allclose(apply_mapping(j, res.mapping).probs, p_sorted)


@pytest.mark.parametrize("seed", range(8))
def test_matches_brute_force_n3(seed):
    j = random_joint(3, 2, seed)
    res = solve_exact(j)
    assert res.value == pytest.approx(brute_force_minimum(j), abs=1e-12)
    assert res.stats.optimal


@pytest.mark.parametrize("seed", range(3))
def test_pruning_and_symmetry_do_not_change_optimum(seed):
    j = random_joint(3, 2, 100 + seed)
    base = solve_exact(j, prune=False, symmetry=False)
    fast = solve_exact(j)
    assert fast.value == pytest.approx(base.value, abs=1e-12)
    assert fast.stats.nodes <= base.stats.nodes


@given(st.integers(0, 2**31))
def test_result_is_consistent(seed):
    j = random_joint(3, 2, seed, 0.5)
    res = solve_exact(j)
    out = apply_mapping(j, res.mapping)
    assert sum_marginal_entropies(out) == pytest.approx(res.value, abs=1e-12)
    assert np.all(out.marginals()[:, 0] <= 0.5 + 1e-12)


@given(st.integers(0, 2**31))
def test_root_bound_is_admissible(seed):
    j = random_joint(3, 2, seed)
    p = np.sort(j.probs)
    assert lower_bound(SearchNode(3), p) <= solve_exact(j).value + 1e-12


def test_partial_bound_below_completions():
    j = random_joint(2, 2, 7)
    p = np.sort(j.probs)
    node = SearchNode(2, {0: 0, 1: 1})
    # the two completions put p[2], p[3] on words 2 and 3 in either order
    mapped = []
    for w2 in (2, 3):
        probs = np.zeros(4)
        probs[0], probs[1] = p[0], p[1]
        probs[w2], probs[5 - w2] = p[2], p[3]
        mapped.append(sum_marginal_entropies(JointDistribution(2, 2, probs)))
    assert lower_bound(node, p) <= min(mapped) + 1e-12


def test_node_cap_returns_incumbent():
    j = random_joint(4, 2, 3)
    res = solve_exact(j, max_nodes=5)
    assert not res.stats.optimal
    assert res.value >= 0
    with pytest.raises(LimitExceeded) as info:
        solve_exact(j, max_nodes=5, strict=True)
    assert info.value.result is not None


def test_binary_only():
    with pytest.raises(UnsupportedAlphabet):
        solve_exact(JointDistribution.uniform(2, 3))
