import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finita.constrained import (
    Gf2Matrix,
    ImmuneConfig,
    apply_linear_map,
    brute_force_banded_invertible,
    enumerate_banded_invertible,
    gf2_invertible,
    gf2_rank,
    immune_search,
    is_balanced,
    linear_objective,
    linear_word_map,
    output_truth_tables,
    random_feasible_matrix,
    search_r2,
    walsh_hadamard,
)
from finita.core import JointDistribution, WordMapping, apply_mapping, sum_marginal_entropies, total_correlation
from finita.errors import BadLength, InfeasibleConfig, Singular
from finita.generators import product_joint, random_joint
from finita.plr import solve_plr


def mixed_source(n, seed):
    """Product source mixed so that some row-weight-2 matrix separates it."""
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.05, 0.45, size=n)
    demix = random_feasible_matrix(n, 2, rng)
    return apply_mapping(product_joint(pi), linear_word_map(demix).inverse()), pi


def test_rank_and_invertibility():
    assert gf2_rank(Gf2Matrix.identity(4)) == 4
    assert gf2_rank(Gf2Matrix.from_array([[1, 1], [1, 1]])) == 1
    assert not gf2_invertible(Gf2Matrix.from_array([[1, 1, 0], [0, 1, 1], [1, 0, 1]]))


@given(st.integers(2, 6), st.integers(0, 2**31))
def test_rank_matches_real_rank_of_products(n, seed):
    rng = np.random.default_rng(seed)
    a = Gf2Matrix.from_array(rng.integers(0, 2, size=(n, n)))
    b = Gf2Matrix.from_array(rng.integers(0, 2, size=(n, n)))
    prod = (a.to_array() @ b.to_array()) % 2
    assert (a @ b).to_array().tolist() == prod.tolist()
    assert gf2_rank(a @ b) <= min(gf2_rank(a), gf2_rank(b))


def test_array_round_trip():
    arr = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0]])
    assert Gf2Matrix.from_array(arr).to_array().tolist() == arr.tolist()
    with pytest.raises(ValueError):
        Gf2Matrix(2, (4, 1))


@pytest.mark.parametrize("n", range(2, 11))
def test_banded_count(n):
    mats = enumerate_banded_invertible(n)
    assert len(mats) == 2 ** (n + 1) - 2
    assert len({m.rows for m in mats}) == len(mats)
    assert all(m.is_banded() and gf2_invertible(m) for m in mats[:50])


@pytest.mark.parametrize("n", range(2, 7))
def test_banded_count_by_brute_force(n):
    brute = {m.rows for m in brute_force_banded_invertible(n)}
    assert brute == {m.rows for m in enumerate_banded_invertible(n)}


def test_linear_word_map_is_linear():
    m = Gf2Matrix.from_array([[1, 1, 0], [0, 1, 0], [0, 1, 1]])
    wm = linear_word_map(m)
    for a, b in itertools.product(range(8), repeat=2):
        assert wm.perm[a ^ b] == wm.perm[a] ^ wm.perm[b]
    with pytest.raises(Singular):
        linear_word_map(Gf2Matrix.from_array([[1, 1], [1, 1]]))


@given(st.integers(0, 2**31))
def test_walsh_hadamard_gives_output_marginals(seed):
    rng = np.random.default_rng(seed)
    j = random_joint(4, 2, seed)
    m = random_feasible_matrix(4, 3, rng)
    wht = walsh_hadamard(j.probs)
    out = apply_linear_map(j, m)
    pi = np.array([(1 + wht[r]) / 2 for r in m.rows])
    np.testing.assert_allclose(out.marginals()[:, 0], pi, atol=1e-12)
    assert linear_objective(wht, m) == pytest.approx(sum_marginal_entropies(out), abs=1e-12)


def test_xor_coupling_is_undone():
    # Y1 uniform, Y2 = Y1 XOR Z with Z rare
    j = JointDistribution(2, 2, [0.45, 0.05, 0.05, 0.45])
    m, v = search_r2(j)
    out = apply_linear_map(j, m)
    assert total_correlation(out) == pytest.approx(0.0, abs=1e-12)
    assert v == pytest.approx(sum_marginal_entropies(out), abs=1e-12)


def test_search_r2_is_exhaustive():
    j = random_joint(4, 2, 21)
    wht = walsh_hadamard(j.probs).tolist()
    _, v = search_r2(j)
    assert v == pytest.approx(min(linear_objective(wht, m) for m in enumerate_banded_invertible(4)))


def test_permuted_outputs_keep_value():
    j = random_joint(4, 2, 22)
    m1, v1 = search_r2(j)
    m2, v2 = search_r2(j, permute_outputs=True)
    assert v1 == v2
    pi = apply_linear_map(j, m2).marginals()[:, 0]
    assert np.all(np.diff(pi) <= 1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_linear_family_no_better_than_unconstrained(seed):
    j = random_joint(4, 2, 30 + seed)
    _, v = search_r2(j)
    assert v >= solve_plr(j, 16).true_objective - 0.05


def test_immune_recovers_linear_mix():
    j, pi = mixed_source(6, seed=4)
    res = immune_search(j, ImmuneConfig(generations=80, seed=1))
    target = sum_marginal_entropies(product_joint(pi))
    assert res.value == pytest.approx(target, abs=1e-9)


def test_immune_history_and_feasibility():
    j = random_joint(5, 2, 8)
    m, v, hist = immune_search(j, ImmuneConfig(generations=15, seed=2))
    assert len(hist) == 16
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] == v
    assert gf2_invertible(m) and max(m.row_weights()) <= 2


@pytest.mark.parametrize(
    "cfg",
    [ImmuneConfig(r=0), ImmuneConfig(population=0), ImmuneConfig(fresh=30),
     ImmuneConfig(initial=(Gf2Matrix.from_array([[1, 1], [1, 1]]),))],
)
def test_infeasible_config(cfg):
    with pytest.raises(InfeasibleConfig):
        immune_search(random_joint(2, 2, 0), cfg)


@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_random_feasible_matrix(n, r, seed):
    m = random_feasible_matrix(n, r, np.random.default_rng(seed))
    assert gf2_invertible(m) and max(m.row_weights()) <= r


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_bijections_have_balanced_outputs(n, seed):
    wm = WordMapping(n, 2, np.random.default_rng(seed).permutation(2**n))
    assert all(is_balanced(row) for row in output_truth_tables(wm))


def test_is_balanced_length():
    assert not is_balanced([0, 0, 0, 1])
    with pytest.raises(BadLength):
        is_balanced([0, 1, 1])
