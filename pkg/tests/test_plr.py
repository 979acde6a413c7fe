import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finita.branch_bound import solve_exact
from finita.core import JointDistribution, apply_mapping, binary_entropy, entropy, sum_marginal_entropies
from finita.errors import SizeMismatch, UnsupportedAlphabet
from finita.generators import random_joint, random_product_scrambled
from finita.plr import (
    Placement,
    allocate_min,
    build_tangent_bound,
    coefficient_matrix,
    coefficients_for_placement,
    dedup_value,
    enumerate_placements,
    placement_count,
    solve_plr,
    tangent_line,
    tangent_points,
)

SCHEDULES = ["midpoint", "nested", "minimax", "greedy"]


def test_single_nested_tangent_is_flat():
    b = build_tangent_bound(1, "nested")
    assert b.slopes[0] == pytest.approx(0.0, abs=1e-15)
    assert b.intercepts[0] == pytest.approx(1.0)


def test_tangent_line_touches_hb():
    for t in (0.05, 0.2, 0.5):
        a, c = tangent_line(t)
        assert a * t + c == pytest.approx(binary_entropy(t))


@pytest.mark.parametrize("schedule", SCHEDULES)
@pytest.mark.parametrize("k", [1, 2, 5, 8])
def test_envelope_is_upper_bound(schedule, k):
    b = build_tangent_bound(k, schedule)
    xs = np.linspace(0, 1, 4001)
    assert np.all(b(xs) >= binary_entropy(xs) - 1e-12)
    assert np.all(np.diff(b.tangent_points) > 0)
    assert b.lo[0] == 0.0 and b.hi[-1] == 0.5


@pytest.mark.parametrize("schedule", SCHEDULES)
def test_gap_shrinks_with_k(schedule):
    gaps = [build_tangent_bound(k, schedule).max_gap() for k in (2, 4, 8, 16)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_greedy_sequence_is_nested():
    for k in range(1, 12):
        small, big = set(tangent_points(k, "greedy")), set(tangent_points(k + 1, "greedy"))
        assert small <= big


def test_bad_points_rejected():
    with pytest.raises(ValueError):
        build_tangent_bound(2, points=[0.0, 0.3])
    with pytest.raises(ValueError):
        tangent_points(3, "nope")


def test_placement_enumeration_counts():
    pls = list(enumerate_placements(3, 4))
    assert len(pls) == placement_count(3, 4) == 20
    assert len(set(pls)) == 20
    assert all(p.n == 3 for p in pls)
    assert Placement((2, 0, 1)).regions().tolist() == [0, 0, 2]


def test_allocate_min_rearrangement():
    c = np.array([3.0, 1.0, 2.0, 0.0])
    p = np.array([0.1, 0.2, 0.3, 0.4])
    m, v = allocate_min(c, p)
    # largest mass on the smallest coefficient
    assert m.perm[3] == 3 and m.perm[0] == 0
    assert v == pytest.approx(0.4 * 0 + 0.3 * 1 + 0.2 * 2 + 0.1 * 3)
    with pytest.raises(SizeMismatch):
        allocate_min(c[:3], p)


@given(st.integers(0, 2**31))
def test_allocate_min_beats_random_assignments(seed):
    rng = np.random.default_rng(seed)
    c, p = rng.normal(size=8), rng.dirichlet(np.ones(8))
    _, v = allocate_min(c, p)
    for _ in range(20):
        assert v <= np.dot(c[rng.permutation(8)], p) + 1e-12


@given(st.integers(0, 2**31))
def test_dedup_matches_full_sum(seed):
    rng = np.random.default_rng(seed)
    n, k = 4, 3
    b = build_tangent_bound(k)
    p = rng.dirichlet(np.ones(2**n))
    pl = list(enumerate_placements(n, k))[rng.integers(placement_count(n, k))]
    cv = coefficients_for_placement(pl, b, n)
    assert dedup_value(cv, p) == pytest.approx(allocate_min(cv, p)[1], abs=1e-12)
    assert cv.distinct <= np.prod(np.array(pl.counts) + 1)


def test_coefficient_matrix_rows_sorted():
    rows, d, distinct = coefficient_matrix(3, 4)
    assert rows.shape == (placement_count(3, 4), 8)
    assert np.all(np.diff(rows, axis=1) >= 0)
    assert np.all(distinct >= 1)


@pytest.mark.parametrize("seed", range(5))
def test_value_methods_agree(seed):
    j = random_joint(4, 2, seed)
    res = {m: solve_plr(j, 5, method=m) for m in ("grouped", "matrix", "loop")}
    vals = [r.ub_value for r in res.values()]
    assert max(vals) - min(vals) <= 1e-12
    assert len({tuple(r.mapping.perm) for r in res.values()}) == 1


@pytest.mark.parametrize("seed", range(6))
def test_relaxation_sandwich(seed):
    j = random_joint(3, 2, seed)
    res = solve_plr(j, 6)
    opt = solve_exact(j).value
    assert res.ub_value >= opt - 1e-12
    assert opt >= entropy(j.probs) - 1e-12
    assert res.true_objective >= opt - 1e-12
    assert res.true_objective <= res.ub_value + 1e-12


@given(st.integers(0, 2**31), st.integers(2, 5))
def test_result_invariants(seed, n):
    j = random_joint(n, 2, seed)
    res = solve_plr(j, 4)
    out = apply_mapping(j, res.mapping)
    assert np.all(out.marginals()[:, 0] <= 0.5 + 1e-12)
    assert sum_marginal_entropies(out) == pytest.approx(res.true_objective, abs=1e-12)
    # the global relaxed minimum is always feasible
    assert res.ub_value == pytest.approx(res.lp_min, abs=1e-12)


def test_full_scan_reports_best_checked():
    j = random_joint(4, 2, 11)
    lazy, full = solve_plr(j, 4), solve_plr(j, 4, full_scan=True)
    assert full.placements_checked == full.placements
    assert full.best_true_objective <= lazy.true_objective + 1e-12
    assert full.ub_value == pytest.approx(lazy.ub_value, abs=1e-12)


def test_nested_refinement_never_increases_ub():
    j = random_joint(3, 2, 5)
    ubs = [solve_plr(j, k, schedule="nested").ub_value for k in (1, 2, 4, 8, 16)]
    assert all(a >= b - 1e-12 for a, b in zip(ubs, ubs[1:]))


def test_product_source_demixed():
    j, _, _ = random_product_scrambled(6, seed=2)
    res = solve_plr(j, 16)
    assert res.true_objective - entropy(j.probs) < 0.02


def test_binary_only():
    with pytest.raises(UnsupportedAlphabet):
        solve_plr(JointDistribution.uniform(2, 3))
    with pytest.raises(ValueError):
        solve_plr(random_joint(2, 2, 0), method="bogus")
