import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wienermonge.errors import DimensionMismatchError, MassMismatchError
from wienermonge.instances import bundled, overlapping_instance, random_instance
from wienermonge.measures import DiscreteMeasure
from wienermonge.transport import (DualPotentials, TransportPlan, check_cyclical_monotonicity,
                                   cost_matrix, dual_violation, duality_gap, solve_kantorovich,
                                   solve_with_common_mass)


def brute_force_assignment(mu, nu, kind="euclidean"):
    C = cost_matrix(mu.points, nu.points, kind)
    n = len(mu)
    return min(sum(C[i, p[i]] for i in range(n)) / n for p in itertools.permutations(range(n)))


def test_square_example_vertical_matching():
    mu, nu = bundled("square2x2")
    plan, duals = solve_kantorovich(mu, nu)
    assert plan.cost == pytest.approx(1.0, abs=1e-12)
    assert sorted(plan.pairs) == [(0, 0, 0.5), (1, 1, 0.5)]
    assert abs(duality_gap(plan, duals)) <= 1e-9


def test_identity_instance():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]], [0.2, 0.5, 0.3])
    plan, duals = solve_kantorovich(mu, mu)
    assert plan.cost == 0.0
    assert sorted((i, j) for i, j, _ in plan.pairs) == [(0, 0), (1, 1), (2, 2)]
    assert abs(duality_gap(plan, duals)) <= 1e-12


def test_random_5x5_seed42_matches_permutation_oracle():
    mu, nu = random_instance(5, 2, seed=42)
    plan, duals = solve_kantorovich(mu, nu)
    assert plan.cost == pytest.approx(brute_force_assignment(mu, nu), abs=1e-12)
    assert abs(duality_gap(plan, duals)) <= 1e-9 * (1 + plan.cost)


def test_zero_potentials_gap_equals_cost():
    mu, nu = bundled("square2x2")
    plan, _ = solve_kantorovich(mu, nu)
    zero = DualPotentials(np.zeros(2), np.zeros(2))
    assert duality_gap(plan, zero) == pytest.approx(plan.cost, abs=1e-15)


def test_perturbed_potentials_reported_infeasible():
    mu, nu = bundled("square2x2")
    plan, duals = solve_kantorovich(mu, nu)
    phi = duals.phi.copy()
    phi[0] += 0.1
    bad = DualPotentials(phi, duals.psi)
    assert dual_violation(plan, bad) == pytest.approx(0.1, abs=1e-9)
    assert math.isnan(duality_gap(plan, bad))


def test_dual_feasibility_and_slackness():
    mu, nu = random_instance(12, 3, seed=7, uniform=False)
    plan, duals = solve_kantorovich(mu, nu)
    C = cost_matrix(mu.points, nu.points)
    assert np.max(duals.phi[:, None] + duals.psi[None, :] - C) <= 1e-9
    slack = C[plan.rows, plan.cols] - duals.phi[plan.rows] - duals.psi[plan.cols]
    assert np.max(np.abs(slack)) <= 1e-9


def test_errors():
    with pytest.raises(DimensionMismatchError):
        solve_kantorovich(DiscreteMeasure([[0.0]]), DiscreteMeasure([[0.0, 1.0]]))
    half = DiscreteMeasure([[0.0]], [0.5], normalize=False)
    with pytest.raises(MassMismatchError):
        solve_kantorovich(half, DiscreteMeasure([[1.0]]))


def test_single_pair_plan_is_monotone():
    mu, nu = DiscreteMeasure([[0.0, 0.0]]), DiscreteMeasure([[1.0, 1.0]])
    plan, _ = solve_kantorovich(mu, nu)
    rep = check_cyclical_monotonicity(plan, max_cycle=3, samples=None)
    assert rep.ok and rep.n_violations == 0


def test_crossing_plan_flagged():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]])
    nu = DiscreteMeasure([[1.0, 1.0], [0.0, 1.0]])
    crossing = TransportPlan.from_pairs(mu, nu, [(0, 0, 0.5), (1, 1, 0.5)])
    assert crossing.cost == pytest.approx(math.sqrt(2), abs=1e-15)
    for samples in (None, 1000):
        rep = check_cyclical_monotonicity(crossing, max_cycle=2, samples=samples, seed=1)
        assert not rep.ok
        assert rep.worst_violation == pytest.approx(2 * math.sqrt(2) - 2, abs=1e-12)
        assert sorted(rep.witness) == [0, 1]


def test_solver_output_passes_sampled_check():
    mu, nu = random_instance(20, 4, seed=3, uniform=False)
    plan, _ = solve_kantorovich(mu, nu)
    rep = check_cyclical_monotonicity(plan, max_cycle=3, samples=10_000, seed=0)
    assert rep.n_checked == 10_000 and rep.n_violations == 0


@pytest.mark.parametrize("seed", range(10))
def test_optimal_iff_cyclically_monotone_4x4(seed):
    mu, nu = random_instance(4, 2, seed=100 + seed)
    C = cost_matrix(mu.points, nu.points)
    costs = {p: sum(C[i, p[i]] for i in range(4)) / 4 for p in itertools.permutations(range(4))}
    best = min(costs.values())
    for p, c in costs.items():
        plan = TransportPlan.from_pairs(mu, nu, [(i, p[i], 0.25) for i in range(4)])
        rep = check_cyclical_monotonicity(plan, max_cycle=4, samples=None)
        assert (c <= best + 1e-12) == rep.ok, (p, c, best, rep)


@given(st.integers(0, 10_000), st.integers(2, 7), st.integers(1, 5),
       st.sampled_from(["euclidean", "sqeuclidean"]))
def test_marginals_and_brute_force(seed, n, d, kind):
    mu, nu = random_instance(n, d, seed)
    plan, duals = solve_kantorovich(mu, nu, kind)
    er, ec = plan.marginal_errors()
    assert er <= 1e-10 and ec <= 1e-10
    assert np.all(plan.masses > 0)
    assert plan.cost == pytest.approx(brute_force_assignment(mu, nu, kind), abs=1e-9)
    assert duality_gap(plan, duals) <= 1e-9 * (1 + plan.cost)
    assert duality_gap(plan, duals) >= -1e-9


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_scale_equivariance(seed, s):
    mu, nu = random_instance(6, 3, seed, uniform=False)
    c1 = solve_kantorovich(mu, nu)[0].cost
    c2 = solve_kantorovich(DiscreteMeasure(mu.points * s, mu.weights),
                           DiscreteMeasure(nu.points * s, nu.weights))[0].cost
    assert c2 == pytest.approx(s * c1, rel=1e-12, abs=1e-300)


def test_deterministic_repeat():
    mu, nu = random_instance(15, 2, seed=5)
    a, _ = solve_kantorovich(mu, nu)
    b, _ = solve_kantorovich(mu, nu)
    assert a.pairs == b.pairs


def test_plan_csv_round_trip(tmp_path):
    mu, nu = random_instance(6, 2, seed=2, uniform=False)
    plan, _ = solve_kantorovich(mu, nu)
    path = tmp_path / "plan.csv"
    plan.to_csv(path, header_comment="x=1")
    back = TransportPlan.from_csv(str(path), mu, nu)
    assert back.pairs == plan.pairs and back.cost == plan.cost


def test_common_mass_plan_matches_optimum():
    for seed in range(5):
        mu, nu = overlapping_instance(seed)
        fixed = solve_with_common_mass(mu, nu)
        free, _ = solve_kantorovich(mu, nu)
        assert fixed.cost == pytest.approx(free.cost, abs=1e-9 + 1e-9 * free.cost)
        assert max(fixed.marginal_errors()) <= 1e-10
