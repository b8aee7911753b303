import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wienermonge.errors import MassMismatchError
from wienermonge.glue import (GluedMap, glue, monge_pipeline, monotone_coupling_1d, transport_cost,
                              verify_map)
from wienermonge.instances import bundled, collinear_instance
from wienermonge.measures import DiscreteMeasure, OneDimMeasure
from wienermonge.rays import build_gamma_prime, build_rays, disintegrate_along_rays
from wienermonge.transport import cost_matrix, solve_kantorovich


def test_coupling_identity():
    m = OneDimMeasure([0.0, 1.0, 3.0], [0.2, 0.5, 0.3])
    c = monotone_coupling_1d(m, m)
    assert c.source_pos.tolist() == c.target_pos.tolist() == [0.0, 1.0, 3.0]
    assert c.cost() == 0.0


def test_coupling_two_atoms_monotone():
    c = monotone_coupling_1d(OneDimMeasure([0, 1], [0.5, 0.5]), OneDimMeasure([2, 3], [0.5, 0.5]))
    assert c.pairs() == [(0.0, 2.0, 0.5), (1.0, 3.0, 0.5)]
    assert c.cost(2) == pytest.approx(4.0)


def test_coupling_splits_atom():
    c = monotone_coupling_1d(OneDimMeasure([0.0], [1.0]), OneDimMeasure([1, 2, 3], [1, 1, 1]))
    assert c.target_pos.tolist() == [1.0, 2.0, 3.0]
    np.testing.assert_allclose(c.masses, [1 / 3] * 3, atol=1e-15)


def test_coupling_mass_mismatch():
    with pytest.raises(MassMismatchError):
        monotone_coupling_1d(OneDimMeasure([0.0], [1.0], normalize=False),
                             OneDimMeasure([1.0], [0.5], normalize=False))


atoms_1d = st.lists(st.tuples(st.integers(-20, 20), st.integers(1, 5)), min_size=1, max_size=7)


@given(atoms_1d, atoms_1d)
def test_coupling_is_optimal_for_both_powers(a, b):
    mu = OneDimMeasure([float(p) for p, _ in a], [float(w) for _, w in a])
    nu = OneDimMeasure([float(p) for p, _ in b], [float(w) for _, w in b])
    c = monotone_coupling_1d(mu, nu)
    assert np.all(np.diff(c.source_pos) >= 0) and np.all(np.diff(c.target_pos) >= 0)
    assert c.masses.sum() == pytest.approx(1.0, abs=1e-12)
    dm = DiscreteMeasure(mu.positions[:, None], mu.weights)
    dn = DiscreteMeasure(nu.positions[:, None], nu.weights)
    for p, kind in ((1, "euclidean"), (2, "sqeuclidean")):
        best = solve_kantorovich(dm, dn, kind)[0].cost
        assert c.cost(p) == pytest.approx(best, abs=1e-9)


@given(atoms_1d, atoms_1d, st.floats(0.1, 10), st.floats(-10, 10))
def test_coupling_affine_invariance(a, b, s, shift):
    mu = OneDimMeasure([float(p) for p, _ in a], [float(w) for _, w in a])
    nu = OneDimMeasure([float(p) for p, _ in b], [float(w) for _, w in b])
    c = monotone_coupling_1d(mu, nu)
    c2 = monotone_coupling_1d(OneDimMeasure(mu.positions * s + shift, mu.weights),
                              OneDimMeasure(nu.positions * s + shift, nu.weights))
    assert c.source_index.tolist() == c2.source_index.tolist()
    assert c.target_index.tolist() == c2.target_index.tolist()


def test_coupling_deterministic():
    rng = np.random.default_rng(0)
    mu = OneDimMeasure(rng.standard_normal(30), rng.uniform(size=30))
    nu = OneDimMeasure(rng.standard_normal(17), rng.uniform(size=17))
    a, b = monotone_coupling_1d(mu, nu), monotone_coupling_1d(mu, nu)
    assert a.masses.tobytes() == b.masses.tobytes() and a.pairs() == b.pairs()


def test_all_mass_fixed_gives_identity():
    mu = DiscreteMeasure([[0.0, 0.0], [1.0, 1.0]], [0.3, 0.7])
    res = monge_pipeline(mu, mu)
    assert res.glued.cost == 0.0
    assert res.glued.pieces == [(0, 0, 0.3, None), (1, 1, 0.7, None)]
    assert res.report.passed and res.report.bijective


def test_single_ray_matches_ray_parametrization():
    pts = np.array([[0.0], [2.0], [4.0]])
    d = build_rays(build_gamma_prime([(0, 1), (1, 2)], pts), pts)
    mu = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
    nu = DiscreteMeasure([[2.0], [4.0]], [0.5, 0.5])
    gm = glue(d, disintegrate_along_rays(mu, d), disintegrate_along_rays(nu, d))
    ray = d.rays[0]
    rc = gm.per_ray[0]
    # ray coordinates pushed through g land on target atoms with the right mass
    images = ray.at(rc.t_target)
    for y, m in zip(images, rc.masses):
        j = nu.atom_index()[tuple(y.tolist())]
        assert nu.weights[j] == pytest.approx(m, abs=1e-15)
    assert gm.assignment == {0: [(0, 0.5)], 1: [(1, 0.5)]}
    assert gm.cost == pytest.approx(2.0)


def test_two_ray_bijection_matches_brute_force():
    mu, nu = bundled("two_rays")
    res = monge_pipeline(mu, nu)
    assert len(res.decomposition.rays) == 2
    C = cost_matrix(mu.points, nu.points)
    brute = min(sum(C[i, p[i]] for i in range(8)) / 8 for p in itertools.permutations(range(8)))
    assert res.report.bijective
    assert res.glued.cost == pytest.approx(brute, abs=1e-9)
    assert res.report.passed


@pytest.mark.parametrize("seed", range(8))
def test_collinear_pipeline_preserves_cost(seed):
    mu, nu = collinear_instance(seed, random_weights=seed % 2 == 0)
    res = monge_pipeline(mu, nu)
    rep = res.report
    assert rep.pushforward_residual <= 1e-10 and rep.source_residual <= 1e-10
    assert abs(rep.cost_difference) <= 1e-9 + 1e-9 * rep.plan_cost
    assert not rep.monotonicity_violations
    assert not res.decomposition.unassigned


def test_swapped_pair_reported():
    mu, nu = bundled("two_rays")
    res = monge_pipeline(mu, nu)
    r = 0
    rc = res.glued.per_ray[r]
    swapped = replace(rc, t_target=rc.t_target[::-1].copy())
    bad = GluedMap(res.glued.source, res.glued.target, res.glued.pieces, {**res.glued.per_ray, r: swapped})
    rep = verify_map(bad, res.mu, res.nu, res.plan)
    assert rep.monotonicity_violations and rep.monotonicity_violations[0][0] == r
    assert not rep.passed


def test_dropped_atom_residual():
    mu, nu = bundled("two_rays")
    res = monge_pipeline(mu, nu)
    dropped = res.glued.pieces[0]
    bad = GluedMap(res.glued.source, res.glued.target, res.glued.pieces[1:], res.glued.per_ray)
    rep = verify_map(bad, res.mu, res.nu, res.plan)
    assert rep.pushforward_residual == pytest.approx(dropped[2], abs=1e-15)


def test_quotient_mismatch_names_ray():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 5.0], [1.0, 5.0]])
    d = build_rays([(0, 1), (2, 3)], pts)
    mu = DiscreteMeasure(pts[[0, 2]], [0.5, 0.5])
    nu = DiscreteMeasure(pts[[1, 3]], [0.3, 0.7])
    with pytest.raises(MassMismatchError, match="ray 0"):
        glue(d, disintegrate_along_rays(mu, d), disintegrate_along_rays(nu, d))


def test_map_csv():
    res = monge_pipeline(*bundled("chain1d"))
    lines = res.glued.to_csv().splitlines()
    assert lines[0] == "source_id,target_id,mass,ray"
    assert "1,0,0.5,FIXED" in lines
    assert transport_cost(res.mu, res.nu, [(i, j, m) for i, j, m, _ in res.glued.pieces]) == pytest.approx(2.0)
