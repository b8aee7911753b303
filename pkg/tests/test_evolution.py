from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from wienermonge.config import STANDARD_PAIRS
from wienermonge.densities import DensityPair, make_density
from wienermonge.errors import EstimateViolation, InvalidInputError
from wienermonge.evolution import (GaussianCDF1D, MonotoneMap1D, RadialPair, evolution_mass_1d,
                                   evolution_mass_mc, gaussian_pushforward_density, interpolate,
                                   jacobian_interp_bound, jacobian_sweep, reverse_evolution_mass_1d,
                                   jacobian_chain_1d)
from wienermonge.measures import DiscreteMeasure
from wienermonge.transport import solve_kantorovich

INDICATOR = DensityPair.from_specs({"kind": "interval", "a": -1.0, "b": 1.0},
                                   {"kind": "interval", "a": 0.0, "b": 2.0})

# closed form in 40-digit arithmetic: (a, b, t) -> gamma(T_t([a, b])) for the indicator pair
INDICATOR_ORACLE = {
    (-0.5, 0.5, 0.1): 0.37756791026955864,
    (-0.5, 0.5, 0.9): 0.28364665325137879,
    (-1.0, 1.0, 0.1): 0.68027381370685785,
    (-1.0, 1.0, 0.5): 0.62465526000515504,
    (-1.0, 1.0, 0.9): 0.51111127746102717,
    (0.2, 0.9, 0.1): 0.23420178280475438,
    (0.2, 0.9, 0.5): 0.21192124454229181,
    (0.2, 0.9, 0.9): 0.17566671979264415,
    (-2.0, -0.3, 0.1): 0.22506750512360848,
    (-2.0, -0.3, 0.5): 0.21182040475899973,
    (-2.0, -0.3, 0.9): 0.16984301136750509,
}
INDICATOR_MU = {(-0.5, 0.5): 0.56090642518800311, (-1.0, 1.0): 1.0,
                (0.2, 0.9): 0.34668786899478376, (-2.0, -0.3): 0.3272839650426673}
INDICATOR_RATIO = {(-0.5, 0.5, 0.5): 0.6066084415277592, (-0.5, 0.5, 0.1): 0.67313885759644569,
                   (-0.5, 0.5, 0.9): 0.50569335724101728}
INV_M_INDICATOR = 0.47724986805182079


@pytest.fixture(scope="module")
def indicator_map():
    return MonotoneMap1D(INDICATOR)


@pytest.mark.parametrize("key", sorted(INDICATOR_ORACLE))
def test_indicator_image_mass_matches_oracle(indicator_map, key):
    a, b, t = key
    assert indicator_map.image_mass(a, b, t) == pytest.approx(INDICATOR_ORACLE[key], abs=1e-10)
    assert indicator_map.image_mass_quadrature(a, b, t) == pytest.approx(INDICATOR_ORACLE[key], abs=1e-9)


@pytest.mark.parametrize("ab", sorted(INDICATOR_MU))
def test_indicator_mu_mass(indicator_map, ab):
    assert indicator_map.mu_mass(*ab) == pytest.approx(INDICATOR_MU[ab], abs=1e-12)


def test_indicator_ratios_and_bound(indicator_map):
    assert 1.0 / INDICATOR.bound == pytest.approx(INV_M_INDICATOR, abs=1e-15)
    for (a, b, t), r in INDICATOR_RATIO.items():
        assert indicator_map.image_mass(a, b, t) / indicator_map.mu_mass(a, b) == pytest.approx(r, abs=1e-9)


def test_cdf_ppf_roundtrip():
    F = GaussianCDF1D(make_density({"kind": "sine", "amp": 0.6, "freq": 2.0}))
    q = np.linspace(0.001, 0.999, 101)
    np.testing.assert_allclose(F.cdf(F.ppf(q)), q, atol=1e-13)
    G = GaussianCDF1D(make_density({"kind": "constant"}))
    x = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(G.cdf(x), special.ndtr(x), atol=1e-12)
    H = GaussianCDF1D(make_density({"kind": "interval", "a": 0.0}))
    assert H.ppf(0.0) == 0.0 and H.ppf(1.0) == np.inf
    with pytest.raises(InvalidInputError):
        H.ppf(1.5)


def test_identity_pair_ratio_is_one():
    ident = STANDARD_PAIRS[0]
    rep = evolution_mass_1d((ident["rho1"], ident["rho2"]), n_sets=10, n_cells=2000)
    assert rep.c_hat == pytest.approx(1.0, abs=1e-9)
    assert rep.passed and rep.bound == 1.0


def test_reverse_equals_swapped_forward():
    pair = DensityPair.from_specs(STANDARD_PAIRS[2]["rho1"], STANDARD_PAIRS[2]["rho2"])
    sets = [(-1.0, 0.5), (0.0, 2.0)]
    r1 = reverse_evolution_mass_1d(pair, ts=(0.3,), sets=sets, n_cells=2000)
    r2 = evolution_mass_1d(pair.swapped(), ts=(0.3,), sets=sets, n_cells=2000)
    assert r1.reverse and r1.entries == r2.entries


def test_reverse_point_identity(indicator_map):
    # (1-t) y + t S(y) with y = T(x) equals the forward point at time 1 - t
    x = np.linspace(-0.9, 0.9, 7)
    y = indicator_map(x)
    back = MonotoneMap1D(INDICATOR.swapped())
    np.testing.assert_allclose(back(y), x, atol=1e-12)
    t = 0.3
    np.testing.assert_allclose((1 - t) * y + t * back(y), indicator_map.interpolated(x, 1 - t), atol=1e-12)


def test_strict_mode_raises():
    with pytest.raises(EstimateViolation) as info:
        evolution_mass_1d(INDICATOR, ts=(0.5,), sets=[(-0.5, 0.5)], n_cells=2000, tol=-0.5, strict=True)
    assert not info.value.report.passed


def test_empty_sets_skipped():
    rep = evolution_mass_1d(INDICATOR, ts=(0.5,), sets=[(3.0, 4.0), (-0.5, 0.5)], n_cells=2000)
    assert rep.skipped == 1 and len(rep.entries) == 1


@given(st.floats(-3, 3), st.floats(0.01, 3))
def test_mu_dominated_by_bound(a, w):
    b = a + w
    F = GaussianCDF1D(INDICATOR.rho1, 2000)
    mu = float(F.cdf(b) - F.cdf(a))
    assert mu <= INDICATOR.rho1.bound * float(special.ndtr(b) - special.ndtr(a)) + 1e-12


def test_jacobian_examples():
    lhs, rhs, ok = jacobian_interp_bound([2.0, 0.5], 0.5)
    assert lhs == pytest.approx(1.125) and rhs == pytest.approx(1.0) and ok
    lhs, rhs, ok = jacobian_interp_bound([4.0], 0.25)
    assert lhs == pytest.approx(1.75) and rhs == pytest.approx(np.sqrt(2.0)) and ok
    for bad in ([0.0], [-1.0, 2.0], []):
        with pytest.raises(InvalidInputError):
            jacobian_interp_bound(bad, 0.5)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=16), st.floats(0, 1))
def test_jacobian_bound_property(lam, t):
    assert jacobian_interp_bound(lam, t)[2]


def test_jacobian_sweep_small():
    rep = jacobian_sweep(n_tuples=500, seed=1)
    assert rep.passed and rep.n_checked == 500 * 9


def test_pushforward_identity_and_shift():
    pair = DensityPair.from_specs({"kind": "constant"}, {"kind": "constant"})
    x = np.linspace(-4, 4, 101)
    assert gaussian_pushforward_density(x, x, np.ones_like(x), pair).max_residual == 0.0
    c = 0.7
    shifted = SimpleNamespace(rho1=lambda z: np.ones(z.shape[0]),
                              rho2=lambda y: np.exp(c * y[:, 0] - 0.5 * c * c))
    rep = gaussian_pushforward_density(x, x + c, np.ones_like(x), shifted)
    assert rep.max_residual <= 1e-12 and rep.n_points == x.size


def test_pushforward_monotone_map_fd_jacobian():
    pair = DensityPair.from_specs(STANDARD_PAIRS[2]["rho1"], STANDARD_PAIRS[2]["rho2"])
    T = MonotoneMap1D(pair)
    x = np.linspace(-3, 3, 61)
    h = 1e-4
    jac = (T(x + h) - T(x - h)) / (2 * h)
    assert gaussian_pushforward_density(x, T(x), jac, pair).max_residual <= 1e-6


@pytest.mark.parametrize("spec", STANDARD_PAIRS, ids=[p["name"] for p in STANDARD_PAIRS])
def test_jacobian_chain(spec):
    rep = jacobian_chain_1d((spec["rho1"], spec["rho2"]), n_cells=4000)
    assert rep.passed and rep.n_points > 100


def test_interpolate_examples():
    mu = DiscreteMeasure([[0.0, 0.0]])
    nu = DiscreteMeasure([[2.0, 2.0]])
    plan, _ = solve_kantorovich(mu, nu)
    pts, w = interpolate(plan, 0.25)
    np.testing.assert_allclose(pts, [[0.5, 0.5]])
    assert w.tolist() == [1.0]
    pts, w = interpolate(plan, 0.5, lambda X: X[:, 0] > 1)
    assert pts.shape == (0, 2)
    with pytest.raises(InvalidInputError):
        interpolate(plan, 1.5)


def test_radial_map_is_transport():
    p = RadialPair()
    r = np.linspace(0.01, 3.0, 50)
    assert np.all(p.tau(r) < p.radius) and np.all(np.diff(p.tau(r)) > 0)
    h = 1e-6
    np.testing.assert_allclose(p.tau_prime(r), (p.tau(r + h) - p.tau(r - h)) / (2 * h), rtol=1e-6)
    assert p.bound == pytest.approx(1 / 0.36)


def test_mc_at_time_zero_recovers_gaussian_mass():
    rep = evolution_mass_mc(d=3, ts=(0.0,), n_boxes=10, n=40_000, seed=3)
    sds = RadialPair().coordinate_sd(3)
    for (_, _, est, se, _, _, _, _), (lo, hi, _) in zip(rep.entries, rep.boxes):
        exact = float(np.prod(special.ndtr(hi) - special.ndtr(lo)))
        assert abs(est - exact) <= 4 * se + 1e-12
    assert sds.tolist() == [0.6, 0.6, 1.0]


def test_mc_deterministic_and_csv():
    a = evolution_mass_mc(d=2, ts=(0.5,), n_boxes=5, n=5000, seed=1)
    b = evolution_mass_mc(d=2, ts=(0.5,), n_boxes=5, n=5000, seed=1)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0].startswith("d,set_id,t,gamma_mass")
    lo, hi = a.c_hat_interval
    assert lo <= a.c_hat <= hi
    with pytest.raises(InvalidInputError):
        evolution_mass_mc(d=1)
