import numpy as np
import pytest
from scipy import stats

from wienermonge.errors import DimensionMismatchError, InvalidInputError, ToleranceError
from wienermonge.wiener import (PathEnsemble, dimension_ladder, make_basis, project_measure, reweight,
                                sample_paths, systematic_resample)
from wienermonge.measures import cm_distance


def test_basis_orthonormal_and_pinned():
    B = make_basis(8)
    G = np.array([[B.inner_h(j, k) for k in range(1, 9)] for j in range(1, 9)])
    np.testing.assert_allclose(G, np.eye(8), atol=1e-8)
    assert np.all(B.eval(np.arange(1, 9), 0.0) == 0.0)
    with pytest.raises(InvalidInputError):
        B.eval(9, 0.5)
    with pytest.raises(InvalidInputError):
        make_basis(0)


def test_path_variance_matches_brownian_motion():
    n = 4000
    ens = sample_paths(n, 64, seed=5)
    paths = make_basis(64).paths(ens.coeffs, grid=np.array([0.25, 0.5, 1.0]))
    for j, t in enumerate((0.25, 0.5, 1.0)):
        var = paths[:, j].var()
        # variance of the truncated expansion is slightly below t
        assert abs(var - t) <= 4 * t * np.sqrt(2.0 / n) + 0.01


def test_coefficient_pairing_recovers_coefficients():
    B = make_basis(6)
    c = np.random.default_rng(0).standard_normal((3, 6))
    grid = np.linspace(0, 1, 20001)
    paths = B.paths(c, grid)
    rec = np.stack([B.coeff(k, paths, grid) for k in range(1, 7)], axis=1)
    np.testing.assert_allclose(rec, c, atol=1e-6)


def test_sampling_deterministic_and_uncorrelated():
    a, b = sample_paths(2000, 4, 11), sample_paths(2000, 4, 11)
    assert a.coeffs.tobytes() == b.coeffs.tobytes()
    corr = np.corrcoef(a.coeffs.T)
    assert np.max(np.abs(corr - np.eye(4))) < 4 / np.sqrt(2000) + 0.02
    with pytest.raises(InvalidInputError):
        sample_paths(0, 2, 0)


def test_reweight_constant_is_uniform():
    ens = sample_paths(100, 2, 0)
    w = reweight(ens, {"kind": "constant"}).weights
    np.testing.assert_allclose(w, 0.01)


def test_reweight_halfline():
    ens = sample_paths(10_000, 2, 1)
    r = reweight(ens, {"kind": "interval", "a": 0.0})
    pos = ens.coeffs[:, 0] >= 0
    assert r.weights[~pos].sum() == 0.0
    assert r.weights[pos].sum() == pytest.approx(1.0)
    n_pos = pos.sum()
    assert abs(n_pos - 5000) <= 4 * np.sqrt(10_000 * 0.25)


def test_reweight_disc_fraction():
    n = 20_000
    ens = sample_paths(n, 3, 2)
    r = reweight(ens, {"kind": "disc", "radius": 1.5, "m": 2})
    frac = float(np.mean(r.weights > 0))
    p = stats.chi2.cdf(1.5 ** 2, df=2)
    assert abs(frac - p) <= 4 * np.sqrt(p * (1 - p) / n)


def test_reweight_bound_enforced():
    ens = sample_paths(100, 2, 0)
    with pytest.raises(ToleranceError):
        reweight(ens, {"kind": "sine", "amp": 0.5, "freq": 1.0}, M=1.0)
    with pytest.raises(DimensionMismatchError):
        reweight(sample_paths(10, 1, 0), {"kind": "disc", "m": 2})


def test_projection_and_distance():
    ens = PathEnsemble(np.array([[3.0, 4.0, 1.0], [0.0, 0.0, 1.0]]), np.array([0.5, 0.5]), 0)
    m2 = project_measure(ens, 2)
    assert m2.points.tolist() == [[3.0, 4.0], [0.0, 0.0]]
    assert cm_distance(m2.points[0], m2.points[1]) == pytest.approx(5.0)
    with pytest.raises(DimensionMismatchError):
        project_measure(ens, 4)


def test_cache_roundtrip(tmp_path):
    ens = sample_paths(50, 3, 9)
    p = tmp_path / "ens.bin"
    ens.to_cache(p)
    back = PathEnsemble.from_cache(p)
    assert back.coeffs.tobytes() == ens.coeffs.tobytes() and back.seed == 9
    assert p.stat().st_size == 32 + 50 * 3 * 8
    p.write_bytes(b"x" * 40)
    with pytest.raises(InvalidInputError):
        PathEnsemble.from_cache(p)


def test_systematic_resample_counts():
    idx = systematic_resample([0.5, 0.25, 0.25, 0.0], 8, np.random.default_rng(0))
    assert np.bincount(idx, minlength=4).tolist() == [4, 2, 2, 0]


def test_ladder_equal_densities():
    rep = dimension_ladder({"kind": "sine", "amp": 0.5}, {"kind": "sine", "amp": 0.5},
                           ladder=(1, 2, 4), n=2000, seed=0, subsample=32)
    # separate ensembles, so costs are small but not exactly zero at the bottom rung
    assert rep.monotone and rep.saturated


@pytest.mark.parametrize("seed", [0, 1])
def test_ladder_m1_saturates(seed):
    rep = dimension_ladder({"kind": "interval", "a": 0.0}, {"kind": "sine", "amp": 0.5, "freq": 1.0},
                           ladder=(1, 2, 4, 8), n=5000, seed=seed, subsample=64)
    assert rep.m == 1 and rep.passed
    assert np.ptp(rep.costs) <= 1e-9 * (1 + rep.costs[0])
    assert max(rep.gaps) <= 1e-9


def test_ladder_m2_monotone():
    rep = dimension_ladder({"kind": "disc", "radius": 1.5, "m": 2}, {"kind": "normal", "mean": [0.3, 0.0]},
                           ladder=(1, 2, 4), n=5000, seed=0, subsample=64)
    assert rep.m == 2 and rep.costs[0] <= rep.costs[1] + 1e-12 and rep.passed
    assert rep.to_csv().splitlines()[0] == "d,n_effective,cost,solver_gap"


def test_ladder_input_checks():
    with pytest.raises(InvalidInputError):
        dimension_ladder({"kind": "constant"}, {"kind": "constant"}, ladder=(2, 1))
    with pytest.raises(InvalidInputError):
        dimension_ladder({"kind": "constant"}, {"kind": "constant"}, subsample=1000)
