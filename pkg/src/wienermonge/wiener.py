"""Classical Wiener space in Karhunen-Loeve coordinates.

Paths are represented by their coefficients on the orthonormal basis
``e_k(t) = sqrt(2) sin(w_k t) / w_k``, ``w_k = (k - 1/2) pi``, of the
Cameron-Martin space ``H^1_0`` (norm ``||h'||_{L^2}``).  Under Wiener
measure these coefficients are i.i.d. standard Gaussians, so sampling is
exact in coefficient space and the Cameron-Martin distance of projected
paths is the Euclidean distance of coefficient vectors.
"""
import csv
import io
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import linear_sum_assignment

from .densities import make_density
from .errors import DimensionMismatchError, InvalidInputError, ToleranceError
from .measures import DiscreteMeasure
from .transport import duality_gap, solve_kantorovich

logger = logging.getLogger(__name__)

PATH_GRID = 1024
CACHE_MAGIC = b"WMENSv01"
_HEADER = struct.Struct("<8sQQQ")


def _omega(k):
    return (np.asarray(k, dtype=np.float64) - 0.5) * np.pi


@dataclass(frozen=True)
class CameronMartinBasis:
    d_max: int

    def eval(self, k, t):
        """``e_k(t)`` for ``k = 1..d_max``."""
        self._check(k)
        w = _omega(k)
        return np.sqrt(2.0) * np.sin(w * np.asarray(t, dtype=np.float64)) / w

    def derivative(self, k, t):
        self._check(k)
        return np.sqrt(2.0) * np.cos(_omega(k) * np.asarray(t, dtype=np.float64))

    def inner_h(self, j, k, n_nodes=64):
        """``int_0^1 e_j' e_k' dt`` by Gauss-Legendre on 16 panels."""
        x, w = leggauss(n_nodes)
        edges = np.linspace(0.0, 1.0, 17)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            t = 0.5 * (a + b) + 0.5 * (b - a) * x
            total += 0.5 * (b - a) * np.sum(w * self.derivative(j, t) * self.derivative(k, t))
        return float(total)

    def coeff(self, k, path, grid=None):
        """Pairing of a path sampled on ``grid`` with the k-th basis element.

        For a Cameron-Martin path this is ``<e_k, x>_H``; it extends to
        continuous paths as ``sqrt(2) w_k int_0^1 sin(w_k t) x(t) dt``
        (integration by parts, ``x(0) = 0``).  Trapezoid rule on the grid.
        """
        self._check(k)
        path = np.asarray(path, dtype=np.float64)
        grid = np.linspace(0.0, 1.0, path.shape[-1]) if grid is None else np.asarray(grid)
        w = _omega(k)
        return np.sqrt(2.0) * w * np.trapezoid(np.sin(w * grid) * path, grid, axis=-1)

    def paths(self, coeffs, grid=None):
        """Reconstruct paths on ``grid`` (default 1024 points on [0, 1])."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
        d = coeffs.shape[1]
        if d > self.d_max:
            raise DimensionMismatchError(f"{d} coefficients exceed d_max={self.d_max}")
        grid = np.linspace(0.0, 1.0, PATH_GRID) if grid is None else np.asarray(grid)
        k = np.arange(1, d + 1)
        E = np.sqrt(2.0) * np.sin(np.outer(_omega(k), grid)) / _omega(k)[:, None]
        return coeffs @ E

    def _check(self, k):
        k = np.asarray(k)
        if np.any(k < 1) or np.any(k > self.d_max):
            raise InvalidInputError(f"basis index out of range 1..{self.d_max}")


def make_basis(d_max):
    if int(d_max) < 1:
        raise InvalidInputError("d_max must be at least 1")
    return CameronMartinBasis(int(d_max))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    coeffs: np.ndarray
    weights: np.ndarray
    seed: object
    grid_size: int = PATH_GRID

    @property
    def n(self):
        return self.coeffs.shape[0]

    @property
    def d(self):
        return self.coeffs.shape[1]

    def effective_size(self):
        return float(1.0 / np.sum(self.weights ** 2))

    def to_cache(self, path):
        """Binary cache: 32-byte header (magic, n, d, seed) then little-endian float64 rows."""
        seed = int(self.seed) if isinstance(self.seed, (int, np.integer)) else 0
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(CACHE_MAGIC, self.n, self.d, seed))
            fh.write(np.ascontiguousarray(self.coeffs, dtype="<f8").tobytes())

    @classmethod
    def from_cache(cls, path):
        with open(path, "rb") as fh:
            magic, n, d, seed = _HEADER.unpack(fh.read(_HEADER.size))
            if magic != CACHE_MAGIC:
                raise InvalidInputError("not an ensemble cache file")
            data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != n * d:
            raise InvalidInputError(f"cache holds {data.size} values, header says {n}x{d}")
        return cls(data.reshape(n, d).astype(np.float64), np.full(n, 1.0 / n), int(seed))


def sample_paths(n, d_trunc, seed):
    """``n`` i.i.d. Wiener paths as their first ``d_trunc`` KL coefficients."""
    if n < 1 or d_trunc < 1:
        raise InvalidInputError("n and d_trunc must be positive")
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((int(n), int(d_trunc)))
    return PathEnsemble(coeffs, np.full(int(n), 1.0 / n), seed)


def reweight(ensemble, rho, M=None):
    """Importance weights proportional to ``rho`` of the leading coefficients.

    Raises ``ToleranceError`` if some sampled value exceeds the bound ``M``
    (default: the density's own bound).
    """
    rho = make_density(rho)
    if rho.m > ensemble.d:
        raise DimensionMismatchError(f"density uses {rho.m} coordinates, ensemble has {ensemble.d}")
    M = rho.bound if M is None else M
    vals = rho(ensemble.coeffs)
    if np.max(vals) > M * (1.0 + 1e-12):
        raise ToleranceError(f"density value {np.max(vals):.6g} exceeds the bound M={M:.6g}")
    w = ensemble.weights * vals
    total = w.sum()
    if total <= 0:
        raise InvalidInputError("density vanishes on every sample")
    return PathEnsemble(ensemble.coeffs, w / total, ensemble.seed, ensemble.grid_size)


def project_measure(ensemble, d):
    if not 1 <= d <= ensemble.d:
        raise DimensionMismatchError(f"cannot project {ensemble.d} coefficients to {d}")
    return DiscreteMeasure(ensemble.coeffs[:, :d], ensemble.weights, normalize=True)


def systematic_resample(weights, k, rng):
    """Indices of ``k`` equal-weight draws by systematic resampling."""
    w = np.asarray(weights, dtype=np.float64)
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    u = (rng.uniform() + np.arange(k)) / k
    return np.searchsorted(cum, u, side="left")


@dataclass
class LadderReport:
    dims: list
    costs: list
    gaps: list
    n_effective: list
    wall_times: list
    m: int
    seed: int
    subsample: int
    mc_se: float
    monotone_tol: float = 1e-9
    extras: dict = field(default_factory=dict)

    def _sat_tol(self, c):
        return 1e-9 * (1.0 + abs(c)) + 3.0 * self.mc_se

    @property
    def monotone(self):
        return all(b >= a - self.monotone_tol * (1.0 + abs(a)) for a, b in zip(self.costs, self.costs[1:]))

    @property
    def saturated(self):
        ref = [c for d, c in zip(self.dims, self.costs) if d >= self.m]
        if not ref:
            return True
        return all(abs(c - ref[0]) <= self._sat_tol(ref[0]) for c in ref)

    @property
    def passed(self):
        return self.monotone and self.saturated

    def to_csv(self, path=None, header_comment=None):
        """``d, n_effective, cost, gap`` per rung (wall times live in the summary)."""
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "n_effective", "cost", "solver_gap"])
        for d, ne, c, g in zip(self.dims, self.n_effective, self.costs, self.gaps):
            w.writerow([d, repr(float(ne)), repr(float(c)), repr(float(g))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def dimension_ladder(mu_spec, nu_spec, ladder=(1, 2, 4, 8), n=20_000, seed=0, subsample=128):
    """Projected optimal costs ``c_d`` for increasing ``d``.

    Both densities depend on the first ``m`` coefficients.  Separate path
    ensembles are drawn and reweighted for mu and nu, then reduced by
    systematic resampling to ``subsample`` equal-weight points.  The
    remaining coefficients of the nu sample are taken from the mu sample
    under the optimal assignment of the first ``m`` coordinates, which
    realizes both measures as ``(m-dim law) x gamma`` with a shared tail;
    each ``c_d`` is then solved exactly on the ``d``-dimensional clouds.
    """
    ladder = [int(d) for d in ladder]
    if ladder != sorted(ladder) or len(set(ladder)) != len(ladder) or ladder[0] < 1:
        raise InvalidInputError("ladder must be strictly ascending positive dimensions")
    if subsample > 512:
        raise InvalidInputError("subsample is limited to 512 points")
    rho_mu, rho_nu = make_density(mu_spec), make_density(nu_spec)
    m = max(rho_mu.m, rho_nu.m)
    d_top = max(ladder[-1], m)
    ss = np.random.SeedSequence(seed)
    s_mu, s_nu, s_rs = ss.spawn(3)
    ens_mu = reweight(sample_paths(n, d_top, np.random.default_rng(s_mu)), rho_mu)
    ens_nu = reweight(sample_paths(n, d_top, np.random.default_rng(s_nu)), rho_nu)
    rng = np.random.default_rng(s_rs)
    X = ens_mu.coeffs[systematic_resample(ens_mu.weights, subsample, rng)]
    Y = ens_nu.coeffs[systematic_resample(ens_nu.weights, subsample, rng)].copy()
    head = X[:, :m][:, None, :] - Y[:, :m][None, :, :]
    _, perm = linear_sum_assignment(np.sqrt(np.sum(head * head, axis=-1)))
    Y[perm, m:] = X[:, m:]

    costs, gaps, n_eff, walls = [], [], [], []
    se = 0.0
    for d in ladder:
        t0 = time.perf_counter()
        mu_d = DiscreteMeasure(X[:, :d], normalize=True)
        nu_d = DiscreteMeasure(Y[:, :d], normalize=True)
        plan, duals = solve_kantorovich(mu_d, nu_d)
        costs.append(plan.cost)
        gaps.append(duality_gap(plan, duals))
        n_eff.append(float(subsample))
        walls.append(time.perf_counter() - t0)
        if d <= max(m, ladder[0]):
            # spread of per-point transport distances: Monte Carlo scale of c_d
            per_point = np.bincount(plan.rows, weights=plan.masses * plan.pair_costs(),
                                    minlength=subsample) * subsample
            se = float(np.std(per_point, ddof=1) / np.sqrt(subsample))
    report = LadderReport(ladder, costs, gaps, n_eff, walls, m, seed, subsample, se,
                          extras={"ess_mu": ens_mu.effective_size(), "ess_nu": ens_nu.effective_size()})
    logger.info("ladder seed=%s costs=%s", seed, costs)
    return report
