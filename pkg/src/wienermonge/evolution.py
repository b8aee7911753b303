"""Displacement interpolation and the Gaussian mass of interpolated sets.

For ``mu = rho1 * gamma`` and ``nu = rho2 * gamma`` with ``rho_i <= M`` the
interpolated sets ``T_t(A)`` satisfy ``gamma(T_t(A)) >= mu(A) / M``.  This
module measures that ratio: by deterministic quadrature on the line, by
Monte Carlo for a radial pair in a few dimensions, and pointwise through
the Jacobian bound behind it.
"""
import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from .densities import DensityPair, make_density
from .errors import EstimateViolation, InvalidInputError, QuadratureError

logger = logging.getLogger(__name__)

DEFAULT_TS = tuple(round(0.1 * k, 1) for k in range(1, 10))
GRID_HALF_WIDTH = 8.0
MIN_SET_MASS = 1e-12
_GL_X, _GL_W = leggauss(5)


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def interpolate(plan, t, A=None):
    """Points ``(1 - t) x + t y`` over support pairs with ``x`` in ``A``.

    ``A`` is a predicate on an ``(n, d)`` array of source points returning a
    boolean mask (``None`` keeps everything).  Masses of coincident images
    are summed.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError("t must lie in [0, 1]")
    X, Y = plan.support_points()
    mask = np.ones(len(plan), dtype=bool) if A is None else np.asarray(A(X), dtype=bool)
    Z = (1.0 - t) * X[mask] + t * Y[mask]
    if Z.shape[0] == 0:
        return Z, np.zeros(0)
    pts, inv = np.unique(Z, axis=0, return_inverse=True)
    return pts, np.bincount(inv.reshape(-1), weights=plan.masses[mask])


def jacobian_interp_bound(eigenvalues, t):
    """``(prod((1-t) + t*lam), prod(lam)**t, lhs >= rhs - 1e-12*max(1, rhs))``."""
    lam = np.asarray(eigenvalues, dtype=np.float64).reshape(-1)
    if lam.size == 0 or np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise InvalidInputError("eigenvalues must be positive and finite")
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError("t must lie in [0, 1]")
    lhs = float(np.prod((1.0 - t) + t * lam))
    rhs = float(np.prod(lam) ** t)
    return lhs, rhs, lhs >= rhs - 1e-12 * max(1.0, rhs)


@dataclass
class JacobianSweepReport:
    n_checked: int
    n_failures: int
    worst_relative_gap: float
    worst_case: tuple

    @property
    def passed(self):
        return self.n_failures == 0


def jacobian_sweep(n_tuples=10_000, ts=DEFAULT_TS, max_dim=16, log_range=(-3.0, 3.0), seed=0):
    """Random eigenvalue tuples (dims 1..max_dim, log-uniform entries) against every t."""
    rng = np.random.default_rng(seed)
    dims = rng.integers(1, max_dim + 1, size=n_tuples)
    fails, checked = 0, 0
    worst, worst_case = -np.inf, ()
    for d in range(1, max_dim + 1):
        k = int(np.sum(dims == d))
        if k == 0:
            continue
        lam = 10.0 ** rng.uniform(*log_range, size=(k, d))
        for t in ts:
            lhs = np.prod((1.0 - t) + t * lam, axis=1)
            rhs = np.prod(lam, axis=1) ** t
            slack = 1e-12 * np.maximum(1.0, rhs)
            bad = lhs < rhs - slack
            fails += int(bad.sum())
            checked += k
            gap = (rhs - lhs) / np.maximum(1.0, rhs)
            a = int(np.argmax(gap))
            if gap[a] > worst:
                worst, worst_case = float(gap[a]), (float(t), tuple(lam[a].tolist()))
    return JacobianSweepReport(checked, fails, worst, worst_case)


class GaussianCDF1D:
    """CDF and quantile of ``rho * gamma`` on the line.

    Cell masses use 5-point Gauss-Legendre on a uniform grid over the
    support clipped to ``[-8, 8]``, with the density's breakpoints inserted
    as nodes.  The support is assumed connected with positive density
    inside, so the CDF is strictly increasing there.
    """

    def __init__(self, density, n_cells=10_000, half_width=GRID_HALF_WIDTH):
        self.density = make_density(density)
        if self.density.m != 1:
            raise InvalidInputError("one-dimensional density required")
        s_lo, s_hi = self.density.support
        self.support = (s_lo, s_hi)
        lo, hi = max(s_lo, -half_width), min(s_hi, half_width)
        bps = [b for b in self.density.breakpoints if lo < b < hi]
        self.nodes = np.union1d(np.linspace(lo, hi, n_cells + 1), bps)
        a, b = self.nodes[:-1], self.nodes[1:]
        cells = self._gl(a, b)
        self.raw_total = float(cells.sum())
        self.cum = np.concatenate([[0.0], np.cumsum(cells)]) / self.raw_total
        self.cum[-1] = 1.0

    def _gl(self, a, b):
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        x = mid[..., None] + half[..., None] * _GL_X
        return half * np.sum(self.density.density_1d(x) * _GL_W, axis=-1)

    def pdf(self, x):
        return self.density.density_1d(np.asarray(x, dtype=np.float64)) / self.raw_total

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        xc = np.clip(x, self.nodes[0], self.nodes[-1])
        k = np.clip(np.searchsorted(self.nodes, xc, side="right") - 1, 0, self.nodes.size - 2)
        out = self.cum[k] + self._gl(self.nodes[k], xc) / self.raw_total
        out = np.where(x <= self.nodes[0], 0.0, np.where(x >= self.nodes[-1], 1.0, out))
        return np.clip(out, 0.0, 1.0)

    def ppf(self, q, iters=80):
        """Quantile by safeguarded Newton inside the bracketing cell.

        ``q = 0`` and ``q = 1`` return the true support ends (possibly infinite).
        """
        q = np.asarray(q, dtype=np.float64)
        if np.any((q < 0) | (q > 1)):
            raise InvalidInputError("quantile level outside [0, 1]")
        flat = q.reshape(-1)
        k = np.clip(np.searchsorted(self.cum, flat, side="left") - 1, 0, self.nodes.size - 2)
        a, b = self.nodes[k].copy(), self.nodes[k + 1].copy()
        x = 0.5 * (a + b)
        for _ in range(iters):
            F = self.cdf(x) - flat
            a = np.where(F < 0, x, a)
            b = np.where(F >= 0, x, b)
            f = self.pdf(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - F / f
            bad = ~np.isfinite(xn) | (xn <= a) | (xn >= b)
            xn = np.where(bad, 0.5 * (a + b), xn)
            if np.all(np.abs(xn - x) <= 1e-15 * np.maximum(1.0, np.abs(x))):
                x = xn
                break
            x = xn
        x = np.where(flat <= 0.0, self.support[0], np.where(flat >= 1.0, self.support[1], x))
        return x.reshape(q.shape) if q.ndim else float(x[0])


class MonotoneMap1D:
    """Monotone map ``T = F2^{-1} o F1`` between ``rho1*gamma`` and ``rho2*gamma``."""

    def __init__(self, pair, n_cells=10_000):
        self.pair = pair
        self.F1 = GaussianCDF1D(pair.rho1, n_cells)
        self.F2 = GaussianCDF1D(pair.rho2, n_cells)

    def __call__(self, x):
        return self.F2.ppf(self.F1.cdf(x))

    def derivative(self, x, Tx=None):
        Tx = self(x) if Tx is None else Tx
        return self.F1.pdf(x) / self.F2.pdf(Tx)

    def interpolated(self, x, t):
        return (1.0 - t) * np.asarray(x) + t * self(x)

    def clip_to_support(self, a, b):
        lo, hi = max(a, self.F1.support[0]), min(b, self.F1.support[1])
        return (lo, hi) if lo < hi else None

    def mu_mass(self, a, b):
        return float(self.F1.cdf(b) - self.F1.cdf(a))

    def image_mass(self, a, b, t):
        """``gamma(T_t([a, b] within spt mu))`` from the image endpoints.

        ``T_t`` is continuous and strictly increasing on the support, so the
        image of an interval is the interval between the endpoint images.
        """
        piece = self.clip_to_support(a, b)
        if piece is None:
            return 0.0
        lo, hi = piece
        ends = np.array([lo, hi])
        T = self(ends)
        with np.errstate(invalid="ignore"):
            Tt = np.where(np.isinf(T), T, (1.0 - t) * ends + t * T) if t > 0 else ends
        Tt = np.where(np.isinf(ends), ends, Tt)
        return float(special.ndtr(Tt[1]) - special.ndtr(Tt[0]))

    def image_mass_quadrature(self, a, b, t, n_sub=400):
        """Same mass by integrating ``phi(T_t) * T_t'`` (cross-check; finite pieces only)."""
        piece = self.clip_to_support(a, b)
        if piece is None:
            return 0.0
        lo = max(piece[0], self.F1.nodes[0])
        hi = min(piece[1], self.F1.nodes[-1])
        edges = np.linspace(lo, hi, n_sub + 1)
        half = 0.5 * np.diff(edges)
        x = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * _GL_X
        Tx = self(x)
        jac = (1.0 - t) + t * self.derivative(x, Tx)
        vals = _phi((1.0 - t) * x + t * Tx) * jac
        return float(np.sum(half * np.sum(vals * _GL_W, axis=1)))


@dataclass
class EvolutionReport:
    """Measured ratios ``gamma(T_t(A)) / mu(A)``; ``c_hat`` is their minimum."""

    entries: list
    bound: float
    tol: float
    skipped: int = 0
    reverse: bool = False
    label: str = ""

    @property
    def c_hat(self):
        return min((e[4] for e in self.entries), default=float("nan"))

    @property
    def passed(self):
        return bool(self.entries) and self.c_hat >= self.bound - self.tol

    def to_csv(self, path=None, header_comment=None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["set_id", "t", "gamma_mass", "mu_mass", "ratio"])
        for sid, t, g, m, r in self.entries:
            w.writerow([sid, repr(float(t)), repr(float(g)), repr(float(m)), repr(float(r))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary_line(self):
        side = "reverse" if self.reverse else "forward"
        return (f"{self.label or 'evolution'} [{side}]: C_hat={self.c_hat:.6f} 1/M={self.bound:.6f} "
                f"tol={self.tol} {'PASS' if self.passed else 'FAIL'}")


def random_intervals(n, seed, cdf=None, span=4.0):
    """Seeded test intervals: half are quantile ranges of ``cdf``, half uniform in ``[-span, span]``.

    With ``cdf`` given, the uniform half is drawn inside its support so no set is empty.
    """
    rng = np.random.default_rng(seed)
    lo, hi = (-span, span) if cdf is None else (max(-span, cdf.support[0]), min(span, cdf.support[1]))
    out = []
    for k in range(n):
        if cdf is not None and k % 2 == 0:
            u = np.sort(rng.uniform(0.0, 1.0, size=2))
            a, b = cdf.ppf(u)
            a, b = float(max(a, -span)), float(min(b, span))
        else:
            a, b = np.sort(rng.uniform(lo, hi, size=2))
        if not a < b:
            a, b = a, a + 1e-3
        out.append((float(a), float(b)))
    return out


def evolution_mass_1d(pair, ts=DEFAULT_TS, sets=None, n_sets=50, seed=0, n_cells=10_000,
                      tol=0.02, richardson_tol=1e-6, strict=False, label=""):
    """Measure ``gamma(T_t(A)) / mu(A)`` over test intervals and times.

    The monotone map is built twice, on ``n_cells`` and ``2 * n_cells``
    cells; image masses that differ by more than ``richardson_tol`` raise
    ``QuadratureError``.  Reported values come from the finer grid.  Sets
    with ``mu(A) < 1e-12`` are skipped and counted.
    """
    if not isinstance(pair, DensityPair):
        pair = DensityPair.from_specs(*pair)
    if any(not 0.0 < t < 1.0 for t in ts):
        raise InvalidInputError("interpolation times must lie in (0, 1)")
    coarse = MonotoneMap1D(pair, n_cells)
    fine = MonotoneMap1D(pair, 2 * n_cells)
    if sets is None:
        sets = random_intervals(n_sets, seed, fine.F1)
    entries, skipped = [], 0
    for sid, (a, b) in enumerate(sets):
        mu = fine.mu_mass(a, b)
        if mu < MIN_SET_MASS:
            skipped += 1
            continue
        for t in ts:
            g_f = fine.image_mass(a, b, t)
            g_c = coarse.image_mass(a, b, t)
            if abs(g_f - g_c) > richardson_tol:
                raise QuadratureError(
                    f"set {sid} [{a:.4g}, {b:.4g}], t={t}: grid refinement changed the mass "
                    f"by {abs(g_f - g_c):.3e}")
            entries.append((sid, float(t), g_f, mu, g_f / mu))
    report = EvolutionReport(entries, 1.0 / pair.bound, tol, skipped, label=label)
    if strict and not report.passed:
        raise EstimateViolation(report.summary_line(), report)
    return report


def reverse_evolution_mass_1d(pair, ts=DEFAULT_TS, sets=None, **kw):
    """Target-side estimate ``gamma(T_{1-t}(pairs ending in A)) / nu(A)``.

    With ``S = T^{-1}`` the point ``(1 - (1-t)) x + (1-t) T(x)`` equals
    ``(1-t) y + t S(y)``, so this is the forward computation for the
    swapped pair at the same ``t``.  Default test sets come from a stream
    independent of the forward one: quantile-range sets drawn with the same
    seed would be exact images ``T(A)`` of the forward sets and just repeat
    the forward ratios at ``1 - t``.
    """
    if not isinstance(pair, DensityPair):
        pair = DensityPair.from_specs(*pair)
    if sets is None:
        kw["seed"] = [int(kw.get("seed", 0)), 1]
    rep = evolution_mass_1d(pair.swapped(), ts=ts, sets=sets, **kw)
    rep.reverse = True
    return rep


@dataclass
class PushforwardReport:
    max_residual: float
    residuals: np.ndarray
    n_points: int


def gaussian_pushforward_density(x, Tx, jac, pair):
    """Relative residual of ``rho2(T) * Jac * phi(T) = rho1 * phi`` at sample points.

    ``x`` and ``Tx`` are ``(n,)`` or ``(n, d)``; points with ``rho1(x) = 0`` are skipped.
    """
    x = np.asarray(x, dtype=np.float64)
    Tx = np.asarray(Tx, dtype=np.float64)
    if x.ndim == 1:
        x, Tx = x[:, None], Tx[:, None]
    jac = np.asarray(jac, dtype=np.float64).reshape(-1)
    if np.any(jac <= 0):
        raise InvalidInputError("Jacobian must be positive")
    from .densities import gaussian_pdf
    left = pair.rho2(Tx) * jac * gaussian_pdf(Tx)
    right = pair.rho1(x) * gaussian_pdf(x)
    ok = right > 0
    res = np.abs(left[ok] - right[ok]) / right[ok]
    return PushforwardReport(float(np.max(res, initial=0.0)), res, int(ok.sum()))


@dataclass
class ChainReport:
    max_shortfall: float
    n_points: int
    tol: float

    @property
    def passed(self):
        return self.max_shortfall <= self.tol


def jacobian_chain_1d(pair, ts=DEFAULT_TS, grid=None, n_cells=10_000, tol=1e-9):
    """Pointwise check of the Gaussian-weighted Jacobian inequality on a grid.

    ``exp(-(T_t^2 - x^2)/2) * T_t'  >=  (rho1/rho2(T))^t * exp((x - T)^2 (t - t^2)/2)``
    """
    if not isinstance(pair, DensityPair):
        pair = DensityPair.from_specs(*pair)
    tmap = MonotoneMap1D(pair, n_cells)
    if grid is None:
        grid = np.linspace(-6.0, 6.0, 4001)
    x = np.asarray(grid, dtype=np.float64)
    x = x[(pair.rho1(x) > 0) & (tmap.F1.cdf(x) > 0) & (tmap.F1.cdf(x) < 1)]
    Tx = tmap(x)
    keep = np.isfinite(Tx) & (pair.rho2(Tx) > 0)
    x, Tx = x[keep], Tx[keep]
    dT = tmap.derivative(x, Tx)
    worst = 0.0
    for t in ts:
        Tt = (1.0 - t) * x + t * Tx
        log_lhs = -0.5 * (Tt * Tt - x * x) + np.log((1.0 - t) + t * dT)
        log_rhs = t * np.log(pair.rho1(x) / pair.rho2(Tx)) + 0.5 * (x - Tx) ** 2 * (t - t * t)
        shortfall = 1.0 - np.exp(log_lhs - log_rhs)
        worst = max(worst, float(np.max(shortfall, initial=-np.inf)))
    return ChainReport(worst, int(x.size), tol)


# -- radial pair in several dimensions ---------------------------------------

@dataclass(frozen=True)
class RadialPair:
    """``mu = N(0, sd^2 I_2) x gamma``, ``nu = gamma restricted to a disc of radius r0 (first two coords)``.

    Both are rotation invariant in the first two coordinates, so the
    quadratic-cost optimal map is radial: ``x -> tau(|x|) x / |x|`` there
    and the identity on the remaining coordinates.
    """

    sd: float = 0.6
    radius: float = 2.0
    m: int = 2

    @property
    def densities(self):
        return DensityPair(make_density({"kind": "normal", "mean": [0.0, 0.0], "sd": self.sd}),
                           make_density({"kind": "disc", "radius": self.radius, "m": 2}))

    @property
    def bound(self):
        return self.densities.bound

    @property
    def _znu(self):
        return -np.expm1(-0.5 * self.radius ** 2)

    def tau(self, r):
        q = -np.expm1(-0.5 * (r / self.sd) ** 2)
        return np.sqrt(-2.0 * np.log1p(-q * self._znu))

    def tau_prime(self, r):
        s2 = self.sd ** 2
        tr = self.tau(r)
        f_mu = r / s2 * np.exp(-0.5 * r * r / s2)
        f_nu = tr * np.exp(-0.5 * tr * tr) / self._znu
        return f_mu / f_nu

    def transport(self, X):
        """Map and eigenvalues (radial, tangential) at each row of ``X``."""
        r = np.linalg.norm(X[:, :2], axis=1)
        safe = np.where(r > 0, r, 1.0)
        tr = self.tau(safe)
        scale = np.where(r > 0, tr / safe, self.tau_prime(1e-12))
        T = X.copy()
        T[:, :2] *= scale[:, None]
        return T, self.tau_prime(safe), scale

    def sample(self, n, d, rng):
        X = rng.standard_normal((n, d))
        X[:, :2] *= self.sd
        return X

    def coordinate_sd(self, d):
        return np.array([self.sd] * 2 + [1.0] * (d - 2))


@dataclass
class MCReport:
    d: int
    entries: list  # (box_id, t, estimate, std_error, mu_mass, ratio, ratio_lo, ratio_hi)
    bound: float
    tol: float
    n: int
    boxes: list = field(default_factory=list)

    @property
    def c_hat(self):
        return min((e[5] for e in self.entries), default=float("nan"))

    @property
    def c_hat_interval(self):
        e = min(self.entries, key=lambda e: e[5])
        return e[6], e[7]

    @property
    def passed(self):
        return bool(self.entries) and self.c_hat >= self.bound - self.tol

    def to_csv(self, path=None, header_comment=None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "set_id", "t", "gamma_mass", "std_error", "mu_mass", "ratio", "ratio_lo3", "ratio_hi3"])
        for e in self.entries:
            w.writerow([self.d, e[0]] + [repr(float(v)) for v in e[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def random_boxes(n_boxes, sds, rng, min_mass=0.01):
    """Axis boxes built from per-coordinate quantile ranges, each of mass >= ``min_mass``."""
    d = len(sds)
    out = []
    while len(out) < n_boxes:
        width = rng.uniform(0.3, 1.0, size=d)
        start = rng.uniform(0.0, 1.0 - width)
        lo = special.ndtri(start) * sds
        hi = special.ndtri(start + width) * sds
        mass = float(np.prod(special.ndtr(hi / sds) - special.ndtr(lo / sds)))
        if mass >= min_mass:
            out.append((lo, hi, mass))
    return out


def evolution_mass_mc(pair=None, d=2, ts=DEFAULT_TS, n_boxes=50, n=100_000, seed=0, tol=0.05):
    """Monte Carlo ``gamma_d(T_t(A)) / mu_d(A)`` for the radial pair.

    ``gamma_d(T_t(A)) = E_mu[1_A Jac(T_t) phi_d(T_t X) / (rho1(X) phi_d(X))]``
    with ``X ~ mu``; ``mu(A)`` of a box is exact.  Each ratio carries a
    3-sigma interval from the sample standard error.
    """
    pair = RadialPair() if pair is None else pair
    if d < pair.m:
        raise InvalidInputError(f"d must be at least {pair.m}")
    rng = np.random.default_rng([seed, d])
    X = pair.sample(n, d, rng)
    T, lam_r, lam_tan = pair.transport(X)
    log_rho1 = np.log(pair.densities.rho1(X))
    sq_x = np.sum(X * X, axis=1)
    boxes = random_boxes(n_boxes, pair.coordinate_sd(d), rng)
    inside = [np.all((X >= lo) & (X <= hi), axis=1) for lo, hi, _ in boxes]
    entries = []
    for t in ts:
        Tt = (1.0 - t) * X + t * T
        log_w = (np.log((1.0 - t) + t * lam_r) + np.log((1.0 - t) + t * lam_tan)
                 - 0.5 * (np.sum(Tt * Tt, axis=1) - sq_x) - log_rho1)
        w = np.exp(log_w)
        for b, (mask, (_, _, mass)) in enumerate(zip(inside, boxes)):
            v = np.where(mask, w, 0.0)
            est = float(v.mean())
            se = float(v.std(ddof=1) / np.sqrt(n))
            r = est / mass
            entries.append((b, float(t), est, se, mass, r, r - 3 * se / mass, r + 3 * se / mass))
    return MCReport(d, entries, 1.0 / pair.bound, tol, n, boxes)


def nondegeneracy_diagnostics(result):
    """Mass at initial/final ray points and the heaviest conditional atom of a pipeline run."""
    decomp = result.decomposition
    mu_rem, nu_rem = result.mu_dis.measure, result.nu_dis.measure

    def mass_at(m, pids):
        pts = {tuple(decomp.points[p].tolist()) for p in pids}
        return float(sum(w for p, w in zip(m.points, m.weights) if tuple(p.tolist()) in pts))

    heaviest = max((float(c.weights.max()) for c in result.mu_dis.conditionals.values()), default=0.0)
    return {
        "initial_point_mass": mass_at(mu_rem, decomp.initial_points),
        "final_point_mass": mass_at(nu_rem, decomp.final_points),
        "max_conditional_atom": heaviest,
        "n_rays": len(decomp.rays),
    }
