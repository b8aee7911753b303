"""Bounded densities with respect to the standard Gaussian.

Each density depends on the first ``m`` coordinates only and carries an
analytic bound ``M`` with ``0 <= rho <= M``.  Specs are plain dicts so they
can live in config files::

    {"kind": "interval", "a": -1.0, "b": 1.0}
    {"kind": "normal", "mean": [0.3], "sd": 0.8}
"""
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import InvalidInputError

KINDS = ("constant", "interval", "sine", "tanh", "normal", "disc")


def _phi(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Density:
    kind: str
    params: tuple
    m: int
    bound: float
    support: tuple  # 1D support interval of coordinate 0, as (lo, hi)
    breakpoints: tuple  # 1D discontinuities of coordinate 0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x[None]
        if x.ndim == 1:
            x = x[:, None] if self.m == 1 else x[None, :]
        if x.shape[-1] < self.m:
            raise InvalidInputError(f"density needs {self.m} coordinates, got {x.shape[-1]}")
        return _EVAL[self.kind](self, x[..., : self.m])

    def density_1d(self, x):
        """``rho(x) * phi(x)`` for ``m = 1`` (Lebesgue density of the measure)."""
        x = np.asarray(x, dtype=np.float64)
        return self(x.reshape(-1, 1)).reshape(x.shape) * _phi(x)

    def spec(self):
        return {"kind": self.kind, **dict(self.params)}


def _p(d, key):
    return dict(d.params)[key]


def _eval_constant(d, x):
    return np.ones(x.shape[:-1])


def _eval_interval(d, x):
    a, b = _p(d, "a"), _p(d, "b")
    v = x[..., 0]
    return np.where((v >= a) & (v <= b), d.bound, 0.0)


def _eval_sine(d, x):
    return 1.0 + _p(d, "amp") * np.sin(_p(d, "freq") * x[..., 0])


def _eval_tanh(d, x):
    return 1.0 + _p(d, "amp") * np.tanh(_p(d, "scale") * x[..., 0])


def _eval_normal(d, x):
    mean = np.asarray(_p(d, "mean"))
    s = _p(d, "sd")
    z = (x - mean) / s
    log = np.sum(-0.5 * z * z + 0.5 * x * x, axis=-1) - d.m * np.log(s)
    return np.exp(log)


def _eval_disc(d, x):
    r = _p(d, "radius")
    return np.where(np.sum(x * x, axis=-1) <= r * r, d.bound, 0.0)


_EVAL = {"constant": _eval_constant, "interval": _eval_interval, "sine": _eval_sine,
         "tanh": _eval_tanh, "normal": _eval_normal, "disc": _eval_disc}


def _normal_bound(mean, s):
    # per coordinate, max of x^2/2 - (x - m)^2 / (2 s^2) is at x = m / (1 - s^2)
    total = 0.0
    for mu in mean:
        x = mu / (1.0 - s * s)
        total += 0.5 * x * x - 0.5 * ((x - mu) / s) ** 2 - np.log(s)
    return float(np.exp(total))


def make_density(spec):
    """Build a ``Density`` from a spec dict (see module docstring)."""
    if isinstance(spec, Density):
        return spec
    spec = dict(spec)
    kind = spec.pop("kind", None)
    inf = np.inf
    if kind == "constant":
        return Density(kind, (), 1, 1.0, (-inf, inf), ())
    if kind == "interval":
        a, b = float(spec.get("a", -inf)), float(spec.get("b", inf))
        if not a < b:
            raise InvalidInputError("interval needs a < b")
        z = float(special.ndtr(b) - special.ndtr(a))
        bps = tuple(v for v in (a, b) if np.isfinite(v))
        return Density(kind, (("a", a), ("b", b)), 1, 1.0 / z, (a, b), bps)
    if kind in ("sine", "tanh"):
        amp = float(spec.get("amp", 0.5))
        if not 0 <= amp < 1:
            raise InvalidInputError(f"{kind} amplitude must lie in [0, 1)")
        key = "freq" if kind == "sine" else "scale"
        val = float(spec.get(key, 1.0))
        return Density(kind, (("amp", amp), (key, val)), 1, 1.0 + amp, (-inf, inf), ())
    if kind == "normal":
        mean = tuple(float(v) for v in np.atleast_1d(spec.get("mean", [0.0])))
        s = float(spec.get("sd", 0.8))
        if not 0 < s < 1:
            raise InvalidInputError("normal density needs 0 < sd < 1 to be bounded")
        return Density(kind, (("mean", mean), ("sd", s)), len(mean), _normal_bound(mean, s),
                       (-inf, inf), ())
    if kind == "disc":
        m = int(spec.get("m", 2))
        r = float(spec.get("radius", 2.0))
        z = float(stats.chi2.cdf(r * r, df=m))
        sup = (-r, r) if m == 1 else (-inf, inf)
        return Density(kind, (("radius", r), ("m", m)), m, 1.0 / z, sup, (-r, r) if m == 1 else ())
    raise InvalidInputError(f"unknown density kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class DensityPair:
    rho1: Density
    rho2: Density

    @property
    def bound(self):
        return max(self.rho1.bound, self.rho2.bound)

    @property
    def m(self):
        return max(self.rho1.m, self.rho2.m)

    def swapped(self):
        return DensityPair(self.rho2, self.rho1)

    @classmethod
    def from_specs(cls, a, b):
        return cls(make_density(a), make_density(b))


def gaussian_pdf(x):
    """Standard Gaussian density in R^d (last axis)."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    return np.exp(-0.5 * np.sum(x * x, axis=-1)) / (2.0 * np.pi) ** (0.5 * d)
