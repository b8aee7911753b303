"""Discrete measures on R^d, the Cameron-Martin distance on coefficient
vectors, common-mass reduction and one-dimensional quantiles."""
import csv
import io
import json
import logging
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError

logger = logging.getLogger(__name__)

PRUNE_BELOW = 1e-15


def _readonly(a):
    a.setflags(write=False)
    return a


class DiscreteMeasure:
    """Weighted point cloud in R^d.

    Parameters
    ----------
    points : array_like, shape (n, d)
    weights : array_like, shape (n,)
        Nonnegative.  Atoms with weight below ``PRUNE_BELOW`` are dropped.
    normalize : bool
        Rescale the weights to total mass one.  Pass ``False`` for
        sub-probability pieces such as the output of ``common_mass_split``.

    Points are not merged; ``merged()`` returns a copy with coincident atoms
    combined.
    """

    def __init__(self, points, weights=None, normalize=True):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise InvalidInputError(f"points must be 2-D, got shape {pts.shape}")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / max(pts.shape[0], 1))
        else:
            w = np.array(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise InvalidInputError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("non-finite coordinates")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInputError("weights must be finite and nonnegative")
        if pts.shape[1] < 1:
            raise InvalidInputError("dimension must be positive")
        keep = w >= PRUNE_BELOW
        if not np.all(keep):
            dropped = w[~keep].sum()
            pts, w = pts[keep], w[keep]
            if dropped > 0:
                logger.debug("pruned %d atoms carrying mass %.3e", int((~keep).sum()), dropped)
        if normalize:
            total = w.sum()
            if total <= 0:
                raise InvalidInputError("measure has no mass")
            if total != 1.0:
                logger.debug("renormalized by factor %.17g", 1.0 / total)
                w = w / total
        self._points = _readonly(pts)
        self._weights = _readonly(w)
        self._dim = pts.shape[1]

    @property
    def points(self):
        return self._points

    @property
    def weights(self):
        return self._weights

    @property
    def dim(self):
        return self._dim

    @property
    def mass(self):
        return float(self._weights.sum())

    def __len__(self):
        return self._points.shape[0]

    def __repr__(self):
        return f"DiscreteMeasure(n={len(self)}, dim={self.dim}, mass={self.mass:.6g})"

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    def normalized(self):
        return DiscreteMeasure(self.points, self.weights, normalize=True)

    def scaled(self, factor):
        """Same atoms, weights multiplied by ``factor`` (not renormalized)."""
        return DiscreteMeasure(self.points, self.weights * factor, normalize=False)

    def project(self, d):
        """First ``d`` coordinates of every atom."""
        if not 1 <= d <= self.dim:
            raise DimensionMismatchError(f"cannot project dim {self.dim} to {d}")
        return DiscreteMeasure(self.points[:, :d], self.weights, normalize=False)

    def merged(self):
        """Combine atoms at identical coordinates, keeping first-seen order."""
        index = {}
        order = []
        acc = []
        for p, w in zip(self.points, self.weights):
            key = tuple(p.tolist())
            k = index.get(key)
            if k is None:
                index[key] = len(order)
                order.append(p)
                acc.append(w)
            else:
                acc[k] += w
        return DiscreteMeasure(np.array(order).reshape(-1, self.dim), acc, normalize=False)

    def atom_index(self):
        """Dict from coordinate tuple to atom index (last occurrence wins)."""
        return {tuple(p.tolist()): i for i, p in enumerate(self.points)}

    # -- serialization -----------------------------------------------------

    def to_csv(self, path=None):
        """Columnar CSV: ``weight, x0, ..., x{d-1}``; shortest round-trip floats."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["weight"] + [f"x{k}" for k in range(self.dim)])
        for p, w in zip(self.points, self.weights):
            writer.writerow([repr(float(w))] + [repr(float(c)) for c in p])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, normalize=False):
        """Read the CSV form; ``source`` is a path or the CSV text itself."""
        text = _read_text(source)
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if not rows or rows[0][0] != "weight":
            raise InvalidInputError("missing 'weight' header")
        dim = len(rows[0]) - 1
        body = rows[1:]
        w = [float(r[0]) for r in body]
        pts = np.array([[float(c) for c in r[1:]] for r in body], dtype=np.float64).reshape(-1, dim)
        return cls(pts, w, normalize=normalize)

    def to_json(self, path=None):
        doc = {
            "dim": self.dim,
            "atoms": [
                {"weight": float(w), "point": [float(c) for c in p]}
                for p, w in zip(self.points, self.weights)
            ],
        }
        text = json.dumps(doc, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, source, normalize=False):
        doc = json.loads(_read_text(source))
        dim = int(doc["dim"])
        pts = np.array([a["point"] for a in doc["atoms"]], dtype=np.float64).reshape(-1, dim)
        w = [a["weight"] for a in doc["atoms"]]
        return cls(pts, w, normalize=normalize)


def _read_text(source):
    if isinstance(source, str) and ("\n" in source or source.lstrip().startswith("{")):
        return source
    with open(source) as fh:
        return fh.read()


class OneDimMeasure:
    """Atomic measure on the line with strictly increasing positions.

    Duplicate positions are merged.  Weights are normalized to one unless
    ``normalize=False``; ``total`` reports the mass either way.
    """

    def __init__(self, positions, weights, normalize=True):
        x = np.asarray(positions, dtype=np.float64).reshape(-1)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if x.shape != w.shape:
            raise InvalidInputError("positions and weights differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))) or np.any(w < 0):
            raise InvalidInputError("positions/weights must be finite, weights nonnegative")
        keep = w >= PRUNE_BELOW
        x, w = x[keep], w[keep]
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if x.size:
            uniq, start = np.unique(x, return_index=True)
            w = np.add.reduceat(w, start)
            x = uniq
        if normalize:
            total = w.sum()
            if total <= 0:
                raise InvalidInputError("measure has no mass")
            w = w / total
        self.positions = _readonly(x)
        self.weights = _readonly(w)

    @property
    def total(self):
        return float(self.weights.sum())

    def __len__(self):
        return self.positions.size

    def __repr__(self):
        return f"OneDimMeasure(n={len(self)}, total={self.total:.6g})"

    def cumulative(self):
        """Cumulative weights at each atom, last entry pinned to ``total``."""
        cum = np.cumsum(self.weights)
        if cum.size:
            cum[-1] = self.total
        return cum

    def cdf(self, x):
        cum = self.cumulative()
        idx = np.searchsorted(self.positions, np.asarray(x, dtype=np.float64), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0) / self.total

    def quantile(self, q):
        return quantile_function(self, q)


def cm_distance(x, y):
    """Cameron-Martin distance of two projected paths given by coefficient vectors."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"dimension mismatch: {x.size} vs {y.size}")
    diff = x - y
    return float(np.sqrt(np.sum(diff * diff)))


def pairwise_distances(X, Y):
    """Matrix of ``cm_distance`` values; differences are formed explicitly."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


class CommonMassSplit(NamedTuple):
    common: DiscreteMeasure
    mu_rem: DiscreteMeasure
    nu_rem: DiscreteMeasure


def common_mass_split(mu, nu):
    """Atomwise minimum ``mu ^ nu`` and the two remainders.

    Coincidence is exact coordinate equality.  All three outputs are
    unnormalized, and ``mu = common + mu_rem`` atom by atom.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatchError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    mu_m, nu_m = mu.merged(), nu.merged()
    nu_index = nu_m.atom_index()
    nu_left = nu_m.weights.copy()
    common_pts, common_w = [], []
    mu_left = mu_m.weights.copy()
    for i, p in enumerate(mu_m.points):
        j = nu_index.get(tuple(p.tolist()))
        if j is None:
            continue
        c = min(mu_left[i], nu_left[j])
        common_pts.append(p)
        common_w.append(c)
        mu_left[i] = mu_left[i] - c
        nu_left[j] = nu_left[j] - c
    common = DiscreteMeasure(np.array(common_pts).reshape(-1, mu.dim), common_w, normalize=False)
    mu_rem = DiscreteMeasure(mu_m.points, mu_left, normalize=False)
    nu_rem = DiscreteMeasure(nu_m.points, nu_left, normalize=False)
    return CommonMassSplit(common, mu_rem, nu_rem)


def quantile_function(m, q):
    """Generalized inverse CDF ``inf{x : F(x) >= q}``.

    ``q = 0`` returns the smallest atom.  Accepts scalars or arrays.
    """
    qa = np.asarray(q, dtype=np.float64)
    if np.any(~np.isfinite(qa)) or np.any(qa < 0.0) or np.any(qa > 1.0):
        raise InvalidInputError("quantile level must lie in [0, 1]")
    if len(m) == 0:
        raise InvalidInputError("empty measure")
    cum = m.cumulative() / m.total
    cum[-1] = 1.0
    idx = np.searchsorted(cum, qa, side="left")
    idx = np.minimum(idx, len(m) - 1)
    out = m.positions[idx]
    return float(out) if out.ndim == 0 else out
