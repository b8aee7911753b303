"""Test instances: bundled examples, random clouds and collinear families."""
import json
from importlib import resources

import numpy as np

from .errors import InvalidInputError
from .measures import DiscreteMeasure


def bundled_names():
    return sorted(p.name[:-5] for p in resources.files("wienermonge.data").iterdir()
                  if p.name.endswith(".json"))


def bundled(name):
    try:
        text = resources.files("wienermonge.data").joinpath(f"{name}.json").read_text()
    except FileNotFoundError as exc:
        raise InvalidInputError(f"no bundled instance {name!r}; have {bundled_names()}") from exc
    doc = json.loads(text)
    return (DiscreteMeasure.from_json(json.dumps(doc["mu"]), normalize=True),
            DiscreteMeasure.from_json(json.dumps(doc["nu"]), normalize=True))


def random_instance(n, d, seed, m=None, uniform=True):
    """Uniform-in-cube clouds; ``uniform=False`` draws Dirichlet weights."""
    rng = np.random.default_rng(seed)
    m = n if m is None else m
    X = rng.uniform(0.0, 1.0, size=(n, d))
    Y = rng.uniform(0.0, 1.0, size=(m, d))
    if uniform:
        return DiscreteMeasure(X), DiscreteMeasure(Y)
    return DiscreteMeasure(X, rng.dirichlet(np.ones(n))), DiscreteMeasure(Y, rng.dirichlet(np.ones(m)))


def collinear_instance(seed, n_lines=3, dim=2, per_line=(2, 4), spacing=100.0, random_weights=False):
    """Atoms on well separated segments, each segment balanced.

    Every line carries as much source as target mass, and lines are
    ``spacing`` apart while segments have length below ten, so an optimal
    plan never moves mass between lines.  The placement pattern of sources
    versus targets cycles with the line index (see the branches below).
    """
    rng = np.random.default_rng(seed)
    src, tgt, ws, wt = [], [], [], []
    line_mass = rng.dirichlet(np.ones(n_lines)) if random_weights else np.full(n_lines, 1.0 / n_lines)
    for L in range(n_lines):
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        origin = np.zeros(dim)
        origin[L % dim] = spacing * (L + 1)
        origin[(L + 1) % dim] += spacing * (L // dim)
        k = int(rng.integers(per_line[0], per_line[1] + 1))
        pattern = L % 3
        if pattern == 0:
            s = np.sort(rng.uniform(0.0, 5.0, k))
            t = np.sort(rng.uniform(2.5, 8.0, k))
        elif pattern == 1:
            base = np.sort(rng.uniform(0.0, 8.0, 2 * k))
            s, t = base[0::2], base[1::2]
        else:
            s = np.sort(rng.uniform(3.0, 5.0, k))
            t = np.concatenate([rng.uniform(0.0, 2.0, k // 2), rng.uniform(6.0, 8.0, k - k // 2)])
        # a coarse grid makes some sources and targets coincide exactly
        s = np.round(s * 8) / 8
        t = np.round(t * 8) / 8
        if random_weights:
            a = rng.dirichlet(np.ones(k)) * line_mass[L]
            b = rng.dirichlet(np.ones(k)) * line_mass[L]
        else:
            a = b = np.full(k, line_mass[L] / k)
        src += [origin + v * u for v in s]
        tgt += [origin + v * u for v in t]
        ws += list(a)
        wt += list(b)
    return DiscreteMeasure(np.array(src), ws), DiscreteMeasure(np.array(tgt), wt)


def overlapping_instance(seed, n=6, d=2, n_shared=3):
    """Clouds sharing ``n_shared`` atoms, with random weights."""
    rng = np.random.default_rng(seed)
    shared = rng.uniform(0.0, 1.0, size=(n_shared, d))
    X = np.vstack([shared, rng.uniform(0.0, 1.0, size=(n - n_shared, d))])
    Y = np.vstack([shared, rng.uniform(0.0, 1.0, size=(n - n_shared, d))])
    return (DiscreteMeasure(X, rng.dirichlet(np.ones(n))),
            DiscreteMeasure(Y, rng.dirichlet(np.ones(n))))


def from_spec(spec, seed):
    """Instance from a config mapping (``kind`` in bundled/random/collinear/overlapping/files)."""
    spec = dict(spec)
    kind = spec.pop("kind", "bundled")
    if kind == "bundled":
        return bundled(spec.get("name", "square2x2"))
    if kind == "random":
        return random_instance(int(spec.get("n", 6)), int(spec.get("d", 2)), seed,
                               uniform=bool(spec.get("uniform", True)))
    if kind == "collinear":
        return collinear_instance(seed, int(spec.get("n_lines", 3)), int(spec.get("dim", 2)),
                                  random_weights=bool(spec.get("random_weights", False)))
    if kind == "overlapping":
        return overlapping_instance(seed, int(spec.get("n", 6)), int(spec.get("d", 2)),
                                    int(spec.get("n_shared", 3)))
    if kind == "files":
        def load(p):
            return (DiscreteMeasure.from_json(p, normalize=True) if str(p).endswith(".json")
                    else DiscreteMeasure.from_csv(p, normalize=True))
        try:
            return load(spec["mu"]), load(spec["nu"])
        except (KeyError, OSError, ValueError) as exc:
            raise InvalidInputError(f"cannot load instance files: {exc}") from exc
    raise InvalidInputError(f"unknown instance kind {kind!r}")
