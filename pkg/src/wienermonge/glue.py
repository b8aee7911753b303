"""Monotone rearrangement on each ray, glued into one map, plus the
end-to-end pipeline from two measures to a verified map."""
import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, MassMismatchError
from .measures import DiscreteMeasure, common_mass_split, pairwise_distances
from .rays import build_rays, decompose_plan, disintegrate_along_rays
from .transport import solve_kantorovich

logger = logging.getLogger(__name__)

MASS_TOL = 1e-12
QUOTIENT_TOL = 1e-10
LEVEL_SNAP = 1e-14


@dataclass(frozen=True)
class Coupling1D:
    """Quantile coupling: ``masses[k]`` moves from ``source_pos[k]`` to ``target_pos[k]``.

    ``source_index``/``target_index`` point into the input measures' positions.
    """

    source_pos: np.ndarray
    target_pos: np.ndarray
    source_index: np.ndarray
    target_index: np.ndarray
    masses: np.ndarray

    def cost(self, p=1):
        return float(np.sum(self.masses * np.abs(self.target_pos - self.source_pos) ** p))

    def pairs(self):
        return list(zip(self.source_pos.tolist(), self.target_pos.tolist(), self.masses.tolist()))

    def __len__(self):
        return self.masses.size


def monotone_coupling_1d(mu, nu):
    """Couple two line measures by matching quantile levels.

    The union of both cumulative level sets cuts [0, total] into pieces;
    each piece pairs the atoms whose quantile intervals contain it.  Levels
    closer than ``LEVEL_SNAP`` are merged so rounding in cumulative sums
    does not create sliver pieces.
    """
    if len(mu) == 0 or len(nu) == 0:
        raise InvalidInputError("empty measure")
    total = mu.total
    if abs(total - nu.total) > MASS_TOL:
        raise MassMismatchError(f"1D masses differ: {total!r} vs {nu.total!r}")
    cm, cn = mu.cumulative(), nu.cumulative()
    cn[-1] = total
    levels = np.union1d(cm, cn)
    keep = np.concatenate([np.diff(levels) > LEVEL_SNAP, [True]])
    keep[-1] = True
    levels = levels[keep]
    levels[-1] = total
    lo = np.concatenate([[0.0], levels[:-1]])
    mid = 0.5 * (lo + levels)
    i = np.minimum(np.searchsorted(cm, mid, side="left"), len(mu) - 1)
    j = np.minimum(np.searchsorted(cn, mid, side="left"), len(nu) - 1)
    masses = levels - lo
    ok = masses > 0
    i, j, masses = i[ok], j[ok], masses[ok]
    return Coupling1D(mu.positions[i], nu.positions[j], i, j, masses)


@dataclass
class RayCoupling:
    t_source: np.ndarray
    t_target: np.ndarray
    masses: np.ndarray


@dataclass
class GluedMap:
    """Discrete Monge map assembled ray by ray.

    ``pieces`` lists ``(source_id, target_id, mass, ray_id)`` with
    ``ray_id = None`` for fixed mass.  ``assignment`` groups the same data
    by source atom.
    """

    source: DiscreteMeasure
    target: DiscreteMeasure
    pieces: list
    per_ray: dict
    fixed: list = field(default_factory=list)

    @property
    def assignment(self):
        out = {}
        for i, j, m, _ in self.pieces:
            out.setdefault(i, []).append((j, m))
        return {i: sorted(v) for i, v in sorted(out.items())}

    @property
    def cost(self):
        if not self.pieces:
            return 0.0
        i = np.array([p[0] for p in self.pieces])
        j = np.array([p[1] for p in self.pieces])
        m = np.array([p[2] for p in self.pieces])
        diff = self.source.points[i] - self.target.points[j]
        return float(np.sum(m * np.sqrt(np.sum(diff * diff, axis=1))))

    def pushforward(self):
        w = np.zeros(len(self.target))
        for _, j, m, _ in self.pieces:
            w[j] += m
        return w

    def source_marginal(self):
        w = np.zeros(len(self.source))
        for i, _, m, _ in self.pieces:
            w[i] += m
        return w

    def to_csv(self, path=None, header_comment=None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source_id", "target_id", "mass", "ray"])
        for i, j, m, r in self.pieces:
            w.writerow([i, j, repr(float(m)), "FIXED" if r is None else r])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _atom_map(dis_measure, full):
    if full is None:
        return np.arange(len(dis_measure))
    index = full.atom_index()
    out = []
    for p in dis_measure.points:
        k = index.get(tuple(p.tolist()))
        if k is None:
            raise InvalidInputError(f"atom {p.tolist()} not present in the full measure")
        out.append(k)
    return np.array(out, dtype=np.intp)


def glue(decomp, mu_dis, nu_dis, fixed_mass=None, source=None, target=None):
    """Glue per-ray quantile couplings into one map.

    ``mu_dis``/``nu_dis`` are ``Disintegration`` objects over ``decomp``.
    ``fixed_mass`` (a sub-probability ``DiscreteMeasure``) is sent to
    itself.  Ids in the result refer to ``source``/``target`` when given,
    matched by exact coordinates, and to the disintegrated measures
    otherwise.
    """
    source = mu_dis.measure if source is None else source
    target = nu_dis.measure if target is None else target
    smap = _atom_map(mu_dis.measure, source)
    tmap = _atom_map(nu_dis.measure, target)

    rays = sorted(set(mu_dis.quotient) | set(nu_dis.quotient))
    worst, worst_ray = 0.0, None
    for r in rays:
        gap = abs(mu_dis.quotient.get(r, 0.0) - nu_dis.quotient.get(r, 0.0))
        if gap > worst:
            worst, worst_ray = gap, r
    if worst > QUOTIENT_TOL:
        raise MassMismatchError(
            f"ray {worst_ray}: quotient masses differ by {worst:.3e} "
            f"({mu_dis.quotient.get(worst_ray, 0.0)!r} vs {nu_dis.quotient.get(worst_ray, 0.0)!r})"
        )
    leftover = [u for u in mu_dis.unassigned + nu_dis.unassigned if u[2] != "fixed"]
    if leftover:
        raise MassMismatchError(f"{len(leftover)} atoms could not be placed on a ray: {leftover[:3]}")

    acc = {}
    per_ray = {}
    for r in rays:
        q = mu_dis.quotient[r]
        c = monotone_coupling_1d(mu_dis.conditionals[r], nu_dis.conditionals[r])
        per_ray[r] = RayCoupling(c.source_pos, c.target_pos, c.masses * q)
        for a, b, m in zip(c.source_index, c.target_index, c.masses * q):
            src = mu_dis.atoms[r][a]
            tgt = nu_dis.atoms[r][b]
            sa = sum(x[1] for x in src)
            sb = sum(x[1] for x in tgt)
            for ia, ma in src:
                for ib, mb in tgt:
                    key = (int(smap[ia]), int(tmap[ib]), r)
                    acc[key] = acc.get(key, 0.0) + m * (ma / sa) * (mb / sb)

    fixed = []
    if fixed_mass is not None and len(fixed_mass):
        sidx, tidx = source.atom_index(), target.atom_index()
        for p, w in zip(fixed_mass.points, fixed_mass.weights):
            key = tuple(p.tolist())
            if key not in sidx or key not in tidx:
                raise InvalidInputError(f"fixed atom {list(key)} missing from source or target")
            fixed.append((sidx[key], tidx[key], float(w)))
    pieces = [(i, j, float(m), r) for (i, j, r), m in sorted(acc.items(), key=lambda kv: kv[0])]
    pieces += [(i, j, m, None) for i, j, m in fixed]
    return GluedMap(source, target, pieces, per_ray, fixed)


@dataclass
class MapReport:
    pushforward_residual: float
    source_residual: float
    map_cost: float
    plan_cost: float
    monotonicity_violations: list
    bijective: bool
    cost_tol: float

    @property
    def cost_difference(self):
        return self.map_cost - self.plan_cost

    @property
    def passed(self):
        return (self.pushforward_residual <= QUOTIENT_TOL and self.source_residual <= QUOTIENT_TOL
                and abs(self.cost_difference) <= self.cost_tol and not self.monotonicity_violations)

    def as_dict(self):
        return {
            "pushforward_residual": self.pushforward_residual,
            "source_residual": self.source_residual,
            "map_cost": self.map_cost,
            "plan_cost": self.plan_cost,
            "cost_difference": self.cost_difference,
            "monotonicity_violations": len(self.monotonicity_violations),
            "bijective": self.bijective,
            "passed": self.passed,
        }


def verify_map(gmap, mu, nu, plan, tol=1e-12):
    """Push-forward, cost, per-ray monotonicity and bijectivity of a glued map.

    ``mu``/``nu`` must be the map's own source and target (same atom order).
    """
    if len(mu) != len(gmap.source) or len(nu) != len(gmap.target):
        raise InvalidInputError("map does not belong to these measures")
    push = gmap.pushforward()
    residual = float(np.max(np.abs(push - nu.weights), initial=0.0))
    src_res = float(np.max(np.abs(gmap.source_marginal() - mu.weights), initial=0.0))
    cost = gmap.cost

    violations = []
    for r, rc in sorted(gmap.per_ray.items()):
        s, t = rc.t_source, rc.t_target
        bad = (s[:, None] < s[None, :] - tol) & (t[:, None] > t[None, :] + tol)
        if bad.any():
            a, b = np.argwhere(bad)[0]
            violations.append((r, (float(s[a]), float(t[a])), (float(s[b]), float(t[b]))))

    bijective = False
    if len(mu) == len(nu):
        asg = gmap.assignment
        if len(asg) == len(mu) and all(len(v) == 1 for v in asg.values()):
            targets = [v[0][0] for v in asg.values()]
            bijective = len(set(targets)) == len(targets)
    cost_tol = 1e-9 + 1e-9 * abs(plan.cost)
    return MapReport(residual, src_res, cost, plan.cost, violations, bijective, cost_tol)


@dataclass
class PipelineResult:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    common: DiscreteMeasure
    plan: object
    remainder_plan: object
    decomposition: object
    mu_dis: object
    nu_dis: object
    glued: GluedMap
    report: MapReport


def _empty_like(m):
    return DiscreteMeasure(np.zeros((0, m.dim)), np.zeros(0), normalize=False)


def monge_pipeline(mu, nu, max_cycle_len=3, tol=None):
    """Fix common mass, solve the remainder, decompose into rays, glue, verify.

    The reference cost for verification is the unconstrained optimum of
    ``(mu, nu)``.
    """
    mu_m, nu_m = mu.merged(), nu.merged()
    plan, _ = solve_kantorovich(mu_m, nu_m)
    split = common_mass_split(mu_m, nu_m)
    rem = split.mu_rem.mass
    if rem > 0 and len(split.mu_rem) and len(split.nu_rem):
        rplan, _ = solve_kantorovich(split.mu_rem.normalized(), split.nu_rem.normalized())
        decomp, _ = decompose_plan(rplan, max_cycle_len=max_cycle_len, tol=tol)
        mu_dis = disintegrate_along_rays(split.mu_rem, decomp, plan=rplan, side="source")
        nu_dis = disintegrate_along_rays(split.nu_rem, decomp, plan=rplan, side="target")
    else:
        rplan = None
        decomp = build_rays(np.zeros((0, 2), np.intp), np.zeros((0, mu.dim)))
        mu_dis = disintegrate_along_rays(_empty_like(mu_m), decomp)
        nu_dis = disintegrate_along_rays(_empty_like(nu_m), decomp)
    gmap = glue(decomp, mu_dis, nu_dis, fixed_mass=split.common, source=mu_m, target=nu_m)
    report = verify_map(gmap, mu_m, nu_m, plan)
    return PipelineResult(mu_m, nu_m, split.common, plan, rplan, decomp, mu_dis, nu_dis, gmap, report)


def transport_cost(source, target, pairs):
    """Cost of ``(i, j, mass)`` triples under the Euclidean distance."""
    if not pairs:
        return 0.0
    D = pairwise_distances(source.points, target.points)
    return float(sum(m * D[i, j] for i, j, m in pairs))
