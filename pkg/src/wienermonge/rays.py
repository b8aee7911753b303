"""Transport rays of a discrete optimal plan.

The support pairs of a plan are closed under zero-cost cycles, the
oriented ray relation ``G`` is evaluated on the finite point set, and the
rays are read off as maximal G-chains.  Measures are then disintegrated
along rays into one-dimensional conditionals plus a quotient mass.
"""
import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BranchingError, InvalidInputError, ToleranceError
from .measures import PRUNE_BELOW, OneDimMeasure, pairwise_distances

logger = logging.getLogger(__name__)

REL_TOL = 1e-9


def default_tolerance(points):
    """``REL_TOL`` times the bounding-box diagonal (at least ``REL_TOL``)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return REL_TOL
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    return REL_TOL * max(1.0, diag)


@dataclass
class SupportGraph:
    """Plan support expressed on one deduplicated point set.

    ``points`` holds every source atom followed by every target atom not
    already present; ``source_pid[i]`` / ``target_pid[j]`` give the point id
    of atom i / j and ``pairs`` the ``(pid_x, pid_y)`` of each support pair.
    """

    points: np.ndarray
    pairs: np.ndarray
    masses: np.ndarray
    source_pid: np.ndarray
    target_pid: np.ndarray


def support_graph(plan):
    index = {}
    pts = []

    def pid(p):
        key = tuple(p.tolist())
        k = index.get(key)
        if k is None:
            k = index[key] = len(pts)
            pts.append(p)
        return k

    src = np.array([pid(p) for p in plan.source.points], dtype=np.intp)
    tgt = np.array([pid(p) for p in plan.target.points], dtype=np.intp)
    dim = plan.source.dim
    pairs = np.stack([src[plan.rows], tgt[plan.cols]], axis=1) if len(plan) else np.zeros((0, 2), np.intp)
    return SupportGraph(np.array(pts, dtype=np.float64).reshape(-1, dim), pairs, plan.masses.copy(), src, tgt)


def _pair_costs(D, pairs):
    return np.ascontiguousarray(D[np.ix_(pairs[:, 0], pairs[:, 1])])


def _unique_pairs(pairs):
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.intp)
    return np.unique(np.asarray(pairs, dtype=np.intp).reshape(-1, 2), axis=0)


def build_gamma_prime(pairs, points, max_cycle_len=3, tol=None, max_passes=50):
    """Close a support set under zero-cost cycles.

    A pair ``(x, y)`` is added when support pairs ``(w_0, z_0), ..., (w_I, z_I)``
    with ``w_0 = x``, ``z_I = y`` and ``I + 1 <= max_cycle_len`` satisfy
    ``sum_i d(w_{i+1}, z_i) - d(w_i, z_i) = 0`` (indices mod I + 1) within
    ``tol``.  The step is repeated on its own output until nothing new
    appears, so the result is idempotent under another call.

    Parameters
    ----------
    pairs : array_like, shape (P, 2)
        Point-id pairs of the support.
    points : array_like, shape (N, d)

    Returns
    -------
    ndarray, shape (P', 2)
        Sorted unique point-id pairs containing ``pairs``.
    """
    if max_cycle_len < 1:
        raise InvalidInputError("max_cycle_len must be at least 1")
    pts = np.asarray(points, dtype=np.float64)
    tol = default_tolerance(pts) if tol is None else tol
    D = pairwise_distances(pts, pts)
    base = _unique_pairs(pairs)
    current = base
    if max_cycle_len < 2 or len(base) == 0:
        return current
    for n_pass in range(max_passes):
        C = _pair_costs(D, current)
        Z = kernels.zero_cycle_endpoints(C, int(max_cycle_len), float(tol))
        a, b = np.nonzero(Z)
        new = np.stack([current[a, 0], current[b, 1]], axis=1)
        merged = _unique_pairs(np.concatenate([current, new]))
        if len(merged) == len(current):
            break
        current = merged
    else:
        raise ToleranceError(f"cycle closure did not stabilize after {max_passes} passes")
    logger.debug("gamma prime: %d -> %d pairs in %d passes", len(base), len(current), n_pass + 1)

    worst, witness, _ = kernels.worst_cycle(_pair_costs(D, current), int(max_cycle_len))
    if worst > tol:
        base_worst, _, _ = kernels.worst_cycle(_pair_costs(D, base), int(max_cycle_len))
        if base_worst <= tol:
            raise ToleranceError(
                f"closure is not cyclically monotone (violation {worst:.3e}, cycle {witness}) "
                "although the support is"
            )
        logger.warning("support itself is not cyclically monotone (violation %.3e)", base_worst)
    return current


@dataclass(frozen=True, eq=False)
class Ray:
    """One transport ray: points ordered along the ray with arc-length ``coords_t``
    measured from the base point (its first, G-minimal point)."""

    point_ids: tuple
    coords_t: np.ndarray
    base_id: int
    origin: np.ndarray
    direction: np.ndarray

    def position(self, pid):
        return float(self.coords_t[self.point_ids.index(pid)])

    def __len__(self):
        return len(self.point_ids)

    def at(self, t):
        """Ray map: the point at signed arc length ``t`` from the base."""
        t = np.asarray(t, dtype=np.float64)
        return self.origin + t[..., None] * self.direction


@dataclass(eq=False)
class RayDecomposition:
    points: np.ndarray
    rays: list
    point_to_ray: dict
    endpoint_rays: dict
    initial_points: frozenset
    final_points: frozenset
    unassigned: frozenset
    relation: np.ndarray
    gamma_prime: np.ndarray
    tol: float
    _index: dict = field(default=None, repr=False)

    def rays_through(self, pid):
        if pid in self.point_to_ray:
            return (self.point_to_ray[pid],)
        return self.endpoint_rays.get(pid, ())

    def point_id(self, coords):
        if self._index is None:
            self._index = {tuple(p.tolist()): i for i, p in enumerate(self.points)}
        return self._index.get(tuple(np.asarray(coords, dtype=np.float64).tolist()))

    @property
    def transport_set(self):
        """Interior points (the set on which rays form a partition)."""
        return frozenset(self.point_to_ray)

    @property
    def extended_transport_set(self):
        return frozenset(self.point_to_ray) | frozenset(self.endpoint_rays)

    def ray_coordinates(self, x):
        """``(ray_id, t)`` for a point lying on exactly one ray, else ``None``."""
        x = np.asarray(x, dtype=np.float64)
        pid = self.point_id(x)
        if pid is not None:
            rs = self.rays_through(pid)
            return (rs[0], self.rays[rs[0]].position(pid)) if len(rs) == 1 else None
        hits = [r for r in range(len(self.rays)) if self._on_segment(r, x)]
        if len(hits) != 1:
            return None
        ray = self.rays[hits[0]]
        return hits[0], float(np.linalg.norm(x - ray.origin))

    def _on_segment(self, r, x):
        ray = self.rays[r]
        a = self.points[ray.point_ids[0]]
        b = self.points[ray.point_ids[-1]]
        return np.linalg.norm(x - a) + np.linalg.norm(b - x) <= np.linalg.norm(b - a) + self.tol

    def to_csv(self, weights=None, path=None, header_comment=None):
        """Ray dump: ``ray_id, point_id, t, weight``.

        ``weights`` maps ``(ray_id, point_id)`` to a mass (e.g. from a
        ``Disintegration``); missing entries are written as 0.
        """
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ray_id", "point_id", "t", "weight"])
        weights = weights or {}
        for r, ray in enumerate(self.rays):
            for pid, t in zip(ray.point_ids, ray.coords_t):
                w.writerow([r, pid, repr(float(t)), repr(float(weights.get((r, pid), 0.0)))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def build_rays(gamma_prime, points, tol=None):
    """Transport rays of a closed support set.

    ``(x, y)`` is in G when some ``(w, z)`` of ``gamma_prime`` has
    ``d(w,x) + d(x,y) + d(y,z) = d(w,z)``.  Interior points have both a
    strict G-predecessor and a strict G-successor; initial points have no
    predecessor and final points no successor.  Each interior point
    determines its ray ``{x} U G(x) U G^-1(x)``; pairs between endpoints not
    covered by those rays form two-point rays.

    Raises
    ------
    BranchingError
        An interior point sees two non-collinear chains, or the relation is
        not transitive on its chain.
    """
    pts = np.asarray(points, dtype=np.float64)
    N = pts.shape[0]
    tol = default_tolerance(pts) if tol is None else tol
    gp = np.ascontiguousarray(_unique_pairs(gamma_prime))
    D = pairwise_distances(pts, pts) if N else np.zeros((0, 0))
    G = kernels.ray_relation(np.ascontiguousarray(D), gp, float(tol)).astype(bool)
    E = G.copy()
    np.fill_diagonal(E, False)
    has_out = E.any(axis=1)
    has_in = E.any(axis=0)
    in_Te = has_out | has_in
    interior = has_out & has_in

    chains = {}
    for p in np.flatnonzero(interior):
        members = frozenset([int(p)]) | frozenset(np.flatnonzero(E[p]).tolist()) | frozenset(
            np.flatnonzero(E[:, p]).tolist())
        chains.setdefault(members, []).append(int(p))

    rays_pts = []
    point_to_ray = {}
    for members, owners in chains.items():
        ids = sorted(members)
        sub = E[np.ix_(ids, ids)]
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                if sub[i, j] == sub[j, i]:
                    raise BranchingError(
                        f"points {ids[i]} and {ids[j]} on the ray of {owners[0]} are not G-ordered",
                        witness=(owners[0], ids[i], ids[j]),
                    )
        rank = sub.sum(axis=0)
        order = [ids[k] for k in np.argsort(rank, kind="stable")]
        for q in members:
            if interior[q] and q not in owners:
                raise BranchingError(
                    f"interior point {q} lies on the ray of {owners[0]} but has a different ray",
                    witness=(owners[0], q, order[0]),
                )
        rays_pts.append(tuple(order))

    covered = [frozenset(r) for r in rays_pts]
    for x, y in zip(*np.nonzero(E)):
        x, y = int(x), int(y)
        if interior[x] or interior[y]:
            continue
        if any(x in c and y in c for c in covered):
            continue
        rays_pts.append((x, y))
        covered.append(frozenset((x, y)))

    rays_pts.sort()
    rays = []
    scale = 10.0 * tol
    for r, ids in enumerate(rays_pts):
        base = ids[0]
        t = D[base, list(ids)]
        if np.any(np.diff(t) <= 0):
            raise BranchingError(f"ray {r} coordinates are not strictly increasing", witness=ids[:3])
        steps = D[list(ids[:-1]), list(ids[1:])]
        if np.any(np.abs(np.diff(t) - steps) > scale):
            k = int(np.argmax(np.abs(np.diff(t) - steps)))
            raise BranchingError(f"ray {r} is not collinear near point {ids[k + 1]}",
                                 witness=(ids[0], ids[k], ids[k + 1]))
        direction = (pts[ids[-1]] - pts[base]) / t[-1]
        rays.append(Ray(tuple(ids), t, base, pts[base].copy(), direction))
        for pid in ids:
            if interior[pid]:
                point_to_ray[pid] = r

    endpoint_rays = {}
    for r, ray in enumerate(rays):
        for pid in ray.point_ids:
            if not interior[pid]:
                endpoint_rays.setdefault(pid, []).append(r)
    endpoint_rays = {k: tuple(v) for k, v in endpoint_rays.items()}

    initial = frozenset(np.flatnonzero(in_Te & ~has_in).tolist())
    final = frozenset(np.flatnonzero(in_Te & ~has_out).tolist())
    unassigned = frozenset(np.flatnonzero(~in_Te).tolist())
    return RayDecomposition(pts, rays, point_to_ray, endpoint_rays, initial, final, unassigned,
                            G, gp, float(tol))


def decompose_plan(plan, max_cycle_len=3, tol=None):
    """Support graph, closure and rays of a plan in one call."""
    g = support_graph(plan)
    tol = default_tolerance(g.points) if tol is None else tol
    gp = build_gamma_prime(g.pairs, g.points, max_cycle_len=max_cycle_len, tol=tol)
    return build_rays(gp, g.points, tol=tol), g


@dataclass
class Disintegration:
    """Conditionals of ``measure`` along rays.

    ``conditionals[r]`` is a probability on ray coordinates, ``quotient[r]``
    the mass of ``measure`` on ray r, and ``atoms[r][k]`` lists the
    ``(atom_id, mass)`` contributions at the k-th position of that
    conditional.  ``unassigned`` holds ``(atom_id, mass, reason)``.
    """

    measure: object
    conditionals: dict
    quotient: dict
    atoms: dict
    unassigned: list

    @property
    def unassigned_mass(self):
        return float(sum(m for _, m, _ in self.unassigned))

    @property
    def total(self):
        return float(sum(self.quotient.values())) + self.unassigned_mass

    def point_weights(self, decomp):
        """``(ray_id, point_id) -> mass`` for the ray dump."""
        out = {}
        for r, cond in self.conditionals.items():
            ray = decomp.rays[r]
            for t, w in zip(cond.positions, cond.weights):
                k = int(np.argmin(np.abs(ray.coords_t - t)))
                out[(r, ray.point_ids[k])] = float(w) * self.quotient[r]
        return out


def _plan_flows(plan, decomp, side):
    """Per point: mass of plan pairs through each ray on the given side."""
    flows = {}
    src_pts, tgt_pts = plan.support_points()
    for xs, ys, m in zip(src_pts, tgt_pts, plan.masses):
        px, py = decomp.point_id(xs), decomp.point_id(ys)
        if px is None or py is None or px == py:
            continue
        shared = set(decomp.rays_through(px)) & set(decomp.rays_through(py))
        if len(shared) != 1:
            continue
        r = shared.pop()
        key = px if side == "source" else py
        flows.setdefault(key, {}).setdefault(r, 0.0)
        flows[key][r] += float(m)
    return flows


def disintegrate_along_rays(m, decomp, plan=None, side="source"):
    """Split ``m`` into per-ray one-dimensional conditionals.

    Atoms at interior points, or at an endpoint of a single ray, go to that
    ray.  An endpoint shared by several rays is split in proportion to the
    mass ``plan`` sends through each ray on the given ``side``; without a
    plan it is reported as unassigned.  Atoms not among the decomposition's
    points are placed geometrically if they lie on exactly one ray.
    """
    if side not in ("source", "target"):
        raise InvalidInputError("side must be 'source' or 'target'")
    flows = _plan_flows(plan, decomp, side) if plan is not None else {}
    per_ray = {}
    unassigned = []

    def put(r, t, atom, mass):
        per_ray.setdefault(r, {}).setdefault(t, []).append((atom, mass))

    for k, (p, w) in enumerate(zip(m.points, m.weights)):
        w = float(w)
        pid = decomp.point_id(p)
        if pid is None:
            hits = [r for r in range(len(decomp.rays)) if decomp._on_segment(r, p)]
            if len(hits) == 1:
                ray = decomp.rays[hits[0]]
                put(hits[0], float(np.linalg.norm(p - ray.origin)), k, w)
            else:
                unassigned.append((k, w, "off-ray" if not hits else "ambiguous"))
            continue
        rays = decomp.rays_through(pid)
        if len(rays) == 0:
            unassigned.append((k, w, "fixed"))
        elif len(rays) == 1:
            put(rays[0], decomp.rays[rays[0]].position(pid), k, w)
        else:
            f = flows.get(pid)
            total = sum(f.values()) if f else 0.0
            if total <= 0:
                unassigned.append((k, w, "shared-endpoint"))
                continue
            for r in sorted(f):
                put(r, decomp.rays[r].position(pid), k, w * f[r] / total)

    conditionals, quotient, atoms = {}, {}, {}
    for r in sorted(per_ray):
        ts = sorted(per_ray[r])
        masses = np.array([sum(a[1] for a in per_ray[r][t]) for t in ts])
        keep = masses >= PRUNE_BELOW
        for t, ok in zip(ts, keep):
            if not ok:
                unassigned.extend((a, mm, "pruned") for a, mm in per_ray[r][t])
        ts = [t for t, ok in zip(ts, keep) if ok]
        if not ts:
            continue
        masses = masses[keep]
        conditionals[r] = OneDimMeasure(ts, masses)
        quotient[r] = float(masses.sum())
        atoms[r] = [per_ray[r][t] for t in ts]
    out = Disintegration(m, conditionals, quotient, atoms, unassigned)
    if abs(out.total - m.mass) > 1e-12 * max(1.0, m.mass):
        raise ToleranceError(f"disintegration lost mass: {out.total!r} vs {m.mass!r}")
    return out
