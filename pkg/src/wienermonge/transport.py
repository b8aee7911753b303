"""Exact Kantorovich solver for distance costs, duality certificates and
c-cyclical monotonicity checks."""
import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import kernels
from .errors import DimensionMismatchError, InvalidInputError, MassMismatchError
from .measures import PRUNE_BELOW, DiscreteMeasure, common_mass_split, pairwise_distances

logger = logging.getLogger(__name__)

COST_KINDS = ("euclidean", "sqeuclidean")
FEAS_TOL = 1e-9


def cost_matrix(X, Y, kind="euclidean"):
    if kind not in COST_KINDS:
        raise InvalidInputError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")
    D = pairwise_distances(X, Y)
    return D if kind == "euclidean" else D * D


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling between ``source`` and ``target``.

    ``rows[k], cols[k], masses[k]`` is the k-th support pair; masses are
    strictly positive.  ``cost`` is recomputed from the pairs on construction.
    """

    source: DiscreteMeasure
    target: DiscreteMeasure
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    cost_kind: str = "euclidean"
    cost: float = field(init=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.intp).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.intp).reshape(-1)
        masses = np.asarray(self.masses, dtype=np.float64).reshape(-1)
        if not (rows.shape == cols.shape == masses.shape):
            raise InvalidInputError("rows/cols/masses length mismatch")
        if np.any(masses <= 0):
            raise InvalidInputError("plan masses must be positive")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "cost", float(np.sum(masses * self.pair_costs())))

    @classmethod
    def from_pairs(cls, source, target, pairs, cost_kind="euclidean"):
        """Build from ``(i, j, mass)`` triples."""
        arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 3)
        return cls(source, target, arr[:, 0].astype(np.intp), arr[:, 1].astype(np.intp), arr[:, 2], cost_kind)

    @property
    def pairs(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.masses.tolist()))

    def __len__(self):
        return self.masses.size

    def pair_costs(self):
        diff = self.source.points[self.rows] - self.target.points[self.cols]
        d = np.sqrt(np.sum(diff * diff, axis=1))
        return d if self.cost_kind == "euclidean" else d * d

    def dense(self):
        P = np.zeros((len(self.source), len(self.target)))
        np.add.at(P, (self.rows, self.cols), self.masses)
        return P

    def marginal_errors(self):
        """Max absolute row- and column-sum deviations from the marginals."""
        r = np.bincount(self.rows, weights=self.masses, minlength=len(self.source))
        c = np.bincount(self.cols, weights=self.masses, minlength=len(self.target))
        return float(np.max(np.abs(r - self.source.weights), initial=0.0)), float(
            np.max(np.abs(c - self.target.weights), initial=0.0)
        )

    def support_points(self):
        """Source and target coordinates of every support pair."""
        return self.source.points[self.rows], self.target.points[self.cols]

    # -- serialization -----------------------------------------------------

    def to_csv(self, path=None, header_comment=None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "mass"])
        for i, j, m in zip(self.rows, self.cols, self.masses):
            w.writerow([int(i), int(j), repr(float(m))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def sidecar(self, gap=None, seed=None):
        return {"cost": self.cost, "gap": gap, "seed": seed, "cost_kind": self.cost_kind,
                "n_source": len(self.source), "n_target": len(self.target), "n_pairs": len(self)}

    @classmethod
    def from_csv(cls, source_text_or_path, source, target, cost_kind="euclidean"):
        text = source_text_or_path
        if "\n" not in text:
            with open(text) as fh:
                text = fh.read()
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        body = rows[1:]
        return cls(source, target, [int(r[0]) for r in body], [int(r[1]) for r in body],
                   [float(r[2]) for r in body], cost_kind)


@dataclass(frozen=True, eq=False)
class DualPotentials:
    phi: np.ndarray
    psi: np.ndarray

    def value(self, source, target):
        return float(self.phi @ source.weights + self.psi @ target.weights)


def _check_instance(mu, nu):
    if mu.dim != nu.dim:
        raise DimensionMismatchError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if len(mu) == 0 or len(nu) == 0:
        raise InvalidInputError("empty measure")
    if abs(mu.mass - nu.mass) > 1e-12:
        raise MassMismatchError(f"infeasible: masses {mu.mass!r} vs {nu.mass!r}")


def solve_kantorovich(mu, nu, cost="euclidean"):
    """Optimal plan and dual potentials for ``cost`` in ``COST_KINDS``.

    The LP is solved by HiGHS dual simplex on the row-major variable order
    ``x[i, j]``; the returned plan is a basic (vertex) solution, so equal
    uniform measures yield a permutation.  HiGHS is deterministic, so
    repeated solves of one instance return the same vertex.

    Returns
    -------
    plan : TransportPlan
    duals : DualPotentials
    """
    _check_instance(mu, nu)
    n, m = len(mu), len(nu)
    C = cost_matrix(mu.points, nu.points, cost)
    A = sp.vstack([
        sp.kron(sp.identity(n, format="csr"), np.ones((1, m))),
        sp.kron(np.ones((1, n)), sp.identity(m, format="csr")),
    ]).tocsr()
    b = np.concatenate([mu.weights, nu.weights])
    res = linprog(
        C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10,
                 "presolve": True},
    )
    if res.status != 0:
        raise MassMismatchError(f"LP solve failed: {res.message}")
    x = res.x.reshape(n, m)
    rows, cols = np.nonzero(x >= PRUNE_BELOW)
    plan = TransportPlan(mu, nu, rows, cols, x[rows, cols], cost)
    y = np.asarray(res.eqlin.marginals, dtype=np.float64)
    duals = DualPotentials(phi=y[:n].copy(), psi=y[n:].copy())
    return plan, duals


def dual_violation(plan, duals):
    """``max(phi_i + psi_j - c_ij)`` over all source/target atoms."""
    C = cost_matrix(plan.source.points, plan.target.points, plan.cost_kind)
    return float(np.max(duals.phi[:, None] + duals.psi[None, :] - C))


def duality_gap(plan, duals):
    """Primal cost minus dual value.

    Returns ``nan`` (and logs the violation) when the potentials are not
    feasible within ``FEAS_TOL``, since the gap then certifies nothing.
    """
    viol = dual_violation(plan, duals)
    if viol > FEAS_TOL:
        logger.warning("dual potentials infeasible: max(phi+psi-c) = %.3e", viol)
        return math.nan
    return plan.cost - duals.value(plan.source, plan.target)


@dataclass
class CycleReport:
    worst_violation: float
    witness: tuple
    n_checked: int
    n_violations: int
    tol: float

    @property
    def ok(self):
        return self.n_violations == 0

    def witness_pairs(self, plan):
        """Support pairs ``(i, j, mass)`` of the witness cycle."""
        return [plan.pairs[k] for k in self.witness]


def pair_cost_matrix(plan):
    """``C[a, b] = c(x_a, y_b)`` over support pairs a, b."""
    X, Y = plan.support_points()
    return np.ascontiguousarray(cost_matrix(X, Y, plan.cost_kind))


def check_cyclical_monotonicity(plan, max_cycle=3, samples=10_000, seed=0, tol=FEAS_TOL):
    """Test ``sum c(x_i, y_i) <= sum c(x_{i+1}, y_i)`` on cycles of support pairs.

    With ``samples=None`` every cycle of 2..max_cycle pairs is enumerated
    (up to rotation); otherwise ``samples`` random cycles with lengths
    drawn uniformly from 2..max_cycle are tested.
    """
    if max_cycle < 2:
        raise InvalidInputError("max_cycle must be at least 2")
    C = pair_cost_matrix(plan)
    P = C.shape[0]
    if samples is None:
        worst, witness, count = kernels.worst_cycle(C, int(max_cycle))
        nviol = 0 if worst <= tol else _count_violations_exhaustive(C, max_cycle, tol)
        return CycleReport(float(worst), tuple(witness), int(count), nviol, tol)

    rng = np.random.default_rng(seed)
    lengths = rng.integers(2, max_cycle + 1, size=samples)
    worst, witness, nviol = -np.inf, (), 0
    for L in range(2, max_cycle + 1):
        k = int(np.sum(lengths == L))
        if k == 0:
            continue
        idx = rng.integers(0, P, size=(k, L))
        nxt = np.roll(idx, -1, axis=1)
        viol = C[idx, idx].sum(axis=1) - C[nxt, idx].sum(axis=1)
        nviol += int(np.sum(viol > tol))
        a = int(np.argmax(viol))
        if viol[a] > worst:
            worst, witness = float(viol[a]), tuple(int(v) for v in idx[a])
    return CycleReport(worst, witness, int(samples), nviol, tol)


def _count_violations_exhaustive(C, max_cycle, tol):
    # only reached on failure; small instances
    import itertools
    P = C.shape[0]
    n = 0
    for L in range(2, max_cycle + 1):
        for cyc in itertools.product(range(P), repeat=L):
            if cyc[0] != min(cyc):
                continue
            nxt = cyc[1:] + cyc[:1]
            if sum(C[a, a] for a in cyc) - sum(C[b, a] for a, b in zip(cyc, nxt)) > tol:
                n += 1
    return n


def solve_with_common_mass(mu, nu, cost="euclidean"):
    """Plan that keeps ``mu ^ nu`` in place and optimally couples the remainders.

    Indices refer to ``mu.merged()`` and ``nu.merged()``.
    """
    _check_instance(mu, nu)
    mu_m, nu_m = mu.merged(), nu.merged()
    split = common_mass_split(mu_m, nu_m)
    mu_idx, nu_idx = mu_m.atom_index(), nu_m.atom_index()
    rows, cols, masses = [], [], []
    for p, w in zip(split.common.points, split.common.weights):
        key = tuple(p.tolist())
        rows.append(mu_idx[key])
        cols.append(nu_idx[key])
        masses.append(w)
    rem = split.mu_rem.mass
    if rem > PRUNE_BELOW and len(split.mu_rem) and len(split.nu_rem):
        sub, _ = solve_kantorovich(split.mu_rem.normalized(), split.nu_rem.normalized(), cost)
        for i, j, m in sub.pairs:
            rows.append(mu_idx[tuple(split.mu_rem.points[i].tolist())])
            cols.append(nu_idx[tuple(split.nu_rem.points[j].tolist())])
            masses.append(m * rem)
    return TransportPlan(mu_m, nu_m, rows, cols, masses, cost)


def plan_sidecar_json(plan, gap=None, seed=None):
    return json.dumps(plan.sidecar(gap=gap, seed=seed), indent=1, sort_keys=True)
