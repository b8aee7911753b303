"""Experiment runs: one directory of CSV reports, SVG plots and a summary per run."""
import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_config
from .densities import DensityPair
from .errors import InvalidInputError
from .evolution import (EvolutionReport, RadialPair, evolution_mass_1d, evolution_mass_mc,
                        jacobian_sweep, reverse_evolution_mass_1d, jacobian_chain_1d)
from .glue import monge_pipeline
from .instances import from_spec
from .transport import check_cyclical_monotonicity, duality_gap, dual_violation, solve_kantorovich
from .wiener import dimension_ladder

logger = logging.getLogger(__name__)

OUT_ENV = "WIENERMONGE_OUT"


def default_out_root():
    return Path(os.environ.get(OUT_ENV, "runs"))


@dataclass
class RunResult:
    status: str
    out_dir: Path
    summary: dict

    @property
    def exit_code(self):
        return 0 if self.status == "pass" else 2


class _Artifacts:
    def __init__(self, out_dir, header):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.header = header
        self.files = {}

    def csv(self, name, writer):
        path = self.dir / name
        writer(path=path, header_comment=self.header)
        self.files[name] = path

    def text(self, name, text):
        path = self.dir / name
        path.write_text(text)
        self.files[name] = path

    def digests(self):
        return {k: hashlib.sha256(p.read_bytes()).hexdigest() for k, p in sorted(self.files.items())}


def _plotting():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "wienermonge"
    return plt


def _save_svg(plt, fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_rays(path, decomp, mu, nu):
    plt = _plotting()
    fig, ax = plt.subplots(figsize=(5, 5))
    pts = decomp.points
    proj = (lambda a: a[:, :2]) if pts.shape[1] >= 2 else (lambda a: np.column_stack([a[:, 0], np.zeros(len(a))]))
    cmap = plt.get_cmap("tab10")
    for r, ray in enumerate(decomp.rays):
        xy = proj(pts[list(ray.point_ids)])
        ax.plot(xy[:, 0], xy[:, 1], "-", color=cmap(r % 10), lw=1.5)
    ax.scatter(*proj(mu.points).T, s=18, marker="o", color="k", label="source")
    ax.scatter(*proj(nu.points).T, s=18, marker="x", color="r", label="target")
    ax.legend(loc="best", fontsize=7)
    ax.set_title("transport rays")
    _save_svg(plt, fig, path)


def _plot_ratios(path, reports):
    plt = _plotting()
    fig, ax = plt.subplots(figsize=(6, 4))
    for rep in reports:
        ts = sorted({e[1] for e in rep.entries})
        mins = [min(e[4] for e in rep.entries if e[1] == t) for t in ts]
        ax.plot(ts, mins, "o-", label=rep.summary_line().split(":")[0], ms=3)
        ax.axhline(rep.bound, ls=":", lw=0.8, color="gray")
    ax.set_xlabel("t")
    ax.set_ylabel("min ratio")
    ax.legend(fontsize=6)
    _save_svg(plt, fig, path)


def _plot_ladder(path, reports):
    plt = _plotting()
    fig, ax = plt.subplots(figsize=(5, 4))
    for rep in reports:
        ax.plot(rep.dims, rep.costs, "o-", label=f"seed {rep.seed}", ms=3)
    ax.set_xlabel("d")
    ax.set_ylabel("c_d")
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=6)
    _save_svg(plt, fig, path)


# -- commands ---------------------------------------------------------------

def _run_solve(cfg, art):
    p = cfg.params
    mu, nu = from_spec(p["instance"], cfg.seed)
    plan, duals = solve_kantorovich(mu, nu, p.get("cost", "euclidean"))
    gap = duality_gap(plan, duals)
    mono = check_cyclical_monotonicity(plan, max_cycle=int(p.get("max_cycle", 3)), samples=None
                                       if len(plan) <= 12 else 10_000, seed=cfg.seed)
    art.text("mu.csv", f"# {art.header}\n" + mu.to_csv())
    art.text("nu.csv", f"# {art.header}\n" + nu.to_csv())
    art.csv("plan.csv", plan.to_csv)
    art.text("plan.json", json.dumps(plan.sidecar(gap=gap, seed=cfg.seed), indent=1, sort_keys=True) + "\n")
    tol = cfg.tolerances["gap"] * (1.0 + abs(plan.cost))
    ok = np.isfinite(gap) and abs(gap) <= tol and mono.ok
    return ok, {"cost": plan.cost, "gap": gap, "dual_violation": dual_violation(plan, duals),
                "marginal_errors": list(plan.marginal_errors()),
                "cycle_worst_violation": mono.worst_violation, "cycle_violations": mono.n_violations}


def _run_rays(cfg, art):
    p = cfg.params
    mu, nu = from_spec(p["instance"], cfg.seed)
    res = monge_pipeline(mu, nu, max_cycle_len=int(p.get("max_cycle_len", 3)))
    d = res.decomposition
    art.csv("rays.csv", lambda path, header_comment: d.to_csv(
        res.mu_dis.point_weights(d), path=path, header_comment=header_comment))
    if cfg.plots:
        _plot_rays(art.dir / "rays.svg", d, res.mu, res.nu)
    metrics = {"n_rays": len(d.rays), "n_interior": len(d.point_to_ray),
               "initial_points": sorted(d.initial_points), "final_points": sorted(d.final_points),
               "unassigned_points": sorted(d.unassigned), "gamma_prime_size": int(len(d.gamma_prime)),
               "common_mass": res.common.mass}
    return True, metrics


def _run_glue(cfg, art):
    p = cfg.params
    mu, nu = from_spec(p["instance"], cfg.seed)
    res = monge_pipeline(mu, nu, max_cycle_len=int(p.get("max_cycle_len", 3)))
    art.csv("plan.csv", res.plan.to_csv)
    art.csv("map.csv", res.glued.to_csv)
    art.csv("rays.csv", lambda path, header_comment: res.decomposition.to_csv(
        res.mu_dis.point_weights(res.decomposition), path=path, header_comment=header_comment))
    if cfg.plots:
        _plot_rays(art.dir / "rays.svg", res.decomposition, res.mu, res.nu)
    rep = res.report
    cost_ok = abs(rep.cost_difference) <= cfg.tolerances["cost"] * (1.0 + abs(rep.plan_cost))
    ok = cost_ok and rep.pushforward_residual <= 1e-10 and not rep.monotonicity_violations
    return ok, {**rep.as_dict(), "n_rays": len(res.decomposition.rays)}


def _run_evolution(cfg, art):
    p = cfg.params
    reports = []
    metrics = {}
    for k, spec in enumerate(p["pairs"]):
        name = spec.get("name", f"pair{k}")
        pair = DensityPair.from_specs(spec["rho1"], spec["rho2"])
        kw = dict(ts=tuple(p["ts"]), n_sets=int(p["n_sets"]), seed=cfg.seed + k,
                  n_cells=int(p["n_cells"]), tol=cfg.tolerances["evolution"],
                  richardson_tol=cfg.tolerances["richardson"], label=name)
        rep = evolution_mass_1d(pair, **kw)
        reports.append(rep)
        art.csv(f"evolution_{name}.csv", rep.to_csv)
        metrics[name] = {"c_hat": rep.c_hat, "bound": rep.bound, "passed": rep.passed, "skipped": rep.skipped}
        if p.get("reverse", True):
            rev = reverse_evolution_mass_1d(pair, **kw)
            reports.append(rev)
            art.csv(f"evolution_{name}_reverse.csv", rev.to_csv)
            metrics[name].update(c_hat_reverse=rev.c_hat, passed_reverse=rev.passed)
    mc = p.get("monte_carlo")
    if mc:
        rp = RadialPair(float(mc.get("sd", 0.6)), float(mc.get("radius", 2.0)))
        for d in mc.get("dims", [2, 3, 4]):
            r = evolution_mass_mc(rp, int(d), ts=tuple(p["ts"]), n_boxes=int(mc.get("n_boxes", 50)),
                                  n=int(mc.get("n", 100_000)), seed=cfg.seed, tol=cfg.tolerances["mc"])
            art.csv(f"mc_d{d}.csv", r.to_csv)
            lo, hi = r.c_hat_interval
            metrics[f"mc_d{d}"] = {"c_hat": r.c_hat, "c_hat_3sigma": [lo, hi], "bound": r.bound,
                                   "passed": r.passed}
            reports.append(r)
    if cfg.plots:
        _plot_ratios(art.dir / "ratios.svg", [r for r in reports if isinstance(r, EvolutionReport)])
    ok = all(r.passed for r in reports)
    return ok, metrics


def _run_jacobian(cfg, art):
    p = cfg.params
    ts = tuple(p["ts"])
    rep = jacobian_sweep(int(p["n_tuples"]), ts, int(p["max_dim"]), seed=cfg.seed)
    rows = ["name,max_shortfall,n_points,passed"]
    chains = {}
    for k, spec in enumerate(p.get("chain_pairs") or []):
        name = spec.get("name", f"pair{k}")
        ch = jacobian_chain_1d(DensityPair.from_specs(spec["rho1"], spec["rho2"]), ts, tol=cfg.tolerances["chain"])
        chains[name] = ch
        rows.append(f"{name},{ch.max_shortfall!r},{ch.n_points},{int(ch.passed)}")
    art.text("jacobian.csv", f"# {art.header}\n" + "n_checked,n_failures,worst_relative_gap\n"
             + f"{rep.n_checked},{rep.n_failures},{rep.worst_relative_gap!r}\n")
    art.text("chain.csv", f"# {art.header}\n" + "\n".join(rows) + "\n")
    ok = rep.passed and all(c.passed for c in chains.values())
    return ok, {"n_checked": rep.n_checked, "n_failures": rep.n_failures,
                "worst_relative_gap": rep.worst_relative_gap,
                "chains": {k: c.max_shortfall for k, c in chains.items()}}


def _run_ladder(cfg, art):
    p = cfg.params
    seeds = p.get("seeds") or [cfg.seed]
    reports, metrics = [], {}
    walls = {}
    for s in seeds:
        rep = dimension_ladder(p["mu"], p["nu"], tuple(p["dims"]), int(p["n"]), int(s), int(p["subsample"]))
        reports.append(rep)
        art.csv(f"ladder_s{s}.csv", rep.to_csv)
        metrics[f"seed{s}"] = {"costs": rep.costs, "monotone": rep.monotone, "saturated": rep.saturated,
                               "mc_se": rep.mc_se, "m": rep.m}
        walls[f"seed{s}"] = rep.wall_times
    if cfg.plots:
        _plot_ladder(art.dir / "ladder.svg", reports)
    metrics["wall_times"] = walls
    return all(r.passed for r in reports), metrics


_COMMANDS = {"solve": _run_solve, "rays": _run_rays, "glue": _run_glue,
             "verify-evolution": _run_evolution, "jacobian-sweep": _run_jacobian, "ladder": _run_ladder}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run_pipeline(cfg, out_dir=None):
    """Execute one configured command and write its artifacts and ``summary.json``."""
    if out_dir is None:
        out_dir = default_out_root() / f"{cfg.command}-{cfg.hash[:12]}-s{cfg.seed}"
    header = f"config_hash={cfg.hash} version={__version__} seed={cfg.seed}"
    art = _Artifacts(out_dir, header)
    t0 = time.perf_counter()
    ok, metrics = _COMMANDS[cfg.command](cfg, art)
    summary = {
        "tool": "wienermonge",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.as_dict(),
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "artifacts": art.digests(),
        "metrics": _jsonable(metrics),
        "status": "pass" if ok else "fail",
        "wall_time_s": time.perf_counter() - t0,
    }
    (art.dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return RunResult(summary["status"], art.dir, summary)


@dataclass
class ReplayResult:
    passed: bool
    message: str
    file: str = None
    line: int = None
    recorded: str = None
    replayed: str = None


def replay(summary_path):
    """Re-run a recorded configuration and compare every CSV artifact byte for byte."""
    summary_path = Path(summary_path)
    try:
        summary = json.loads(summary_path.read_text())
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read summary {summary_path}: {exc}") from exc
    if summary.get("version") != __version__:
        raise InvalidInputError(f"summary from version {summary.get('version')}, this is {__version__}")
    c = summary["config"]
    cfg = build_config(c["command"], {"params": c["params"], "tolerances": c["tolerances"],
                                      "plots": c.get("plots", True)}, seed=c["seed"])
    if cfg.hash != summary["config_hash"]:
        raise InvalidInputError("config hash does not match the recorded configuration")
    cfg.plots = False
    base = summary_path.parent
    with tempfile.TemporaryDirectory() as tmp:
        run_pipeline(cfg, Path(tmp))
        for name in sorted(summary["artifacts"]):
            if not name.endswith(".csv"):
                continue
            old_path, new_path = base / name, Path(tmp) / name
            if not old_path.exists():
                return ReplayResult(False, f"{name}: recorded artifact is missing", name)
            old = old_path.read_bytes().decode(errors="replace").splitlines(keepends=True)
            new = new_path.read_bytes().decode(errors="replace").splitlines(keepends=True)
            for k in range(max(len(old), len(new))):
                a = old[k] if k < len(old) else "<EOF>"
                b = new[k] if k < len(new) else "<EOF>"
                if a != b:
                    return ReplayResult(False, f"{name}: first difference at line {k + 1}",
                                        name, k + 1, a.rstrip("\n"), b.rstrip("\n"))
    return ReplayResult(True, "all CSV artifacts identical")
