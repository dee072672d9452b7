"""Experiment orchestration and persistence.

Each command maps a validated :class:`RunConfig` to files in the output
directory and an exit code: 0 on success, 2 when the input violates a
hypothesis (or the schema), 3 when a solver step fails.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import dmp_check
from .config import RunConfig
from .energy import (
    EigenSolverError,
    ProblemData,
    finite_difference_check,
    residual_norm,
    solution_identity_check,
)
from .geometry import gauss_bonnet_residual
from .manufactured import linear_profile, manufactured_case, recover
from .oracle import dense_oracle
from .solver import (
    MountainPassError,
    SolveReport,
    SolverError,
    SweepConfig,
    Tolerances,
    find_minimizer,
    mountain_pass,
    nonexistence_probe,
    solve_convex,
    sweep_lambda,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_HYPOTHESIS, EXIT_ANOMALY = 0, 2, 3


class ValidationError(RuntimeError):
    """A stored solution failed re-validation."""


# ----------------------------------------------------------------------------
# files


def _clean(x):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python floats."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    write_atomic(path, json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n")


def mesh_meta(p: ProblemData) -> dict:
    g = p.geom
    return dict(
        subdivisions=g.mesh.subdivision_level,
        n_vertices=g.n_vertices,
        n_faces=len(g.mesh.faces),
        cone_vertices=g.divisor.vertex_ids.tolist(),
        cone_betas=g.divisor.betas.tolist(),
        # u is only continuous at the cones; its values there are published but flagged
        cone_values_flagged=True,
        chi=g.euler_characteristic,
        gb_scale=g.gb_scale,
    )


def solution_record(p: ProblemData, rep: SolveReport, branch: int, seed: int) -> dict:
    return dict(
        **{"lambda": rep.lam},
        branch=branch,
        u=rep.u,
        energy=rep.energy,
        residual=rep.residual,
        eig_min=rep.eig_min,
        identity_gap=rep.energy_report.identity_gap,
        method=rep.method,
        converged=rep.converged,
        seed=seed,
        mesh_meta=mesh_meta(p),
    )


def solution_path(out: Path, branch: int, lam: float) -> Path:
    return out / f"solution_b{branch}_lam{lam:+.10f}.json"


def write_solution(out: Path, p: ProblemData, rep: SolveReport, branch: int, seed: int) -> Path:
    path = solution_path(out, branch, rep.lam)
    write_json(path, solution_record(p, rep, branch, seed))
    return path


def load_solution(path: str | Path, p: ProblemData, tol: Tolerances | None = None) -> dict:
    """Read a solution file and recheck residual and identity against ``p``."""
    tol = tol or Tolerances()
    rec = json.loads(Path(path).read_text(encoding="utf-8"))
    u = np.asarray(rec["u"], dtype=float)
    if u.shape != (p.geom.n_vertices,):
        raise ValidationError(f"{path}: {u.size} values for a mesh with {p.geom.n_vertices} vertices")
    q = p.with_lambda(rec["lambda"])
    res = residual_norm(q, u)
    gap = solution_identity_check(q, u)
    if not res <= tol.newton_tol:
        raise ValidationError(f"{path}: residual {res:.3e} exceeds {tol.newton_tol:.1e}")
    if not gap <= tol.identity_tol(q.chi):
        raise ValidationError(f"{path}: identity gap {gap:.3e} exceeds {tol.identity_tol(q.chi):.1e}")
    rec["u"] = u
    return rec


# ----------------------------------------------------------------------------
# experiments


@dataclass
class Outcome:
    code: int
    files: list[Path]


def _single_lambda(cfg: RunConfig, command: str) -> float:
    if cfg.lam is None:
        raise SolverError(f"'{command}' needs a single lambda_spec value, not a sweep")
    return cfg.lam


def solve_both(p: ProblemData, tol: Tolerances, seed: int) -> list[tuple[int, SolveReport]]:
    """Minimal solution, plus the mountain-pass solution when ``lambda > 0``."""
    if p.lam <= 0:
        rng = np.random.default_rng(seed)
        return [(0, solve_convex(p, rng.uniform(-1.0, 1.0, p.geom.n_vertices), tol))]
    rep0 = find_minimizer(p, tol=tol)
    out = [(0, rep0)]
    if rep0.converged:
        try:
            out.append((1, mountain_pass(p, rep0, tol)))
        except (MountainPassError, EigenSolverError) as exc:
            log.error("mountain pass failed: %s", exc)
    return out


def run_solve(cfg: RunConfig, p: ProblemData, out: Path) -> Outcome:
    lam = _single_lambda(cfg, "solve")
    q = p.with_lambda(lam)
    files, code = [], EXIT_OK
    for branch, rep in solve_both(q, cfg.tolerances, cfg.seed):
        log.info("branch %d: converged=%s residual=%.3e energy=%.12g eig_min=%.4g",
                 branch, rep.converged, rep.residual, rep.energy, rep.eig_min)
        if rep.converged:
            files.append(write_solution(out, q, rep, branch, cfg.seed))
        else:
            code = EXIT_ANOMALY
    if lam > 0 and len(files) < 2:
        code = EXIT_ANOMALY
    return Outcome(code, files)


def fold_estimate(cfg: RunConfig, subdivisions: int, branches: bool = False):
    sc = cfg.sweep or SweepConfig()
    sc = SweepConfig(sc.start, sc.max, sc.step, sc.fold_tol, sc.mono_max_iter, branches)
    return sweep_lambda(cfg.problem(subdivisions, lam=sc.start), sc, cfg.tolerances)


def run_sweep(cfg: RunConfig, p: ProblemData, out: Path) -> Outcome:
    diagram = fold_estimate(cfg, cfg.subdivisions, branches=True)
    files = []
    for (branch, lam), rep in sorted(diagram.solutions.items()):
        if rep.converged:
            files.append(write_solution(out, p.with_lambda(lam), rep, branch, cfg.seed))
    path = out / "diagram.csv"
    write_atomic(path, diagram.to_csv())
    files.append(path)

    drift, coarse = None, None
    if cfg.subdivisions >= 1 and isinstance(cfg.K_spec, str):
        coarse = fold_estimate(cfg, cfg.subdivisions - 1).lambda_star
        drift = abs(diagram.lambda_star - coarse) / abs(diagram.lambda_star)
    star = dict(estimate=diagram.lambda_star, bracket=list(diagram.bracket), refinement_drift=drift,
                coarse_estimate=coarse, coarse_subdivisions=cfg.subdivisions - 1 if coarse is not None else None)
    path = out / "lambda_star.json"
    write_json(path, star)
    files.append(path)
    log.info("lambda_star = %.8g, bracket %s, drift %s", diagram.lambda_star, diagram.bracket, drift)
    bad = [r for r in diagram.branch(0) if not r.converged]
    return Outcome(EXIT_ANOMALY if bad else EXIT_OK, files)


def run_probe(cfg: RunConfig, p: ProblemData, out: Path, factor: float = 1.1, starts: int = 20) -> Outcome:
    """Probe at the configured lambda, or at ``factor`` times the fold estimate
    when the config holds a sweep."""
    extra, star = [], None
    if cfg.lam is not None:
        lam = cfg.lam
    else:
        diagram = fold_estimate(cfg, cfg.subdivisions)
        star = diagram.lambda_star
        lam = factor * star
        extra = [diagram.solutions[(0, star)].u]
    report = nonexistence_probe(p.with_lambda(lam), starts, cfg.seed, extra=extra, tol=cfg.tolerances)
    rec = report.to_dict()
    rec.update(lambda_star=star, factor=factor if star is not None else None, mesh_meta=mesh_meta(p))
    path = out / "probe.json"
    write_json(path, rec)
    log.info("probe at lambda=%.6g: %d/%d converged; %s", lam, report.converged, report.starts,
             report.identity_obstruction)
    if report.underestimate:
        log.warning("solutions found beyond the fold estimate: lambda_star is underestimated")
    return Outcome(EXIT_OK, [path])


def property_suite(cfg: RunConfig, p: ProblemData, out: Path, fd_points: int = 20) -> dict:
    """Gauss-Bonnet, maximum principle, derivative and manufactured-solution checks,
    plus re-validation of any solution files already in ``out``."""
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    checks = {}

    gb = gauss_bonnet_residual(p.geom)
    checks["gauss_bonnet"] = dict(residual=gb, relative=gb / abs(p.geom.gauss_bonnet_target), ok=gb <= tol.gb_tol)

    dmp = dmp_check(p.S, p.m, 1.0, trials=100, rng=rng)
    checks["maximum_principle"] = dict(min_entry=dmp.min_entry, positive_offdiagonals=dmp.positive_offdiagonals,
                                       ok=dmp.ok)

    g_rel, h_rel = [], []
    q = p.with_lambda(p.lam if cfg.lam is None else cfg.lam)
    for _ in range(fd_points):
        u = rng.uniform(-1.0, 1.0, p.geom.n_vertices)
        h = rng.standard_normal(p.geom.n_vertices)
        c = finite_difference_check(q, u, h)
        g_rel.append(c.gradient_rel)
        h_rel.append(c.hessian_rel)
    checks["derivatives"] = dict(gradient_rel=max(g_rel), hessian_rel=max(h_rel),
                                 ok=max(g_rel) <= 1e-6 and max(h_rel) <= 1e-5)

    if isinstance(cfg.K_spec, str):
        errs = []
        for level in (cfg.subdivisions, cfg.subdivisions + 1):
            r = cfg.problem(level)
            # recovery is only unambiguous where the problem is convex
            case = manufactured_case(r.geom, r.K, q.lam if q.lam <= 0 else -0.5, linear_profile(0.3))
            errs.append(recover(case, tol.newton_tol).error_l2)
        ratio = errs[0] / errs[1]
        checks["manufactured"] = dict(levels=[cfg.subdivisions, cfg.subdivisions + 1], error_l2=errs,
                                      ratio=ratio, ok=ratio >= 1.5)

    stored = sorted(out.glob("solution_*.json")) if out.exists() else []
    failures = []
    for path in stored:
        try:
            load_solution(path, p, tol)
        except (ValidationError, KeyError, ValueError) as exc:
            failures.append(str(exc))
    checks["stored_solutions"] = dict(count=len(stored), failures=failures, ok=not failures)
    return checks


def run_verify(cfg: RunConfig, p: ProblemData, out: Path) -> Outcome:
    checks = property_suite(cfg, p, out)
    path = out / "verify.json"
    write_json(path, checks)
    for name, c in checks.items():
        log.info("%-18s %s", name, "ok" if c["ok"] else "FAILED")
    return Outcome(EXIT_OK if all(c["ok"] for c in checks.values()) else EXIT_ANOMALY, [path])


def run_oracle(cfg: RunConfig, p: ProblemData, out: Path, starts: int = 10, match_tol: float = 1e-8) -> Outcome:
    q = p.with_lambda(_single_lambda(cfg, "oracle"))
    result = dense_oracle(q, starts, cfg.seed, tol=cfg.tolerances.newton_tol)
    main = solve_both(q, cfg.tolerances, cfg.seed)
    matches = []
    for branch, rep in main:
        dist = min((float(np.max(np.abs(c.u - rep.u))) for c in result.clusters), default=math.inf)
        matches.append(dict(branch=branch, converged=rep.converged, distance=dist, ok=dist <= match_tol))
    rec = dict(
        **{"lambda": q.lam},
        flows=result.flows,
        discarded=result.discarded,
        clusters=[dict(kind=c.info["kind"], count=n, energy=c.energy, residual=c.residual, eig_min=c.eig_min,
                       identity_gap=c.energy_report.identity_gap, u=c.u)
                  for c, n in zip(result.clusters, result.counts)],
        matches=matches,
        mesh_meta=mesh_meta(q),
    )
    path = out / "oracle.json"
    write_json(path, rec)
    log.info("oracle: %d cluster(s) from %d flows (%d discarded)", len(result.clusters), result.flows, result.discarded)
    ok = all(m["ok"] for m in matches)
    return Outcome(EXIT_OK if ok else EXIT_ANOMALY, [path])


COMMANDS = dict(solve=run_solve, sweep=run_sweep, probe=run_probe, verify=run_verify, oracle=run_oracle)


def run(cfg: RunConfig, command: str = "solve") -> int:
    """Run ``command`` on a config that has already passed :func:`load_config`."""
    out = Path(cfg.output_dir)
    try:
        p = cfg.problem()
        p.check_hypotheses()
        outcome = COMMANDS[command](cfg, p, out)
    except SolverError as exc:
        log.error("%s", exc)
        return EXIT_ANOMALY
    for f in outcome.files:
        log.info("wrote %s", f)
    return outcome.code
