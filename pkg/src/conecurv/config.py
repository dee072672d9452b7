"""Run configuration: JSON schema, validation and the hypothesis gate.

Example::

    {
      "mesh": {"subdivisions": 4},
      "divisor": [{"vertex_selector": [1, 1, 1], "beta": -0.7}, ...],
      "K_spec": "z3_minus_1",
      "lambda_spec": {"sweep": {"start": 0.0, "max": 2.0, "step": 0.05, "fold_tol": 1e-4}},
      "tolerances": {"newton_tol": 1e-10},
      "seed": 42,
      "output_dir": "out"
    }

``vertex_selector`` is a vertex id or a direction in R^3 (snapped to the
nearest mesh vertex).  ``K_spec`` is ``"z3_minus_1"``, ``"kappa_minus"`` or a
list with one value per vertex.  ``lambda_spec`` is a number or a sweep.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .energy import HypothesisError, ProblemData
from .geometry import Divisor, MAX_SUBDIVISIONS, TriMesh, build_geometry, build_icosphere
from .solver import SweepConfig, Tolerances

K_PRESETS = ("z3_minus_1", "kappa_minus")
_TOP_KEYS = {"mesh", "divisor", "K_spec", "lambda_spec", "tolerances", "seed", "output_dir"}
_SWEEP_KEYS = {"start", "max", "step", "fold_tol"}
# ``identity_tol`` in the file is relative to |2 pi chi|
_TOL_KEYS = {f.name for f in dataclasses.fields(Tolerances)} - {"identity_rel"} | {"identity_tol"}


class ConfigError(ValueError):
    """Schema violation; the message names the offending field."""


@dataclass
class RunConfig:
    subdivisions: int
    divisor: list[tuple[int | tuple[float, float, float], float]]
    K_spec: str | list[float]
    lam: float | None = None
    sweep: SweepConfig | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output_dir: str = "out"

    def mesh(self, subdivisions: int | None = None) -> TriMesh:
        return build_icosphere(self.subdivisions if subdivisions is None else subdivisions)

    def resolve_divisor(self, mesh: TriMesh) -> Divisor:
        entries = []
        for sel, beta in self.divisor:
            if isinstance(sel, int):
                if not 0 <= sel < mesh.n_vertices:
                    raise ConfigError(f"divisor: vertex id {sel} out of range for {mesh.n_vertices} vertices")
                entries.append((sel, beta))
            else:
                entries.extend(Divisor.snapped(mesh, [(sel, beta)]).entries)
        ids = [v for v, _ in entries]
        if len(set(ids)) != len(ids):
            raise ConfigError("divisor: two selectors resolve to the same vertex")
        return Divisor(tuple(entries))

    def problem(self, subdivisions: int | None = None, lam: float | None = None) -> ProblemData:
        """Problem data on the configured (or another) refinement level.

        Tabulated ``K`` only makes sense on the configured level.
        """
        mesh = self.mesh(subdivisions)
        divisor = self.resolve_divisor(mesh)
        if 2.0 + divisor.degree >= 0:
            # reject before the background fixture is built
            raise HypothesisError(f"chi(Sigma, beta) = {2.0 + divisor.degree:g} must be negative")
        geom = build_geometry(mesh, divisor, gb_tol=None)
        K = self._K(geom)
        lam = (self.lam if self.lam is not None else self.sweep.start) if lam is None else lam
        return ProblemData(geom, K, lam)

    def _K(self, geom) -> np.ndarray:
        if isinstance(self.K_spec, str):
            if self.K_spec == "z3_minus_1":
                return geom.mesh.vertices[:, 2] - 1.0
            # the fixture curvature vanishes at cone vertices, so its max is 0 already
            return np.array(geom.kappa, dtype=float)
        K = np.asarray(self.K_spec, dtype=float)
        if K.shape != (geom.n_vertices,):
            raise ConfigError(f"K_spec: tabulated K has {K.size} values, mesh has {geom.n_vertices} vertices")
        return K


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _number(x: Any, name: str) -> float:
    _require(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x),
             f"{name}: expected a finite number, got {x!r}")
    return float(x)


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded JSON document (schema only, no hypothesis checks)."""
    _require(isinstance(data, dict), "config: top level must be an object")
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, f"config: unknown field(s) {sorted(unknown)}")
    for key in ("mesh", "divisor", "K_spec", "lambda_spec"):
        _require(key in data, f"{key}: missing")

    mesh = data["mesh"]
    _require(isinstance(mesh, dict) and set(mesh) == {"subdivisions"}, "mesh: expected {\"subdivisions\": n}")
    sub = mesh["subdivisions"]
    _require(isinstance(sub, int) and not isinstance(sub, bool) and 0 <= sub <= MAX_SUBDIVISIONS,
             f"mesh.subdivisions: expected an integer in [0, {MAX_SUBDIVISIONS}], got {sub!r}")

    divisor = []
    _require(isinstance(data["divisor"], list), "divisor: expected a list")
    for i, entry in enumerate(data["divisor"]):
        where = f"divisor[{i}]"
        _require(isinstance(entry, dict) and set(entry) == {"vertex_selector", "beta"},
                 f"{where}: expected {{\"vertex_selector\", \"beta\"}}")
        beta = _number(entry["beta"], f"{where}.beta")
        _require(beta > -1.0, f"{where}.beta: orders must exceed -1, got {beta}")
        sel = entry["vertex_selector"]
        if isinstance(sel, int) and not isinstance(sel, bool):
            _require(sel >= 0, f"{where}.vertex_selector: negative vertex id")
            divisor.append((sel, beta))
        else:
            _require(isinstance(sel, list) and len(sel) == 3,
                     f"{where}.vertex_selector: expected a vertex id or a 3-vector")
            d = tuple(_number(c, f"{where}.vertex_selector") for c in sel)
            _require(any(c != 0 for c in d), f"{where}.vertex_selector: zero direction")
            divisor.append((d, beta))

    K_spec = data["K_spec"]
    if isinstance(K_spec, str):
        _require(K_spec in K_PRESETS, f"K_spec: unknown preset {K_spec!r}; expected one of {K_PRESETS}")
    else:
        _require(isinstance(K_spec, list) and len(K_spec) > 0, "K_spec: expected a preset name or a list")
        K_spec = [_number(v, "K_spec") for v in K_spec]

    lam, sweep = None, None
    ls = data["lambda_spec"]
    if isinstance(ls, dict):
        _require(set(ls) == {"sweep"} and isinstance(ls["sweep"], dict), "lambda_spec: expected {\"sweep\": {...}}")
        s = ls["sweep"]
        unknown = set(s) - _SWEEP_KEYS
        _require(not unknown, f"lambda_spec.sweep: unknown field(s) {sorted(unknown)}")
        vals = {k: _number(v, f"lambda_spec.sweep.{k}") for k, v in s.items()}
        sweep = SweepConfig(**vals)
        _require(sweep.step > 0 and sweep.fold_tol > 0, "lambda_spec.sweep: step and fold_tol must be positive")
        _require(sweep.max > sweep.start, "lambda_spec.sweep: max must exceed start")
    else:
        lam = _number(ls, "lambda_spec")

    tol = Tolerances()
    tdata = data.get("tolerances", {})
    _require(isinstance(tdata, dict), "tolerances: expected an object")
    for k, v in tdata.items():
        _require(k in _TOL_KEYS, f"tolerances.{k}: unknown tolerance")
        v = _number(v, f"tolerances.{k}")
        _require(v > 0, f"tolerances.{k}: must be positive")
        setattr(tol, "identity_rel" if k == "identity_tol" else k, v)

    seed = data.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2**64,
             f"seed: expected an unsigned 64-bit integer, got {seed!r}")
    out = data.get("output_dir", "out")
    _require(isinstance(out, str) and out, "output_dir: expected a non-empty string")
    return RunConfig(sub, divisor, K_spec, lam, sweep, tol, seed, out)


def check_hypotheses(cfg: RunConfig) -> ProblemData:
    """Build the problem on the configured mesh and run the hypothesis gate:
    chi < 0, max K = 0 and K not identically zero."""
    p = cfg.problem()
    p.check_hypotheses()
    return p


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    cfg = parse_config(data)
    check_hypotheses(cfg)
    return cfg
