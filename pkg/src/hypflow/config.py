"""Run configuration: a versioned YAML document validated in one pass.

Example::

    version: hypflow-config v1
    n: 2
    model: polar
    curvature: {kind: mean}
    grid: {layout: axisym, N: 201}
    initial: {family: axisym_perturbed, r0: 1.0, coefficients: {2: 0.05}}
    step: {t_end: 10.0, cfl: 0.2}
    output: {cadence: 0.1}
    diagnostics:
      checks: true
      rates:
        - {quantity: umbil_deficit, window: [4.0, 10.0], expect: [-1.1, -0.45]}

Lat-long harmonic coefficients use ``"l,m"`` keys, e.g. ``{"2,1": 0.01}``.
Every violation is collected before :class:`ConfigurationError` is raised.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .curvature import CurvatureKind, make_function
from .diagnostics import COLUMNS
from .errors import ConfigurationError
from .flow import FAMILIES, StepControl
from .geometry import BALL_RADIUS, Model
from .sphere import MIN_AXISYM_NODES, MIN_LATLONG_LAMBDA, MIN_LATLONG_THETA, build_grid

log = logging.getLogger(__name__)

VERSION = "hypflow-config v1"

_SCHEMA = {
    "version": None,
    "n": None,
    "model": None,
    "curvature": {"kind", "k"},
    "grid": {"layout", "N", "ntheta", "nlambda"},
    "initial": {"family", "r0", "coefficients"},
    "step": {"t_end", "cfl", "dt_min", "dt_max"},
    "output": {"dir", "cadence", "snapshots", "snapshot_every"},
    "diagnostics": {"checks", "rates"},
    "seed": None,
}
_RATE_KEYS = {"quantity", "window", "expect"}


@dataclass
class RateSpec:
    quantity: str
    window: Optional[tuple] = None
    expect: Optional[tuple] = None


@dataclass
class RunConfig:
    n: int = 2
    model: str = "polar"
    curvature_kind: str = "mean"
    curvature_k: Optional[int] = None
    layout: str = "axisym"
    N: Optional[int] = 201
    ntheta: Optional[int] = None
    nlambda: Optional[int] = None
    family: str = "sphere"
    r0: float = 1.0
    coefficients: dict = field(default_factory=dict)
    t_end: float = 10.0
    cfl: float = 0.2
    dt_min: float = 1e-10
    dt_max: Optional[float] = None
    cadence: float = 0.1
    out_dir: Optional[str] = None
    snapshots: bool = False
    snapshot_every: int = 10
    checks: bool = True
    rates: list = field(default_factory=list)
    seed: int = 0

    def curvature_function(self):
        return make_function(self.curvature_kind, self.curvature_k, self.n)

    def grid(self):
        if self.layout == "axisym":
            return build_grid("axisym", n=self.n, N=self.N)
        return build_grid("latlong", n=self.n, ntheta=self.ntheta, nlambda=self.nlambda)

    def step_control(self) -> StepControl:
        return StepControl(self.t_end, self.cfl, self.dt_min, self.dt_max, self.cadence)

    def rate_specs(self):
        """Configured rate fits with default windows ``[2n, 5n]`` filled in."""
        out = []
        for r in self.rates:
            window = r.window if r.window is not None else (2.0 * self.n, 5.0 * self.n)
            out.append(RateSpec(r.quantity, tuple(window), r.expect))
        return out

    def to_dict(self) -> dict:
        grid = {"layout": self.layout}
        if self.layout == "axisym":
            grid["N"] = self.N
        else:
            grid.update(ntheta=self.ntheta, nlambda=self.nlambda)
        coeffs = {}
        for key, a in self.coefficients.items():
            coeffs[f"{key[0]},{key[1]}" if isinstance(key, tuple) else int(key)] = float(a)
        curvature = {"kind": self.curvature_kind}
        if self.curvature_k is not None:
            curvature["k"] = self.curvature_k
        output = {"cadence": self.cadence, "snapshots": self.snapshots, "snapshot_every": self.snapshot_every}
        if self.out_dir is not None:
            output["dir"] = self.out_dir
        rates = []
        for r in self.rates:
            entry = {"quantity": r.quantity}
            if r.window is not None:
                entry["window"] = [float(w) for w in r.window]
            if r.expect is not None:
                entry["expect"] = [float(w) for w in r.expect]
            rates.append(entry)
        return {
            "version": VERSION,
            "n": self.n,
            "model": self.model,
            "curvature": curvature,
            "grid": grid,
            "initial": {"family": self.family, "r0": float(self.r0), "coefficients": coeffs},
            "step": {"t_end": float(self.t_end), "cfl": float(self.cfl), "dt_min": float(self.dt_min),
                     "dt_max": None if self.dt_max is None else float(self.dt_max)},
            "output": output,
            "diagnostics": {"checks": self.checks, "rates": rates},
            "seed": self.seed,
        }


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False)


class _Collector:
    def __init__(self):
        self.problems = []

    def number(self, value, name, kind=float, optional=False):
        if value is None:
            if not optional:
                self.problems.append(f"{name} is required")
            return None
        if isinstance(value, bool):
            self.problems.append(f"{name} must be a number, got {value!r}")
            return None
        try:
            out = kind(float(value)) if kind is int else float(value)
        except (TypeError, ValueError):
            self.problems.append(f"{name} must be a number, got {value!r}")
            return None
        if kind is int and float(value) != out:
            self.problems.append(f"{name} must be an integer, got {value!r}")
            return None
        return out

    def require(self, cond, message):
        if not cond:
            self.problems.append(message)


def _load_source(source):
    if isinstance(source, dict):
        return dict(source), "<dict>"
    text = str(source)
    if "\n" not in text and os.path.exists(text):
        with open(text) as fh:
            return yaml.safe_load(fh), text
    if "\n" not in text and (text.endswith((".yaml", ".yml")) or os.sep in text):
        raise ConfigurationError(f"config file not found: {text}")
    return yaml.safe_load(text), "<inline>"


def parse_config(source, strict=True) -> RunConfig:
    """Parse and validate a configuration (path, YAML text or dict).

    With ``strict=False`` unknown keys are logged and ignored instead of
    reported as violations.
    """
    try:
        raw, origin = _load_source(source)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping")
    c = _Collector()
    unknown = []
    for key, val in raw.items():
        if key not in _SCHEMA:
            unknown.append(str(key))
        elif _SCHEMA[key] is not None:
            if val is None:
                continue
            if not isinstance(val, dict):
                c.problems.append(f"section {key!r} must be a mapping")
                continue
            unknown += [f"{key}.{k}" for k in val if k not in _SCHEMA[key]]
    if unknown:
        if strict:
            c.problems += [f"unknown key {k!r}" for k in unknown]
        else:
            log.warning("ignoring unknown config keys: %s", ", ".join(unknown))

    def section(name):
        val = raw.get(name) or {}
        return val if isinstance(val, dict) else {}

    version = raw.get("version")
    c.require(version == VERSION, f"version must be {VERSION!r}, got {version!r}")

    cfg = RunConfig()
    n = c.number(raw.get("n"), "n", int)
    if n is not None:
        c.require(n >= 2, f"n must be >= 2 (hypersurfaces in H^(n+1) with n >= 2), got {n}")
        cfg.n = n
    model = raw.get("model", "polar")
    c.require(model in [m.value for m in Model], f"model must be 'polar' or 'ball', got {model!r}")
    cfg.model = model

    cur = section("curvature")
    kind = cur.get("kind", "mean")
    if kind not in [k.value for k in CurvatureKind]:
        c.problems.append(f"curvature.kind must be one of {[k.value for k in CurvatureKind]}, got {kind!r}")
    cfg.curvature_kind = kind
    k = c.number(cur.get("k"), "curvature.k", int, optional=True)
    cfg.curvature_k = k
    if kind == "sigma_k":
        c.require(k is not None and 1 <= k <= cfg.n, f"curvature.k must lie in 1..n for sigma_k, got {k}")
    elif k is not None:
        c.problems.append(f"curvature.k is only valid for sigma_k, got k={k} for {kind}")

    grid = section("grid")
    layout = grid.get("layout", "axisym")
    cfg.layout = layout
    if layout == "axisym":
        N = c.number(grid.get("N", 201), "grid.N", int)
        c.require(N is None or N >= MIN_AXISYM_NODES, f"grid.N must be >= {MIN_AXISYM_NODES}, got {N}")
        c.require("ntheta" not in grid and "nlambda" not in grid, "ntheta/nlambda only apply to latlong grids")
        cfg.N = N
    elif layout == "latlong":
        cfg.N = None
        cfg.ntheta = c.number(grid.get("ntheta"), "grid.ntheta", int)
        cfg.nlambda = c.number(grid.get("nlambda"), "grid.nlambda", int)
        c.require(cfg.n == 2, f"latlong grids require n = 2, got n = {cfg.n}")
        c.require("N" not in grid, "grid.N only applies to axisym grids")
        if cfg.ntheta is not None:
            c.require(cfg.ntheta >= MIN_LATLONG_THETA, f"grid.ntheta must be >= {MIN_LATLONG_THETA}")
        if cfg.nlambda is not None:
            c.require(cfg.nlambda >= MIN_LATLONG_LAMBDA and cfg.nlambda % 2 == 0,
                      f"grid.nlambda must be even and >= {MIN_LATLONG_LAMBDA}, got {cfg.nlambda}")
    else:
        c.problems.append(f"grid.layout must be 'axisym' or 'latlong', got {layout!r}")

    ini = section("initial")
    family = ini.get("family", "sphere")
    c.require(family in FAMILIES, f"initial.family must be one of {FAMILIES}, got {family!r}")
    cfg.family = family
    r0 = c.number(ini.get("r0"), "initial.r0")
    if r0 is not None:
        cfg.r0 = r0
        c.require(r0 > 0, f"initial.r0 must be positive, got {r0}")
        if model == "ball":
            c.require(r0 < BALL_RADIUS, f"initial.r0 must lie in (0, 2) for the ball model, got {r0}")
    coeffs = ini.get("coefficients") or {}
    if not isinstance(coeffs, dict):
        c.problems.append("initial.coefficients must be a mapping")
        coeffs = {}
    parsed = {}
    for key, a in coeffs.items():
        val = c.number(a, f"initial.coefficients[{key}]")
        if family == "latlong_perturbed":
            try:
                l, m = (int(s) for s in str(key).replace(" ", "").split(","))
            except ValueError:
                c.problems.append(f"latlong coefficient key must be 'l,m', got {key!r}")
                continue
            c.require(1 <= l <= 4 and abs(m) <= l, f"harmonic ({l},{m}) outside 1 <= l <= 4, |m| <= l")
            parsed[(l, m)] = val
        else:
            try:
                l = int(key)
            except (TypeError, ValueError):
                c.problems.append(f"Legendre coefficient key must be an integer, got {key!r}")
                continue
            c.require(l >= 1, f"Legendre modes start at l=1, got {l}")
            parsed[l] = val
    c.require(family != "sphere" or not parsed, "sphere initial data takes no coefficients")
    c.require(family != "latlong_perturbed" or layout == "latlong", "latlong_perturbed needs a latlong grid")
    cfg.coefficients = parsed

    st = section("step")
    cfg.t_end = c.number(st.get("t_end"), "step.t_end")
    cfg.cfl = c.number(st.get("cfl", 0.2), "step.cfl")
    cfg.dt_min = c.number(st.get("dt_min", 1e-10), "step.dt_min")
    cfg.dt_max = c.number(st.get("dt_max"), "step.dt_max", optional=True)
    if cfg.t_end is not None:
        c.require(cfg.t_end >= 0, f"step.t_end must be non-negative, got {cfg.t_end}")
    if cfg.cfl is not None:
        c.require(0 < cfg.cfl <= 1, f"step.cfl must lie in (0, 1], got {cfg.cfl}")
    if cfg.dt_min is not None:
        c.require(cfg.dt_min > 0, f"step.dt_min must be positive, got {cfg.dt_min}")
        if cfg.dt_max is not None:
            c.require(cfg.dt_max >= cfg.dt_min, "step.dt_max must be >= step.dt_min")

    out = section("output")
    cfg.cadence = c.number(out.get("cadence", 0.1), "output.cadence")
    if cfg.cadence is not None:
        c.require(cfg.cadence > 0, f"output.cadence must be positive, got {cfg.cadence}")
    cfg.out_dir = out.get("dir")
    cfg.snapshots = bool(out.get("snapshots", False))
    cfg.snapshot_every = c.number(out.get("snapshot_every", 10), "output.snapshot_every", int)

    diag = section("diagnostics")
    cfg.checks = bool(diag.get("checks", True))
    rates = diag.get("rates") or []
    if not isinstance(rates, list):
        c.problems.append("diagnostics.rates must be a list")
        rates = []
    for i, r in enumerate(rates):
        if not isinstance(r, dict):
            c.problems.append(f"diagnostics.rates[{i}] must be a mapping")
            continue
        extra = set(r) - _RATE_KEYS
        if extra and strict:
            c.problems += [f"unknown key 'diagnostics.rates[{i}].{k}'" for k in sorted(extra)]
        q = r.get("quantity")
        c.require(q in COLUMNS and q != "t", f"diagnostics.rates[{i}].quantity must be a series column, got {q!r}")
        pairs = {}
        for name in ("window", "expect"):
            w = r.get(name)
            if w is None:
                pairs[name] = None
                continue
            if not (isinstance(w, (list, tuple)) and len(w) == 2):
                c.problems.append(f"diagnostics.rates[{i}].{name} must be a pair [a, b]")
                pairs[name] = None
                continue
            a = c.number(w[0], f"diagnostics.rates[{i}].{name}[0]")
            b = c.number(w[1], f"diagnostics.rates[{i}].{name}[1]")
            c.require(a is None or b is None or b > a, f"diagnostics.rates[{i}].{name} must satisfy a < b")
            pairs[name] = (a, b)
        cfg.rates.append(RateSpec(q, pairs["window"], pairs["expect"]))

    cfg.seed = c.number(raw.get("seed", 0), "seed", int)

    if c.problems:
        raise ConfigurationError([f"{origin}: {p}" for p in c.problems])
    return cfg
