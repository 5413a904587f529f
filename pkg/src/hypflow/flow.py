"""Time integration of the inverse curvature flow ``du/dt = v / F``.

The state carries the substituted graph function ``phi``; its evolution
``d(phi)/dt = 1 / F(mu)`` is advanced with the classical four-stage
Runge-Kutta method under a parabolic step restriction

    dt = clamp(cfl * h^2 / D_max, dt_min, dt_max)

where ``D_max`` bounds the diffusivity of the linearized right-hand side.
That diffusivity decays like ``exp(-2t/n)``, so the steps grow quickly and
long horizons stay cheap.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy.special import lpmv

from .curvature import CurvatureFunction
from .errors import AdmissibilityError, ConfigurationError, NumericsError
from .geometry import (
    Model,
    compute_geometry,
    conformal_shift,
    phi_from_u,
    polar_radius,
    require_admissible,
    shape_eigenvalues,
    shape_operator,
)
from .sphere import AxisymGrid, write_snapshot

log = logging.getLogger(__name__)

FAMILIES = ("sphere", "axisym_perturbed", "latlong_perturbed")


@dataclass(frozen=True, eq=False)
class FlowState:
    """Immutable snapshot of a flow: time, graph function and setup."""

    t: float
    phi: np.ndarray
    model: Model
    F: CurvatureFunction
    grid: object
    steps: int = 0
    last_dt: float = 0.0

    @property
    def n(self) -> int:
        return self.grid.n

    @cached_property
    def geometry(self):
        return compute_geometry(self.grid, self.phi, self.model)

    def replace(self, **changes) -> "FlowState":
        return dataclasses.replace(self, **changes)


@dataclass
class StepControl:
    """Step-size and output settings for :func:`run`.

    ``dt_max`` defaults to ``0.05 * n`` when left as ``None``.
    """

    t_end: float
    cfl: float = 0.2
    dt_min: float = 1e-10
    dt_max: Optional[float] = None
    cadence: float = 0.1

    def __post_init__(self):
        problems = []
        if not (0.0 < self.cfl <= 1.0):
            problems.append(f"cfl must lie in (0, 1], got {self.cfl}")
        if not (self.dt_min > 0.0):
            problems.append(f"dt_min must be positive, got {self.dt_min}")
        if self.dt_max is not None and not (self.dt_max >= self.dt_min):
            problems.append(f"dt_max ({self.dt_max}) must be >= dt_min ({self.dt_min})")
        if not (self.cadence > 0.0):
            problems.append(f"output cadence must be positive, got {self.cadence}")
        if not (self.t_end >= 0.0):
            problems.append(f"t_end must be non-negative, got {self.t_end}")
        if problems:
            raise ConfigurationError(problems)

    def max_step(self, n: int) -> float:
        return 0.05 * n if self.dt_max is None else self.dt_max


def sphere_exact(r0, n, t):
    """Radius at time ``t`` of the flow starting from a geodesic sphere of radius ``r0``.

    Solves ``sinh r = sinh(r0) exp(t/n)`` in log form so that large ``t``
    neither overflows nor loses digits.
    """
    r0 = np.asarray(r0, dtype=float)
    t = np.asarray(t, dtype=float)
    # log sinh(r0) without overflow
    log_sinh_r0 = r0 + np.log(-np.expm1(-2.0 * r0)) - math.log(2.0)
    lx = log_sinh_r0 + t / n
    small = np.arcsinh(np.exp(np.minimum(lx, 0.0)))
    large = lx + np.log1p(np.sqrt(1.0 + np.exp(-2.0 * np.maximum(lx, 0.0))))
    out = np.where(lx <= 0.0, small, large)
    return out[()] if out.ndim == 0 else out


def initial_profile(grid, family="sphere", r0=1.0, coefficients=None):
    """Initial radius field in the model's own radius variable.

    Families
    --------
    ``sphere``
        ``u0 = r0``.
    ``axisym_perturbed``
        ``u0 = r0 + sum_l a_l P_l(cos theta)`` with ``coefficients = {l: a_l}``.
    ``latlong_perturbed``
        ``u0 = r0 + sum a_lm Y_lm`` with unnormalized real harmonics
        ``P_l^|m|(cos theta) * (cos(m lambda) if m >= 0 else sin(|m| lambda))``
        and ``coefficients = {(l, m): a_lm}``, ``l <= 4``.
    """
    coefficients = coefficients or {}
    theta = grid.theta
    u0 = np.full(grid.shape, float(r0))
    if family == "sphere":
        if coefficients:
            raise ConfigurationError("sphere initial data takes no coefficients")
        return u0
    if family == "axisym_perturbed":
        lmax = max((int(l) for l in coefficients), default=0)
        c = np.zeros(lmax + 1)
        for l, a in coefficients.items():
            if int(l) < 1:
                raise ConfigurationError(f"Legendre modes start at l=1, got l={l}")
            c[int(l)] = float(a)
        return u0 + legendre.legval(np.cos(theta), c)
    if family == "latlong_perturbed":
        if grid.layout != "latlong":
            raise ConfigurationError("latlong_perturbed initial data needs a latlong grid")
        for (l, m), a in coefficients.items():
            l, m = int(l), int(m)
            if not (1 <= l <= 4 and abs(m) <= l):
                raise ConfigurationError(f"harmonic (l={l}, m={m}) outside 1 <= l <= 4, |m| <= l")
            radial = lpmv(abs(m), l, np.cos(theta))
            ang = np.cos(m * grid.lam) if m >= 0 else np.sin(-m * grid.lam)
            u0 = u0 + float(a) * radial * ang
        return u0
    raise ConfigurationError(f"unknown initial family {family!r}; expected one of {FAMILIES}")


def init_from_u(grid, model, F: CurvatureFunction, u0, t0=0.0) -> FlowState:
    """Flow state for an explicit initial radius field.

    Raises
    ------
    DomainError
        If ``u0`` leaves the model's radius range.
    AdmissibilityError
        If the initial curvatures are not inside the cone of ``F``.
    """
    model = Model(model)
    if F.n != grid.n:
        raise ConfigurationError(f"curvature function has n={F.n} but grid has n={grid.n}")
    phi = phi_from_u(model, np.broadcast_to(np.asarray(u0, dtype=float), grid.shape).copy())
    state = FlowState(float(t0), phi, model, F, grid)
    require_admissible(state.geometry, F, what="initial hypersurface")
    return state


def init(grid, model, F: CurvatureFunction, family="sphere", r0=1.0, coefficients=None) -> FlowState:
    return init_from_u(grid, model, F, initial_profile(grid, family, r0, coefficients))


def _speed_eigs(grid, phi, model):
    shape = shape_operator(grid, phi, model)
    if isinstance(grid, AxisymGrid):
        mu = np.empty(shape.radial.shape + (grid.n,))
        mu[..., 0] = shape.radial
        mu[..., 1:] = shape.angular[..., None]
    else:
        mu = shape_eigenvalues(shape, grid.n)
    if model is Model.BALL:
        u = shape.u
        mu += (u * conformal_shift(u) / (shape.v * shape.v))[..., None]
    return mu, shape.v


def rhs(state: FlowState, phi=None, diffusivity=False):
    """``d(phi)/dt`` for ``phi`` (default: the state's own), optionally with ``D_max``."""
    phi = state.phi if phi is None else phi
    mu, v = _speed_eigs(state.grid, phi, state.model)
    f = state.F.evaluate(mu)
    phidot = 1.0 / f
    if not diffusivity:
        return phidot
    g = state.F.gradient(mu, check=False).sum(axis=-1)
    d_max = float(np.max(g / (f * f * v * v)))
    return phidot, d_max


def adaptive_dt(state: FlowState, control: StepControl, d_max=None) -> float:
    """Parabolic step restriction clamped to ``[dt_min, dt_max]``."""
    if d_max is None:
        _, d_max = rhs(state, diffusivity=True)
    h = state.grid.min_spacing
    dt = control.cfl * h * h / d_max if d_max > 0 else math.inf
    return float(min(max(dt, control.dt_min), control.max_step(state.n)))


def _check_phi(state, phi, stage):
    if not np.all(np.isfinite(phi)):
        bad = np.flatnonzero(~np.isfinite(phi))
        raise NumericsError(f"non-finite graph values in stage {stage}", nodes=bad, t=state.t)
    limit = 0.0 if state.model is Model.POLAR else math.log(2.0)
    if np.any(phi >= limit):
        bad = np.flatnonzero(phi >= limit)
        raise NumericsError(f"graph left the model's radius range in stage {stage}", nodes=bad, t=state.t)


def step(state: FlowState, dt: float, k1=None) -> FlowState:
    """One classical RK4 step.  The input state is never modified.

    Raises
    ------
    AdmissibilityError
        With ``stage`` and ``t`` set, if any stage leaves the cone.
    """
    if not (dt > 0.0) or not math.isfinite(dt):
        raise ValueError(f"time step must be positive and finite, got {dt}")
    phi = state.phi
    stages = [None, 0.5 * dt, 0.5 * dt, dt]
    ks = []
    for i, frac in enumerate(stages, start=1):
        try:
            if i == 1:
                k = rhs(state) if k1 is None else k1
            else:
                trial = phi + frac * ks[-1]
                _check_phi(state, trial, i)
                k = rhs(state, trial)
        except AdmissibilityError as err:
            err.stage, err.t = i, state.t
            raise
        ks.append(k)
    new_phi = phi + (dt / 6.0) * (ks[0] + 2.0 * (ks[1] + ks[2]) + ks[3])
    _check_phi(state, new_phi, 4)
    return state.replace(t=state.t + dt, phi=new_phi, steps=state.steps + 1, last_dt=dt)


Observer = Callable[[float, FlowState], None]


def run(state: FlowState, control: StepControl, observers: Iterable[Observer] = ()) -> FlowState:
    """Integrate to ``control.t_end``, calling observers at every output time.

    Output times are ``k * cadence`` (and ``t_end``); steps are shortened to
    land on them exactly, so recorded times are strictly increasing and
    identical across runs that share a cadence.
    """
    observers = list(observers)
    t_end = float(control.t_end)
    for obs in observers:
        obs(state.t, state)
    k = int(math.floor(state.t / control.cadence + 1e-9))
    while state.t < t_end:
        k += 1
        target = min(k * control.cadence, t_end)
        if target <= state.t:
            continue
        while state.t < target:
            try:
                k1, d_max = rhs(state, diffusivity=True)
            except AdmissibilityError as err:
                err.stage, err.t = 1, state.t
                raise
            dt = adaptive_dt(state, control, d_max)
            remaining = target - state.t
            land = False
            if dt >= remaining:
                dt, land = remaining, True
            elif remaining - dt < 0.25 * dt:
                dt = 0.5 * remaining
            state = step(state, dt, k1=k1)
            if land:
                state = state.replace(t=target)
        for obs in observers:
            obs(state.t, state)
    return state


class SnapshotWriter:
    """Observer writing ``snap_XXXXX.csv`` grid dumps every ``every`` outputs."""

    def __init__(self, directory, every=1):
        self.directory = directory
        self.every = max(1, int(every))
        self.count = 0
        self.paths = []

    def __call__(self, t, state):
        if self.count % self.every == 0:
            os.makedirs(self.directory, exist_ok=True)
            path = os.path.join(self.directory, f"snap_{len(self.paths):05d}.csv")
            geo = state.geometry
            fields = {"t": t, "phi": state.phi, "u": geo.u, "v": geo.v}
            for i in range(state.n):
                fields[f"kappa_hyp_{i}"] = geo.kappa_hyp[..., i]
            write_snapshot(path, state.grid, fields)
            self.paths.append(path)
        self.count += 1


class FieldRecorder:
    """Observer keeping the hyperbolic radius field at each output time."""

    def __init__(self):
        self.times = []
        self.fields = []

    def __call__(self, t, state):
        self.times.append(t)
        self.fields.append(polar_radius(state.model, state.phi))
