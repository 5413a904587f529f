"""Geometry of radial graphs in hyperbolic space.

A star-shaped hypersurface is stored through the substituted graph function
``phi = integral of 1/vartheta`` over the radius, where ``vartheta`` is the
warping factor of the model:

* polar model, metric ``dr^2 + sinh(r)^2 sigma``: ``phi = log tanh(u/2)``;
* ball model, the Euclidean ball of radius 2 with conformal factor
  ``(1 - r^2/4)^-1``: ``phi = log u``.

The polar ``phi`` tends to ``0-`` as the hypersurface expands, so every
hyperbolic function of ``u`` is evaluated from ``exp(2 phi)`` without ever
forming ``sinh(u)`` for large ``u``.

The ball pipeline differentiates the Euclidean radius ``u`` itself rather
than ``phi``.  Since ``log u_ball = log 2 + phi_polar`` for the same surface,
differentiating ``phi`` in both models would make the two pipelines
identical; working from ``u`` keeps them independent discretizations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .curvature import CurvatureFunction
from .errors import AdmissibilityError, DomainError, NumericsError
from .sphere import AxisymGrid, Gradient, Hessian, sigma_derivatives

BALL_RADIUS = 2.0


class Model(str, enum.Enum):
    POLAR = "polar"
    BALL = "ball"


def _as_model(model) -> Model:
    return model if isinstance(model, Model) else Model(model)


def phi_from_u(model, u):
    """Substituted graph function for radii ``u`` in the given model."""
    model = _as_model(model)
    u = np.asarray(u, dtype=float)
    if model is Model.POLAR:
        if np.any(~(u > 0)) or np.any(~np.isfinite(u)):
            raise DomainError("polar radii must be finite and positive")
        # log tanh(u/2), accurate for large u where tanh rounds to 1
        e = np.exp(-u)
        log_one_minus_e = np.where(u > 1.0, np.log1p(-e), np.log(-np.expm1(-u)))
        return log_one_minus_e - np.log1p(e)
    if np.any(~(u > 0)) or np.any(~(u < BALL_RADIUS)):
        raise DomainError("ball radii must lie in (0, 2)")
    return np.log(u)


def u_from_phi(model, phi):
    """Inverse of :func:`phi_from_u`."""
    model = _as_model(model)
    phi = np.asarray(phi, dtype=float)
    if model is Model.POLAR:
        if np.any(~(phi < 0)):
            raise DomainError("polar graph function must be negative (finite radius)")
        # 2 artanh(e^phi)
        return np.log1p(np.exp(phi)) - np.log(-np.expm1(phi))
    if np.any(~(phi < np.log(BALL_RADIUS))):
        raise DomainError("ball graph function must be below log 2")
    return np.exp(phi)


def warp(model, phi):
    """Radius, warping factor and its radial derivative, all as functions of phi.

    Returns
    -------
    u, vartheta, vartheta_dot : ndarray
    """
    model = _as_model(model)
    phi = np.asarray(phi, dtype=float)
    if model is Model.POLAR:
        q = np.exp(phi)
        one_minus_q2 = -np.expm1(2.0 * phi)
        u = np.log1p(q) - np.log(-np.expm1(phi))
        return u, 2.0 * q / one_minus_q2, (1.0 + q * q) / one_minus_q2
    u = np.exp(phi)
    return u, u, np.ones_like(u)


def conformal_shift(u):
    """``psi'(r) = (r/2) / (1 - r^2/4)`` for the ball model's conformal factor."""
    return 0.5 * u / ((1.0 - 0.5 * u) * (1.0 + 0.5 * u))


def convert_radius(direction, r):
    """Convert radii between the ball model and hyperbolic polar distance.

    ``direction`` is ``"ball_to_polar"`` (``tau = log(2+r) - log(2-r)``) or
    ``"polar_to_ball"`` (``r = 2 tanh(tau/2)``).
    """
    r = np.asarray(r, dtype=float)
    if direction == "ball_to_polar":
        if np.any(~(r >= 0)) or np.any(~(r < BALL_RADIUS)):
            raise DomainError("ball radius must lie in [0, 2)")
        return np.log(2.0 + r) - np.log(2.0 - r)
    if direction == "polar_to_ball":
        if np.any(~(r >= 0)) or np.any(~np.isfinite(r)):
            raise DomainError("polar radius must be finite and non-negative")
        return 2.0 * np.tanh(0.5 * r)
    raise ValueError(f"unknown direction {direction!r}")


def ball_radius_minus_two(model, phi):
    """``u_ball - 2`` without cancellation, from either model's phi."""
    model = _as_model(model)
    phi = np.asarray(phi, dtype=float)
    if model is Model.POLAR:
        return 2.0 * np.expm1(phi)
    return 2.0 * np.expm1(phi - np.log(BALL_RADIUS))


def polar_radius(model, phi):
    """Hyperbolic distance from the centre for either model."""
    model = _as_model(model)
    if model is Model.POLAR:
        return u_from_phi(model, phi)
    return convert_radius("ball_to_polar", u_from_phi(model, phi))


@dataclass(frozen=True, eq=False)
class ShapeOperator:
    """The rescaled shape operator ``vartheta / v * h^i_j`` and its metric.

    For axisymmetric grids only the two distinct eigenvalues are kept
    (``radial`` and ``angular``); for lat-long grids the mixed 2x2 tensor
    ``mixed[i][j]`` and the auxiliary metric ``gtilde`` are stored.
    """

    model: Model
    phi: np.ndarray
    u: np.ndarray
    vartheta: np.ndarray
    vartheta_dot: np.ndarray
    v: np.ndarray
    dphi: Gradient
    hess: Hessian
    radial: np.ndarray = None
    angular: np.ndarray = None
    mixed: tuple = None
    gtilde: tuple = None


def _phi_derivatives(grid, phi, model, u):
    if model is Model.POLAR:
        return sigma_derivatives(grid, phi)
    gu, hu = sigma_derivatives(grid, u)
    cov = tuple(c / u for c in gu.covector)
    vec = tuple(c / u for c in gu.vector)
    grad = Gradient(cov, vec, gu.norm2 / (u * u))
    if isinstance(grid, AxisymGrid):
        radial = hu.radial / u - cov[0] * cov[0]
        angular = np.where(grid.pole, radial, hu.angular / u)
        return grad, Hessian(radial=radial, angular=angular)
    pt, pl = cov
    hess = Hessian(
        tt=hu.tt / u - pt * pt,
        tl=hu.tl / u - pt * pl,
        ll=hu.ll / u - pl * pl,
    )
    return grad, hess


def shape_operator(grid, phi, model) -> ShapeOperator:
    """Rescaled shape operator of ``graph(phi)`` in the given model."""
    model = _as_model(model)
    phi = np.asarray(phi, dtype=float)
    u, vt, vtd = warp(model, phi)
    grad, hess = _phi_derivatives(grid, phi, model, u)
    v2 = 1.0 + grad.norm2
    v = np.sqrt(v2)
    if isinstance(grid, AxisymGrid):
        radial = (vtd - hess.radial / v2) / v2
        angular = (vtd - hess.angular) / v2
        return ShapeOperator(model, phi, u, vt, vtd, v, grad, hess, radial=radial, angular=angular)

    pt, pl = grad.covector
    pt_up, pl_up = grad.vector
    inv_s2 = 1.0 / grid.sin**2
    p_tt = 1.0 - pt_up * pt_up / v2
    p_tl = -pt_up * pl_up / v2
    p_ll = inv_s2 - pl_up * pl_up / v2
    a_tt = p_tt * hess.tt + p_tl * hess.tl
    a_tl = p_tt * hess.tl + p_tl * hess.ll
    a_lt = p_tl * hess.tt + p_ll * hess.tl
    a_ll = p_tl * hess.tl + p_ll * hess.ll
    mixed = (
        ((vtd - a_tt) / v2, -a_tl / v2),
        (-a_lt / v2, (vtd - a_ll) / v2),
    )
    gtilde = (pt * pt + 1.0, pt * pl, pl * pl + grid.sin**2)
    return ShapeOperator(model, phi, u, vt, vtd, v, grad, hess, mixed=mixed, gtilde=gtilde)


def _eig2_mixed(m):
    (a, b), (c, d) = m
    half_tr = 0.5 * (a + d)
    half_diff = 0.5 * (a - d)
    disc = half_diff * half_diff + b * c
    root = np.sqrt(np.maximum(disc, 0.0))
    return half_tr - root, half_tr + root


def shape_eigenvalues(shape: ShapeOperator, n: int):
    """Eigenvalues of the rescaled shape operator, ascending on the last axis."""
    if shape.radial is not None:
        lam = np.empty(shape.radial.shape + (n,))
        lam[..., 0] = shape.radial
        lam[..., 1:] = shape.angular[..., None]
        lam.sort(axis=-1)
        return lam
    lo, hi = _eig2_mixed(shape.mixed)
    return np.stack((lo, hi), axis=-1)


def principal_curvatures(shape: ShapeOperator, n: int):
    """Model principal curvatures ``kappa_i = (v / vartheta) lambda_i``."""
    lam = shape_eigenvalues(shape, n)
    kappa = lam * (shape.v / shape.vartheta)[..., None]
    bad = ~np.all(np.isfinite(kappa), axis=-1)
    if np.any(bad):
        nodes = np.flatnonzero(bad)
        raise NumericsError(f"non-finite principal curvature at {len(nodes)} node(s)", nodes=nodes)
    return kappa


def hyperbolic_curvatures(model, kappa, u, v):
    """Principal curvatures with respect to the hyperbolic ambient metric.

    Polar-model curvatures already are hyperbolic.  Ball-model curvatures are
    Euclidean and get shifted by the conformal factor.
    """
    model = _as_model(model)
    kappa = np.asarray(kappa, dtype=float)
    if model is Model.POLAR:
        return kappa
    u = np.asarray(u, dtype=float)[..., None]
    v = np.asarray(v, dtype=float)[..., None]
    shrink = (1.0 - 0.5 * u) * (1.0 + 0.5 * u)
    return shrink * kappa + 0.5 * u / v


@dataclass(frozen=True, eq=False)
class GeometryFields:
    """Everything the flow and the diagnostics need about one graph.

    ``speed_eigs`` are the eigenvalues ``mu`` with ``d(phi)/dt = 1 / F(mu)``;
    in the polar model they coincide with the rescaled shape operator's
    eigenvalues, in the ball model they include the conformal shift.
    """

    shape: ShapeOperator
    kappa: np.ndarray
    kappa_hyp: np.ndarray
    speed_eigs: np.ndarray

    @property
    def model(self):
        return self.shape.model

    @property
    def phi(self):
        return self.shape.phi

    @property
    def u(self):
        return self.shape.u

    @property
    def v(self):
        return self.shape.v

    @property
    def grad_norm2(self):
        return self.shape.dphi.norm2


def compute_geometry(grid, phi, model) -> GeometryFields:
    model = _as_model(model)
    shape = shape_operator(grid, phi, model)
    kappa = principal_curvatures(shape, grid.n)
    khyp = hyperbolic_curvatures(model, kappa, shape.u, shape.v)
    if model is Model.POLAR:
        mu = shape_eigenvalues(shape, grid.n)
    else:
        u = shape.u
        shift = u * conformal_shift(u) / (shape.v * shape.v)
        mu = shape_eigenvalues(shape, grid.n) + shift[..., None]
    return GeometryFields(shape, kappa, khyp, mu)


def flow_speed(fields: GeometryFields, F: CurvatureFunction):
    """Time derivative of phi under the inverse curvature flow.

    Raises
    ------
    AdmissibilityError
        If any node's curvatures lie outside the cone of ``F``.
    """
    return 1.0 / F.evaluate(fields.speed_eigs)


def normal_speed(fields: GeometryFields, F: CurvatureFunction):
    """``du/dt`` in the fields' own model radius."""
    phidot = flow_speed(fields, F)
    return fields.shape.vartheta * phidot


def diffusivity(fields: GeometryFields, F: CurvatureFunction):
    """Per-node spectral bound ``F^-2 v^-2 sum_i dF/dkappa_i`` of the linearized flow."""
    mu = fields.speed_eigs
    f = F.evaluate(mu)
    g = F.gradient(mu, check=False).sum(axis=-1)
    return g / (f * f * fields.v**2)


def hyperbolic_F(fields: GeometryFields, F: CurvatureFunction):
    """F of the hyperbolic principal curvatures."""
    return F.evaluate(fields.kappa_hyp)


def admissible(fields: GeometryFields, F: CurvatureFunction) -> bool:
    return bool(np.all(F.in_cone(fields.speed_eigs)))


def require_admissible(fields: GeometryFields, F: CurvatureFunction, what="graph"):
    inside = F.in_cone(fields.speed_eigs)
    if not np.all(inside):
        bad = np.flatnonzero(~inside)
        raise AdmissibilityError(
            f"{what} is not admissible for {F.label}: {len(bad)} node(s) outside the cone",
            nodes=bad,
            values=fields.kappa_hyp.reshape(-1, F.n)[bad],
        )
