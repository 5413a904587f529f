"""Finite-difference calculus on the round sphere.

Two layouts are supported:

* ``AxisymGrid``: fields depending only on the polar angle, on ``N`` uniform
  nodes covering ``[0, pi]`` including both poles, for any sphere dimension
  ``n >= 2``.  The sphere factor orthogonal to the profile enters only through
  the multiplicity ``n - 1`` of the angular Hessian eigenvalue.
* ``LatLongGrid``: full fields on S^2 with polar rows staggered half a cell
  away from the poles and periodic longitude.

All derivatives are fourth-order centred.  Ghost values come from the
symmetry of smooth functions on the sphere: axisymmetric profiles are even
about each pole, and on the lat-long grid the row beyond a pole is the row
on the other side shifted by half a revolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError

MIN_AXISYM_NODES = 16
MIN_LATLONG_LAMBDA = 8
MIN_LATLONG_THETA = 4

SNAPSHOT_MAGIC = "HYPFLOW-GRID v1"


def _d1(f, h):
    # f padded by 2 on both ends of axis 0
    return ((f[3:-1] - f[1:-3]) * 8.0 - (f[4:] - f[:-4])) / (12.0 * h)


def _d2(f, h):
    c = f[2:-2]
    return (((f[3:-1] - c) + (f[1:-3] - c)) * 16.0 - ((f[4:] - c) + (f[:-4] - c))) / (12.0 * h * h)


@dataclass(frozen=True, eq=False)
class AxisymGrid:
    """Uniform polar-angle grid for axisymmetric fields on S^n."""

    n: int
    N: int
    theta: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)
    cot: np.ndarray = field(init=False, repr=False)
    sin: np.ndarray = field(init=False, repr=False)
    pole: np.ndarray = field(init=False, repr=False)

    layout = "axisym"

    def __post_init__(self):
        problems = []
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            problems.append(f"sphere dimension n must be >= 2, got {self.n!r}")
        if not isinstance(self.N, (int, np.integer)) or self.N < MIN_AXISYM_NODES:
            problems.append(f"axisym grid needs N >= {MIN_AXISYM_NODES} nodes, got {self.N!r}")
        if problems:
            raise ConfigurationError(problems)
        theta = np.linspace(0.0, np.pi, self.N)
        theta[-1] = np.pi
        sin = np.sin(theta)
        sin[0] = sin[-1] = 0.0
        pole = np.zeros(self.N, dtype=bool)
        pole[[0, -1]] = True
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = np.where(pole, 0.0, np.cos(theta) / np.where(pole, 1.0, sin))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "h", np.pi / (self.N - 1))
        object.__setattr__(self, "cot", cot)
        object.__setattr__(self, "sin", sin)
        object.__setattr__(self, "pole", pole)

    @property
    def shape(self):
        return (self.N,)

    @property
    def min_spacing(self) -> float:
        return self.h

    def header(self) -> str:
        return f"{SNAPSHOT_MAGIC}, axisym, {self.n}, {self.N}"

    def coordinates(self):
        return (self.theta,)

    def pad(self, f):
        """Even reflection about both poles, two ghost nodes per side."""
        f = np.asarray(f, dtype=float)
        return np.concatenate((f[2:0:-1], f, f[-2:-4:-1]))

    def integrate_weights(self):
        """Trapezoid weights for the normalized area measure of S^n."""
        w = np.sin(self.theta) ** (self.n - 1)
        w[[0, -1]] *= 0.5
        return w / w.sum()


@dataclass(frozen=True, eq=False)
class LatLongGrid:
    """Staggered latitude-longitude grid on S^2.

    Colatitudes ``theta_j = (j + 1/2) pi / ntheta`` never touch a pole;
    longitudes ``lambda_k = 2 pi k / nlambda`` are periodic.
    """

    ntheta: int
    nlambda: int
    n: int = field(init=False, default=2)
    theta: np.ndarray = field(init=False, repr=False)
    lam: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)
    hlam: float = field(init=False)
    sin: np.ndarray = field(init=False, repr=False)
    cos: np.ndarray = field(init=False, repr=False)
    cot: np.ndarray = field(init=False, repr=False)

    layout = "latlong"

    def __post_init__(self):
        problems = []
        if not isinstance(self.ntheta, (int, np.integer)) or self.ntheta < MIN_LATLONG_THETA:
            problems.append(f"latlong grid needs ntheta >= {MIN_LATLONG_THETA}, got {self.ntheta!r}")
        if not isinstance(self.nlambda, (int, np.integer)) or self.nlambda < MIN_LATLONG_LAMBDA:
            problems.append(f"latlong grid needs nlambda >= {MIN_LATLONG_LAMBDA}, got {self.nlambda!r}")
        elif self.nlambda % 2:
            problems.append(f"nlambda must be even for cross-pole ghosts, got {self.nlambda}")
        if problems:
            raise ConfigurationError(problems)
        h = np.pi / self.ntheta
        hlam = 2.0 * np.pi / self.nlambda
        theta1d = (np.arange(self.ntheta) + 0.5) * h
        lam1d = np.arange(self.nlambda) * hlam
        theta, lam = np.meshgrid(theta1d, lam1d, indexing="ij")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "hlam", hlam)
        object.__setattr__(self, "sin", np.sin(theta))
        object.__setattr__(self, "cos", np.cos(theta))
        object.__setattr__(self, "cot", np.cos(theta) / np.sin(theta))

    @property
    def shape(self):
        return (self.ntheta, self.nlambda)

    @property
    def min_spacing(self) -> float:
        return min(self.h, float(np.sin(0.5 * self.h)) * self.hlam)

    def header(self) -> str:
        return f"{SNAPSHOT_MAGIC}, latlong, 2, {self.ntheta}, {self.nlambda}"

    def coordinates(self):
        return (self.theta, self.lam)

    def pad(self, f):
        """Two ghost rows across each pole and two periodic ghost columns."""
        f = np.asarray(f, dtype=float)
        half = self.nlambda // 2
        flipped = np.roll(f, -half, axis=1)
        ext = np.concatenate((flipped[1::-1], f, flipped[:-3:-1]), axis=0)
        return np.concatenate((ext[:, -2:], ext, ext[:, :2]), axis=1)

    def integrate_weights(self):
        w = self.sin.copy()
        return w / w.sum()


def build_grid(layout, **sizes):
    """Create a grid from a layout name and its sizes.

    ``build_grid("axisym", n=2, N=401)`` or
    ``build_grid("latlong", ntheta=64, nlambda=128)``.
    """
    if layout == "axisym":
        return AxisymGrid(int(sizes.get("n", 2)), int(sizes["N"]))
    if layout == "latlong":
        n = sizes.get("n", 2)
        if n != 2:
            raise ConfigurationError(f"latlong layout only supports n=2, got n={n}")
        return LatLongGrid(int(sizes["ntheta"]), int(sizes["nlambda"]))
    raise ConfigurationError(f"unknown grid layout {layout!r}")


class Gradient(NamedTuple):
    covector: tuple  # (f_theta,) or (f_theta, f_lambda)
    vector: tuple  # indices raised with the round metric
    norm2: np.ndarray  # |Df|^2 in the round metric


class Hessian(NamedTuple):
    """Covariant Hessian with respect to the round metric.

    Axisymmetric grids fill ``radial`` (the theta-theta eigenvalue) and
    ``angular`` (the eigenvalue of multiplicity n-1, ``cot(theta) f'`` away
    from the poles and ``f''`` at them).  Lat-long grids fill the covariant
    components ``tt``, ``tl`` and ``ll``.
    """

    radial: np.ndarray = None
    angular: np.ndarray = None
    tt: np.ndarray = None
    tl: np.ndarray = None
    ll: np.ndarray = None


def _latlong_partials(grid: LatLongGrid, f):
    p = grid.pad(f)
    core_l = p[:, 2:-2]
    ft = _d1(core_l, grid.h)
    ftt = _d2(core_l, grid.h)
    fl_all = _d1(p.T, grid.hlam).T  # every padded row, interior columns
    fl = fl_all[2:-2]
    fll = _d2(p[2:-2].T, grid.hlam).T
    ftl = _d1(fl_all, grid.h)
    return ft, fl, ftt, ftl, fll


def sigma_gradient(grid, f) -> Gradient:
    """First derivatives of a scalar field and their squared round-metric norm."""
    f = np.asarray(f, dtype=float)
    if isinstance(grid, AxisymGrid):
        ft = _d1(grid.pad(f), grid.h)
        ft[grid.pole] = 0.0
        return Gradient((ft,), (ft,), ft * ft)
    ft, fl, *_ = _latlong_partials(grid, f)
    fl_up = fl / grid.sin**2
    return Gradient((ft, fl), (ft, fl_up), ft * ft + fl * fl_up)


def sigma_derivatives(grid, f):
    """Gradient and covariant Hessian from a single pass over the stencils."""
    f = np.asarray(f, dtype=float)
    if isinstance(grid, AxisymGrid):
        p = grid.pad(f)
        ft = _d1(p, grid.h)
        ft[grid.pole] = 0.0
        ftt = _d2(p, grid.h)
        ang = np.where(grid.pole, ftt, grid.cot * ft)
        return Gradient((ft,), (ft,), ft * ft), Hessian(radial=ftt, angular=ang)
    ft, fl, ftt, ftl, fll = _latlong_partials(grid, f)
    fl_up = fl / grid.sin**2
    grad = Gradient((ft, fl), (ft, fl_up), ft * ft + fl * fl_up)
    hess = Hessian(
        tt=ftt,
        tl=ftl - grid.cot * fl,
        ll=fll + grid.sin * grid.cos * ft,
    )
    return grad, hess


def sigma_hessian(grid, f) -> Hessian:
    return sigma_derivatives(grid, f)[1]


def laplacian(grid, f):
    """Laplace-Beltrami operator of the round metric (trace of the Hessian)."""
    hess = sigma_hessian(grid, f)
    if isinstance(grid, AxisymGrid):
        return hess.radial + (grid.n - 1) * hess.angular
    return hess.tt + hess.ll / grid.sin**2


def write_snapshot(path, grid, fields):
    """Write node coordinates and named fields as a headed CSV dump.

    The first line is ``HYPFLOW-GRID v1, layout, n, N[, Nlambda]``; each
    following row holds the node coordinates then the field values in the
    order given by ``fields`` (a mapping or sequence of pairs).
    """
    items = list(fields.items()) if hasattr(fields, "items") else list(fields)
    cols = [np.ravel(c) for c in grid.coordinates()]
    cols += [np.ravel(np.broadcast_to(v, grid.shape)) for _, v in items]
    table = np.column_stack(cols)
    with open(path, "w", newline="\n") as fh:
        fh.write(grid.header() + "\n")
        np.savetxt(fh, table, delimiter=",", fmt="%.17g")


def read_snapshot(path):
    """Parse a snapshot dump; returns ``(header_fields, table)``."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(SNAPSHOT_MAGIC):
            raise ValueError(f"{path}: not a hypflow grid snapshot")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    return [s.strip() for s in header.split(",")], table
