"""Symmetric curvature functions and their cones.

Every function here is homogeneous of degree one, monotone and concave on
its open cone, and normalized so that ``F(1, ..., 1) == n``.  Arrays of
curvature vectors are accepted with the principal curvatures on the last
axis, so a whole grid of nodes is evaluated in one call.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from .errors import AdmissibilityError, ConfigurationError, StencilError

DEFAULT_CONE_MARGIN = 1e-12


class CurvatureKind(str, enum.Enum):
    MEAN = "mean"
    SIGMA_K = "sigma_k"
    GEOMETRIC = "geometric"


class ConeKind(str, enum.Enum):
    HALF_SPACE = "half_space"  # sigma_1 > 0
    GARDING = "garding"  # sigma_1, ..., sigma_k > 0
    POSITIVE = "positive"  # all kappa_i > 0


@dataclass(frozen=True)
class Cone:
    kind: ConeKind
    k: int = 1

    def contains(self, kappa, margin=DEFAULT_CONE_MARGIN):
        """Boolean mask of the curvature vectors strictly inside the cone.

        Points within ``margin`` of the boundary count as outside.
        """
        kappa = np.asarray(kappa, dtype=float)
        finite = np.all(np.isfinite(kappa), axis=-1)
        if self.kind is ConeKind.HALF_SPACE:
            inside = kappa.sum(axis=-1) > margin
        elif self.kind is ConeKind.POSITIVE:
            inside = kappa.min(axis=-1) > margin
        else:
            e = elementary_symmetric(kappa, self.k)
            inside = np.all(e[1:] > margin, axis=0)
        return inside & finite


def elementary_symmetric(kappa, k):
    """Elementary symmetric polynomials ``e_0, ..., e_k`` of the last axis.

    Built by expanding ``prod_i (1 + kappa_i z)`` one factor at a time, which
    never subtracts power sums and stays accurate near the cone boundary.

    Returns
    -------
    ndarray, shape ``(k + 1,) + kappa.shape[:-1]``
    """
    kappa = np.asarray(kappa, dtype=float)
    e = np.zeros((k + 1,) + kappa.shape[:-1])
    e[0] = 1.0
    for i in range(kappa.shape[-1]):
        x = kappa[..., i]
        for j in range(min(k, i + 1), 0, -1):
            e[j] = e[j] + x * e[j - 1]
    return e


@dataclass(frozen=True)
class CurvatureFunction:
    """A normalized curvature function F of ``n`` principal curvatures.

    Parameters
    ----------
    kind : CurvatureKind
    n : int
        Number of principal curvatures (the hypersurface dimension).
    k : int, optional
        Order of the elementary symmetric polynomial for ``SIGMA_K``.
    cone_margin : float
        Distance to the cone boundary below which a point is rejected.
    """

    kind: CurvatureKind
    n: int
    k: Optional[int] = None
    cone_margin: float = DEFAULT_CONE_MARGIN

    @property
    def cone(self) -> Cone:
        if self.kind is CurvatureKind.MEAN:
            return Cone(ConeKind.HALF_SPACE, 1)
        if self.kind is CurvatureKind.GEOMETRIC:
            return Cone(ConeKind.POSITIVE, self.n)
        if self.k == 1:
            return Cone(ConeKind.HALF_SPACE, 1)
        if self.k == self.n:
            return Cone(ConeKind.POSITIVE, self.n)
        return Cone(ConeKind.GARDING, self.k)

    @property
    def label(self) -> str:
        if self.kind is CurvatureKind.SIGMA_K:
            return f"sigma_{self.k}"
        return self.kind.value

    def in_cone(self, kappa):
        return self.cone.contains(kappa, self.cone_margin)

    def _check(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        if kappa.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} curvatures per node, got shape {kappa.shape}")
        inside = self.in_cone(kappa)
        if not np.all(inside):
            bad = np.flatnonzero(~np.atleast_1d(inside))
            values = kappa.reshape(-1, self.n)[bad]
            raise AdmissibilityError(
                f"{len(bad)} curvature vector(s) outside the {self.cone.kind.value} cone of {self.label}",
                nodes=bad,
                values=values,
            )
        return kappa

    def evaluate(self, kappa, check=True):
        """F at each curvature vector (last axis)."""
        kappa = self._check(kappa) if check else np.asarray(kappa, dtype=float)
        n = self.n
        if self.kind is CurvatureKind.MEAN:
            return kappa.sum(axis=-1)
        if self.kind is CurvatureKind.GEOMETRIC:
            with np.errstate(divide="ignore", invalid="ignore"):
                return n * np.exp(np.log(kappa).mean(axis=-1))
        k = self.k
        ek = elementary_symmetric(kappa, k)[k]
        if k == 1:
            return ek
        with np.errstate(invalid="ignore"):
            return n * (ek / comb(n, k)) ** (1.0 / k)

    def gradient(self, kappa, check=True):
        """Partial derivatives dF/dkappa_i, same shape as ``kappa``."""
        kappa = self._check(kappa) if check else np.asarray(kappa, dtype=float)
        n = self.n
        if self.kind is CurvatureKind.MEAN or (self.kind is CurvatureKind.SIGMA_K and self.k == 1):
            return np.ones_like(kappa)
        f = self.evaluate(kappa, check=False)
        if self.kind is CurvatureKind.GEOMETRIC:
            return f[..., None] / (n * kappa)
        k = self.k
        ek = elementary_symmetric(kappa, k)[k]
        grad = np.empty_like(kappa)
        for i in range(n):
            rest = np.delete(kappa, i, axis=-1)
            grad[..., i] = elementary_symmetric(rest, k - 1)[k - 1]
        return grad * (f / (k * ek))[..., None]


def make_function(kind, k=None, n=2, cone_margin=DEFAULT_CONE_MARGIN) -> CurvatureFunction:
    """Build a normalized curvature function.

    >>> make_function("geometric", n=2).evaluate([1.0, 4.0])
    4.0
    """
    try:
        kind = CurvatureKind(kind)
    except ValueError:
        raise ConfigurationError(
            f"unknown curvature kind {kind!r}; expected one of {[c.value for c in CurvatureKind]}"
        ) from None
    problems = []
    n_ok = isinstance(n, (int, np.integer)) and n >= 2
    if not n_ok:
        problems.append(f"n must be an integer >= 2, got {n!r}")
    if kind is CurvatureKind.SIGMA_K:
        if not isinstance(k, (int, np.integer)) or not (1 <= k <= (n if n_ok else 0)):
            problems.append(f"sigma_k needs an integer k in 1..n, got k={k!r}")
    elif k is not None:
        problems.append(f"k is only meaningful for sigma_k, got k={k!r} for {kind.value}")
    if problems:
        raise ConfigurationError(problems)
    return CurvatureFunction(kind, int(n), None if k is None else int(k), cone_margin)


def evaluate(F: CurvatureFunction, kappa):
    return F.evaluate(kappa)


def gradient(F: CurvatureFunction, kappa):
    return F.gradient(kappa)


def in_cone(F: CurvatureFunction, kappa):
    return F.in_cone(kappa)


def check_concavity_sample(F: CurvatureFunction, kappa, eta, step=None) -> float:
    """Second derivative of ``F(eig(diag(kappa) + s*eta))`` at ``s = 0``.

    Uses a central second difference, which is exactly non-positive for a
    concave function, so only round-off can push the result above zero.

    Parameters
    ----------
    kappa : array_like, shape (n,)
    eta : array_like, shape (n,) or (n, n)
        Symmetric direction; a vector is read as a diagonal matrix.
    step : float, optional
        Difference step in units of ``s``.  Defaults to ``1e-2`` times
        ``max |kappa_i|`` divided by the norm of ``eta``, which keeps
        round-off well below ``1e-8`` for curvatures of order one.
    """
    kappa = np.asarray(kappa, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = np.diag(eta)
    if not np.allclose(eta, eta.T):
        raise ValueError("eta must be symmetric")
    F._check(kappa)
    norm = np.linalg.norm(eta, 2)
    if norm == 0.0:
        return 0.0
    if step is None:
        step = 1e-2 * float(np.abs(kappa).max()) / norm
    base = np.diag(kappa)
    plus = np.linalg.eigvalsh(base + step * eta)
    minus = np.linalg.eigvalsh(base - step * eta)
    if not (F.in_cone(plus) and F.in_cone(minus)):
        raise StencilError(f"kappa={kappa} is within {step:.3g}*|eta| of the cone boundary")
    f0 = F.evaluate(kappa, check=False)
    fp = F.evaluate(plus, check=False)
    fm = F.evaluate(minus, check=False)
    return float(((fp - f0) + (fm - f0)) / step**2)
