"""Radial kernels and the multiplicative coefficient of the operator.

A kernel is a compactly supported, radially non-increasing profile
normalised to unit mass over R^n.  A coefficient carries nodal values of
``a``, its ambient gradient, and a rule telling how ``a`` depends on the
domain; the rule is what the shape-derivative machinery differentiates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.integrate import quad
from scipy.spatial.distance import cdist

from ._validation import check_choice, check_int, check_points, check_positive
from .errors import ValidationError

logger = logging.getLogger(__name__)

FAMILIES = ("tent", "truncated-gaussian", "ball-indicator-mollified")
RULES = ("dirichlet", "neumann", "hole", "ambient", "nodal")


def sphere_area(n):
    """Surface measure of the unit sphere in R^n."""
    return 2 * pi ** (n / 2) / gamma(n / 2)


def _profile(family, delta, mollify):
    """Unnormalised profile g(r) and its derivative g'(r) on r >= 0."""
    if family == "tent":
        def g(r):
            return np.clip(1 - r / delta, 0.0, None)

        def dg(r):
            return np.where(r < delta, -1.0 / delta, 0.0)
    elif family == "truncated-gaussian":
        # Gaussian minus its first-order Taylor polynomial in r^2 at r = delta,
        # so that both g and g' vanish at the edge of the support.
        s2 = (delta / 2) ** 2
        ed = np.exp(-delta**2 / (2 * s2))

        def g(r):
            return np.where(r < delta, np.exp(-r * r / (2 * s2)) - ed * (1 + (delta**2 - r * r) / (2 * s2)), 0.0)

        def dg(r):
            return np.where(r < delta, (r / s2) * (ed - np.exp(-r * r / (2 * s2))), 0.0)
    else:
        eps = mollify * delta

        def g(r):
            s = np.clip((r - (delta - eps)) / eps, 0.0, 1.0)
            return 1 - s * s * (3 - 2 * s)

        def dg(r):
            s = np.clip((r - (delta - eps)) / eps, 0.0, 1.0)
            return -6 * s * (1 - s) / eps
    return g, dg


@dataclass(frozen=True, eq=False)
class Kernel:
    """Radial kernel ``J(z) = c * g(|z|)`` supported in the ball of radius delta.

    Attributes
    ----------
    family : str
    delta : float
        Support radius.
    dim : int
        Dimension over which the kernel is normalised to unit mass.
    normalization : float
        The constant ``c``.
    mollify : float
        Relative width of the smoothed edge (mollified indicator only).
    """

    family: str
    delta: float
    dim: int
    normalization: float
    mollify: float = 0.05

    def __post_init__(self):
        g, dg = _profile(self.family, self.delta, self.mollify)
        object.__setattr__(self, "_g", g)
        object.__setattr__(self, "_dg", dg)

    def radial(self, r):
        """Kernel value as a function of distance."""
        return self.normalization * self._g(np.asarray(r, dtype=float))

    def radial_derivative(self, r):
        return self.normalization * self._dg(np.asarray(r, dtype=float))

    def __call__(self, z):
        """Kernel at displacement vectors ``z`` of shape (..., d)."""
        return self.radial(np.linalg.norm(np.asarray(z, dtype=float), axis=-1))

    def gradient(self, z):
        """Gradient with respect to ``z`` of ``J(|z|)``; zero at the origin."""
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        return (self.radial_derivative(r) / safe)[..., None] * z

    def matrix(self, x, y):
        """Dense matrix ``J(|x_i - y_j|)``."""
        return self.radial(pairwise_distances(x, y))

    def mass(self, n=None):
        """Radial quadrature of the kernel's integral over R^n."""
        n = self.dim if n is None else n
        val, _ = quad(lambda r: self.radial(r) * sphere_area(n) * r ** (n - 1), 0, self.delta,
                      epsabs=1e-14, epsrel=1e-13, limit=200)
        return val


def gradient_convolution(kernel, x, y, u):
    """``sum_j grad J(x_i - y_j) u_j`` without forming the (N, M, d) array."""
    R = pairwise_distances(x, y)
    C = np.where(R > 0, kernel.radial_derivative(R) / np.where(R > 0, R, 1.0), 0.0) * u
    return np.asarray(x, dtype=float) * C.sum(axis=1)[:, None] - C @ np.asarray(y, dtype=float)


def pairwise_distances(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    return cdist(x, y)


def make_kernel(family, delta, n, mollify=0.05):
    """Construct a unit-mass radial kernel.

    Parameters
    ----------
    family : {"tent", "truncated-gaussian", "ball-indicator-mollified"}
        ``truncated-gaussian`` uses width ``delta/2`` and subtracts a
        quadratic correction so that the profile and its slope both vanish
        at ``delta``; the mollified indicator replaces the jump by a
        smoothstep of relative width ``mollify``.
    delta : float
        Support radius.
    n : int
        Dimension of the normalising integral (the intrinsic dimension of
        the domain the kernel acts on).

    Returns
    -------
    Kernel
    """
    check_choice(family, "kernel family", FAMILIES)
    delta = check_positive(delta, "delta")
    n = check_int(n, "dimension", minimum=1)
    mollify = check_positive(mollify, "mollify")
    if mollify >= 1:
        raise ValidationError("mollify must be below 1")
    g, _ = _profile(family, delta, mollify)
    mass, _ = quad(lambda r: float(g(np.array(r))) * sphere_area(n) * r ** (n - 1), 0, delta,
                   epsabs=1e-14, epsrel=1e-13, limit=200)
    return Kernel(family, delta, n, 1.0 / mass, mollify)


# ------------------------------------------------------------ coefficient


class AmbientPolynomial:
    """Fixed ambient function ``a`` given as a polynomial in coordinates.

    Parameters
    ----------
    terms : list of (coefficient, exponents)
    dim : int
    """

    def __init__(self, terms, dim):
        self.dim = int(dim)
        self.terms = [(float(c), np.asarray(e, dtype=int)) for c, e in terms]
        for _, e in self.terms:
            if len(e) != self.dim or np.any(e < 0):
                raise ValidationError("ambient exponents must be non-negative, one per coordinate")

    def __call__(self, x):
        x = check_points(x, self.dim)
        out = np.zeros(len(x))
        for c, e in self.terms:
            out += c * np.prod(x**e, axis=1)
        return out

    def gradient(self, x):
        x = check_points(x, self.dim)
        out = np.zeros((len(x), self.dim))
        for c, e in self.terms:
            for j in range(self.dim):
                if e[j]:
                    e2 = e.copy()
                    e2[j] -= 1
                    out[:, j] += c * e[j] * np.prod(x**e2, axis=1)
        return out

    @classmethod
    def constant(cls, value, dim):
        return cls([(value, [0] * dim)], dim)


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Nodal coefficient with its domain-dependence rule.

    Attributes
    ----------
    rule : str
        ``dirichlet`` (a = 1), ``neumann`` (a = kernel mass inside the
        domain), ``hole`` (a = kernel mass outside a hole), ``ambient``
        (restriction of a fixed function) or ``nodal`` (given values, no
        domain dependence available).
    values : ndarray, shape (N,)
    gradient : ndarray, shape (N, d)
        Ambient gradient of ``a`` at the nodes.
    kernel : Kernel
    aux : object
        Hole quadrature for ``hole``, the ambient function for ``ambient``.
    """

    rule: str
    values: np.ndarray
    gradient: np.ndarray
    kernel: Kernel
    domain: object
    aux: object = None
    meta: dict = field(default_factory=dict)

    @property
    def band(self):
        return float(self.values.min()), float(self.values.max())

    def evaluate(self, points):
        """Value of ``a`` at arbitrary points, by the rule's own formula."""
        x = check_points(points, self.domain.ambient_dim)
        if self.rule == "dirichlet":
            return np.ones(len(x))
        if self.rule == "neumann":
            return self.kernel.matrix(x, self.domain.nodes) @ self.domain.weights
        if self.rule == "hole":
            return 1.0 - self.kernel.matrix(x, self.aux.nodes) @ self.aux.weights
        if self.rule == "ambient":
            return self.aux(x)
        raise ValidationError("a nodal coefficient cannot be evaluated off its nodes")

    def shape_derivative(self, V):
        """Nodal values of the anti-convective derivative under the field ``V``.

        Parameters
        ----------
        V : VectorField

        Returns
        -------
        ndarray, shape (N,)
        """
        dom = self.domain
        if self.rule == "dirichlet":
            return np.zeros(dom.n_nodes)
        if self.rule in ("neumann", "hole"):
            mask = np.ones(len(dom.boundary_weights), dtype=bool)
            if self.rule == "hole":
                mask = dom.boundary_labels == "hole"
            s = dom.boundary_nodes[mask]
            vn = (V(s) * dom.conormals[mask]).sum(axis=1) if len(s) else np.zeros(0)
            return self.kernel.matrix(dom.nodes, s) @ (vn * dom.boundary_weights[mask])
        if self.rule == "ambient":
            from .geometry import split_field
            vperp = split_field(V, dom).normal
            return (self.gradient * vperp).sum(axis=1)
        raise ValidationError("a nodal coefficient has no shape-dependence rule")


def build_coefficient(rule, dom, kernel, aux=None, values=None):
    """Build the coefficient ``a`` on ``dom`` under ``rule``.

    Parameters
    ----------
    rule : {"dirichlet", "neumann", "hole", "ambient", "nodal"}
    dom : QuadratureDomain
    kernel : Kernel
    aux : QuadratureDomain or AmbientPolynomial, optional
        Quadrature of the hole for ``hole``; the ambient function (anything
        with ``__call__`` and ``gradient``) for ``ambient``.
    values : array_like, optional
        Nodal values for ``nodal``.

    Returns
    -------
    Coefficient

    Notes
    -----
    For ``neumann`` and ``hole`` the kernel mass is integrated with the
    same quadrature that discretises the integral operator, so the
    constant vector lies exactly in the kernel of the discrete Neumann
    operator.
    """
    check_choice(rule, "coefficient rule", RULES)
    x, w = dom.nodes, dom.weights
    N, d = x.shape
    if rule == "dirichlet":
        return Coefficient(rule, np.ones(N), np.zeros((N, d)), kernel, dom)
    if rule == "neumann":
        a = kernel.matrix(x, x) @ w
        grad = gradient_convolution(kernel, x, x, w)
        return Coefficient(rule, a, grad, kernel, dom)
    if rule == "hole":
        if aux is None or not hasattr(aux, "nodes"):
            raise ValidationError("the hole rule needs a quadrature of the hole as aux")
        y, wy = aux.nodes, aux.weights
        a = 1.0 - kernel.matrix(x, y) @ wy
        grad = -gradient_convolution(kernel, x, y, wy)
        return Coefficient(rule, a, grad, kernel, dom, aux)
    if rule == "ambient":
        if aux is None or not callable(aux) or not hasattr(aux, "gradient"):
            raise ValidationError("the ambient rule needs a function with a gradient as aux")
        return Coefficient(rule, np.asarray(aux(x), dtype=float),
                           np.asarray(aux.gradient(x), dtype=float), kernel, dom, aux)
    if values is None:
        raise ValidationError("the nodal rule needs explicit values")
    vals = np.asarray(values, dtype=float)
    if vals.shape != (N,):
        raise ValidationError(f"nodal values must have shape ({N},)")
    return Coefficient(rule, vals, np.zeros((N, d)), kernel, dom)


def rebuild_coefficient(coeff, dom, aux=None):
    """Rebuild ``coeff`` under its own rule on another domain.

    ``aux`` replaces the stored auxiliary data (e.g. a moved hole).
    """
    if coeff.rule == "nodal":
        raise ValidationError("a nodal coefficient cannot be rebuilt on a new domain")
    return build_coefficient(coeff.rule, dom, coeff.kernel, coeff.aux if aux is None else aux)
