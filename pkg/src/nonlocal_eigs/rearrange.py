"""Rearrangements of nodal functions and the Faber-Krahn comparison.

A nodal function is a step function on the measure axis: node ``i``
contributes a plateau of length ``w_i`` at height ``|u_i|``.  Sorting by
value gives the decreasing rearrangement exactly, so equimeasurability
holds at the discrete level and every rearranged integral can be
evaluated without interpolation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_nodal
from .errors import ValidationError
from .geometry import ball_with_measure
from .kernels import build_coefficient
from .operator import assemble, existence_diagnostic, principal_eigenpair, spectrum

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NodalFunction:
    """Values attached to the nodes of a quadrature domain."""

    domain: object
    values: np.ndarray

    def __post_init__(self):
        v = check_nodal(self.values, self.domain.n_nodes, "values").copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def nonnegative(self):
        return bool(np.all(self.values >= 0))

    @property
    def weights(self):
        return self.domain.weights

    def integral(self, phi=None):
        """``sum phi(u_i) w_i``; ``phi`` defaults to the identity."""
        v = self.values if phi is None else phi(self.values)
        return float(np.sum(v * self.weights))

    def norm(self, p=2):
        return self.integral(lambda v: np.abs(v) ** p) ** (1.0 / p)


class RearrangementProfile:
    """Decreasing rearrangement ``u#`` as a right-continuous step function.

    Attributes
    ----------
    values : ndarray
        Plateau heights, non-increasing.
    ends : ndarray
        Right end of each plateau on ``[0, |Omega|]``.
    total : float
        ``|Omega|``.
    """

    def __init__(self, u):
        a = np.abs(u.values)
        order = np.argsort(-a, kind="stable")
        self.values = a[order]
        self.lengths = u.weights[order]
        self.ends = np.cumsum(self.lengths)
        self.total = float(self.ends[-1])
        self.ends[-1] = self.total

    @property
    def starts(self):
        return np.r_[0.0, self.ends[:-1]]

    def decreasing(self, s):
        """``u#(s)``, zero beyond the total measure."""
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.ends, s, side="right")
        return np.where(k < len(self.values), self.values[np.minimum(k, len(self.values) - 1)], 0.0)

    def increasing(self, s):
        """``u_#(s) = u#(|Omega| - s)``."""
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.ends, self.total - s, side="right")
        inside = (s >= 0) & (s <= self.total)
        return np.where(inside, self.values[np.clip(k, 0, len(self.values) - 1)], 0.0)


class DistributionFunction:
    """``mu(t) = sum of w_i over |u_i| > t``."""

    def __init__(self, u):
        a = np.abs(u.values)
        order = np.argsort(a)
        self.levels = a[order]
        self.tail = np.r_[np.cumsum(u.weights[order][::-1])[::-1], 0.0]

    def __call__(self, t):
        k = np.searchsorted(self.levels, np.asarray(t, dtype=float), side="right")
        return self.tail[k]


def distribution_function(u):
    """Distribution function of a nodal function.

    Returns
    -------
    DistributionFunction
        Callable on scalars or arrays of levels.
    """
    return DistributionFunction(u)


def _target_ball(u, target):
    if target is not None:
        if "measure_coordinates" not in target.params:
            raise ValidationError("the target must come from ball_with_measure")
        if not np.isclose(target.measure, u.domain.measure, rtol=1e-12):
            raise ValidationError("the target ball must have the measure of the domain")
        return target
    return ball_with_measure(u.domain.measure, u.domain.intrinsic_dim, n_nodes=u.domain.n_nodes)


def symmetric_decreasing(u, target=None):
    """Schwarz symmetrization ``u*(x) = u#(c_n |x|^n)`` on the ball of equal measure.

    Parameters
    ----------
    u : NodalFunction
        Absolute values are rearranged.
    target : QuadratureDomain, optional
        A ball from ``ball_with_measure`` with the measure of ``u.domain``;
        by default one with the same node count.

    Returns
    -------
    NodalFunction
    """
    ball = _target_ball(u, target)
    prof = RearrangementProfile(u)
    return NodalFunction(ball, prof.decreasing(ball.params["measure_coordinates"]))


def symmetric_increasing(u, target=None):
    """``u_*(x) = u_#(c_n |x|^n)`` on the ball of equal measure."""
    ball = _target_ball(u, target)
    prof = RearrangementProfile(u)
    return NodalFunction(ball, prof.increasing(ball.params["measure_coordinates"]))


# ------------------------------------------------------------ identities


@dataclass(frozen=True)
class LayerCake:
    """``int Phi(u*)``, ``int Phi(|u|)`` and ``int Phi(u_*)`` with a tolerance."""

    decreasing: float
    original: float
    increasing: float
    tol: float

    @property
    def gap(self):
        vals = (self.decreasing, self.original, self.increasing)
        return max(vals) - min(vals)

    @property
    def ok(self):
        return self.gap <= self.tol


def _monotone_direction(phi, levels):
    y = phi(levels)
    d = np.diff(y)
    scale = np.max(np.abs(y)) if len(y) else 1.0
    slack = 1e-14 * max(scale, 1.0)
    if np.all(d >= -slack):
        return 1, y
    if np.all(d <= slack):
        return -1, y
    raise ValidationError("Phi is not monotone on the sampled values")


def _axis_cell(ball):
    """Largest total weight sharing one measure coordinate of a ball."""
    _, group = np.unique(ball.params["measure_coordinates"], return_inverse=True)
    return float(np.bincount(group, weights=ball.weights).max())


def layer_cake_check(u, phi, target=None):
    """Rearrangement invariance of ``int Phi(u)`` for monotone ``Phi``.

    Parameters
    ----------
    u : NodalFunction
    phi : callable
        Vectorised, monotone on the range of ``|u|``.  Increasing
        functions must vanish at 0; decreasing ones are taken as given
        (their limit at infinity is not observable on finite data).
    target : QuadratureDomain, optional

    Returns
    -------
    LayerCake
        Each rearranged integral is a midpoint rule for ``Phi(u#)`` on the
        measure axis, so it misses the exact value by at most the total
        variation of ``Phi`` over the range of ``|u|`` times the largest
        measure-axis cell.  Nodes sharing a measure coordinate (the
        mirrored pairs of a one-dimensional ball) form one cell.  The
        tolerance is twice that bound since the two rearranged errors may
        have opposite signs.
    """
    a = np.sort(np.abs(u.values))
    direction, y = _monotone_direction(phi, a)
    if direction > 0 and abs(float(phi(np.zeros(1))[0])) > 1e-12:
        raise ValidationError("an increasing Phi must vanish at 0")
    star = symmetric_decreasing(u, target)
    lower = symmetric_increasing(u, star.domain)
    tv = float(abs(y[-1] - y[0]))
    cell = max(float(u.weights.max()), _axis_cell(star.domain))
    scale = max(abs(float(np.sum(y))) * cell, 1.0)
    tol = 2 * tv * cell + 1e-12 * scale
    return LayerCake(star.integral(phi), u.integral(lambda v: phi(np.abs(v))),
                     lower.integral(phi), tol)


def _step_product_integral(f_prof, g_prof, f_increasing):
    """Exact ``int_0^|Omega| f(s) g#(s) ds`` for step profiles on one measure axis."""
    T = f_prof.total
    cuts = np.unique(np.r_[0.0, T, g_prof.ends, (T - f_prof.ends) if f_increasing else f_prof.ends])
    cuts = cuts[(cuts >= 0) & (cuts <= T)]
    mid = 0.5 * (cuts[1:] + cuts[:-1])
    fv = f_prof.increasing(mid) if f_increasing else f_prof.decreasing(mid)
    return float(np.sum(fv * g_prof.decreasing(mid) * np.diff(cuts)))


@dataclass(frozen=True)
class InequalityCheck:
    """``slack = greater side - smaller side``; non-negative when the inequality holds."""

    lhs: float
    rhs: float
    slack: float


def hardy_littlewood_check(phi, psi):
    """``int phi psi >= int phi_* psi*`` for nonnegative functions.

    The right side is evaluated exactly on the measure axis, where
    ``phi_*`` and ``psi*`` are opposite step profiles.
    """
    if phi.domain is not psi.domain:
        raise ValidationError("both functions must live on the same domain")
    if not (phi.nonnegative and psi.nonnegative):
        raise ValidationError("Hardy-Littlewood needs nonnegative functions")
    lhs = float(np.sum(phi.values * psi.values * phi.weights))
    rhs = _step_product_integral(RearrangementProfile(phi), RearrangementProfile(psi), True)
    return InequalityCheck(lhs, rhs, lhs - rhs)


# ------------------------------------------------------------------ Riesz

RIESZ_MAX_NODES = 400


def _lattice_cells(u):
    dom = u.domain
    if dom.intrinsic_dim != 1 or dom.ambient_dim != 1:
        raise ValidationError("the Riesz check runs on one-dimensional grids")
    w = dom.weights
    if not np.allclose(w, w[0], rtol=1e-12, atol=0.0):
        raise ValidationError("the Riesz check needs an equispaced grid")
    if dom.n_nodes > RIESZ_MAX_NODES:
        raise ValidationError(f"the Riesz check is limited to {RIESZ_MAX_NODES} nodes")
    order = np.argsort(dom.nodes[:, 0])
    return u.values[order], float(w[0])


def _triple(F, H, g, c):
    """``int int f(y) g(y - x) h(x)`` for step functions on a lattice of width ``c``.

    ``g[l + L]`` is the value of g on ``[l c, (l + 1) c)``.  Two cells at
    index distance ``k`` see ``g`` on cells ``k`` and ``k - 1``, each with
    weight ``c^2 / 2``.
    """
    n = len(F)
    L = len(g) // 2
    k = np.arange(n)[:, None] - np.arange(n)[None, :]

    def gl(l):
        idx = l + L
        return np.where((idx >= 0) & (idx < len(g)), g[np.clip(idx, 0, len(g) - 1)], 0.0)

    G = 0.5 * c * c * (gl(k) + gl(k - 1))
    return float(F @ G @ H)


def _symmetric_lattice(v):
    """Symmetric decreasing rearrangement of pairs of half cells onto ``[-n, n)``."""
    s = np.sort(np.abs(v))[::-1]
    out = np.empty(2 * len(s))
    out[len(s):] = s
    out[:len(s)] = s[::-1]
    return out


def riesz_check(f, g, h, support=None):
    """Riesz rearrangement inequality on a one-dimensional grid.

    ``f`` and ``h`` are step functions on an equispaced interval grid
    (cell ``eta``); ``g`` is an even function evaluated at the midpoints
    of a lattice of width ``eta/2``.  Rearranged step functions stay on
    that lattice, so both double integrals are exact finite sums.

    Parameters
    ----------
    f, h : NodalFunction
        Nonnegative, on the same one-dimensional grid.
    g : callable
        Even, nonnegative.
    support : float, optional
        Half-width beyond which ``g`` is taken as zero; defaults to the
        domain length.

    Returns
    -------
    InequalityCheck
        ``lhs`` is the original integral, ``rhs`` the rearranged one.
    """
    if f.domain is not h.domain:
        raise ValidationError("f and h must live on the same domain")
    if not (f.nonnegative and h.nonnegative):
        raise ValidationError("Riesz needs nonnegative f and h")
    fv, eta = _lattice_cells(f)
    hv, _ = _lattice_cells(h)
    c = eta / 2
    length = len(fv) * eta
    half = int(np.ceil((support if support is not None else length) / c))
    mids = (np.arange(-half, half) + 0.5) * c
    gv = np.asarray(g(mids), dtype=float)
    if np.any(gv < 0):
        raise ValidationError("g must be nonnegative")
    if not np.allclose(gv, gv[::-1], rtol=1e-12, atol=1e-300):
        raise ValidationError("g must be even")
    F, H = np.repeat(fv, 2), np.repeat(hv, 2)
    Fs, Hs = _symmetric_lattice(fv), _symmetric_lattice(hv)
    gs = _symmetric_lattice(gv[half:])
    lhs = _triple(F, H, gv, c)
    rhs = _triple(Fs, Hs, gs, c)
    return InequalityCheck(lhs, rhs, rhs - lhs)


# ------------------------------------------------------------ Faber-Krahn


@dataclass
class FaberKrahnReport:
    """Principal eigenvalues on a domain and on its symmetrization.

    ``margin = lambda1(Omega) - lambda1*(Omega*)``; ``verdict`` is
    ``"pass"``, ``"fail"`` or ``"inconclusive"`` (a principal eigenvalue
    is missing at this resolution).  ``rebuilt_star`` is the principal
    eigenvalue on the ball with the coefficient rebuilt under the
    domain's own rule, reported for rule-defined coefficients.
    """

    lambda_omega: float
    lambda_star: float
    tol_spec: float = float("nan")
    rebuilt_star: float = float("nan")
    n_nodes: int = 0
    n_nodes_star: int = 0
    existence: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.lambda_omega - self.lambda_star

    @property
    def verdict(self):
        if not (np.isfinite(self.lambda_omega) and np.isfinite(self.lambda_star)):
            return "inconclusive"
        tol = self.tol_spec if np.isfinite(self.tol_spec) else 0.0
        return "pass" if self.margin >= -tol else "fail"


def _principal(op):
    rep = spectrum(op, n_eigs=2)
    p = principal_eigenpair(rep)
    return float("nan") if p is None else p.value


def symmetrized_operator(dom, kernel, coeff, n_nodes=None):
    """``a_* - J`` on the ball of equal measure, with ``a_*`` the increasing rearrangement."""
    a = NodalFunction(dom, coeff.values)
    ball = ball_with_measure(dom.measure, dom.intrinsic_dim, n_nodes=n_nodes or dom.n_nodes)
    a_star = symmetric_increasing(a, ball)
    c_star = build_coefficient("nodal", ball, kernel, values=a_star.values)
    return assemble(ball, kernel, c_star)


def faber_krahn_compare(dom, kernel, coeff, tol_spec=None, coarse=None, rebuild=True):
    """Compare the principal eigenvalue on ``dom`` with the symmetrized problem.

    Parameters
    ----------
    dom : QuadratureDomain
        Flat domain (codimension 0).
    kernel : Kernel
    coeff : Coefficient
        Nonnegative.
    tol_spec : float, optional
        Allowed negative margin.  When omitted and ``coarse`` is given it
        is the larger of the two principal-eigenvalue increments between
        the coarse and the given resolution.
    coarse : (QuadratureDomain, Coefficient), optional
        The same problem one refinement step coarser.
    rebuild : bool
        Also solve on the ball with the coefficient rebuilt under the
        domain's rule (``dirichlet``, ``neumann``).

    Returns
    -------
    FaberKrahnReport
    """
    if dom.codimension != 0:
        raise ValidationError("Faber-Krahn comparison needs a flat domain")
    if np.min(coeff.values) < 0:
        raise ValidationError("Faber-Krahn comparison needs a nonnegative coefficient")
    op = assemble(dom, kernel, coeff)
    star = symmetrized_operator(dom, kernel, coeff)
    lam, lam_star = _principal(op), _principal(star)
    if tol_spec is None and coarse is not None:
        cd, cc = coarse
        lam_c = _principal(assemble(cd, kernel, cc))
        lam_cs = _principal(symmetrized_operator(cd, kernel, cc))
        tol_spec = max(abs(lam - lam_c), abs(lam_star - lam_cs))
    rebuilt = float("nan")
    if rebuild and coeff.rule in ("dirichlet", "neumann"):
        ball = star.domain
        rebuilt = _principal(assemble(ball, kernel, build_coefficient(coeff.rule, ball, kernel)))
    report = FaberKrahnReport(lam, lam_star, float("nan") if tol_spec is None else float(tol_spec),
                              rebuilt, dom.n_nodes, star.n_nodes)
    if report.verdict == "inconclusive":
        report.existence = {"omega": existence_diagnostic(coeff),
                            "star": existence_diagnostic(star.coefficient)}
        logger.warning("principal eigenvalue missing: Faber-Krahn comparison inconclusive")
    return report


def faber_krahn_scenario(name, resolution=None, kernel=None):
    """Faber-Krahn comparison for a built-in scenario at ``resolution``.

    ``tol_spec`` comes from the same comparison at half the resolution.
    """
    from .scenarios import build_setup, get_scenario

    sc = get_scenario(name)
    if sc.manifold:
        raise ValidationError("Faber-Krahn comparison runs on Euclidean scenarios only")
    res = resolution or sc.resolution
    fine = build_setup(sc, res, kernel=kernel)
    coarse = build_setup(sc, max(2, res // 2), kernel=kernel)
    return faber_krahn_compare(fine.domain, fine.kernel, fine.coefficient,
                               coarse=(coarse.domain, coarse.coefficient))
