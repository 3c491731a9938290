"""Domain derivatives of simple eigenvalues and eigenfunctions.

The analytic route evaluates the four-term boundary/interior formula by
nodal quadrature.  The finite-difference route actually deforms the
domain, rebuilds the coefficient under its own rule, re-solves and tracks
the eigenvalue branch; the two are meant to be compared, never mixed.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from .errors import (BandCollisionError, BranchTrackingError, EigenvalueCrossingError,
                     NonSimpleEigenvalueError, SolvabilityError, ValidationError)
from .geometry import push_domain, split_field, with_curvature
from .kernels import gradient_convolution, pairwise_distances, rebuild_coefficient
from .operator import apply_convolution, assemble, gap_tol

logger = logging.getLogger(__name__)

THREADS_ENV = "NONLOCAL_EIGS_THREADS"
DEFAULT_STEPS = (1e-2, 5e-3, 2.5e-3)
NORMAL_TERMS = ("theorem", "cylinder", "kernel-flux")


def thread_count():
    """Worker threads for independent solves, from NONLOCAL_EIGS_THREADS."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------- flows


class PerturbationFlow:
    """The deformation ``h(t, x) = x + t V(x)`` of a domain.

    Parameters
    ----------
    domain : QuadratureDomain
    field : VectorField
    aux : QuadratureDomain, optional
        Extra geometry moved by the same flow (the hole of a perforated
        domain).
    """

    def __init__(self, domain, field, aux=None):
        if field.dim != domain.ambient_dim:
            raise ValidationError("field and domain dimensions differ")
        self.domain = domain
        self.field = field
        self.aux = aux

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return x + t * self.field(x)

    def domain_at(self, t):
        return push_domain(self.domain, self.field, t)

    def aux_at(self, t):
        return None if self.aux is None else push_domain(self.aux, self.field, t)

    def is_injective(self, t, tol=1e-9):
        """No two pushed nodes closer than ``tol``."""
        pts = self(t, self.domain.nodes)
        return len(cKDTree(pts).query_pairs(tol)) == 0


# ----------------------------------------------------------- reports


@dataclass
class HadamardReport:
    """Analytic domain derivative of one eigenvalue along one field.

    ``formula`` is exactly ``term1 + term2 + term3 + term4``.  ``term4`` is
    the normal-gradient term under the convention named in
    ``normal_term``; ``term3`` uses the curvature vectors named in
    ``curvature``.
    """

    eigenvalue: float
    eigen_index: int
    field: str
    term1: float
    term2: float
    term3: float
    term4: float
    curvature: str = "domain"
    normal_term: str = "theorem"
    fd_value: float = float("nan")
    fd_table: list = field(default_factory=list)
    specialized: float = float("nan")

    @property
    def terms(self):
        return (self.term1, self.term2, self.term3, self.term4)

    @property
    def formula(self):
        return self.term1 + self.term2 + self.term3 + self.term4

    @property
    def rel_err(self):
        if not np.isfinite(self.fd_value):
            return float("nan")
        return abs(self.formula - self.fd_value) / max(abs(self.fd_value), 1e-8)


def _check_pair(op, pair):
    if not pair.simple or pair.gap <= gap_tol(pair.value):
        raise NonSimpleEigenvalueError(f"eigenvalue {pair.value:.6g} is not simple (gap {pair.gap:.3g})")
    m, M = op.band
    if m - op.band_tol <= pair.value <= M + op.band_tol:
        raise BandCollisionError(f"eigenvalue {pair.value:.6g} lies in the essential band [{m:.6g}, {M:.6g}]")


def boundary_trace(op, pair):
    """Boundary values of the eigenfunction from ``u = J u / (a - lambda)``."""
    dom = op.domain
    if len(dom.boundary_nodes) == 0:
        return np.zeros(0)
    Ju = apply_convolution(op, pair.vector, dom.boundary_nodes)
    denom = op.coefficient.evaluate(dom.boundary_nodes) - pair.value
    if np.min(np.abs(denom)) < 1e-12:
        raise BandCollisionError("a - lambda vanishes at a boundary node")
    return Ju / denom


def hadamard_derivative(op, pair, V, curvature=None, normal_term="theorem"):
    """Four-term domain derivative of a simple eigenvalue.

    Parameters
    ----------
    op : NonlocalOperator
    pair : EigenPair
        Simple eigenpair with ``sum u^2 w = 1``.
    V : VectorField
    curvature : str, optional
        Curvature convention for spherical domains; the domain's own
        vectors are used when omitted.
    normal_term : {"theorem", "cylinder", "kernel-flux"}
        ``theorem``: ``-int u^2 <grad a, V_perp>``; ``cylinder``: twice
        that; ``kernel-flux``: ``-2 int u <V_perp, grad(J u)>`` with the
        ambient gradient of the convolution.  All three vanish in
        codimension 0.

    Returns
    -------
    HadamardReport
    """
    if normal_term not in NORMAL_TERMS:
        raise ValidationError(f"unknown normal term convention {normal_term!r}")
    _check_pair(op, pair)
    dom = op.domain
    if curvature is not None:
        dom = with_curvature(dom, curvature)
    lam, u = pair.value, pair.vector
    w, a = dom.weights, op.a
    coeff = op.coefficient

    term1 = 0.0
    if len(dom.boundary_nodes):
        ub = boundary_trace(op, pair)
        ab = coeff.evaluate(dom.boundary_nodes)
        vt = split_field(V, dom, where="boundary").tangential
        vn = (vt * dom.conormals).sum(axis=1)
        term1 = -float(np.sum((ab - lam) * ub**2 * vn * dom.boundary_weights))

    term2 = float(np.sum(u**2 * coeff.shape_derivative(V) * w))
    vperp = split_field(V, dom).normal
    term3 = float(np.sum((lam - a) * u**2 * (dom.curvature_vectors * vperp).sum(axis=1) * w))
    if normal_term == "kernel-flux":
        gJu = gradient_convolution(op.kernel, dom.nodes, dom.nodes, u * w)
        term4 = -2.0 * float(np.sum(u * (vperp * gJu).sum(axis=1) * w))
    else:
        c = 1.0 if normal_term == "theorem" else 2.0
        term4 = -c * float(np.sum(u**2 * (coeff.gradient * vperp).sum(axis=1) * w))
    return HadamardReport(lam, pair.index, V.name, term1, term2, term3, term4,
                          curvature=curvature or dom.params.get("curvature", "flat"),
                          normal_term=normal_term)


# ------------------------------------------------------------ FD oracle


@dataclass
class FDResult:
    """Finite-difference derivative with its convergence table.

    ``table`` rows hold ``(t, lambda(+t), lambda(-t), central, richardson1,
    richardson2)``; Richardson columns are NaN where not yet defined.
    """

    value: float
    table: list


def _lowest(op, k):
    S = op.symmetric()
    if op.is_sparse:
        S = S.toarray()
    N = len(S)
    if k >= N:
        return sla.eigh(S)
    return sla.eigh(S, subset_by_index=[0, k - 1])


def _tracked_eigenvalue(op_t, u_ref, rank, k):
    vals, Y = _lowest(op_t, k)
    # node identification: the reference eigenfunction carried to the moved nodes
    ov = np.abs(Y.T @ (u_ref * np.sqrt(op_t.weights)))
    order = np.argsort(ov)[::-1]
    best, second = ov[order[0]], ov[order[1]] if len(ov) > 1 else 0.0
    if second >= 0.95 * best:
        raise BranchTrackingError(f"ambiguous branch: overlaps {best:.4f} and {second:.4f}")
    if order[0] != rank:
        raise EigenvalueCrossingError(f"tracked eigenvalue moved from rank {rank} to {order[0]}")
    return float(vals[order[0]])


def richardson(steps, central):
    """Two Richardson levels for an even-order error expansion in ``t``."""
    n = len(steps)
    r1 = np.full(n, np.nan)
    r2 = np.full(n, np.nan)
    for k in range(1, n):
        q = (steps[k - 1] / steps[k]) ** 2
        r1[k] = (q * central[k] - central[k - 1]) / (q - 1)
    for k in range(2, n):
        q = (steps[k - 1] / steps[k]) ** 4
        r2[k] = (q * r1[k] - r1[k - 1]) / (q - 1)
    return r1, r2


def fd_derivative(op, pair, V, steps=DEFAULT_STEPS, n_threads=None):
    """Finite-difference derivative of an eigenvalue along the flow of ``V``.

    For each step ``t`` the domain (and any hole quadrature) is pushed to
    ``x + t V(x)`` with Jacobian-rescaled weights, the coefficient is
    rebuilt under its own rule, the operator is re-assembled and solved,
    and the branch is followed by maximal eigenvector overlap.

    Parameters
    ----------
    op : NonlocalOperator
    pair : EigenPair
    V : VectorField
    steps : sequence of float
        Positive, decreasing; each is used as ``+t`` and ``-t``.
    n_threads : int, optional
        Concurrent solves; defaults to NONLOCAL_EIGS_THREADS.

    Returns
    -------
    FDResult
    """
    steps = np.asarray(steps, dtype=float)
    if np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
        raise ValidationError("FD steps must be positive and strictly decreasing")
    coeff = op.coefficient
    aux = coeff.aux if coeff.rule == "hole" else None
    flow = PerturbationFlow(op.domain, V, aux)
    if pair.value < op.band[0] - op.band_tol:
        rank = pair.index
    else:
        S = op.symmetric()
        S = S.toarray() if op.is_sparse else S
        rank = int(np.sum(np.linalg.eigvalsh(S) < pair.value - 1e-9 * max(1.0, abs(pair.value))))
    k = min(op.n_nodes, rank + 4)

    def solve(t):
        if not flow.is_injective(t):
            raise ValidationError(f"flow is not injective on the nodes at t={t}")
        dom_t = flow.domain_at(t)
        c_t = rebuild_coefficient(coeff, dom_t, flow.aux_at(t))
        op_t = assemble(dom_t, op.kernel, c_t, sparse_matrix=False)
        return _tracked_eigenvalue(op_t, pair.vector, rank, k)

    ts = [s * sign for s in steps for sign in (1.0, -1.0)]
    workers = n_threads or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lams = list(pool.map(solve, ts))
    else:
        lams = [solve(t) for t in ts]
    plus, minus = np.array(lams[0::2]), np.array(lams[1::2])
    central = (plus - minus) / (2 * steps)
    r1, r2 = richardson(steps, central)
    table = [(float(t), float(p), float(m), float(c), float(a), float(b))
             for t, p, m, c, a, b in zip(steps, plus, minus, central, r1, r2)]
    if len(steps) >= 3:
        value = r2[-1]
    elif len(steps) == 2:
        value = r1[-1]
    else:
        value = central[-1]
    return FDResult(float(value), table)


# ------------------------------------------------------------ pullback


@dataclass
class PullbackReport:
    direct: np.ndarray
    pullback: np.ndarray
    hausdorff: float
    band_direct: tuple
    band_pullback: tuple

    @property
    def bands_equal(self):
        return self.band_direct == self.band_pullback


def _hausdorff(x, y):
    if len(x) == 0 and len(y) == 0:
        return 0.0
    if len(x) == 0 or len(y) == 0:
        return float("inf")
    D = np.abs(np.asarray(x)[:, None] - np.asarray(y)[None, :])
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def _discrete(vals, a, res):
    m, M = float(a.min()), float(a.max())
    tol = max(10.0 / res * (M - m), 1e-12 * max(1.0, abs(m), abs(M)))
    return vals[(vals < m - tol) | (vals > M + tol)], (m, M)


def pullback_check(h, dom, kernel, coeff, image_domain=None):
    """Compare the operator on ``h(M)`` with its pullback to ``M``.

    Parameters
    ----------
    h : VectorField
        The embedding itself (a map of the ambient space with Jacobian).
    dom : QuadratureDomain
    kernel : Kernel
    coeff : Coefficient
        Built on ``dom``; its rule is re-applied on the image.
    image_domain : QuadratureDomain, optional
        Independent quadrature of ``h(M)``.  Without it the direct
        assembly uses the pushed-forward quadrature.

    Returns
    -------
    PullbackReport
    """
    hx = h(dom.nodes)
    if len(cKDTree(hx).query_pairs(1e-9)) > 0:
        raise ValidationError("the embedding is not injective on the nodes")
    # pullback: reference nodes, kernel through h, pulled-back volume element
    E = np.einsum("kij,kja->kia", h.jacobian(dom.nodes), dom.tangent_frames)
    G = np.einsum("kia,kib->kab", E, E)
    w_pb = dom.weights * np.sqrt(np.abs(np.linalg.det(G)))
    K = kernel.radial(pairwise_distances(hx, hx))
    if coeff.rule == "dirichlet":
        a_pb = np.ones(dom.n_nodes)
    elif coeff.rule == "neumann":
        a_pb = K @ w_pb
    elif coeff.rule == "ambient":
        a_pb = coeff.aux(hx)
    else:
        raise ValidationError(f"pullback check does not support the {coeff.rule} rule")
    s = np.sqrt(w_pb)
    S = np.diag(a_pb) - s[:, None] * K * s[None, :]
    res = dom.resolution or dom.n_nodes
    pb, band_pb = _discrete(np.linalg.eigvalsh(S), a_pb, res)

    if image_domain is None:
        image_domain = push_domain(dom, h + (-1.0) * _identity(dom.ambient_dim), 1.0)
    c_img = rebuild_coefficient(coeff, image_domain)
    op = assemble(image_domain, kernel, c_img, sparse_matrix=False)
    direct, band_d = _discrete(np.linalg.eigvalsh(op.symmetric()), op.a,
                               image_domain.resolution or image_domain.n_nodes)
    return PullbackReport(direct, pb, _hausdorff(direct, pb), band_d, band_pb)


def _identity(dim):
    from .geometry import dilation
    return dilation(dim)


# ------------------------------------------------ eigenfunction derivative


@dataclass
class EigenfunctionDerivative:
    """Solution of ``(lambda - A) w = f_V`` orthogonal to the eigenvector."""

    w: np.ndarray
    rhs: np.ndarray
    solvability: float
    residual: float
    orthogonality: float


NORMAL_ADVECTION = ("source", "both")


def eigenfunction_rhs(op, pair, V, dlam, curvature=None, normal_advection="source"):
    """Nodal right-hand side ``f_V`` of the eigenfunction-derivative equation.

    ``normal_advection="source"`` moves the kernel only at its source
    point along ``V_perp``; ``"both"`` also moves the field point, which
    adds ``-<V_perp, grad(J u)>`` and makes the solvability condition
    reproduce the ``kernel-flux`` form of the eigenvalue derivative.  The
    two agree in codimension 0.
    """
    if normal_advection not in NORMAL_ADVECTION:
        raise ValidationError(f"unknown normal advection {normal_advection!r}")
    dom = op.domain if curvature is None else with_curvature(op.domain, curvature)
    x, w = dom.nodes, dom.weights
    lam, u = pair.value, pair.vector
    a, coeff = op.a, op.coefficient
    P = dom.tangent_projectors
    split = split_field(V, dom)
    vt, vp = split.tangential, split.normal
    K = op.kernel_matrix.toarray() if op.is_sparse else op.kernel_matrix

    dta = coeff.shape_derivative(V) + (vt * coeff.gradient).sum(axis=1)
    gJu = gradient_convolution(op.kernel, x, x, u * w)
    grad_u = np.einsum("kij,kj->ki", P, gJu - u[:, None] * coeff.gradient) / (a - lam)[:, None]
    commutator = K @ ((vt * grad_u).sum(axis=1) * w) - (vt * gJu).sum(axis=1)

    f = -dlam * u + dta * u + commutator
    if len(dom.boundary_nodes):
        ub = boundary_trace(op, pair)
        vn = (split_field(V, dom, where="boundary").tangential * dom.conormals).sum(axis=1)
        Kb = op.kernel.matrix(x, dom.boundary_nodes)
        f -= Kb @ (ub * vn * dom.boundary_weights)
    hv = (dom.curvature_vectors * vp).sum(axis=1)
    f -= K @ (u * hv * w)
    # sum_j u_j <grad_w J(x_i, w)|_{w = x_j}, V_perp(x_j)> w_j
    c = vp * (u * w)[:, None]
    if np.any(c):
        R = pairwise_distances(x, x)
        C = np.where(R > 0, op.kernel.radial_derivative(R) / np.where(R > 0, R, 1.0), 0.0)
        gradw = -((x * (C @ c)).sum(axis=1) - C @ (x * c).sum(axis=1))
        f -= gradw
        if normal_advection == "both":
            f -= (vp * gJu).sum(axis=1)
    return f


def eigenfunction_derivative(op, pair, V, dlam, curvature=None, solv_tol=1e-4,
                             normal_advection="source"):
    """Domain derivative of the eigenfunction along ``V``.

    Parameters
    ----------
    op : NonlocalOperator
    pair : EigenPair
    V : VectorField
    dlam : float
        Eigenvalue derivative along the same field.
    solv_tol : float
        Bound on ``|<u, f_V>_w|``; beyond it the equation has no solution
        and SolvabilityError is raised.
    normal_advection : {"source", "both"}
        See ``eigenfunction_rhs``.

    Returns
    -------
    EigenfunctionDerivative
    """
    _check_pair(op, pair)
    f = eigenfunction_rhs(op, pair, V, dlam, curvature, normal_advection)
    w, u = op.weights, pair.vector
    s = float(np.sum(u * f * w))
    if not abs(s) <= solv_tol:
        raise SolvabilityError(f"solvability defect {s:.3e} exceeds {solv_tol:.1e}")
    g = f - s * u
    S = op.symmetric()
    S = S.toarray() if op.is_sparse else S
    sw = np.sqrt(w)
    y0 = u * sw
    N = len(w)
    M = np.zeros((N + 1, N + 1))
    M[:N, :N] = pair.value * np.eye(N) - S
    M[:N, N] = y0
    M[N, :N] = y0
    try:
        sol = sla.solve(M, np.r_[g * sw, 0.0], assume_a="sym")
    except (sla.LinAlgError, ValueError) as exc:
        raise SolvabilityError(f"bordered system is singular: {exc}") from exc
    wv = sol[:N] / sw
    r = pair.value * wv - op.apply(wv) - g
    return EigenfunctionDerivative(wv, f, s, float(np.sqrt(np.sum(r * r * w))),
                                   float(np.sum(wv * u * w)))


# ------------------------------------------------------------ scenarios


def _conormal_flux(dom, V, mask=None):
    vn = (V(dom.boundary_nodes) * dom.conormals).sum(axis=1) * dom.boundary_weights
    return vn if mask is None else np.where(mask, vn, 0.0)


def specialized_formula(scenario, op, pair, V):
    """Closed form of the domain derivative written for one scenario.

    Each closed form is evaluated on its own from the eigenpair, the
    boundary trace and the kernel, without the general term machinery.

    Returns
    -------
    (float, str)
        Value and a short description of the closed form.
    """
    dom, lam, u, w = op.domain, pair.value, pair.vector, op.weights
    rule = op.coefficient.rule
    x = dom.nodes
    if scenario.manifold and dom.shape == "sphere":
        n, R = dom.intrinsic_dim, dom.params["radius"]
        vperp = split_field(V, dom).normal
        val = n * lam / R * float(np.sum(u**2 * (x * vperp).sum(axis=1) * w))
        return val, "(n lambda / R) int u^2 <p, V_perp>"
    if scenario.manifold and dom.shape == "hemisphere":
        n, R = dom.intrinsic_dim, dom.params["radius"]
        vperp = split_field(V, dom).normal
        ub = boundary_trace(op, pair)
        vb = V(dom.boundary_nodes)[:, -1]
        val = (-(1 - lam) * float(np.sum(ub**2 * vb * dom.boundary_weights))
               - n * (1 - lam) / R * float(np.sum(u**2 * (x * vperp).sum(axis=1) * w)))
        return val, "-(1 - lambda) oint u^2 V_last - (n (1 - lambda) / R) int u^2 <p, V_perp>"
    if scenario.manifold:
        rep = hadamard_derivative(op, pair, V, normal_term="cylinder")
        return rep.formula, "boundary + coefficient terms - 2 int u^2 <grad a, V_perp>"
    ub = boundary_trace(op, pair)
    ab = op.coefficient.evaluate(dom.boundary_nodes)
    if rule == "dirichlet":
        return (-(1 - lam) * float(np.sum(ub**2 * _conormal_flux(dom, V))),
                "-(1 - lambda) oint u^2 V.N")
    mask = dom.boundary_labels == "hole" if rule == "hole" else None
    Ju2 = op.kernel.matrix(dom.boundary_nodes, x) @ (u**2 * w)
    val = (-float(np.sum((ab - lam) * ub**2 * _conormal_flux(dom, V)))
           + float(np.sum(Ju2 * _conormal_flux(dom, V, mask))))
    where = "hole boundary" if rule == "hole" else "boundary"
    return val, f"-oint (a - lambda) u^2 V.N + oint over the {where} of (J u^2) V.N"


@dataclass
class ConventionRow:
    field: str
    curvature: str
    normal_term: str
    formula: float
    fd_value: float

    @property
    def rel_err(self):
        return abs(self.formula - self.fd_value) / max(abs(self.fd_value), 1e-8)


@dataclass
class ScenarioHadamard:
    """Formula, closed form and FD oracle for every field of a scenario.

    ``reports`` hold one HadamardReport per field under the selected
    convention.  For manifold scenarios ``conventions`` lists every
    curvature / normal-term combination against the oracle and
    ``selected`` names the one with the smallest worst-case discrepancy.
    """

    scenario: str
    resolution: int
    n_nodes: int
    reports: list
    conventions: list
    selected: tuple
    specialized_label: str

    @property
    def max_rel_err(self):
        return max((r.rel_err for r in self.reports), default=float("nan"))

    @property
    def specialized_gap(self):
        """Largest ``|formula - closed form|`` over the fields, literal conventions."""
        return max((abs(r.specialized - f) for r, f in zip(self.reports, self._literal)),
                   default=float("nan"))

    _literal: list = field(default_factory=list, repr=False)


def _conventions(dom, scenario):
    if not scenario.manifold:
        return [(None, "theorem")]
    curv = ("sphere", "hemisphere") if dom.shape in ("sphere", "hemisphere") else (None,)
    return [(c, nt) for c in curv for nt in NORMAL_TERMS]


def _literal_convention(dom):
    if dom.shape == "sphere":
        return ("sphere", "theorem")
    if dom.shape == "hemisphere":
        return ("hemisphere", "theorem")
    if dom.codimension > 0:
        return (None, "cylinder")
    return (None, "theorem")


def scenario_hadamard(name, resolution=None, fields=None, fd=True, steps=DEFAULT_STEPS,
                      n_threads=None):
    """Run the full domain-derivative pipeline on a built-in scenario.

    Parameters
    ----------
    name : str or Scenario
    resolution : int, optional
        Defaults to the scenario's reference resolution.
    fields : sequence of dict or VectorField, optional
        Defaults to the scenario's fields.
    fd : bool
        Run the finite-difference oracle.
    steps : sequence of float

    Returns
    -------
    ScenarioHadamard
    """
    from .geometry import VectorField, make_field
    from .operator import eigenpair, spectrum
    from .scenarios import build_setup

    setup = build_setup(name, resolution, sparse_matrix=False)
    sc, op, dom = setup.scenario, setup.operator, setup.domain
    rep = spectrum(op, n_eigs=sc.eigen_index + 2)
    pair = eigenpair(rep, sc.eigen_index)
    Vs = [f if isinstance(f, VectorField) else make_field(f, dom.ambient_dim)
          for f in (fields if fields is not None else sc.fields)]
    literal = _literal_convention(dom)
    rows, per_field = [], []
    for V in Vs:
        fdr = fd_derivative(op, pair, V, steps, n_threads) if fd else None
        by_conv = {}
        for conv in _conventions(dom, sc):
            r = hadamard_derivative(op, pair, V, curvature=conv[0], normal_term=conv[1])
            if fdr is not None:
                r.fd_value, r.fd_table = fdr.value, fdr.table
                rows.append(ConventionRow(V.name, r.curvature, conv[1], r.formula, fdr.value))
            by_conv[conv] = r
        lit = by_conv.get(literal) or hadamard_derivative(op, pair, V, curvature=literal[0],
                                                          normal_term=literal[1])
        closed, label = specialized_formula(sc, op, pair, V)
        per_field.append((by_conv, lit.formula, closed))

    convs = list(per_field[0][0]) if per_field else []
    if fd and len(convs) > 1:
        worst = {c: max(pf[0][c].rel_err for pf in per_field) for c in convs}
        selected = min(convs, key=lambda c: worst[c])
    else:
        selected = sc.convention if sc.convention in convs else (convs[0] if convs else literal)
    reports = []
    for by_conv, _, closed in per_field:
        r = by_conv[selected]
        r.specialized = closed
        reports.append(r)
    for r in reports:
        logger.info("%s %s: formula %.6g fd %.6g", sc.name, r.field, r.formula, r.fd_value)
    return ScenarioHadamard(sc.name, dom.resolution, dom.n_nodes, reports, rows,
                            selected, label if per_field else "",
                            _literal=[pf[1] for pf in per_field])
