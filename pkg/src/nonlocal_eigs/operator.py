"""Nyström discretisation of the nonlocal operator and its spectrum.

The operator acts on nodal values as ``(A u)_i = a_i u_i - sum_j J_ij u_j w_j``.
It is self-adjoint in the weighted inner product ``<u, v>_w = sum u v w``,
so all eigen-computations go through the symmetric matrix
``S = diag(a) - W^{1/2} K W^{1/2}`` and map eigenvectors back with
``W^{-1/2}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.spatial import cKDTree

from ._validation import check_nodal, check_points
from .errors import ConvergenceError, ValidationError

logger = logging.getLogger(__name__)

DENSE_LIMIT = 6000


@dataclass(frozen=True, eq=False)
class NonlocalOperator:
    """Discrete nonlocal operator on a quadrature domain.

    Attributes
    ----------
    domain : QuadratureDomain
    kernel : Kernel
    coefficient : Coefficient
    kernel_matrix : ndarray or scipy.sparse matrix, shape (N, N)
        ``J(|x_i - x_j|)``.
    """

    domain: object
    kernel: object
    coefficient: object
    kernel_matrix: object

    @property
    def n_nodes(self):
        return self.domain.n_nodes

    @property
    def weights(self):
        return self.domain.weights

    @property
    def a(self):
        return self.coefficient.values

    @property
    def band(self):
        """Essential band ``(m, M)``: the range of the nodal coefficient."""
        return float(self.a.min()), float(self.a.max())

    @property
    def is_sparse(self):
        return sparse.issparse(self.kernel_matrix)

    @property
    def band_tol(self):
        m, M = self.band
        n = self.domain.intrinsic_dim
        res = self.domain.resolution or max(2, round(self.n_nodes ** (1.0 / n)))
        return max(10.0 / res * (M - m), 1e-12 * max(1.0, abs(m), abs(M)))

    @property
    def matrix(self):
        """Dense ``A_ij = a_i delta_ij - J_ij w_j``."""
        K = self.kernel_matrix.toarray() if self.is_sparse else self.kernel_matrix
        return np.diag(self.a) - K * self.weights[None, :]

    def symmetric(self):
        """``S = W^{1/2} A W^{-1/2}``, dense or sparse like the kernel matrix."""
        s = np.sqrt(self.weights)
        if self.is_sparse:
            D = sparse.diags(s)
            return (sparse.diags(self.a) - D @ self.kernel_matrix @ D).tocsr()
        return np.diag(self.a) - s[:, None] * self.kernel_matrix * s[None, :]

    def apply(self, u):
        u = check_nodal(u, self.n_nodes, "u")
        return self.a * u - self.kernel_matrix @ (u * self.weights)


def _sparse_kernel(kernel, x):
    tree = cKDTree(x)
    D = tree.sparse_distance_matrix(tree, kernel.delta, output_type="coo_matrix")
    off = D.row != D.col
    K = sparse.coo_matrix((kernel.radial(D.data[off]), (D.row[off], D.col[off])),
                          shape=(len(x), len(x))).tocsr()
    return K + sparse.diags(np.full(len(x), float(kernel.radial(0.0))))


def assemble(dom, kernel, coeff, sparse_matrix=None):
    """Assemble the Nyström operator.

    Parameters
    ----------
    dom : QuadratureDomain
    kernel : Kernel
        Must be normalised in the intrinsic dimension of ``dom``.
    coeff : Coefficient
        Built on ``dom``.
    sparse_matrix : bool, optional
        Store the kernel matrix in CSR form.  Defaults to sparse above
        DENSE_LIMIT nodes.

    Returns
    -------
    NonlocalOperator
    """
    if kernel.dim != dom.intrinsic_dim:
        raise ValidationError(f"kernel normalised in dimension {kernel.dim}, "
                              f"domain has intrinsic dimension {dom.intrinsic_dim}")
    check_nodal(coeff.values, dom.n_nodes, "coefficient values")
    if sparse_matrix is None:
        sparse_matrix = dom.n_nodes > DENSE_LIMIT
    if sparse_matrix:
        K = _sparse_kernel(kernel, dom.nodes)
    else:
        K = kernel.matrix(dom.nodes, dom.nodes)
    return NonlocalOperator(dom, kernel, coeff, K)


# ------------------------------------------------------------- spectrum


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Discrete spectrum of an operator outside its essential band.

    Attributes
    ----------
    band : tuple of float
        ``(m, M)``.
    band_tol : float
        Eigenvalues within this distance of the band count as band
        approximants and are not listed.
    eigenvalues : ndarray
        Discrete eigenvalues in ascending order.
    eigenvectors : ndarray, shape (N, k)
        Normalised to ``sum u^2 w = 1`` with a fixed global sign.
    simple : ndarray of bool
    gaps : ndarray
        Distance from each discrete eigenvalue to its nearest computed
        neighbour (band approximants included).
    all_eigenvalues : ndarray
        Every computed eigenvalue.
    complete : bool
        Whether the full decomposition was computed.
    """

    band: tuple
    band_tol: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    simple: np.ndarray
    gaps: np.ndarray
    all_eigenvalues: np.ndarray
    complete: bool
    weights: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def below_band(self):
        return self.eigenvalues < self.band[0] - self.band_tol


def gap_tol(lam):
    return 1e-6 * max(1.0, abs(lam))


def _sign_normalize(U, w):
    for k in range(U.shape[1]):
        s = np.dot(U[:, k], w)
        if abs(s) < 1e-10 * np.abs(U[:, k]).sum() * w.max():
            s = U[np.argmax(np.abs(U[:, k])), k]
        if s < 0:
            U[:, k] = -U[:, k]
    return U


def jacobi_eigh(S, tol=1e-14, max_sweeps=60):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns eigenvalues in ascending order and orthonormal eigenvectors as
    columns.  Intended as an independent check of the LAPACK route.
    """
    A = np.array(S, dtype=float)
    n = len(A)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        # direct norm: sum(A^2) - sum(diag^2) cancels down to sqrt(eps) * |A|
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * Ap - s * Aq, s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * Ap - s * Aq, s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * Vp - s * Vq, s * Vp + c * Vq
    else:
        raise ConvergenceError("Jacobi sweeps did not converge")
    order = np.argsort(np.diag(A))
    return np.diag(A)[order], V[:, order]


def _symmetric_eigs(op, n_eigs, solver):
    N = op.n_nodes
    S = op.symmetric()
    if op.is_sparse:
        k = min(N - 1, (n_eigs or 6) + 1)
        try:
            vals, vecs = eigsh(S, k=k, which="SA", tol=1e-12, maxiter=20 * N)
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos iteration did not converge: {exc}") from exc
        order = np.argsort(vals)
        return vals[order], vecs[:, order], False
    if solver == "jacobi":
        vals, vecs = jacobi_eigh(S)
        return vals, vecs, True
    try:
        if n_eigs is None or n_eigs + 1 >= N:
            vals, vecs = sla.eigh(S)
            return vals, vecs, True
        vals, vecs = sla.eigh(S, subset_by_index=[0, n_eigs])
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"symmetric eigensolver failed: {exc}") from exc
    return vals, vecs, False


def spectrum(op, n_eigs=None, solver="lapack"):
    """Eigen-decompose the operator and separate the discrete spectrum.

    Parameters
    ----------
    op : NonlocalOperator
    n_eigs : int, optional
        Compute only the ``n_eigs`` lowest eigenpairs (plus one more to
        measure the gap of the last).  Default: everything for dense
        operators, 6 for sparse ones.
    solver : {"lapack", "jacobi"}
        ``jacobi`` runs the cyclic Jacobi cross-check (small N only).

    Returns
    -------
    SpectrumReport
    """
    vals, vecs, complete = _symmetric_eigs(op, n_eigs, solver)
    w = op.weights
    gaps_all = np.full(len(vals), np.inf)
    if len(vals) > 1:
        d = np.diff(vals)
        gaps_all[:-1] = d
        gaps_all[1:] = np.minimum(gaps_all[1:], d)
    if not complete and len(vals) > 1:
        vals, vecs, gaps_all = vals[:-1], vecs[:, :-1], gaps_all[:-1]
    m, M = op.band
    tol = op.band_tol
    keep = (vals < m - tol) | (vals > M + tol)
    U = _sign_normalize(vecs[:, keep] / np.sqrt(w)[:, None], w)
    lam = vals[keep]
    gaps = gaps_all[keep]
    simple = np.array([g > gap_tol(x) for g, x in zip(gaps, lam)], dtype=bool)
    return SpectrumReport((m, M), tol, lam, U, simple, gaps, vals, complete, w)


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray
    simple: bool
    index: int
    gap: float


def eigenpair(rep, index):
    """Discrete eigenpair number ``index`` (ascending order)."""
    if not 0 <= index < len(rep):
        raise ValidationError(f"eigen index {index} out of range: {len(rep)} discrete eigenvalues")
    return EigenPair(float(rep.eigenvalues[index]), rep.eigenvectors[:, index],
                     bool(rep.simple[index]), index, float(rep.gaps[index]))


def principal_eigenpair(rep):
    """Smallest discrete eigenvalue below the band, or None.

    Returns
    -------
    EigenPair or None
        ``None`` when no eigenvalue lies below the band at this
        resolution; the caller reports this rather than failing.
    """
    below = np.flatnonzero(rep.below_band)
    if len(below) == 0:
        logger.warning("no discrete eigenvalue below the essential band")
        return None
    pair = eigenpair(rep, int(below[0]))
    if not pair.simple:
        logger.warning("principal eigenvalue %.6g is not numerically simple (gap %.3g)",
                       pair.value, pair.gap)
    return pair


def residual(op, pair):
    """Weighted residual norm ``||A u - lambda u||_w``."""
    r = op.apply(pair.vector) - pair.value * pair.vector
    return float(np.sqrt(np.sum(r * r * op.weights)))


# ------------------------------------------------------------ diagnostics


def apply_convolution(op, u, at):
    """``sum_j J(|x - x_j|) u_j w_j`` at each point ``x`` of ``at``."""
    u = check_nodal(u, op.n_nodes, "u")
    x = check_points(at, op.domain.ambient_dim, "at")
    if len(x) == 0:
        return np.zeros(0)
    return op.kernel.matrix(x, op.domain.nodes) @ (u * op.weights)


@dataclass(frozen=True)
class ExistenceReport:
    """Advisory diagnostic for divergence of ``int dx / (a - m)``.

    Attributes
    ----------
    eps : ndarray
        Regularisation levels.
    values : ndarray
        Quadrature of ``1 / (a - m + eps)`` at each level.
    exponent : float
        Fitted ``p`` in ``|{a - m < s}| ~ s^p``; the integral diverges
        when ``p <= 1``.
    plateau : float
        Measure of the set where ``a`` equals its minimum.
    diverges : bool
    """

    eps: np.ndarray
    values: np.ndarray
    exponent: float
    plateau: float
    diverges: bool


def existence_diagnostic(coeff, eps=(1e-2, 1e-4, 1e-6), exponent_slack=0.1):
    """Check whether ``1 / (a - min a)`` plausibly fails to be integrable.

    Parameters
    ----------
    coeff : Coefficient or NonlocalOperator
    eps : sequence of float
    exponent_slack : float
        Fitted exponents up to ``1 + exponent_slack`` count as divergent,
        since a logarithmic divergence fits to an exponent near 1.

    Returns
    -------
    ExistenceReport
    """
    if isinstance(coeff, NonlocalOperator):
        coeff = coeff.coefficient
    a = coeff.values
    w = coeff.domain.weights
    m, M = a.min(), a.max()
    d = a - m
    eps = np.asarray(eps, dtype=float)
    values = np.array([np.sum(w / (d + e)) for e in eps])
    flat = d <= 1e-12 * max(1.0, abs(m), abs(M))
    plateau = float(w[flat].sum())
    total = float(w.sum())
    if plateau > 0.01 * total:
        return ExistenceReport(eps, values, 0.0, plateau, True)
    order = np.argsort(d)
    ds, F = d[order], np.cumsum(w[order])
    sel = (F >= 0.02 * total) & (F <= 0.2 * total) & (ds > 0)
    if sel.sum() < 3:
        sel = (F <= 0.5 * total) & (ds > 0)
    if sel.sum() < 2:
        return ExistenceReport(eps, values, float("nan"), plateau, False)
    p = float(np.polyfit(np.log(ds[sel]), np.log(F[sel]), 1)[0])
    return ExistenceReport(eps, values, p, plateau, p <= 1 + exponent_slack)
