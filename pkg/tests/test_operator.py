import numpy as np
import pytest
from conftest import make_op
from hypothesis import example, given
from hypothesis import strategies as st

from nonlocal_eigs import (AmbientPolynomial, ValidationError, assemble, ball_with_measure,
                           build_coefficient, build_domain, eigenpair, existence_diagnostic,
                           make_kernel, point_cloud, principal_eigenpair, spectrum)
from nonlocal_eigs.operator import apply_convolution, gap_tol, jacobi_eigh, residual


def test_operator_is_self_adjoint_in_weighted_product(rng):
    op = make_op("disk", 10, rule="neumann")
    WA = op.weights[:, None] * op.matrix
    np.testing.assert_allclose(WA, WA.T, atol=1e-15)
    u, v = rng.standard_normal((2, op.n_nodes))
    w = op.weights
    assert np.sum(op.apply(u) * v * w) == pytest.approx(np.sum(u * op.apply(v) * w), rel=1e-12)


def test_apply_matches_dense_matrix(interval_op, rng):
    u = rng.standard_normal(interval_op.n_nodes)
    np.testing.assert_allclose(interval_op.apply(u), interval_op.matrix @ u, atol=1e-14)


def test_single_node_operator():
    dom = point_cloud([[0.0]], [0.3])
    k = make_kernel("tent", 1.0, 1)
    op = assemble(dom, k, build_coefficient("dirichlet", dom, k))
    rep = spectrum(op)
    assert rep.eigenvalues == pytest.approx([1 - 0.3])
    assert rep.eigenvectors[0, 0] == pytest.approx(1 / np.sqrt(0.3))


def test_two_node_closed_form():
    dom = point_cloud([[0.0], [0.2]], [0.5, 0.5])
    k = make_kernel("tent", 1.0, 1)
    op = assemble(dom, k, build_coefficient("dirichlet", dom, k))
    j11, j12 = k.radial(0.0), k.radial(0.2)
    rep = spectrum(op)
    np.testing.assert_allclose(rep.all_eigenvalues,
                               sorted([1 - (j11 + j12) * 0.5, 1 - (j11 - j12) * 0.5]), rtol=1e-14)
    assert rep.eigenvalues[0] == pytest.approx(1 - (j11 + j12) * 0.5)
    np.testing.assert_allclose(rep.eigenvectors[:, 0], [1.0, 1.0], rtol=1e-12)


def test_neumann_constants_are_annihilated():
    for shape, res in (("interval", 50), ("disk", 12), ("sphere", 8)):
        op = make_op(shape, res, rule="neumann")
        assert np.max(np.abs(op.apply(np.ones(op.n_nodes)))) < 1e-13


def test_jacobi_agrees_with_lapack():
    op = make_op("interval", 30)
    lap = spectrum(op)
    jac = spectrum(op, solver="jacobi")
    np.testing.assert_allclose(jac.all_eigenvalues, lap.all_eigenvalues, atol=1e-13)
    for k in range(len(lap)):
        assert abs(np.sum(jac.eigenvectors[:, k] * lap.eigenvectors[:, k] * op.weights)) == \
            pytest.approx(1.0, abs=1e-10)


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
@example(5, 0)
def test_jacobi_diagonalises_random_symmetric(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    S = A + A.T
    vals, V = jacobi_eigh(S)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(S), atol=1e-12 * np.linalg.norm(S))
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)


def test_jacobi_tiny_coupling_does_not_overflow():
    S = np.array([[1.0, 1e-200, 0.0], [1e-200, 2.0, 0.5], [0.0, 0.5, 3.0]])
    with np.errstate(over="raise"):
        vals, _ = jacobi_eigh(S)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(S), atol=1e-14)


def test_sparse_and_dense_assembly_agree():
    dom = build_domain("disk", 20)
    k = make_kernel("truncated-gaussian", 0.5, 2)
    c = build_coefficient("neumann", dom, k)
    dense = spectrum(assemble(dom, k, c, sparse_matrix=False), n_eigs=4)
    sp = spectrum(assemble(dom, k, c, sparse_matrix=True), n_eigs=4)
    assert not dense.complete and not sp.complete
    np.testing.assert_allclose(sp.eigenvalues[:3], dense.eigenvalues[:3], atol=1e-10)


def test_partial_and_full_spectra_agree(interval_op):
    full = spectrum(interval_op)
    part = spectrum(interval_op, n_eigs=3)
    np.testing.assert_allclose(part.eigenvalues[:3], full.eigenvalues[:3], atol=1e-13)


def test_principal_eigenvector_positive_and_normalised(interval_op):
    pair = principal_eigenpair(spectrum(interval_op))
    assert pair is not None and pair.simple
    assert np.all(pair.vector > 0)
    assert np.sum(pair.vector**2 * interval_op.weights) == pytest.approx(1.0, rel=1e-12)
    assert residual(interval_op, pair) < 1e-12


def test_discrete_eigenvalues_lie_outside_the_band(interval_op):
    rep = spectrum(interval_op)
    m, M = rep.band
    assert np.all((rep.eigenvalues < m - rep.band_tol) | (rep.eigenvalues > M + rep.band_tol))
    assert rep.below_band[0]


def test_eigenpair_index_out_of_range(interval_op):
    rep = spectrum(interval_op)
    with pytest.raises(ValidationError):
        eigenpair(rep, len(rep))


def test_no_eigenvalue_below_band_returns_none():
    dom = build_domain("interval", 4)
    k = make_kernel("tent", 0.1, 1)
    c = build_coefficient("ambient", dom, k, aux=AmbientPolynomial([(1, [0]), (10, [1])], 1))
    assert principal_eigenpair(spectrum(assemble(dom, k, c))) is None


def test_kernel_dimension_must_match_domain():
    dom = build_domain("disk", 8)
    k1 = make_kernel("tent", 0.5, 1)
    with pytest.raises(ValidationError):
        assemble(dom, k1, build_coefficient("dirichlet", dom, k1))


def test_gap_tolerance():
    assert gap_tol(0.5) == 1e-6
    assert gap_tol(-20.0) == pytest.approx(2e-5)


def test_apply_convolution(interval_op, rng):
    u = rng.standard_normal(interval_op.n_nodes)
    at_nodes = apply_convolution(interval_op, u, interval_op.domain.nodes)
    np.testing.assert_allclose(at_nodes, interval_op.kernel_matrix @ (u * interval_op.weights))
    assert apply_convolution(interval_op, u, np.zeros((0, 1))).shape == (0,)
    with pytest.raises(ValidationError):
        apply_convolution(interval_op, u[:-1], [[0.5]])


def test_mesh_refinement_is_second_order():
    lams = [spectrum(make_op("interval", r), n_eigs=1).eigenvalues[0] for r in (100, 200, 400)]
    d = np.abs(np.diff(lams))
    assert 3.0 < d[0] / d[1] < 5.0


def test_existence_diagnostic_interval_closed_form():
    dom = build_domain({"shape": "interval", "bounds": (-1, 1)}, 4000)
    k = make_kernel("tent", 0.5, 1)
    c = build_coefficient("ambient", dom, k, aux=AmbientPolynomial([(1.0, [2])], 1))
    rep = existence_diagnostic(c, eps=(1e-2, 1e-3))
    for e, v in zip(rep.eps, rep.values):
        assert v == pytest.approx(2 * np.arctan(1 / np.sqrt(e)) / np.sqrt(e), rel=1e-3)
    assert rep.exponent == pytest.approx(0.5, abs=0.05)
    assert rep.diverges


@pytest.mark.parametrize("n,expect_p,diverges", [(2, 1.0, True), (3, 1.5, False)])
def test_existence_diagnostic_ball_exponents(n, expect_p, diverges):
    dom = ball_with_measure(1.0, n, resolution=24 if n == 3 else 64)
    k = make_kernel("tent", 0.5, n)
    c = build_coefficient("ambient", dom, k,
                          aux=AmbientPolynomial([(1.0, list(row)) for row in 2 * np.eye(n, dtype=int)], n))
    rep = existence_diagnostic(c)
    assert rep.exponent == pytest.approx(expect_p, abs=0.1)
    assert rep.diverges is diverges


def test_existence_diagnostic_plateau():
    op = make_op("interval", 50)
    rep = existence_diagnostic(op)
    assert rep.plateau == pytest.approx(1.0) and rep.diverges
