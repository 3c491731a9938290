from types import SimpleNamespace

import numpy as np
import pytest
from conftest import make_op

from nonlocal_eigs import (BandCollisionError, BranchTrackingError, EigenvalueCrossingError,
                           NonSimpleEigenvalueError, SolvabilityError, ValidationError,
                           build_setup, dilation, eigenfunction_derivative, eigenpair,
                           fd_derivative, get_scenario, hadamard_derivative, make_field,
                           normal_bump, polynomial, pullback_check, spectrum, translation,
                           zero_field)
from nonlocal_eigs.operator import EigenPair
from nonlocal_eigs.shape import (_tracked_eigenvalue, boundary_trace, eigenfunction_rhs,
                                 richardson, specialized_formula)


def setup_pair(name, res, index=None):
    s = build_setup(name, res)
    idx = s.scenario.eigen_index if index is None else index
    return s, eigenpair(spectrum(s.operator, n_eigs=idx + 2), idx)


@pytest.fixture(scope="module")
def dir_interval():
    return setup_pair("dirichlet-interval", 120)


@pytest.fixture(scope="module")
def dir_disk():
    return setup_pair("dirichlet-disk", 16)


def test_dirichlet_only_boundary_term_survives(dir_disk):
    s, pair = dir_disk
    r = hadamard_derivative(s.operator, pair, normal_bump([1, 0], .5, [1, 0]))
    assert r.term2 == 0 and r.term3 == 0 and r.term4 == 0
    assert r.formula == r.term1 < 0


def test_dilation_of_dirichlet_domain_lowers_eigenvalue(dir_interval):
    s, pair = dir_interval
    assert hadamard_derivative(s.operator, pair, dilation(1)).formula < 0


@pytest.mark.parametrize("vec", [[1.0, 0.0], [0.3, -2.0]])
def test_translation_derivative_vanishes(dir_disk, vec):
    s, pair = dir_disk
    r = hadamard_derivative(s.operator, pair, translation(vec))
    assert abs(r.formula) <= 1e-6 * abs(pair.value)


def test_neumann_zero_eigenvalue_is_stationary():
    s, pair = setup_pair("neumann-interval", 100, index=0)
    assert abs(pair.value) < 1e-10
    for V in (dilation(1), normal_bump([1.0], 0.5, [1.0])):
        r = hadamard_derivative(s.operator, pair, V)
        assert abs(r.formula) < 1e-8
        assert abs(r.term1) > 1e-3


def test_formula_is_linear_in_the_field(dir_disk):
    s, pair = dir_disk
    V, W = normal_bump([1, 0], .5, [1, 0]), dilation(2, [0.1, 0.2])
    f = lambda F: hadamard_derivative(s.operator, pair, F).formula
    assert f(2.0 * V + (-3.0) * W) == pytest.approx(2 * f(V) - 3 * f(W), abs=1e-10)


def test_tangential_rotation_on_sphere_and_hemisphere():
    rot = polynomial([[(-1.0, [0, 1, 0])], [(1.0, [1, 0, 0])], []])
    for name in ("sphere", "hemisphere"):
        s, pair = setup_pair(name, 8)
        for curv in ("sphere", "hemisphere"):
            for nt in ("theorem", "cylinder", "kernel-flux"):
                r = hadamard_derivative(s.operator, pair, rot, curvature=curv, normal_term=nt)
                assert abs(r.formula) < 1e-10


def test_ambient_coefficient_term_cancels_theorem_normal_term():
    s, pair = setup_pair("cylinder", 100)
    r = hadamard_derivative(s.operator, pair, translation([0.0, 1.0]))
    assert r.term2 != 0
    assert r.term2 + r.term4 == pytest.approx(0.0, abs=1e-14)
    c = hadamard_derivative(s.operator, pair, translation([0.0, 1.0]), normal_term="cylinder")
    assert c.term4 == pytest.approx(2 * r.term4)


def test_unknown_normal_term(dir_interval):
    s, pair = dir_interval
    with pytest.raises(ValidationError):
        hadamard_derivative(s.operator, pair, dilation(1), normal_term="mean")


def test_non_simple_and_band_pairs_are_rejected(dir_interval):
    s, pair = dir_interval
    bad = EigenPair(pair.value, pair.vector, False, 0, 0.0)
    with pytest.raises(NonSimpleEigenvalueError):
        hadamard_derivative(s.operator, bad, dilation(1))
    inband = EigenPair(1.0, pair.vector, True, 0, 1.0)
    with pytest.raises(BandCollisionError):
        hadamard_derivative(s.operator, inband, dilation(1))


def test_boundary_trace_extends_nodal_values(dir_interval):
    s, pair = dir_interval
    ub = boundary_trace(s.operator, pair)
    u = pair.vector
    # nearest nodes to 0 and 1 carry nearly the trace value
    assert ub[0] == pytest.approx(u[0], rel=0.05)
    assert ub[1] == pytest.approx(u[-1], rel=0.05)


def test_fd_of_zero_field_is_zero(dir_interval):
    s, pair = dir_interval
    assert fd_derivative(s.operator, pair, zero_field(1), n_threads=1).value == 0.0


def test_fd_agrees_with_formula_on_interval(dir_interval):
    s, pair = dir_interval
    V = normal_bump([1.0], 0.5, [1.0])
    fd = fd_derivative(s.operator, pair, V, n_threads=2)
    assert len(fd.table) == 3
    f = hadamard_derivative(s.operator, pair, V).formula
    assert abs(f - fd.value) / abs(fd.value) < 1e-3


def test_fd_step_validation(dir_interval):
    s, pair = dir_interval
    with pytest.raises(ValidationError):
        fd_derivative(s.operator, pair, dilation(1), steps=(1e-3, 1e-2))
    with pytest.raises(ValidationError):
        fd_derivative(s.operator, pair, dilation(1), steps=(-1e-3,))


def test_richardson_removes_even_powers():
    steps = np.array([0.1, 0.05, 0.025])
    central = 3.0 + 2.0 * steps**2 - 7.0 * steps**4
    r1, r2 = richardson(steps, central)
    assert np.isnan(r1[0]) and np.isnan(r2[1])
    assert r2[2] == pytest.approx(3.0, abs=1e-12)


def _stub(diag):
    return SimpleNamespace(symmetric=lambda: np.diag(diag), is_sparse=False,
                           weights=np.ones(len(diag)))


def test_branch_tracking_errors():
    op = _stub([1.0, 2.0, 3.0])
    with pytest.raises(BranchTrackingError):
        _tracked_eigenvalue(op, np.array([1.0, 1.0, 0.0]) / np.sqrt(2), 0, 3)
    with pytest.raises(EigenvalueCrossingError):
        _tracked_eigenvalue(op, np.array([0.0, 1.0, 0.0]), 0, 3)
    assert _tracked_eigenvalue(op, np.array([0.0, 1.0, 0.1]), 1, 3) == 2.0


def test_pullback_by_doubling_map():
    s = build_setup("dirichlet-interval", 60)
    rep = pullback_check(2.0 * dilation(1), s.domain, s.kernel, s.coefficient)
    assert rep.hausdorff <= 1e-8 and rep.bands_equal
    assert len(rep.direct) > 0


def test_pullback_neumann_and_identity():
    s = build_setup("neumann-interval", 60)
    assert pullback_check(2.0 * dilation(1), s.domain, s.kernel, s.coefficient).hausdorff <= 1e-8
    ident = pullback_check(dilation(1), s.domain, s.kernel, s.coefficient)
    assert ident.hausdorff == 0.0


def test_pullback_rejects_collapsing_map():
    s = build_setup("dirichlet-interval", 20)
    with pytest.raises(ValidationError):
        pullback_check(0.0 * dilation(1), s.domain, s.kernel, s.coefficient)


def test_eigenfunction_derivative_zero_field(dir_interval):
    s, pair = dir_interval
    out = eigenfunction_derivative(s.operator, pair, zero_field(1), 0.0)
    assert np.max(np.abs(out.w)) < 1e-12


@pytest.mark.parametrize("name,res", [("dirichlet-interval", 120), ("dirichlet-disk", 16),
                                      ("hemisphere", 8)])
def test_eigenfunction_derivative_solves_its_equation(name, res):
    s, pair = setup_pair(name, res)
    sc = get_scenario(name)
    V = make_field(sc.fields[1], s.domain.ambient_dim)
    dlam = hadamard_derivative(s.operator, pair, V, *((sc.convention[0], sc.convention[1])
                                                     if sc.manifold else ())).formula
    out = eigenfunction_derivative(s.operator, pair, V, dlam,
                                   curvature=sc.convention[0] if sc.manifold else None,
                                   normal_advection="both" if sc.manifold else "source")
    assert out.residual <= 1e-8
    assert abs(out.orthogonality) <= 1e-12
    assert abs(out.solvability) <= 1e-4


def test_normal_advection_choices():
    s, pair = setup_pair("dirichlet-disk", 12)
    V = normal_bump([1, 0], .5, [1, 0])
    a = eigenfunction_rhs(s.operator, pair, V, 0.1)
    np.testing.assert_array_equal(a, eigenfunction_rhs(s.operator, pair, V, 0.1,
                                                       normal_advection="both"))
    with pytest.raises(ValidationError):
        eigenfunction_rhs(s.operator, pair, V, 0.1, normal_advection="target")
    # on the sphere the source-only form implies a different eigenvalue derivative
    s, pair = setup_pair("sphere", 12)
    V = dilation(3)
    w = s.operator.weights
    # with dlam = 0 the solvability pairing is the implied eigenvalue derivative
    implied = {m: float(np.sum(pair.vector * w * eigenfunction_rhs(
        s.operator, pair, V, 0.0, curvature="sphere", normal_advection=m)))
        for m in ("source", "both")}
    flux = hadamard_derivative(s.operator, pair, V, "sphere", "kernel-flux").formula
    assert implied["both"] == pytest.approx(flux, abs=1e-12)
    assert abs(implied["source"] - flux) > 0.1


def test_eigenfunction_derivative_wrong_dlam_fails(dir_interval):
    s, pair = dir_interval
    with pytest.raises(SolvabilityError):
        eigenfunction_derivative(s.operator, pair, dilation(1), 1.0)


@pytest.mark.parametrize("name", ["dirichlet-interval", "neumann-interval", "dirichlet-disk"])
def test_closed_form_matches_four_terms(name):
    s, pair = setup_pair(name, 100 if "interval" in name else 16)
    sc = get_scenario(name)
    for f in sc.fields:
        V = make_field(f, s.domain.ambient_dim)
        closed, _ = specialized_formula(sc, s.operator, pair, V)
        assert closed == pytest.approx(hadamard_derivative(s.operator, pair, V).formula, abs=1e-12)


def test_hole_coefficient_term_equals_hole_boundary_integral():
    s, pair = setup_pair("hole-annulus", 16)
    op, dom = s.operator, s.domain
    V = normal_bump([0.4, 0.0], 0.3, [1.0, 0.0])
    r = hadamard_derivative(op, pair, V)
    hole = dom.boundary_labels == "hole"
    flux = (V(dom.boundary_nodes) * dom.conormals).sum(axis=1) * dom.boundary_weights
    Ju2 = op.kernel.matrix(dom.boundary_nodes[hole], dom.nodes) @ (pair.vector**2 * op.weights)
    assert r.term2 == pytest.approx(float(np.sum(Ju2 * flux[hole])), abs=1e-13)
    # the outer boundary does not enter the coefficient
    outer = normal_bump([1.0, 0.0], 0.05, [1.0, 0.0])
    assert abs(hadamard_derivative(op, pair, outer).term2) < 1e-12


def test_sphere_four_terms_reduce_to_closed_form():
    s, pair = setup_pair("sphere", 12)
    sc = get_scenario("sphere")
    for f in sc.fields:
        V = make_field(f, 3)
        lit = hadamard_derivative(s.operator, pair, V, curvature="sphere").formula
        closed, _ = specialized_formula(sc, s.operator, pair, V)
        assert closed == pytest.approx(lit, abs=1e-10)


def test_sphere_eigenfunction_flattens_under_refinement():
    # the continuum eigenfunction is constant; ring quadrature perturbs it at O(h)
    spread = []
    for res in (8, 16, 32):
        s, pair = setup_pair("sphere", res)
        spread.append(np.ptp(pair.vector) / pair.vector.max())
    assert spread[0] > spread[1] > spread[2]
    assert spread[2] < 0.05
    assert pair.value == pytest.approx(-1.0, abs=1e-3)
