import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad

from nonlocal_eigs import (AmbientPolynomial, ValidationError, build_coefficient, build_domain,
                           make_field, make_kernel, normal_bump)
from nonlocal_eigs.kernels import FAMILIES, rebuild_coefficient, sphere_area


@pytest.mark.parametrize("n,closed", [(1, lambda d: 1 / d), (2, lambda d: 3 / (np.pi * d**2)),
                                      (3, lambda d: 3 / (np.pi * d**3))])
@pytest.mark.parametrize("delta", [0.25, 0.5, 1.0])
def test_tent_normalization_closed_form(n, closed, delta):
    k = make_kernel("tent", delta, n)
    assert k.normalization == pytest.approx(closed(delta), rel=1e-12)


def test_truncated_gaussian_unit_mass_by_cartesian_quadrature():
    k = make_kernel("truncated-gaussian", 1.0, 2)
    val, _ = dblquad(lambda y, x: float(k(np.array([x, y]))), -1, 1,
                     lambda x: -np.sqrt(1 - x * x), lambda x: np.sqrt(1 - x * x),
                     epsabs=1e-10, epsrel=1e-10)
    assert val == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_every_family_has_unit_mass(family, n):
    assert make_kernel(family, 0.7, n).mass() == pytest.approx(1.0, rel=1e-10)


def test_sphere_area_values():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * np.pi)
    assert sphere_area(3) == pytest.approx(4 * np.pi)


@pytest.mark.parametrize("family", FAMILIES)
@given(r=st.lists(st.floats(0, 2), min_size=2, max_size=20))
def test_profiles_are_nonincreasing_and_compactly_supported(family, r):
    k = make_kernel(family, 0.8, 2)
    r = np.sort(np.asarray(r))
    v = k.radial(r)
    assert np.all(v >= 0)
    assert np.all(np.diff(v) <= 1e-15)
    assert np.all(v[r >= 0.8] == 0)


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_matches_central_differences(family, rng):
    k = make_kernel(family, 0.6, 2)
    z = rng.uniform(-0.5, 0.5, (20, 2))
    z = z[np.abs(np.linalg.norm(z, axis=1) - 0.6 * 0.975) > 0.02]
    h = 1e-6
    fd = np.stack([(k(z + h * e) - k(z - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
    np.testing.assert_allclose(k.gradient(z), fd, atol=1e-5 * k.normalization)


def test_gradient_at_origin_is_zero():
    k = make_kernel("tent", 0.5, 2)
    np.testing.assert_array_equal(k.gradient(np.zeros((1, 2))), [[0.0, 0.0]])


@pytest.mark.parametrize("family,delta,n,mollify", [("cone", 1, 1, .05), ("tent", 0, 1, .05),
                                                    ("tent", 1, 0, .05),
                                                    ("ball-indicator-mollified", 1, 1, 1.5)])
def test_kernel_validation(family, delta, n, mollify):
    with pytest.raises(ValidationError):
        make_kernel(family, delta, n, mollify)


def test_neumann_coefficient_closed_form_near_the_edge():
    dom = build_domain("interval", 1000)
    k = make_kernel("tent", 0.25, 1)
    c = build_coefficient("neumann", dom, k)
    # int_0^1 4 (1 - 4 |1/16 - y|)_+ dy = 23/32
    assert c.evaluate([[1 / 16]])[0] == pytest.approx(0.71875, abs=1e-4)
    assert c.evaluate([[0.5]])[0] == pytest.approx(1.0, abs=1e-4)


def test_neumann_nodal_values_use_the_operator_quadrature():
    dom = build_domain("disk", 12)
    k = make_kernel("truncated-gaussian", 0.5, 2)
    c = build_coefficient("neumann", dom, k)
    np.testing.assert_allclose(c.values, c.evaluate(dom.nodes), rtol=1e-14)
    # interior nodes carry the full (discretised) kernel mass
    assert c.band[1] == pytest.approx(1.0, abs=0.01)


def test_hole_coefficient_is_one_minus_hole_mass():
    dom = build_domain({"shape": "annulus", "radius": 1.0, "hole_radius": 0.4}, 16)
    hole = build_domain({"shape": "disk", "radius": 0.4}, 64)
    k = make_kernel("tent", 0.3, 2)
    c = build_coefficient("hole", dom, k, aux=hole)
    far = np.linalg.norm(dom.nodes, axis=1) > 0.4 + 0.3
    np.testing.assert_allclose(c.values[far], 1.0)
    assert np.all(c.values[~far] < 1.0)
    np.testing.assert_allclose(c.evaluate(dom.nodes), c.values, rtol=1e-14)


@pytest.mark.parametrize("rule", ["neumann", "hole"])
def test_coefficient_gradient_matches_central_differences(rule):
    dom = build_domain({"shape": "annulus", "radius": 1.0, "hole_radius": 0.4}, 16)
    hole = build_domain({"shape": "disk", "radius": 0.4}, 32)
    k = make_kernel("truncated-gaussian", 0.5, 2)
    c = build_coefficient(rule, dom, k, aux=hole if rule == "hole" else None)
    h = 1e-6
    x = dom.nodes[::7]
    fd = np.stack([(c.evaluate(x + h * e) - c.evaluate(x - h * e)) / (2 * h) for e in np.eye(2)],
                  axis=1)
    np.testing.assert_allclose(c.gradient[::7], fd, atol=1e-6)


def test_ambient_polynomial_and_gradient(rng):
    p = AmbientPolynomial([(1.0, [0, 0]), (2.0, [1, 2]), (-1.0, [3, 0])], 2)
    x = rng.uniform(-1, 1, (6, 2))
    np.testing.assert_allclose(p(x), 1 + 2 * x[:, 0] * x[:, 1] ** 2 - x[:, 0] ** 3)
    grad = np.column_stack([2 * x[:, 1] ** 2 - 3 * x[:, 0] ** 2, 4 * x[:, 0] * x[:, 1]])
    np.testing.assert_allclose(p.gradient(x), grad)
    np.testing.assert_allclose(AmbientPolynomial.constant(3.0, 2)(x), 3.0)
    with pytest.raises(ValidationError):
        AmbientPolynomial([(1.0, [1])], 2)


def test_ambient_shape_derivative_vanishes_in_codimension_zero():
    dom = build_domain("disk", 12)
    k = make_kernel("tent", 0.5, 2)
    c = build_coefficient("ambient", dom, k, aux=AmbientPolynomial([(1.0, [2, 0])], 2))
    np.testing.assert_array_equal(c.shape_derivative(normal_bump([1, 0], .5, [1, 0])), 0.0)


def test_ambient_shape_derivative_is_normal_gradient_on_cylinder():
    dom = build_domain("cylinder", 20)
    k = make_kernel("tent", 0.3, 1)
    a = AmbientPolynomial([(1.0, [0, 0]), (2.0, [1, 1])], 2)
    c = build_coefficient("ambient", dom, k, aux=a)
    V = make_field({"kind": "translation", "vector": [1.0, 1.0]}, 2)
    # only the vertical (normal) component counts: d a / d s = 2 x
    np.testing.assert_allclose(c.shape_derivative(V), 2 * dom.nodes[:, 0], atol=1e-14)


def test_dirichlet_shape_derivative_is_zero():
    dom = build_domain("interval", 10)
    c = build_coefficient("dirichlet", dom, make_kernel("tent", 0.5, 1))
    np.testing.assert_array_equal(c.shape_derivative(make_field("dilation", 1)), 0.0)
    np.testing.assert_array_equal(c.values, 1.0)


def test_neumann_shape_derivative_is_boundary_flux_convolution():
    dom = build_domain("interval", 50)
    k = make_kernel("tent", 0.5, 1)
    c = build_coefficient("neumann", dom, k)
    V = make_field({"kind": "dilation", "center": [0.0]}, 1)
    # moving only the right end by 1: d a(x) / dt = J(x - 1)
    np.testing.assert_allclose(c.shape_derivative(V), k.radial(np.abs(dom.nodes[:, 0] - 1.0)))


def test_coefficient_validation():
    dom = build_domain("interval", 8)
    k = make_kernel("tent", 0.5, 1)
    with pytest.raises(ValidationError):
        build_coefficient("hole", dom, k)
    with pytest.raises(ValidationError):
        build_coefficient("ambient", dom, k, aux=3.0)
    with pytest.raises(ValidationError):
        build_coefficient("nodal", dom, k)
    with pytest.raises(ValidationError):
        build_coefficient("nodal", dom, k, values=np.ones(3))
    with pytest.raises(ValidationError):
        build_coefficient("robin", dom, k)
    nodal = build_coefficient("nodal", dom, k, values=np.arange(8.0))
    with pytest.raises(ValidationError):
        nodal.evaluate([[0.5]])
    with pytest.raises(ValidationError):
        nodal.shape_derivative(make_field("dilation", 1))
    with pytest.raises(ValidationError):
        rebuild_coefficient(nodal, dom)


def test_rebuild_reapplies_the_rule():
    k = make_kernel("tent", 0.5, 1)
    c = build_coefficient("neumann", build_domain("interval", 8), k)
    d2 = build_domain({"shape": "interval", "bounds": (0, 2)}, 16)
    np.testing.assert_allclose(rebuild_coefficient(c, d2).values,
                               build_coefficient("neumann", d2, k).values)
