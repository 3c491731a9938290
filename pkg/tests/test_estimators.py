import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nonlocal_eigs import ValidationError, build_domain
from nonlocal_eigs.estimators import NonlocalEigenSolver, SchwarzSymmetrizer


def test_params_roundtrip_and_clone():
    est = NonlocalEigenSolver(shape="disk", resolution=12, delta=0.4, n_eigs=3)
    params = est.get_params()
    assert params["shape"] == "disk" and params["delta"] == 0.4
    twin = clone(est)
    assert twin.get_params() == params and not hasattr(twin, "eigenvalues_")
    est.set_params(resolution=16)
    assert est.resolution == 16


def test_fit_matches_functional_route():
    est = NonlocalEigenSolver(resolution=80, rule="neumann").fit()
    assert abs(est.eigenvalues_[0]) < 1e-10
    m, M = est.band_
    assert np.all((est.eigenvalues_ < m) | (est.eigenvalues_ > M))
    assert est.eigenvectors_.shape == (80, len(est.eigenvalues_))


def test_nystrom_extension_reproduces_nodes():
    est = NonlocalEigenSolver(resolution=60, n_eigs=2).fit()
    nodes = est.operator_.domain.nodes
    np.testing.assert_allclose(est.transform(nodes), est.eigenvectors_, atol=1e-12)
    np.testing.assert_allclose(est.predict(nodes), est.eigenvectors_[:, 0], atol=1e-12)
    # off-node values lie between neighbouring node values for the smooth principal mode
    mid = 0.5 * (nodes[10:11] + nodes[11:12])
    v = est.predict(mid)[0]
    lo, hi = sorted(est.eigenvectors_[10:12, 0])
    assert lo - 1e-9 <= v <= hi + 1e-9


def test_hole_and_ambient_rules():
    hole = NonlocalEigenSolver(shape="annulus", domain_params={"hole_radius": 0.4}, resolution=12,
                               rule="hole", hole_params={"shape": "disk", "radius": 0.4}, n_eigs=1)
    assert hole.fit().eigenvalues_[0] < hole.band_[0]
    amb = NonlocalEigenSolver(resolution=40, rule="ambient", ambient_terms=[(1.0, [0]), (1.0, [2])])
    assert amb.fit().band_[1] == pytest.approx(1 + (79 / 80) ** 2)
    with pytest.raises(ValidationError):
        NonlocalEigenSolver(rule="hole", resolution=10).fit()


def test_solver_input_checks():
    est = NonlocalEigenSolver(resolution=20)
    with pytest.raises(NotFittedError):
        est.transform([[0.5]])
    est.fit()
    with pytest.raises(ValidationError):
        est.transform([[0.5, 0.5]])


def test_symmetrizer_preserves_l2_and_is_radially_decreasing(rng):
    dom = build_domain("disk", 16)
    U = rng.random((dom.n_nodes, 3))
    sym = SchwarzSymmetrizer().fit(dom.nodes, sample_weight=dom.weights)
    out = sym.transform(U)
    assert out.shape == U.shape
    w_ball = sym.ball_.weights
    cell = max(dom.weights.max(), w_ball.max())
    for k in range(3):
        assert np.sum(out[:, k] ** 2 * w_ball) == pytest.approx(np.sum(U[:, k] ** 2 * dom.weights),
                                                                abs=cell)
    r = np.linalg.norm(sym.ball_.nodes, axis=1)
    assert np.all(np.diff(out[np.argsort(r), 0]) <= 0)
    assert sym.n_features_in_ == 2


def test_symmetrizer_increasing_single_column():
    x = np.linspace(-1, 1, 21)[:, None]
    sym = SchwarzSymmetrizer(direction="increasing", n_nodes=41).fit(x)
    out = sym.transform(np.abs(x[:, 0]))
    assert out.shape == (41,)
    r = np.abs(sym.ball_.nodes[:, 0])
    assert np.all(np.diff(out[np.argsort(r, kind="stable")]) >= 0)
    assert sym.ball_.measure == pytest.approx(21.0)


def test_symmetrizer_checks():
    with pytest.raises(ValidationError):
        SchwarzSymmetrizer(direction="sideways").fit(np.zeros((3, 1)))
    sym = SchwarzSymmetrizer()
    with pytest.raises(NotFittedError):
        sym.transform(np.ones(3))
    sym.fit(np.arange(3.0)[:, None])
    with pytest.raises(ValidationError):
        sym.transform(np.ones(4))
