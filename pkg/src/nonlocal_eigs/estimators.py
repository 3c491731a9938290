"""scikit-learn style wrappers around the solver and the symmetrization."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ValidationError
from .geometry import build_domain, point_cloud
from .kernels import AmbientPolynomial, build_coefficient, make_kernel
from .operator import assemble, spectrum
from .rearrange import NodalFunction, symmetric_decreasing, symmetric_increasing


class NonlocalEigenSolver(BaseEstimator):
    """Discrete spectrum of ``a - J`` on a built domain.

    Parameters
    ----------
    shape : str
        Domain tag understood by ``build_domain``.
    domain_params : dict, optional
        Geometric parameters of the domain.
    resolution : int
    family : str
        Kernel family.
    delta : float
        Kernel horizon.
    rule : str
        Coefficient rule; ``hole`` needs ``hole_params``, ``ambient``
        needs ``ambient_terms``.
    hole_params : dict, optional
    ambient_terms : list, optional
    n_eigs : int, optional
        Number of lowest eigenpairs; all when None.

    Attributes
    ----------
    eigenvalues_ : ndarray
        Discrete eigenvalues outside the essential band.
    eigenvectors_ : ndarray, shape (N, k)
    band_ : tuple of float
    operator_ : NonlocalOperator
    """

    def __init__(self, shape="interval", domain_params=None, resolution=100,
                 family="truncated-gaussian", delta=0.5, rule="dirichlet", hole_params=None,
                 ambient_terms=None, n_eigs=None):
        self.shape = shape
        self.domain_params = domain_params
        self.resolution = resolution
        self.family = family
        self.delta = delta
        self.rule = rule
        self.hole_params = hole_params
        self.ambient_terms = ambient_terms
        self.n_eigs = n_eigs

    def fit(self, X=None, y=None):
        """Build, assemble and solve.  ``X`` and ``y`` are ignored."""
        dom = build_domain({"shape": self.shape, **(self.domain_params or {})}, self.resolution)
        kern = make_kernel(self.family, self.delta, dom.intrinsic_dim)
        aux = None
        if self.rule == "hole":
            if not self.hole_params:
                raise ValidationError("the hole rule needs hole_params")
            aux = build_domain(self.hole_params, 2 * self.resolution)
        elif self.rule == "ambient":
            aux = AmbientPolynomial(self.ambient_terms or [], dom.ambient_dim)
        coeff = build_coefficient(self.rule, dom, kern, aux=aux)
        self.operator_ = assemble(dom, kern, coeff)
        rep = spectrum(self.operator_, n_eigs=self.n_eigs)
        self.spectrum_ = rep
        self.eigenvalues_ = rep.eigenvalues
        self.eigenvectors_ = rep.eigenvectors
        self.band_ = rep.band
        return self

    def transform(self, X):
        """Eigenfunctions at arbitrary points by the Nystrom extension.

        ``u(x) = (J u)(x) / (a(x) - lambda)``, exact at the nodes.

        Parameters
        ----------
        X : array_like, shape (n_points, d)

        Returns
        -------
        ndarray, shape (n_points, k)
        """
        check_is_fitted(self, "eigenvalues_")
        op = self.operator_
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != op.domain.ambient_dim:
            raise ValidationError(f"expected {op.domain.ambient_dim} columns, got {X.shape[1]}")
        K = op.kernel.matrix(X, op.domain.nodes)
        Ju = K @ (self.eigenvectors_ * op.weights[:, None])
        a = op.coefficient.evaluate(X)
        return Ju / (a[:, None] - self.eigenvalues_[None, :])

    def predict(self, X):
        """Principal (first listed) eigenfunction at ``X``."""
        return self.transform(X)[:, 0]


class SchwarzSymmetrizer(TransformerMixin, BaseEstimator):
    """Symmetric rearrangement of nodal functions onto the ball of equal measure.

    ``fit`` takes node coordinates and their quadrature weights;
    ``transform`` takes values at those same nodes (one function per
    column) and returns the rearranged values at the nodes of the ball
    ``ball_``.

    Parameters
    ----------
    direction : {"decreasing", "increasing"}
    n_nodes : int, optional
        Nodes of the ball; the fitted node count by default.
    """

    def __init__(self, direction="decreasing", n_nodes=None):
        self.direction = direction
        self.n_nodes = n_nodes

    def fit(self, X, y=None, sample_weight=None):
        from .geometry import ball_with_measure

        if self.direction not in ("decreasing", "increasing"):
            raise ValidationError(f"unknown direction {self.direction!r}")
        X = check_array(X)
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.domain_ = point_cloud(X, w)
        self.ball_ = ball_with_measure(self.domain_.measure, X.shape[1],
                                       n_nodes=self.n_nodes or len(X))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, U):
        check_is_fitted(self, "ball_")
        U = np.asarray(U, dtype=float)
        single = U.ndim == 1
        U = U[:, None] if single else U
        if U.shape[0] != self.domain_.n_nodes:
            raise ValidationError("transform expects one row per fitted node")
        op = symmetric_decreasing if self.direction == "decreasing" else symmetric_increasing
        out = np.column_stack([op(NodalFunction(self.domain_, col), self.ball_).values
                               for col in U.T])
        return out[:, 0] if single else out
