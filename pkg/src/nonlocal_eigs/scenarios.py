"""Built-in scenarios: domain, kernel, coefficient rule, eigenvalue and fields."""

from __future__ import annotations

from dataclasses import dataclass, field

from ._validation import check_choice
from .geometry import build_domain
from .kernels import AmbientPolynomial, build_coefficient, make_kernel
from .operator import assemble


@dataclass(frozen=True)
class Scenario:
    """A reproducible problem setup.

    Attributes
    ----------
    name : str
    summary : str
        One-line description shown by ``list-scenarios``.
    example : str
        The worked example the scenario reproduces.
    domain : dict
        Descriptor for ``build_domain``.
    resolution : int
        Reference resolution.
    sweep : tuple of int
        Resolutions of the convergence sweep.
    kernel : dict
        ``family`` and ``delta``.
    rule : str
        Coefficient rule.
    eigen_index : int
        Index of the studied eigenvalue in the discrete list.
    fields : tuple of dict
        Vector-field descriptors used by the Hadamard task.
    hole : dict, optional
        Descriptor of the hole quadrature (``hole`` rule).
    hole_refine : int
        Resolution multiplier for the hole quadrature.
    ambient : list, optional
        Monomials of the ambient coefficient (``ambient`` rule).
    manifold : bool
        Positive codimension; the Hadamard task then compares every
        curvature / normal-term convention against the FD oracle.
    convention : tuple
        ``(curvature, normal_term)`` used when the oracle is not run; for
        manifolds this is the combination the oracle selects at the
        reference resolution.
    sweep_field : int
        Index into ``fields`` tracked by the convergence sweep.  It must
        name a field whose continuum derivative is nonzero, otherwise the
        sweep only follows quadrature noise.
    """

    name: str
    summary: str
    example: str
    domain: dict
    resolution: int
    sweep: tuple
    kernel: dict
    rule: str
    eigen_index: int = 0
    fields: tuple = ()
    hole: dict = None
    hole_refine: int = 2
    ambient: list = None
    manifold: bool = False
    convention: tuple = (None, "theorem")
    sweep_field: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def euclidean(self):
        return not self.manifold


_TG = {"family": "truncated-gaussian", "delta": 0.5}
_SQ = 3.141592653589793 ** 0.5

CATALOG = {s.name: s for s in [
    Scenario(
        "dirichlet-interval", "Dirichlet rule (a = 1) on the unit interval",
        "Euclidean Dirichlet example",
        {"shape": "interval", "bounds": (0.0, 1.0)}, 400, (100, 200, 400), _TG, "dirichlet",
        fields=({"kind": "dilation", "center": [0.0]},
                {"kind": "normal-bump", "center": [1.0], "width": 0.5, "direction": [1.0]},
                {"kind": "translation", "vector": [1.0]})),
    Scenario(
        "dirichlet-disk", "Dirichlet rule on the unit disk (clipped grid)",
        "Euclidean Dirichlet example",
        {"shape": "disk", "radius": 1.0}, 64, (16, 32, 64), _TG, "dirichlet",
        fields=({"kind": "dilation", "center": [0.0, 0.0]},
                {"kind": "normal-bump", "center": [1.0, 0.0], "width": 0.5, "direction": [1.0, 0.0]},
                {"kind": "translation", "vector": [1.0, 0.3]})),
    Scenario(
        "dirichlet-square", "Dirichlet rule on the square of area pi",
        "Euclidean Dirichlet example",
        {"shape": "square", "area": 3.141592653589793}, 48, (32, 48, 64), _TG, "dirichlet",
        fields=({"kind": "dilation", "center": [_SQ / 2, _SQ / 2]},
                {"kind": "normal-bump", "center": [_SQ, _SQ / 2], "width": 0.5,
                 "direction": [1.0, 0.0]},
                {"kind": "translation", "vector": [1.0, 0.3]})),
    Scenario(
        "neumann-interval", "Neumann rule on the unit interval, first nontrivial eigenvalue",
        "Euclidean Neumann example (zero eigenvalue)",
        {"shape": "interval", "bounds": (0.0, 1.0)}, 400, (100, 200, 400), _TG, "neumann",
        eigen_index=1,
        fields=({"kind": "dilation", "center": [0.0]},
                {"kind": "normal-bump", "center": [1.0], "width": 0.5, "direction": [1.0]},
                {"kind": "translation", "vector": [1.0]})),
    Scenario(
        "neumann-disk", "Neumann rule on the unit disk, first simple nontrivial (radial) eigenvalue",
        "Euclidean Neumann example (zero eigenvalue)",
        {"shape": "disk", "radius": 1.0}, 64, (32, 48, 64), _TG, "neumann",
        eigen_index=5,
        fields=({"kind": "dilation", "center": [0.0, 0.0]},
                {"kind": "normal-bump", "center": [1.0, 0.0], "width": 0.5, "direction": [1.0, 0.0]},
                {"kind": "translation", "vector": [1.0, 0.3]})),
    Scenario(
        "hole-annulus", "Disk of radius 1 with a concentric hole of radius 0.4",
        "Euclidean hole example (mixed Dirichlet/Neumann)",
        {"shape": "annulus", "radius": 1.0, "hole_radius": 0.4}, 64, (16, 32, 64), _TG, "hole",
        hole={"shape": "disk", "radius": 0.4},
        fields=({"kind": "dilation", "center": [0.0, 0.0]},
                {"kind": "normal-bump", "center": [0.4, 0.0], "width": 0.3, "direction": [1.0, 0.0]},
                {"kind": "translation", "vector": [1.0, 0.3]})),
    Scenario(
        "sphere", "Unit sphere in R^3 with a = 0",
        "sphere example (a = 0)",
        {"shape": "sphere", "radius": 1.0}, 32, (8, 16, 32), {"family": "truncated-gaussian", "delta": 0.6},
        "ambient", ambient=[], manifold=True, convention=("sphere", "kernel-flux"), sweep_field=1,
        fields=({"kind": "dilation", "center": [0.0, 0.0, 0.0]},
                {"kind": "normal-bump", "center": [0.0, 0.0, 1.0], "width": 0.5,
                 "direction": [0.0, 0.0, 1.0]})),
    Scenario(
        "hemisphere", "Upper unit hemisphere with a = 1",
        "upper hemisphere example (Dirichlet rule)",
        {"shape": "hemisphere", "radius": 1.0}, 24, (8, 16, 32), {"family": "truncated-gaussian", "delta": 0.6},
        "dirichlet", manifold=True, convention=("sphere", "kernel-flux"),
        fields=({"kind": "dilation", "center": [0.0, 0.0, 0.0]},
                {"kind": "normal-bump", "center": [0.0, 0.0, 1.0], "width": 0.5,
                 "direction": [0.0, 0.0, 1.0]})),
    Scenario(
        "cylinder", "Slice (0,1) x {1/2} of the strip, a(x, s) = 1 + s (1/2 + x (1 - x))",
        "one-parameter family of coefficients (cylinder example)",
        {"shape": "cylinder", "bounds": (0.0, 1.0), "height": 0.5}, 200, (100, 200, 400), _TG,
        "ambient", manifold=True, convention=(None, "kernel-flux"),
        ambient=[(1.0, [0, 0]), (0.5, [0, 1]), (1.0, [1, 1]), (-1.0, [2, 1])],
        fields=({"kind": "translation", "vector": [0.0, 1.0]},
                {"kind": "normal-bump", "center": [0.3, 0.5], "width": 0.3, "direction": [0.0, 1.0]},
                {"kind": "dilation", "center": [0.5, 0.5]})),
]}


def get_scenario(name):
    check_choice(name, "scenario", CATALOG)
    return CATALOG[name]


def list_scenarios():
    """Catalog entries in a stable order."""
    return list(CATALOG.values())


@dataclass(frozen=True, eq=False)
class Setup:
    scenario: Scenario
    domain: object
    kernel: object
    coefficient: object
    operator: object


def build_setup(scenario, resolution=None, kernel=None, sparse_matrix=None):
    """Build domain, kernel, coefficient and operator for a scenario.

    Parameters
    ----------
    scenario : Scenario or str
    resolution : int, optional
        Defaults to the scenario's reference resolution.
    kernel : dict, optional
        Overrides the scenario's kernel descriptor.
    """
    sc = get_scenario(scenario) if isinstance(scenario, str) else scenario
    res = resolution or sc.resolution
    dom = build_domain(sc.domain, res)
    kd = {**sc.kernel, **(kernel or {})}
    kern = make_kernel(kd["family"], kd["delta"], dom.intrinsic_dim, kd.get("mollify", 0.05))
    aux = None
    if sc.rule == "hole":
        aux = build_domain(sc.hole, sc.hole_refine * res)
    elif sc.rule == "ambient":
        aux = AmbientPolynomial(sc.ambient or [], dom.ambient_dim)
    coeff = build_coefficient(sc.rule, dom, kern, aux=aux)
    return Setup(sc, dom, kern, coeff, assemble(dom, kern, coeff, sparse_matrix=sparse_matrix))
