"""Quadrature representations of Euclidean domains and embedded manifolds.

Every domain is reduced to the same data: interior nodes with volume
weights, boundary nodes with surface weights and outward conormals, an
orthonormal tangent frame per node and a mean-curvature vector per node.
Everything downstream (operator assembly, shape derivatives,
rearrangements) works from this representation only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from math import gamma, pi

import numpy as np

from ._validation import check_choice, check_int, check_points, check_positive
from .errors import ValidationError

logger = logging.getLogger(__name__)

SHAPES = ("interval", "rectangle", "square", "disk", "annulus", "circle", "sphere",
          "hemisphere", "cylinder", "ball")
CURVATURE_CONVENTIONS = ("sphere", "hemisphere", "geometric")
SUBSAMPLE = 4


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class QuadratureDomain:
    """Nodes, weights and boundary data of a domain or embedded manifold.

    Attributes
    ----------
    shape : str
        Tag of the builder that produced the domain.
    ambient_dim, intrinsic_dim : int
        Dimension ``d`` of the embedding space and ``n`` of the domain.
    nodes : ndarray, shape (N, d)
    weights : ndarray, shape (N,)
        Intrinsic n-volume carried by each node.
    boundary_nodes : ndarray, shape (Nb, d)
    boundary_weights : ndarray, shape (Nb,)
        (n-1)-volume per boundary node; counting measure when n = 1.
    conormals : ndarray, shape (Nb, d)
        Unit vectors tangent to the domain, normal to its boundary, outward.
    boundary_labels : ndarray of str, shape (Nb,)
        ``"outer"`` or ``"hole"``.
    boundary_frames : ndarray, shape (Nb, d, n-1)
        Orthonormal frames of the boundary's tangent space.
    tangent_frames : ndarray, shape (N, d, n)
        Orthonormal frames of the tangent space at each node.
    curvature_vectors : ndarray, shape (N, d)
        Mean-curvature vectors; zero in codimension 0.
    params : dict
        Geometric parameters used to build the domain.
    resolution : int
    """

    shape: str
    ambient_dim: int
    intrinsic_dim: int
    nodes: np.ndarray
    weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    conormals: np.ndarray
    boundary_labels: np.ndarray
    boundary_frames: np.ndarray
    tangent_frames: np.ndarray
    curvature_vectors: np.ndarray
    params: dict = field(default_factory=dict)
    resolution: int = 0

    def __post_init__(self):
        for name in ("nodes", "weights", "boundary_nodes", "boundary_weights", "conormals",
                     "boundary_frames", "tangent_frames", "curvature_vectors"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        labels = np.asarray(self.boundary_labels, dtype=object)
        labels.flags.writeable = False
        object.__setattr__(self, "boundary_labels", labels)

    @property
    def n_nodes(self):
        return len(self.weights)

    @property
    def measure(self):
        return float(self.weights.sum())

    @property
    def codimension(self):
        return self.ambient_dim - self.intrinsic_dim

    @property
    def tangent_projectors(self):
        """Orthogonal projectors onto the tangent space, shape (N, d, d)."""
        E = self.tangent_frames
        return np.einsum("kia,kja->kij", E, E)

    @property
    def boundary_projectors(self):
        """Projectors onto the tangent space of the domain at boundary nodes."""
        Eb = self.boundary_frames
        N = self.conormals
        return np.einsum("kia,kja->kij", Eb, Eb) + N[:, :, None] * N[:, None, :]

    def invariant_violations(self):
        """Return a list of human-readable invariant violations (empty if sound)."""
        bad = []
        if np.any(self.weights <= 0):
            bad.append("non-positive interior weight")
        if len(self.boundary_weights) and np.any(self.boundary_weights <= 0):
            bad.append("non-positive boundary weight")
        if len(self.conormals):
            if np.max(np.abs(np.linalg.norm(self.conormals, axis=1) - 1)) > 1e-12:
                bad.append("conormal not of unit length")
            resid = np.einsum("kij,kj->ki", self.boundary_projectors, self.conormals) - self.conormals
            if np.max(np.abs(resid)) > 1e-10:
                bad.append("conormal leaves the tangent space")
        tang = np.einsum("kij,kj->ki", self.tangent_projectors, self.curvature_vectors)
        if len(tang) and np.max(np.abs(tang)) > 1e-10:
            bad.append("curvature vector has a tangential component")
        return bad


# ---------------------------------------------------------------- builders


def _clipped_grid(inside, lo, hi, res):
    """Midpoint grid on a box, boundary cells clipped by subsampling.

    Each cell of side ``h`` is split into SUBSAMPLE**2 subcells; the cell
    keeps the fraction of subcells whose centres are inside, and its node
    moves to the centroid of those subcell centres.
    """
    h = (hi[0] - lo[0]) / res
    ny = max(1, int(round((hi[1] - lo[1]) / h)))
    gx = lo[0] + (np.arange(res) + 0.5) * h
    gy = lo[1] + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    s = (np.arange(SUBSAMPLE) + 0.5) / SUBSAMPLE * h - h / 2
    SX, SY = np.meshgrid(s, s, indexing="ij")
    px = X[:, None] + SX.ravel()
    py = Y[:, None] + SY.ravel()
    ins = inside(px, py)
    count = ins.sum(axis=1)
    keep = count > 0
    cx = np.where(ins, px, 0).sum(axis=1)[keep] / count[keep]
    cy = np.where(ins, py, 0).sum(axis=1)[keep] / count[keep]
    w = (count[keep] / SUBSAMPLE**2) * h * h
    return np.c_[cx, cy], w, h


def _circle_boundary(center, radius, h, outward=True):
    nb = 2 * int(np.ceil(2 * pi * radius / h))
    th = (np.arange(nb) + 0.5) * 2 * pi / nb
    radial = np.c_[np.cos(th), np.sin(th)]
    pts = np.asarray(center) + radius * radial
    normals = radial if outward else -radial
    frames = np.c_[-np.sin(th), np.cos(th)][:, :, None]
    return pts, np.full(nb, 2 * pi * radius / nb), normals, frames


def curvature_vectors(points, radius, n, convention):
    """Mean-curvature vectors on a sphere of ``radius`` centred at the origin.

    Parameters
    ----------
    points : ndarray, shape (N, d)
    radius : float
    n : int
        Intrinsic dimension of the sphere.
    convention : {"sphere", "hemisphere", "geometric"}
        ``"sphere"`` gives ``(n/R) p``, ``"hemisphere"`` gives ``(1/R) p`` and
        ``"geometric"`` gives the outward vector of length ``n/R``, i.e.
        ``(n/R**2) p``.  The first two coincide with the geometric one only
        for ``R = 1`` (and ``n = 1`` for the second).
    """
    check_choice(convention, "curvature convention", CURVATURE_CONVENTIONS)
    p = np.asarray(points, dtype=float)
    if convention == "sphere":
        return (n / radius) * p
    if convention == "hemisphere":
        return p / radius
    return (n / radius**2) * p


def _sphere_frames(theta, phi):
    e_theta = np.c_[np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)]
    e_phi = np.c_[-np.sin(phi), np.cos(phi), np.zeros_like(phi)]
    return np.stack([e_theta, e_phi], axis=2)


def _empty_boundary(d, n):
    return dict(boundary_nodes=np.zeros((0, d)), boundary_weights=np.zeros(0),
                conormals=np.zeros((0, d)), boundary_labels=np.array([], dtype=object),
                boundary_frames=np.zeros((0, d, max(n - 1, 0))))


def _flat(shape, nodes, weights, boundary, params, resolution):
    N, d = nodes.shape
    return QuadratureDomain(
        shape=shape, ambient_dim=d, intrinsic_dim=d, nodes=nodes, weights=weights,
        tangent_frames=np.broadcast_to(np.eye(d), (N, d, d)),
        curvature_vectors=np.zeros((N, d)), params=params, resolution=resolution, **boundary)


def point_cloud(nodes, weights):
    """Flat domain from bare nodes and weights, without boundary data.

    Enough for rearrangements and for operators whose coefficient does
    not need a boundary (``nodal``, ``ambient``, ``neumann``).
    """
    x = check_points(nodes, name="nodes")
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(x),) or not np.all(w > 0):
        raise ValidationError("weights must be positive, one per node")
    d = x.shape[1]
    return _flat("points", x, w, _empty_boundary(d, d), {}, 0)


def _interval(p, res):
    a, b = map(float, p.get("bounds", (0.0, 1.0)))
    if not b > a:
        raise ValidationError("interval bounds must satisfy a < b")
    h = (b - a) / res
    x = a + (np.arange(res) + 0.5) * h
    boundary = dict(boundary_nodes=np.array([[a], [b]]), boundary_weights=np.ones(2),
                    conormals=np.array([[-1.0], [1.0]]),
                    boundary_labels=np.array(["outer", "outer"], dtype=object),
                    boundary_frames=np.zeros((2, 1, 0)))
    return _flat("interval", x[:, None], np.full(res, h), boundary, {"bounds": (a, b)}, res)


def _rectangle(p, res, shape="rectangle"):
    if shape == "square":
        side = float(p["side"]) if "side" in p else float(np.sqrt(p.get("area", 1.0)))
        x0, y0 = map(float, p.get("origin", (0.0, 0.0)))
        (x0, x1), (y0, y1) = (x0, x0 + side), (y0, y0 + side)
    else:
        (x0, x1), (y0, y1) = [tuple(map(float, b)) for b in p.get("bounds", ((0, 1), (0, 1)))]
    if not (x1 > x0 and y1 > y0):
        raise ValidationError("rectangle bounds must be increasing")
    h = (x1 - x0) / res
    ny = max(1, int(round((y1 - y0) / h)))
    hy = (y1 - y0) / ny
    gx = x0 + (np.arange(res) + 0.5) * h
    gy = y0 + (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    nodes = np.c_[X.ravel(), Y.ravel()]
    pts, wts, nrm, frm = [], [], [], []
    for (start, end, normal) in (((x0, y0), (x1, y0), (0, -1)), ((x1, y0), (x1, y1), (1, 0)),
                                 ((x1, y1), (x0, y1), (0, 1)), ((x0, y1), (x0, y0), (-1, 0))):
        start, end = np.array(start), np.array(end)
        length = np.linalg.norm(end - start)
        m = 2 * int(np.ceil(length / h))
        s = (np.arange(m) + 0.5) / m
        pts.append(start + s[:, None] * (end - start))
        wts.append(np.full(m, length / m))
        nrm.append(np.tile(normal, (m, 1)))
        frm.append(np.tile((end - start) / length, (m, 1)))
    boundary = dict(boundary_nodes=np.vstack(pts), boundary_weights=np.concatenate(wts),
                    conormals=np.vstack(nrm).astype(float),
                    boundary_labels=np.array(["outer"] * sum(map(len, wts)), dtype=object),
                    boundary_frames=np.vstack(frm)[:, :, None])
    params = {"bounds": ((x0, x1), (y0, y1))}
    return _flat(shape, nodes, np.full(len(nodes), h * hy), boundary, params, res)


def _disk(p, res):
    R = check_positive(float(p.get("radius", 1.0)), "radius")
    c = np.asarray(p.get("center", (0.0, 0.0)), dtype=float)
    nodes, w, h = _clipped_grid(lambda x, y: (x - c[0]) ** 2 + (y - c[1]) ** 2 < R * R,
                                c - R, c + R, res)
    bp, bw, bn, bf = _circle_boundary(c, R, h)
    boundary = dict(boundary_nodes=bp, boundary_weights=bw, conormals=bn,
                    boundary_labels=np.array(["outer"] * len(bw), dtype=object), boundary_frames=bf)
    return _flat("disk", nodes, w, boundary, {"radius": R, "center": tuple(c)}, res)


def _annulus(p, res):
    R = check_positive(float(p.get("radius", 1.0)), "radius")
    r = check_positive(float(p.get("hole_radius", 0.4)), "hole_radius")
    c = np.asarray(p.get("center", (0.0, 0.0)), dtype=float)
    hc = c + np.asarray(p.get("hole_offset", (0.0, 0.0)), dtype=float)
    if np.linalg.norm(hc - c) + r >= R:
        raise ValidationError("the hole must lie strictly inside the outer disk")

    def inside(x, y):
        return (((x - c[0]) ** 2 + (y - c[1]) ** 2 < R * R)
                & ((x - hc[0]) ** 2 + (y - hc[1]) ** 2 >= r * r))

    nodes, w, h = _clipped_grid(inside, c - R, c + R, res)
    op, ow, on, of = _circle_boundary(c, R, h)
    ip, iw, inn, inf = _circle_boundary(hc, r, h, outward=False)
    labels = np.array(["outer"] * len(ow) + ["hole"] * len(iw), dtype=object)
    boundary = dict(boundary_nodes=np.vstack([op, ip]), boundary_weights=np.r_[ow, iw],
                    conormals=np.vstack([on, inn]), boundary_labels=labels,
                    boundary_frames=np.vstack([of, inf]))
    params = {"radius": R, "hole_radius": r, "center": tuple(c), "hole_center": tuple(hc)}
    return _flat("annulus", nodes, w, boundary, params, res)


def _circle(p, res, convention):
    R = check_positive(float(p.get("radius", 1.0)), "radius")
    th = (np.arange(res) + 0.5) * 2 * pi / res
    nodes = R * np.c_[np.cos(th), np.sin(th)]
    frames = np.c_[-np.sin(th), np.cos(th)][:, :, None]
    return QuadratureDomain(
        shape="circle", ambient_dim=2, intrinsic_dim=1, nodes=nodes,
        weights=np.full(res, 2 * pi * R / res), tangent_frames=frames,
        curvature_vectors=curvature_vectors(nodes, R, 1, convention),
        params={"radius": R, "curvature": convention}, resolution=res, **_empty_boundary(2, 1))


def _sphere(p, res, convention, upper_only=False):
    # Colatitude rings of equal angular width; ring k carries about
    # 2 pi sin(theta_k) / dtheta nodes so that cells stay close to square,
    # and each node gets the exact area of its ring sector.
    R = check_positive(float(p.get("radius", 1.0)), "radius")
    top = pi / 2 if upper_only else pi
    dth = top / res
    edges = np.arange(res + 1) * dth
    th_c = (np.arange(res) + 0.5) * dth
    TH, PHI, W = [], [], []
    for k in range(res):
        m = max(3, int(round(2 * pi * np.sin(th_c[k]) / dth)))
        phi = (np.arange(m) + 0.5) * 2 * pi / m
        TH.append(np.full(m, th_c[k]))
        PHI.append(phi)
        W.append(np.full(m, 2 * pi * R * R * (np.cos(edges[k]) - np.cos(edges[k + 1])) / m))
    TH, PHI, W = np.concatenate(TH), np.concatenate(PHI), np.concatenate(W)
    nodes = R * np.c_[np.sin(TH) * np.cos(PHI), np.sin(TH) * np.sin(PHI), np.cos(TH)]
    params = {"radius": R, "curvature": convention}
    common = dict(ambient_dim=3, intrinsic_dim=2, nodes=nodes, weights=W,
                  tangent_frames=_sphere_frames(TH, PHI),
                  curvature_vectors=curvature_vectors(nodes, R, 2, convention),
                  params=params, resolution=res)
    if not upper_only:
        return QuadratureDomain(shape="sphere", **common, **_empty_boundary(3, 2))
    nb = 2 * int(round(2 * pi / dth))
    phi = (np.arange(nb) + 0.5) * 2 * pi / nb
    bp = R * np.c_[np.cos(phi), np.sin(phi), np.zeros(nb)]
    boundary = dict(boundary_nodes=bp, boundary_weights=np.full(nb, 2 * pi * R / nb),
                    conormals=np.tile([0.0, 0.0, -1.0], (nb, 1)),
                    boundary_labels=np.array(["outer"] * nb, dtype=object),
                    boundary_frames=np.c_[-np.sin(phi), np.cos(phi), np.zeros(nb)][:, :, None])
    return QuadratureDomain(shape="hemisphere", **common, **boundary)


def _cylinder(p, res):
    a, b = map(float, p.get("bounds", (0.0, 1.0)))
    s0 = float(p.get("height", 0.5))
    if not b > a:
        raise ValidationError("cylinder bounds must satisfy a < b")
    h = (b - a) / res
    x = a + (np.arange(res) + 0.5) * h
    nodes = np.c_[x, np.full(res, s0)]
    boundary = dict(boundary_nodes=np.array([[a, s0], [b, s0]]), boundary_weights=np.ones(2),
                    conormals=np.array([[-1.0, 0.0], [1.0, 0.0]]),
                    boundary_labels=np.array(["outer", "outer"], dtype=object),
                    boundary_frames=np.zeros((2, 2, 0)))
    return QuadratureDomain(
        shape="cylinder", ambient_dim=2, intrinsic_dim=1, nodes=nodes, weights=np.full(res, h),
        tangent_frames=np.tile([[1.0], [0.0]], (res, 1, 1)), curvature_vectors=np.zeros((res, 2)),
        params={"bounds": (a, b), "height": s0}, resolution=res, **boundary)


def build_domain(descriptor, resolution):
    """Build a quadrature domain from a descriptor.

    Parameters
    ----------
    descriptor : str or dict
        Shape tag, or a mapping with key ``"shape"`` plus geometric
        parameters (``bounds``, ``radius``, ``center``, ``hole_radius``,
        ``hole_offset``, ``side``/``area``, ``height``, ``curvature``).
    resolution : int
        Cells per unit of the builder's reference length: cells of an
        interval, cells across a disk diameter or square side, polar
        bands of a sphere.

    Returns
    -------
    QuadratureDomain
    """
    p = {"shape": descriptor} if isinstance(descriptor, str) else dict(descriptor)
    shape = check_choice(p.get("shape"), "domain shape", SHAPES)
    res = check_int(resolution, "resolution", minimum=2)
    convention = check_choice(p.get("curvature", "sphere"), "curvature convention",
                              CURVATURE_CONVENTIONS)
    if shape == "interval":
        dom = _interval(p, res)
    elif shape in ("rectangle", "square"):
        dom = _rectangle(p, res, shape)
    elif shape == "disk":
        dom = _disk(p, res)
    elif shape == "annulus":
        dom = _annulus(p, res)
    elif shape == "circle":
        dom = _circle(p, res, convention)
    elif shape == "sphere":
        dom = _sphere(p, res, convention)
    elif shape == "hemisphere":
        dom = _sphere(p, res, convention, upper_only=True)
    elif shape == "cylinder":
        dom = _cylinder(p, res)
    else:
        dom = ball_with_measure(float(p.get("volume", 1.0)), int(p.get("dim", 2)), resolution=res)
    if dom.n_nodes == 0:
        raise ValidationError(f"resolution {res} places no interior node in {shape}")
    return dom


def with_curvature(dom, convention):
    """Return ``dom`` with curvature vectors recomputed under ``convention``.

    Only spherical domains carry a radius-dependent curvature; for every
    other shape the domain is returned unchanged.
    """
    if dom.shape not in ("sphere", "hemisphere", "circle"):
        return dom
    R = dom.params["radius"]
    H = curvature_vectors(dom.nodes, R, dom.intrinsic_dim, convention)
    return replace(dom, curvature_vectors=H, params={**dom.params, "curvature": convention})


# --------------------------------------------------------------- the ball


def unit_ball_volume(n):
    """Measure of the unit ball in R^n, ``pi**(n/2) / Gamma(n/2 + 1)``."""
    return pi ** (n / 2) / gamma(n / 2 + 1)


_PLASTIC = 1.324717957244746


def ball_with_measure(volume, n, resolution=None, n_nodes=None):
    """Centred ball of prescribed measure with radially structured nodes.

    All nodes carry the same weight ``volume / N``.  For n >= 2 node ``k``
    sits at the radius whose enclosed ball has measure
    ``volume * (k + 1/2) / N``, so a radial function of the enclosed
    measure is sampled at exact midpoints of the measure axis.  In one
    dimension the nodes form the midpoint grid of ``(-r, r)``.

    Parameters
    ----------
    volume : float
    n : int
        Dimension, 1 to 3.
    resolution : int, optional
        Cells across the diameter; sets ``N`` to roughly the number of
        grid cells inside the ball.
    n_nodes : int, optional
        Explicit node count; overrides ``resolution``.

    Returns
    -------
    QuadratureDomain
        With ``params["radius"]`` and ``params["measure_coordinates"]``
        (enclosed measure at each node's radius).
    """
    volume = check_positive(volume, "volume")
    n = check_int(n, "dimension", minimum=1)
    if n > 3:
        raise ValidationError("balls are supported up to dimension 3")
    if n_nodes is None:
        res = check_int(resolution if resolution is not None else 32, "resolution", minimum=2)
        n_nodes = max(1, int(round(unit_ball_volume(n) * (res / 2) ** n)))
    N = check_int(n_nodes, "n_nodes", minimum=1)
    r = (volume / unit_ball_volume(n)) ** (1.0 / n)
    k = np.arange(N)
    if n == 1:
        x = -r + (k + 0.5) * 2 * r / N
        nodes = x[:, None]
        boundary = dict(boundary_nodes=np.array([[-r], [r]]), boundary_weights=np.ones(2),
                        conormals=np.array([[-1.0], [1.0]]),
                        boundary_labels=np.array(["outer", "outer"], dtype=object),
                        boundary_frames=np.zeros((2, 1, 0)))
        s = 2 * np.abs(x)
    elif n == 2:
        rad = r * np.sqrt((k + 0.5) / N)
        th = k * pi * (3 - np.sqrt(5))
        nodes = np.c_[rad * np.cos(th), rad * np.sin(th)]
        bp, bw, bn, bf = _circle_boundary((0.0, 0.0), r, 2 * r / max(2, int(np.sqrt(N))))
        boundary = dict(boundary_nodes=bp, boundary_weights=bw, conormals=bn,
                        boundary_labels=np.array(["outer"] * len(bw), dtype=object),
                        boundary_frames=bf)
        s = pi * rad**2
    else:
        rad = r * ((k + 0.5) / N) ** (1 / 3)
        u = (0.5 + k / _PLASTIC) % 1.0
        v = (0.5 + k / _PLASTIC**2) % 1.0
        z = 1 - 2 * u
        ph = 2 * pi * v
        st = np.sqrt(1 - z * z)
        nodes = rad[:, None] * np.c_[st * np.cos(ph), st * np.sin(ph), z]
        nb = max(8, int(4 * pi * N ** (2 / 3)))
        j = np.arange(nb)
        zb = 1 - 2 * (j + 0.5) / nb
        pb = j * pi * (3 - np.sqrt(5))
        tb = np.arccos(zb)
        radial = np.c_[np.sin(tb) * np.cos(pb), np.sin(tb) * np.sin(pb), zb]
        boundary = dict(boundary_nodes=r * radial, boundary_weights=np.full(nb, 4 * pi * r * r / nb),
                        conormals=radial, boundary_labels=np.array(["outer"] * nb, dtype=object),
                        boundary_frames=_sphere_frames(tb, pb))
        s = unit_ball_volume(3) * rad**3
    params = {"radius": r, "volume": volume, "measure_coordinates": s}
    return _flat("ball", nodes, np.full(N, volume / N), boundary, params, resolution or 0)


# ---------------------------------------------------------- vector fields


class VectorField:
    """Smooth vector field on the ambient space.

    Parameters
    ----------
    func : callable
        Maps an (k, d) array of points to an (k, d) array of vectors.
    dim : int
        Ambient dimension.
    jacobian : callable, optional
        Maps (k, d) points to (k, d, d) Jacobians ``dV_i/dx_j``.  When
        omitted, central differences with step 1e-6 are used.
    name : str
    """

    def __init__(self, func, dim, jacobian=None, name="field"):
        self._func = func
        self.dim = int(dim)
        self._jac = jacobian
        self.name = name

    def __call__(self, x):
        x = check_points(x, self.dim)
        return np.asarray(self._func(x), dtype=float).reshape(len(x), self.dim)

    def jacobian(self, x):
        x = check_points(x, self.dim)
        if self._jac is not None:
            return np.asarray(self._jac(x), dtype=float).reshape(len(x), self.dim, self.dim)
        eps = 1e-6
        J = np.empty((len(x), self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = eps
            J[:, :, j] = (self(x + e) - self(x - e)) / (2 * eps)
        return J

    def __add__(self, other):
        return VectorField(lambda x: self(x) + other(x), self.dim,
                           lambda x: self.jacobian(x) + other.jacobian(x),
                           name=f"{self.name}+{other.name}")

    def __rmul__(self, c):
        c = float(c)
        return VectorField(lambda x: c * self(x), self.dim, lambda x: c * self.jacobian(x),
                           name=f"{c:g}*{self.name}")


def translation(vector):
    v = np.asarray(vector, dtype=float)
    d = len(v)
    return VectorField(lambda x: np.tile(v, (len(x), 1)), d,
                       lambda x: np.zeros((len(x), d, d)), name="translation")


def dilation(dim, center=None):
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return VectorField(lambda x: x - c, dim,
                       lambda x: np.broadcast_to(np.eye(dim), (len(x), dim, dim)).copy(),
                       name="dilation")


def rotation(center=(0.0, 0.0)):
    """Infinitesimal rotation about ``center`` in the plane."""
    c = np.asarray(center, dtype=float)
    A = np.array([[0.0, -1.0], [1.0, 0.0]])
    return VectorField(lambda x: (x - c) @ A.T, 2,
                       lambda x: np.broadcast_to(A, (len(x), 2, 2)).copy(), name="rotation")


def normal_bump(center, width, direction):
    """Gaussian bump ``exp(-|x-c|^2 / (2 s^2)) * direction``."""
    c = np.asarray(center, dtype=float)
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    s2 = check_positive(float(width), "width") ** 2

    def g(x):
        return np.exp(-((x - c) ** 2).sum(axis=1) / (2 * s2))

    def jac(x):
        dg = -(x - c) / s2 * g(x)[:, None]
        return e[None, :, None] * dg[:, None, :]

    return VectorField(lambda x: g(x)[:, None] * e, len(c), jac, name="normal-bump")


def polynomial(terms):
    """Polynomial field from per-component monomial lists.

    Parameters
    ----------
    terms : list of list of (coefficient, exponents)
        ``terms[i]`` lists the monomials of component ``i``; ``exponents``
        has one entry per coordinate.
    """
    d = len(terms)
    comps = [[(float(c), np.asarray(e, dtype=int)) for c, e in comp] for comp in terms]
    for comp in comps:
        for _, e in comp:
            if len(e) != d or np.any(e < 0):
                raise ValidationError("polynomial exponents must be non-negative, one per coordinate")

    def f(x):
        out = np.zeros((len(x), d))
        for i, comp in enumerate(comps):
            for c, e in comp:
                out[:, i] += c * np.prod(x**e, axis=1)
        return out

    def jac(x):
        out = np.zeros((len(x), d, d))
        for i, comp in enumerate(comps):
            for c, e in comp:
                for j in range(d):
                    if e[j] == 0:
                        continue
                    e2 = e.copy()
                    e2[j] -= 1
                    out[:, i, j] += c * e[j] * np.prod(x**e2, axis=1)
        return out

    return VectorField(f, d, jac, name="polynomial")


def zero_field(dim):
    return VectorField(lambda x: np.zeros_like(x), dim, lambda x: np.zeros((len(x), dim, dim)),
                       name="zero")


FIELD_KINDS = ("translation", "dilation", "rotation", "normal-bump", "polynomial", "zero")


def make_field(descriptor, dim):
    """Build a VectorField from a descriptor mapping with key ``kind``."""
    p = {"kind": descriptor} if isinstance(descriptor, str) else dict(descriptor)
    kind = check_choice(p.get("kind"), "field kind", FIELD_KINDS)
    if kind == "translation":
        v = p.get("vector", [1.0] + [0.0] * (dim - 1))
        if len(v) != dim:
            raise ValidationError(f"translation vector must have {dim} entries")
        return translation(v)
    if kind == "dilation":
        return dilation(dim, p.get("center"))
    if kind == "rotation":
        if dim != 2:
            raise ValidationError("rotation fields are planar")
        return rotation(p.get("center", (0.0, 0.0)))
    if kind == "normal-bump":
        center = p.get("center", [1.0] + [0.0] * (dim - 1))
        if len(center) != dim:
            raise ValidationError(f"bump center must have {dim} entries")
        direction = p.get("direction")
        if direction is None:
            direction = np.asarray(center, dtype=float)
            if np.linalg.norm(direction) == 0:
                raise ValidationError("bump at the origin needs an explicit direction")
        return normal_bump(center, p.get("width", 0.5), direction)
    if kind == "polynomial":
        field = polynomial(p["terms"])
        if field.dim != dim:
            raise ValidationError(f"polynomial field must have {dim} components")
        return field
    return zero_field(dim)


@dataclass(frozen=True)
class FieldSplit:
    """Tangential and normal parts of a vector field at a set of nodes."""

    tangential: np.ndarray
    normal: np.ndarray


def split_field(V, dom, where="nodes"):
    """Split ``V`` into tangential and normal parts.

    Parameters
    ----------
    V : VectorField
    dom : QuadratureDomain
    where : {"nodes", "boundary"}

    Returns
    -------
    FieldSplit
    """
    check_choice(where, "location", ("nodes", "boundary"))
    if where == "nodes":
        pts, P = dom.nodes, dom.tangent_projectors
    else:
        pts, P = dom.boundary_nodes, dom.boundary_projectors
    if len(pts) == 0:
        empty = np.zeros((0, dom.ambient_dim))
        return FieldSplit(empty, empty)
    v = V(pts)
    vt = np.einsum("kij,kj->ki", P, v)
    return FieldSplit(vt, v - vt)


# ---------------------------------------------------------- pushforward


def _gram_sqrt_det(frames):
    if frames.shape[2] == 0:
        return np.ones(len(frames))
    G = np.einsum("kia,kib->kab", frames, frames)
    return np.sqrt(np.abs(np.linalg.det(G)))


def _orthonormalize(frames):
    if frames.shape[2] == 0:
        return frames
    q, _ = np.linalg.qr(frames)
    return q


def push_domain(dom, V, t):
    """Image of ``dom`` under ``x -> x + t V(x)``.

    Nodes move with the map; interior and boundary weights are rescaled by
    the volume element of the pushed tangent frames; conormals are
    recomputed inside the pushed tangent space.  Curvature vectors are
    carried over projected onto the new normal space (they are not used by
    the solvers on perturbed domains).
    """
    if t == 0:
        return dom
    F = np.eye(dom.ambient_dim) + t * V.jacobian(dom.nodes)
    E = np.einsum("kij,kja->kia", F, dom.tangent_frames)
    w = dom.weights * _gram_sqrt_det(E) / _gram_sqrt_det(dom.tangent_frames)
    Eq = _orthonormalize(E)
    P = np.einsum("kia,kja->kij", Eq, Eq)
    H = dom.curvature_vectors - np.einsum("kij,kj->ki", P, dom.curvature_vectors)
    nodes = dom.nodes + t * V(dom.nodes)
    bnodes, bw, bn, bf = dom.boundary_nodes, dom.boundary_weights, dom.conormals, dom.boundary_frames
    if len(bnodes):
        Fb = np.eye(dom.ambient_dim) + t * V.jacobian(bnodes)
        Eb = np.einsum("kij,kja->kia", Fb, bf)
        bw = bw * _gram_sqrt_det(Eb)
        bf = _orthonormalize(Eb)
        nb = np.einsum("kij,kj->ki", Fb, bn)
        nb = nb - np.einsum("kia,ka->ki", bf, np.einsum("kia,ki->ka", bf, nb))
        bn = nb / np.linalg.norm(nb, axis=1, keepdims=True)
        bnodes = bnodes + t * V(bnodes)
    return replace(dom, nodes=nodes, weights=w, tangent_frames=Eq, curvature_vectors=H,
                   boundary_nodes=bnodes, boundary_weights=bw, conormals=bn, boundary_frames=bf,
                   params={**dom.params, "pushed": (V.name, float(t))})
