"""Level-set geometry: element classification and cut quadrature.

The interface is approximated by the piecewise-linear interpolant of the
level set on the vertex values (geometry order 1). All integration regions
are polygonal, so every rule here is exact up to its polynomial degree:
cut volumes are sub-triangulated, the discrete boundary within an element
is a straight segment, cut facets are sub-segments.

Vertex values that are exactly zero resolve to the weak side: an element
is OUTSIDE when no vertex value is negative and INSIDE when no vertex
value is positive, so only elements with strict sign changes count as cut.
This keeps zero-measure slivers out of the cut element list; an element on
which the level set vanishes entirely is rejected as degenerate.
"""

import math
from dataclasses import dataclass

import numpy as np

INSIDE = 0
CUT = 1
OUTSIDE = 2


class DegenerateGeometryError(Exception):
    """The level set vanishes identically on some element."""


@dataclass(frozen=True)
class LevelSet:
    """Scalar field describing the geometry: negative inside the domain.

    grad is only used for analytic normals in reporting and tests, never
    for quadrature.
    """

    phi: callable
    grad: callable = None

    def __call__(self, points):
        return self.phi(np.asarray(points, dtype=float))


def _radius(points):
    return np.sqrt(points[..., 0] ** 2 + points[..., 1] ** 2)


def _ring_phi(points):
    r = _radius(points)
    return np.maximum(0.25 - r, r - 0.75)


def _ring_grad(points):
    points = np.asarray(points, dtype=float)
    r = np.maximum(_radius(points), 1e-300)
    sign = np.where(0.25 - r >= r - 0.75, -1.0, 1.0)
    return sign[..., None] * points / r[..., None]


def _circle_phi(points):
    return 0.25 - _radius(points)


def _circle_grad(points):
    points = np.asarray(points, dtype=float)
    r = np.maximum(_radius(points), 1e-300)
    return -points / r[..., None]


_PREDEFINED = {
    "ring": lambda: LevelSet(_ring_phi, _ring_grad),
    "circle-obstacle": lambda: LevelSet(_circle_phi, _circle_grad),
}


def levelset_by_name(name):
    """Predefined level sets: 'ring' (0.25 < r < 0.75) and
    'circle-obstacle' (everything outside the circle r < 0.25)."""
    try:
        return _PREDEFINED[name]()
    except KeyError:
        raise ValueError(f"unknown level set {name!r}") from None


@dataclass(frozen=True)
class CutTopology:
    """Classification of the background mesh against a level set.

    elem_class     per-element INSIDE / CUT / OUTSIDE
    vertex_values  level-set values at the mesh vertices; the single
                   source of truth for every quadrature rule
    active_elements  elements with INSIDE or CUT class
    cut_elements     elements crossed by the discrete interface
    active_facets    interior facets whose both neighbours are active
    active_index     element id -> position in active_elements (-1 if not)
    """

    elem_class: np.ndarray
    vertex_values: np.ndarray
    active_elements: np.ndarray
    cut_elements: np.ndarray
    active_facets: np.ndarray
    active_index: np.ndarray

    @property
    def n_active(self):
        return len(self.active_elements)

    def is_active(self, elem):
        return self.elem_class[elem] != OUTSIDE


def classify(mesh, levelset):
    """Classify elements from the vertex values of the linear interpolant.

    OUTSIDE means no negative vertex value, INSIDE no positive one; only
    elements with both strict signs are CUT.
    """
    values = np.asarray(levelset(mesh.vertices), dtype=float).copy()
    if values.shape != (mesh.n_vertices,):
        raise ValueError("level set must return one value per vertex")

    tri_values = values[mesh.triangles]
    if np.any(np.all(tri_values == 0.0, axis=1)):
        raise DegenerateGeometryError(
            "level set vanishes on all three vertices of an element"
        )

    any_neg = np.any(tri_values < 0.0, axis=1)
    any_pos = np.any(tri_values > 0.0, axis=1)
    elem_class = np.full(mesh.n_triangles, CUT, dtype=np.int8)
    elem_class[~any_neg] = OUTSIDE
    elem_class[~any_pos & any_neg] = INSIDE

    active = np.flatnonzero(elem_class != OUTSIDE)
    cut = np.flatnonzero(elem_class == CUT)
    active_index = np.full(mesh.n_triangles, -1, dtype=np.int64)
    active_index[active] = np.arange(len(active))

    inter = mesh.interior_facets()
    both_active = (elem_class[mesh.facet_elems[inter, 0]] != OUTSIDE) & (
        elem_class[mesh.facet_elems[inter, 1]] != OUTSIDE
    )
    values.setflags(write=False)
    return CutTopology(
        elem_class=elem_class,
        vertex_values=values,
        active_elements=active,
        cut_elements=cut,
        active_facets=inter[both_active],
        active_index=active_index,
    )


@dataclass(frozen=True)
class QuadratureRule:
    """Points, weights and (for boundary rules) outward unit normals."""

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray = None

    @property
    def n_points(self):
        return len(self.weights)

    def total(self):
        return float(self.weights.sum())


_EMPTY_RULE = QuadratureRule(points=np.zeros((0, 2)), weights=np.zeros(0))

_gauss1d_cache = {}
_tri_cache = {}


def _gauss1d(npts):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    try:
        return _gauss1d_cache[npts]
    except KeyError:
        x, w = np.polynomial.legendre.leggauss(npts)
        pair = (0.5 * (x + 1.0), 0.5 * w)
        _gauss1d_cache[npts] = pair
        return pair


def _reference_triangle_rule(order):
    """Rule on the unit right triangle, exact for total degree <= order.

    Tensor Gauss rule under the Duffy map; the (1-x) Jacobian raises the
    x-degree by one, hence the point count below.
    """
    m = max(1, math.ceil((order + 2) / 2))
    try:
        return _tri_cache[m]
    except KeyError:
        x, wx = _gauss1d(m)
        y, wy = _gauss1d(m)
        xx = np.repeat(x, m)
        yy = np.tile(y, m) * (1.0 - xx)
        ww = np.repeat(wx * (1.0 - x), m) * np.tile(wy, m)
        rule = (np.stack([xx, yy], axis=1), ww)
        _tri_cache[m] = rule
        return rule


def _mapped_triangle_rule(coords, order):
    """Map the reference rule onto the triangle with rows of coords."""
    ref, w = _reference_triangle_rule(order)
    e1 = coords[1] - coords[0]
    e2 = coords[2] - coords[0]
    det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    pts = coords[0] + np.outer(ref[:, 0], e1) + np.outer(ref[:, 1], e2)
    return pts, w * det


def _segment_rule(a, b, order):
    npts = max(1, math.ceil((order + 1) / 2))
    t, w = _gauss1d(npts)
    length = np.linalg.norm(b - a)
    pts = a[None, :] + np.outer(t, b - a)
    return pts, w * length


def _clip_inside(coords, d):
    """Vertices of the polygon {linear interpolant < 0} within a triangle.

    coords (3, 2) CCW, d (3,) nonzero vertex values. Returns the clipped
    polygon (CCW) and the two interface endpoints in edge-walk order.
    """
    poly = []
    crossings = []
    for i in range(3):
        j = (i + 1) % 3
        if d[i] < 0.0:
            poly.append(coords[i])
        if (d[i] < 0.0) != (d[j] < 0.0):
            t = d[i] / (d[i] - d[j])
            q = coords[i] + t * (coords[j] - coords[i])
            poly.append(q)
            crossings.append(q)
    return np.asarray(poly), crossings


def cut_volume_rule(mesh, topo, elem, order):
    """Quadrature on T intersected with the discrete domain.

    INSIDE elements get a full-triangle rule; CUT elements a rule on the
    sub-triangulated negative part. Exact for polynomials up to `order`.
    """
    cls = topo.elem_class[elem]
    if cls == OUTSIDE:
        raise ValueError(f"element {elem} lies outside the domain")
    coords = mesh.element_coords(elem)
    if cls == INSIDE:
        pts, w = _mapped_triangle_rule(coords, order)
        return QuadratureRule(points=pts, weights=w)
    d = topo.vertex_values[mesh.triangles[elem]]
    poly, _ = _clip_inside(coords, d)
    pts_list = []
    w_list = []
    for s in range(1, len(poly) - 1):
        tri = np.array([poly[0], poly[s], poly[s + 1]])
        pts, w = _mapped_triangle_rule(tri, order)
        pts_list.append(pts)
        w_list.append(w)
    return QuadratureRule(
        points=np.concatenate(pts_list), weights=np.concatenate(w_list)
    )


def boundary_rule(mesh, topo, elem, order):
    """Quadrature on the straight interface segment within a CUT element.

    Normals point towards positive level-set values, i.e. out of the
    discrete domain.
    """
    if topo.elem_class[elem] != CUT:
        raise ValueError(f"element {elem} is not cut by the interface")
    coords = mesh.element_coords(elem)
    d = topo.vertex_values[mesh.triangles[elem]]
    _, crossings = _clip_inside(coords, d)
    a, b = crossings
    pts, w = _segment_rule(a, b, order)
    # Gradient of the linear interpolant gives the outward direction.
    mat = np.array([coords[1] - coords[0], coords[2] - coords[0]])
    rhs = np.array([d[1] - d[0], d[2] - d[0]])
    g = np.linalg.solve(mat, rhs)
    g /= np.linalg.norm(g)
    normals = np.broadcast_to(g, pts.shape).copy()
    return QuadratureRule(points=pts, weights=w, normals=normals)


def interface_facets(mesh, topo):
    """Facets that lie exactly on the discrete interface.

    When the linear interpolant vanishes on both endpoints of a facet that
    separates an active element from an OUTSIDE element, that whole facet
    is part of the discrete boundary (the interface runs along it instead
    of crossing the elements). Returns (facet, active element) pairs; the
    boundary normal is the facet normal oriented away from the active side.
    """
    pairs = []
    for facet in mesh.interior_facets():
        v0, v1 = mesh.facets[facet]
        if topo.vertex_values[v0] != 0.0 or topo.vertex_values[v1] != 0.0:
            continue
        ea, eb = mesh.facet_elems[facet]
        ca, cb = topo.elem_class[ea], topo.elem_class[eb]
        if ca != OUTSIDE and cb == OUTSIDE:
            pairs.append((int(facet), int(ea)))
        elif cb != OUTSIDE and ca == OUTSIDE:
            pairs.append((int(facet), int(eb)))
    return pairs


def facet_segment_rule(mesh, facet, order):
    """Full-facet segment rule (no normals attached)."""
    v0, v1 = mesh.facets[facet]
    pts, w = _segment_rule(mesh.vertices[v0], mesh.vertices[v1], order)
    return QuadratureRule(points=pts, weights=w)


def cut_facet_rule(mesh, topo, facet, order):
    """Quadrature on the sub-segment of a facet inside the discrete domain.

    Returns an empty rule when the facet lies entirely on the outside.
    """
    v0, v1 = mesh.facets[facet]
    d0 = topo.vertex_values[v0]
    d1 = topo.vertex_values[v1]
    a = mesh.vertices[v0]
    b = mesh.vertices[v1]
    if d0 >= 0.0 and d1 >= 0.0:
        return _EMPTY_RULE
    if d0 < 0.0 and d1 < 0.0:
        pts, w = _segment_rule(a, b, order)
        return QuadratureRule(points=pts, weights=w)
    t = d0 / (d0 - d1)
    q = a + t * (b - a)
    if d0 < 0.0:
        pts, w = _segment_rule(a, q, order)
    else:
        pts, w = _segment_rule(q, b, order)
    return QuadratureRule(points=pts, weights=w)


class CutRules:
    """Memoising front-end for the three rule constructors.

    Every rule is a pure function of (mesh, topo, entity, order); this class
    only avoids recomputation when assembly, error norms and stabilisation
    all ask for the same entity.
    """

    def __init__(self, mesh, topo, order):
        self.mesh = mesh
        self.topo = topo
        self.order = order
        self._volume = {}
        self._boundary = {}
        self._facet = {}

    def volume(self, elem):
        rule = self._volume.get(elem)
        if rule is None:
            rule = cut_volume_rule(self.mesh, self.topo, elem, self.order)
            self._volume[elem] = rule
        return rule

    def boundary(self, elem):
        rule = self._boundary.get(elem)
        if rule is None:
            rule = boundary_rule(self.mesh, self.topo, elem, self.order)
            self._boundary[elem] = rule
        return rule

    def facet(self, facet):
        rule = self._facet.get(facet)
        if rule is None:
            rule = cut_facet_rule(self.mesh, self.topo, facet, self.order)
            self._facet[facet] = rule
        return rule
