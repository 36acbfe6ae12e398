"""Structured triangular background meshes over a rectangle.

The mesh knows nothing about the embedded geometry; it only provides
triangles, facet topology and size measures. Each rectangle cell is split
along the lower-left/upper-right diagonal, so refinement and facet
orientation are fully deterministic. Meshes are immutable once built.

Interior facet normals point from the lower to the higher adjacent element
index; boundary facet normals point out of the rectangle. The jump sign
convention in the assembly follows this orientation.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BackgroundMesh:
    """Triangulation of an axis-aligned rectangle with facet topology.

    vertices      (nv, 2) coordinates
    triangles     (nt, 3) vertex indices, counter-clockwise
    facets        (nf, 2) vertex indices per facet (edge)
    facet_elems   (nf, 2) adjacent element indices; -1 in the second slot
                  marks a boundary facet of the rectangle
    facet_normals (nf, 2) unit normals, oriented low -> high element index
    elem_facets   (nt, 3) facet indices per element
    h_t           per-element diameter (longest edge)
    h_f           per-facet edge length
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_elems: np.ndarray
    facet_normals: np.ndarray
    elem_facets: np.ndarray
    h_t: np.ndarray
    h_f: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray
    domain: tuple = field(default=(0.0, 0.0, 1.0, 1.0))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_facets(self):
        return len(self.facets)

    def interior_facets(self):
        """Indices of facets with two adjacent elements."""
        return np.flatnonzero(self.facet_elems[:, 1] >= 0)

    def boundary_facets(self):
        """Indices of facets on the rectangle boundary."""
        return np.flatnonzero(self.facet_elems[:, 1] < 0)

    def element_coords(self, elem):
        """(3, 2) vertex coordinates of one triangle."""
        return self.vertices[self.triangles[elem]]


def _finalize(vertices, triangles, domain):
    """Compute facet topology and size measures; validate orientation."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int32)

    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    signed = 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )
    if np.any(signed <= 0.0):
        raise ValueError("all triangles must be counter-clockwise with positive area")
    areas = signed
    centroids = (p0 + p1 + p2) / 3.0
    edge_lens = np.stack(
        [
            np.linalg.norm(p1 - p0, axis=1),
            np.linalg.norm(p2 - p1, axis=1),
            np.linalg.norm(p0 - p2, axis=1),
        ],
        axis=1,
    )
    h_t = edge_lens.max(axis=1)

    edge_map = {}
    for t in range(len(triangles)):
        tri = triangles[t]
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            edge_map.setdefault(key, []).append(t)

    keys = sorted(edge_map)
    nf = len(keys)
    facets = np.empty((nf, 2), dtype=np.int32)
    facet_elems = np.full((nf, 2), -1, dtype=np.int32)
    for f, key in enumerate(keys):
        facets[f] = key
        elems = sorted(edge_map[key])
        if len(elems) > 2:
            raise ValueError("facet shared by more than two elements")
        facet_elems[f, : len(elems)] = elems

    q0 = vertices[facets[:, 0]]
    q1 = vertices[facets[:, 1]]
    tangents = q1 - q0
    h_f = np.linalg.norm(tangents, axis=1)
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1) / h_f[:, None]
    # Orient: away from the first adjacent element (low -> high / outward).
    mid = 0.5 * (q0 + q1)
    flip = np.einsum("ij,ij->i", normals, mid - centroids[facet_elems[:, 0]]) < 0.0
    normals[flip] *= -1.0

    elem_facets = np.empty((len(triangles), 3), dtype=np.int32)
    facet_index = {key: f for f, key in enumerate(keys)}
    for t in range(len(triangles)):
        tri = triangles[t]
        for s, (a, b) in enumerate(((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0]))):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            elem_facets[t, s] = facet_index[key]

    for arr in (vertices, triangles, facets, facet_elems, normals, elem_facets,
                h_t, h_f, areas, centroids):
        arr.setflags(write=False)
    return BackgroundMesh(
        vertices=vertices,
        triangles=triangles,
        facets=facets,
        facet_elems=facet_elems,
        facet_normals=normals,
        elem_facets=elem_facets,
        h_t=h_t,
        h_f=h_f,
        areas=areas,
        centroids=centroids,
        domain=tuple(domain),
    )


def build_structured_mesh(domain, n):
    """Criss-cross triangulation of a rectangle with n cells per axis.

    domain is (x0, y0, x1, y1). Every cell is split along its lower-left to
    upper-right diagonal, giving 2*n**2 triangles.
    """
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    x0, y0, x1, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain rectangle must have positive extents")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    triangles = np.empty((2 * n * n, 3), dtype=np.int32)
    t = 0
    for i in range(n):
        for j in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v11 = vid(i + 1, j + 1)
            v01 = vid(i, j + 1)
            triangles[t] = (v00, v10, v11)
            triangles[t + 1] = (v00, v11, v01)
            t += 2
    return _finalize(vertices, triangles, domain)


def uniform_refine(mesh):
    """Split every triangle into 4 congruent children via edge midpoints."""
    nv = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    triangles = np.empty((4 * mesh.n_triangles, 3), dtype=np.int32)
    for t in range(mesh.n_triangles):
        v0, v1, v2 = mesh.triangles[t]
        f01, f12, f20 = mesh.elem_facets[t]
        m01 = nv + f01
        m12 = nv + f12
        m20 = nv + f20
        triangles[4 * t + 0] = (v0, m01, m20)
        triangles[4 * t + 1] = (v1, m12, m01)
        triangles[4 * t + 2] = (v2, m20, m12)
        triangles[4 * t + 3] = (m01, m12, m20)
    return _finalize(vertices, triangles, mesh.domain)


def write_mesh_text(mesh, stream):
    """Dump the mesh as plain text: 'v x y' and 't i j k' lines."""
    for x, y in mesh.vertices:
        stream.write(f"v {float(x)!r} {float(y)!r}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"t {int(i)} {int(j)} {int(k)}\n")
