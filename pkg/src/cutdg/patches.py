"""Aggregation patches and ghost-penalty facet sets.

Every cut element is attached to an interior root element by a multi-source
BFS over facets with positive cut measure; interior elements that claim no
cut neighbours stay as trivial singleton patches. The same decomposition
feeds all three stabilisation mechanisms: the global ghost-penalty facet
set, the minimal patch-interior facet set, and the algebraic element
aggregation.
"""

from dataclasses import dataclass

import numpy as np

from . import cutgeom

# A facet connects two patch members only if its cut part is genuinely
# positive; slivers below this fraction of the edge length do not count.
CUT_MEASURE_REL_TOL = 1e-12


class UnstabilisableGeometryError(Exception):
    """Some cut element has no path of cut facets to an interior element."""


@dataclass(frozen=True)
class Patch:
    root: int
    members: np.ndarray  # sorted element ids, root included
    inner_facets: np.ndarray  # facets with both neighbours in the patch

    @property
    def trivial(self):
        return len(self.members) == 1


@dataclass(frozen=True)
class PatchDecomposition:
    """Partition of the active mesh into rooted patches.

    patch_id    per background element; -1 for inactive elements
    patches     one entry per interior element, in element order
    n_max       largest BFS distance from a cut element to its root
    fgp_star    facets between an active and a cut element (global set)
    fgp_min     interior facets of the non-trivial patches (minimal set)
    """

    patch_id: np.ndarray
    patches: tuple
    n_max: int
    fgp_star: np.ndarray
    fgp_min: np.ndarray
    bfs_distance: np.ndarray

    def nontrivial_patches(self):
        return [p for p in self.patches if not p.trivial]


def _facet_cut_measure(mesh, topo, facet, order=2):
    return cutgeom.cut_facet_rule(mesh, topo, facet, order).total()


def build_patches(mesh, topo):
    """Attach every cut element to the nearest interior root via BFS.

    Sources are all interior elements; the frontier is processed in
    ascending element order, so ties break deterministically towards the
    lowest claiming neighbour. A cut element that stays unreachable makes
    the geometry unstabilisable and raises.
    """
    inside = np.flatnonzero(topo.elem_class == cutgeom.INSIDE)
    if len(inside) == 0:
        raise ValueError("no interior element; cannot root any patch")

    crossable = {}

    def can_cross(facet):
        ok = crossable.get(facet)
        if ok is None:
            measure = _facet_cut_measure(mesh, topo, facet)
            ok = measure > CUT_MEASURE_REL_TOL * mesh.h_f[facet]
            crossable[facet] = ok
        return ok

    root_of = np.full(mesh.n_triangles, -1, dtype=np.int64)
    dist = np.full(mesh.n_triangles, -1, dtype=np.int64)
    root_of[inside] = inside
    dist[inside] = 0

    frontier = list(inside)
    n_max = 0
    while frontier:
        next_frontier = []
        for elem in sorted(frontier):
            for facet in mesh.elem_facets[elem]:
                e0, e1 = mesh.facet_elems[facet]
                nb = e1 if e0 == elem else e0
                if nb < 0 or topo.elem_class[nb] != cutgeom.CUT:
                    continue
                if root_of[nb] >= 0 or not can_cross(facet):
                    continue
                root_of[nb] = root_of[elem]
                dist[nb] = dist[elem] + 1
                n_max = max(n_max, int(dist[nb]))
                next_frontier.append(nb)
        frontier = next_frontier

    unreached = np.flatnonzero((topo.elem_class == cutgeom.CUT) & (root_of < 0))
    if len(unreached) > 0:
        raise UnstabilisableGeometryError(
            f"cut elements {unreached.tolist()} are not reachable from any "
            "interior element across facets with positive cut measure"
        )

    patch_id = np.full(mesh.n_triangles, -1, dtype=np.int64)
    patches = []
    members_of = {int(r): [int(r)] for r in inside}
    for elem in topo.cut_elements:
        members_of[int(root_of[elem])].append(int(elem))
    facet_elems = mesh.facet_elems
    for pid, root in enumerate(inside):
        members = np.asarray(sorted(members_of[int(root)]), dtype=np.int64)
        patch_id[members] = pid
        if len(members) > 1:
            member_set = set(members.tolist())
            inner = sorted(
                f
                for f in {int(f) for e in members for f in mesh.elem_facets[e]}
                if facet_elems[f, 1] >= 0
                and int(facet_elems[f, 0]) in member_set
                and int(facet_elems[f, 1]) in member_set
            )
            inner = np.asarray(inner, dtype=np.int64)
        else:
            inner = np.zeros(0, dtype=np.int64)
        patches.append(Patch(root=int(root), members=members, inner_facets=inner))

    decomp = PatchDecomposition(
        patch_id=patch_id,
        patches=tuple(patches),
        n_max=n_max,
        fgp_star=np.zeros(0, dtype=np.int64),
        fgp_min=np.zeros(0, dtype=np.int64),
        bfs_distance=dist,
    )
    fgp_star, fgp_min = facet_sets(mesh, topo, decomp)
    return PatchDecomposition(
        patch_id=patch_id,
        patches=tuple(patches),
        n_max=n_max,
        fgp_star=fgp_star,
        fgp_min=fgp_min,
        bfs_distance=dist,
    )


def facet_sets(mesh, topo, decomp):
    """Global and minimal ghost-penalty facet sets.

    The global set holds every facet between two active elements of which
    at least one is cut; the minimal set is the union of the interior
    facets of all non-trivial patches.
    """
    facets = topo.active_facets
    e0 = mesh.facet_elems[facets, 0]
    e1 = mesh.facet_elems[facets, 1]
    has_cut = (topo.elem_class[e0] == cutgeom.CUT) | (
        topo.elem_class[e1] == cutgeom.CUT
    )
    fgp_star = facets[has_cut]
    inner = sorted(
        {int(f) for p in decomp.patches if not p.trivial for f in p.inner_facets}
    )
    return fgp_star, np.asarray(inner, dtype=np.int64)


@dataclass(frozen=True)
class AggregatedElement:
    members: np.ndarray
    centroid: np.ndarray
    diameter: float


def aggregate_mesh(mesh, decomp):
    """Aggregated elements (one per patch) with centroid and diameter.

    The background mesh is never rebuilt; aggregation is realised
    algebraically by the embedding. This list only reports geometry.
    """
    aggregates = []
    for patch in decomp.patches:
        areas = mesh.areas[patch.members]
        centroid = (mesh.centroids[patch.members] * areas[:, None]).sum(0) / areas.sum()
        verts = mesh.vertices[np.unique(mesh.triangles[patch.members])]
        diff = verts[:, None, :] - verts[None, :, :]
        diameter = float(np.sqrt((diff**2).sum(-1)).max())
        aggregates.append(
            AggregatedElement(
                members=patch.members, centroid=centroid, diameter=diameter
            )
        )
    return aggregates


def write_patch_csv(mesh, topo, decomp, stream):
    """Debug dump: one line per active element."""
    class_names = {cutgeom.INSIDE: "inside", cutgeom.CUT: "cut"}
    stream.write("element_id,patch_id,root_id,class\n")
    for elem in topo.active_elements:
        pid = decomp.patch_id[elem]
        root = decomp.patches[pid].root
        stream.write(
            f"{elem},{pid},{root},{class_names[int(topo.elem_class[elem])]}\n"
        )
