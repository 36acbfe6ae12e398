"""Assembly of the DG forms into sparse systems.

The symmetric interior-penalty form with Nitsche boundary terms, the
direct (patch-jump) ghost penalty, and the upwind convection form are each
assembled into their own sparse contribution; callers combine them by
plain matrix arithmetic and optionally push the result through an
embedding. Assembly is serial and bit-reproducible.
"""

import sys
from dataclasses import dataclass, field

import numpy as np

from . import cutgeom
from .linalg import csr_from_coo


@dataclass
class FormParams:
    """Discretisation parameters.

    beta defaults to 10 k^2 (interior penalty / Nitsche), gamma to 0.01
    (ghost penalty). In aggregation mode the ghost penalty never enters the
    system matrix, it is only used to build the embedding.
    """

    k: int
    beta: float = None
    gamma: float = 0.01
    alpha: float = 1.0
    stab: str = "gp"
    space: str = "dg"
    quad_order: int = None

    def __post_init__(self):
        if self.beta is None:
            self.beta = 10.0 * self.k**2
        if self.quad_order is None:
            self.quad_order = 2 * self.k + 2
        if self.beta <= 0.0:
            raise ValueError("penalty beta must be positive")
        if self.gamma < 0.0:
            raise ValueError("ghost penalty gamma must be non-negative")
        if self.stab not in ("gp", "wgp", "agg"):
            raise ValueError(f"unknown stabilisation {self.stab!r}")
        if self.space not in ("dg", "trefftz"):
            raise ValueError(f"unknown space {self.space!r}")


@dataclass
class SparseSystem:
    """Assembled CSR matrix with right-hand side and dof block layout."""

    matrix: object
    rhs: np.ndarray
    blocks: tuple = field(default=())


class _Builder:
    def __init__(self, n):
        self.n = n
        self.rows = []
        self.cols = []
        self.vals = []
        self.rhs = np.zeros(n)

    def add(self, test_dofs, trial_dofs, local):
        self.rows.append(np.repeat(test_dofs, len(trial_dofs)))
        self.cols.append(np.tile(trial_dofs, len(test_dofs)))
        self.vals.append(np.asarray(local, dtype=float).ravel())

    def add_rhs(self, dofs, values):
        self.rhs[dofs] += values

    def build(self, blocks):
        if self.rows:
            rows = np.concatenate(self.rows)
            cols = np.concatenate(self.cols)
            vals = np.concatenate(self.vals)
        else:
            rows = cols = vals = np.zeros(0)
        mat = csr_from_coo(rows, cols, vals, shape=(self.n, self.n))
        return SparseSystem(matrix=mat, rhs=self.rhs, blocks=blocks)


def element_blocks(space):
    """Per-element dof block ranges (for block-Jacobi on the full system)."""
    n = space.n_local
    return tuple((i * n, n) for i in range(space.topo.n_active))


def assemble_A(space, rules, params, boundary_value, outer_dirichlet=None):
    """Diffusion form with interior penalties and Nitsche boundary terms.

    boundary_value is evaluated pointwise on the discrete interface; its
    Nitsche counterparts are accumulated into the right-hand side.
    outer_dirichlet, if given, is called with the quadrature points of each
    rectangle-boundary facet and returns boundary values there or None for
    a natural (Neumann) facet.
    """
    mesh = space.mesh
    topo = space.topo
    beta = params.beta
    builder = _Builder(space.n_dofs)

    for elem in topo.active_elements:
        rule = rules.volume(elem)
        _, dx, dy = space.tabulate(elem, rule.points)
        w = rule.weights[:, None]
        local = dx.T @ (dx * w) + dy.T @ (dy * w)
        dofs = space.global_dofs(elem)
        builder.add(dofs, dofs, local)
        if topo.elem_class[elem] == cutgeom.CUT:
            brule = rules.boundary(elem)
            phi, dx, dy = space.tabulate(elem, brule.points)
            flux = brule.normals[:, 0:1] * dx + brule.normals[:, 1:2] * dy
            w = brule.weights
            pen = beta / mesh.h_t[elem]
            fw = flux * w[:, None]
            pw = phi * w[:, None]
            local = -(fw.T @ phi) - (phi.T @ fw) + pen * (pw.T @ phi)
            builder.add(dofs, dofs, local)
            g = np.asarray(boundary_value(brule.points), dtype=float)
            builder.add_rhs(dofs, -(fw.T @ g) + pen * (pw.T @ g))

    for facet in topo.active_facets:
        rule = rules.facet(facet)
        if rule.n_points == 0:
            continue
        ea, eb = mesh.facet_elems[facet]
        n_f = mesh.facet_normals[facet]
        phi_a, dxa, dya = space.tabulate(ea, rule.points)
        phi_b, dxb, dyb = space.tabulate(eb, rule.points)
        jump = np.hstack([phi_a, -phi_b])
        avg_flux = 0.5 * np.hstack(
            [n_f[0] * dxa + n_f[1] * dya, n_f[0] * dxb + n_f[1] * dyb]
        )
        w = rule.weights[:, None]
        pen = beta / mesh.h_f[facet]
        fw = avg_flux * w
        jw = jump * w
        local = -(fw.T @ jump) - (jump.T @ fw) + pen * (jw.T @ jump)
        dofs = np.concatenate([space.global_dofs(ea), space.global_dofs(eb)])
        builder.add(dofs, dofs, local)

    for facet, elem in cutgeom.interface_facets(mesh, topo):
        rule = cutgeom.facet_segment_rule(mesh, facet, params.quad_order)
        n_f = mesh.facet_normals[facet]
        if mesh.facet_elems[facet, 0] != elem:
            n_f = -n_f
        phi, dx, dy = space.tabulate(elem, rule.points)
        flux = n_f[0] * dx + n_f[1] * dy
        w = rule.weights
        pen = beta / mesh.h_t[elem]
        fw = flux * w[:, None]
        pw = phi * w[:, None]
        local = -(fw.T @ phi) - (phi.T @ fw) + pen * (pw.T @ phi)
        dofs = space.global_dofs(elem)
        builder.add(dofs, dofs, local)
        g = np.asarray(boundary_value(rule.points), dtype=float)
        builder.add_rhs(dofs, -(fw.T @ g) + pen * (pw.T @ g))

    if outer_dirichlet is not None:
        for facet in mesh.boundary_facets():
            elem = mesh.facet_elems[facet, 0]
            if not topo.is_active(elem):
                continue
            rule = rules.facet(facet)
            if rule.n_points == 0:
                continue
            g = outer_dirichlet(rule.points)
            if g is None:
                continue
            g = np.broadcast_to(np.asarray(g, dtype=float), (rule.n_points,))
            n_f = mesh.facet_normals[facet]
            phi, dx, dy = space.tabulate(elem, rule.points)
            flux = n_f[0] * dx + n_f[1] * dy
            w = rule.weights
            pen = beta / mesh.h_f[facet]
            fw = flux * w[:, None]
            pw = phi * w[:, None]
            local = -(fw.T @ phi) - (phi.T @ fw) + pen * (pw.T @ phi)
            dofs = space.global_dofs(elem)
            builder.add(dofs, dofs, local)
            builder.add_rhs(dofs, -(fw.T @ g) + pen * (pw.T @ g))

    return builder.build(element_blocks(space))


def assemble_source(space, rules, source):
    """Right-hand side vector (f, v) over the discrete domain."""
    rhs = np.zeros(space.n_dofs)
    for elem in space.topo.active_elements:
        rule = rules.volume(elem)
        phi = space.tabulate_values(elem, rule.points)
        fvals = np.asarray(source(rule.points), dtype=float)
        rhs[space.global_dofs(elem)] += phi.T @ (rule.weights * fvals)
    return rhs


def ghost_penalty_facet_factor(space, facet):
    """Square-root factor of the direct ghost-penalty block of one facet.

    Rows are the weighted point evaluations of the patch jump (difference
    of the two adjacent polynomials, canonically extended) over both full
    elements, scaled by h_F^-1, so factor.T @ factor is the ghost-penalty
    Gram. The factor has much better numerical rank behaviour than the
    Gram, which matters for the kernel extractions at high degree.
    Returns (dofs, factor) without the gamma scaling.
    """
    mesh = space.mesh
    ea, eb = mesh.facet_elems[facet]
    if eb < 0 or not (space.topo.is_active(ea) and space.topo.is_active(eb)):
        raise ValueError(f"facet {facet} does not join two active elements")
    parts = []
    for elem in (ea, eb):
        coords = mesh.element_coords(elem)
        pts, w = cutgeom._mapped_triangle_rule(coords, 2 * space.k)
        diff = np.hstack(
            [space.tabulate_values(ea, pts), -space.tabulate_values(eb, pts)]
        )
        parts.append(diff * np.sqrt(w)[:, None])
    factor = np.vstack(parts) / mesh.h_f[facet]
    dofs = np.concatenate([space.global_dofs(ea), space.global_dofs(eb)])
    return dofs, factor


def ghost_penalty_facet_block(space, facet):
    """Direct ghost-penalty Gram block of one facet (without gamma)."""
    dofs, factor = ghost_penalty_facet_factor(space, facet)
    return dofs, factor.T @ factor


def assemble_S(space, facet_ids, params):
    """Ghost-penalty stabilisation over the given facet set."""
    builder = _Builder(space.n_dofs)
    for facet in facet_ids:
        dofs, block = ghost_penalty_facet_block(space, facet)
        builder.add(dofs, dofs, params.gamma * block)
    return builder.build(element_blocks(space))


def assemble_W_upwind(space, rules, velocity):
    """Upwind convection form over the discrete domain.

    Element-boundary fluxes take the upstream trace; on inflow parts of the
    outer boundary and of the interface the flux is zero, so prescribed
    inflow data only enters through the Nitsche terms of the diffusion.
    """
    mesh = space.mesh
    topo = space.topo
    builder = _Builder(space.n_dofs)

    for elem in topo.active_elements:
        rule = rules.volume(elem)
        phi, dx, dy = space.tabulate(elem, rule.points)
        wvec = np.atleast_2d(velocity(rule.points))
        conv = wvec[:, 0:1] * dx + wvec[:, 1:2] * dy
        local = -conv.T @ (phi * rule.weights[:, None])
        dofs = space.global_dofs(elem)
        builder.add(dofs, dofs, local)
        if topo.elem_class[elem] == cutgeom.CUT:
            brule = rules.boundary(elem)
            phi = space.tabulate_values(elem, brule.points)
            wn = np.einsum(
                "ij,ij->i", np.atleast_2d(velocity(brule.points)), brule.normals
            )
            scale = brule.weights * np.maximum(wn, 0.0)
            builder.add(dofs, dofs, phi.T @ (phi * scale[:, None]))

    for facet in topo.active_facets:
        rule = rules.facet(facet)
        if rule.n_points == 0:
            continue
        ea, eb = mesh.facet_elems[facet]
        n_f = mesh.facet_normals[facet]
        phi_a = space.tabulate_values(ea, rule.points)
        phi_b = space.tabulate_values(eb, rule.points)
        wn = np.atleast_2d(velocity(rule.points)) @ n_f
        upwind = np.where(wn[:, None] >= 0.0, 1.0, 0.0)
        trial = np.hstack([phi_a * upwind, phi_b * (1.0 - upwind)])
        jump = np.hstack([phi_a, -phi_b])
        local = jump.T @ (trial * (rule.weights * wn)[:, None])
        dofs = np.concatenate([space.global_dofs(ea), space.global_dofs(eb)])
        builder.add(dofs, dofs, local)

    for facet in mesh.boundary_facets():
        elem = mesh.facet_elems[facet, 0]
        if not topo.is_active(elem):
            continue
        rule = rules.facet(facet)
        if rule.n_points == 0:
            continue
        phi = space.tabulate_values(elem, rule.points)
        wn = np.atleast_2d(velocity(rule.points)) @ mesh.facet_normals[facet]
        scale = rule.weights * np.maximum(wn, 0.0)
        dofs = space.global_dofs(elem)
        builder.add(dofs, dofs, phi.T @ (phi * scale[:, None]))

    for facet, elem in cutgeom.interface_facets(mesh, topo):
        rule = cutgeom.facet_segment_rule(mesh, facet, 2 * space.k + 2)
        n_f = mesh.facet_normals[facet]
        if mesh.facet_elems[facet, 0] != elem:
            n_f = -n_f
        phi = space.tabulate_values(elem, rule.points)
        wn = np.atleast_2d(velocity(rule.points)) @ n_f
        scale = rule.weights * np.maximum(wn, 0.0)
        dofs = space.global_dofs(elem)
        builder.add(dofs, dofs, phi.T @ (phi * scale[:, None]))

    return builder.build(element_blocks(space))


def reduce_system(system, emb):
    """Congruence reduction T^T B T with reduced right-hand side."""
    if emb.n_full != system.matrix.shape[0]:
        raise ValueError("embedding size does not match the system")
    t_mat = emb.as_sparse()
    reduced = (t_mat.T @ system.matrix @ t_mat).tocsr()
    reduced.sum_duplicates()
    reduced.sort_indices()
    return SparseSystem(
        matrix=reduced,
        rhs=emb.apply_transpose(system.rhs),
        blocks=tuple(emb.reduced_blocks()),
    )


def homogenize_rhs(system, emb, u_f):
    """Reduced right-hand side T^T (l - B u_f) for the homogenised solve."""
    return emb.apply_transpose(system.rhs - system.matrix @ u_f)


def write_matrix_text(mat, stream=sys.stdout):
    """Dump a sparse matrix in 'i j value' coordinate text format."""
    coo = mat.tocoo()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{i} {j} {float(v)!r}\n")
