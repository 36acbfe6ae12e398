"""Block-diagonal embeddings of reduced ansatz spaces into the DG space.

Each reduced space (harmonic polynomials, aggregated polynomials, their
combination, and the weak variant for convection-diffusion) is realised as
the numerical kernel of a block-local constraint operator on the standard
DG coefficients. The kernel basis is extracted per block with an SVD and
collected into a tall map T with orthonormal columns; the reduced system is
then T^T B T. The same SVD machinery provides minimal-norm particular
solutions of the element-wise source constraint.
"""

from dataclasses import dataclass

import numpy as np

from . import basis as basis_mod
from .linalg import jacobi_svd

RANK_TOL = 1e-10


class InconsistentStabilisationError(Exception):
    """A patch-local kernel has unexpected dimension; the patch or its
    facet set is broken."""


class DegenerateOperatorError(Exception):
    """The element-local PDE constraint lost rank for this velocity field."""


class UnrepresentableSourceError(Exception):
    """A nonzero source cannot be represented at this polynomial degree."""


@dataclass(frozen=True)
class EmbeddingMap:
    """Orthonormal block map from reduced to DG coefficients.

    groups is a tuple of (dofs, block): the DG dof indices covered by the
    block and the dense (len(dofs) x m_b) matrix with orthonormal columns.
    Reduced dofs are blocked in group order.
    """

    n_full: int
    groups: tuple

    @property
    def n_reduced(self):
        return sum(block.shape[1] for _, block in self.groups)

    def reduced_blocks(self):
        """(start, size) ranges of the reduced dof blocks."""
        ranges = []
        off = 0
        for _, block in self.groups:
            ranges.append((off, block.shape[1]))
            off += block.shape[1]
        return ranges

    def apply(self, reduced):
        """T x: reduced coefficients to DG coefficients."""
        out = np.zeros(self.n_full)
        off = 0
        for dofs, block in self.groups:
            m = block.shape[1]
            out[dofs] = block @ reduced[off : off + m]
            off += m
        return out

    def apply_transpose(self, full):
        """T^T x: project DG coefficients to the reduced side."""
        out = np.empty(self.n_reduced)
        off = 0
        for dofs, block in self.groups:
            m = block.shape[1]
            out[off : off + m] = block.T @ full[dofs]
            off += m
        return out

    def as_sparse(self):
        import scipy.sparse as sp

        rows = []
        cols = []
        vals = []
        off = 0
        for dofs, block in self.groups:
            m = block.shape[1]
            rows.append(np.repeat(dofs, m))
            cols.append(np.tile(np.arange(off, off + m), len(dofs)))
            vals.append(block.ravel())
            off += m
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_full, self.n_reduced),
        ).tocsr()


def identity_embedding(n):
    """Trivial embedding, useful as the no-reduction case."""
    eye = np.eye(n)
    return EmbeddingMap(n_full=n, groups=((np.arange(n), eye),))


def kernel_basis(constraint, rank_tol=RANK_TOL):
    """Orthonormal basis of the numerical kernel of a dense constraint.

    Columns of the result span {x : C x = 0} with the rank cut at singular
    values <= rank_tol * sigma_max. An all-zero (or empty) constraint
    returns the identity basis.
    """
    constraint = np.asarray(constraint, dtype=float)
    n = constraint.shape[1]
    if constraint.shape[0] == 0 or not np.any(constraint):
        return np.eye(n)
    _, sigma, vt = jacobi_svd(constraint)
    keep = sigma <= rank_tol * sigma[0]
    return vt[keep].T


def trefftz_embedding(space):
    """Embedding of element-wise harmonic polynomials, k >= 1.

    The Laplacian constraint matrix has the same integer structure on every
    element, so its kernel is computed once and shared.
    """
    if space.k < 1:
        raise ValueError("Trefftz embedding needs polynomial degree k >= 1")
    topo = space.topo
    kernels = {}
    groups = []
    for elem in topo.active_elements:
        h = float(space.mesh.h_t[elem])
        block = kernels.get(round(h, 14))
        if block is None:
            block = kernel_basis(space.laplacian_matrix(elem))
            block.setflags(write=False)
            kernels[round(h, 14)] = block
        groups.append((space.global_dofs(elem), block))
    return EmbeddingMap(n_full=space.n_dofs, groups=tuple(groups))


def _patch_gp_factor(space, patch, ghost_penalty_local):
    """Stacked ghost-penalty jump factor over the inner facets of a patch.

    ghost_penalty_local(facet) returns (dofs, factor) with factor.T@factor
    the facet's ghost-penalty Gram; the stacked factor has the patch Gram
    as its own Gram, hence the same kernel with better-behaved singular
    values.
    """
    n = space.n_local * len(patch.members)
    dofs = np.concatenate([space.global_dofs(e) for e in patch.members])
    pos = {int(d): i for i, d in enumerate(dofs)}
    rows = []
    for facet in patch.inner_facets:
        fdofs, factor = ghost_penalty_local(facet)
        spread = np.zeros((factor.shape[0], n))
        idx = np.asarray([pos[int(d)] for d in fdofs])
        spread[:, idx] = factor
        rows.append(spread)
    return dofs, np.vstack(rows)


def aggregation_embedding(space, decomp, ghost_penalty_local):
    """Embedding of per-patch global polynomials (algebraic aggregation).

    ghost_penalty_local(facet) must return the facet-patch jump factor
    (whose Gram is the ghost-penalty block) together with its DG dofs; the
    kernel of the stacked patch operator is one polynomial per aggregate,
    hence has dimension n_local for every patch.
    """
    eye = np.eye(space.n_local)
    groups = []
    for patch in decomp.patches:
        if patch.trivial:
            groups.append((space.global_dofs(patch.root), eye))
            continue
        dofs, factor = _patch_gp_factor(space, patch, ghost_penalty_local)
        block = kernel_basis(factor)
        if block.shape[1] != space.n_local:
            raise InconsistentStabilisationError(
                f"patch rooted at {patch.root}: kernel dimension "
                f"{block.shape[1]} != {space.n_local}"
            )
        groups.append((dofs, block))
    return EmbeddingMap(n_full=space.n_dofs, groups=tuple(groups))


def aggregated_trefftz_embedding(space, decomp, ghost_penalty_local):
    """Embedding of patch-wise harmonic polynomials.

    Stacks the patch ghost-penalty Gram with the members' Laplacian
    constraint blocks; the kernel has dimension 2k+1 per patch.
    """
    if space.k < 1:
        raise ValueError("Trefftz embedding needs polynomial degree k >= 1")
    target = 2 * space.k + 1
    n_loc = space.n_local
    groups = []
    trefftz_blocks = {}
    for patch in decomp.patches:
        if patch.trivial:
            elem = patch.root
            h = round(float(space.mesh.h_t[elem]), 14)
            block = trefftz_blocks.get(h)
            if block is None:
                block = kernel_basis(space.laplacian_matrix(elem))
                trefftz_blocks[h] = block
            groups.append((space.global_dofs(elem), block))
            continue
        dofs, factor = _patch_gp_factor(space, patch, ghost_penalty_local)
        m = len(patch.members)
        n_lap = basis_mod.space_dimension(space.k - 2)
        lap = np.zeros((m * n_lap, m * n_loc))
        for i, elem in enumerate(patch.members):
            lap[i * n_lap : (i + 1) * n_lap, i * n_loc : (i + 1) * n_loc] = (
                space.laplacian_matrix(elem)
            )
        block = kernel_basis(np.vstack([factor, lap]))
        if block.shape[1] != target:
            raise InconsistentStabilisationError(
                f"patch rooted at {patch.root}: kernel dimension "
                f"{block.shape[1]} != {target}"
            )
        groups.append((dofs, block))
    return EmbeddingMap(n_full=space.n_dofs, groups=tuple(groups))


def weak_trefftz_cd_embedding(space, alpha, velocity, quad_order=None):
    """Embedding for the convection-diffusion operator -alpha*Lap + w.grad.

    Per element, the constraint row r tests the operator applied to basis
    function j against the r-th degree-(k-2) monomial over the full element;
    the kernel generalises harmonic polynomials and keeps dimension 2k+1.
    """
    if space.k < 2:
        raise ValueError("weak Trefftz embedding needs polynomial degree k >= 2")
    from . import cutgeom

    if quad_order is None:
        quad_order = 2 * space.k + 2
    target = 2 * space.k + 1
    n_test = basis_mod.space_dimension(space.k - 2)
    groups = []
    for elem in space.topo.active_elements:
        coords = space.mesh.element_coords(elem)
        pts, w = cutgeom._mapped_triangle_rule(coords, quad_order)
        phi, dx, dy = space.tabulate(elem, pts)
        lap = space.tabulate_laplacian(elem, pts)
        wvec = np.atleast_2d(velocity(pts))
        op = -alpha * lap + wvec[:, 0:1] * dx + wvec[:, 1:2] * dy
        constraint = phi[:, :n_test].T @ (op * w[:, None])
        block = kernel_basis(constraint)
        if block.shape[1] != target:
            raise DegenerateOperatorError(
                f"element {elem}: weak Trefftz kernel dimension "
                f"{block.shape[1]} != {target}"
            )
        groups.append((space.global_dofs(elem), block))
    return EmbeddingMap(n_full=space.n_dofs, groups=tuple(groups))


def particular_solution(space, rules, source, volume="cut"):
    """Element-wise minimal-norm particular solution of Lap(u) = source.

    The source is projected onto the degree-(k-2) polynomials of each
    element (by default over the cut part T n Omega_h, switchable to the
    full element) and lifted through the pseudoinverse of the Laplacian
    constraint. Returns a DG coefficient vector.
    """
    if volume not in ("cut", "full"):
        raise ValueError("volume must be 'cut' or 'full'")
    from . import cutgeom

    n_test = basis_mod.space_dimension(space.k - 2)
    u_f = np.zeros(space.n_dofs)
    svd_cache = {}
    for elem in space.topo.active_elements:
        if volume == "cut":
            rule = rules.volume(elem)
            pts, w = rule.points, rule.weights
        else:
            coords = space.mesh.element_coords(elem)
            pts, w = cutgeom._mapped_triangle_rule(coords, 2 * space.k + 2)
        fvals = np.asarray(source(pts), dtype=float)
        if n_test == 0:
            if np.any(fvals != 0.0):
                raise UnrepresentableSourceError(
                    "source is nonzero but the Laplacian of the ansatz space "
                    f"is trivial at degree k={space.k}"
                )
            continue
        phi = space.tabulate_values(elem, pts)[:, :n_test]
        mass = phi.T @ (phi * w[:, None])
        moments = phi.T @ (w * fvals)
        proj, *_ = np.linalg.lstsq(mass, moments, rcond=None)

        h = round(float(space.mesh.h_t[elem]), 14)
        svd = svd_cache.get(h)
        if svd is None:
            svd = jacobi_svd(space.laplacian_matrix(elem))
            svd_cache[h] = svd
        u_mat, sigma, vt = svd
        keep = sigma > RANK_TOL * sigma[0]
        coeffs = vt[keep].T @ ((u_mat[:, keep].T @ proj) / sigma[keep])
        off = space.offset(elem)
        u_f[off : off + space.n_local] = coeffs
    return u_f
