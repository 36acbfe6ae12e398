"""Dense and sparse linear algebra kernels.

Dense matrices are plain numpy arrays; sparse matrices are scipy CSR built
from COO triplets. The one nonstandard piece is a one-sided Jacobi SVD for
the small block-local kernel extractions, where we want explicit control
over the treatment of tiny singular values. Krylov solvers (CG, BiCGStab)
are hand-rolled so that serial runs are bit-reproducible.
"""

import math

import numpy as np
import scipy.sparse as sp
import scipy.linalg


class NumericalError(Exception):
    """An algorithm failed to produce a usable result."""


class NonConvergenceError(NumericalError):
    """Iterative solve exceeded its iteration budget.

    Carries the relative residual reached when the budget ran out.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def jacobi_svd(a, max_sweeps=1000, off_tol=1e-14):
    """One-sided Jacobi SVD of a small dense matrix.

    Returns (u, s, vt) with a = u @ diag(s) @ vt, s non-negative and
    descending. u has shape (m, n), s shape (n,), vt shape (n, n): for wide
    or rank-deficient inputs the trailing singular values are zero and the
    matching columns of u are zero vectors. vt is always a full orthogonal
    basis, so the numerical kernel is directly readable from its rows.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2D array")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries in SVD input")
    m, n = a.shape
    w = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi = w[:, i]
                wj = w[:, j]
                d = wi @ wj
                ni = wi @ wi
                nj = wj @ wj
                denom = math.sqrt(ni * nj)
                if denom == 0.0 or abs(d) <= off_tol * denom:
                    continue
                rotated = True
                tau = (nj - ni) / (2.0 * d)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                w[:, i], w[:, j] = c * wi - s * wj, s * wi + c * wj
                v[:, i], v[:, j] = c * v[:, i] - s * v[:, j], s * v[:, i] + c * v[:, j]
        if not rotated:
            break
    else:
        raise NumericalError(
            f"one-sided Jacobi SVD did not converge within {max_sweeps} sweeps"
        )
    sigma = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    w = w[:, order]
    v = v[:, order]
    u = np.zeros_like(w)
    nonzero = sigma > 0.0
    u[:, nonzero] = w[:, nonzero] / sigma[nonzero]
    return u, sigma, v.T


def csr_from_coo(rows, cols, vals, shape, prune_tol=1e-300):
    """Assemble CSR from COO triplets, summing duplicates.

    Entries whose magnitude falls below prune_tol after summation are
    dropped; column indices come out sorted.
    """
    mat = sp.coo_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
        shape=shape,
    ).tocsr()
    mat.sum_duplicates()
    mat.data[np.abs(mat.data) < prune_tol] = 0.0
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


class BlockJacobi:
    """Block-diagonal preconditioner with dense-inverted blocks.

    blocks is a sequence of (start, size) ranges covering 0..n contiguously.
    Blocks of equal size are batched, so applying the preconditioner costs a
    handful of numpy calls regardless of block count.
    """

    def __init__(self, mat, blocks):
        mat = mat.tocsr()
        self._n = mat.shape[0]
        self._groups = []
        by_size = {}
        for start, size in blocks:
            by_size.setdefault(size, []).append(start)
        for size in sorted(by_size):
            starts = np.asarray(by_size[size], dtype=np.int64)
            dense = np.empty((len(starts), size, size))
            for b, s0 in enumerate(starts):
                dense[b] = mat[s0 : s0 + size, s0 : s0 + size].toarray()
            inv = np.linalg.inv(dense)
            idx = starts[:, None] + np.arange(size)[None, :]
            self._groups.append((idx, inv))

    def apply(self, r):
        z = np.empty_like(r)
        for idx, inv in self._groups:
            z[idx] = np.einsum("bij,bj->bi", inv, r[idx])
        return z


class _IdentityPrecond:
    def apply(self, r):
        return r


def solve_cg(mat, b, tol=1e-10, maxit=20000, precond=None):
    """Preconditioned conjugate gradients for SPD systems.

    Starts from x0 = 0 and stops at relative residual ||b - A x|| <= tol*||b||.
    Returns (x, iterations). Raises NonConvergenceError past maxit.
    """
    b = np.asarray(b, dtype=float)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b), 0
    if precond is None:
        precond = _IdentityPrecond()
    x = np.zeros_like(b)
    r = b.copy()
    z = precond.apply(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        ap = mat @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * norm_b:
            return x, it
        z = precond.apply(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergenceError(
        f"CG did not reach tol={tol:g} within {maxit} iterations",
        np.linalg.norm(r) / norm_b,
    )


def solve_bicgstab(mat, b, tol=1e-10, maxit=20000, precond=None):
    """Preconditioned BiCGStab for general (nonsymmetric) systems.

    Same contract as solve_cg; used for the convection-diffusion systems.
    """
    b = np.asarray(b, dtype=float)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b), 0
    if precond is None:
        precond = _IdentityPrecond()
    x = np.zeros_like(b)
    r = b.copy()
    r_hat = r.copy()
    rho = 1.0
    alpha = 1.0
    omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, maxit + 1):
        rho_new = r_hat @ r
        if rho_new == 0.0:
            raise NumericalError("BiCGStab breakdown: rho = 0")
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        p_hat = precond.apply(p)
        v = mat @ p_hat
        denom = r_hat @ v
        if denom == 0.0:
            raise NumericalError("BiCGStab breakdown: r_hat . v = 0")
        alpha = rho_new / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= tol * norm_b:
            x += alpha * p_hat
            return x, it
        s_hat = precond.apply(s)
        t = mat @ s_hat
        tt = t @ t
        if tt == 0.0:
            raise NumericalError("BiCGStab breakdown: t = 0")
        omega = (t @ s) / tt
        x += alpha * p_hat + omega * s_hat
        r = s - omega * t
        if np.linalg.norm(r) <= tol * norm_b:
            return x, it
        rho = rho_new
    raise NonConvergenceError(
        f"BiCGStab did not reach tol={tol:g} within {maxit} iterations",
        np.linalg.norm(r) / norm_b,
    )


def solve_refined(mat, b, tol=1e-10, maxit=20000, precond=None,
                  solver=solve_cg, refinements=1):
    """Krylov solve plus iterative refinement.

    The refinement residual is computed in extended precision, which lifts
    the attainable accuracy well below the conditioning floor of a single
    double-precision solve; one step is enough to reach discretisation
    accuracy for the high-order runs.
    """
    x, iters = solver(mat, b, tol=tol, maxit=maxit, precond=precond)
    if refinements > 0:
        mat_ld = mat.astype(np.longdouble)
        b_ld = b.astype(np.longdouble)
        for _ in range(refinements):
            residual = np.asarray(b_ld - mat_ld @ x.astype(np.longdouble),
                                  dtype=float)
            delta, more = solver(mat, residual, tol=tol, maxit=maxit,
                                 precond=precond)
            x = x + delta
            iters += more
    return x, iters


def dense_solve(mat, b, max_size=2000):
    """Direct dense solve of a sparse system; cross-check path for tests."""
    n = mat.shape[0]
    if n > max_size:
        raise ValueError(f"dense fallback limited to {max_size} unknowns, got {n}")
    return scipy.linalg.solve(mat.toarray(), np.asarray(b, dtype=float))
