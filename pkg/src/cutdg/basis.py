"""Element-local polynomial bases and dof bookkeeping for the DG space.

Basis functions are monomials in the locally scaled coordinates
(x - c_T) / h_T about the element centroid, ordered by total degree
(1, x, y, x^2, xy, y^2, ...). Because they are plain world-coordinate
polynomials, evaluating them outside their element is the canonical
polynomial extension used by the direct ghost penalty; no separate
extension operator is needed. Monomials of degree <= m are a prefix of the
list, so the degree-(k-2) test space reuses the same tabulation.
"""

import numpy as np

MAX_DEGREE = 6


def space_dimension(k):
    """dim of polynomials of total degree <= k in 2D; 0 for negative k."""
    if k < 0:
        return 0
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k):
    """(N, 2) exponent pairs in graded order."""
    exps = [(d - i, i) for d in range(k + 1) for i in range(d + 1)]
    return np.asarray(exps, dtype=np.int64).reshape(-1, 2)


def _monomial_index(a, b):
    d = a + b
    return d * (d + 1) // 2 + b


class DgSpace:
    """Discontinuous polynomial space of degree k on the active mesh.

    Dofs are blocked per active element, in the order of
    topo.active_elements; offset() maps an element id to the start of its
    coefficient block.
    """

    def __init__(self, mesh, topo, k):
        if not 0 <= k <= MAX_DEGREE:
            raise ValueError(f"polynomial degree must be in 0..{MAX_DEGREE}")
        self.mesh = mesh
        self.topo = topo
        self.k = k
        self.exponents = monomial_exponents(k)
        self.n_local = space_dimension(k)
        self.n_dofs = self.n_local * topo.n_active

    def offset(self, elem):
        idx = self.topo.active_index[elem]
        if idx < 0:
            raise ValueError(f"element {elem} is not active")
        return int(idx) * self.n_local

    def global_dofs(self, elem):
        off = self.offset(elem)
        return np.arange(off, off + self.n_local)

    def _local_coords(self, elem, points):
        c = self.mesh.centroids[elem]
        h = self.mesh.h_t[elem]
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - c) / h, h

    def tabulate(self, elem, points):
        """Values and first derivatives of all basis functions.

        Returns (phi, dx, dy), each of shape (n_points, n_local). Points may
        lie outside the element (canonical extension).
        """
        loc, h = self._local_coords(elem, points)
        xp = np.power.outer(loc[:, 0], np.arange(self.k + 1))
        yp = np.power.outer(loc[:, 1], np.arange(self.k + 1))
        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        phi = xp[:, a] * yp[:, b]
        dx = np.where(a > 0, a, 0) * xp[:, np.maximum(a - 1, 0)] * yp[:, b] / h
        dy = np.where(b > 0, b, 0) * xp[:, a] * yp[:, np.maximum(b - 1, 0)] / h
        return phi, dx, dy

    def tabulate_values(self, elem, points):
        loc, _ = self._local_coords(elem, points)
        xp = np.power.outer(loc[:, 0], np.arange(self.k + 1))
        yp = np.power.outer(loc[:, 1], np.arange(self.k + 1))
        return xp[:, self.exponents[:, 0]] * yp[:, self.exponents[:, 1]]

    def tabulate_laplacian(self, elem, points):
        """(n_points, n_local) Laplacians of the basis functions."""
        c_mat = self.laplacian_matrix(elem)
        if c_mat.shape[0] == 0:
            return np.zeros((np.atleast_2d(points).shape[0], self.n_local))
        loc, _ = self._local_coords(elem, points)
        xp = np.power.outer(loc[:, 0], np.arange(self.k + 1))
        yp = np.power.outer(loc[:, 1], np.arange(self.k + 1))
        sub = self.exponents[: c_mat.shape[0]]
        psi = xp[:, sub[:, 0]] * yp[:, sub[:, 1]]
        return psi @ c_mat

    def eval(self, elem, coeffs, point):
        """Value, gradient and Laplacian of a local polynomial at one point."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_local,):
            raise ValueError("coefficient vector has wrong length")
        phi, dx, dy = self.tabulate(elem, point)
        lap = self.tabulate_laplacian(elem, point)
        grad = np.array([dx[0] @ coeffs, dy[0] @ coeffs])
        return float(phi[0] @ coeffs), grad, float(lap[0] @ coeffs)

    def laplacian_matrix(self, elem):
        """Coefficient matrix of the Laplacian in the scaled monomial bases.

        Row r gives the degree-(k-2) coefficients of the Laplacian of basis
        function j; entries are integers scaled by 1/h_T^2. Empty for k <= 1.
        """
        n_rows = space_dimension(self.k - 2)
        c_mat = np.zeros((n_rows, self.n_local))
        if n_rows == 0:
            return c_mat
        h = self.mesh.h_t[elem]
        for j, (a, b) in enumerate(self.exponents):
            if a >= 2:
                c_mat[_monomial_index(a - 2, b), j] += a * (a - 1)
            if b >= 2:
                c_mat[_monomial_index(a, b - 2), j] += b * (b - 1)
        return c_mat / h**2

    def interpolate_function(self, func):
        """Element-wise L2 projection of a function onto the space.

        Uses full-triangle quadrature, so a global polynomial of degree <= k
        is reproduced exactly (up to conditioning). Handy for patch tests.
        """
        from . import cutgeom

        coeffs = np.zeros(self.n_dofs)
        for elem in self.topo.active_elements:
            coords = self.mesh.element_coords(elem)
            pts, w = cutgeom._mapped_triangle_rule(coords, 2 * self.k + 2)
            phi = self.tabulate_values(elem, pts)
            mass = phi.T @ (phi * w[:, None])
            rhs = phi.T @ (w * func(pts))
            off = self.offset(elem)
            coeffs[off : off + self.n_local] = np.linalg.solve(mass, rhs)
        return coeffs
