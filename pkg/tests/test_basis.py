import numpy as np
import pytest

from cutdg import cutgeom
from cutdg.basis import DgSpace, monomial_exponents, space_dimension
from cutdg.cutgeom import LevelSet, classify, levelset_by_name
from cutdg.mesh import build_structured_mesh


@pytest.fixture(scope="module")
def ring8():
    mesh = build_structured_mesh((-1.0, -1.0, 1.0, 1.0), 8)
    topo = classify(mesh, levelset_by_name("ring"))
    return mesh, topo


def test_dimensions():
    for k in range(7):
        assert space_dimension(k) == (k + 1) * (k + 2) // 2
    assert space_dimension(-1) == 0
    assert space_dimension(-2) == 0


def test_monomial_order_k2():
    exps = monomial_exponents(2)
    assert exps.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]


def test_degree_bounds(ring8):
    mesh, topo = ring8
    with pytest.raises(ValueError):
        DgSpace(mesh, topo, 7)
    with pytest.raises(ValueError):
        DgSpace(mesh, topo, -1)


def test_global_dof_layout(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 3)
    assert space.n_dofs == 10 * topo.n_active
    offs = [space.offset(e) for e in topo.active_elements]
    assert offs == sorted(offs)
    assert offs[0] == 0 and offs[-1] == space.n_dofs - 10
    outside = int(np.flatnonzero(topo.elem_class == cutgeom.OUTSIDE)[0])
    with pytest.raises(ValueError):
        space.offset(outside)


def test_constant_mode(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 3)
    elem = topo.active_elements[0]
    coeffs = np.zeros(space.n_local)
    coeffs[0] = 1.0
    for point in ([0.0, 0.0], [2.0, -3.0]):
        val, grad, lap = space.eval(elem, coeffs, point)
        assert val == 1.0
        assert np.all(grad == 0.0)
        assert lap == 0.0


def test_harmonic_polynomial_laplacian(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 2)
    elem = topo.active_elements[4]
    c = mesh.centroids[elem]
    h = mesh.h_t[elem]
    # x^2 - y^2 in scaled coordinates: expand (c + h*xh)^2 - (c + h*yh)^2.
    coeffs = np.zeros(6)
    coeffs[0] = c[0] ** 2 - c[1] ** 2
    coeffs[1] = 2.0 * c[0] * h
    coeffs[2] = -2.0 * c[1] * h
    coeffs[3] = h**2
    coeffs[5] = -(h**2)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(10, 2))
    for p in pts:
        val, grad, lap = space.eval(elem, coeffs, p)
        assert val == pytest.approx(p[0] ** 2 - p[1] ** 2, rel=1e-12, abs=1e-12)
        assert lap == pytest.approx(0.0, abs=1e-12)


def test_gradient_matches_finite_differences(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 4)
    elem = topo.active_elements[7]
    rng = np.random.default_rng(11)
    coeffs = rng.standard_normal(space.n_local)
    h = mesh.h_t[elem]
    step = 1e-6 * h
    centre = mesh.centroids[elem]
    for _ in range(20):
        p = centre + rng.uniform(-0.5, 0.5, size=2) * h
        _, grad, _ = space.eval(elem, coeffs, p)
        for d in range(2):
            e = np.zeros(2)
            e[d] = step
            vp, _, _ = space.eval(elem, coeffs, p + e)
            vm, _, _ = space.eval(elem, coeffs, p - e)
            fd = (vp - vm) / (2.0 * step)
            assert grad[d] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_laplacian_matrix_k1_empty(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 1)
    elem = topo.active_elements[0]
    assert space.laplacian_matrix(elem).shape == (0, 3)


def test_laplacian_matrix_k2_row(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 2)
    elem = topo.active_elements[0]
    h = mesh.h_t[elem]
    row = space.laplacian_matrix(elem)
    assert row.shape == (1, 6)
    assert np.allclose(row * h**2, [[0, 0, 0, 2, 0, 2]])


def test_laplacian_matrix_rank(ring8):
    mesh, topo = ring8
    for k in range(2, 6):
        space = DgSpace(mesh, topo, k)
        c_mat = space.laplacian_matrix(topo.active_elements[0])
        rank = np.linalg.matrix_rank(c_mat)
        assert rank == k * (k - 1) // 2
        # kernel dimension 2k+1
        assert c_mat.shape[1] - rank == 2 * k + 1


def test_laplacian_consistency_with_eval(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 5)
    elem = topo.active_elements[3]
    rng = np.random.default_rng(5)
    coeffs = rng.standard_normal(space.n_local)
    c_mat = space.laplacian_matrix(elem)
    lap_coeffs = c_mat @ coeffs
    sub = DgSpace(mesh, topo, 3)
    pts = mesh.centroids[elem] + rng.uniform(-0.4, 0.4, size=(10, 2)) * mesh.h_t[elem]
    for p in pts:
        _, _, lap = space.eval(elem, coeffs, p)
        val, _, _ = sub.eval(elem, lap_coeffs, p)
        assert lap == pytest.approx(val, rel=1e-12, abs=1e-10)


def test_translation_invariance():
    # The same element translated far away gives identical local values.
    mesh_a = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1)
    mesh_b = build_structured_mesh((100.0, -50.0, 101.0, -49.0), 1)
    ls = LevelSet(lambda p: np.full(p.shape[0], -1.0))
    topo_a = classify(mesh_a, ls)
    topo_b = classify(mesh_b, ls)
    sa = DgSpace(mesh_a, topo_a, 4)
    sb = DgSpace(mesh_b, topo_b, 4)
    rng = np.random.default_rng(9)
    coeffs = rng.standard_normal(sa.n_local)
    for _ in range(10):
        local = rng.uniform(0.0, 0.4, size=2)
        va, ga, la = sa.eval(0, coeffs, local)
        vb, gb, lb = sb.eval(0, coeffs, local + [100.0, -50.0])
        assert vb == pytest.approx(va, rel=1e-13, abs=1e-13)
        assert np.allclose(gb, ga, rtol=1e-12, atol=1e-12)
        assert lb == pytest.approx(la, rel=1e-12, abs=1e-10)


def test_mass_matrix_conditioning(ring8):
    # Monomials scaled by the full diameter span only ~half the unit
    # triangle, so the Gram condition grows ~16^k: measured 1.1e8 at k=4,
    # 1.4e10 at k=5, 1.8e12 at k=6. Linear independence (the property this
    # guards) holds in double precision throughout k <= 6.
    mesh, topo = ring8
    elem = topo.active_elements[0]
    coords = mesh.element_coords(elem)
    for k in range(7):
        space = DgSpace(mesh, topo, k)
        pts, w = cutgeom._mapped_triangle_rule(coords, 2 * k + 2)
        phi = space.tabulate_values(elem, pts)
        mass = phi.T @ (phi * w[:, None])
        cond = np.linalg.cond(mass)
        if k <= 3:
            assert cond < 1e8
        else:
            assert cond < 1e13
        np.linalg.cholesky(mass)


def test_interpolation_reproduces_polynomial(ring8):
    mesh, topo = ring8
    space = DgSpace(mesh, topo, 3)
    target = lambda p: p[:, 0] ** 3 - 3.0 * p[:, 0] * p[:, 1] ** 2
    coeffs = space.interpolate_function(target)
    elem = topo.active_elements[10]
    p = mesh.centroids[elem] + 0.03
    val, _, _ = space.eval(elem, coeffs[space.global_dofs(elem)], p)
    assert val == pytest.approx(p[0] ** 3 - 3 * p[0] * p[1] ** 2, rel=1e-11)
