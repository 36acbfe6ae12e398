import math

import numpy as np
import pytest

from cutdg import cutgeom
from cutdg.cutgeom import (
    CUT,
    INSIDE,
    OUTSIDE,
    DegenerateGeometryError,
    LevelSet,
    boundary_rule,
    classify,
    cut_facet_rule,
    cut_volume_rule,
    levelset_by_name,
)
from cutdg.mesh import build_structured_mesh


def square(n):
    return build_structured_mesh((-1.0, -1.0, 1.0, 1.0), n)


def test_constant_negative_all_inside():
    mesh = square(4)
    topo = classify(mesh, LevelSet(lambda p: np.full(p.shape[0], -1.0)))
    assert np.all(topo.elem_class == INSIDE)
    assert len(topo.cut_elements) == 0
    assert topo.n_active == mesh.n_triangles


def test_constant_positive_all_outside():
    mesh = square(4)
    topo = classify(mesh, LevelSet(lambda p: np.full(p.shape[0], 1.0)))
    assert topo.n_active == 0


def test_identically_zero_is_degenerate():
    mesh = square(2)
    with pytest.raises(DegenerateGeometryError):
        classify(mesh, LevelSet(lambda p: np.zeros(p.shape[0])))


def test_ring_cut_count_matches_sign_scan():
    mesh = square(8)
    ls = levelset_by_name("ring")
    topo = classify(mesh, ls)
    # Independent oracle: per-element vertex sign scan with the documented
    # tie rule (zeros resolve to the weak side, CUT needs strict signs).
    values = ls(mesh.vertices)
    expected = 0
    for tri in mesh.triangles:
        d = values[tri]
        if np.any(d < 0.0) and np.any(d > 0.0):
            expected += 1
    assert len(topo.cut_elements) == expected
    assert expected > 0


def test_topology_invariants_ring():
    mesh = square(8)
    topo = classify(mesh, levelset_by_name("ring"))
    active = set(topo.active_elements.tolist())
    assert set(topo.cut_elements.tolist()) <= active
    inside = set(np.flatnonzero(topo.elem_class == INSIDE).tolist())
    assert active == inside | set(topo.cut_elements.tolist())
    for f in topo.active_facets:
        ea, eb = mesh.facet_elems[f]
        assert topo.elem_class[ea] != OUTSIDE and topo.elem_class[eb] != OUTSIDE


def unit_right_triangle():
    """Mesh of (0,1)^2 with two triangles; element 1 is (0,0),(1,1),(0,1)."""
    return build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1)


def test_inside_volume_rule_full_area():
    mesh = unit_right_triangle()
    topo = classify(mesh, LevelSet(lambda p: np.full(p.shape[0], -1.0)))
    for elem in (0, 1):
        for order in (1, 3, 8):
            rule = cut_volume_rule(mesh, topo, elem, order)
            assert rule.total() == pytest.approx(0.5, rel=1e-14)
            assert np.all(rule.weights > 0.0)


def test_outside_volume_rule_rejected():
    mesh = unit_right_triangle()
    topo = classify(mesh, LevelSet(lambda p: p[:, 0] - 0.5))
    fully_out = classify(mesh, LevelSet(lambda p: np.full(p.shape[0], 1.0)))
    with pytest.raises(ValueError):
        cut_volume_rule(mesh, fully_out, 0, 2)
    assert topo.elem_class[0] == CUT


def test_halfplane_cut_area():
    # Element 1 is the triangle (0,0),(1,1),(0,1); the part with x < 0.5
    # has area 3/8 (exact polygon clipping).
    mesh = unit_right_triangle()
    topo = classify(mesh, LevelSet(lambda p: p[:, 0] - 0.5))
    rule = cut_volume_rule(mesh, topo, 1, 4)
    assert rule.total() == pytest.approx(0.375, abs=1e-13)


def test_volume_partition_identity():
    mesh = square(8)
    ls = levelset_by_name("ring")
    topo = classify(mesh, ls)
    flipped = classify(mesh, LevelSet(lambda p: -ls.phi(p)))
    for elem in topo.cut_elements:
        inside = cut_volume_rule(mesh, topo, elem, 3).total()
        outside = cut_volume_rule(mesh, flipped, elem, 3).total()
        area = mesh.areas[elem]
        assert inside + outside == pytest.approx(area, rel=1e-13)
        assert 0.0 < inside < area


def test_cut_quadrature_polynomial_exactness():
    # Compare against a much higher-order rule on the same sub-polygons.
    mesh = square(4)
    ls = LevelSet(lambda p: p[:, 0] + 0.3 * p[:, 1] - 0.17)
    topo = classify(mesh, ls)
    rng = np.random.default_rng(7)
    order = 5
    coeff = rng.standard_normal((order + 1, order + 1))

    def poly(pts):
        out = np.zeros(pts.shape[0])
        for a in range(order + 1):
            for b in range(order + 1 - a):
                out += coeff[a, b] * pts[:, 0] ** a * pts[:, 1] ** b
        return out

    for elem in topo.cut_elements[:6]:
        low = cut_volume_rule(mesh, topo, elem, order)
        high = cut_volume_rule(mesh, topo, elem, order + 10)
        ref = high.weights @ poly(high.points)
        val = low.weights @ poly(low.points)
        assert val == pytest.approx(ref, rel=1e-12, abs=1e-15)


def fitted_order(errors, ns):
    """Least-squares slope of log error against log h."""
    return float(np.polyfit(np.log([1.0 / n for n in ns]), np.log(errors), 1)[0])


def test_circle_area_convergence():
    ls = LevelSet(lambda p: np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2) - 0.5)
    ns = (8, 16, 32, 64)
    errors = []
    for n in ns:
        mesh = square(n)
        topo = classify(mesh, ls)
        area = sum(
            cut_volume_rule(mesh, topo, e, 2).total() for e in topo.active_elements
        )
        errors.append(abs(area - math.pi * 0.25))
    assert fitted_order(errors, ns) >= 2.0


def test_ring_area_convergence():
    ls = levelset_by_name("ring")
    ns = (8, 16, 32, 64)
    errors = []
    for n in ns:
        mesh = square(n)
        topo = classify(mesh, ls)
        area = sum(
            cut_volume_rule(mesh, topo, e, 2).total() for e in topo.active_elements
        )
        errors.append(abs(area - math.pi / 2.0))
    assert fitted_order(errors, ns) >= 2.0


def test_boundary_rule_axis_aligned():
    mesh = unit_right_triangle()
    # Element 0 is (0,0),(1,0),(1,1); with phi = x - 0.5 the interface
    # segment runs from (0.5, 0) to (0.5, 0.5).
    topo = classify(mesh, LevelSet(lambda p: p[:, 0] - 0.5))
    rule = boundary_rule(mesh, topo, 0, 3)
    assert rule.total() == pytest.approx(0.5, abs=1e-14)
    assert np.allclose(rule.normals, [1.0, 0.0])
    assert np.allclose(rule.points[:, 0], 0.5)


def test_boundary_rule_requires_cut():
    mesh = unit_right_triangle()
    topo = classify(mesh, LevelSet(lambda p: np.full(p.shape[0], -1.0)))
    with pytest.raises(ValueError):
        boundary_rule(mesh, topo, 0, 2)


def test_boundary_length_equals_chord():
    mesh = square(8)
    ls = levelset_by_name("ring")
    topo = classify(mesh, ls)
    for elem in topo.cut_elements[:10]:
        rule = boundary_rule(mesh, topo, elem, 4)
        coords = mesh.element_coords(elem)
        d = topo.vertex_values[mesh.triangles[elem]]
        _, crossings = cutgeom._clip_inside(coords, d)
        chord = np.linalg.norm(crossings[1] - crossings[0])
        assert rule.total() == pytest.approx(chord, rel=1e-14)


def test_circle_perimeter_convergence():
    ls = LevelSet(lambda p: np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2) - 0.5)
    ns = (8, 16, 32)
    errors = []
    for n in ns:
        mesh = square(n)
        topo = classify(mesh, ls)
        length = sum(
            boundary_rule(mesh, topo, e, 2).total() for e in topo.cut_elements
        )
        errors.append(abs(length - math.pi))
    assert fitted_order(errors, ns) >= 2.0


def test_boundary_normals_match_analytic_gradient():
    ls = levelset_by_name("ring")
    mesh = square(16)
    topo = classify(mesh, ls)
    for elem in topo.cut_elements:
        rule = boundary_rule(mesh, topo, elem, 2)
        grads = ls.grad(rule.points)
        assert np.all(np.einsum("ij,ij->i", rule.normals, grads) > 0.0)


def facet_with_values(val0, val1):
    """A facet of the n=1 unit-square mesh with prescribed endpoint values."""
    mesh = build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1)
    table = {}
    for f in range(mesh.n_facets):
        v0, v1 = mesh.facets[f]
        table[tuple(mesh.vertices[v0])] = 0.0
        table[tuple(mesh.vertices[v1])] = 0.0
    # facet 0 joins (0,0) and (0,1) or similar; pick the bottom edge (0,0)-(1,0)
    target = None
    for f in range(mesh.n_facets):
        p0, p1 = mesh.vertices[mesh.facets[f]]
        if p0[1] == 0.0 and p1[1] == 0.0:
            target = f
            break
    values = {tuple(v): 1.0 for v in mesh.vertices}
    p0, p1 = mesh.vertices[mesh.facets[target]]
    values[tuple(p0)] = val0
    values[tuple(p1)] = val1

    def phi(pts):
        return np.array([values.get(tuple(p), 1.0) for p in np.atleast_2d(pts)])

    topo = classify(mesh, LevelSet(phi))
    return mesh, topo, target


def test_cut_facet_rule_fully_inside():
    mesh, topo, facet = facet_with_values(-1.0, -1.0)
    rule = cut_facet_rule(mesh, topo, facet, 2)
    assert rule.total() == pytest.approx(mesh.h_f[facet], rel=1e-14)


def test_cut_facet_rule_fully_outside_is_empty():
    mesh, topo, facet = facet_with_values(1.0, 2.0)
    rule = cut_facet_rule(mesh, topo, facet, 2)
    assert rule.n_points == 0
    assert rule.total() == 0.0


def test_cut_facet_rule_midpoint_root():
    mesh, topo, facet = facet_with_values(-1.0, 1.0)
    rule = cut_facet_rule(mesh, topo, facet, 2)
    assert rule.total() == pytest.approx(0.5 * mesh.h_f[facet], rel=1e-14)


def test_cut_facet_rule_quarter_root():
    mesh, topo, facet = facet_with_values(-1.0, 3.0)
    rule = cut_facet_rule(mesh, topo, facet, 2)
    assert rule.total() == pytest.approx(0.25 * mesh.h_f[facet], rel=1e-14)


def test_rules_have_positive_weights():
    mesh = square(8)
    topo = classify(mesh, levelset_by_name("ring"))
    for elem in topo.active_elements:
        assert np.all(cut_volume_rule(mesh, topo, elem, 4).weights > 0.0)
    for elem in topo.cut_elements:
        assert np.all(boundary_rule(mesh, topo, elem, 4).weights > 0.0)


def test_predefined_levelset_names():
    assert levelset_by_name("ring") is not None
    assert levelset_by_name("circle-obstacle") is not None
    with pytest.raises(ValueError):
        levelset_by_name("banana")


def test_circle_obstacle_sign():
    ls = levelset_by_name("circle-obstacle")
    assert ls(np.array([[0.9, 0.0]]))[0] < 0.0  # outside circle: in domain
    assert ls(np.array([[0.1, 0.0]]))[0] > 0.0  # inside circle: excluded
