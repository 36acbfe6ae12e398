"""Predefined experiment cases, error norms, and convergence reports.

A case bundles geometry, data and (when known) the exact solution; the
driver walks a series of structured-mesh refinements, assembles the chosen
method variant, solves, and reports L2 / H1-seminorm errors over the
discrete domain together with estimated orders of convergence.

Boundary data is always evaluated pointwise on the discrete interface, so
the piecewise-linear geometry does not limit the attainable rates whenever
the exact solution satisfies the PDE in a neighbourhood of the domain.
"""

import functools
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly, cutgeom, embedding, patches
from .basis import DgSpace
from .linalg import BlockJacobi, solve_bicgstab, solve_cg, solve_refined
from .mesh import build_structured_mesh

BASE_SUBDIVISIONS = 8

CSV_HEADER = "case,space,stab,k,level,h,dofs,reduced_dofs,l2,eoc_l2,h1,eoc_h1,iters,seconds"


@dataclass(frozen=True)
class CaseDefinition:
    """Geometry plus data of one boundary value problem."""

    name: str
    levelset: cutgeom.LevelSet
    exact: callable = None
    exact_grad: callable = None
    source: callable = None
    boundary: callable = None
    velocity: callable = None
    alpha: float = 1.0
    outer_dirichlet: callable = None
    domain: tuple = (-1.0, -1.0, 1.0, 1.0)

    @property
    def has_convection(self):
        return self.velocity is not None


def _exp_sin(points):
    return np.exp(points[:, 0]) * np.sin(points[:, 1])


def _exp_sin_grad(points):
    e = np.exp(points[:, 0])
    return np.stack([e * np.sin(points[:, 1]), e * np.cos(points[:, 1])], axis=1)


def _ring_poly(points):
    r = np.sqrt(points[:, 0] ** 2 + points[:, 1] ** 2)
    return 20.0 * (0.25 - r) * (r - 0.75)


def _ring_poly_grad(points):
    r = np.sqrt(points[:, 0] ** 2 + points[:, 1] ** 2)
    dr = 20.0 - 40.0 * r
    return (dr / r)[:, None] * points


def _ring_poly_source(points):
    # -Laplacian of the radial exact solution: 80 - 20 / r.
    r = np.sqrt(points[:, 0] ** 2 + points[:, 1] ** 2)
    return 80.0 - 20.0 / r


def _obstacle_velocity(points):
    rsq = points[:, 0] ** 2 + points[:, 1] ** 2
    scale = 0.0625 / rsq**2  # R^2 / r^4 with R = 1/4
    wx = 1.0 + scale * (points[:, 1] ** 2 - points[:, 0] ** 2)
    wy = -2.0 * scale * points[:, 0] * points[:, 1]
    return np.stack([wx, wy], axis=1)


def _obstacle_outer_dirichlet(pts):
    # Inflow wall x = -1 carries u = 0; the other walls are natural.
    if np.all(np.abs(pts[:, 0] + 1.0) < 1e-12):
        return np.zeros(len(pts))
    return None


def get_case(name):
    """Predefined cases: example1, example3, example4, patch-test."""
    if name == "example1":
        ls = cutgeom.levelset_by_name("ring")
        return CaseDefinition(
            name=name,
            levelset=ls,
            exact=_exp_sin,
            exact_grad=_exp_sin_grad,
            boundary=_exp_sin,
        )
    if name == "example3":
        ls = cutgeom.levelset_by_name("ring")
        return CaseDefinition(
            name=name,
            levelset=ls,
            exact=_ring_poly,
            exact_grad=_ring_poly_grad,
            source=_ring_poly_source,
            boundary=_ring_poly,
        )
    if name == "example4":
        ls = cutgeom.levelset_by_name("circle-obstacle")
        return CaseDefinition(
            name=name,
            levelset=ls,
            boundary=lambda pts: np.ones(len(pts)),
            velocity=_obstacle_velocity,
            alpha=1e-3,
            outer_dirichlet=_obstacle_outer_dirichlet,
        )
    if name == "patch-test":
        ls = cutgeom.levelset_by_name("ring")
        poly = lambda pts: pts[:, 0] ** 2 - pts[:, 1] ** 2
        grad = lambda pts: np.stack([2.0 * pts[:, 0], -2.0 * pts[:, 1]], axis=1)
        return CaseDefinition(
            name=name, levelset=ls, exact=poly, exact_grad=grad, boundary=poly
        )
    raise ValueError(f"unknown case {name!r}")


@dataclass
class RunRecord:
    case: str
    space: str
    stab: str
    k: int
    level: int
    h: float
    dofs: int
    reduced_dofs: int
    l2: float
    h1: float
    iters: int
    seconds: float


@dataclass
class SolveResult:
    """One assembled-and-solved refinement level."""

    record: RunRecord
    coeffs: np.ndarray
    space: DgSpace
    rules: cutgeom.CutRules


def compute_errors(space, rules, coeffs, exact, exact_grad=None):
    """L2 and H1-seminorm errors over the discrete domain."""
    l2 = 0.0
    h1 = 0.0
    for elem in space.topo.active_elements:
        rule = rules.volume(elem)
        phi, dx, dy = space.tabulate(elem, rule.points)
        c = coeffs[space.global_dofs(elem)]
        diff = phi @ c - exact(rule.points)
        l2 += rule.weights @ diff**2
        if exact_grad is not None:
            g = exact_grad(rule.points)
            gx = dx @ c - g[:, 0]
            gy = dy @ c - g[:, 1]
            h1 += rule.weights @ (gx**2 + gy**2)
    return math.sqrt(l2), math.sqrt(h1)


def l2_difference(space, rules, coeffs_a, coeffs_b):
    """L2 distance of two DG functions over the discrete domain."""
    total = 0.0
    for elem in space.topo.active_elements:
        rule = rules.volume(elem)
        phi = space.tabulate_values(elem, rule.points)
        d = phi @ (coeffs_a - coeffs_b)[space.global_dofs(elem)]
        total += rule.weights @ d**2
    return math.sqrt(total)


def build_embedding(space, decomp, params, case):
    """Embedding matching the (space, stabilisation) combination."""
    gp_local = functools.partial(assembly.ghost_penalty_facet_factor, space)
    if params.space == "trefftz":
        if params.stab == "agg":
            if case.has_convection:
                raise ValueError(
                    "aggregated weak Trefftz for convection is not supported"
                )
            return embedding.aggregated_trefftz_embedding(space, decomp, gp_local)
        if case.has_convection:
            return embedding.weak_trefftz_cd_embedding(
                space, case.alpha, case.velocity, params.quad_order
            )
        return embedding.trefftz_embedding(space)
    if params.stab == "agg":
        return embedding.aggregation_embedding(space, decomp, gp_local)
    return None


def ghost_penalty_scaling(gamma_override, case, h):
    """Ghost-penalty factor: 0.01 by default; convection runs use
    0.001 * (alpha + h * c_w) with velocity magnitude c_w = 2. An explicit
    override wins in either case."""
    if gamma_override is not None:
        return gamma_override
    if case.has_convection:
        return 0.001 * (case.alpha + h * 2.0)
    return 0.01


def solve_level(case, params, n, solver_tol=1e-10, maxit=50000, gamma_override=None):
    """Assemble and solve one refinement level; returns a SolveResult."""
    t0 = time.perf_counter()
    mesh = build_structured_mesh(case.domain, n)
    topo = cutgeom.classify(mesh, case.levelset)
    space = DgSpace(mesh, topo, params.k)
    rules = cutgeom.CutRules(mesh, topo, params.quad_order)
    decomp = patches.build_patches(mesh, topo)

    sys_a = assembly.assemble_A(
        space, rules, params, case.boundary, outer_dirichlet=case.outer_dirichlet
    )
    mat = case.alpha * sys_a.matrix
    rhs = case.alpha * sys_a.rhs
    if case.source is not None:
        rhs = rhs + assembly.assemble_source(space, rules, case.source)
    if params.stab != "agg":
        facet_set = decomp.fgp_star if params.stab == "gp" else decomp.fgp_min
        gamma = ghost_penalty_scaling(gamma_override, case, float(mesh.h_t.max()))
        gp_params = assembly.FormParams(
            k=params.k, beta=params.beta, gamma=gamma, stab=params.stab,
            space=params.space, quad_order=params.quad_order,
        )
        mat = mat + assembly.assemble_S(space, facet_set, gp_params).matrix
    if case.has_convection:
        mat = mat + assembly.assemble_W_upwind(space, rules, case.velocity).matrix
    system = assembly.SparseSystem(matrix=mat.tocsr(), rhs=rhs,
                                   blocks=assembly.element_blocks(space))

    emb = build_embedding(space, decomp, params, case)
    u_f = None
    if (
        params.space == "trefftz"
        and case.source is not None
        and not case.has_convection
    ):
        # The PDE is -Lap(u) = f, so the homogenising shift must satisfy
        # Lap(u_f) = -f for u - u_f to be near-harmonic.
        u_f = embedding.particular_solution(
            space, rules, lambda pts: -np.asarray(case.source(pts))
        )

    if emb is None:
        solve_sys = system
    else:
        solve_sys = assembly.reduce_system(system, emb)
        if u_f is not None:
            solve_sys.rhs = assembly.homogenize_rhs(system, emb, u_f)

    precond = BlockJacobi(solve_sys.matrix, solve_sys.blocks)
    solver = solve_bicgstab if case.has_convection else solve_cg
    x, iters = solve_refined(
        solve_sys.matrix, solve_sys.rhs, tol=solver_tol, maxit=maxit,
        precond=precond, solver=solver,
    )

    coeffs = x if emb is None else emb.apply(x)
    if u_f is not None:
        coeffs = coeffs + u_f
    seconds = time.perf_counter() - t0

    if case.exact is not None:
        l2, h1 = compute_errors(space, rules, coeffs, case.exact, case.exact_grad)
    else:
        l2 = h1 = float("nan")
    record = RunRecord(
        case=case.name,
        space=params.space,
        stab=params.stab,
        k=params.k,
        level=int(round(math.log2(n / BASE_SUBDIVISIONS))),
        h=float(mesh.h_t.max()),
        dofs=space.n_dofs,
        reduced_dofs=solve_sys.matrix.shape[0],
        l2=l2,
        h1=h1,
        iters=iters,
        seconds=seconds,
    )
    return SolveResult(record=record, coeffs=coeffs, space=space, rules=rules)


def run_case(case, space_mode, stab, k, levels, beta=None, gamma=None,
             quad_order=None, solver_tol=1e-10, keep_solutions=False):
    """Run a refinement series; returns (records, results or None).

    levels may be an integer count (starting at n=8, halving h per level)
    or an explicit list of subdivision counts. gamma=None selects the
    case-dependent default scaling.
    """
    if isinstance(case, str):
        case = get_case(case)
    if isinstance(levels, int):
        levels = [BASE_SUBDIVISIONS * 2**i for i in range(levels)]
    params = assembly.FormParams(
        k=k, beta=beta, alpha=case.alpha, stab=stab,
        space=space_mode, quad_order=quad_order,
    )
    records = []
    results = [] if keep_solutions else None
    for n in levels:
        result = solve_level(
            case, params, n, solver_tol=solver_tol, gamma_override=gamma
        )
        records.append(result.record)
        if keep_solutions:
            results.append(result)
    return records, results


def eoc(errors, hs):
    """Estimated orders of convergence of consecutive error pairs."""
    out = [float("nan")]
    for i in range(1, len(errors)):
        if errors[i] > 0.0 and errors[i - 1] > 0.0:
            out.append(math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i]))
        else:
            out.append(float("nan"))
    return out


def _csv_cell(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.16e}"
    return str(value)


def report_csv(records):
    """CSV report with per-pair orders of convergence, byte-stable."""
    lines = [CSV_HEADER]
    by_series = {}
    for rec in records:
        by_series.setdefault((rec.case, rec.space, rec.stab, rec.k), []).append(rec)
    for key in sorted(by_series):
        series = sorted(by_series[key], key=lambda r: r.level)
        hs = [r.h for r in series]
        eoc_l2 = eoc([r.l2 for r in series], hs)
        eoc_h1 = eoc([r.h1 for r in series], hs)
        for rec, e2, e1 in zip(series, eoc_l2, eoc_h1):
            cells = [
                rec.case, rec.space, rec.stab, rec.k, rec.level,
                rec.h, rec.dofs, rec.reduced_dofs,
                rec.l2, e2, rec.h1, e1, rec.iters, rec.seconds,
            ]
            lines.append(",".join(_csv_cell(c) for c in cells))
    return "\n".join(lines) + "\n"


def eoc_table(records):
    """Human-readable convergence table."""
    out = io.StringIO()
    by_series = {}
    for rec in records:
        by_series.setdefault((rec.case, rec.space, rec.stab, rec.k), []).append(rec)
    for key in sorted(by_series):
        case, space_mode, stab, k = key
        series = sorted(by_series[key], key=lambda r: r.level)
        hs = [r.h for r in series]
        eoc_l2 = eoc([r.l2 for r in series], hs)
        eoc_h1 = eoc([r.h1 for r in series], hs)
        out.write(f"# {case} space={space_mode} stab={stab} k={k}\n")
        out.write(
            f"{'h':>12} {'dofs':>8} {'red':>8} {'L2':>12} {'eoc':>6} "
            f"{'H1':>12} {'eoc':>6} {'iters':>6}\n"
        )
        for rec, e2, e1 in zip(series, eoc_l2, eoc_h1):
            out.write(
                f"{rec.h:12.4e} {rec.dofs:8d} {rec.reduced_dofs:8d} "
                f"{rec.l2:12.4e} {e2:6.2f} {rec.h1:12.4e} {e1:6.2f} "
                f"{rec.iters:6d}\n"
            )
    return out.getvalue()
