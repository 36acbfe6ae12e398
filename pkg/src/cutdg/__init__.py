"""Unfitted DG and Trefftz DG solver on 2D level-set geometries.

Elliptic boundary value problems are discretised on a structured triangular
background mesh cut by a level set; small-cut stability comes from global
or patch-wise ghost penalties or from algebraic element aggregation, and
reduced ansatz spaces (harmonic / aggregated / weak-Trefftz polynomials)
are realised as kernel embeddings of the standard DG space.
"""

from .mesh import BackgroundMesh, build_structured_mesh, uniform_refine
from .cutgeom import (
    CutTopology,
    LevelSet,
    QuadratureRule,
    boundary_rule,
    classify,
    cut_facet_rule,
    cut_volume_rule,
    levelset_by_name,
)
from .patches import PatchDecomposition, aggregate_mesh, build_patches, facet_sets
from .basis import DgSpace
from .embedding import (
    EmbeddingMap,
    aggregated_trefftz_embedding,
    aggregation_embedding,
    kernel_basis,
    particular_solution,
    trefftz_embedding,
    weak_trefftz_cd_embedding,
)
from .assembly import (
    FormParams,
    SparseSystem,
    assemble_A,
    assemble_S,
    assemble_W_upwind,
    homogenize_rhs,
    reduce_system,
)
from .harness import CaseDefinition, compute_errors, get_case, run_case
from .linalg import jacobi_svd, solve_bicgstab, solve_cg

__version__ = "0.1.0"
