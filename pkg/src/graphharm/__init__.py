"""Harmonic functions, level sets and Robin-type Laplacians on metric trees.

The package works with metric graphs whose completion is compact with a
totally disconnected boundary, concretely truncations of homogeneous trees
with geometrically decaying edge lengths, plus small explicit graphs.
"""

from graphharm.errors import (
    BoundaryError,
    ConfigError,
    GraphError,
    GraphHarmError,
    LevelSetError,
    OperatorError,
    SolveError,
)
from graphharm.graph import (
    GraphPoint,
    MetricGraph,
    TreeSpec,
    build_explicit,
    build_tree,
    epsilon_core,
    geodesic_distance,
    metrics,
)
from graphharm.boundary import (
    BoundaryMeasure,
    ClopenPartition,
    StepFunction,
    cylinder_diameter,
    flat_cutoff,
    measure_of,
    refine,
    separating_vertices,
    standard_partition,
)
from graphharm.harmonic import (
    EnergyReport,
    HarmonicFunction,
    evaluate,
    extend_continuous,
    h1_inner,
    harmonic_measure,
    lipschitz_check,
    orthogonality_residual,
    solve_dirichlet,
)
from graphharm.levelset import (
    descent_path,
    is_regular_value,
    level_crossings,
    level_flux,
    subgraph_above,
    threshold_for_neighborhood,
)
from graphharm.operators import (
    ConstantClamp,
    Dirichlet,
    HarmonicClamp,
    Neumann,
    RobinClassical,
    assemble,
    compare_clamps,
    eigenvalues,
    ibp_residual,
    quadratic_form,
    symmetry_residual,
)

__version__ = "0.1.0"
