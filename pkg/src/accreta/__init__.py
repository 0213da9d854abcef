"""accreta: solvers for an accretive-growth free boundary problem.

The pipeline computes the time-of-attachment field v as a constrained
geodesic distance, solves the activation field u on the growing sublevels,
couples the two through a space-time convolution, and verifies the
quantitative regularity bounds the theory provides.
"""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    DomainSpec,
    Grid,
    Mask,
    ScalarField,
    boundary_nodes,
    build_mask_from_predicate,
    sublevel,
)
from .hamiltonian import (  # noqa: F401
    HamiltonianModel,
    SupportEvaluator,
    minkowski_normalize,
    verify_bounds,
)
from .hj import (  # noqa: F401
    AttachmentField,
    MetricField,
    backtrack_curve,
    discrete_gradient_bound,
    representation_residual,
    solve_attachment,
)
from .elliptic import (  # noqa: F401
    PoissonProblem,
    TimeField,
    poincare_ratio,
    solve_on_growth,
    solve_poisson,
)
from .convolution import (  # noqa: F401
    ActivationTrace,
    KernelPair,
    SpatialKernel,
    TimeKernel,
    convolve,
    sample_composed,
)
from .coupling import (  # noqa: F401
    CoupledState,
    CouplingConfig,
    CouplingProblem,
    RunResult,
    run,
    step,
)
