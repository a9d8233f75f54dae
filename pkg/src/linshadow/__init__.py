"""linshadow: dichotomy/trichotomy certificates and exact shadowing for
nonautonomous linear systems, discrete (matrix sequences, possibly
noninvertible) and continuous (matrix ODEs).
"""

from . import _kernels
from .cocycle import (
    CocycleWindow,
    MatrixSequence,
    PseudoOrbit,
    cocycle,
    defect,
    load_matrix_sequence,
    load_trajectory,
    matrix_sequence_from_dict,
    pseudo_orbit,
    save_matrix_sequence,
    save_trajectory,
    spectral_norm,
)
from .errors import (
    DomainError,
    InputError,
    LinShadowError,
    RangeError,
    SplittingError,
    StructuralError,
)
from .evolution import (
    ApproximateSolution,
    CoefficientPath,
    EvolutionFamily,
    coefficient_path_from_dict,
    defect_c,
    load_approximate_solution,
    load_coefficient_path,
    save_approximate_solution,
    save_coefficient_path,
)
from .shadowing import (
    GreenSolution,
    ShadowingResult,
    gamma_operator,
    green_solve_line,
    green_solve_trichotomy,
    shadow,
    shadow_via_gamma,
    solution_residual,
)
from .shadowing_ode import (
    GreenSolutionC,
    ShadowingResultC,
    SplitWitness,
    default_bump,
    fd_residual,
    green_solve_c,
    shadow_c,
    splitting_witness,
)
from .spectral import (
    BackwardWitness,
    DichotomyCertificate,
    ProjectionFamily,
    Refusal,
    Subspace,
    TrichotomyCertificate,
    assemble_trichotomy,
    backward_uniqueness_test,
    build_projection_family,
    carry_stable_forward,
    certificate_from_dict,
    check_certificate_dict,
    estimate_stable,
    estimate_unstable,
    fit_dichotomy_constants,
    oblique_projection,
    principal_angles,
    subspace_gap,
)
from .summable import (
    ExponentialEstimateC,
    ProjectionPath,
    SummableCertificate,
    SummableTrichotomyCertificate,
    assemble_summable_trichotomy,
    check_summable_certificate,
    estimate_stable_c,
    projection_path_from_dict,
    summable_certificate_from_dict,
    summable_integral,
    summable_integral_report,
    verify_exponential_c,
    verify_summable,
)

__version__ = "0.1.0"


def kernel_backend() -> str:
    """'compiled' when the extension module is active, else 'python'."""
    return _kernels.BACKEND
