"""Numerical laboratory for self-consistent transfer operators of
all-to-all mean-field coupled uniformly expanding circle maps."""

from .errors import (
    ConeMembershipError,
    ConfigError,
    DiffeoViolation,
    Inadmissible,
    NonConvergence,
    SctlabError,
    SingularSystem,
)
from .periodic import (
    ConeParams,
    Density,
    PeriodicFn,
    circle_grid,
    constant,
    hilbert_alpha,
    hilbert_distance,
    sample,
)
from .system import (
    CallableKernel,
    CoupledDiffeo,
    CouplingKernel,
    DifferenceKernel,
    ExpandingMap,
    TensorTrigKernel,
    coupled_map,
    make_diffeo,
    mean_field,
    perturbed_linear,
)
from .transfer import (
    FixedPointReport,
    SolverConfig,
    apply_coupling,
    apply_transfer,
    contraction_probe,
    default_cone_a,
    random_cone_density,
    self_consistent_apply,
    solve_fixed_density,
    transfer_matrix,
)
from .response import (
    ResponseReport,
    fd_response,
    linear_response,
    linearized_matrix,
    mean_field_sensitivity,
    response_at_zero,
    response_report,
    response_sweep,
    sensitivity_matrix,
)
from .bounds import (
    LyReport,
    expansion_condition,
    function_jet,
    jet_compose,
    jet_inverse,
    jet_product,
    lasota_yorke_constants,
    measured_coupling_bound,
    norm_inequality_audit,
)
from .particles import (
    ConsistencyReport,
    ParticleEnsemble,
    consistency_run,
    empirical_distance,
    init_ensemble,
    ks_distance,
    step_ensemble,
)

__version__ = "0.1.0"
