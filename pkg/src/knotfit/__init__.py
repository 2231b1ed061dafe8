"""Free-knot spline and shallow ReLU approximation of scalar functions on
[0,1], with equidistribution-based training and tridiagonal preconditioning.
"""

from .conditioning import (
    ConditioningReport,
    conditioning_report,
    gershgorin_bounds_M,
    numeric_condition,
    predicted_kappa_mtinv,
    toeplitz_eigs_M,
    toeplitz_eigs_T,
)
from .losses import (
    GradReport,
    LossConfig,
    QuadratureGrid,
    equi_quality,
    fixed_grid,
    grad_loss,
    loss_comb,
    loss_equi,
    loss_interp_proxy,
    loss_l2,
    resampled_grid,
    rho_cells,
)
from .meshgen import (
    MeshMap,
    MonitorFunction,
    optimal_knots_for,
    optimal_knots_ode,
    optimal_knots_xalpha,
    predicted_uniform_rate_xalpha,
)
from .relu import (
    RawShallowNet,
    ReluModel,
    breakpoints_of,
    fks_to_relu,
    from_raw,
    relu_eval,
    relu_to_fks,
)
from .splines import (
    GAP_FLOOR,
    DegenerateNormalMatrixError,
    FksModel,
    KnotVector,
    TridiagMatrix,
    assemble_mass_matrix,
    basis_eval,
    fks_eval,
    interpolating_fks,
    solve_fixed_knot_least_squares,
    thomas_solve,
    uniform_knots,
)
from .targets import TargetFunction, builtin_targets, get_target, register_target
from .training import (
    AdamConfig,
    TrainReport,
    TrainingAbort,
    adam_minimize,
    default_init,
    default_loss_config,
    random_raw_net,
    random_relu,
    train_combined,
    train_relu_preconditioned,
    train_standard,
    train_two_level,
)

__version__ = "0.1.0"
