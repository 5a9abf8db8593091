"""Safety filtering for control-affine systems under actuator box/polytope
constraints, built on a finite-horizon backup-flow prediction and a
soft-minimum barrier function."""

from .barrier import (
    BarrierConfig,
    BarrierEval,
    Box,
    SafetySpec,
    evaluate_barrier,
    estimate_flow_speed_bound,
    estimate_safety_lipschitz,
    flow_margins,
    intersample_margin,
    sampled_barrier,
    softmin_barrier,
)
from .controller import (
    ControllerConfig,
    ControllerOutput,
    TrajectoryLog,
    blend_ramp,
    feasibility_metric,
    filter_control,
    gate,
    simulate,
)
from .dynamics import (
    BackupPolicy,
    ClosedLoopField,
    FlowDivergenceError,
    FlowTable,
    SystemModel,
    propagate_flow,
    propagate_states,
)
from .smooth import pnorm, pnorm_grad, smooth_sat, smooth_sat_slope, softmin, softmin_weights
from .solvers import (
    AffineHalfspace,
    ControlPolytope,
    InfeasibleError,
    SolverError,
    UnboundedError,
    brute_force_qp_oracle,
    max_linear,
    solve_qp,
)
from .systems import (
    ModelBundle,
    RobotMap,
    build_pendulum,
    build_robot,
    check_invariance,
    solve_lyapunov,
    synthesize_robot_Pb,
)

__version__ = "0.1.0"
