"""Device-independent entropy bounds, key rates and protocol simulation for CHSH-based QKD."""
from .bounds import (
    BoundCurve,
    CurveLibrary,
    EntropyBoundPoint,
    NetConfig,
    compute_bound_curve,
    convexify_curve,
    default_library,
    min_over_b,
    qubit_bound_at,
    uncertainty_region,
)
from .entropy import (
    binary_entropy,
    conditional_entropy_oracle,
    delta_trace_norm,
    pinching,
    refined_pinsker,
    relative_entropy,
    von_neumann_entropy,
)
from .keyrate import (
    ExperimentRecord,
    KeyRateInputs,
    critical_chsh,
    critical_qber,
    evaluate_experiments,
    feasibility_grid,
    key_rate,
    lambda_from_p,
    optimize_basis_bias,
    p_from_lambda,
    secret_fraction,
)
from .protocol import ProtocolConfig, ProtocolResult, run_protocol
from .quantum import (
    ChannelPoint,
    MeasurementFrame,
    chsh_operator,
    chsh_value,
    correlation,
    depolarizing_qber,
    observable_from_angle,
    qber,
    singlet,
    werner_state,
)
from .sdp import SdpSolution, build_chsh_decomposition, solve_weighted_delta_sdp
