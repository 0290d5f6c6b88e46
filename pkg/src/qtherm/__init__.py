"""Repeated-measurement dynamics and thermodynamics of small open quantum systems."""

from .errors import (
    ConfigError,
    DegenerateSteadyStateError,
    DimensionError,
    NumericError,
    PositivityError,
    PreconditionError,
    QthermError,
    SizeLimitError,
)
from .qcore import (
    DensityMatrix,
    Operator,
    Propagator,
    StateVector,
    diag_entropy,
    evolve,
    expectation,
    partial_trace,
    relative_entropy,
    tensor_product,
    trace_distance,
    von_neumann_entropy,
)
from .models import JcmParams, JointSystem, build_jcm, thermal_state, validate_coupling
from .engine import (
    EnsembleSummary,
    MeasurementOutcome,
    ProcessConfig,
    TrajectoryRecord,
    run_process,
    sample_interval,
    step_interval,
)
from .thermo import (
    IntervalLedger,
    approx_heat_small_change,
    ledger_for_interval,
    s_tot,
    second_law_suite,
    traditional_qw,
)
from .generators import (
    GeneratorSpec,
    SteadyStateResult,
    decompose,
    fast_map,
    four_state_rate,
    lindblad_propagate,
    min_temp_predict,
    steady_state,
    weak_map,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
