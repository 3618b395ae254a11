"""Projected likelihood contrast (PLC) test of homogeneity for equal-weight
two-component Gaussian mixtures with a common nuisance parameter."""

__version__ = "0.1.0"

from .asymptotics import (
    CBarSet,
    LimitKind,
    LimitLaw,
    MomentReport,
    adjusted_variance,
    c04_limit,
    c_bar_set,
    check_score_orthogonality,
    fisher_information,
    limit_cdf,
    limit_law,
    limit_quantile,
    moment_report,
)
from .changepoint import (
    SignalSpec,
    WindowScanResult,
    detect_changepoints,
    generate_jump_signal,
    window_scan,
)
from .exceptions import (
    AssumptionViolation,
    ComponentCollapse,
    DegenerateSampleError,
    NumericOverflowError,
    ParameterDomainError,
    PlcError,
    SampleError,
    SimulationIntegrityError,
)
from .models import (
    MixtureFamily,
    NullFit,
    density,
    fit_null,
    log_density,
    mixture_log_likelihood,
    null_log_likelihood,
    score_ratio,
    scores,
)
from .plc import AltFit, OptimizerOptions, PlcOutcome, em_step, fit_alternative, plc_batch, plc_statistic
from .simulation import (
    NullSimSummary,
    PowerCurve,
    SimConfig,
    critical_value,
    estimate_c_squared,
    power_curve,
    simulate_null,
)
