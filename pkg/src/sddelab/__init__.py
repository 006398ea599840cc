"""Numerical laboratory for scalar delay equations driven by jump-diffusion noise.

Core objects: a signed delay measure for the linear drift, the fundamental
solution of the underlying deterministic delay equation, finite-activity
jump-diffusion drivers, path-dependent diffusion coefficients, strong-solution
simulation with exact jump times, and long-run estimators for invariant laws,
covariance structure and spectra.
"""

from .delay_measure import DelayMeasure, apply, char_function, v0
from .errors import (
    BlowUpError,
    ConfigError,
    DivergenceError,
    RootCountError,
    SpanError,
)
from .fundamental import FundamentalSolution, compute_r, deterministic_solution
from .functional import (
    AffineMap,
    ClampMap,
    ClampedQVFunctional,
    ConstantFunctional,
    DistributedFunctional,
    NoDelayFunctional,
    PointDelayFunctional,
    RunningSupFunctional,
    SqrtClampMap,
    TanhMap,
)
from .levy import (
    ConstantJump,
    ExponentialJump,
    JumpSpec,
    LevyIncrements,
    LevyTriplet,
    LogHeavyJump,
    ParetoJump,
    TwoSidedExponentialJump,
    check_assumptions,
    derive_seed,
    sample_path,
)
from .paths import GridPath, Segment, constant_segment, indicator_segment, zero_segment
from .solver import (
    SddeProblem,
    coupled_pair,
    segment_at,
    solve_euler,
    solve_voc,
    stationary_ou_segment,
)

__version__ = "0.1.0"
