"""Numerical toolkit for linear cooperative systems ``x' = A(t) x``.

Integrates trajectories, checks invariance of the nonnegative and open
orthants, and monitors the product-of-coordinates certificate against its
trace-exponential lower bound.
"""

from .certificates import (
    CertificateReport,
    MonotonicityVerdict,
    Verdict,
    check_certificate,
    check_M1,
    check_M2,
    implies_check,
    product_series,
    trace_bound_series,
)
from .generator import GeneratorConfig, gen_initial, gen_system, stream
from .integrator import (
    EmbeddedRK45,
    FixedRK4,
    StepperConfig,
    Trajectory,
    fundamental_matrix,
    sample_at,
    solve_ivp,
)
from .model import (
    CoefficientMatrix,
    Constant,
    OrthantStatus,
    OrthantTag,
    PiecewiseConstant,
    PolynomialEntries,
    SampledGrid,
    TimeWindow,
    ToleranceProfile,
    classify_orthant,
    evaluate,
    is_cooperative,
    trace_at,
)
from .oracles import (
    EpsilonSchedule,
    continuous_dependence_probe,
    epsilon_perturb,
    expm,
    metzler_exponential_sign_check,
)

__version__ = "0.1.0"
