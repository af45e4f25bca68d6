"""Numerical laboratory for a repulsion-consumption chemotaxis system on a ball.

Radially symmetric cells repelled by a signal they consume: the density obeys
u_t = laplacian(u) + div(S(u) grad v) with zero total flux, the signal obeys
tau v_t = laplacian(v) - u v with a fixed boundary level v = M.  The package
provides two independent discretizations (primitive (u, v) stepping and the
mass-accumulation w-equation on the disk), the moment functionals and
explicit constants that certify finite-time blow-up, and an experiment
harness for regime classification, critical-level bisection, and sweeps.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BumpProfile,
    ConstantProfile,
    GaussianProfile,
    InitialData,
    ModelParams,
    MomentConstants,
    SensitivitySpec,
    TabulatedProfile,
    compute_constants,
    evaluate_sensitivity,
    make_initial_data,
)
from .signal import RadialGrid, SignalField, gradient_l2_norm, solve_elliptic, step_parabolic_v  # noqa: F401
from .primitive import RadialState, TerminationReason, TimePolicy, make_state, run_until, step  # noqa: F401
from .masspde import MassState, reconstruct_u, run_until_w, step_w, transform_initial  # noqa: F401
from .functionals import (  # noqa: F401
    FunctionalSample,
    blowup_time_bound,
    check_pointwise_bounds,
    eval_phi,
    eval_psi,
    mstar_sufficient,
)
from .harness import (  # noqa: F401
    ComparisonReport,
    MStarResult,
    RunOutcome,
    RunSetup,
    SweepRow,
    bisect_mstar,
    classify_run,
    compare_formulations,
    sweep,
)
