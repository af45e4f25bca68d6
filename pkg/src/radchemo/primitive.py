"""IMEX time stepping of the cell density u coupled to the signal.

The density solves u_t = laplacian(u) + div(S(u) grad v) in radial symmetry
with zero total flux (u_r + S(u) v_r = 0) at r = R.  One step treats the
diffusion implicitly (backward Euler, tridiagonal) and the signal-driven
transport explicitly in conservative face-flux form.  With v_r >= 0 the
transport carries mass inward, so the donor cell at a face is the outer one;
donor-cell upwinding plus a per-cell outflow limiter (a cell cannot give away
more mass than it holds in one step) makes the explicit part monotone, and
the implicit diffusion is an M-matrix, so u stays nonnegative up to round-off.
The face fluxes telescope, hence total mass is conserved exactly apart from
the round-off-level clamping of negative values (which is tallied).

Step sizes adapt to an advective CFL bound based on the local wave speed
S'(u) v_r; collapse of dt below a floor while the density is already large is
reported as suspected blow-up rather than an error.  The inner loop runs as a
compiled kernel that advances between sample times; per-step diagnostics
(max signal value, per-step mass drift, clamped mass) are aggregated on the
state, and observers see every state on the sample-time grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .model import ModelParams
from .signal import RadialGrid, SignalField, solve_elliptic

__all__ = [
    "TimePolicy",
    "RadialState",
    "TerminationReason",
    "SolverError",
    "make_state",
    "step",
    "run_until",
    "BLOWUP_CEILING_FACTOR",
    "BLOWUP_SOFT_FACTOR",
    "CFL_SAFETY",
]

# sup-norm ceiling treated as "infinite": 1e6 * max(1, sup u0)
BLOWUP_CEILING_FACTOR = 1.0e6
# dt collapse with sup u above 1e3 * sup u0 counts as blow-up, otherwise failure
BLOWUP_SOFT_FACTOR = 1.0e3
CFL_SAFETY = 0.4

_FAMILY_CODE = {"power_shifted": K.FAMILY_SHIFTED, "power_pure": K.FAMILY_PURE}


class SolverError(RuntimeError):
    """Unrecoverable numerical failure inside a step."""


@dataclass(frozen=True)
class TimePolicy:
    """Adaptive step-size policy shared by both solvers."""

    dt_init: float = 1e-6
    dt_min_factor: float = 1e-12
    sample_dt: float = 0.1
    growth: float = 1.25
    safety: float = CFL_SAFETY

    def __post_init__(self):
        if self.dt_init <= 0 or self.sample_dt <= 0:
            raise ValueError("dt_init and sample_dt must be positive")
        if not 0 < self.safety <= 1 or self.growth < 1:
            raise ValueError("need 0 < safety <= 1 and growth >= 1")


@dataclass(eq=False)
class RadialState:
    """Cell density, its signal, and run bookkeeping.

    ``clamped_mass`` tallies the (round-off level) negative mass clamped to
    zero; ``max_v_seen`` and ``max_step_mass_drift`` aggregate per-step
    diagnostics; ``nsteps`` counts accepted steps.
    """

    grid: RadialGrid
    t: float
    u: np.ndarray
    signal: SignalField
    dt_last: float
    mass0: float
    sup_u0: float
    clamped_mass: float = 0.0
    max_v_seen: float = -math.inf
    max_step_mass_drift: float = 0.0
    amp_cross_t: float = math.nan
    nsteps: int = 0

    @property
    def sup_u(self) -> float:
        return float(self.u.max())

    @property
    def mass(self) -> float:
        return self.grid.mass(self.u)


@dataclass(frozen=True)
class TerminationReason:
    """Typed outcome of a run: reached_t_stop, blowup_suspected, or numerical_failure."""

    kind: str
    t: float
    sup_u: float
    detail: str = ""


def make_state(grid: RadialGrid, params: ModelParams, u0: np.ndarray,
               v0: Optional[np.ndarray] = None) -> RadialState:
    """Initial state with a consistent signal field."""
    u0 = np.asarray(u0, dtype=np.float64).copy()
    if params.tau == 0:
        sig = solve_elliptic(u0, params.M, grid)
    else:
        if v0 is None:
            v0 = np.full_like(grid.r, params.M)
        v0 = np.asarray(v0, dtype=np.float64).copy()
        vr = np.gradient(v0, grid.h, edge_order=2)
        vr[0] = 0.0
        sig = SignalField(grid, v0, vr)
    return RadialState(
        grid=grid, t=0.0, u=u0, signal=sig, dt_last=0.0,
        mass0=grid.mass(u0), sup_u0=float(u0.max()),
        max_v_seen=float(sig.v.max()),
    )


def _advance(state: RadialState, params: ModelParams, t_event: float,
             dt_target: float, dt_min: float, safety: float, growth: float,
             ceiling: float, conc_gate: float, i_conc: int, amp_threshold: float,
             max_steps: int) -> tuple[RadialState, float, int]:
    """Run the compiled kernel on copies of the state arrays."""
    grid = state.grid
    spec = params.sensitivity
    u = state.u.copy()
    v = state.signal.v.copy()
    vr = state.signal.vr.copy()
    (t, dt_last, dt_target_next, status, clamp_added, max_v, max_drift,
     amp_cross_t, nsteps) = K.advance_u(
        u, v, vr,
        params.tau, _FAMILY_CODE[spec.family], spec.beta, spec.coeff, params.M,
        grid.r, grid.h, grid.n, grid.face_area, grid.cell_volume, grid._hi, grid._lo,
        state.mass0, state.t, t_event, dt_target, dt_min, safety, growth,
        ceiling, conc_gate, i_conc, amp_threshold, max_steps,
    )
    if status == K.STATUS_NONFINITE:
        raise SolverError("step size collapsed without producing a finite update")
    new = replace(
        state,
        t=t,
        u=u,
        signal=SignalField(grid, v, vr),
        dt_last=dt_last,
        clamped_mass=state.clamped_mass + clamp_added,
        max_v_seen=max(state.max_v_seen, max_v),
        max_step_mass_drift=max(state.max_step_mass_drift, max_drift),
        amp_cross_t=state.amp_cross_t if not math.isnan(state.amp_cross_t) else amp_cross_t,
        nsteps=state.nsteps + nsteps,
    )
    return new, dt_target_next, status


def step(state: RadialState, params: ModelParams, dt_target: float,
         safety: float = CFL_SAFETY) -> RadialState:
    """Advance one accepted step of size <= dt_target.

    The signal is updated first (elliptic resolve for tau = 0, one implicit
    step for tau = 1), then the density takes its IMEX step.  dt is capped by
    the advective CFL bound and halved on non-finite results.
    """
    if dt_target <= 0:
        raise ValueError("dt_target must be positive")
    new, _, _ = _advance(state, params, state.t + dt_target, dt_target,
                         0.0, safety, 1.0, math.inf, math.inf, 1, math.inf, 1)
    return new


def run_until(
    state: RadialState,
    params: ModelParams,
    t_stop: float,
    policy: TimePolicy,
    observer: Optional[Callable[[RadialState], None]] = None,
    conc_radius: Optional[float] = None,
) -> tuple[RadialState, TerminationReason]:
    """Drive the solver to t_stop with adaptive dt, watching for blow-up.

    Accepted times land exactly on multiples of policy.sample_dt; the
    observer is invoked on each of those states (per-step diagnostics are
    aggregated on the state in between).  Termination is typed: reaching
    t_stop, suspected blow-up (sup-norm ceiling, grid-scale concentration of
    half the mass within ``conc_radius`` of the origin, or dt collapse at
    large amplitude), or numerical failure.  Observers must copy any arrays
    they retain.
    """
    if t_stop <= state.t:
        raise ValueError("t_stop must exceed the current time")
    ceiling = BLOWUP_CEILING_FACTOR * max(1.0, state.sup_u0)
    soft = BLOWUP_SOFT_FACTOR * state.sup_u0
    conc_gate = K.CONC_GATE_FACTOR * max(1.0, state.sup_u0)
    if conc_radius is None:
        conc_radius = K.CONC_CELLS * state.grid.h
    i_conc = min(max(1, round(conc_radius / state.grid.h)), state.grid.N + 1)
    amp_threshold = K.AMP_CROSS_FACTOR * max(1.0, state.sup_u0)
    dt_min = policy.dt_min_factor * params.T_end
    dt_target = policy.dt_init
    while True:
        if state.t >= t_stop * (1.0 - 1e-13):
            return state, TerminationReason("reached_t_stop", state.t, state.sup_u)
        k = math.floor(state.t / policy.sample_dt + 1e-9) + 1.0
        t_event = min(k * policy.sample_dt, t_stop)
        try:
            state, dt_target, status = _advance(
                state, params, t_event, dt_target, dt_min, policy.safety,
                policy.growth, ceiling, conc_gate, i_conc, amp_threshold, 10 ** 18,
            )
        except SolverError as exc:
            return state, TerminationReason("numerical_failure", state.t, state.sup_u, str(exc))
        if observer is not None:
            try:
                observer(state)
            except Exception as exc:  # observer failures abort the run
                return state, TerminationReason("numerical_failure", state.t, state.sup_u,
                                                f"observer failed: {exc}")
        if status == K.STATUS_CEILING:
            return state, TerminationReason("blowup_suspected", state.t, state.sup_u,
                                            "sup-norm ceiling reached")
        if status == K.STATUS_CONCENTRATED:
            return state, TerminationReason("blowup_suspected", state.t, state.sup_u,
                                            "mass concentrated at origin beyond grid resolution")
        if status == K.STATUS_DT_FLOOR:
            if state.sup_u > soft:
                return state, TerminationReason("blowup_suspected", state.t, state.sup_u,
                                                "time step collapsed at large amplitude")
            return state, TerminationReason("numerical_failure", state.t, state.sup_u,
                                            "time step collapsed")
