"""Independent solver for the mass-accumulation variable w(s, t) on the disk.

For n = 2 with an instantaneous signal, the cumulative radial mass

    w(s, t) = integral_0^sqrt(s) rho u(rho, t) d(rho),   s in [0, R^2],

solves the single degenerate parabolic problem

    w_t = 4 s w_ss + sqrt(s) S(2 w_s) v_r(sqrt(s), t),
    w(0, t) = 0,   w(R^2, t) = m0 / (2 pi),

with the density recovered through u(r) = 2 w_s(r^2).  Each step reconstructs
u, resolves the elliptic signal on the companion radial grid, interpolates
v_r onto the sqrt(s) points, advances the degenerate diffusion implicitly
(the 4s coefficient vanishes only at the pinned s = 0 row) and the source
explicitly, then re-pins the Dirichlet rows.  This gives a formulation-level
cross-check of the primitive (u, v) solver: both discretize the same flow.
The inner loop runs as a compiled kernel between sample times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .model import ModelParams
from .signal import RadialGrid, SignalField
from .primitive import (
    BLOWUP_CEILING_FACTOR,
    BLOWUP_SOFT_FACTOR,
    CFL_SAFETY,
    _FAMILY_CODE,
    SolverError,
    TerminationReason,
    TimePolicy,
)

__all__ = [
    "MassState",
    "transform_initial",
    "step_w",
    "reconstruct_u",
    "run_until_w",
    "ws_profile",
    "MONOTONE_FAIL_FRACTION",
]

# pre-projection dip beyond this fraction of the total mass is an instability
MONOTONE_FAIL_FRACTION = 1e-2


@dataclass(eq=False)
class MassState:
    """Cumulative-mass profile on a uniform s-grid plus run bookkeeping.

    ``prev`` holds (t, w) of the previous accepted step so observers can form
    backward time differences; ``signal`` is the elliptic field of the last
    accepted step.
    """

    rgrid: RadialGrid
    s: np.ndarray
    w: np.ndarray
    t: float
    m0: float
    dt_last: float
    sup_u0: float
    signal: Optional[SignalField] = None
    prev: Optional[tuple[float, np.ndarray]] = None
    max_v_seen: float = -math.inf
    max_monotone_violation: float = 0.0
    amp_cross_t: float = math.nan
    nsteps: int = 0

    @property
    def hs(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def sup_u(self) -> float:
        return float(np.max(2.0 * ws_profile(self.w, self.hs)))

    @property
    def mass(self) -> float:
        return 2.0 * math.pi * float(self.w[-1])


def ws_profile(w: np.ndarray, hs: float) -> np.ndarray:
    """dw/ds by centered differences, one-sided at the endpoints."""
    ws = np.empty_like(w)
    ws[1:-1] = (w[2:] - w[:-2]) / (2.0 * hs)
    ws[0] = (w[1] - w[0]) / hs
    ws[-1] = (w[-1] - w[-2]) / hs
    return ws


def transform_initial(u0: np.ndarray, rgrid: RadialGrid, n_s: int) -> MassState:
    """Build w0 from a radial density by cumulative trapezoid of rho*u0.

    Defined for n = 2 only.  The integrand is evaluated at rho = sqrt(s)
    nodes; the endpoint is rescaled onto m0/(2 pi) so the Dirichlet pin and
    the finite-volume mass agree exactly.
    """
    if rgrid.n != 2:
        raise ValueError("the mass-accumulation formulation requires n = 2")
    if n_s < 16:
        raise ValueError("s-grid needs at least 16 cells")
    u0 = np.asarray(u0, dtype=np.float64)
    s = np.linspace(0.0, rgrid.R ** 2, n_s + 1)
    rho = np.sqrt(s)
    g = rho * np.interp(rho, rgrid.r, u0)
    w0 = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(rho) * (g[1:] + g[:-1]))))
    assert np.all(np.diff(w0) >= 0.0), "cumulative mass must be nondecreasing"
    m0 = rgrid.mass(u0)
    w0 *= (m0 / (2.0 * math.pi)) / w0[-1]
    state = MassState(
        rgrid=rgrid, s=s, w=w0, t=0.0, m0=m0, dt_last=0.0, sup_u0=0.0,
    )
    state.sup_u0 = state.sup_u
    return state


def reconstruct_u(state: MassState, rgrid: Optional[RadialGrid] = None) -> np.ndarray:
    """Recover the density u(r) = 2 w_s(r^2), linear interpolation in s."""
    grid = rgrid if rgrid is not None else state.rgrid
    ws = ws_profile(state.w, state.hs)
    return 2.0 * np.interp(grid.r ** 2, state.s, ws)


def _advance(state: MassState, params: ModelParams, t_event: float,
             dt_target: float, dt_min: float, safety: float, growth: float,
             ceiling: float, conc_gate: float, conc_radius: float,
             amp_threshold: float, max_steps: int) -> tuple[MassState, float, int]:
    if params.tau != 0 or params.n != 2:
        raise ValueError("the mass-accumulation solver requires tau = 0 and n = 2")
    spec = params.sensitivity
    grid = state.rgrid
    w = state.w.copy()
    w_prev = state.w.copy()
    v = state.signal.v.copy() if state.signal is not None else np.full_like(grid.r, params.M)
    vr = state.signal.vr.copy() if state.signal is not None else np.zeros_like(grid.r)
    # never below the s-grid's own resolution near the origin
    s_conc = max(conc_radius ** 2, state.hs)
    (t, t_prev, dt_last, dt_target_next, status, max_v, mono_viol,
     amp_cross_t, nsteps) = K.advance_w(
        w, w_prev, state.s, state.hs,
        _FAMILY_CODE[spec.family], spec.beta, spec.coeff, params.M,
        grid.r, grid.h, grid._hi, grid._lo,
        v, vr,
        state.m0 / (2.0 * math.pi), state.t, t_event, dt_target, dt_min,
        safety, growth, ceiling, conc_gate, s_conc, amp_threshold,
        MONOTONE_FAIL_FRACTION, max_steps,
    )
    if status == K.STATUS_NONFINITE:
        raise SolverError("w-step size collapsed without producing a finite update")
    new = replace(
        state,
        w=w,
        t=t,
        dt_last=dt_last,
        signal=SignalField(grid, v, vr),
        prev=(t_prev, w_prev) if nsteps > 0 else state.prev,
        max_v_seen=max(state.max_v_seen, max_v),
        max_monotone_violation=max(state.max_monotone_violation, mono_viol),
        amp_cross_t=state.amp_cross_t if not math.isnan(state.amp_cross_t) else amp_cross_t,
        nsteps=state.nsteps + nsteps,
    )
    return new, dt_target_next, status


def step_w(state: MassState, params: ModelParams, dt_target: float,
           safety: float = CFL_SAFETY) -> MassState:
    """One IMEX step of the w-equation (implicit 4s w_ss, explicit source)."""
    if dt_target <= 0:
        raise ValueError("dt_target must be positive")
    new, _, status = _advance(state, params, state.t + dt_target, dt_target,
                              0.0, safety, 1.0, math.inf, math.inf,
                              state.rgrid.h, math.inf, 1)
    if status == K.STATUS_MONOTONE:
        raise SolverError("cumulative mass lost monotonicity")
    return new


def run_until_w(
    state: MassState,
    params: ModelParams,
    t_stop: float,
    policy: TimePolicy,
    observer: Optional[Callable[[MassState], None]] = None,
    conc_radius: Optional[float] = None,
) -> tuple[MassState, TerminationReason]:
    """Adaptive drive of the w-solver, mirroring the primitive run loop."""
    if t_stop <= state.t:
        raise ValueError("t_stop must exceed the current time")
    ceiling = BLOWUP_CEILING_FACTOR * max(1.0, state.sup_u0)
    soft = BLOWUP_SOFT_FACTOR * state.sup_u0
    conc_gate = K.CONC_GATE_FACTOR * max(1.0, state.sup_u0)
    if conc_radius is None:
        conc_radius = max(K.CONC_CELLS * state.rgrid.h, math.sqrt(state.hs))
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
                policy.growth, ceiling, conc_gate, conc_radius, amp_threshold, 10 ** 18,
            )
        except SolverError as exc:
            return state, TerminationReason("numerical_failure", state.t, state.sup_u, str(exc))
        if observer is not None:
            try:
                observer(state)
            except Exception as exc:
                return state, TerminationReason("numerical_failure", state.t, state.sup_u,
                                                f"observer failed: {exc}")
        if status == K.STATUS_CEILING:
            return state, TerminationReason("blowup_suspected", state.t, state.sup_u,
                                            "sup-norm ceiling reached")
        if status == K.STATUS_CONCENTRATED:
            return state, TerminationReason("blowup_suspected", state.t, state.sup_u,
                                            "mass concentrated at origin beyond grid resolution")
        if status == K.STATUS_MONOTONE:
            return state, TerminationReason("numerical_failure", state.t, state.sup_u,
                                            "cumulative mass lost monotonicity")
        if status == K.STATUS_DT_FLOOR:
            if state.sup_u > soft:
                return state, TerminationReason("blowup_suspected", state.t, state.sup_u,
                                                "time step collapsed at large amplitude")
            return state, TerminationReason("numerical_failure", state.t, state.sup_u,
                                            "time step collapsed")
