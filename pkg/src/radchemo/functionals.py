"""Moment functionals and inequality monitors on mass-accumulation snapshots.

The diagnostics evaluated here certify blow-up runs numerically.  On a
snapshot w(s) with derivative w_s = u/2:

    phi = integral_0^{R^2} s^-gamma w ds
    psi = integral_0^{R^2} s^((beta-1)/2 - gamma) w w_s^beta ds

The weakly singular first cell of every s-integral is evaluated analytically
under the assumption that w is linear there (w(0) = 0, gamma < 1 keeps the
singularity integrable).  ``check_pointwise_bounds`` evaluates the residuals
of the pointwise and integral inequalities that drive the blow-up argument,
and ``blowup_time_bound`` returns the closed-form upper bound on the
blow-up time implied by the exponential growth of phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .masspde import MassState, ws_profile
from .model import ModelParams, MomentConstants, UnsupportedRegimeError
from .signal import SignalField

__all__ = [
    "FunctionalSample",
    "DegenerateBoundError",
    "eval_phi",
    "eval_psi",
    "check_pointwise_bounds",
    "blowup_time_bound",
    "mstar_sufficient",
]


class DegenerateBoundError(ValueError):
    """The blow-up time bound degenerates (nonpositive logarithm)."""


@dataclass
class FunctionalSample:
    """One time sample of the functionals and inequality residuals.

    Residuals are (bound minus bounded quantity) minimized over the domain,
    so nonnegative values mean the inequality holds; small negatives up to
    discretization error are expected.  ``scale_rvr`` and ``scale_wt`` carry
    the magnitudes of the corresponding bounding quantities for relative
    tolerance checks (the other scales are reconstructible from phi/psi).
    """

    t: float
    phi: float
    psi: float
    sup_u: float
    mass: float
    vmax: float
    residual_w_bound: float = math.nan
    residual_phi_bound: float = math.nan
    residual_vlower: float = math.nan
    residual_rvr: float = math.nan
    residual_wt: float = math.nan
    scale_rvr: float = math.nan
    scale_wt: float = math.nan


def _require_regime(params: ModelParams):
    spec = params.sensitivity
    if spec.family != "power_pure" or spec.beta <= 1 or params.n != 2 or params.tau != 0:
        raise UnsupportedRegimeError(
            "monitors are defined for tau = 0, n = 2, pure power sensitivity with beta > 1"
        )


def eval_phi(state: MassState, consts: MomentConstants) -> float:
    """Moment integral of w with weight s^-gamma; analytic first cell."""
    gamma = consts.gamma
    s, w, hs = state.s, state.w, state.hs
    first = w[1] * s[1] ** (1.0 - gamma) / (2.0 - gamma)
    rest = float(np.trapezoid(s[1:] ** (-gamma) * w[1:], dx=hs))
    return first + rest


def eval_psi(state: MassState, consts: MomentConstants, beta: float) -> float:
    """Auxiliary integral of w w_s^beta with weight s^((beta-1)/2 - gamma)."""
    gamma = consts.gamma
    s, w, hs = state.s, state.w, state.hs
    ws = np.maximum(ws_profile(w, hs), 0.0)
    expo = 0.5 * (beta - 1.0) - gamma
    slope0 = w[1] / s[1]
    first = slope0 ** (beta + 1.0) * s[1] ** (expo + 2.0) / (expo + 2.0)
    rest = float(np.trapezoid(s[1:] ** expo * w[1:] * ws[1:] ** beta, dx=hs))
    return first + rest


def _cumint_over_rho(values_over_rho_at0, f_over_x, x):
    # cumulative trapezoid of f(x)/x with the integrable x->0 limit supplied
    integrand = np.empty_like(f_over_x)
    integrand[0] = values_over_rho_at0
    integrand[1:] = f_over_x[1:] / x[1:]
    return np.concatenate(([0.0], np.cumsum(0.5 * np.diff(x) * (integrand[1:] + integrand[:-1]))))


def check_pointwise_bounds(
    state: MassState,
    signal: SignalField,
    consts: MomentConstants,
    params: ModelParams,
) -> FunctionalSample:
    """Populate a sample with all inequality residuals for one snapshot.

    The time-derivative residual needs the previous accepted profile; when it
    is unavailable the residual is reported as NaN.
    """
    _require_regime(params)
    beta, k, M = consts.beta, consts.k, params.M
    grid = state.rgrid
    s, w, hs = state.s, state.w, state.hs
    r = grid.r

    phi = eval_phi(state, consts)
    psi = eval_psi(state, consts, beta)
    spb = psi ** (1.0 / (2.0 * beta))

    residual_w_bound = float(np.min(consts.c38 * spb - w))
    residual_phi_bound = consts.c40 * spb - phi

    # pointwise signal floor M exp(-sqrt(m0/(2 pi) ln(R/r))), r in (0, R]
    with np.errstate(divide="ignore"):
        ln_term = np.log(grid.R / r[1:])
    vfloor = M * np.exp(-np.sqrt(consts.m0 / (2.0 * math.pi) * ln_term))
    residual_vlower = float(np.min(signal.v[1:] - vfloor))

    # r v_r >= U v / (1 + int_0^r U/rho d rho), U(r) = w(r^2)
    U = np.interp(r ** 2, s, w)
    cum = _cumint_over_rho(0.0, U, r)
    lower = U * signal.v / (1.0 + cum)
    residual_rvr = float(np.min((r * signal.vr - lower)[1:]))
    scale_rvr = float(np.max(lower))

    ws = np.maximum(ws_profile(w, hs), 0.0)
    half_int = 0.5 * _cumint_over_rho(w[1] / s[1], w, s)
    source = (
        M * k * consts.c37 * s ** (0.5 * (beta - 1.0)) * w * ws ** beta / (1.0 + half_int)
    )
    if state.prev is None:
        residual_wt = math.nan
        scale_wt = math.nan
    else:
        t_prev, w_prev = state.prev
        dt = state.t - t_prev
        wt = (w - w_prev) / dt
        wss = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / hs ** 2
        interior = slice(1, -1)
        lhs = wt[interior] - 4.0 * s[interior] * wss - source[interior]
        residual_wt = float(np.min(lhs))
        scale_wt = float(np.max(np.abs(4.0 * s[interior] * wss) + source[interior]))

    return FunctionalSample(
        t=state.t,
        phi=phi,
        psi=psi,
        sup_u=state.sup_u,
        mass=state.mass,
        vmax=float(signal.v.max()),
        residual_w_bound=residual_w_bound,
        residual_phi_bound=residual_phi_bound,
        residual_vlower=residual_vlower,
        residual_rvr=residual_rvr,
        residual_wt=residual_wt,
        scale_rvr=scale_rvr,
        scale_wt=scale_wt,
    )


def blowup_time_bound(consts: MomentConstants, params: ModelParams) -> float:
    """Upper bound (1/c45) ln(m0 R^(2(1-gamma)) / (2 pi (1-gamma) phi0)).

    Valid when the boundary level is at least the sufficient critical level;
    at lower levels the value is still reported but carries no guarantee.
    """
    _require_regime(params)
    if consts.c45 <= 0 or consts.phi0 <= 0:
        raise DegenerateBoundError("need positive c45 and phi0")
    arg = consts.m0 * consts.R ** (2.0 * (1.0 - consts.gamma)) / (
        2.0 * math.pi * (1.0 - consts.gamma) * consts.phi0
    )
    if arg <= 1.0:
        raise DegenerateBoundError("initial moment saturates its ceiling; bound degenerates")
    return math.log(arg) / consts.c45


def mstar_sufficient(consts: MomentConstants) -> float:
    """Smallest boundary level at which the growth inequality is self-sustaining.

    The drive term beats the loss terms for all psi >= c44 exactly when
    M >= 2 c41^2 (1 + z^(1/(2 beta)))^2 / z at z = c44 (the expression is
    decreasing in z), which operationalizes the existence of a finite
    critical level for each initial profile.
    """
    z = consts.c44
    wexp = 1.0 / (2.0 * consts.beta)
    return 2.0 * consts.c41 ** 2 * (1.0 + z ** wexp) ** 2 / z
