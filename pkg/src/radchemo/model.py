"""Model configuration: sensitivities, initial data, and closed-form constants.

Everything here is closed-form bookkeeping; the numerics live in the solver
modules.  The chemotactic sensitivity S comes in two power-law families,

    power_shifted :  S(x) = K (1 + x)^beta        (boundedness hypotheses)
    power_pure    :  S(x) = k x^beta              (blow-up hypotheses, beta > 1)

and :func:`compute_constants` evaluates the explicit constant chain that
controls the moment-functional blow-up monitors in the pure family with
beta > 1 on a disk (n = 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .signal import RadialGrid

__all__ = [
    "SensitivitySpec",
    "ModelParams",
    "InitialData",
    "MomentConstants",
    "ConstantProfile",
    "GaussianProfile",
    "BumpProfile",
    "TabulatedProfile",
    "evaluate_sensitivity",
    "make_initial_data",
    "compute_constants",
    "ValidationError",
    "UnsupportedRegimeError",
]

_FAMILIES = ("power_shifted", "power_pure")


class ValidationError(ValueError):
    """Invalid model configuration or initial data."""


class UnsupportedRegimeError(ValueError):
    """Requested quantity is undefined in this parameter regime."""


@dataclass(frozen=True)
class SensitivitySpec:
    """Power-law chemotactic sensitivity.

    ``coeff`` is K for the shifted family and k for the pure family.  A zero
    coefficient is allowed and decouples the transport (useful as a control).
    """

    family: str
    beta: float
    coeff: float

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValidationError(f"unknown sensitivity family {self.family!r}")
        if not self.beta > 0:
            raise ValidationError("sensitivity exponent beta must be positive")
        if self.coeff < 0:
            raise ValidationError("sensitivity coefficient must be nonnegative")

    def value(self, xi):
        """S(xi) for scalar or array xi >= 0."""
        if self.family == "power_shifted":
            return self.coeff * (1.0 + xi) ** self.beta
        return self.coeff * np.power(xi, self.beta)

    def slope(self, xi):
        """dS/dxi; for the pure family with beta < 1 this is singular at 0."""
        if self.family == "power_shifted":
            return self.coeff * self.beta * (1.0 + xi) ** (self.beta - 1.0)
        return self.coeff * self.beta * np.power(xi, self.beta - 1.0)


def evaluate_sensitivity(spec: SensitivitySpec, xi):
    """Evaluate S(xi), rejecting negative arguments."""
    arr = np.asarray(xi, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("sensitivity argument must be nonnegative")
    out = spec.value(arr)
    return float(out) if np.isscalar(xi) or arr.ndim == 0 else out


@dataclass(frozen=True)
class ModelParams:
    """Physical configuration on the ball of radius R in R^n.

    ``tau`` selects the signal regime: 0 for an instantaneously equilibrating
    signal (elliptic solve for v), 1 for a dynamic signal.  ``M`` is the
    boundary signal level, ``T_end`` the simulation horizon.
    """

    n: int
    R: float
    tau: int
    sensitivity: SensitivitySpec
    M: float
    T_end: float

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("dimension n must be >= 2")
        if self.R <= 0:
            raise ValidationError("radius R must be positive")
        if self.tau not in (0, 1):
            raise ValidationError("tau must be 0 or 1")
        if self.M <= 0:
            raise ValidationError("boundary level M must be positive")
        if self.T_end <= 0:
            raise ValidationError("horizon T_end must be positive")


@dataclass(frozen=True)
class ConstantProfile:
    c: float


@dataclass(frozen=True)
class GaussianProfile:
    amplitude: float
    width: float


@dataclass(frozen=True)
class BumpProfile:
    """Compactly supported quartic bump a*(1-(r/radius)^2)^2 for r < radius."""

    amplitude: float
    radius: float


@dataclass(frozen=True, eq=False)
class TabulatedProfile:
    """Arbitrary radial profile given as (r, u0) samples; interpolated linearly."""

    r: np.ndarray
    u0: np.ndarray


InitialProfile = Union[ConstantProfile, GaussianProfile, BumpProfile, TabulatedProfile]


@dataclass(eq=False)
class InitialData:
    """Sampled initial fields and the total mass m0 on the sampling grid."""

    grid: RadialGrid
    u0: np.ndarray
    v0: Optional[np.ndarray]
    m0: float


def _sample_profile(profile: InitialProfile, r: np.ndarray) -> np.ndarray:
    if isinstance(profile, ConstantProfile):
        if profile.c < 0:
            raise ValidationError("constant profile level must be nonnegative")
        return np.full_like(r, float(profile.c))
    if isinstance(profile, GaussianProfile):
        if profile.amplitude <= 0 or profile.width <= 0:
            raise ValidationError("gaussian profile needs positive amplitude and width")
        return profile.amplitude * np.exp(-(r ** 2) / (2.0 * profile.width ** 2))
    if isinstance(profile, BumpProfile):
        if profile.amplitude <= 0 or profile.radius <= 0:
            raise ValidationError("bump profile needs positive amplitude and radius")
        x = np.clip(r / profile.radius, 0.0, 1.0)
        return profile.amplitude * (1.0 - x ** 2) ** 2
    if isinstance(profile, TabulatedProfile):
        rr = np.asarray(profile.r, dtype=np.float64)
        uu = np.asarray(profile.u0, dtype=np.float64)
        if rr.ndim != 1 or rr.shape != uu.shape or rr.size < 2:
            raise ValidationError("tabulated profile needs matching 1-d r and u0 arrays")
        if np.any(np.diff(rr) <= 0):
            raise ValidationError("tabulated profile radii must be strictly increasing")
        if uu.min() < 0:
            raise ValidationError("tabulated profile must be nonnegative")
        return np.interp(r, rr, uu)
    raise ValidationError(f"unknown initial profile {profile!r}")


def make_initial_data(
    params: ModelParams,
    profile: InitialProfile,
    grid: RadialGrid,
    v0: Optional[np.ndarray] = None,
) -> InitialData:
    """Sample an initial cell density and compute its mass.

    For the dynamic-signal regime a signal profile is required; by default
    v0 = M everywhere (recorded as such in run manifests).  The mass uses the
    grid's finite-volume quadrature so the transport scheme conserves exactly
    this number.
    """
    if grid.n != params.n or not math.isclose(grid.R, params.R):
        raise ValidationError("grid geometry does not match model parameters")
    u0 = _sample_profile(profile, grid.r)
    if u0.min() < 0:
        raise ValidationError("initial density must be nonnegative")
    m0 = grid.mass(u0)
    if m0 <= 0:
        raise ValidationError("initial density must not be identically zero")
    if params.tau == 1:
        if v0 is None:
            v0 = np.full_like(grid.r, params.M)
        else:
            v0 = np.asarray(v0, dtype=np.float64)
            if v0.shape != grid.r.shape:
                raise ValidationError("v0 shape does not match grid")
            if v0.min() <= 0:
                raise ValidationError("initial signal must be positive")
            if not math.isclose(float(v0[-1]), params.M, rel_tol=1e-12, abs_tol=1e-12):
                raise ValidationError("initial signal must equal M at the boundary")
    else:
        v0 = None
    return InitialData(grid=grid, u0=u0, v0=v0, m0=m0)


@dataclass(frozen=True)
class MomentConstants:
    """Closed-form constants for the moment-functional blow-up machinery.

    gamma weights the moment integral phi = int s^-gamma w ds; ell is the
    auxiliary exponent used in the intermediate integral bounds.  The c3x/c4x
    constants chain together as follows:

      c37  coefficient of the pointwise source lower bound in the w-equation
      c38  pointwise bound w <= c38 * psi^(1/(2 beta))
      c39  bound on int s^-ell w^2 ds in terms of psi^(1/beta)
      c40  moment bound phi <= c40 * psi^(1/(2 beta))
      c42, c43  quadrature factors entering the differential inequality
      c41  single constant absorbing all of the above in
           phi' >= (M/c41) psi/(1+psi^(1/(2 beta))) - c41 psi^(1/(2 beta)) - c41
      c44  trajectory floor for psi, (phi0/(2 c40))^(2 beta)
      c45  exponential growth rate of phi for super-critical boundary levels

    phi0 is the initial moment value.  All constants depend on (beta, R, m0)
    and the pure-family coefficient k; c45 additionally on M.
    """

    gamma: float
    ell: float
    c37: float
    c38: float
    c39: float
    c40: float
    c41: float
    c42: float
    c43: float
    c44: float
    c45: float
    phi0: float
    beta: float
    k: float
    M: float
    m0: float
    R: float


def moment_weight_supremum(beta: float) -> float:
    """Largest admissible moment exponent gamma for a given beta > 1."""
    if beta <= 1:
        raise UnsupportedRegimeError("moment machinery requires beta > 1")
    return (beta - 1.0) / (4.0 * beta - 2.0)


def _phi0_from_initial(u0: np.ndarray, grid: RadialGrid, m0: float, gamma: float) -> float:
    # phi0 = int_0^{R^2} s^-gamma w0(s) ds with s-nodes at r_i^2; w0 by
    # cumulative trapezoid of rho*u0, endpoint rescaled onto m0/(2 pi).
    r = grid.r
    s = r ** 2
    g = r * u0
    w0 = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(r) * (g[1:] + g[:-1]))))
    w0 *= (m0 / (2.0 * math.pi)) / w0[-1]
    first = w0[1] * s[1] ** (1.0 - gamma) / (2.0 - gamma)
    rest = float(np.trapezoid(s[1:] ** (-gamma) * w0[1:], s[1:]))
    return first + rest


def compute_constants(
    params: ModelParams,
    data: InitialData,
    gamma_override: Optional[float] = None,
) -> MomentConstants:
    """Evaluate the constant chain for the blow-up monitors.

    Defined only for the pure power family with beta > 1 on the disk (n = 2).
    gamma defaults to half its admissible supremum (beta-1)/(4 beta-2); ell to
    the midpoint of its admissible interval (2 gamma+1, 2+(2 gamma-beta-1)/(2 beta)).
    """
    spec = params.sensitivity
    if spec.family != "power_pure" or spec.beta <= 1:
        raise UnsupportedRegimeError(
            "constants are defined for the pure power sensitivity with beta > 1"
        )
    if params.n != 2:
        raise UnsupportedRegimeError("constants are defined on the disk (n = 2)")
    beta = spec.beta
    k = spec.coeff
    if k <= 0:
        raise UnsupportedRegimeError("pure power sensitivity needs a positive coefficient")
    R, m0 = params.R, data.m0
    gsup = moment_weight_supremum(beta)
    if gamma_override is None:
        gamma = 0.5 * gsup
    else:
        if not 0.0 < gamma_override < gsup:
            raise ValueError(f"gamma must lie in (0, {gsup:.6g})")
        gamma = float(gamma_override)
    ell_lo = 2.0 * gamma + 1.0
    ell_hi = 2.0 + (2.0 * gamma - beta - 1.0) / (2.0 * beta)
    ell = 0.5 * (ell_lo + ell_hi)

    two_pi = 2.0 * math.pi
    c37 = 2.0 ** beta * R ** (1.0 - beta) * math.exp(-m0 / (8.0 * math.pi * (beta - 1.0)))
    q = (2.0 * beta - 2.0) / (2.0 * gamma + beta - 1.0) * m0 / two_pi
    c38 = math.sqrt(2.0) * q ** ((beta - 1.0) / (2.0 * beta)) * R ** ((2.0 * gamma + beta - 1.0) / (2.0 * beta))
    # int_0^{R^2} rho^(-ell + (2 gamma+beta-1)/(2 beta)) d rho, exponent > -1
    e1 = 1.0 - ell + (2.0 * gamma + beta - 1.0) / (2.0 * beta)
    c39 = 2.0 * q ** ((beta - 1.0) / beta) * (R ** 2) ** e1 / e1
    c40 = c38 * (R ** 2) ** (1.0 - gamma) / (1.0 - gamma)
    e2 = ell - 2.0 * gamma - 1.0
    c42 = math.sqrt(c39) * math.sqrt((R ** 2) ** e2 / e2)
    e3 = ell - 1.0
    c43 = math.sqrt((R ** 2) ** e3 / e3)
    c41 = max(
        4.0 * gamma * (1.0 - gamma) * c42 + 4.0 * (1.0 - gamma) * R ** (-2.0 * gamma) * m0 / two_pi,
        max(2.0, math.sqrt(c39) * c43) / (k * c37),
    )
    phi0 = _phi0_from_initial(data.u0, data.grid, m0, gamma)
    ratio = phi0 / (2.0 * c40)
    c44 = ratio ** (2.0 * beta)
    c45 = (
        params.M
        / (2.0 * c40 * c41)
        * ratio ** (1.0 - 1.0 / (2.0 * beta))
        / (1.0 + ratio ** (1.0 / (2.0 * beta)))
    )
    return MomentConstants(
        gamma=gamma, ell=ell, c37=c37, c38=c38, c39=c39, c40=c40, c41=c41,
        c42=c42, c43=c43, c44=c44, c45=c45, phi0=phi0,
        beta=beta, k=k, M=params.M, m0=m0, R=R,
    )
