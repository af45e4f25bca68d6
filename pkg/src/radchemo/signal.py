"""Radial grids and solvers for the consumed signal v.

Two regimes are supported.  With an instantaneously equilibrating signal
the concentration solves the elliptic problem

    v'' + (n-1)/r v' - u v = 0,   v'(0) = 0,   v(R) = M,

and with a dynamic signal one backward-Euler step of v_t = laplacian(v) - u v
is taken per call.  Both discretizations are finite-volume on a uniform
radial grid, which makes the operators M-matrices for u >= 0: the discrete
maximum principle 0 < v <= max(v_old, M) holds by construction.

The radial derivative v_r is the quantity the cell transport needs.  For the
elliptic regime it is evaluated through the integral identity

    v_r(r) = r^(1-n) * integral_0^r rho^(n-1) u v d(rho),

which is exact for the continuous problem and keeps full accuracy at the
boundary; for the dynamic regime (where that identity picks up a v_t term)
v_r comes from second-order differencing of v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs

__all__ = [
    "RadialGrid",
    "SignalField",
    "solve_elliptic",
    "step_parabolic_v",
    "gradient_l2_norm",
]

(_gtsv,) = get_lapack_funcs(("gtsv",), (np.empty(2, dtype=np.float64),))


def _solve_tridiag(dl, d, du, b):
    """Solve the tridiagonal system with diagonals (dl, d, du); overwrites inputs."""
    _, _, _, x, info = _gtsv(dl, d, du, b, True, True, True, True)
    if info != 0:
        raise RuntimeError(f"tridiagonal solve failed (LAPACK info={info})")
    return x


def sphere_surface_area(n: int) -> float:
    """Surface measure of the unit sphere boundary in R^n (2*pi for n=2, 4*pi for n=3)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform node-centered grid on [0, R] with finite-volume cell geometry.

    Nodes r_i = i*h, i = 0..N, h = R/N.  Cell i is bounded by the face radii
    (midpoints between nodes), with half cells at r=0 and r=R.  ``cell_volume``
    sums exactly to the ball volume, so ``mass`` is the exact invariant of the
    conservative transport scheme.
    """

    n: int
    R: float
    N: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension n must be >= 2")
        if self.R <= 0:
            raise ValueError("radius R must be positive")
        if self.N < 16:
            raise ValueError("grid needs at least 16 cells")
        r = np.linspace(0.0, self.R, self.N + 1)
        h = self.R / self.N
        omega = sphere_surface_area(self.n)
        face_r = 0.5 * (r[:-1] + r[1:])
        bounds = np.concatenate(([0.0], face_r, [self.R]))
        cell_volume = omega * (bounds[1:] ** self.n - bounds[:-1] ** self.n) / self.n
        face_area = omega * face_r ** (self.n - 1)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "face_r", face_r)
        object.__setattr__(self, "face_area", face_area)
        object.__setattr__(self, "cell_volume", cell_volume)
        # flux coefficients A_f/(h*V) on either side of each face
        object.__setattr__(self, "_hi", face_area / (h * cell_volume[:-1]))
        object.__setattr__(self, "_lo", face_area / (h * cell_volume[1:]))

    @property
    def domain_volume(self) -> float:
        return self.omega * self.R ** self.n / self.n

    def mass(self, u: np.ndarray) -> float:
        """Total integral of a nodal field over the ball (finite-volume quadrature)."""
        return float(self.cell_volume @ u)


@dataclass(eq=False)
class SignalField:
    """Signal concentration and its radial derivative on a grid."""

    grid: RadialGrid
    v: np.ndarray
    vr: np.ndarray


def _check_u(u, grid):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != grid.r.shape:
        raise ValueError("field shape does not match grid")
    if u.min() < -1e-12 * max(1.0, float(np.abs(u).max())):
        raise ValueError("cell density must be nonnegative")
    return np.maximum(u, 0.0)


def _vr_from_integral(u, v, grid):
    # v_r(r_i) = r_i^(1-n) * cumulative trapezoid of rho^(n-1) u v
    g = grid.r ** (grid.n - 1) * u * v
    integral = np.concatenate(([0.0], np.cumsum(0.5 * grid.h * (g[1:] + g[:-1]))))
    vr = np.zeros_like(v)
    vr[1:] = integral[1:] / grid.r[1:] ** (grid.n - 1)
    assert vr.min() >= 0.0, "v_r must be nonnegative for u >= 0, v >= 0"
    return vr


def _vr_from_differences(v, grid):
    vr = np.gradient(v, grid.h, edge_order=2)
    vr[0] = 0.0  # radial symmetry
    return vr


def solve_elliptic(u: np.ndarray, M: float, grid: RadialGrid) -> SignalField:
    """Solve laplacian(v) = u v with v(R) = M and symmetry at r = 0.

    The operator is assembled in flux form; the r = 0 row reduces to the
    regularized value 2n (v_1 - v_0)/h^2 for the Laplacian.  One tridiagonal
    elimination; v_r from the integral representation.
    """
    if M <= 0:
        raise ValueError("boundary level M must be positive")
    u = _check_u(u, grid)
    N = grid.N
    d = np.empty(N + 1)
    d[0] = grid._hi[0] + u[0]
    d[1:N] = grid._hi[1:N] + grid._lo[: N - 1] + u[1:N]
    d[N] = 1.0
    du = np.empty(N)
    du[:] = -grid._hi
    dl = np.empty(N)
    dl[: N - 1] = -grid._lo[: N - 1]
    dl[N - 1] = 0.0
    b = np.zeros(N + 1)
    b[N] = M
    v = _solve_tridiag(dl, d, du, b)
    assert np.isfinite(v).all(), "elliptic signal solve produced non-finite values"
    assert v.min() >= 0.0 and v.max() <= M * (1.0 + 1e-12), "discrete maximum principle violated"
    return SignalField(grid, v, _vr_from_integral(u, v, grid))


def step_parabolic_v(field: SignalField, u: np.ndarray, dt: float) -> SignalField:
    """One backward-Euler step of v_t = laplacian(v) - u v with v(R) fixed.

    The Dirichlet value is read off the current field; backward Euler keeps
    the discrete maximum principle max(v_new) <= max(max(v_old), v(R))
    unconditionally in dt.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    grid = field.grid
    u = _check_u(u, grid)
    M = float(field.v[-1])
    N = grid.N
    d = np.empty(N + 1)
    d[0] = 1.0 / dt + grid._hi[0] + u[0]
    d[1:N] = 1.0 / dt + grid._hi[1:N] + grid._lo[: N - 1] + u[1:N]
    d[N] = 1.0
    du = np.empty(N)
    du[:] = -grid._hi
    dl = np.empty(N)
    dl[: N - 1] = -grid._lo[: N - 1]
    dl[N - 1] = 0.0
    b = np.empty(N + 1)
    b[:N] = field.v[:N] / dt
    b[N] = M
    v = _solve_tridiag(dl, d, du, b)
    assert np.isfinite(v).all(), "signal step produced non-finite values"
    return SignalField(grid, v, _vr_from_differences(v, grid))


def gradient_l2_norm(field: SignalField) -> float:
    """L2 norm of the signal gradient over the ball, by trapezoid quadrature."""
    grid = field.grid
    integrand = grid.r ** (grid.n - 1) * field.vr ** 2
    return math.sqrt(grid.omega * float(np.trapezoid(integrand, dx=grid.h)))
