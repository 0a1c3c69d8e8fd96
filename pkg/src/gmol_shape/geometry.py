"""
Annular domain, boundary-fitted transform and metric coefficients.

The internal boundary is a star-shaped curve r(theta) sampled on a uniform
periodic grid in the normalized angle x in [0, 1), theta = 2*pi*x.  The
radial blend

    t = (r - r(theta)) / (R - r(theta))

maps the annulus onto the rectangle [0, 1] x [0, 2*pi).  In (t, theta) the
Laplace operator divided by its leading coefficient f0 reads

    u_tt + f7 u_t + f8 u_t,theta + f9 u_theta,theta

and ``metric_coefficients`` tabulates f0..f9 on a (t_n, x_j) grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    """Raised when a shape or grid violates the domain invariants."""


@dataclass(frozen=True)
class AngularGrid:
    """Uniform periodic grid x_j = j/M on [0, 1)."""

    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 8 or self.M % 2:
            raise GeometryError(f"angular node count must be even and >= 8, got {self.M}")

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * self.x


def _as_samples(values, grid: AngularGrid, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(grid.M, float(arr))
    if arr.shape != (grid.M,):
        raise GeometryError(f"{name} must have length {grid.M}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ShapeCurve:
    """Internal radius samples r_j with the fixed external radius R.

    ``margin`` defaults to 2% of R and is the smallest admissible gap R - r_j.
    """

    grid: AngularGrid
    r: np.ndarray
    R: float
    margin: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "r", _as_samples(self.r, self.grid, "shape samples"))
        R = float(self.R)
        if not np.isfinite(R) or R <= 0:
            raise GeometryError(f"external radius must be positive, got {self.R}")
        object.__setattr__(self, "R", R)
        margin = 0.02 * R if self.margin is None else float(self.margin)
        if not margin > 0:
            raise GeometryError(f"margin must be positive, got {margin}")
        object.__setattr__(self, "margin", margin)
        if np.any(self.r <= 0):
            raise GeometryError("internal radius must be positive at every node")
        gap = R - self.r
        if np.any(gap < margin * (1 - 1e-12)):
            j = int(np.argmin(gap))
            raise GeometryError(
                f"gap R - r = {gap[j]:.6g} at node {j} is below the margin {margin:.6g}"
            )

    @classmethod
    def circle(cls, grid: AngularGrid, radius: float, R: float, margin: float | None = None):
        return cls(grid, np.full(grid.M, float(radius)), R, margin)

    @classmethod
    def from_function(cls, grid: AngularGrid, func, R: float, margin: float | None = None):
        """Sample ``func(x)`` on the normalized angular nodes."""
        return cls(grid, np.asarray(func(grid.x), dtype=float) * np.ones(grid.M), R, margin)

    def shifted(self, s: int) -> "ShapeCurve":
        return ShapeCurve(self.grid, np.roll(self.r, s), self.R, self.margin)

    @property
    def is_circle(self) -> bool:
        return bool(np.all(self.r == self.r[0]))


@dataclass(frozen=True)
class BoundaryData:
    """Inner Dirichlet ``u_o``, outer Dirichlet ``u_f`` and outer Neumann target ``w``."""

    grid: AngularGrid
    u_o: np.ndarray
    u_f: np.ndarray
    w: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "u_o", _as_samples(self.u_o, self.grid, "u_o"))
        object.__setattr__(self, "u_f", _as_samples(self.u_f, self.grid, "u_f"))
        w = np.zeros(self.grid.M) if self.w is None else self.w
        object.__setattr__(self, "w", _as_samples(w, self.grid, "w"))

    @cached_property
    def derivatives(self):
        """First and second theta-derivatives (u_o', u_f', u_o'', u_f'')."""
        return (
            periodic_derivative(self.u_o, 1),
            periodic_derivative(self.u_f, 1),
            periodic_derivative(self.u_o, 2),
            periodic_derivative(self.u_f, 2),
        )

    def shifted(self, s: int) -> "BoundaryData":
        return BoundaryData(
            self.grid, np.roll(self.u_o, s), np.roll(self.u_f, s), np.roll(self.w, s)
        )

    def with_flux(self, w) -> "BoundaryData":
        return BoundaryData(self.grid, self.u_o, self.u_f, w)


@dataclass(frozen=True)
class MetricField:
    """Coefficients of the transformed Laplace operator on a (t_n, x_j) grid.

    ``f1``, ``f2``, ``f3`` depend on the angle only (shape ``(M,)``); all
    other fields have shape ``(len(t), M)``.  ``radius`` is the physical
    radius r(t_n, x_j).
    """

    t: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f0: np.ndarray
    f4: np.ndarray
    f5: np.ndarray
    f6: np.ndarray
    f7_tilde: np.ndarray
    f8_tilde: np.ndarray
    f9_tilde: np.ndarray
    f7: np.ndarray
    f8: np.ndarray
    f9: np.ndarray
    radius: np.ndarray
    extras: dict = field(default_factory=dict, compare=False)

    def frozen_operator(self) -> "MetricField":
        """Copy with f7 = f8 = f9 = 0 (pure second difference in t)."""
        zero = np.zeros_like(self.f7)
        return MetricField(**{**self.__dict__, "f7": zero, "f8": zero, "f9": zero})


@lru_cache(maxsize=32)
def _neighbours(M: int):
    j = np.arange(M)
    return (j + 1) % M, (j - 1) % M


def periodic_derivative(samples, order: int = 1, axis: int = -1) -> np.ndarray:
    """
    Central-difference theta-derivative of periodic samples on x_j = j/M.

    The stencil acts along ``axis`` with periodic wraparound and is scaled by
    (1/(2*pi))**order because d/dtheta = (1/(2*pi)) d/dx.

    Parameters
    ----------
    samples : array_like
        Values at the M angular nodes along ``axis`` (other axes are batch axes).
    order : {1, 2}
        Derivative order.

    Returns
    -------
    ndarray
        Same shape as ``samples``; second-order accurate, exact for constants.
    """
    u = np.asarray(samples, dtype=float)
    if u.ndim == 0:
        raise ValueError("periodic_derivative needs at least one axis of samples")
    M = u.shape[axis]
    if M < 4:
        raise ValueError(f"need at least 4 periodic samples, got {M}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if not np.all(np.isfinite(u)):
        raise ValueError("periodic_derivative received non-finite samples")
    h_theta = TWO_PI / M
    nxt, prv = _neighbours(M)
    up = np.take(u, nxt, axis=axis)
    um = np.take(u, prv, axis=axis)
    if order == 1:
        return (up - um) / (2.0 * h_theta)
    return (up - 2.0 * u + um) / h_theta**2


def uniform_lines(N: int) -> np.ndarray:
    """Line positions t_n = n/N for n = 0..N."""
    if N < 2:
        raise ValueError(f"need N >= 2 line intervals, got {N}")
    return np.arange(N + 1) / N


def metric_coefficients(shape: ShapeCurve, t_values) -> MetricField:
    """
    Tabulate f0..f9 of the transformed Laplace operator at every (t_n, x_j).

    With g = R - r(theta) and s = f1 + t*f2 = (t - 1) r'/g:

        f1 = -r'/g,  f2 = r'/g,  f3 = 1/g**2
        f4 = s**2,   f5 = f1' + t f2' + f2 s,   f6 = 2 s
        rho = t g + r(theta)
        f0 = 1/g**2 + f4/rho**2
        f7 = (1/(rho g) + f5/rho**2) / f0
        f8 = (f6/rho**2) / f0
        f9 = (1/rho**2) / f0

    Primes are theta-derivatives taken with ``periodic_derivative``.
    """
    t = np.asarray(t_values, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("t_values must be a 1-D array with at least two entries")
    if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_values must increase strictly from 0 to 1")

    r = np.asarray(shape.r)
    gap = shape.R - r
    if np.any(gap < shape.margin * (1 - 1e-12)):
        raise GeometryError("transform degenerates: R - r(theta) below margin")

    dr = periodic_derivative(r, 1)
    f1 = -dr / gap
    f2 = dr / gap
    f3 = 1.0 / gap**2
    df1 = periodic_derivative(f1, 1)
    df2 = periodic_derivative(f2, 1)

    tt = t[:, None]
    s = f1 + tt * f2
    f4 = s**2
    f5 = df1 + tt * df2 + f2 * s
    f6 = 2.0 * s
    rho = tt * gap + r
    if np.any(rho <= 0):
        raise GeometryError("physical radius must stay positive inside the domain")
    inv_rho2 = 1.0 / rho**2
    f0 = f3 + f4 * inv_rho2
    f7_tilde = 1.0 / (rho * gap) + f5 * inv_rho2
    f8_tilde = f6 * inv_rho2
    f9_tilde = inv_rho2
    return MetricField(
        t=t,
        f1=f1,
        f2=f2,
        f3=f3,
        f0=f0,
        f4=f4,
        f5=f5,
        f6=f6,
        f7_tilde=f7_tilde,
        f8_tilde=f8_tilde,
        f9_tilde=f9_tilde,
        f7=f7_tilde / f0,
        f8=f8_tilde / f0,
        f9=f9_tilde / f0,
        radius=rho,
    )
