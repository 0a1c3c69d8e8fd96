"""
Independent reference solutions.

``analytic_annulus`` samples separable harmonics on a concentric annulus;
``dense_reference_solve`` discretizes the full transformed operator with
central differences on the whole (t, theta) grid and relaxes it by
red-black SOR.  Neither shares code with the line recursion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import AngularGrid, BoundaryData, GeometryError, ShapeCurve, metric_coefficients, uniform_lines
from .gmol import LineField

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HarmonicMode:
    """u = a + b ln r for k = 0, else (a r**k + b r**-k) trig(k theta)."""

    k: int
    a: float
    b: float
    phase: str = "cos"

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError("mode number must be a non-negative integer")
        if self.phase not in ("cos", "sin"):
            raise ValueError("phase must be 'cos' or 'sin'")

    def _trig(self, theta):
        return np.cos(self.k * theta) if self.phase == "cos" else np.sin(self.k * theta)

    def value(self, r, theta):
        r = np.asarray(r, dtype=float)
        if self.k == 0:
            return self.a + self.b * np.log(r) + 0.0 * theta
        return (self.a * r**self.k + self.b * r ** (-self.k)) * self._trig(theta)

    def radial_derivative(self, r, theta):
        r = np.asarray(r, dtype=float)
        if self.k == 0:
            return self.b / r + 0.0 * theta
        k = self.k
        return k * (self.a * r ** (k - 1) - self.b * r ** (-k - 1)) * self._trig(theta)


def analytic_annulus(mode: HarmonicMode, shape: ShapeCurve, N: int, M: int | None = None):
    """
    Sample a harmonic mode on the (t_n, x_j) grid of a concentric annulus.

    Returns
    -------
    (LineField, ndarray)
        The sampled field and the exact outward flux at r = R.
    """
    if not shape.is_circle:
        raise GeometryError("analytic annulus solutions need a constant-radius inner boundary")
    grid = shape.grid
    if M is not None and M != grid.M:
        raise ValueError(f"M={M} does not match the shape grid ({grid.M})")
    r0, R = float(shape.r[0]), shape.R
    t = uniform_lines(N)
    rho = r0 + t[:, None] * (R - r0)
    theta = grid.theta[None, :]
    u = mode.value(rho, theta) * np.ones((N + 1, grid.M))
    flux = mode.radial_derivative(R, grid.theta) * np.ones(grid.M)
    return LineField(grid, u), flux


def annulus_boundary(mode: HarmonicMode, shape: ShapeCurve) -> BoundaryData:
    """Dirichlet data and true flux of ``mode`` on a concentric annulus."""
    field, flux = analytic_annulus(mode, shape, 2)
    return BoundaryData(shape.grid, field.u[0], field.u[-1], flux)


def dense_residual(u: np.ndarray, metric, d: float, h: float) -> np.ndarray:
    """Full-grid central-difference residual at interior lines; shape (N-1, M)."""
    up, uc, um = u[2:], u[1:-1], u[:-2]

    def east(a):
        return np.roll(a, -1, axis=1)

    def west(a):
        return np.roll(a, 1, axis=1)

    u_tt = (up - 2 * uc + um) / d**2
    u_t = (up - um) / (2 * d)
    u_tq = (east(up) - west(up) - east(um) + west(um)) / (4 * d * h)
    u_qq = (east(uc) - 2 * uc + west(uc)) / h**2
    return u_tt + metric.f7[1:-1] * u_t + metric.f8[1:-1] * u_tq + metric.f9[1:-1] * u_qq


@dataclass(frozen=True)
class DenseReport:
    sweeps: int
    residual: float
    converged: bool


def dense_reference_solve(
    boundary: BoundaryData,
    shape: ShapeCurve,
    N_fine: int,
    M_fine: int | None = None,
    solver_tol: float = 1e-10,
    omega: float = 1.8,
    max_sweeps: int = 200_000,
    check_every: int = 20,
    initial: np.ndarray | None = None,
):
    """
    Solve the transformed Laplace equation on the full (t, theta) grid.

    All terms including the mixed derivative use second-order central
    differences; the mixed term uses the four-point cross stencil.  Nodes
    are relaxed red-black (colour = (n + j) mod 2) with over-relaxation
    ``omega`` until the sup-norm of the residual is at most ``solver_tol``.

    ``boundary`` and ``shape`` must live on an angular grid with ``M_fine``
    nodes (pass samples of the data on the fine grid).

    Returns
    -------
    (LineField, DenseReport)
    """
    grid = shape.grid
    if boundary.grid != grid:
        raise ValueError("boundary data and shape must share the angular grid")
    if M_fine is not None and M_fine != grid.M:
        raise ValueError(f"M_fine={M_fine} does not match the data grid ({grid.M})")
    N = int(N_fine)
    if N < 2:
        raise ValueError("need at least two line intervals")
    M = grid.M
    d = 1.0 / N
    h = 2.0 * np.pi / M
    metric = metric_coefficients(shape, uniform_lines(N))

    t = uniform_lines(N)[:, None]
    if initial is None:
        u = (1 - t) * boundary.u_o + t * boundary.u_f
    else:
        u = np.array(initial, dtype=float)
        u[0], u[-1] = boundary.u_o, boundary.u_f

    f7, f8, f9 = metric.f7[1:-1], metric.f8[1:-1], metric.f9[1:-1]
    diag = 2.0 / d**2 + 2.0 * f9 / h**2
    step = omega / diag
    n_idx, j_idx = np.meshgrid(np.arange(1, N), np.arange(M), indexing="ij")
    colours = [((n_idx + j_idx) % 2) == c for c in (0, 1)]

    residual = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        for mask in colours:
            res = dense_residual(u, metric, d, h)
            interior = u[1:-1]
            interior[mask] += step[mask] * res[mask]
        sweeps += 1
        if sweeps % check_every == 0:
            residual = float(np.max(np.abs(dense_residual(u, metric, d, h))))
            if not np.isfinite(residual):
                break
            if residual <= solver_tol:
                return LineField(grid, u), DenseReport(sweeps, residual, True)
    residual = float(np.max(np.abs(dense_residual(u, metric, d, h))))
    log.warning("dense solve stopped after %d sweeps with residual %.3e", sweeps, residual)
    converged = residual <= solver_tol
    return LineField(grid, u) if np.all(np.isfinite(u)) else None, DenseReport(sweeps, residual, converged)
