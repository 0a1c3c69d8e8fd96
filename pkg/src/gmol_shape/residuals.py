"""Laplacian residual, outer Neumann flux and the penalized cost J."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ShapeCurve, metric_coefficients, periodic_derivative, uniform_lines, MetricField
from .gmol import LineField


@dataclass(frozen=True)
class CostBreakdown:
    lap_l2_sq: float
    neumann_l2_sq: float
    J: float
    lap_inf: float
    neumann_inf: float
    K: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _check(field: LineField, shape: ShapeCurve):
    if field.grid != shape.grid:
        raise ValueError("field and shape must share the angular grid")


def laplacian_residual_array(u: np.ndarray, metric: MetricField) -> np.ndarray:
    """
    Residual of u_tt + f7 u_t + f8 u_t,theta + f9 u_theta,theta on interior lines.

    ``u`` has shape (..., N+1, M); leading axes are a batch.  Returns
    shape (..., N-1, M).
    """
    N = u.shape[-2] - 1
    d = 1.0 / N
    up, uc, um = u[..., 2:, :], u[..., 1:-1, :], u[..., :-2, :]
    u_tt = (up - 2.0 * uc + um) / d**2
    u_t = (up - um) / (2.0 * d)
    u_tq = periodic_derivative(u_t, 1)
    u_qq = periodic_derivative(uc, 2)
    return u_tt + metric.f7[1:-1] * u_t + metric.f8[1:-1] * u_tq + metric.f9[1:-1] * u_qq


def laplacian_residual(field: LineField, shape: ShapeCurve, metric: MetricField | None = None) -> np.ndarray:
    """
    Transformed Laplacian (divided by f0) at lines n = 1..N-1.

    Central differences in t over rows n-1, n, n+1; the mixed term is the
    theta-derivative of the central t-difference.  The physical Laplacian
    is ``f0 * residual``.
    """
    _check(field, shape)
    if metric is None:
        metric = metric_coefficients(shape, field.t)
    return laplacian_residual_array(field.u, metric)


def neumann_flux_array(u: np.ndarray, gap: np.ndarray) -> np.ndarray:
    N = u.shape[-2] - 1
    d = 1.0 / N
    u_t = (3.0 * u[..., N, :] - 4.0 * u[..., N - 1, :] + u[..., N - 2, :]) / (2.0 * d)
    return u_t / gap


def neumann_flux(field: LineField, shape: ShapeCurve) -> np.ndarray:
    """
    Outward normal derivative at r = R.

    du/dr = u_t / (R - r(theta)) with u_t from the one-sided second-order
    difference (3u_N - 4u_{N-1} + u_{N-2}) / (2d).
    """
    _check(field, shape)
    if field.N < 3:
        raise ValueError("flux stencil needs N >= 3")
    return neumann_flux_array(field.u, shape.R - shape.r)


def quadrature_weights(shape: ShapeCurve, N: int, metric: MetricField | None = None, plain: bool = False):
    """
    Weights for the discrete squared L2 norms.

    Returns (area, arc): area element rho (R - r) d (2 pi / M) on the
    interior lines and arc element R (2 pi / M) on the outer circle, or
    unit weights when ``plain`` is set.
    """
    M = shape.grid.M
    if plain:
        return np.ones((N - 1, M)), np.ones(M)
    if metric is None:
        metric = metric_coefficients(shape, uniform_lines(N))
    h_theta = 2.0 * np.pi / M
    area = metric.radius[1:-1] * (shape.R - shape.r) * (1.0 / N) * h_theta
    arc = np.full(M, shape.R * h_theta)
    return area, arc


def cost_from_residuals(lap: np.ndarray, mismatch: np.ndarray, area, arc, K: float) -> CostBreakdown:
    lap_l2_sq = float(np.sum(lap**2 * area))
    neumann_l2_sq = float(np.sum(mismatch**2 * arc))
    return CostBreakdown(
        lap_l2_sq=lap_l2_sq,
        neumann_l2_sq=neumann_l2_sq,
        J=lap_l2_sq + K * neumann_l2_sq,
        lap_inf=float(np.max(np.abs(lap))),
        neumann_inf=float(np.max(np.abs(mismatch))),
        K=float(K),
    )


def cost(field: LineField, shape: ShapeCurve, w, K: float, plain: bool = False) -> CostBreakdown:
    """
    Penalized cost J = ||residual||^2 + K ||flux - w||^2.

    With ``plain=True`` the norms are plain sums over grid nodes instead of
    area/arc weighted quadratures.
    """
    if K < 0:
        raise ValueError("penalty weight K must be non-negative")
    _check(field, shape)
    metric = metric_coefficients(shape, field.t)
    lap = laplacian_residual(field, shape, metric)
    mismatch = neumann_flux(field, shape) - np.asarray(w, dtype=float)
    area, arc = quadrature_weights(shape, field.N, metric, plain)
    return cost_from_residuals(lap, mismatch, area, arc, K)
