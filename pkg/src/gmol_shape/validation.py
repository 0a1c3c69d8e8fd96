"""
Oracle checks shared by the ``validate`` run mode and the acceptance tests.

Every check returns a dict with ``name``, ``value``, ``limit``, ``passed``
and, where useful, a ``detail`` entry.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import AngularGrid, BoundaryData, ShapeCurve
from .gmol import gmol_sweep
from .oracle import HarmonicMode, analytic_annulus, annulus_boundary, dense_reference_solve
from .residuals import cost, neumann_flux

LOG_MODE = HarmonicMode(0, 0.0, 1.0 / math.log(2.0))


def _check(name, value, limit, passed, **detail):
    return {"name": name, "value": float(value), "limit": float(limit), "passed": bool(passed), **detail}


def annulus_flux_check(N: int = 40, M: int = 64, limit: float = 0.01):
    """Flux of a forward sweep on the ln r annulus (r0=1, R=2) against 1/(2 ln 2)."""
    shape = ShapeCurve.circle(AngularGrid(M), 1.0, 2.0)
    boundary = annulus_boundary(LOG_MODE, shape)
    field, _ = gmol_sweep(boundary, shape, N)
    flux = neumann_flux(field, shape)
    exact = 1.0 / (2.0 * math.log(2.0))
    err = float(np.max(np.abs(flux - exact))) / exact
    return _check("annulus flux relative error", err, limit, err <= limit), shape, field, boundary


def convergence_trend_check(Ns=(10, 20, 40), M: int = 64, limit: float = 0.6):
    """Sup error of the sweep against the closed form must fall by ``limit`` or better per doubling."""
    shape = ShapeCurve.circle(AngularGrid(M), 1.0, 2.0)
    boundary = annulus_boundary(LOG_MODE, shape)
    errors = []
    for N in Ns:
        field, _ = gmol_sweep(boundary, shape, N)
        exact, _ = analytic_annulus(LOG_MODE, shape, N)
        errors.append(float(np.max(np.abs(field.u - exact.u))))
    ratios = [b / a for a, b in zip(errors, errors[1:])]
    worst = max(ratios)
    return _check("sweep convergence ratio", worst, limit, worst <= limit, errors=errors, ratios=ratios)


def cross_oracle_check(N: int = 40, M: int = 64, refine: int = 2, limit: float = 0.03, solver_tol: float = 1e-10):
    """Sweep vs dense solver on r = 1 + 0.1 sin(2 pi x), R = 3, compared at the sweep nodes."""
    R = 3.0

    def data(M_):
        grid = AngularGrid(M_)
        x = grid.x
        shape = ShapeCurve(grid, 1.0 + 0.1 * np.sin(2 * np.pi * x), R)
        boundary = BoundaryData(grid, 0.5 * np.cos(2 * np.pi * x) + 0.8, 0.5 * np.sin(2 * np.pi * x) + 1.0)
        return shape, boundary

    shape, boundary = data(M)
    field, _ = gmol_sweep(boundary, shape, N)
    fine_shape, fine_boundary = data(M * refine)
    dense, report = dense_reference_solve(fine_boundary, fine_shape, N * refine, solver_tol=solver_tol)
    diff = float(np.max(np.abs(field.u - dense.u[::refine, ::refine])))
    return _check("sweep vs dense sup difference", diff, limit, diff <= limit and report.converged,
                  dense_sweeps=report.sweeps)


def dense_order_check(k: int, sizes=(64, 128), limit: float = 3.0, solver_tol: float = 1e-10):
    """Dense solver error ratio under grid doubling for analytic mode ``k`` on r0 = 1, R = 2."""
    mode = LOG_MODE if k == 0 else HarmonicMode(k, 1.0, 0.5)
    errors = []
    for n in sizes:
        shape = ShapeCurve.circle(AngularGrid(n), 1.0, 2.0)
        boundary = annulus_boundary(mode, shape)
        field, report = dense_reference_solve(boundary, shape, n, solver_tol=solver_tol)
        exact, _ = analytic_annulus(mode, shape, n)
        errors.append(float(np.max(np.abs(field.u - exact.u))) if report.converged else math.inf)
    ratio = errors[0] / errors[1] if errors[1] > 0 else math.inf
    return _check(f"dense order ratio k={k}", ratio, limit, ratio >= limit, errors=errors)


def oracle_checks():
    """
    Run the oracle suite.

    Returns
    -------
    (list of dict, ShapeCurve, LineField, CostBreakdown)
        Check table plus the annulus run used for the output files.
    """
    flux, shape, field, boundary = annulus_flux_check()
    checks = [flux, convergence_trend_check(), cross_oracle_check()]
    checks += [dense_order_check(k) for k in (0, 1, 2)]
    return checks, shape, field, cost(field, shape, boundary.w, 1.0)
