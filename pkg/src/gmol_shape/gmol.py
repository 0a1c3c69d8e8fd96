"""
Generalized method of lines on the transformed annulus.

The line equation at t_n (n = 1..N-1) is

    (u[n+1] - 2u[n] + u[n-1])/d**2 + f7 (u[n] - u[n-1])/d
        + f8 d/dtheta (u[n] - u[n-1])/d + f9 u[n]'' = 0

with u[0] = u_o and u[N] = u_f.  Adding 3u[n] to both sides gives the
line operator T_n whose fixed point defines u[n] = F_n(u[n+1], u_o); the
operators are built from line 1 upward and evaluated from line N-1 down.

Every T_n is linear in its array arguments, so each F_n is an affine map
v -> A_n v + c_n.  The sweep stores F_n as the augmented matrix [A_n | c_n]
and runs the Banach iteration directly on that matrix, starting from the
identity map (the iterate u_n^1 = u_{n+1}).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    AngularGrid,
    BoundaryData,
    MetricField,
    ShapeCurve,
    metric_coefficients,
    periodic_derivative,
    uniform_lines,
)

log = logging.getLogger(__name__)

#: Positions k of the ansatz coefficients a_n[k]; a_n[7], a_n[8] do not occur.
ANSATZ_INDICES = (1, 2, 3, 4, 5, 6, 9, 10)


class SweepDivergence(RuntimeError):
    """A line operator failed to reach its fixed point."""

    def __init__(self, line: int, report: "FixedPointReport"):
        super().__init__(
            f"fixed point for line {line} did not converge after {report.iterations} "
            f"iterations (last change {report.change:.3e})"
        )
        self.line = line
        self.report = report


@dataclass(frozen=True)
class FixedPointReport:
    iterations: int
    change: float
    converged: bool
    relaxation: float = 1.0


@dataclass(frozen=True)
class LineField:
    """Solution values u[n, j] on lines n = 0..N and angular nodes j."""

    grid: AngularGrid
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.grid.M or u.shape[0] < 3:
            raise ValueError(f"line field must have shape (N+1, {self.grid.M}), got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("line field has non-finite entries")
        object.__setattr__(self, "u", u)

    @property
    def N(self) -> int:
        return self.u.shape[0] - 1

    @property
    def d(self) -> float:
        return 1.0 / self.N

    @property
    def t(self) -> np.ndarray:
        return uniform_lines(self.N)


@dataclass
class AnsatzCoeffs:
    """Per-line coefficients a_n[k], stored as an (N-1, 8) array.

    Column order follows ``ANSATZ_INDICES``.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(ANSATZ_INDICES):
            raise ValueError(f"ansatz coefficients must have shape (N-1, 8), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ansatz coefficients must be finite")

    @property
    def N(self) -> int:
        return self.values.shape[0] + 1

    def __getitem__(self, nk):
        n, k = nk
        if k not in ANSATZ_INDICES:
            raise KeyError(f"a_n[{k}] is not part of the series; valid k are {ANSATZ_INDICES}")
        if not 1 <= n <= self.values.shape[0]:
            raise IndexError(f"line index {n} outside 1..{self.values.shape[0]}")
        return self.values[n - 1, ANSATZ_INDICES.index(k)]

    @classmethod
    def zeros(cls, N: int) -> "AnsatzCoeffs":
        return cls(np.zeros((N - 1, len(ANSATZ_INDICES))))

    @classmethod
    def affine(cls, N: int) -> "AnsatzCoeffs":
        """a_n[1] = t_n, a_n[2] = 1 - t_n, everything else zero."""
        c = cls.zeros(N)
        t = uniform_lines(N)[1:-1]
        c.values[:, 0] = t
        c.values[:, 1] = 1.0 - t
        return c


def _along_rows(coef: np.ndarray, like: np.ndarray) -> np.ndarray:
    return coef.reshape(coef.shape + (1,) * (like.ndim - 1))


def line_update(n, u_next, u_curr, u_inner_image, metric: MetricField, d: float):
    """
    Apply the line operator T_n.

    Returns (u_next + u_curr + v + f7 (u_curr - v) d + f8 (u_curr - v)' d
    + f9 u_curr'' d**2) / 3 with v = ``u_inner_image`` and coefficients taken
    on line ``n``.  The angular axis is axis 0, so trailing axes may carry a
    batch of columns (the operator form used by ``gmol_sweep``).
    """
    u_next = np.asarray(u_next, dtype=float)
    u_curr = np.asarray(u_curr, dtype=float)
    v = np.asarray(u_inner_image, dtype=float)
    f7 = _along_rows(metric.f7[n], u_curr)
    f8 = _along_rows(metric.f8[n], u_curr)
    f9 = _along_rows(metric.f9[n], u_curr)
    diff = u_curr - v
    out = u_next + u_curr + v + f7 * diff * d
    if np.any(metric.f8[n]):
        out = out + f8 * periodic_derivative(diff, 1, axis=0) * d
    if np.any(metric.f9[n]):
        out = out + f9 * periodic_derivative(u_curr, 2, axis=0) * d**2
    return out / 3.0


def fixed_point_solve(
    mapping,
    init,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    relaxation: float = 1.0,
    blowup: float = 1e8,
):
    """
    Iterate u <- (1 - w) u + w mapping(u) from ``init`` until the sup-norm
    change is at most ``tol``.

    ``relaxation`` w = 1 is the plain Banach iteration.  Iteration stops early
    (``converged=False``) once an iterate turns non-finite or the change
    exceeds ``blowup`` times the first change.

    Returns
    -------
    (ndarray, FixedPointReport)
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    u = np.array(init, dtype=float)
    change = np.inf
    first = None
    for k in range(1, max_iter + 1):
        new = mapping(u)
        if relaxation != 1.0:
            new = u + relaxation * (new - u)
        if not np.all(np.isfinite(new)):
            return u, FixedPointReport(k, float("inf"), False, relaxation)
        change = float(np.max(np.abs(new - u))) if new.size else 0.0
        u = new
        if change <= tol:
            return u, FixedPointReport(k, change, True, relaxation)
        if first is None:
            first = change
        elif change > blowup * first:
            return u, FixedPointReport(k, change, False, relaxation)
    return u, FixedPointReport(max_iter, change, False, relaxation)


def line_operators(
    boundary: BoundaryData,
    metric: MetricField,
    N: int,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    min_relaxation: float = 1.0 / 16,
):
    """
    Build the affine line maps F_n(v) = A_n v + c_n for n = 1..N-1.

    The plain Banach iteration is tried first; if a line's iteration blows up
    (stiff angular terms on fine grids), it is retried with the relaxation
    halved until ``min_relaxation``.

    Returns
    -------
    ops : list of (A_n, c_n) for n = 1..N-1
    reports : list of FixedPointReport
    """
    M = boundary.grid.M
    d = 1.0 / N
    u_o = boundary.u_o
    eye_aug = np.hstack([np.eye(M), np.zeros((M, 1))])
    inner0 = np.zeros((M, M + 1))
    inner0[:, -1] = u_o

    ops, reports = [], []
    prev = None
    for n in range(1, N):
        if prev is None:
            def inner(U):
                return inner0
        else:
            A_prev, c_prev = prev

            def inner(U, A_prev=A_prev, c_prev=c_prev):
                out = A_prev @ U
                out[:, -1] += c_prev
                return out

        def mapping(U, n=n, inner=inner):
            return line_update(n, eye_aug, U, inner(U), metric, d)

        relaxation = 1.0
        while True:
            U, report = fixed_point_solve(mapping, eye_aug, tol, max_iter, relaxation)
            if report.converged or relaxation / 2 < min_relaxation:
                break
            relaxation /= 2
            log.debug("line %d: retrying fixed point with relaxation %.4g", n, relaxation)
        reports.append(report)
        if not report.converged:
            raise SweepDivergence(n, report)
        prev = (U[:, :-1].copy(), U[:, -1].copy())
        ops.append(prev)
    return ops, reports


def gmol_sweep(
    boundary: BoundaryData,
    shape: ShapeCurve,
    N: int,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    metric: MetricField | None = None,
):
    """
    Solve the line equations by the generalized method of lines.

    Parameters
    ----------
    boundary, shape :
        Dirichlet data and internal boundary on a common angular grid.
    N : int
        Number of line intervals, d = 1/N.
    metric : MetricField, optional
        Override for the operator coefficients (testing hook); by default
        they come from ``metric_coefficients(shape, t_n)``.

    Returns
    -------
    (LineField, list of FixedPointReport)

    Raises
    ------
    SweepDivergence
        When the fixed point of some line does not converge; ``.line`` holds
        the offending index.
    """
    if N < 2:
        raise ValueError(f"need N >= 2, got {N}")
    if boundary.grid != shape.grid:
        raise ValueError("boundary data and shape must share the angular grid")
    if metric is None:
        metric = metric_coefficients(shape, uniform_lines(N))
    ops, reports = line_operators(boundary, metric, N, tol, max_iter)

    u = np.empty((N + 1, boundary.grid.M))
    u[0] = boundary.u_o
    u[N] = boundary.u_f
    for n in range(N - 1, 0, -1):
        A, c = ops[n - 1]
        u[n] = A @ u[n + 1] + c
    return LineField(boundary.grid, u), reports


def ansatz_basis(boundary: BoundaryData, metric: MetricField) -> np.ndarray:
    """
    Basis arrays of the truncated series on every interior line.

    Returns an array of shape (N-1, 8, M); ``basis[n-1, i]`` multiplies
    a_n[ANSATZ_INDICES[i]].
    """
    u_f, u_0 = boundary.u_f, boundary.u_o
    du_0, du_f, ddu_0, ddu_f = boundary.derivatives
    f7, f8, f9 = metric.f7[1:-1], metric.f8[1:-1], metric.f9[1:-1]
    ones = np.ones_like(f7)
    return np.stack(
        [
            ones * u_f,
            ones * u_0,
            f7 * u_f,
            f7 * u_0,
            f8 * du_f,
            f8 * du_0,
            f9 * ddu_f,
            f9 * ddu_0,
        ],
        axis=1,
    )


def ansatz_field(
    coeffs: AnsatzCoeffs,
    boundary: BoundaryData,
    shape: ShapeCurve,
    N: int,
    metric: MetricField | None = None,
) -> LineField:
    """Evaluate the truncated series on each interior line (rows 0 and N are the Dirichlet data)."""
    if coeffs.N != N:
        raise ValueError(f"coefficients are sized for N={coeffs.N}, not N={N}")
    if boundary.grid != shape.grid:
        raise ValueError("boundary data and shape must share the angular grid")
    if metric is None:
        metric = metric_coefficients(shape, uniform_lines(N))
    basis = ansatz_basis(boundary, metric)
    u = np.empty((N + 1, boundary.grid.M))
    u[0] = boundary.u_o
    u[N] = boundary.u_f
    u[1:N] = np.einsum("nk,nkj->nj", coeffs.values, basis)
    return LineField(boundary.grid, u)


def fit_ansatz(field: LineField, boundary: BoundaryData, shape: ShapeCurve) -> AnsatzCoeffs:
    """Least-squares fit of the series coefficients to a given line field, line by line."""
    N = field.N
    metric = metric_coefficients(shape, uniform_lines(N))
    basis = ansatz_basis(boundary, metric)
    values = np.empty((N - 1, len(ANSATZ_INDICES)))
    for n in range(1, N):
        values[n - 1] = np.linalg.lstsq(basis[n - 1].T, field.u[n], rcond=None)[0]
    return AnsatzCoeffs(values)
