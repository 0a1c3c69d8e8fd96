"""
Shape and coefficient optimization.

The unknowns are the internal radius samples r_j and the series
coefficients a_n[k], packed into one flat vector.  J is minimized by
projected gradient descent with Armijo backtracking on central-difference
gradients.  In the alternating mode the coefficients are eliminated: J is
quadratic in them, so for every trial shape they are the solution of a
weighted linear least-squares problem and only the shape is iterated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BoundaryData,
    GeometryError,
    ShapeCurve,
    metric_coefficients,
    periodic_derivative,
    uniform_lines,
)
from .gmol import AnsatzCoeffs, SweepDivergence, ansatz_basis, fit_ansatz, gmol_sweep
from .residuals import (
    CostBreakdown,
    cost_from_residuals,
    laplacian_residual_array,
    neumann_flux_array,
    quadrature_weights,
)

log = logging.getLogger(__name__)

#: Objective value reported for trial points where the forward model fails.
PENALTY = 1e30


@dataclass
class ParamVector:
    """Shape samples followed by the (N-1) x 8 series coefficients."""

    values: np.ndarray
    M: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        extra = self.values.size - self.M
        if self.values.ndim != 1 or extra < 0 or extra % 8:
            raise ValueError(f"parameter vector of length {self.values.size} does not split as M + 8(N-1)")

    @classmethod
    def pack(cls, r, coeffs: AnsatzCoeffs | None = None) -> "ParamVector":
        r = np.asarray(r, dtype=float)
        tail = np.zeros(0) if coeffs is None else coeffs.values.ravel()
        return cls(np.concatenate([r, tail]), r.size)

    @property
    def shape_block(self) -> np.ndarray:
        return self.values[: self.M]

    @property
    def coeff_block(self) -> np.ndarray:
        return self.values[self.M:]

    def coeffs(self) -> AnsatzCoeffs:
        return AnsatzCoeffs(self.coeff_block.reshape(-1, 8))


@dataclass
class MinimizeOptions:
    max_iters: int = 500
    grad_tol: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    max_rejects: int = 10
    rel_step: float = 1e-6
    abs_step: float = 1e-8
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None


@dataclass
class OptResult:
    params: np.ndarray
    J: float
    history: list
    iterations: int
    reason: str
    cost: CostBreakdown | None = None
    shape: ShapeCurve | None = None
    coeffs: AnsatzCoeffs | None = None
    extras: dict = field(default_factory=dict)


def finite_difference_gradient(objective, p, rel_step: float = 1e-6, abs_step: float = 1e-8,
                               lower=None, upper=None) -> np.ndarray:
    """
    Central-difference gradient with steps max(rel_step |p_i|, abs_step).

    Where a central step would leave the box [lower, upper] the difference
    becomes one-sided (second order) on the feasible side.  Non-finite
    objective values are replaced by ``PENALTY`` so a failed forward solve
    shows up as a huge but finite slope.
    """
    if not rel_step > 0:
        raise ValueError("rel_step must be positive")
    p = np.array(getattr(p, "values", p), dtype=float)
    lo = np.broadcast_to(-np.inf if lower is None else lower, p.shape)
    hi = np.broadcast_to(np.inf if upper is None else upper, p.shape)
    grad = np.empty_like(p)
    steps = np.maximum(rel_step * np.abs(p), abs_step)
    f0 = None
    for i, h in enumerate(steps):
        e = np.zeros_like(p)
        e[i] = h
        up_ok, down_ok = p[i] + h <= hi[i], p[i] - h >= lo[i]
        if up_ok and down_ok or not (up_ok or down_ok):
            grad[i] = (_safe(objective(p + e)) - _safe(objective(p - e))) / (2.0 * h)
            continue
        if f0 is None:
            f0 = _safe(objective(p))
        sign = 1.0 if up_ok else -1.0
        f1 = _safe(objective(p + sign * e))
        f2 = _safe(objective(p + 2 * sign * e))
        grad[i] = sign * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    return grad


def _safe(value) -> float:
    value = float(value)
    return value if np.isfinite(value) else PENALTY


def _project(p, lower, upper):
    if lower is not None:
        p = np.maximum(p, lower)
    if upper is not None:
        p = np.minimum(p, upper)
    return p


def _free_gradient(p, g, lower, upper):
    # components pushing into an active bound cannot move
    g = np.array(g, dtype=float)
    if lower is not None:
        g[(p <= lower) & (g > 0)] = 0.0
    if upper is not None:
        g[(p >= upper) & (g < 0)] = 0.0
    return g


def _curvature_step(objective, p, f, g, initial_step, lower=None, upper=None, probe_size=1e-3):
    # one extra evaluation: Rayleigh quotient of the Hessian along the projected probe
    g = _free_gradient(p, g, lower, upper)
    gmax = float(np.max(np.abs(g))) if g.size else 0.0
    if gmax == 0.0:
        return initial_step
    cap = initial_step / gmax
    probe = probe_size * max(1.0, float(np.max(np.abs(p)))) / gmax
    q = _project(p - probe * g, lower, upper)
    dq = q - p
    dd = float(dq @ dq)
    if dd == 0.0:
        return cap
    curv = 2.0 * (_safe(objective(q)) - f - float(g @ dq)) / dd
    if not np.isfinite(curv) or curv <= 0:
        return cap
    return min(cap, 1.0 / curv)


def minimize(objective, p0, opts: MinimizeOptions | None = None, gradient=None, callback=None) -> OptResult:
    """
    Projected gradient descent with Armijo backtracking.

    Each iteration takes the trial step p - alpha g projected onto the
    bounds and halves alpha (``opts.backtrack``) until

        f(p_new) <= f(p) + c g . (p_new - p).

    Trial steps use the Barzilai-Borwein length of the previous step, capped
    at 100 times the last accepted length; the
    first one (and any step after non-positive curvature) comes from a
    one-evaluation curvature probe along -g, capped at
    ``initial_step / |g|_inf``.  A line search that started from a BB length
    and exhausted its backtracks is restarted once from the probe length.  The run ends
    when the projected gradient is below ``grad_tol`` in sup norm
    ("tolerance"), after ``max_iters`` ("max-iters"), or when
    ``max_rejects`` consecutive trial steps fail ("stalled").
    """
    opts = opts or MinimizeOptions()
    lower, upper = opts.lower, opts.upper
    p = _project(np.array(getattr(p0, "values", p0), dtype=float), lower, upper)
    f = float(objective(p))
    if not np.isfinite(f) or f >= PENALTY:
        raise ValueError("objective is not finite at the starting point")
    if gradient is None:
        def gradient(q):
            return finite_difference_gradient(objective, q, opts.rel_step, opts.abs_step, lower, upper)

    history = [f]
    g = gradient(p)
    alpha = _curvature_step(objective, p, f, g, opts.initial_step, lower, upper)
    from_probe = True
    reason = "max-iters"
    it = 0
    for it in range(1, opts.max_iters + 1):
        pg = _project(p - g, lower, upper) - p
        if float(np.max(np.abs(pg))) <= opts.grad_tol:
            reason = "tolerance"
            it -= 1
            break
        rejects = 0
        restarted = from_probe
        while True:
            trial = _project(p - alpha * g, lower, upper)
            step = trial - p
            f_trial = _safe(objective(trial))
            if f_trial <= f + opts.armijo * float(g @ step) and f_trial <= f:
                break
            rejects += 1
            if rejects >= opts.max_rejects:
                if restarted:
                    break
                # a BB length can overshoot by more than the backtracking range
                alpha = _curvature_step(objective, p, f, g, opts.initial_step, lower, upper)
                rejects, restarted = 0, True
                continue
            alpha *= opts.backtrack
        if rejects >= opts.max_rejects:
            reason = "stalled"
            it -= 1
            break
        g_new = gradient(trial)
        s, y = step, g_new - g
        p, f, g = trial, f_trial, g_new
        history.append(f)
        if callback is not None:
            callback(it, p, f)
        accepted = alpha
        sy = float(s @ y)
        from_probe = sy <= 0
        if from_probe:
            alpha = _curvature_step(objective, p, f, g, opts.initial_step, lower, upper)
        else:
            alpha = min(float(s @ s) / sy, 100.0 * accepted)
    return OptResult(params=p, J=f, history=history, iterations=it, reason=reason)


@dataclass
class InverseOptions:
    mode: str = "joint"
    max_iters: int = 500
    grad_tol: float = 1e-10
    rel_step: float = 1e-6
    smoothing: float = 0.0
    r_min: float | None = None
    plain_norms: bool = False
    sweep_tol: float = 1e-10
    sweep_max_iter: int = 10_000
    minimize: MinimizeOptions = field(default_factory=MinimizeOptions)


class InverseProblem:
    """
    Objective J(r, a) for a fixed set of boundary data.

    ``joint`` evaluates J at a full parameter vector; ``reduced`` evaluates
    min over a of J(r, a) for shape samples r only.
    """

    def __init__(self, boundary: BoundaryData, R: float, K: float, N: int, margin: float | None = None,
                 smoothing: float = 0.0, plain: bool = False, ridge: float = 1e-12):
        if N < 3:
            raise ValueError("the inverse problem needs N >= 3")
        self.boundary = boundary
        self.grid = boundary.grid
        self.R = float(R)
        self.K = float(K)
        self.N = int(N)
        self.margin = 0.02 * self.R if margin is None else float(margin)
        self.smoothing = float(smoothing)
        self.plain = plain
        self.ridge = ridge
        self.t = uniform_lines(self.N)
        M, N = self.grid.M, self.N
        base = np.zeros((N + 1, M))
        base[0], base[N] = boundary.u_o, boundary.u_f
        self._base = base

    def shape(self, r) -> ShapeCurve:
        return ShapeCurve(self.grid, r, self.R, self.margin)

    def _parts(self, shape: ShapeCurve):
        metric = metric_coefficients(shape, self.t)
        basis = ansatz_basis(self.boundary, metric)
        area, arc = quadrature_weights(shape, self.N, metric, self.plain)
        return metric, basis, area, arc

    def _smooth_term(self, r) -> float:
        if not self.smoothing:
            return 0.0
        d2 = np.roll(r, -1) - 2 * r + np.roll(r, 1)
        return self.smoothing * float(d2 @ d2)

    def breakdown(self, shape: ShapeCurve, coeffs: AnsatzCoeffs, parts=None) -> CostBreakdown:
        metric, basis, area, arc = parts or self._parts(shape)
        u = self._base.copy()
        u[1:-1] = np.einsum("nk,nkj->nj", coeffs.values, basis)
        lap = laplacian_residual_array(u, metric)
        mismatch = neumann_flux_array(u, shape.R - shape.r) - self.boundary.w
        return cost_from_residuals(lap, mismatch, area, arc, self.K)

    def joint(self, p) -> float:
        p = np.asarray(p, dtype=float)
        M = self.grid.M
        try:
            shape = self.shape(p[:M])
        except GeometryError:
            return PENALTY
        coeffs = AnsatzCoeffs(p[M:].reshape(self.N - 1, 8))
        return self.breakdown(shape, coeffs).J + self._smooth_term(p[:M])

    def coefficient_system(self, shape: ShapeCurve, parts=None):
        """
        Weighted linear least-squares system for the coefficients at a fixed shape.

        Returns (A, b) such that J = |A a - b|^2 for the flattened
        coefficients a.  Each row n of the field enters the Laplacian residual
        on lines n-1, n, n+1 only, so the blocks are assembled directly from
        the stencil weights.
        """
        metric, basis, area, arc = parts or self._parts(shape)
        N, M, d = self.N, self.grid.M, 1.0 / self.N
        L = N - 1
        f7, f8, f9 = metric.f7[1:-1, None, :], metric.f8[1:-1, None, :], metric.f9[1:-1, None, :]
        dB = periodic_derivative(basis, 1)
        ddB = periodic_derivative(basis, 2)
        sa = np.sqrt(area)[:, None, :]
        # centre: line m from its own row; lower: line m from row m-1; upper: line m from row m+1
        centre = (-2.0 / d**2 * basis + f9 * ddB) * sa
        B, Bu = basis[:-1], basis[1:]
        lower = (B / d**2 - f7[1:] * B / (2 * d) - f8[1:] * dB[:-1] / (2 * d)) * sa[1:]
        upper = (Bu / d**2 + f7[:-1] * Bu / (2 * d) + f8[:-1] * dB[1:] / (2 * d)) * sa[:-1]

        A = np.zeros((L * M + M, L * 8))
        blocks = A[: L * M].reshape(L, M, L, 8)
        idx = np.arange(L)
        blocks[idx, :, idx, :] = centre.transpose(0, 2, 1)
        blocks[idx[1:], :, idx[:-1], :] = lower.transpose(0, 2, 1)
        blocks[idx[:-1], :, idx[1:], :] = upper.transpose(0, 2, 1)

        sb = np.sqrt(self.K * arc)
        gap = shape.R - shape.r
        flux_rows = A[L * M:].reshape(M, L, 8)
        flux_rows[:, L - 1, :] = (-4.0 / (2 * d) / gap * sb)[:, None] * basis[L - 1].T
        if L >= 2:
            flux_rows[:, L - 2, :] = (1.0 / (2 * d) / gap * sb)[:, None] * basis[L - 2].T

        lap0 = laplacian_residual_array(self._base, metric) * np.sqrt(area)
        flux0 = (neumann_flux_array(self._base, gap) - self.boundary.w) * sb
        b = -np.concatenate([lap0.ravel(), flux0])
        return A, b

    def best_coeffs(self, shape: ShapeCurve, parts=None) -> AnsatzCoeffs:
        """
        Minimize J over the coefficients at a fixed shape.

        A ridge of ``self.ridge`` times the mean diagonal of the normal matrix
        keeps the solution unique (and smooth in the shape) when series terms
        coincide, e.g. f8 = 0 and constant f7 on a circle.
        """
        return self._ridge_solve(shape, parts)[0]

    def _ridge_solve(self, shape, parts=None):
        A, b = self.coefficient_system(shape, parts)
        n = A.shape[1]
        mu = self.ridge * float(np.sum(A * A)) / n
        # stacked least squares avoids squaring the condition number of A
        A_aug = np.vstack([A, np.sqrt(mu) * np.eye(n)])
        b_aug = np.concatenate([b, np.zeros(n)])
        a = np.linalg.lstsq(A_aug, b_aug, rcond=None)[0]
        return AnsatzCoeffs(a.reshape(self.N - 1, 8)), mu * float(a @ a)

    def reduced_gradient(self, r, rel_step: float = 1e-6, abs_step: float = 1e-8,
                         lower=None, upper=None) -> np.ndarray:
        """
        Gradient of ``reduced`` by the envelope theorem: central differences
        in the shape with the coefficients frozen at their optimum for ``r``
        (one-sided at the bounds ``lower``/``upper``).
        """
        r = np.asarray(r, dtype=float)
        coeffs = self.best_coeffs(self.shape(r))

        def frozen(q):
            try:
                shape = self.shape(q)
            except GeometryError:
                return PENALTY
            return self.breakdown(shape, coeffs).J + self._smooth_term(q)

        return finite_difference_gradient(frozen, r, rel_step, abs_step, lower, upper)

    def reduced(self, r) -> float:
        try:
            shape = self.shape(np.asarray(r, dtype=float))
        except GeometryError:
            return PENALTY
        parts = self._parts(shape)
        coeffs, ridge_term = self._ridge_solve(shape, parts)
        return self.breakdown(shape, coeffs, parts).J + ridge_term + self._smooth_term(shape.r)

    def warm_start(self, shape: ShapeCurve, tol: float = 1e-10, max_iter: int = 10_000) -> AnsatzCoeffs:
        try:
            field_, _ = gmol_sweep(self.boundary, shape, self.N, tol, max_iter)
        except SweepDivergence as exc:
            log.warning("warm-start sweep failed on line %d; using the affine blend", exc.line)
            return AnsatzCoeffs.affine(self.N)
        return fit_ansatz(field_, self.boundary, shape)


def solve_inverse(boundary: BoundaryData, R: float, K: float, N: int, shape0: ShapeCurve,
                  opts: InverseOptions | None = None, callback=None) -> OptResult:
    """
    Recover the internal boundary that makes the series field match ``boundary.w``.

    Coefficients start from a least-squares fit of the series to one line
    sweep at ``shape0``.  ``opts.mode`` selects joint descent over shape and
    coefficients or descent over the shape with coefficients re-fit at every
    evaluation ("alternating").
    """
    opts = opts or InverseOptions()
    if opts.mode not in ("joint", "alternating"):
        raise ValueError(f"unknown optimization mode {opts.mode!r}")
    if shape0.grid != boundary.grid:
        raise ValueError("initial shape and boundary data must share the angular grid")
    problem = InverseProblem(boundary, R, K, N, shape0.margin, opts.smoothing, opts.plain_norms)
    M = boundary.grid.M
    r_min = opts.r_min if opts.r_min is not None else problem.margin
    upper_r = R - problem.margin

    mopts = MinimizeOptions(**{**opts.minimize.__dict__})
    mopts.max_iters = opts.max_iters
    mopts.grad_tol = opts.grad_tol
    mopts.rel_step = opts.rel_step

    coeffs0 = problem.warm_start(shape0, opts.sweep_tol, opts.sweep_max_iter)
    if opts.mode == "joint":
        p0 = ParamVector.pack(shape0.r, coeffs0).values
        lower = np.full(p0.size, -np.inf)
        upper = np.full(p0.size, np.inf)
        lower[:M], upper[:M] = r_min, upper_r
        mopts.lower, mopts.upper = lower, upper
        result = minimize(problem.joint, p0, mopts, callback=callback)
        shape = problem.shape(result.params[:M])
        coeffs = AnsatzCoeffs(result.params[M:].reshape(N - 1, 8))
    else:
        mopts.lower, mopts.upper = r_min, upper_r
        result = minimize(
            problem.reduced,
            np.array(shape0.r),
            mopts,
            gradient=lambda q: problem.reduced_gradient(q, mopts.rel_step, mopts.abs_step, r_min, upper_r),
            callback=callback,
        )
        shape = problem.shape(result.params)
        coeffs = problem.best_coeffs(shape)
        result.params = ParamVector.pack(shape.r, coeffs).values
    result.shape = shape
    result.coeffs = coeffs
    result.cost = problem.breakdown(shape, coeffs)
    result.extras["initial_J"] = result.history[0]
    result.extras["mode"] = opts.mode
    return result
