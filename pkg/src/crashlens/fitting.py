"""Constrained least-squares fitting of the log-periodic power law.

The amplitudes ``A``, ``B``, ``C`` (and ``D``) enter linearly once ``t_c``,
``alpha``, ``omega`` and the phases are fixed, so every candidate of the
nonlinear search is scored by an exact linear solve. The remaining search runs
as bounded Nelder-Mead from several seeded start points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .data_io import PriceSeries
from .model import TWO_PI, DomainError, LpplParams, lppl_eval, wrap_phase
from .scaling import ScalingEstimate

# below this |B| the oscillation amplitude C = (BC)/B is unidentifiable
B_ZERO_THRESHOLD = 1e-12
# reciprocal condition number of the scaled normal matrix treated as singular
RCOND_LIMIT = 1e-13
# t_c is kept at least this far beyond the last observation
TC_MARGIN = 1e-3
STAGE1_GRID = 32


class DegenerateDesignError(ValueError):
    """The linear sub-problem has no unique solution."""


class InfeasibleBoxError(ValueError):
    """No admissible critical time lies beyond the last observation."""


class LinearSolution(NamedTuple):
    A: float
    B: float
    C: float
    sse: float
    D: Optional[float] = None


@dataclass(frozen=True)
class FitSpec:
    """Search box and optimizer settings.

    ``t_c=None`` means ``(t_last + 1, t_last + span / 2)`` for the fitted series.
    Phase boxes at least ``2*pi`` wide are searched as periodic coordinates.
    ``B`` is always constrained negative.
    """

    t_c: Optional[tuple] = None
    omega: tuple = (15.0, 20.0)
    alpha: tuple = (0.1, 1.0)
    phi: tuple = (0.0, TWO_PI)
    psi: tuple = (0.0, TWO_PI)
    harmonic_order: int = 1
    multistart: int = 16
    seed: int = 0
    max_iterations: int = 4000
    tolerance: float = 1e-12
    screen_factor: int = 64

    def __post_init__(self):
        boxes = {"omega": self.omega, "alpha": self.alpha, "phi": self.phi, "psi": self.psi}
        if self.t_c is not None:
            boxes["t_c"] = self.t_c
        for name, (lo, hi) in boxes.items():
            if not lo <= hi:
                raise ValueError(f"empty {name} interval {(lo, hi)}")
        if not (0 < self.alpha[0] and self.alpha[1] <= 1):
            raise ValueError(f"alpha box must lie within (0, 1], got {self.alpha}")
        if not self.omega[0] > 0:
            raise ValueError("omega box must be positive")
        if self.harmonic_order not in (1, 2):
            raise ValueError("harmonic_order must be 1 or 2")
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")
        if self.screen_factor < 1:
            raise ValueError("screen_factor must be >= 1")

    def tc_box(self, series: PriceSeries) -> tuple:
        t_last = float(series.times[-1])
        if self.t_c is None:
            span = float(series.times[-1] - series.times[0])
            return (t_last + 1.0, t_last + max(span / 2, 2.0))
        return tuple(float(v) for v in self.t_c)


@dataclass(eq=False)
class FitResult:
    params: LpplParams
    sse: float
    mse: float
    df: int
    r_squared: float
    residuals: np.ndarray
    converged: bool
    starts_tried: int
    at_bounds: tuple = ()
    start_points: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "sse": self.sse,
            "mse": self.mse,
            "df": self.df,
            "r_squared": self.r_squared,
            "converged": self.converged,
            "starts_tried": self.starts_tried,
            "at_bounds": list(self.at_bounds),
        }


def _series_arrays(series: PriceSeries) -> tuple:
    return series.times, series.log_prices


def _regressors(t: np.ndarray, t_c: float, alpha: float, omega: float, phi: float, psi=None) -> np.ndarray:
    x = t_c - t
    if np.any(~(x > 0)):
        raise DomainError(f"all observation times must precede t_c={t_c!r}")
    lx = np.log(x)
    f = x**alpha
    cols = [np.ones_like(t), f, f * np.cos(omega * lx + phi)]
    if psi is not None:
        cols.append(f * np.cos(2.0 * omega * lx + psi))
    return np.column_stack(cols)


def _solve_normal(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    if np.any(norms == 0):
        raise DegenerateDesignError("a regressor column is identically zero")
    Xs = X / norms
    G = Xs.T @ Xs
    # 1-norm reciprocal condition estimate is cheap enough per evaluation
    if 1.0 / np.linalg.cond(G) < RCOND_LIMIT:
        raise DegenerateDesignError("normal matrix is singular for these nonlinear parameters")
    return np.linalg.solve(G, Xs.T @ y) / norms


def reduce_linear(
    series: PriceSeries,
    t_c: float,
    alpha: float,
    omega: float,
    phi: float,
    psi: Optional[float] = None,
) -> LinearSolution:
    """Least-squares ``A``, ``B``, ``C`` (and ``D`` when ``psi`` is given) for fixed nonlinear parameters.

    The model is linear in ``(A, B, B*C[, B*D])`` on the regressors
    ``1, f, f cos(omega ln x + phi)[, f cos(2 omega ln x + psi)]`` with
    ``x = t_c - t`` and ``f = x**alpha``. ``C`` and ``D`` are recovered by
    dividing by ``B`` and set to 0 when ``|B| < 1e-12``.

    Raises:
        DomainError: an observation at or after ``t_c``.
        DegenerateDesignError: the regressors are linearly dependent.
    """
    t, y = _series_arrays(series)
    X = _regressors(t, t_c, alpha, omega, phi, psi)
    coef = _solve_normal(X, y)
    resid = y - X @ coef
    A, B = float(coef[0]), float(coef[1])
    small = abs(B) < B_ZERO_THRESHOLD
    C = 0.0 if small else float(coef[2]) / B
    D = None
    if psi is not None:
        D = 0.0 if small else float(coef[3]) / B
    return LinearSolution(A, B, C, float(resid @ resid), D)


def objective(params: LpplParams, series: PriceSeries) -> float:
    """Sum of squared residuals of ``series`` against the model curve."""
    resid = series.log_prices - lppl_eval(params, series.times)
    return float(resid @ resid)


def goodness(series: PriceSeries, params: LpplParams) -> tuple:
    """``(mse, df, r_squared)`` with ``df = n - p``, ``p`` = 7 or 9 free parameters."""
    n = len(series)
    df = n - params.n_params
    if df <= 0:
        raise ValueError(f"{n} observations leave no degrees of freedom for {params.n_params} parameters")
    sse = objective(params, series)
    y = series.log_prices
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else -math.inf)
    return sse / df, df, r2


class _Problem:
    """Nonlinear search coordinates mapped onto the unit cube."""

    def __init__(self, series: PriceSeries, spec: FitSpec):
        self.series = series
        self.t, self.y = _series_arrays(series)
        self.sst = float(np.sum((self.y - self.y.mean()) ** 2))
        self.second = spec.harmonic_order == 2
        tc_lo, tc_hi = spec.tc_box(series)
        t_last = float(self.t[-1])
        if tc_hi <= t_last:
            raise InfeasibleBoxError(
                f"t_c box {(tc_lo, tc_hi)} does not reach past the last observation at {t_last}"
            )
        self.tc_requested = (tc_lo, tc_hi)
        tc_lo = max(tc_lo, t_last + TC_MARGIN)
        names = ["t_c", "alpha", "omega", "phi"]
        boxes = [(tc_lo, tc_hi), spec.alpha, spec.omega, spec.phi]
        if self.second:
            names.append("psi")
            boxes.append(spec.psi)
        self.names = names
        self.lo = np.array([b[0] for b in boxes], dtype=float)
        self.hi = np.array([b[1] for b in boxes], dtype=float)
        width = self.hi - self.lo
        self.periodic = np.array([n in ("phi", "psi") and w >= TWO_PI - 1e-12 for n, w in zip(names, width)])
        # degenerate (pinned) coordinates get unit width to keep the map invertible
        self.width = np.where(width > 0, width, 1.0)
        self.pinned = width == 0

    def to_params(self, u: np.ndarray) -> np.ndarray:
        u = np.where(self.pinned, 0.0, u)
        return self.lo + u * self.width

    def to_unit(self, v: np.ndarray) -> np.ndarray:
        u = (np.asarray(v, dtype=float) - self.lo) / self.width
        u = np.where(self.periodic, u, np.clip(u, 0.0, 1.0))
        return np.where(self.pinned, 0.0, u)

    def score(self, v: np.ndarray) -> float:
        """Profiled SSE at nonlinear parameters ``v``; ``B >= 0`` scores the flat-model SSE."""
        psi = v[4] if self.second else None
        try:
            X = _regressors(self.t, v[0], v[1], v[2], v[3], psi)
            coef = _solve_normal(X, self.y)
        except DegenerateDesignError:
            return self.sst
        if not coef[1] < 0:
            # with B constrained negative the optimum sits on B = 0, i.e. the flat mean
            return self.sst
        r = self.y - X @ coef
        return float(r @ r)

    def score_unit(self, u: np.ndarray) -> float:
        return self.score(self.to_params(u))

    def params_at(self, v: np.ndarray) -> LpplParams:
        psi = float(v[4]) if self.second else None
        sol = reduce_linear(self.series, float(v[0]), float(v[1]), float(v[2]), float(v[3]), psi)
        return LpplParams(
            A=sol.A, B=sol.B, C=sol.C, alpha=float(v[1]), t_c=float(v[0]),
            phi=float(v[3]), omega=float(v[2]), D=sol.D, psi=psi,
        ).normalized()

    def bound_hits(self, v: np.ndarray, rtol: float = 1e-6) -> tuple:
        hits = []
        lo = self.lo.copy()
        lo[0] = self.tc_requested[0]
        for i, name in enumerate(self.names):
            if self.periodic[i] or self.pinned[i]:
                continue
            tol = rtol * max(self.width[i], 1.0)
            if abs(v[i] - lo[i]) <= tol or abs(v[i] - self.hi[i]) <= tol:
                hits.append(name)
        return tuple(hits)


def _stage1_start(problem: _Problem, init: ScalingEstimate) -> np.ndarray:
    """Best grid point over ``(alpha, phi)`` with ``t_c`` and ``omega`` held at ``init``.

    ``init`` values outside the box are clipped into it.
    """
    t_c = float(np.clip(init.t_c, problem.lo[0], problem.hi[0]))
    omega = float(np.clip(init.omega, problem.lo[2], problem.hi[2]))
    alphas = np.linspace(problem.lo[1], problem.hi[1], STAGE1_GRID)
    if problem.periodic[3]:
        phis = problem.lo[3] + TWO_PI * np.arange(STAGE1_GRID) / STAGE1_GRID
    else:
        phis = np.linspace(problem.lo[3], problem.hi[3], STAGE1_GRID)
    best, best_v = math.inf, None
    for a in alphas:
        for p in phis:
            v = np.array([t_c, a, omega, p] + ([problem.lo[4]] if problem.second else []))
            s = problem.score(v)
            if s < best:
                best, best_v = s, v
    return best_v


def start_points(
    series: PriceSeries,
    spec: FitSpec,
    init: Optional[ScalingEstimate] = None,
    extra: Sequence[LpplParams] = (),
) -> list:
    """Nonlinear start vectors ``(t_c, alpha, omega, phi[, psi])`` used by :func:`fit`.

    Order: the stage-1 point built from ``init``, then ``extra`` optima, then
    the ``multistart`` best of ``multistart * screen_factor`` uniform draws
    from the box (seeded by ``spec.seed``).
    """
    problem = _Problem(series, spec)
    return _start_points(problem, spec, init, extra)


def _start_points(problem: _Problem, spec: FitSpec, init, extra) -> list:
    starts = []
    if init is not None:
        starts.append(_stage1_start(problem, init))
    for p in extra:
        v = [p.t_c, p.alpha, p.omega, p.phi]
        if problem.second:
            v.append(p.psi if p.psi is not None else problem.lo[4])
        starts.append(problem.to_params(problem.to_unit(v)))
    rng = np.random.default_rng(spec.seed)
    draws = rng.uniform(size=(spec.multistart * spec.screen_factor, len(problem.names)))
    scores = np.array([problem.score_unit(u) for u in draws])
    # stable sort keeps the draw order among ties
    keep = np.argsort(scores, kind="stable")[: spec.multistart]
    starts.extend(problem.to_params(draws[i]) for i in keep)
    return starts


def fit(
    series: PriceSeries,
    spec: FitSpec,
    init: Optional[ScalingEstimate] = None,
    extra_starts: Sequence[LpplParams] = (),
) -> FitResult:
    """Fit the log-periodic power law inside the box of ``spec``.

    With ``init`` the critical time and log-frequency are first held at the
    scaling estimate while ``alpha`` and ``phi`` are scanned on a grid; that
    point seeds the full search. A second-order fit also starts from the
    first-order optimum, so its SSE never exceeds the first-order SSE.

    Raises:
        InfeasibleBoxError: the ``t_c`` box ends before the last observation.
    """
    problem = _Problem(series, spec)
    extra = list(extra_starts)
    if problem.second and not extra:
        first = FitSpec(**{**spec.__dict__, "harmonic_order": 1})
        extra.append(fit(series, first, init).params)
    starts = _start_points(problem, spec, init, extra)

    best = None
    for v0 in starts:
        u0 = problem.to_unit(v0)
        bounds = [(None, None) if per else (0.0, 1.0) for per in problem.periodic]
        res = minimize(
            problem.score_unit,
            u0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxiter": spec.max_iterations,
                "maxfev": 2 * spec.max_iterations,
                "xatol": 1e-9,
                "fatol": spec.tolerance,
                "adaptive": len(u0) > 4,
            },
        )
        # keep the start itself if the simplex somehow ended worse
        u, val = (res.x, float(res.fun))
        start_val = problem.score_unit(u0)
        if start_val < val:
            u, val = u0, start_val
        if best is None or val < best[1]:
            best = (u, val, bool(res.success))
    u, _, converged = best
    v = problem.to_params(u)
    params = problem.params_at(v)
    if not params.B < 0:
        converged = False
    resid = series.log_prices - lppl_eval(params, series.times)
    mse, df, r2 = goodness(series, params)
    sse = float(resid @ resid)
    return FitResult(
        params=params,
        sse=sse,
        mse=mse,
        df=df,
        r_squared=r2,
        residuals=resid,
        converged=converged,
        starts_tried=len(starts),
        at_bounds=problem.bound_hits(v),
        start_points=[np.asarray(s) for s in starts],
    )


def asymptotic_se(series: PriceSeries, params: LpplParams, rel_step: float = 1e-6) -> dict:
    """Standard errors from ``mse * inv(J^T J)`` with a central-difference Jacobian.

    A rough diagnostic only; it assumes a well-identified interior optimum.
    """
    names = list(params.as_dict())
    base = np.array([getattr(params, n) for n in names], dtype=float)
    t = series.times
    cols = []
    for i, name in enumerate(names):
        h = rel_step * max(abs(base[i]), 1.0)
        up, dn = base.copy(), base.copy()
        up[i] += h
        dn[i] -= h
        f_up = lppl_eval(LpplParams(**dict(zip(names, up))), t)
        f_dn = lppl_eval(LpplParams(**dict(zip(names, dn))), t)
        cols.append((f_up - f_dn) / (2 * h))
    J = np.column_stack(cols)
    mse, _, _ = goodness(series, params)
    cov = mse * np.linalg.pinv(J.T @ J)
    return {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(names)}
