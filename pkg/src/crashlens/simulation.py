"""Synthetic data: noisy LPPL curves, crash-process price paths, agent lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .data_io import PriceSeries
from .model import CrashProcessParams, DomainError, LpplParams, hazard_eval, lppl_eval


def business_day_labels(start: str, n: int) -> tuple:
    """ISO dates of ``n`` consecutive weekdays beginning at (or after) ``start``."""
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    return tuple(str(d) for d in days)


def gen_lppl_series(
    params: LpplParams,
    t0: float,
    t_end: float,
    noise_sd: float = 0.0,
    seed: int = 0,
    start_date: Optional[str] = None,
) -> PriceSeries:
    """Model log-prices at the integer times in ``[t0, t_end]`` plus iid Gaussian noise."""
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    if not t_end < params.t_c:
        raise DomainError(f"window end {t_end!r} must precede t_c={params.t_c!r}")
    t = np.arange(math.ceil(t0), math.floor(t_end) + 1, dtype=float)
    if len(t) == 0:
        raise ValueError("window contains no integer times")
    y = lppl_eval(params, t)
    if noise_sd > 0:
        y = y + np.random.default_rng(seed).normal(0.0, noise_sd, len(t))
    labels = business_day_labels(start_date, len(t)) if start_date else None
    return PriceSeries(t, y, labels)


@dataclass(frozen=True)
class PathConfig:
    """Discretised crash process on ``t0, t0+dt, ..., t_end`` (``dt`` must divide the window)."""

    process: CrashProcessParams
    p0: float
    t0: float
    t_end: float
    dt: float
    seed: int = 0

    def __post_init__(self):
        if not self.p0 > 0:
            raise ValueError("p0 must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t0 < self.t_end < self.process.t_c:
            raise ValueError("need t0 < t_end < t_c")
        steps = (self.t_end - self.t0) / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("dt must divide t_end - t0 into whole steps")
        if np.max(hazard_eval(self.process, self.grid()[:-1])) * self.dt >= 1:
            raise ValueError("dt too large: per-step crash probability h(t)*dt reaches 1")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    def grid(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


def simulate_paths(config: PathConfig, n_paths: int, suppress_crash: bool = False) -> tuple:
    """Vectorised price paths.

    Each step multiplies by ``1 + kappa h(t_k) dt`` (the no-arbitrage drift);
    with probability ``h(t_k) dt`` the jump fires in that step, the price also
    drops by the fraction ``kappa`` and stays flat from then on.

    Returns:
        ``(times, prices, crash_times)``; ``prices`` has shape
        ``(n_paths, len(times))`` and ``crash_times`` is NaN for paths that
        never crashed.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    proc = config.process
    times = config.grid()
    hdt = hazard_eval(proc, times[:-1]) * config.dt
    rng = np.random.default_rng(config.seed)
    prices = np.empty((n_paths, len(times)))
    prices[:, 0] = config.p0
    alive = np.ones(n_paths, dtype=bool)
    crash_times = np.full(n_paths, np.nan)
    for k in range(config.n_steps):
        u = rng.random(n_paths)
        growth = np.where(alive, 1.0 + proc.kappa * hdt[k], 1.0)
        jump = alive & (u < hdt[k]) & (not suppress_crash)
        growth = np.where(jump, growth * (1.0 - proc.kappa), growth)
        prices[:, k + 1] = prices[:, k] * growth
        crash_times[jump] = times[k + 1]
        alive &= ~jump
    return times, prices, crash_times


def simulate_path(config: PathConfig, suppress_crash: bool = False) -> tuple:
    """One seeded path as ``(PriceSeries, crash_time or None)``."""
    times, prices, crash = simulate_paths(config, 1, suppress_crash)
    crash_time = None if np.isnan(crash[0]) else float(crash[0])
    return PriceSeries(times, np.log(prices[0])), crash_time


def nocrash_log_price(config: PathConfig, substeps: int = 256) -> PriceSeries:
    """Deterministic pre-crash path ``log p0 + kappa * integral_{t0}^{t} h`` on the config grid.

    Each grid cell is integrated with a ``substeps``-point midpoint rule.
    """
    times = config.grid()
    offsets = (np.arange(substeps) + 0.5) / substeps * config.dt
    mids = times[:-1, None] + offsets[None, :]
    cell = hazard_eval(config.process, mids).sum(axis=1) * (config.dt / substeps)
    integral = np.concatenate(([0.0], np.cumsum(cell)))
    return PriceSeries(times, math.log(config.p0) + config.process.kappa * integral)


@dataclass(frozen=True)
class LatticeConfig:
    """Square lattice of buy/sell agents, 4 neighbours with periodic wrap."""

    side: int
    K: float
    sigma: float
    sweeps: int = 100
    seed: int = 0
    burn_in: Optional[int] = None

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("side must be >= 2")
        if self.K < 0 or self.sigma < 0:
            raise ValueError("K and sigma must be non-negative")
        if self.K == 0 and self.sigma == 0:
            raise ValueError("K and sigma cannot both be zero")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")

    @property
    def burn_in_sweeps(self) -> int:
        return 10 * self.side if self.burn_in is None else self.burn_in


def neighbour_sum(state: np.ndarray, i: int, j: int) -> int:
    n = state.shape[0]
    return int(state[(i - 1) % n, j] + state[(i + 1) % n, j] + state[i, (j - 1) % n] + state[i, (j + 1) % n])


def lattice_sweep(state: np.ndarray, config: LatticeConfig, sweep_index: int = 0) -> np.ndarray:
    """One raster-order pass of ``s_i = sign(K * sum of neighbours + sigma * eps_i)``.

    Sites update in place in row-major order, so later sites see the new
    values of earlier ones. ``sign(0)`` is +1. The noise is drawn from
    ``(config.seed, sweep_index)``; the input array is not modified.
    """
    state = np.asarray(state)
    n = config.side
    if state.shape != (n, n):
        raise ValueError(f"state shape {state.shape} does not match side {n}")
    if not np.all(np.abs(state) == 1):
        raise ValueError("spins must be -1 or +1")
    eps = np.random.default_rng([config.seed, sweep_index]).standard_normal(n * n).tolist()
    s = state.astype(int).tolist()
    K, sigma = config.K, config.sigma
    for i in range(n):
        up, down = s[i - 1], s[(i + 1) % n]
        row = s[i]
        for j in range(n):
            field = K * (up[j] + down[j] + row[j - 1] + row[(j + 1) % n]) + sigma * eps[i * n + j]
            row[j] = 1 if field >= 0 else -1
    return np.array(s, dtype=np.int8)


def magnetization(state: np.ndarray) -> float:
    return float(state.sum()) / state.size


def run_lattice(config: LatticeConfig, state: Optional[np.ndarray] = None, first_sweep: int = 0) -> tuple:
    """Burn in, then record ``|magnetization|`` after each of ``config.sweeps`` sweeps.

    Starts from the all-buy (+1) state unless ``state`` is given.
    Returns ``(final_state, abs_magnetizations)``.
    """
    if state is None:
        state = np.ones((config.side, config.side), dtype=np.int8)
    k = first_sweep
    for _ in range(config.burn_in_sweeps):
        state = lattice_sweep(state, config, k)
        k += 1
    trace = []
    for _ in range(config.sweeps):
        state = lattice_sweep(state, config, k)
        k += 1
        trace.append(abs(magnetization(state)))
    return state, np.array(trace)


def magnetization_curve(config: LatticeConfig, K_grid: Sequence[float]) -> list:
    """``[(K, mean |magnetization|), ...]`` for each coupling in ``K_grid``.

    Every coupling reuses the same noise stream, so neighbouring entries differ
    only through ``K``.
    """
    if len(K_grid) == 0:
        raise ValueError("K_grid must not be empty")
    out = []
    for K in K_grid:
        _, trace = run_lattice(replace(config, K=float(K)))
        out.append((float(K), float(trace.mean())))
    return out
