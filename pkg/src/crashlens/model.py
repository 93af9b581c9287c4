"""Log-periodic power law and crash hazard rate.

Time is measured in trading-day index units throughout; ``t_c`` is real-valued.
All evaluators accept scalars or numpy arrays for ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Raised when a time argument reaches or passes the critical time."""


def _time_to_critical(t_c: float, t) -> np.ndarray:
    x = t_c - np.asarray(t, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"all times must satisfy t < t_c={t_c!r}")
    return x


def _out(value: np.ndarray, t):
    return float(value) if np.ndim(t) == 0 else value


@dataclass(frozen=True)
class LpplParams:
    """Parameters of ``A + B (t_c-t)^alpha [1 + C cos(omega ln(t_c-t) + phi) + D cos(2 omega ln(t_c-t) + psi)]``.

    ``D`` and ``psi`` are either both ``None`` (first-order model) or both set.
    """

    A: float
    B: float
    C: float
    alpha: float
    t_c: float
    phi: float
    omega: float
    D: Optional[float] = None
    psi: Optional[float] = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if (self.D is None) != (self.psi is None):
            raise ValueError("D and psi must be given together")

    @property
    def second_order(self) -> bool:
        return self.D is not None

    @property
    def n_params(self) -> int:
        return 9 if self.second_order else 7

    def normalized(self) -> "LpplParams":
        """Copy with phases wrapped into ``[0, 2*pi)``."""
        psi = None if self.psi is None else wrap_phase(self.psi)
        return replace(self, phi=wrap_phase(self.phi), psi=psi)

    def as_dict(self) -> dict:
        out = {
            "A": self.A, "B": self.B, "C": self.C, "alpha": self.alpha,
            "t_c": self.t_c, "phi": self.phi, "omega": self.omega,
        }
        if self.second_order:
            out["D"] = self.D
            out["psi"] = self.psi
        return out


@dataclass(frozen=True)
class CrashProcessParams:
    """Hazard-rate parameters plus the fractional crash size ``kappa``."""

    B0: float
    B1: float
    beta: float
    t_c: float
    omega: float
    psi_prime: float
    kappa: float

    def __post_init__(self):
        if not self.B0 > abs(self.B1):
            raise ValueError("B0 must exceed |B1| so the hazard stays positive")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa!r}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")


def wrap_phase(phase: float) -> float:
    wrapped = math.fmod(phase, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    # fmod of a value just below 0 can round back up to 2*pi
    return 0.0 if wrapped >= TWO_PI else wrapped


def lppl_eval(params: LpplParams, t):
    """Predicted log-price at time(s) ``t``.

    Raises:
        DomainError: if any ``t >= params.t_c``.
    """
    x = _time_to_critical(params.t_c, t)
    log_x = np.log(x)
    osc = 1.0 + params.C * np.cos(params.omega * log_x + params.phi)
    if params.D is not None:
        osc = osc + params.D * np.cos(2.0 * params.omega * log_x + params.psi)
    return _out(params.A + params.B * x**params.alpha * osc, t)


def hazard_eval(params: CrashProcessParams, t):
    """Crash hazard rate ``h(t)`` (probability per unit time)."""
    x = _time_to_critical(params.t_c, t)
    power = x ** (-params.beta)
    value = power * (params.B0 + params.B1 * np.cos(params.omega * np.log(x) + params.psi_prime))
    return _out(value, t)


def integrated_log_price(params: CrashProcessParams, t0: float, t: float, steps: int = 4096) -> float:
    """``kappa * integral_{t0}^{t} h`` by the composite midpoint rule on ``steps`` cells.

    This is the pre-crash log-return ``log(p(t)/p(t0))``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not t0 < t:
        raise DomainError(f"need t0 < t, got t0={t0!r}, t={t!r}")
    if not t < params.t_c:
        raise DomainError(f"need t < t_c={params.t_c!r}, got {t!r}")
    h = (t - t0) / steps
    mids = t0 + h * (np.arange(steps) + 0.5)
    return params.kappa * h * float(np.sum(hazard_eval(params, mids)))


def lppl_from_hazard(params: CrashProcessParams, A: float, t0: float) -> LpplParams:
    """LPPL parameters whose curve equals ``A + kappa * integral_{t0}^{t} h``.

    ``A`` is the log-price at ``t0``. With ``x = t_c - t`` and ``z = 1 - beta + i omega``
    the hazard has the antiderivative
    ``-B0 x^(1-beta)/(1-beta) - B1 Re(exp(i psi') x^z / z)``, so the mapping is exact:
    ``alpha = 1 - beta``, ``B = -kappa B0/(1-beta)``, ``C = B1 (1-beta) / (B0 |z|)``
    and ``phi = psi' - arg(z)``.
    """
    if not t0 < params.t_c:
        raise DomainError(f"need t0 < t_c={params.t_c!r}, got {t0!r}")
    a = 1.0 - params.beta
    z = complex(a, params.omega)
    B = -params.kappa * params.B0 / a
    C = params.B1 * a / (params.B0 * abs(z))
    phi = params.psi_prime - math.atan2(params.omega, a)
    x0 = params.t_c - t0
    antideriv0 = params.B0 * x0**a / a + params.B1 * (
        complex(math.cos(params.psi_prime), math.sin(params.psi_prime)) * x0**z / z
    ).real
    return LpplParams(
        A=A + params.kappa * antideriv0,
        B=B,
        C=C,
        alpha=a,
        t_c=params.t_c,
        phi=wrap_phase(phi),
        omega=params.omega,
    )
