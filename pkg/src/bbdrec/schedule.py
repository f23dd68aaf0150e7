"""Closed-form Brownian bridge noise schedule.

All quantities are precomputed once in float64 at construction and are
immutable afterwards, so a schedule can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BridgeSchedule", "build_schedule", "posterior_coefficients"]


@dataclass(frozen=True)
class BridgeSchedule:
    """Precomputed bridge quantities for a fixed (T, m) pair.

    Arrays are indexed by the step t.  ``beta`` and ``delta`` are valid on
    [0, T]; ``gamma``, ``delta_hat``, ``delta_tilde`` and the posterior
    coefficient arrays are valid on [1, T] (index 0 is a NaN sentinel).
    """

    T: int
    m: float
    beta: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    delta_hat: np.ndarray = field(repr=False)
    delta_tilde: np.ndarray = field(repr=False)
    coef_x: np.ndarray = field(repr=False)
    coef_0: np.ndarray = field(repr=False)
    coef_T: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("beta", "delta", "gamma", "delta_hat", "delta_tilde",
                     "coef_x", "coef_0", "coef_T"):
            getattr(self, name).setflags(write=False)


def build_schedule(T: int, m: float) -> BridgeSchedule:
    """Build the full bridge schedule for ``T`` steps and variance scale ``m``.

    The marginal at step t is N((1 - beta_t) x0 + beta_t xT, delta_t I) with
    beta_t = t/T and delta_t = 4 m beta_t (1 - beta_t); the single-step
    transition uses gamma_t = (1 - beta_t)/(1 - beta_{t-1}) and variance
    delta_hat_t = delta_t - gamma_t^2 delta_{t-1}.

    The posterior q(x_{t-1} | x_t, x0, xT) has mean
    ``coef_x[t] * x_t + coef_0[t] * x0 + coef_T[t] * xT`` and variance
    ``delta_tilde[t]``.  At t = T the generic formulas divide by
    delta_T = 0; since that forward transition is deterministic
    (gamma_T = 0, delta_hat_T = 0) the posterior collapses to the marginal
    at T-1, so the coefficients are (0, 1 - beta_{T-1}, beta_{T-1}) with
    variance delta_{T-1}.
    """
    if not isinstance(T, (int, np.integer)) or isinstance(T, bool):
        raise TypeError(f"T must be an integer, got {type(T).__name__}")
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    m = float(m)
    if not math.isfinite(m) or m <= 0.0:
        raise ValueError(f"m must be a positive finite real, got {m}")

    t = np.arange(T + 1, dtype=np.float64)
    beta = t / T
    delta = 4.0 * m * beta * (1.0 - beta)

    gamma = np.full(T + 1, np.nan)
    delta_hat = np.full(T + 1, np.nan)
    delta_tilde = np.full(T + 1, np.nan)
    coef_x = np.full(T + 1, np.nan)
    coef_0 = np.full(T + 1, np.nan)
    coef_T = np.full(T + 1, np.nan)

    gamma[1:] = (1.0 - beta[1:]) / (1.0 - beta[:-1])
    delta_hat[1:] = delta[1:] - gamma[1:] ** 2 * delta[:-1]

    # Interior steps; t = 1 falls out naturally (delta_0 = 0 gives the
    # deterministic last reverse step with coefficients (0, 1, 0)).
    ti = np.arange(1, T)
    delta_tilde[ti] = delta_hat[ti] * delta[ti - 1] / delta[ti]
    coef_x[ti] = delta[ti - 1] / delta[ti] * gamma[ti]
    coef_0[ti] = delta_hat[ti] / delta[ti] * (1.0 - beta[ti - 1])
    coef_T[ti] = beta[ti - 1] - coef_x[ti] * beta[ti]

    # t = T special case: posterior equals the marginal at T-1.
    delta_tilde[T] = delta[T - 1]
    coef_x[T] = 0.0
    coef_0[T] = 1.0 - beta[T - 1]
    coef_T[T] = beta[T - 1]

    return BridgeSchedule(
        T=int(T), m=m, beta=beta, delta=delta, gamma=gamma,
        delta_hat=delta_hat, delta_tilde=delta_tilde,
        coef_x=coef_x, coef_0=coef_0, coef_T=coef_T,
    )


def posterior_coefficients(s: BridgeSchedule, t: int) -> tuple[float, float, float, float]:
    """Posterior mean coefficients and variance at step ``t``.

    Returns ``(coef_x, coef_0, coef_T, variance)`` such that the posterior
    over x_{t-1} is N(coef_x x_t + coef_0 x0 + coef_T xT, variance I).
    """
    if not 1 <= t <= s.T:
        raise ValueError(f"step t must be in [1, {s.T}], got {t}")
    return (float(s.coef_x[t]), float(s.coef_0[t]), float(s.coef_T[t]),
            float(s.delta_tilde[t]))
