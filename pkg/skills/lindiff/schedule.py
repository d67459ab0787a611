"""Discrete noise schedules and their continuous-time view."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from skills.lindiff.errors import DomainError
from skills.lindiff.types import Coupling, NoiseSchedule, SigmaChoice

DEFAULT_ZETA_TOTAL = 10.0
DEFAULT_BETA_MIN_FRACTION = 0.01


@dataclass(frozen=True, slots=True)
class ContinuousView:
    """beta_hat, zeta and sigma_hat on the grid u = t/T."""

    times: np.ndarray
    beta_hat: np.ndarray
    zeta: np.ndarray
    sigma_hat: np.ndarray


def _zeta(u: np.ndarray, zeta_total: float, beta_min_fraction: float) -> np.ndarray:
    # beta_hat(u) = scale * (f + (1 - f) u), integrated from 0 to u; zeta(1) == zeta_total.
    f = beta_min_fraction
    scale = 2.0 * zeta_total / (1.0 + f)
    return scale * (f * u + 0.5 * (1.0 - f) * u * u)


def _gamma(alpha_bar: np.ndarray, c: float, coupling: Coupling) -> np.ndarray:
    if coupling == "alpha_bar":
        return c * alpha_bar
    if coupling == "sqrt_alpha_bar":
        return c * np.sqrt(alpha_bar)
    raise DomainError(f"unknown coupling: {coupling}")


def _sigma(beta: np.ndarray, choice: SigmaChoice) -> np.ndarray:
    if choice == "match_beta":
        return np.sqrt(beta)
    if choice == "zero":
        return np.zeros_like(beta)
    raise DomainError(f"unknown sigma choice: {choice}")


def make_schedule(
    steps: int,
    zeta_total: float = DEFAULT_ZETA_TOTAL,
    c: float = 0.0,
    coupling: Coupling = "alpha_bar",
    beta_min_fraction: float = DEFAULT_BETA_MIN_FRACTION,
    sigma_choice: SigmaChoice = "match_beta",
) -> NoiseSchedule:
    if steps < 2:
        raise DomainError(f"schedule needs T >= 2 steps, got {steps}")
    if not zeta_total > 0:
        raise DomainError(f"zeta_total must be positive, got {zeta_total}")
    if not 0.0 <= beta_min_fraction <= 1.0:
        raise DomainError(f"beta_min_fraction must lie in [0, 1], got {beta_min_fraction}")
    u = np.arange(1, steps + 1, dtype=float) / steps
    alpha_bar = np.exp(-_zeta(u, zeta_total, beta_min_fraction))
    return schedule_from_alpha_bar(alpha_bar, c=c, coupling=coupling, sigma_choice=sigma_choice, zeta_total=zeta_total)


def schedule_from_alpha_bar(
    alpha_bar: np.ndarray,
    c: float = 0.0,
    coupling: Coupling = "alpha_bar",
    sigma_choice: SigmaChoice = "match_beta",
    zeta_total: float | None = None,
) -> NoiseSchedule:
    ab = np.asarray(alpha_bar, dtype=float).ravel()
    if ab.shape[0] < 2:
        raise DomainError("schedule needs T >= 2 steps")
    if np.any(ab <= 0.0) or np.any(ab >= 1.0):
        raise DomainError("alpha_bar must lie strictly inside (0, 1)")
    if np.any(np.diff(ab) >= 0.0):
        raise DomainError("alpha_bar must be strictly decreasing")
    if c < 0:
        raise DomainError(f"regularization c must be >= 0, got {c}")

    prev = np.concatenate(([1.0], ab[:-1]))
    beta = 1.0 - ab / prev
    return NoiseSchedule(
        alpha_bar=ab,
        beta=beta,
        sigma=_sigma(beta, sigma_choice),
        gamma=_gamma(ab, float(c), coupling),
        reg_scale=float(c),
        coupling=coupling,
        zeta_total=float(zeta_total) if zeta_total is not None else -math.log(ab[-1]),
        sigma_choice=sigma_choice,
    )


def with_sigma(schedule: NoiseSchedule, choice: SigmaChoice) -> NoiseSchedule:
    return replace(schedule, sigma=_sigma(schedule.beta, choice), sigma_choice=choice)


def alpha_hat(schedule: NoiseSchedule) -> np.ndarray:
    """Effective signal-to-noise ratio alpha_bar / (1 - alpha_bar + gamma)."""
    return schedule.alpha_bar / (1.0 - schedule.alpha_bar + schedule.gamma)


def continuous_view(schedule: NoiseSchedule) -> ContinuousView:
    steps = schedule.steps
    return ContinuousView(
        times=np.arange(1, steps + 1, dtype=float) / steps,
        beta_hat=schedule.beta * steps,
        zeta=-np.log(schedule.alpha_bar),
        sigma_hat=schedule.sigma * math.sqrt(steps),
    )


def alpha_bar_at(schedule: NoiseSchedule, u: float | np.ndarray) -> float | np.ndarray:
    """Continuous alpha_bar(u) for u in [0, 1], with alpha_bar(0) = 1.

    zeta is interpolated linearly between grid points.
    """
    steps = schedule.steps
    grid = np.arange(0, steps + 1, dtype=float) / steps
    zeta = np.concatenate(([0.0], -np.log(schedule.alpha_bar)))
    value = np.exp(-np.interp(np.clip(u, 0.0, 1.0), grid, zeta))
    return float(value) if np.ndim(value) == 0 else value
