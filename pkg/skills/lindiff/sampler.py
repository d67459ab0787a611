"""Reverse-process sampling from linear noise predictors and its closed-form statistics."""

from __future__ import annotations

import logging
import math

import numpy as np

from skills.lindiff.errors import DomainError
from skills.lindiff.schedule import alpha_bar_at, with_sigma
from skills.lindiff.seeding import STREAM_SAMPLING, make_rng
from skills.lindiff.types import (
    EmpiricalStats,
    LinearDenoiser,
    NoiseSchedule,
    SampleStatistics,
    SigmaChoice,
    SpectralCovariance,
)

logger = logging.getLogger(__name__)

CHUNK_ROWS = 4096


def _step_sigma(schedule: NoiseSchedule) -> np.ndarray:
    sigma = np.array(schedule.sigma, dtype=float)
    sigma[0] = 0.0  # no fresh noise on the final step (t = 1)
    return sigma


def _with_choice(schedule: NoiseSchedule, choice: SigmaChoice | None) -> NoiseSchedule:
    return schedule if choice is None else with_sigma(schedule, choice)


def step_coefficients(
    denoiser: LinearDenoiser, sigma_choice: SigmaChoice | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-mode affine form of one reverse step: y <- gain * y + offset + sigma * xi.

    Returns (gain, offset, sigma) with gain and offset of shape (T, d), indexed by t - 1.
    sigma comes from the denoiser's schedule unless ``sigma_choice`` overrides it.
    """
    if denoiser.objective != "noise":
        raise DomainError("iterative sampling needs a noise-prediction denoiser")
    sched = _with_choice(denoiser.schedule, sigma_choice)
    ab = sched.alpha_bar[:, None]
    ab_prev = sched.alpha_bar_prev[:, None]
    root_alpha = np.sqrt(sched.alpha)[:, None]
    sigma = _step_sigma(sched)
    # Radicand clamped at zero where sigma_t^2 exceeds 1 - alpha_bar_{t-1}.
    carry = np.sqrt(np.maximum(0.0, 1.0 - ab_prev - sigma[:, None] ** 2))
    w = denoiser.weights
    bias = denoiser.bias @ denoiser.basis
    noise_coef = carry - np.sqrt(1.0 - ab) / root_alpha
    gain = 1.0 / root_alpha + noise_coef * w
    offset = -noise_coef * w * np.sqrt(ab) * bias
    return gain, offset, sigma


def sample_iterative(
    denoiser: LinearDenoiser, count: int, seed: int, sigma_choice: SigmaChoice | None = None
) -> np.ndarray:
    """Run the reverse iteration from white noise for ``count`` samples.

    Work is split into fixed chunks with their own random streams, so results
    do not depend on how chunks are scheduled.
    """
    if count < 1:
        raise DomainError(f"sample count must be >= 1, got {count}")
    gain, offset, sigma = step_coefficients(denoiser, sigma_choice)
    steps, d = gain.shape
    out = np.empty((count, d))
    for chunk, start in enumerate(range(0, count, CHUNK_ROWS)):
        rows = min(CHUNK_ROWS, count - start)
        rng = make_rng(seed, STREAM_SAMPLING, chunk)
        y = rng.standard_normal((rows, d))
        for i in range(steps - 1, -1, -1):
            y = gain[i] * y + offset[i]
            if sigma[i] > 0.0:
                y += sigma[i] * rng.standard_normal((rows, d))
        out[start : start + rows] = y @ denoiser.basis.T
    logger.debug(
        "[SAMPLE] count=%d d=%d steps=%d sigma=%s",
        count,
        d,
        steps,
        sigma_choice or denoiser.schedule.sigma_choice,
    )
    return out


def iterative_moments(denoiser: LinearDenoiser, sigma_choice: SigmaChoice | None = None) -> SampleStatistics:
    """Exact mean and per-mode variance of ``sample_iterative`` output, by propagating
    the Gaussian moments through the discrete linear iteration."""
    gain, offset, sigma = step_coefficients(denoiser, sigma_choice)
    steps, d = gain.shape
    mean = np.zeros(d)
    var = np.ones(d)
    for i in range(steps - 1, -1, -1):
        mean = gain[i] * mean + offset[i]
        var = gain[i] ** 2 * var + sigma[i] ** 2
    return SampleStatistics(s=1.0, mean=denoiser.basis @ mean, variances=var, basis=denoiser.basis)


def sample_one_step(stats: EmpiricalStats, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise DomainError(f"sample count must be >= 1, got {count}")
    rng = make_rng(seed, STREAM_SAMPLING)
    z = rng.standard_normal((count, stats.dim))
    return stats.mean + (z * np.sqrt(stats.eigenvalues)) @ stats.basis.T


def predicted_sample_stats(
    stats: EmpiricalStats, schedule: NoiseSchedule, s: float, sigma_choice: SigmaChoice | None = None
) -> SampleStatistics:
    """Continuous-time mean and variance of the samples at denoising progress s.

    Regularization enters as lambda_0 -> lambda_0 + c. The sigma choice defaults
    to the schedule's own.
    """
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"denoising time s must lie in [0, 1], got {s}")
    sigma_choice = sigma_choice or schedule.sigma_choice
    excess = stats.eigenvalues + schedule.reg_scale - 1.0
    start = float(alpha_bar_at(schedule, 1.0))
    now = float(alpha_bar_at(schedule, 1.0 - s))
    ratio = (now * excess + 1.0) / (start * excess + 1.0)
    if sigma_choice == "zero":
        variances = ratio
        decay = np.sqrt(start * ratio)
    elif sigma_choice == "match_beta":
        variances = now * excess + 1.0 - (start**2 * excess / now) * ratio**2
        decay = ratio * start / math.sqrt(now)
    else:
        raise DomainError(f"unknown sigma choice: {sigma_choice}")
    coords = stats.basis.T @ stats.mean
    mean_coords = (math.sqrt(now) - decay) * coords
    return SampleStatistics(
        s=float(s),
        mean=stats.basis @ mean_coords,
        variances=np.maximum(variances, 0.0),
        basis=stats.basis,
    )


def predicted_sample_covariance(
    stats: EmpiricalStats, schedule: NoiseSchedule, sigma_choice: SigmaChoice | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and full covariance of the final samples (s = 1) in original coordinates."""
    final = predicted_sample_stats(stats, schedule, 1.0, sigma_choice)
    return final.mean, final.covariance()


def effective_generated_distribution(stats: EmpiricalStats, c: float) -> SpectralCovariance:
    """N(mu_0, Sigma_0 + c I), the distribution the regularized sampler converges to."""
    if c < 0:
        raise DomainError(f"regularization c must be >= 0, got {c}")
    return SpectralCovariance(eigenvalues=stats.eigenvalues + c, basis=stats.basis, mean=stats.mean)
