"""Monte Carlo losses, denoiser-difference measures and detail-based similarity."""

from __future__ import annotations

import math

import numpy as np

from skills.lindiff.denoiser import apply_denoiser
from skills.lindiff.errors import DomainError
from skills.lindiff.seeding import STREAM_NOISE, make_rng
from skills.lindiff.types import LinearDenoiser, MonteCarloEstimate

DEFAULT_ETA = 1e-3
DEFAULT_DROP_LEADING = 5
_BATCH_ELEMENTS = 2_000_000


def _estimate(values: np.ndarray) -> MonteCarloEstimate:
    count = values.size
    stderr = float(values.std(ddof=1) / math.sqrt(count)) if count > 1 else math.nan
    return MonteCarloEstimate(mean=float(values.mean()), stderr=stderr, count=count)


def monte_carlo_loss(denoiser: LinearDenoiser, data: np.ndarray, noise_draws: int, seed: int) -> MonteCarloEstimate:
    """Estimate the training objective of ``denoiser`` on ``data``.

    One draw noises every (sample, t) pair once; the estimate averages the
    per-draw objective values, ridge penalty included.
    """
    if noise_draws < 1:
        raise DomainError(f"noise_draws must be >= 1, got {noise_draws}")
    x0 = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = x0.shape
    if d != denoiser.dim:
        raise DomainError(f"dimension mismatch: denoiser d={denoiser.dim}, data d={d}")

    sched = denoiser.schedule
    steps = sched.steps
    root_ab = np.sqrt(sched.alpha_bar)[:, None, None]
    root_noise = np.sqrt(1.0 - sched.alpha_bar)[:, None, None]
    w = denoiser.weights[:, None, :]
    bias = (denoiser.bias @ denoiser.basis)[:, None, :]
    y0 = (x0 @ denoiser.basis)[None, :, :]
    penalty = float((sched.gamma[:, None] * denoiser.weights**2).mean())

    per_draw = np.empty(noise_draws)
    batch = max(1, _BATCH_ELEMENTS // (steps * n * d))
    for start in range(0, noise_draws, batch):
        size = min(batch, noise_draws - start)
        # Mode-coordinate noise has the same law as original-coordinate noise.
        rng = make_rng(seed, STREAM_NOISE, start // batch)
        eps = rng.standard_normal((size, steps, n, d))
        y_t = root_ab * y0 + root_noise * eps
        if denoiser.objective == "noise":
            residual = eps - w * (y_t - root_ab * bias)
        else:
            residual = y0 - (w * y_t + bias)
        per_draw[start : start + size] = (residual**2).mean(axis=(1, 2, 3)) + penalty
    return _estimate(per_draw)


def _check_pair(a: LinearDenoiser, b: LinearDenoiser) -> None:
    if a.dim != b.dim:
        raise DomainError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.schedule.steps != b.schedule.steps or not np.allclose(a.schedule.alpha_bar, b.schedule.alpha_bar):
        raise DomainError("denoisers must share a schedule")


def _noised(test_data: np.ndarray, alpha_bar: float, rng: np.random.Generator) -> np.ndarray:
    eps = rng.standard_normal(test_data.shape)
    return math.sqrt(alpha_bar) * test_data + math.sqrt(1.0 - alpha_bar) * eps


def delta_epsilon_empirical(
    a: LinearDenoiser, b: LinearDenoiser, test_data: np.ndarray, seed: int
) -> MonteCarloEstimate:
    """(1/T) sum_t <|eps_A(x_t) - eps_B(x_t)|^2> / d over noised test points.

    Both denoisers see the same noised inputs; the standard error is over test
    samples.
    """
    _check_pair(a, b)
    x = np.atleast_2d(np.asarray(test_data, dtype=float))
    per_sample = np.zeros(x.shape[0])
    for i, ab in enumerate(a.schedule.alpha_bar):
        x_t = _noised(x, float(ab), make_rng(seed, STREAM_NOISE, i))
        diff = apply_denoiser(a, x_t, i) - apply_denoiser(b, x_t, i)
        per_sample += (diff**2).mean(axis=1)
    return _estimate(per_sample / a.schedule.steps)


def mode_resolved_difference(
    a: LinearDenoiser,
    b: LinearDenoiser,
    basis: np.ndarray,
    test_data: np.ndarray,
    eta: float = DEFAULT_ETA,
    seed: int = 0,
) -> np.ndarray:
    """(T, d) matrix of relative squared differences per timestep and eigenmode."""
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    _check_pair(a, b)
    x = np.atleast_2d(np.asarray(test_data, dtype=float))
    out = np.empty((a.schedule.steps, a.dim))
    for i, ab in enumerate(a.schedule.alpha_bar):
        x_t = _noised(x, float(ab), make_rng(seed, STREAM_NOISE, i))
        out_a = apply_denoiser(a, x_t, i) @ basis
        out_b = apply_denoiser(b, x_t, i) @ basis
        out[i] = ((out_a - out_b) ** 2 / np.abs((out_a + eta) * (out_b + eta))).mean(axis=0)
    return out


def _detail_coords(x: np.ndarray, basis: np.ndarray, drop_leading: int) -> np.ndarray:
    d = basis.shape[0]
    if not 0 <= drop_leading < d:
        raise DomainError(f"drop_leading must lie in [0, {d}), got {drop_leading}")
    return np.asarray(x, dtype=float) @ basis[:, drop_leading:]


def detail_similarity(x: np.ndarray, y: np.ndarray, basis: np.ndarray, drop_leading: int = DEFAULT_DROP_LEADING) -> float:
    """Cosine similarity after projecting out the leading ``drop_leading`` eigenvectors."""
    cx = _detail_coords(x, basis, drop_leading)
    cy = _detail_coords(y, basis, drop_leading)
    nx, ny = float(np.linalg.norm(cx)), float(np.linalg.norm(cy))
    if nx == 0.0 or ny == 0.0:
        raise DomainError("similarity undefined: zero-norm projection")
    return float(np.clip(cx @ cy / (nx * ny), -1.0, 1.0))


def nearest_training_similarity(
    generated: np.ndarray, training: np.ndarray, basis: np.ndarray, drop_leading: int = DEFAULT_DROP_LEADING
) -> np.ndarray:
    """For each generated row, the highest detail similarity to any training row."""
    gen = _detail_coords(np.atleast_2d(generated), basis, drop_leading)
    train = _detail_coords(np.atleast_2d(training), basis, drop_leading)
    if train.shape[0] < 1:
        raise DomainError("need at least one training row")
    gen_norm = np.linalg.norm(gen, axis=1)
    train_norm = np.linalg.norm(train, axis=1)
    if np.any(gen_norm == 0.0) or np.any(train_norm == 0.0):
        raise DomainError("similarity undefined: zero-norm projection")
    cosines = (gen / gen_norm[:, None]) @ (train / train_norm[:, None]).T
    return np.clip(cosines.max(axis=1), -1.0, 1.0)
