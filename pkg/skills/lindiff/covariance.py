"""Ground-truth covariance models, Gaussian sampling and empirical moments."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import linalg

from skills.lindiff.errors import DomainError
from skills.lindiff.seeding import STREAM_ROTATION, make_rng
from skills.lindiff.types import EmpiricalStats, SpectralCovariance

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-10
CLAMP_RTOL = 1e-10


def make_powerlaw_spectrum(d: int, k: float) -> np.ndarray:
    """lambda_nu proportional to nu^-k, normalised to unit mean."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    if k < 0:
        raise DomainError(f"hierarchy exponent must be >= 0, got {k}")
    raw = np.arange(1, d + 1, dtype=float) ** (-float(k))
    return raw * (d / math.fsum(raw))


def haar_orthogonal(d: int, seed: int) -> np.ndarray:
    rng = make_rng(seed, STREAM_ROTATION)
    q, r = linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_covariance(
    eigenvalues: np.ndarray,
    basis: np.ndarray | None = None,
    mean: np.ndarray | None = None,
    rotation_seed: int | None = None,
) -> SpectralCovariance:
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    d = lam.shape[0]
    if d < 1:
        raise DomainError("covariance needs at least one eigenvalue")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DomainError("eigenvalues must be finite and non-negative")

    if basis is not None:
        rot = np.asarray(basis, dtype=float)
    elif rotation_seed is not None:
        rot = haar_orthogonal(d, rotation_seed)
    else:
        rot = np.eye(d)
    if rot.shape != (d, d):
        raise DomainError(f"basis must be {d}x{d}, got {rot.shape}")
    drift = float(np.linalg.norm(rot.T @ rot - np.eye(d)))
    if drift > ORTHOGONALITY_TOL:
        raise DomainError(f"basis is not orthogonal (|R^T R - I|_F = {drift:.3e})")

    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float).ravel()
    if mu.shape != (d,):
        raise DomainError(f"mean must have length {d}, got {mu.shape[0]}")

    order = np.argsort(-lam, kind="stable")
    return SpectralCovariance(eigenvalues=lam[order], basis=rot[:, order], mean=mu)


def rotate(model: SpectralCovariance, rotation: np.ndarray) -> SpectralCovariance:
    """Conjugate the model by an orthogonal matrix Q: Sigma -> Q Sigma Q^T, mu -> Q mu."""
    q = np.asarray(rotation, dtype=float)
    return make_covariance(model.eigenvalues, basis=q @ model.basis, mean=q @ model.mean)


def sample_gaussian(model: SpectralCovariance, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise DomainError(f"sample count must be >= 1, got {n}")
    rng = make_rng(seed)
    z = rng.standard_normal((n, model.dim))
    return model.mean + (z * np.sqrt(model.eigenvalues)) @ model.basis.T


def sorted_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenpairs of a symmetric matrix with reproducible signs.

    Eigenvalues within CLAMP_RTOL * lambda_max of zero are set to zero.
    """
    values, vectors = linalg.eigh(matrix)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]

    top = max(float(values[0]), 0.0)
    tol = CLAMP_RTOL * top if top > 0.0 else CLAMP_RTOL
    if np.any(values < -tol):
        raise DomainError(f"covariance has a negative eigenvalue {values.min():.3e} (lambda_max={top:.3e})")
    values = np.where(np.abs(values) <= tol, 0.0, values)

    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return values, vectors * signs


def empirical_stats(data: np.ndarray, known_mean: np.ndarray | None = None) -> EmpiricalStats:
    """Mean and 1/N scatter of ``data``.

    With ``known_mean`` the scatter is taken about that fixed mean instead of
    the row mean.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DomainError(f"data must be a non-empty n x d matrix, got shape {x.shape}")
    n, d = x.shape
    if known_mean is None:
        mean = x.mean(axis=0)
    else:
        mean = np.asarray(known_mean, dtype=float).ravel()
        if mean.shape != (d,):
            raise DomainError(f"known mean must have length {d}")
    centered = x - mean
    scatter = centered.T @ centered / n
    scatter = 0.5 * (scatter + scatter.T)
    eigenvalues, basis = sorted_eigh(scatter)
    logger.debug("[STATS] n=%d d=%d rank=%d", n, d, int(np.count_nonzero(eigenvalues)))
    return EmpiricalStats(sample_count=n, mean=mean, eigenvalues=eigenvalues, basis=basis)


def population_stats(model: SpectralCovariance) -> EmpiricalStats:
    """Moments of the model itself, the infinite-data limit of ``empirical_stats``."""
    return EmpiricalStats(sample_count=None, mean=model.mean.copy(), eigenvalues=model.eigenvalues.copy(), basis=model.basis.copy())


def spectrum_from_data(data: np.ndarray) -> np.ndarray:
    return empirical_stats(data).eigenvalues


def covariance_from_data(data: np.ndarray) -> SpectralCovariance:
    stats = empirical_stats(data)
    return SpectralCovariance(eigenvalues=stats.eigenvalues, basis=stats.basis, mean=stats.mean)
