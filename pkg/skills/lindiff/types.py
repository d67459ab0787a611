"""Public typed contracts for lindiff."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Literal

import numpy as np

Objective = Literal["noise", "data"]
Coupling = Literal["alpha_bar", "sqrt_alpha_bar"]
SigmaChoice = Literal["zero", "match_beta"]


@dataclass(frozen=True, slots=True)
class SpectralCovariance:
    """Gaussian model N(mean, basis diag(eigenvalues) basis^T)."""

    eigenvalues: np.ndarray
    basis: np.ndarray
    mean: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    def matrix(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T

    def sqrt_matrix(self) -> np.ndarray:
        return (self.basis * np.sqrt(self.eigenvalues)) @ self.basis.T

    def inverse(self) -> np.ndarray:
        return (self.basis / self.eigenvalues) @ self.basis.T

    def projected_variances(self, basis: np.ndarray) -> np.ndarray:
        """e^T Sigma e for every column e of ``basis``."""
        overlap = self.basis.T @ basis
        return (self.eigenvalues[:, None] * overlap**2).sum(axis=0)


@dataclass(frozen=True, slots=True)
class EmpiricalStats:
    """Moments of a training set.

    ``sample_count`` is None for population moments taken straight from a model.
    """

    sample_count: int | None
    mean: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    def matrix(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T

    def rank(self, rtol: float = 1e-10) -> int:
        top = float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0
        if top <= 0.0:
            return 0
        return int(np.count_nonzero(self.eigenvalues > rtol * top))


@dataclass(frozen=True, slots=True)
class NoiseSchedule:
    alpha_bar: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    reg_scale: float
    coupling: Coupling
    zeta_total: float
    sigma_choice: SigmaChoice = "match_beta"

    @property
    def steps(self) -> int:
        return int(self.alpha_bar.shape[0])

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar_prev(self) -> np.ndarray:
        return np.concatenate(([1.0], self.alpha_bar[:-1]))


@dataclass(frozen=True, slots=True)
class LinearDenoiser:
    """Per-timestep linear predictor, diagonal in ``basis``.

    ``weights`` and ``bias`` are (T, d). Weights are mode coefficients; bias rows
    live in the original coordinates. The noise objective evaluates
    W_t (x - sqrt(alpha_bar_t) b_t), the data objective V_t x + r_t.
    """

    objective: Objective
    schedule: NoiseSchedule
    basis: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    def weight_matrix(self, t_index: int) -> np.ndarray:
        return (self.basis * self.weights[t_index]) @ self.basis.T


@dataclass(frozen=True, slots=True)
class TrainingState:
    tau: float
    learning_rate: float
    init_weights: np.ndarray | None = None


@dataclass(frozen=True, slots=True)
class SampleStatistics:
    """Closed-form mean and per-mode variance of generated samples at progress s."""

    s: float
    mean: np.ndarray
    variances: np.ndarray
    basis: np.ndarray

    def covariance(self) -> np.ndarray:
        return (self.basis * self.variances) @ self.basis.T


@dataclass(frozen=True, slots=True)
class ReplicaInput:
    """Population spectrum, sample count and regularization c = 1/alpha_hat."""

    eigenvalues: np.ndarray
    sample_count: int
    reg_scale: float

    @classmethod
    def from_alpha_hat(cls, eigenvalues: np.ndarray, sample_count: int, alpha_hat: float) -> ReplicaInput:
        reg_scale = 0.0 if math.isinf(alpha_hat) else 1.0 / alpha_hat
        return cls(np.asarray(eigenvalues, dtype=float), int(sample_count), reg_scale)

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def alpha_hat(self) -> float:
        return math.inf if self.reg_scale == 0.0 else 1.0 / self.reg_scale

    @property
    def ratio(self) -> float:
        """N / d."""
        return self.sample_count / self.dim


@dataclass(frozen=True, slots=True)
class ReplicaSolution:
    input: ReplicaInput
    q: float
    g_bar: float
    residual: float
    iterations: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class PsiValues:
    psi_11: float
    psi_12: float
    psi_12_symmetric: float
    psi_2: float


@dataclass(frozen=True, slots=True)
class ReplicaLosses:
    residual: float
    test_loss: float
    residual_per_t: np.ndarray
    test_loss_per_t: np.ndarray
    q_per_t: np.ndarray


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    count: int


@dataclass(slots=True)
class ExperimentRecord:
    """One CSV row. Unused numeric fields stay NaN."""

    kind: str
    d: int
    n: int = -1
    k: float = math.nan
    c: float = math.nan
    seed: int = 0
    draw: int = -1
    tau: float = math.nan
    t: int = -1
    train_loss: float = math.nan
    test_loss: float = math.nan
    train_loss_mc: float = math.nan
    train_loss_mc_se: float = math.nan
    test_loss_mc: float = math.nan
    test_loss_mc_se: float = math.nan
    train_loss_predicted: float = math.nan
    test_loss_predicted: float = math.nan
    data_train_loss: float = math.nan
    data_test_loss: float = math.nan
    identity_residual: float = math.nan
    null_gap: float = math.nan
    dkl: float = math.nan
    dkl_std: float = math.nan
    dkl_predicted: float = math.nan
    delta_eps: float = math.nan
    delta_eps_se: float = math.nan
    delta_eps_predicted: float = math.nan
    q: float = math.nan
    similarity: float = math.nan
    similarity_se: float = math.nan
    similarity_fresh: float = math.nan
    error: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class RunResult:
    command: str
    records: list[ExperimentRecord]
    artifacts: dict[str, str]
    warnings: list[str] = field(default_factory=list)
