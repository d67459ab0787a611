"""Replica-symmetric predictions for linear diffusion models trained on N samples.

All averages are over training sets of N centered Gaussian samples with
population spectrum ``eigenvalues``. The regularization enters as
c = 1/alpha_hat; a per-timestep prediction uses c_t = 1/alpha_hat_t.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from skills.lindiff.errors import DomainError, SolverError
from skills.lindiff.schedule import alpha_hat as schedule_alpha_hat
from skills.lindiff.seeding import make_rng
from skills.lindiff.types import (
    EmpiricalStats,
    MonteCarloEstimate,
    NoiseSchedule,
    PsiValues,
    ReplicaInput,
    ReplicaLosses,
    ReplicaSolution,
    SpectralCovariance,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SolverParams:
    damping: float = 0.5
    max_iter: int = 100_000
    tol: float = 1e-12
    uniqueness_tol: float = 1e-8
    check_uniqueness: bool = True


DEFAULT_PARAMS = SolverParams()


def _mean(values: np.ndarray) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel()) / values.size


def _validate(inp: ReplicaInput) -> None:
    lam = inp.eigenvalues
    if lam.ndim != 1 or lam.size == 0:
        raise DomainError("replica input needs a non-empty spectrum")
    if np.any(lam < 0) or not np.any(lam > 0):
        raise DomainError("spectrum must be non-negative and not all zero")
    if inp.sample_count < 1:
        raise DomainError(f"sample count must be >= 1, got {inp.sample_count}")
    if inp.reg_scale < 0:
        raise DomainError(f"regularization c must be >= 0, got {inp.reg_scale}")


def _same_input(a: ReplicaInput, b: ReplicaInput) -> bool:
    if a is b:
        return True
    return (
        a.sample_count == b.sample_count
        and a.reg_scale == b.reg_scale
        and np.array_equal(np.sort(a.eigenvalues), np.sort(b.eigenvalues))
    )


def _rhs(q: float, inp: ReplicaInput) -> float:
    d, n = inp.dim, inp.sample_count
    denom = d * q + n * inp.reg_scale
    if denom <= 0.0:
        return 0.0
    kappa = n / denom
    lam = inp.eigenvalues
    return _mean(lam / (1.0 + lam * kappa))


def _iterate(inp: ReplicaInput, q0: float, params: SolverParams) -> tuple[float, float, int]:
    q = q0
    omega = params.damping
    residual = math.inf
    for iteration in range(1, params.max_iter + 1):
        residual = _rhs(q, inp) - q
        if abs(residual) < params.tol:
            return q, residual, iteration
        q += omega * residual
    raise SolverError(
        f"q fixed point did not converge after {params.max_iter} iterations (residual {residual:.3e})",
        residual=residual,
        iterations=params.max_iter,
    )


def s_of_q(q: float, d: int, n: int, alpha_hat: float) -> float:
    """(alpha_hat (d/N - 1) q + 1)/(alpha_hat (d/N) q + 1), written with c = 1/alpha_hat."""
    c = 0.0 if math.isinf(alpha_hat) else 1.0 / alpha_hat
    ratio = d / n
    denom = ratio * q + c
    if denom == 0.0:
        raise DomainError("s(q) is undefined at q = 0 with c = 0")
    return ((ratio - 1.0) * q + c) / denom


def solve_q(inp: ReplicaInput, tol: float | None = None, params: SolverParams = DEFAULT_PARAMS) -> ReplicaSolution:
    """Damped fixed point of q = (1/d) sum lambda / (1 + lambda N/(dq + Nc)).

    With c = 0 and N >= d the only non-negative solution is the c -> 0+ limit q = 0.
    """
    _validate(inp)
    if tol is not None:
        if tol <= 0:
            raise DomainError(f"tolerance must be positive, got {tol}")
        params = replace(params, tol=tol)
    d, n, c = inp.dim, inp.sample_count, inp.reg_scale

    if c == 0.0 and n >= d:
        g_bar = float(np.count_nonzero(inp.eigenvalues == 0.0)) / d
        logger.debug("[REPLICA SOLVE] n=%d d=%d c=0 branch=limit q=0", n, d)
        return ReplicaSolution(input=inp, q=0.0, g_bar=g_bar, residual=_rhs(0.0, inp), iterations=0)

    lam_bar = _mean(inp.eigenvalues)
    q, residual, iterations = _iterate(inp, lam_bar, params)
    warnings: list[str] = []
    if params.check_uniqueness:
        low, _, _ = _iterate(inp, lam_bar / 10.0, params)
        high, _, _ = _iterate(inp, lam_bar * 10.0, params)
        if abs(low - high) > params.uniqueness_tol:
            message = f"saddle point not unique: starts lambda_bar/10 and 10 lambda_bar give q={low:.6g} and q={high:.6g}"
            logger.warning("[REPLICA SOLVE] n=%d d=%d c=%g %s", n, d, c, message)
            warnings.append(message)

    g_bar = s_of_q(q, d, n, inp.alpha_hat)
    logger.debug("[REPLICA SOLVE] n=%d d=%d c=%g q=%.6g residual=%.2e iterations=%d", n, d, c, q, residual, iterations)
    return ReplicaSolution(input=inp, q=q, g_bar=g_bar, residual=residual, iterations=iterations, warnings=tuple(warnings))


def solve_g_bar(eigenvalues: np.ndarray, n: int, alpha_hat: float) -> float:
    """Resolvent trace (1/d) <Tr (I + alpha_hat Sigma_0)^-1> from its own self-consistency,
    g = (1/d) sum 1/(1 + alpha_hat lambda (1 - d/N + (d/N) g)), independent of q."""
    lam = np.asarray(eigenvalues, dtype=float)
    d = lam.size
    ratio = d / n

    def excess(g: float) -> float:
        return _mean(1.0 / (1.0 + alpha_hat * lam * (1.0 - ratio + ratio * g))) - g

    lower = max(0.0, 1.0 - 1.0 / ratio)
    if excess(1.0) >= 0.0:
        return 1.0
    return float(optimize.brentq(excess, lower, 1.0, xtol=1e-15, rtol=1e-14))


def q_bound_series(inp: ReplicaInput, n: int) -> float:
    """q_n of the upper-bound series; q_0 is the mean eigenvalue."""
    _validate(inp)
    if n < 0:
        raise DomainError(f"series index must be >= 0, got {n}")
    lam = inp.eigenvalues
    ratio = inp.dim / inp.sample_count
    q = _mean(lam)
    for _ in range(n):
        shift = ratio * q + inp.reg_scale
        q = shift * _mean(lam / (lam + shift)) if shift > 0.0 else 0.0
    return q


def q_upper_bound_large_n(d: int, n: int, alpha_hat: float) -> float:
    """q <= 1/(alpha_hat (1 - d/N)) for N > d; also the leading large-N value of q."""
    if n <= d:
        raise DomainError(f"large-N bound needs N > d, got N={n}, d={d}")
    return 1.0 / (alpha_hat * (1.0 - d / n))


def dkl_large_n_asymptote(d: int, n: int) -> float:
    """Per-dimension DKL for N >> d and vanishing regularization."""
    return d / (4.0 * n)


def r_moment(solution: ReplicaSolution, k: float) -> float:
    inp = solution.input
    u = _u(solution)
    lam = inp.eigenvalues
    return _mean(lam**k / (u + inp.ratio * lam) ** 2)


def _u(solution: ReplicaSolution) -> float:
    inp = solution.input
    u = solution.q + inp.reg_scale * inp.ratio
    if u <= 0.0:
        raise DomainError("resolvent averages need c > 0 or N < d")
    return u


def resolvent_square_trace(solution: ReplicaSolution, a: float, b: float) -> float:
    """(1/d) < sum_ij lambda_i^a lambda_j^b ((I + alpha_hat Sigma_0)^-1)_ij^2 >.

    Equals u^2 [R_{a+b} + (N/d) R_{1+a} R_{1+b} / (1 - (N/d) R_2)] with u = q + Nc/d.
    """
    ratio = solution.input.ratio
    u = _u(solution)
    r2 = r_moment(solution, 2.0)
    if ratio * r2 >= 1.0:
        raise SolverError(f"singular susceptibility: (N/d) R_2 = {ratio * r2:.6g} >= 1")
    cross = ratio * r_moment(solution, 1.0 + a) * r_moment(solution, 1.0 + b) / (1.0 - ratio * r2)
    return u * u * (r_moment(solution, a + b) + cross)


def psi_functions(solution: ReplicaSolution) -> PsiValues:
    inp = solution.input
    u = _u(solution)
    return PsiValues(
        psi_11=resolvent_square_trace(solution, 0.0, 0.0),
        psi_12=resolvent_square_trace(solution, 1.0, 0.0),
        psi_12_symmetric=resolvent_square_trace(solution, 0.5, 0.5),
        psi_2=_mean(1.0 / (1.0 + inp.eigenvalues * inp.ratio / u)),
    )


def _per_t_solutions(eigenvalues: np.ndarray, n: int, schedule: NoiseSchedule) -> list[ReplicaSolution]:
    lam = np.asarray(eigenvalues, dtype=float)
    return [solve_q(ReplicaInput.from_alpha_hat(lam, n, float(a))) for a in schedule_alpha_hat(schedule)]


def predict_losses(eigenvalues: np.ndarray, n: int, schedule: NoiseSchedule) -> ReplicaLosses:
    """Training-set averaged residual and test loss of the optimal noise denoiser.

    Both include the ridge penalty, matching ``denoiser.train_loss`` and
    ``denoiser.test_loss``.
    """
    solutions = _per_t_solutions(eigenvalues, n, schedule)
    residual = np.empty(schedule.steps)
    test = np.empty(schedule.steps)
    for i, solution in enumerate(solutions):
        ab = float(schedule.alpha_bar[i])
        noise = 1.0 - ab + float(schedule.gamma[i])
        psi = psi_functions(solution)
        shrink = (1.0 - ab) / noise
        residual[i] = 1.0 - shrink * psi.psi_2
        test[i] = 1.0 + (1.0 - ab) / noise**2 * (noise * psi.psi_11 + ab * psi.psi_12) - 2.0 * shrink * psi.psi_2
    return ReplicaLosses(
        residual=_mean(residual),
        test_loss=_mean(test),
        residual_per_t=residual,
        test_loss_per_t=test,
        q_per_t=np.array([s.q for s in solutions]),
    )


def predict_delta_epsilon(eigenvalues: np.ndarray, n: int, schedule: NoiseSchedule) -> float:
    """Mean squared distance (per dimension) between the N-sample optimal noise
    predictor and the population optimum, on noised test points."""
    lam = np.asarray(eigenvalues, dtype=float)
    solutions = _per_t_solutions(lam, n, schedule)
    snr = schedule_alpha_hat(schedule)
    per_t = np.empty(schedule.steps)
    for i, solution in enumerate(solutions):
        ab = float(schedule.alpha_bar[i])
        noise = 1.0 - ab + float(schedule.gamma[i])
        psi = psi_functions(solution)
        u = _u(solution)
        mean_resolvent = 1.0 / (1.0 + lam * solution.input.ratio / u)
        reference = 1.0 / (1.0 + snr[i] * lam)
        signal = ab * lam + 1.0 - ab
        cross = _mean(signal * reference * mean_resolvent)
        own = _mean(signal * reference**2)
        per_t[i] = (1.0 - ab) / noise**2 * ((1.0 - ab) * psi.psi_11 + ab * psi.psi_12 - 2.0 * cross + own)
    return _mean(per_t)


def predict_dkl(inp: ReplicaInput, solution: ReplicaSolution | None = None) -> float:
    """Training-set average of DKL(N(mu_0, Sigma_0 + cI) || N(mu, Sigma)) / d.

    A ``solution`` already solved for ``inp`` is reused instead of solving for q again.
    """
    _validate(inp)
    if solution is not None and not _same_input(solution.input, inp):
        raise DomainError("solution was solved for a different replica input")
    lam = inp.eigenvalues
    d, n, c = inp.dim, inp.sample_count, inp.reg_scale
    if c <= 0.0:
        raise DomainError("replica DKL needs c = 1/alpha_hat > 0")
    if np.any(lam <= 0.0):
        raise DomainError("replica DKL needs a full-rank ground truth (some lambda_i = 0)")
    inv_trace = math.fsum(1.0 / lam)
    if c * inv_trace > d:
        logger.warning("[REPLICA DKL] near-singular ground truth: c*Tr(Sigma^-1)=%.4g exceeds d=%d", c * inv_trace, d)

    q = solution.q if solution is not None else solve_q(inp).q
    ratio = d / n
    spread = ratio * q / c + 1.0
    fit = 0.5 * q / (ratio * q + c)
    logdet = -math.fsum(np.log(np.abs(c / lam + 1.0 / spread))) / (2.0 * d)
    volume = -(n / (2.0 * d)) * math.log(spread)
    finite = (d + 2.0 * math.sqrt(c) * math.fsum(lam**-0.5) + c * (n + 1) * inv_trace) / (2.0 * n * d)
    return fit + logdet + volume + finite


def empirical_dkl(truth: SpectralCovariance, stats: EmpiricalStats, c: float) -> float:
    """DKL(N(mu_0, Sigma_0 + cI) || N(mu, Sigma)), evaluated in the eigenbases."""
    if c < 0:
        raise DomainError(f"regularization c must be >= 0, got {c}")
    if truth.dim != stats.dim:
        raise DomainError(f"dimension mismatch: truth d={truth.dim}, stats d={stats.dim}")
    lam = truth.eigenvalues
    if np.any(lam <= 0.0):
        raise DomainError("ground truth must be full rank")
    fitted = stats.eigenvalues + c
    if np.any(fitted <= 0.0):
        raise DomainError("Sigma_0 + cI is singular (c = 0 with a rank-deficient Sigma_0)")

    overlap = truth.basis.T @ stats.basis
    trace = math.fsum(((overlap**2) * fitted[None, :] / lam[:, None]).ravel())
    shift = truth.basis.T @ (truth.mean - stats.mean)
    mahalanobis = math.fsum(shift**2 / lam)
    logdet = math.fsum(np.log(lam)) - math.fsum(np.log(fitted))
    return 0.5 * (logdet + mahalanobis + trace - truth.dim)


def monte_carlo_resolvent(
    eigenvalues: np.ndarray, n: int, alpha_hat: float, draws: int, seed: int
) -> dict[str, MonteCarloEstimate]:
    """Wishart estimates of the resolvent traces the replica theory predicts.

    Each draw forms Sigma_0 = (1/N) sum x x^T from N centered samples with
    covariance diag(eigenvalues) and records, for A = (I + alpha_hat Sigma_0)^-1:
    g_bar = Tr A/d, q = Tr(Sigma A)/d, psi_11 = Tr A^2/d, psi_12 = Tr(Sigma A^2)/d
    and psi_12_symmetric = Tr(Sigma^1/2 A Sigma^1/2 A)/d.
    """
    if draws < 2:
        raise DomainError(f"need at least 2 draws for a standard error, got {draws}")
    if not alpha_hat > 0 or math.isinf(alpha_hat):
        raise DomainError(f"alpha_hat must be positive and finite, got {alpha_hat}")
    lam = np.asarray(eigenvalues, dtype=float)
    d = lam.size
    root = np.sqrt(lam)
    names = ("g_bar", "q", "psi_11", "psi_12", "psi_12_symmetric")
    values = {name: np.empty(draws) for name in names}
    for draw in range(draws):
        rng = make_rng(seed, 0, draw)
        x = rng.standard_normal((n, d)) * root
        scatter = x.T @ x / n
        mu, vecs = np.linalg.eigh(np.eye(d) + alpha_hat * scatter)
        resolvent = (vecs / mu) @ vecs.T
        square_diag = (vecs**2 / mu**2).sum(axis=1)
        values["g_bar"][draw] = np.mean(1.0 / mu)
        values["q"][draw] = np.mean(lam * np.diag(resolvent))
        values["psi_11"][draw] = np.mean(1.0 / mu**2)
        values["psi_12"][draw] = np.mean(lam * square_diag)
        values["psi_12_symmetric"][draw] = np.sum(np.outer(root, root) * resolvent**2) / d
    return {
        name: MonteCarloEstimate(
            mean=float(v.mean()), stderr=float(v.std(ddof=1) / math.sqrt(draws)), count=draws
        )
        for name, v in values.items()
    }
