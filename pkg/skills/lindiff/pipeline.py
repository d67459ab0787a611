"""Experiment orchestration behind the CLI subcommands."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, TypeVar

import numpy as np

from skills.lindiff.config import ExperimentConfig
from skills.lindiff.covariance import (
    covariance_from_data,
    empirical_stats,
    make_covariance,
    make_powerlaw_spectrum,
    population_stats,
    sample_gaussian,
    spectrum_from_data,
)
from skills.lindiff.denoiser import (
    as_data_predictor,
    data_gap_mode_terms,
    gradient_flow_weights,
    matched_data_init,
    optimal_denoiser,
    optimal_noise_denoiser,
    per_timestep_losses,
    residual_loss,
    test_loss,
    train_loss,
)
from skills.lindiff.errors import DomainError, SolverError
from skills.lindiff.metrics import (
    delta_epsilon_empirical,
    mode_resolved_difference,
    monte_carlo_loss,
    nearest_training_similarity,
)
from skills.lindiff.replica import empirical_dkl, predict_delta_epsilon, predict_dkl, predict_losses, solve_q
from skills.lindiff.reporting.tables import write_mode_resolved_tables, write_records_csv, write_spectrum_csv
from skills.lindiff.sampler import sample_iterative, sample_one_step
from skills.lindiff.schedule import make_schedule
from skills.lindiff.seeding import (
    STREAM_DENOISER_DIFF,
    STREAM_NOISE,
    STREAM_SAMPLING,
    STREAM_TEST,
    STREAM_TEST_NOISE,
    STREAM_TRAINING,
    derive_seed,
)
from skills.lindiff.sources.csv_source import load_data_matrix, write_data_matrix
from skills.lindiff.types import (
    EmpiricalStats,
    ExperimentRecord,
    NoiseSchedule,
    ReplicaInput,
    RunResult,
    SpectralCovariance,
    TrainingState,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _map(threads: int, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    work = list(items)
    if threads <= 1 or len(work) <= 1:
        return [fn(item) for item in work]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, work))


def build_truth(config: ExperimentConfig, k: float | None = None) -> SpectralCovariance:
    """Centered ground truth: a power-law spectrum, or the eigenpairs of a data file."""
    if config.spectrum_path:
        model = covariance_from_data(load_data_matrix(config.spectrum_path))
        return replace(model, mean=np.zeros(model.dim))
    return make_covariance(make_powerlaw_spectrum(config.d, config.k if k is None else k))


def build_schedule(config: ExperimentConfig, c: float | None = None) -> NoiseSchedule:
    return make_schedule(
        config.steps,
        zeta_total=config.zeta_total,
        c=config.c if c is None else c,
        coupling=config.coupling,
        sigma_choice=config.sigma_choice,
    )


def _training_set(config: ExperimentConfig, truth: SpectralCovariance, n: int, index: int) -> np.ndarray:
    return sample_gaussian(truth, n, derive_seed(config.seed, STREAM_TRAINING, index))


def _centered_stats(data: np.ndarray) -> EmpiricalStats:
    return empirical_stats(data, known_mean=np.zeros(data.shape[1]))


def _cell_index(k_index: int, n_index: int, draw: int, config: ExperimentConfig) -> int:
    return (k_index * len(config.n_list) + n_index) * config.draws + draw


@dataclass(slots=True)
class _Cell:
    k_index: int
    k: float
    n_index: int
    n: int
    draw: int


def _cells(config: ExperimentConfig) -> list[_Cell]:
    return [
        _Cell(ki, k, ni, n, draw)
        for ki, k in enumerate(config.hierarchy_exponents())
        for ni, n in enumerate(config.n_list)
        for draw in range(config.draws)
    ]


def _failure(record: ExperimentRecord, exc: Exception) -> ExperimentRecord:
    record.error = f"{type(exc).__name__}: {exc}"
    return record


# ---------------------------------------------------------------- sweep-dkl


def _dkl_cell(config: ExperimentConfig, cell: _Cell) -> list[ExperimentRecord]:
    truth = build_truth(config, cell.k)
    d = truth.dim
    data = _training_set(config, truth, cell.n, _cell_index(cell.k_index, cell.n_index, cell.draw, config))
    # Scatter about the true mean with the sample mean as the fitted mean.
    stats = replace(empirical_stats(data, known_mean=truth.mean), mean=data.mean(axis=0))
    rows: list[ExperimentRecord] = []
    for c in config.reg_scales():
        record = ExperimentRecord(kind="draw", d=d, n=cell.n, k=cell.k, c=c, seed=config.seed, draw=cell.draw)
        try:
            record.dkl = empirical_dkl(truth, stats, c) / d
        except DomainError as exc:
            _failure(record, exc)
        rows.append(record)
    return rows


def run_sweep_dkl(config: ExperimentConfig) -> RunResult:
    cells = _cells(config)
    draws = [row for rows in _map(config.threads, lambda cell: _dkl_cell(config, cell), cells) for row in rows]
    result = RunResult(command="sweep-dkl", records=list(draws), artifacts={})

    for k in config.hierarchy_exponents():
        truth = build_truth(config, k)
        d = truth.dim
        for n in config.n_list:
            summaries: list[ExperimentRecord] = []
            for c in config.reg_scales():
                values = np.array([r.dkl for r in draws if r.k == k and r.n == n and r.c == c and not r.error])
                summary = ExperimentRecord(kind="summary", d=d, n=n, k=k, c=c, seed=config.seed)
                if values.size:
                    summary.dkl = float(values.mean())
                    summary.dkl_std = float(values.std(ddof=1)) if values.size > 1 else math.nan
                try:
                    inp = _replica_input(truth, n, c)
                    solution = solve_q(inp)
                    summary.q = solution.q
                    result.warnings.extend(solution.warnings)
                    summary.dkl_predicted = predict_dkl(inp, solution)
                except (DomainError, SolverError) as exc:
                    _failure(summary, exc)
                summaries.append(summary)
            result.records.extend(summaries)

            ranked = [s for s in summaries if not math.isnan(s.dkl)]
            if len(config.reg_scales()) > 1 and ranked:
                best = min(ranked, key=lambda s: s.dkl)
                result.records.append(
                    ExperimentRecord(kind="c_star", d=d, n=n, k=k, c=best.c, seed=config.seed, dkl=best.dkl)
                )
            logger.info("[SWEEP DKL] k=%g n=%d d=%d cells=%d", k, n, d, len(summaries))
    return result


def _replica_input(truth: SpectralCovariance, n: int, c: float) -> ReplicaInput:
    return ReplicaInput(eigenvalues=truth.eigenvalues, sample_count=n, reg_scale=c)


# ---------------------------------------------------------------- loss-curves


@dataclass(slots=True)
class _CurveOutcome:
    cell: _Cell
    records: list[ExperimentRecord]
    tau_test: np.ndarray
    tau_test_per_t: np.ndarray


def _curve_cell(config: ExperimentConfig, cell: _Cell) -> _CurveOutcome:
    truth = build_truth(config, cell.k)
    d = truth.dim
    schedule = build_schedule(config)
    index = _cell_index(cell.k_index, cell.n_index, cell.draw, config)
    data = _training_set(config, truth, cell.n, index)
    stats = _centered_stats(data)
    base = dict(d=d, n=cell.n, k=cell.k, c=config.c, seed=config.seed, draw=cell.draw)

    optimum = optimal_denoiser(stats, schedule, config.objective)
    record = ExperimentRecord(kind="optimum", **base)
    record.train_loss = residual_loss(stats, schedule, config.objective)
    record.test_loss = test_loss(optimum, truth)
    test_data = sample_gaussian(truth, config.test_samples, derive_seed(config.seed, STREAM_TEST, index))
    if config.noise_draws > 0:
        noise_seed = derive_seed(config.seed, STREAM_NOISE, index)
        train_mc = monte_carlo_loss(optimum, data, config.noise_draws, noise_seed)
        test_mc = monte_carlo_loss(
            optimum, test_data, config.noise_draws, derive_seed(config.seed, STREAM_TEST_NOISE, index)
        )
        record.train_loss_mc, record.train_loss_mc_se = train_mc.mean, train_mc.stderr
        record.test_loss_mc, record.test_loss_mc_se = test_mc.mean, test_mc.stderr
    if config.objective == "noise":
        reference = optimal_noise_denoiser(population_stats(truth), schedule)
        delta = delta_epsilon_empirical(
            optimum, reference, test_data, derive_seed(config.seed, STREAM_DENOISER_DIFF, index)
        )
        record.delta_eps, record.delta_eps_se = delta.mean, delta.stderr
    records = [record]

    tau_test = np.empty(len(config.tau_grid))
    tau_test_per_t = np.empty((len(config.tau_grid), schedule.steps))
    for i, tau in enumerate(config.tau_grid):
        trained = gradient_flow_weights(stats, schedule, TrainingState(tau=tau, learning_rate=config.eta), config.objective)
        per_t = per_timestep_losses(trained, truth)
        tau_test_per_t[i] = per_t
        tau_test[i] = float(per_t.mean())
        row = ExperimentRecord(kind="tau", tau=tau, **base)
        row.train_loss = train_loss(trained, stats)
        row.test_loss = tau_test[i]
        records.append(row)
    return _CurveOutcome(cell=cell, records=records, tau_test=tau_test, tau_test_per_t=tau_test_per_t)


def run_loss_curves(config: ExperimentConfig) -> RunResult:
    outcomes = _map(config.threads, lambda cell: _curve_cell(config, cell), _cells(config))
    result = RunResult(command="loss-curves", records=[r for o in outcomes for r in o.records], artifacts={})
    schedule = build_schedule(config)
    if config.objective != "noise":
        message = (
            "replica predictions cover the noise objective only; "
            f"predicted columns left empty for objective={config.objective}"
        )
        logger.warning("[LOSS CURVES] %s", message)
        result.warnings.append(message)

    for k in config.hierarchy_exponents():
        truth = build_truth(config, k)
        d = truth.dim
        for n in config.n_list:
            group = [o for o in outcomes if o.cell.k == k and o.cell.n == n]
            base = dict(d=d, n=n, k=k, c=config.c, seed=config.seed)

            optima = [o.records[0] for o in group]
            summary = ExperimentRecord(kind="summary", **base)
            summary.train_loss = float(np.mean([r.train_loss for r in optima]))
            summary.test_loss = float(np.mean([r.test_loss for r in optima]))
            summary.delta_eps = float(np.mean([r.delta_eps for r in optima]))
            if config.objective == "noise":
                try:
                    predicted = predict_losses(truth.eigenvalues, n, schedule)
                    summary.train_loss_predicted = predicted.residual
                    summary.test_loss_predicted = predicted.test_loss
                    summary.delta_eps_predicted = predict_delta_epsilon(truth.eigenvalues, n, schedule)
                except (DomainError, SolverError) as exc:
                    _failure(summary, exc)
            result.records.append(summary)

            mean_curve = np.mean([o.tau_test for o in group], axis=0)
            mean_slices = np.mean([o.tau_test_per_t for o in group], axis=0)
            for i, tau in enumerate(config.tau_grid):
                for t in range(schedule.steps):
                    result.records.append(
                        ExperimentRecord(kind="t_slice", tau=tau, t=t + 1, test_loss=float(mean_slices[i, t]), **base)
                    )
            best = int(np.argmin(mean_curve))
            result.records.append(
                ExperimentRecord(kind="tau_star", tau=config.tau_grid[best], test_loss=float(mean_curve[best]), **base)
            )
            logger.info("[LOSS CURVES] k=%g n=%d tau_star=%.4g", k, n, config.tau_grid[best])
    return result


def optimal_stopping_times(result: RunResult) -> dict[tuple[float, int], float]:
    """tau* per (k, N) from a loss-curves result."""
    return {(r.k, r.n): r.tau for r in result.records if r.kind == "tau_star"}


# ---------------------------------------------------------- compare-objectives


def _compare_cell(config: ExperimentConfig, cell: _Cell) -> list[ExperimentRecord]:
    truth = build_truth(config, cell.k)
    d = truth.dim
    schedule = build_schedule(config)
    data = _training_set(config, truth, cell.n, _cell_index(cell.k_index, cell.n_index, cell.draw, config))
    stats = _centered_stats(data)
    base = dict(d=d, n=cell.n, k=cell.k, c=config.c, seed=config.seed, draw=cell.draw)
    data_init = matched_data_init(None, schedule, d)

    records: list[ExperimentRecord] = []
    for tau in config.tau_grid:
        noise = gradient_flow_weights(stats, schedule, TrainingState(tau=tau, learning_rate=config.eta), "noise")
        data_model = gradient_flow_weights(
            stats, schedule, TrainingState(tau=tau, learning_rate=config.eta, init_weights=data_init), "data"
        )
        row = ExperimentRecord(kind="tau", tau=tau, **base)
        row.train_loss = train_loss(noise, stats)
        row.test_loss = test_loss(noise, truth)
        row.data_train_loss = train_loss(data_model, stats)
        row.data_test_loss = test_loss(data_model, truth)
        row.identity_residual = float(np.max(np.abs(data_model.weights - as_data_predictor(noise).weights)))
        records.append(row)

    optimum = ExperimentRecord(kind="optimum", **base)
    optimum.train_loss = residual_loss(stats, schedule, "noise")
    optimum.test_loss = test_loss(optimal_denoiser(stats, schedule, "noise"), truth)
    optimum.data_train_loss = residual_loss(stats, schedule, "data")
    optimum.data_test_loss = test_loss(optimal_denoiser(stats, schedule, "data"), truth)
    first, second = data_gap_mode_terms(stats, truth, schedule)
    null_modes = stats.eigenvalues == 0.0
    optimum.null_gap = float(first[null_modes].sum() + second[:, null_modes].sum())
    records.append(optimum)
    return records


def run_compare_objectives(config: ExperimentConfig) -> RunResult:
    rows = _map(config.threads, lambda cell: _compare_cell(config, cell), _cells(config))
    records = [r for group in rows for r in group]
    worst = max((r.identity_residual for r in records if r.kind == "tau"), default=0.0)
    logger.info("[COMPARE OBJECTIVES] rows=%d max_identity_residual=%.3e", len(records), worst)
    return RunResult(command="compare-objectives", records=records, artifacts={})


# ---------------------------------------------------------------- spectrum


def spectrum_for(config: ExperimentConfig, data_path: str | None = None) -> np.ndarray:
    path = data_path or config.spectrum_path
    if path:
        return spectrum_from_data(load_data_matrix(path))
    return make_powerlaw_spectrum(config.d, config.k)


# ---------------------------------------------------------------- sample


def _generate(config: ExperimentConfig, stats: EmpiricalStats, schedule: NoiseSchedule, seed: int) -> np.ndarray:
    if config.sampler == "one_step":
        effective = replace(stats, eigenvalues=stats.eigenvalues + schedule.reg_scale)
        return sample_one_step(effective, config.sample_count, seed)
    return sample_iterative(optimal_noise_denoiser(stats, schedule), config.sample_count, seed)


def generate_samples(config: ExperimentConfig) -> np.ndarray:
    if config.training_path:
        data = load_data_matrix(config.training_path)
    else:
        data = _training_set(config, build_truth(config), config.n_list[0], 0)
    seed = derive_seed(config.seed, STREAM_SAMPLING, 0)
    return _generate(config, empirical_stats(data), build_schedule(config), seed)


# ---------------------------------------------------------------- mode-resolved


def _mode_cell(config: ExperimentConfig, cell: _Cell) -> np.ndarray:
    truth = build_truth(config, cell.k)
    index = _cell_index(cell.k_index, cell.n_index, cell.draw, config)
    stats = _centered_stats(_training_set(config, truth, cell.n, index))
    trained = optimal_noise_denoiser(stats, build_schedule(config))
    reference = optimal_noise_denoiser(population_stats(truth), build_schedule(config, c=config.reference_c))
    test_data = sample_gaussian(truth, config.test_samples, derive_seed(config.seed, STREAM_TEST, index))
    return mode_resolved_difference(
        trained,
        reference,
        truth.basis,
        test_data,
        eta=config.mode_eta,
        seed=derive_seed(config.seed, STREAM_DENOISER_DIFF, index),
    )


def mode_resolved_tables(config: ExperimentConfig) -> dict[tuple[float, int], np.ndarray]:
    """Draw-averaged (T, d) relative differences from the population reference, per (k, N).

    Modes are the eigenvectors of the ground truth, ordered by decreasing eigenvalue.
    """
    cells = _cells(config)
    matrices = _map(config.threads, lambda cell: _mode_cell(config, cell), cells)
    tables: dict[tuple[float, int], np.ndarray] = {}
    for k in config.hierarchy_exponents():
        for n in config.n_list:
            group = [m for cell, m in zip(cells, matrices) if cell.k == k and cell.n == n]
            tables[(k, n)] = np.mean(group, axis=0)
            logger.info("[MODE RESOLVED] k=%g n=%d mean=%.4g", k, n, float(tables[(k, n)].mean()))
    return tables


# ---------------------------------------------------------------- memorization


def _similarity_record(record: ExperimentRecord, nearest: np.ndarray, fresh: np.ndarray) -> ExperimentRecord:
    record.similarity = float(nearest.mean())
    record.similarity_se = float(nearest.std(ddof=1) / math.sqrt(nearest.size)) if nearest.size > 1 else math.nan
    record.similarity_fresh = float(fresh.mean())
    return record


def _memorization_cell(config: ExperimentConfig, cell: _Cell) -> ExperimentRecord:
    truth = build_truth(config, cell.k)
    index = _cell_index(cell.k_index, cell.n_index, cell.draw, config)
    record = ExperimentRecord(kind="draw", d=truth.dim, n=cell.n, k=cell.k, c=config.c, seed=config.seed, draw=cell.draw)
    try:
        data = _training_set(config, truth, cell.n, index)
        sampling_seed = derive_seed(config.seed, STREAM_SAMPLING, index)
        generated = _generate(config, empirical_stats(data), build_schedule(config), sampling_seed)
        fresh = sample_gaussian(truth, config.sample_count, derive_seed(config.seed, STREAM_TEST, index))
        _similarity_record(
            record,
            nearest_training_similarity(generated, data, truth.basis, config.drop_leading),
            nearest_training_similarity(fresh, data, truth.basis, config.drop_leading),
        )
    except DomainError as exc:
        _failure(record, exc)
    return record


def run_memorization(config: ExperimentConfig) -> RunResult:
    """Detail similarity of generated samples to their nearest training sample, per N.

    ``similarity_fresh`` is the same measure for fresh ground-truth samples, the
    level a non-memorizing model approaches.
    """
    draws = _map(config.threads, lambda cell: _memorization_cell(config, cell), _cells(config))
    result = RunResult(command="memorization", records=list(draws), artifacts={})
    for k in config.hierarchy_exponents():
        for n in config.n_list:
            group = [r for r in draws if r.k == k and r.n == n and not r.error]
            summary = ExperimentRecord(kind="summary", d=draws[0].d, n=n, k=k, c=config.c, seed=config.seed)
            if group:
                _similarity_record(
                    summary,
                    np.array([r.similarity for r in group]),
                    np.array([r.similarity_fresh for r in group]),
                )
            result.records.append(summary)
            logger.info(
                "[MEMORIZATION] k=%g n=%d similarity=%.4g fresh=%.4g",
                k,
                n,
                summary.similarity,
                summary.similarity_fresh,
            )
    return result


# ---------------------------------------------------------------- entry point

COMMANDS = ("spectrum", "sweep-dkl", "loss-curves", "compare-objectives", "sample", "mode-resolved", "memorization")


def run(command: str, config: ExperimentConfig, data_path: str | None = None) -> RunResult:
    """Run one subcommand and write its CSV to ``config.out``."""
    logger.info("[RUN] command=%s seed=%d out=%s threads=%d", command, config.seed, config.out, config.threads)
    if command == "spectrum":
        eigenvalues = spectrum_for(config, data_path)
        return RunResult(command=command, records=[], artifacts={"csv_path": write_spectrum_csv(config.out, eigenvalues)})
    if command == "sample":
        samples = generate_samples(config)
        return RunResult(command=command, records=[], artifacts={"csv_path": str(write_data_matrix(config.out, samples))})
    if command == "mode-resolved":
        tables = mode_resolved_tables(config)
        return RunResult(command=command, records=[], artifacts={"csv_path": write_mode_resolved_tables(config.out, tables)})

    runners = {
        "sweep-dkl": run_sweep_dkl,
        "loss-curves": run_loss_curves,
        "compare-objectives": run_compare_objectives,
        "memorization": run_memorization,
    }
    if command not in runners:
        raise DomainError(f"unknown command: {command}")
    result = runners[command](config)
    result.artifacts["csv_path"] = write_records_csv(config.out, result.records)
    return result
