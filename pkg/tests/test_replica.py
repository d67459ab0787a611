import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from skills.lindiff.covariance import (
    empirical_stats,
    make_covariance,
    make_powerlaw_spectrum,
    population_stats,
    sample_gaussian,
)
from skills.lindiff.denoiser import optimal_noise_denoiser, test_loss as population_loss, train_loss
from skills.lindiff.errors import DomainError, SolverError
from skills.lindiff.metrics import delta_epsilon_empirical
from skills.lindiff.replica import (
    SolverParams,
    dkl_large_n_asymptote,
    empirical_dkl,
    monte_carlo_resolvent,
    predict_delta_epsilon,
    predict_dkl,
    predict_losses,
    psi_functions,
    q_bound_series,
    q_upper_bound_large_n,
    s_of_q,
    solve_g_bar,
    solve_q,
)
from skills.lindiff.schedule import make_schedule
from skills.lindiff.types import ReplicaInput


def _input(d: int = 100, k: float = 1.0, n: int = 50, c: float = 0.1) -> ReplicaInput:
    return ReplicaInput(eigenvalues=make_powerlaw_spectrum(d, k), sample_count=n, reg_scale=c)


def test_solve_q_satisfies_the_fixed_point():
    inp = _input()
    solution = solve_q(inp)
    kappa = inp.sample_count / (inp.dim * solution.q + inp.sample_count * inp.reg_scale)

    assert solution.q > 0
    assert abs(solution.residual) < 1e-12
    assert solution.q == pytest.approx(np.mean(inp.eigenvalues / (1 + inp.eigenvalues * kappa)), abs=1e-11)
    assert solution.warnings == ()


@pytest.mark.parametrize("n", [25, 50, 75])
def test_flat_spectrum_without_regularization_has_closed_form_q(n):
    inp = ReplicaInput(eigenvalues=np.ones(100), sample_count=n, reg_scale=0.0)

    assert solve_q(inp).q == pytest.approx(1 - n / 100, abs=1e-10)


def test_unregularized_overdetermined_case_returns_the_limit():
    solution = solve_q(ReplicaInput(eigenvalues=np.ones(10), sample_count=20, reg_scale=0.0))

    assert solution.q == 0.0
    assert solution.g_bar == 0.0
    assert solution.iterations == 0


def test_g_bar_from_q_agrees_with_resolvent_self_consistency():
    for n in (30, 100, 400):
        inp = _input(n=n, c=0.2)
        solution = solve_q(inp)

        assert solution.g_bar == pytest.approx(s_of_q(solution.q, inp.dim, n, inp.alpha_hat), rel=1e-12)
        assert solution.g_bar == pytest.approx(solve_g_bar(inp.eigenvalues, n, inp.alpha_hat), abs=1e-9)


def test_bound_series_decreases_toward_q():
    inp = _input(n=40, c=0.05)
    q = solve_q(inp).q
    series = [q_bound_series(inp, i) for i in range(6)]

    assert series[0] == pytest.approx(float(np.mean(inp.eigenvalues)))
    assert all(a >= b - 1e-15 for a, b in zip(series, series[1:]))
    assert all(value >= q - 1e-12 for value in series)


def test_large_n_bound_holds():
    inp = _input(d=50, n=500, c=0.01)

    assert solve_q(inp).q <= q_upper_bound_large_n(50, 500, inp.alpha_hat)
    with pytest.raises(DomainError):
        q_upper_bound_large_n(50, 50, 1.0)


def test_solver_reports_non_convergence():
    with pytest.raises(SolverError) as err:
        solve_q(_input(), params=SolverParams(max_iter=2, check_uniqueness=False))

    assert err.value.iterations == 2
    assert err.value.residual is not None


def test_resolvent_averages_match_wishart_draws():
    lam = make_powerlaw_spectrum(100, 1.0)
    alpha_hat = 2.0
    solution = solve_q(ReplicaInput.from_alpha_hat(lam, 200, alpha_hat))
    psi = psi_functions(solution)
    mc = monte_carlo_resolvent(lam, 200, alpha_hat, draws=20, seed=0)

    pairs = {
        "g_bar": solution.g_bar,
        "q": solution.q,
        "psi_11": psi.psi_11,
        "psi_12": psi.psi_12,
        "psi_12_symmetric": psi.psi_12_symmetric,
    }
    for name, predicted in pairs.items():
        estimate = mc[name]
        assert estimate.count == 20
        assert abs(estimate.mean - predicted) <= 5 * estimate.stderr + 0.02 * abs(predicted), name
    assert psi.psi_2 == pytest.approx(solution.g_bar, rel=1e-10)


def test_predicted_losses_match_training_set_averages():
    truth = make_covariance(make_powerlaw_spectrum(100, 1.0))
    sched = make_schedule(10)
    for n in (50, 300):
        train, test = [], []
        for draw in range(10):
            data = sample_gaussian(truth, n, seed=100 * n + draw)
            stats = empirical_stats(data, known_mean=np.zeros(100))
            den = optimal_noise_denoiser(stats, sched)
            train.append(train_loss(den, stats))
            test.append(population_loss(den, truth))

        predicted = predict_losses(truth.eigenvalues, n, sched)

        assert predicted.residual_per_t.shape == (10,)
        assert predicted.residual == pytest.approx(np.mean(train), abs=0.02)
        assert predicted.test_loss == pytest.approx(np.mean(test), abs=0.02)
        assert predicted.test_loss > predicted.residual


def _dense_delta_epsilon(a, b, truth) -> float:
    sched = a.schedule
    d = truth.dim
    values = []
    for t in range(sched.steps):
        ab = sched.alpha_bar[t]
        noised = ab * truth.matrix() + (1 - ab) * np.eye(d)
        diff = a.weight_matrix(t) - b.weight_matrix(t)
        values.append(np.trace(diff @ noised @ diff.T) / d)
    return float(np.mean(values))


def test_predicted_delta_epsilon_matches_dense_average():
    truth = make_covariance(make_powerlaw_spectrum(64, 1.0))
    sched = make_schedule(10)
    reference = optimal_noise_denoiser(population_stats(truth), sched)
    n = 100

    values = []
    for draw in range(10):
        data = sample_gaussian(truth, n, seed=draw)
        stats = empirical_stats(data, known_mean=np.zeros(64))
        values.append(_dense_delta_epsilon(optimal_noise_denoiser(stats, sched), reference, truth))

    assert predict_delta_epsilon(truth.eigenvalues, n, sched) == pytest.approx(np.mean(values), rel=0.1)


def test_predicted_dkl_reaches_large_n_asymptote():
    lam = make_powerlaw_spectrum(50, 1.0)
    inp = ReplicaInput(eigenvalues=lam, sample_count=5000, reg_scale=1e-8 * lam.min())

    assert predict_dkl(inp) == pytest.approx(dkl_large_n_asymptote(50, 5000), rel=0.1)


def test_predicted_dkl_is_permutation_invariant():
    inp = _input(d=40, n=30, c=0.05)
    shuffled = replace(inp, eigenvalues=inp.eigenvalues[np.random.default_rng(0).permutation(40)])

    assert predict_dkl(shuffled) == pytest.approx(predict_dkl(inp), rel=1e-12)


@pytest.mark.parametrize("k", [0.0, 1.0, 2.0])
@pytest.mark.parametrize("n", [10, 30, 100, 300, 1000])
def test_predicted_dkl_matches_training_set_average(k, n):
    truth = make_covariance(make_powerlaw_spectrum(100, k))
    c = 1e-4
    values = []
    for draw in range(10):
        data = sample_gaussian(truth, n, seed=7 * n + draw)
        stats = replace(empirical_stats(data, known_mean=truth.mean), mean=data.mean(axis=0))
        values.append(empirical_dkl(truth, stats, c) / 100)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(len(values)))

    predicted = predict_dkl(ReplicaInput(eigenvalues=truth.eigenvalues, sample_count=n, reg_scale=c))

    assert abs(predicted - mean) <= 3 * stderr + 0.03 * mean


def test_dkl_grows_as_regularization_vanishes_below_full_rank():
    lam = np.ones(40)
    values = [predict_dkl(ReplicaInput(eigenvalues=lam, sample_count=20, reg_scale=c)) for c in (1e-1, 1e-3, 1e-5)]

    assert values[0] < values[1] < values[2]


def test_predicted_dkl_preconditions():
    with pytest.raises(DomainError):
        predict_dkl(ReplicaInput(eigenvalues=np.ones(5), sample_count=10, reg_scale=0.0))
    with pytest.raises(DomainError):
        predict_dkl(ReplicaInput(eigenvalues=np.array([1.0, 0.0]), sample_count=10, reg_scale=0.1))


def test_near_singular_ground_truth_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="skills.lindiff.replica"):
        predict_dkl(ReplicaInput(eigenvalues=np.ones(10), sample_count=20, reg_scale=2.0))

    assert "[REPLICA DKL]" in caplog.text


def test_empirical_dkl_vanishes_for_matching_gaussians():
    truth = make_covariance([2.0, 1.0, 0.5], mean=[1.0, 0.0, -1.0], rotation_seed=1)

    assert empirical_dkl(truth, population_stats(truth), 0.0) == pytest.approx(0.0, abs=1e-12)
    assert empirical_dkl(truth, population_stats(truth), 0.1) > 0.0


def _random_spectra(count: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        k = float(rng.uniform(0.0, 3.0))
        jitter = 1.0 + 0.5 * rng.random(d)
        yield make_powerlaw_spectrum(d, k) * jitter, int(rng.integers(20, 400))


@pytest.mark.parametrize("c", [0.0, 0.01, 1.0])
def test_bound_series_holds_across_random_spectra(c):
    for lam, n in _random_spectra(20, 200, seed=int(100 * c) + 1):
        inp = ReplicaInput(eigenvalues=lam, sample_count=n, reg_scale=c)
        q = solve_q(inp).q
        series = [q_bound_series(inp, i) for i in range(7)]

        assert all(value >= q - 1e-12 for value in series), (n, c)
        assert all(a >= b - 1e-12 for a, b in zip(series, series[1:])), (n, c)


@pytest.mark.parametrize("exponent", range(-4, 5))
@pytest.mark.parametrize("ratio", [0.5, 1.0, 2.0])
def test_resolvent_trace_agrees_three_ways(exponent, ratio):
    lam = make_powerlaw_spectrum(100, 1.0)
    n = int(ratio * 100)
    alpha_hat = 2.0**exponent
    solution = solve_q(ReplicaInput.from_alpha_hat(lam, n, alpha_hat))

    estimate = monte_carlo_resolvent(lam, n, alpha_hat, draws=200, seed=exponent + 10)["g_bar"]

    assert psi_functions(solution).psi_2 == pytest.approx(solution.g_bar, rel=1e-10)
    assert abs(estimate.mean - solution.g_bar) <= 3 * estimate.stderr + 0.01 * solution.g_bar


@pytest.mark.parametrize("n, c", [(20, 0.01), (100, 0.1), (400, 1.0)])
def test_more_hierarchical_spectra_never_raise_q(n, c):
    values = [solve_q(ReplicaInput(make_powerlaw_spectrum(100, k), n, c)).q for k in (0.0, 0.5, 1.0, 2.0, 3.0)]

    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


def test_predicted_delta_epsilon_matches_simulated_denoisers():
    d = 64
    truth = make_covariance(make_powerlaw_spectrum(d, 1.0))
    sched = make_schedule(10)
    reference = optimal_noise_denoiser(population_stats(truth), sched)
    predicted, simulated = [], []
    for n in (16, 64, 256, 1024):
        values = []
        for draw in range(10):
            data = sample_gaussian(truth, n, seed=31 * n + draw)
            den = optimal_noise_denoiser(empirical_stats(data, known_mean=np.zeros(d)), sched)
            test_data = sample_gaussian(truth, 200, seed=10_000 + draw)
            values.append(delta_epsilon_empirical(den, reference, test_data, seed=draw).mean)
        mean = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / math.sqrt(len(values)))
        expected = predict_delta_epsilon(truth.eigenvalues, n, sched)

        assert abs(mean - expected) <= 3 * stderr + 0.05 * expected, n
        predicted.append(expected)
        simulated.append(mean)

    assert all(a > b for a, b in zip(predicted, predicted[1:]))
    assert all(a > b for a, b in zip(simulated, simulated[1:]))


def test_predicted_dkl_reuses_a_solved_q():
    inp = _input(d=40, n=30, c=0.05)
    shuffled = replace(inp, eigenvalues=inp.eigenvalues[::-1].copy())

    assert predict_dkl(inp, solve_q(inp)) == predict_dkl(inp)
    assert predict_dkl(inp, solve_q(shuffled)) == pytest.approx(predict_dkl(inp), rel=1e-12)
    with pytest.raises(DomainError):
        predict_dkl(inp, solve_q(replace(inp, sample_count=60)))
