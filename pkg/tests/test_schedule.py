import math

import numpy as np
import pytest

from skills.lindiff.errors import DomainError
from skills.lindiff.schedule import (
    alpha_bar_at,
    alpha_hat,
    continuous_view,
    make_schedule,
    schedule_from_alpha_bar,
    with_sigma,
)


def test_default_schedule_reaches_total_noise_level():
    sched = make_schedule(100)

    assert sched.steps == 100
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert sched.alpha_bar[-1] == pytest.approx(math.exp(-10.0), rel=1e-12)
    assert np.prod(sched.alpha) == pytest.approx(sched.alpha_bar[-1], rel=1e-10)
    assert np.allclose(sched.sigma, np.sqrt(sched.beta))
    assert np.all(sched.gamma == 0.0)


def test_beta_grows_linearly_in_continuous_time():
    view = continuous_view(make_schedule(1000))

    assert view.beta_hat[-1] > view.beta_hat[0]
    assert view.zeta[-1] == pytest.approx(10.0, rel=1e-12)
    assert np.allclose(view.sigma_hat, np.sqrt(view.beta_hat))


def test_gamma_couplings():
    plain = make_schedule(10, c=0.5)
    rooted = make_schedule(10, c=0.5, coupling="sqrt_alpha_bar")

    assert np.allclose(plain.gamma, 0.5 * plain.alpha_bar)
    assert np.allclose(rooted.gamma, 0.5 * np.sqrt(rooted.alpha_bar))
    assert np.allclose(alpha_hat(plain), plain.alpha_bar / (1 - plain.alpha_bar + plain.gamma))


def test_schedule_rejects_bad_parameters():
    with pytest.raises(DomainError):
        make_schedule(1)
    with pytest.raises(DomainError):
        make_schedule(10, zeta_total=0.0)
    with pytest.raises(DomainError):
        schedule_from_alpha_bar([0.9, 0.95])
    with pytest.raises(DomainError):
        schedule_from_alpha_bar([0.9, 0.5], c=-1.0)


def test_custom_alpha_bar_and_sigma_choice():
    sched = schedule_from_alpha_bar([0.9, 0.5, 0.1], sigma_choice="zero")

    assert np.allclose(sched.beta, [0.1, 1 - 0.5 / 0.9, 0.8])
    assert np.all(sched.sigma == 0.0)
    assert sched.zeta_total == pytest.approx(-math.log(0.1))
    assert np.allclose(with_sigma(sched, "match_beta").sigma, np.sqrt(sched.beta))


def test_alpha_bar_at_interpolates_the_grid():
    sched = make_schedule(20)

    assert alpha_bar_at(sched, 0.0) == 1.0
    assert alpha_bar_at(sched, 1.0) == pytest.approx(sched.alpha_bar[-1])
    assert alpha_bar_at(sched, 0.5) == pytest.approx(sched.alpha_bar[9])
    assert np.allclose(alpha_bar_at(sched, np.array([0.05, 0.1])), sched.alpha_bar[:2])


def test_two_step_schedule_ends_at_the_requested_noise_level():
    sched = make_schedule(2, zeta_total=math.log(4.0))

    assert sched.alpha_bar[0] > sched.alpha_bar[1]
    assert sched.alpha_bar[-1] == pytest.approx(0.25, abs=1e-12)
    assert np.all(sched.gamma == 0.0)
    assert np.allclose(np.cumprod(1.0 - sched.beta), sched.alpha_bar, atol=1e-12)


def test_refining_the_schedule_shrinks_the_largest_step():
    for steps in (10, 100, 1000):
        assert make_schedule(2 * steps).beta.max() < make_schedule(steps).beta.max()


def test_sigma_choice_is_recorded_on_the_schedule():
    quiet = make_schedule(10, sigma_choice="zero")

    assert quiet.sigma_choice == "zero"
    assert with_sigma(quiet, "match_beta").sigma_choice == "match_beta"
    assert make_schedule(10).sigma_choice == "match_beta"
