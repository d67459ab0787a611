import numpy as np
import pytest

from skills.lindiff.covariance import (
    empirical_stats,
    haar_orthogonal,
    make_covariance,
    make_powerlaw_spectrum,
    population_stats,
    rotate,
    sample_gaussian,
    sorted_eigh,
    spectrum_from_data,
)
from skills.lindiff.errors import DomainError


def test_powerlaw_spectrum_is_decreasing_with_unit_mean():
    lam = make_powerlaw_spectrum(50, 1.5)

    assert lam.shape == (50,)
    assert np.all(np.diff(lam) < 0)
    assert lam.mean() == pytest.approx(1.0, rel=1e-12)
    assert lam[0] / lam[9] == pytest.approx(10**1.5, rel=1e-12)


def test_powerlaw_spectrum_flat_for_k_zero():
    assert np.allclose(make_powerlaw_spectrum(7, 0.0), 1.0)


def test_powerlaw_spectrum_rejects_bad_inputs():
    with pytest.raises(DomainError):
        make_powerlaw_spectrum(0, 1.0)
    with pytest.raises(DomainError):
        make_powerlaw_spectrum(5, -1.0)


def test_make_covariance_sorts_eigenpairs_descending():
    basis = np.array([[0.0, 1.0], [1.0, 0.0]])
    model = make_covariance([1.0, 3.0], basis=basis)

    assert model.eigenvalues.tolist() == [3.0, 1.0]
    assert np.allclose(model.matrix(), np.diag([3.0, 1.0]))


def test_make_covariance_rejects_non_orthogonal_basis():
    with pytest.raises(DomainError):
        make_covariance([1.0, 2.0], basis=np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_haar_rotation_is_orthogonal_and_reproducible():
    q1 = haar_orthogonal(6, seed=11)
    q2 = haar_orthogonal(6, seed=11)
    q3 = haar_orthogonal(6, seed=12)

    assert np.allclose(q1.T @ q1, np.eye(6), atol=1e-12)
    assert np.array_equal(q1, q2)
    assert not np.allclose(q1, q3)


def test_rotate_conjugates_covariance_and_mean():
    model = make_covariance([4.0, 2.0, 1.0], mean=[1.0, 0.0, -1.0])
    q = haar_orthogonal(3, seed=3)
    rotated = rotate(model, q)

    assert np.allclose(rotated.matrix(), q @ model.matrix() @ q.T, atol=1e-12)
    assert np.allclose(rotated.mean, q @ model.mean)
    assert np.allclose(rotated.eigenvalues, model.eigenvalues)


def test_sample_gaussian_is_seeded():
    model = make_covariance(make_powerlaw_spectrum(4, 1.0), rotation_seed=1)

    assert np.array_equal(sample_gaussian(model, 10, seed=5), sample_gaussian(model, 10, seed=5))
    assert not np.array_equal(sample_gaussian(model, 10, seed=5), sample_gaussian(model, 10, seed=6))


def test_sample_gaussian_matches_model_moments():
    model = make_covariance([3.0, 1.0, 0.25], mean=[2.0, -1.0, 0.5], rotation_seed=4)
    x = sample_gaussian(model, 40_000, seed=0)

    assert np.allclose(x.mean(axis=0), model.mean, atol=0.05)
    assert np.allclose(np.cov(x, rowvar=False), model.matrix(), atol=0.08)


def test_empirical_stats_rank_is_bounded_by_sample_count():
    model = make_covariance(make_powerlaw_spectrum(10, 1.0))
    data = sample_gaussian(model, 4, seed=2)

    centered = empirical_stats(data)
    known = empirical_stats(data, known_mean=np.zeros(10))

    assert centered.rank() == 3
    assert known.rank() == 4
    assert np.count_nonzero(centered.eigenvalues) == 3
    assert np.all(np.diff(known.eigenvalues) <= 0)


def test_empirical_stats_reconstructs_scatter():
    data = np.array([[1.0, 2.0], [3.0, 0.0], [-1.0, 1.0]])
    stats = empirical_stats(data)
    centered = data - data.mean(axis=0)

    assert stats.sample_count == 3
    assert np.allclose(stats.mean, data.mean(axis=0))
    assert np.allclose(stats.matrix(), centered.T @ centered / 3)


def test_sorted_eigh_clamps_round_off_and_rejects_negative():
    values, vectors = sorted_eigh(np.diag([2.0, -1e-14, 1.0]))
    assert values.tolist() == [2.0, 1.0, 0.0]
    assert np.all(vectors[np.argmax(np.abs(vectors), axis=0), range(3)] > 0)

    with pytest.raises(DomainError):
        sorted_eigh(np.diag([2.0, -0.5]))


def test_population_stats_and_spectrum_from_data():
    model = make_covariance([2.0, 0.5], mean=[1.0, 1.0])
    pop = population_stats(model)

    assert pop.sample_count is None
    assert np.allclose(pop.matrix(), model.matrix())

    data = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    assert np.allclose(spectrum_from_data(data), [1.0, 1.0])


def test_powerlaw_spectrum_small_case():
    assert np.allclose(make_powerlaw_spectrum(4, 1.0), [1.92, 0.96, 0.64, 0.48], rtol=1e-12)
    assert np.allclose(make_powerlaw_spectrum(1, 5.0), [1.0])
