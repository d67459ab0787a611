import numpy as np

from skills.lindiff import seeding
from skills.lindiff.seeding import STREAM_NOISE, STREAM_TEST_NOISE, STREAM_TRAINING, derive_seed, make_rng


def test_streams_are_reproducible_and_independent():
    a = make_rng(7, STREAM_TRAINING, 3).standard_normal(4)
    b = make_rng(7, STREAM_TRAINING, 3).standard_normal(4)
    c = make_rng(7, STREAM_NOISE, 3).standard_normal(4)
    d = make_rng(7, STREAM_TRAINING, 4).standard_normal(4)

    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_derived_seeds_are_stable_integers():
    seed = derive_seed(1, STREAM_TRAINING, 0)

    assert seed == derive_seed(1, STREAM_TRAINING, 0)
    assert seed != derive_seed(1, STREAM_TRAINING, 1)
    assert 0 <= seed < 2**64
    assert np.array_equal(make_rng(-1).random(3), make_rng(2**64 - 1).random(3))


def test_named_streams_are_distinct():
    streams = {name: value for name, value in vars(seeding).items() if name.startswith("STREAM_")}

    assert len(set(streams.values())) == len(streams)
    assert derive_seed(3, STREAM_TEST_NOISE, 0) != derive_seed(3, STREAM_NOISE, 0)
