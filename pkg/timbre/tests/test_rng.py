"""Tests of the seeded random streams."""

import numpy as np
import pytest

from timbre.exceptions import ConfigError
from timbre._rng import (
    epoch_stream,
    seed_from_environment,
    stream,
)


class TestStreams(object):
    def test_named_streams_differ(self):
        assert stream(0, "batches").random() != stream(0, "noise").random()
        assert stream(0, "batches").random() == stream(0, "batches").random()

    def test_epochs_are_independent(self):
        first = epoch_stream(3, "batches", 4).permutation(10)
        again = epoch_stream(3, "batches", 4).permutation(10)
        np.testing.assert_array_equal(first, again)
        assert epoch_stream(3, "batches", 4).random() != epoch_stream(3, "batches", 5).random()
        assert epoch_stream(3, "batches", 4).random() != epoch_stream(3, "noise", 4).random()

    def test_unknown_stream(self):
        with pytest.raises(KeyError):
            epoch_stream(0, "dice", 0)

    def test_seed_from_environment(self):
        assert seed_from_environment(4, {}) == 4
        assert seed_from_environment(4, {"TIMBRE_SEED": "9"}) == 9
        with pytest.raises(ConfigError):
            seed_from_environment(4, {"TIMBRE_SEED": "-1"})
