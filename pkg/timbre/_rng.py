"""Seeded, counter-based random streams.

Every random draw in timbre comes from a `numpy.random.Generator`
backed by the Philox counter-based bit generator. A run has a single
root seed; each component (the split, weight initialization, batch
order, reparameterization noise, Griffin-Lim, path synthesis) gets its
own stream spawned from that seed, so changing how much one component
draws never changes what another one sees.
"""

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import os
from typing import (
    Dict,
    Optional,
)

import numpy as np

from timbre.exceptions import ConfigError

__all__ = [
    "DEFAULT_SEED",
    "SEED_VARIABLE",
    "STREAMS",
    "epoch_stream",
    "make_rng",
    "seed_from_environment",
    "stream",
]

DEFAULT_SEED: int = 0

#: An environment variable that overrides the configured root seed.
SEED_VARIABLE: str = "TIMBRE_SEED"

#: The named streams spawned from a root seed, in spawn order. New
#: streams go at the end so existing ones keep their values.
STREAMS = ("split", "init", "batches", "noise", "phase", "synth", "fixture")


def make_rng(seed: int = DEFAULT_SEED) -> np.random.Generator:
    """A generator for ``seed``, identical on every platform."""
    return np.random.Generator(np.random.Philox(seed))


def stream(seed: int, name: str) -> np.random.Generator:
    """The generator reserved for component ``name`` of a run seeded
    with ``seed``.
    """
    try:
        index = STREAMS.index(name)
    except ValueError:
        raise KeyError("No random stream is called %r." % name)
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return np.random.Generator(np.random.Philox(children[index]))


def epoch_stream(seed: int, name: str, epoch: int) -> np.random.Generator:
    """The part of stream ``name`` that belongs to one training epoch.

    Epochs draw from independent children of the stream, so a run
    resumed at any epoch sees what an uninterrupted run would.
    """
    try:
        index = STREAMS.index(name)
    except ValueError:
        raise KeyError("No random stream is called %r." % name)
    parent = np.random.SeedSequence(seed).spawn(len(STREAMS))[index]
    child = np.random.SeedSequence(parent.entropy, spawn_key=parent.spawn_key + (epoch,))
    return np.random.Generator(np.random.Philox(child))


def seed_from_environment(
    default: int = DEFAULT_SEED, environ: Optional[Dict[str, str]] = None
) -> int:
    """The root seed: ``$TIMBRE_SEED`` if it is set, ``default`` otherwise."""
    if environ is None:
        environ = dict(os.environ)
    value = environ.get(SEED_VARIABLE)
    if value is None or value.strip() == "":
        return default
    try:
        seed = int(value)
    except ValueError:
        raise ConfigError("%s must be an integer, got %r." % (SEED_VARIABLE, value))
    if seed < 0:
        raise ConfigError("%s must not be negative, got %d." % (SEED_VARIABLE, seed))
    return seed
