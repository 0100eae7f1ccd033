"""A synthetic instrument corpus with matching dissimilarity ratings.

Every class is a harmonic tone with its own spectral envelope: a
spectral slope, a formant and a balance between odd and even
harmonics. Samples of a class differ by a small pitch variation. The
ratings are derived from distances between the class envelopes, so a
model trained on the corpus has a timbre space it can agree with.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import dataclass
from logging import getLogger
import os
from typing import (
    List,
    Sequence,
)

import numpy as np
from scipy.spatial.distance import (
    pdist,
    squareform,
)

from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    AudioBuffer,
)
from timbre.dsp.audio import write_wav
from timbre.ratings import (
    DEFAULT_INSTRUMENTS,
    DissimilarityMatrix,
    RatingRecord,
    simulate_ratings,
    write_ratings_csv,
)
from timbre._rng import stream
from timbre._typing import (
    _ClassLabel,
    _PathLike,
)

__all__ = [
    "ClassEnvelope",
    "Fixture",
    "class_names",
    "envelope_matrix",
    "fixture_gen",
    "harmonic_tone",
]

logger = getLogger(__name__)

#: Harmonics used to compare class envelopes.
_COMPARED_HARMONICS: int = 30

#: The fixture's pitches vary by at most this many semitones.
_PITCH_SPREAD: float = 0.5

_BASE_F0: float = 220.0


@dataclass(frozen=True)
class ClassEnvelope:
    """The spectral envelope of one fixture class.

    :param slope: Amplitude of harmonic h falls as ``h ** -slope``.
    :param formant_hz: Center of a resonance that boosts nearby harmonics.
    :param even_gain: Relative amplitude of the even harmonics.
    """

    slope: float
    formant_hz: float
    even_gain: float

    def amplitudes(self, f0: float, count: int) -> np.ndarray:
        h = np.arange(1, count + 1)
        frequencies = h * f0
        amplitudes = h ** -self.slope
        width = 0.25 * self.formant_hz
        amplitudes = amplitudes * (
            1.0 + 3.0 * np.exp(-0.5 * ((frequencies - self.formant_hz) / width) ** 2)
        )
        amplitudes[1::2] *= self.even_gain
        return amplitudes


def class_names(n_classes: int) -> List[_ClassLabel]:
    if n_classes < 3:
        raise ValueError("A fixture needs at least 3 classes, got %d." % n_classes)
    if n_classes <= len(DEFAULT_INSTRUMENTS):
        return list(DEFAULT_INSTRUMENTS[:n_classes])
    return ["Class%02d" % i for i in range(n_classes)]


def harmonic_tone(
    envelope: ClassEnvelope,
    f0: float,
    duration_s: float = 0.5,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> AudioBuffer:
    """A tone with 20 ms attack and 50 ms release, peaking at 0.5."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    count = int(0.45 * sample_rate // f0)
    amplitudes = envelope.amplitudes(f0, count)
    h = np.arange(1, count + 1)
    samples = np.sin(2 * np.pi * f0 * np.outer(t, h)) @ amplitudes
    gain = np.minimum(1.0, t / 0.02) * np.minimum(1.0, (duration_s - t) / 0.05)
    samples = samples * np.clip(gain, 0.0, 1.0)
    peak = np.abs(samples).max()
    if peak > 0:
        samples = 0.5 * samples / peak
    return AudioBuffer(samples, sample_rate)


def envelope_matrix(
    names: Sequence[_ClassLabel], envelopes: Sequence[ClassEnvelope]
) -> DissimilarityMatrix:
    """Distances between log-amplitude harmonic profiles, scaled to [0, 1]."""
    profiles = np.array(
        [
            np.log(envelope.amplitudes(_BASE_F0, _COMPARED_HARMONICS) + 1e-6)
            for envelope in envelopes
        ]
    )
    distances = squareform(pdist(profiles))
    largest = distances.max()
    if largest > 0:
        distances = distances / largest
    return DissimilarityMatrix(list(names), distances)


@dataclass
class Fixture:
    classes: List[_ClassLabel]
    envelopes: List[ClassEnvelope]
    files: List[str]
    matrix: DissimilarityMatrix
    ratings: List[RatingRecord]


def fixture_gen(
    out_dir: _PathLike,
    n_classes: int = 12,
    samples_per_class: int = 20,
    seed: int = 0,
    duration_s: float = 0.5,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    subjects: int = 10,
) -> Fixture:
    """Write a fixture corpus to ``out_dir/corpus/<class>/`` and its
    ratings to ``out_dir/ratings.csv``.
    """
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be positive, got %d." % samples_per_class)
    names = class_names(n_classes)
    rng = stream(seed, "fixture")
    envelopes = [
        ClassEnvelope(
            slope=float(rng.uniform(0.5, 2.5)),
            formant_hz=float(rng.uniform(500.0, 4000.0)),
            even_gain=float(rng.uniform(0.1, 1.0)),
        )
        for _ in names
    ]
    files = []
    for name, envelope in zip(names, envelopes):
        directory = os.path.join(out_dir, "corpus", name)
        os.makedirs(directory, exist_ok=True)
        for k in range(samples_per_class):
            semitones = rng.uniform(-_PITCH_SPREAD, _PITCH_SPREAD)
            f0 = _BASE_F0 * 2.0 ** (semitones / 12.0)
            relative = os.path.join(name, "%s_%03d.wav" % (name.lower().replace(" ", ""), k))
            write_wav(
                os.path.join(out_dir, "corpus", relative),
                harmonic_tone(envelope, f0, duration_s, sample_rate),
            )
            files.append(relative)
    matrix = envelope_matrix(names, envelopes)
    ratings = simulate_ratings(matrix, subjects=subjects, seed=seed)
    write_ratings_csv(os.path.join(out_dir, "ratings.csv"), ratings)
    logger.info(
        "Wrote %d fixture files of %d classes to %s.", len(files), len(names), out_dir
    )
    return Fixture(names, envelopes, files, matrix, ratings)
