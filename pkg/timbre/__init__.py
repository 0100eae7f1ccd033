"""Generative timbre spaces, regularized by perceptual ratings.

A variational auto-encoder learns a latent space from the magnitude
spectra of instrument notes. During training that space is pulled
toward a timbre space built from human dissimilarity ratings, so the
distances between instruments in the latent space follow the
distances listeners hear. Points in the space can be decoded into
spectra, rendered as audio, and searched for paths that follow a
spectral descriptor.

The pieces:

* `timbre.dsp`: invertible spectral transforms (STFT, DCT, NSGT),
  single-frame extraction and Griffin-Lim phase reconstruction.
* `timbre.ratings`: rating records, per-study normalization, and the
  multidimensional scaling that turns them into a timbre target.
* `timbre.vae`: the model and its two-stage training.
* `timbre.regularizer`: the penalty that aligns latent and target
  distances.
* `timbre.latent`: PCA views, latent paths, descriptor grids.
* `timbre.synthpath`: descriptor-following synthesis.
* `timbre.cli`: the ``timbre`` command.
"""

__version__ = "1.0.0"
# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "AudioBuffer",
    "Checkpoint",
    "SpectralFrame",
    "Spectrogram",
    "TimbreTarget",
    "TrainConfig",
    "TransformSpec",
    "VaeModel",
    "analyze",
    "synthesize",

    # Exceptions
    "ConfigError",
    "CorruptFile",
    "TimbreError",

    # Warnings
    "ImputedPairWarning",
    "NonPhysicalDescriptorWarning",
    "RankDeficientWarning",
    "ReducedDimensionWarning",
]

from timbre.exceptions import (
    ConfigError,
    CorruptFile,
    TimbreError,
)
from timbre._warnings import (
    ImputedPairWarning,
    NonPhysicalDescriptorWarning,
    RankDeficientWarning,
    ReducedDimensionWarning,
)
from timbre.dsp import (
    AudioBuffer,
    Spectrogram,
    TransformSpec,
    analyze,
    synthesize,
)
from timbre.dsp.frames import SpectralFrame
from timbre.ratings import TimbreTarget
from timbre.vae import (
    TrainConfig,
    VaeModel,
)
from timbre.checkpoint import Checkpoint
