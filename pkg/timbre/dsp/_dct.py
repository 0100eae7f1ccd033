"""Frame-wise discrete cosine transform, framed like the STFT."""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "DctTransform",
]

import numpy as np
import scipy.fft

from timbre.dsp import (
    COSINE,
    LINEAR_FREQUENCY,
)
from timbre.dsp._stft import FramedTransform
from timbre._typing import (
    _BinFrequencies,
    _Coefficients,
    _Samples,
)


class DctTransform(FramedTransform):
    """Orthonormal DCT-II of every windowed frame; DCT-III to invert.

    The coefficients are real. Their "magnitude" is the absolute
    value, so the sign plays the part the phase plays for the STFT.
    """

    NAME: str = "dct"
    KIND: str = "dct"
    features = [NAME, COSINE, LINEAR_FREQUENCY]
    complex_coefficients: bool = False

    @property
    def n_bins(self) -> int:
        return self.window_length

    def bin_frequencies(self) -> _BinFrequencies:
        # Not a physical frequency: coefficient k oscillates k/2 times
        # per window.
        return np.arange(self.n_bins) * self.sample_rate / (2.0 * self.window_length)

    def _analyze(self, samples: _Samples) -> _Coefficients:
        return scipy.fft.dct(self._frames(samples), type=2, norm="ortho", axis=1).T

    def _synthesize(self, coefficients: _Coefficients, signal_len: int) -> _Samples:
        frames = scipy.fft.idct(np.real(coefficients).T, type=2, norm="ortho", axis=1)
        return self._overlap_add(frames, signal_len)
