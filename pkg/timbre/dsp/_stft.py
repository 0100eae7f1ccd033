"""Short-term Fourier transform on centered, Hamming-windowed frames."""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "StftTransform",
]

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
import scipy.fft
import scipy.signal

from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    FOURIER,
    LINEAR_FREQUENCY,
    SpectralTransform,
    TransformSpec,
)
from timbre._typing import (
    _BinFrequencies,
    _Coefficients,
    _Samples,
)

#: Below this value the window sum-square is treated as zero.
_TINY: float = 1e-12


class FramedTransform(SpectralTransform):
    """Shared framing for the STFT and the DCT.

    Frames are centered: the signal is zero-padded by half a window on
    both sides, so frame ``t`` is centered on sample ``t * hop``.
    Synthesis is a weighted overlap-add normalized by the window
    sum-square, which is the least-squares inverse of the analysis.
    """

    window_length: int
    window: np.ndarray

    def __init__(
        self,
        spec: TransformSpec,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        signal_len: Optional[int] = None,
    ):
        super(FramedTransform, self).__init__(spec, sample_rate, signal_len)
        self.window_length = int(round(spec.window_ms * sample_rate / 1000.0))
        self._hop = max(int(round(spec.hop_ms * sample_rate / 1000.0)), 1)
        self.window = scipy.signal.get_window("hamming", self.window_length, fftbins=True)

    @property
    def hop(self) -> float:
        return float(self._hop)

    @property
    def min_length(self) -> int:
        return self.window_length

    def n_frames(self, signal_len: int) -> int:
        return 1 + signal_len // self._hop

    def _frames(self, samples: _Samples) -> np.ndarray:
        """Cut a signal into windowed (frames, window_length) rows."""
        pad = self.window_length // 2
        padded = np.pad(samples, (pad, self.window_length - pad))
        n_frames = self.n_frames(len(samples))
        frames = sliding_window_view(padded, self.window_length)[:: self._hop][:n_frames]
        return frames * self.window

    def _overlap_add(self, frames: np.ndarray, signal_len: int) -> _Samples:
        """Least-squares synthesis of (frames, window_length) rows."""
        pad = self.window_length // 2
        total = signal_len + self.window_length
        out = np.zeros(total)
        norm = np.zeros(total)
        squared = self.window**2
        for t, frame in enumerate(frames):
            start = t * self._hop
            out[start : start + self.window_length] += frame * self.window
            norm[start : start + self.window_length] += squared
        covered = norm > _TINY
        out[covered] /= norm[covered]
        return out[pad : pad + signal_len]


class StftTransform(FramedTransform):
    """One-sided STFT with a periodic Hamming window."""

    NAME: str = "stft"
    KIND: str = "stft"
    features = [NAME, FOURIER, LINEAR_FREQUENCY]

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1

    def bin_frequencies(self) -> _BinFrequencies:
        return np.arange(self.n_bins) * self.sample_rate / self.window_length

    def coefficient_weights(self) -> np.ndarray:
        # Interior bins stand for a positive and a negative frequency.
        weights = np.full(self.n_bins, 2.0)
        weights[0] = 1.0
        if self.window_length % 2 == 0:
            weights[-1] = 1.0
        return weights

    def _analyze(self, samples: _Samples) -> _Coefficients:
        return scipy.fft.rfft(self._frames(samples), axis=1).T

    def _synthesize(self, coefficients: _Coefficients, signal_len: int) -> _Samples:
        frames = scipy.fft.irfft(coefficients.T, n=self.window_length, axis=1)
        return self._overlap_add(frames, signal_len)
