"""Non-stationary Gabor transform on constant-Q, Mel and ERB scales.

The transform is computed on the frequency side: the spectrum of the
whole signal is sliced by a bank of Hann windows, one per center
frequency, and each slice is brought back to the time side by an
inverse FFT. Every slice uses the same number of time channels (the
widest window support), so all bins share one uniform time grid and a
single column of the coefficient matrix is one spectral frame.

With that many channels the transform is in the painless case: the
frame operator is diagonal, and dividing each window by the diagonal
gives the canonical dual windows used for synthesis.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "NsgtPlan",
]

from logging import getLogger
from math import ceil, floor
from typing import (
    List,
    Optional,
)

import numpy as np
import scipy.fft

from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    GABOR,
    WARPED_FREQUENCY,
    SpectralTransform,
    TransformSpec,
)
from timbre.exceptions import (
    NotPainless,
    PlanMismatch,
)
from timbre._typing import (
    _BinFrequencies,
    _Coefficients,
    _Samples,
)

logger = getLogger(__name__)

#: No window is narrower than this many FFT bins on either side of
#: its center, so every window touches at least one bin.
MIN_HALF_WIDTH: float = 2.0

#: Diagonal entries of the frame operator below this are zero.
_TINY: float = 1e-12


def hz_to_mel(f: np.ndarray) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m: np.ndarray) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def hz_to_erb_rate(f: np.ndarray) -> np.ndarray:
    """Glasberg and Moore's ERB-rate scale."""
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=float))


def erb_rate_to_hz(e: np.ndarray) -> np.ndarray:
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) / 0.00437


def center_frequencies(spec: TransformSpec) -> _BinFrequencies:
    """The center frequency of every scale bin, strictly increasing.

    The constant-Q scale has ``ceil(bins_per_octave * log2(fmax/fmin))``
    geometrically spaced bins starting at fmin. The Mel and ERB scales
    have ``nsgt_bins`` bins, evenly spaced on the warped axis from fmin
    to fmax inclusive.
    """
    if spec.nsgt_scale == "cq":
        count = int(ceil(spec.bins_per_octave * np.log2(spec.fmax / spec.fmin)))
        return spec.fmin * 2.0 ** (np.arange(count) / spec.bins_per_octave)
    if spec.nsgt_scale == "mel":
        warped = np.linspace(hz_to_mel(spec.fmin), hz_to_mel(spec.fmax), spec.nsgt_bins)
        return mel_to_hz(warped)
    warped = np.linspace(
        hz_to_erb_rate(spec.fmin), hz_to_erb_rate(spec.fmax), spec.nsgt_bins
    )
    return erb_rate_to_hz(warped)


class NsgtPlan(SpectralTransform):
    """A designed NSGT for one sample rate and one signal length.

    There is one bin per center frequency of the scale. The first
    window is flat from DC up to its center and the last one from its
    center up to Nyquist, so the window bank covers every frequency.

    A plan is immutable once designed and can be shared between threads.
    """

    NAME: str = "nsgt"
    KIND: str = "nsgt"
    features = [NAME, GABOR, WARPED_FREQUENCY, "cq", "mel", "erb"]
    length_dependent: bool = True

    #: The scale's center frequencies, one per bin.
    frequencies: _BinFrequencies

    #: Diagonal of the frame operator, one entry per rfft bin.
    frame_diagonal: np.ndarray

    #: Number of time channels of every band.
    time_channels: int

    def __init__(
        self,
        spec: TransformSpec,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        signal_len: Optional[int] = None,
    ):
        super(NsgtPlan, self).__init__(spec, sample_rate, signal_len)
        if signal_len is None or signal_len < 2:
            raise PlanMismatch("An NSGT plan needs a signal length of at least 2.")
        self.frequencies = center_frequencies(spec)
        n_rfft = signal_len // 2 + 1

        # Band centers in (fractional) rfft bins.
        centers = self.frequencies * signal_len / sample_rate
        gaps = np.diff(centers)
        half_widths = np.full(len(centers), MIN_HALF_WIDTH)
        if len(gaps):
            half_widths[0] = gaps[0]
            half_widths[-1] = gaps[-1]
            half_widths[1:-1] = np.maximum(gaps[:-1], gaps[1:])
            half_widths = np.maximum(half_widths, MIN_HALF_WIDTH)

        self._starts: List[int] = []
        self._windows: List[np.ndarray] = []
        diagonal = np.zeros(n_rfft)
        last = len(centers) - 1
        for k, (center, half) in enumerate(zip(centers, half_widths)):
            # Only bins strictly inside the support, where the window is > 0.
            # The first window stays at 1 down to DC and the last up to Nyquist.
            lo = 0 if k == 0 else max(int(floor(center - half)) + 1, 0)
            hi = n_rfft - 1 if k == last else min(int(ceil(center + half)) - 1, n_rfft - 1)
            bins = np.arange(lo, hi + 1)
            window = 0.5 + 0.5 * np.cos(np.pi * np.clip((bins - center) / half, -1.0, 1.0))
            if k == 0:
                window[bins <= center] = 1.0
            if k == last:
                window[bins >= center] = 1.0
            self._starts.append(lo)
            self._windows.append(window)
            diagonal[lo : hi + 1] += window**2

        if diagonal.min() <= _TINY:
            uncovered = int(np.argmin(diagonal))
            raise NotPainless(
                "The window bank leaves rfft bin %d (%.1f Hz) uncovered."
                % (uncovered, uncovered * sample_rate / signal_len)
            )
        self.frame_diagonal = diagonal
        self._duals = [
            window / diagonal[start : start + len(window)]
            for start, window in zip(self._starts, self._windows)
        ]
        self.time_channels = max(len(window) for window in self._windows)
        logger.debug(
            "Designed %s NSGT: %d bins, %d time channels for %d samples.",
            spec.nsgt_scale, self.n_bins, self.time_channels, signal_len,
        )

    @property
    def n_bins(self) -> int:
        return len(self._windows)

    @property
    def hop(self) -> float:
        return self.signal_len / self.time_channels

    @property
    def supports(self) -> List[int]:
        """Number of rfft bins under each window."""
        return [len(window) for window in self._windows]

    def n_frames(self, signal_len: int) -> int:
        return self.time_channels

    def bin_frequencies(self) -> _BinFrequencies:
        return self.frequencies

    def for_length(self, signal_len: int) -> SpectralTransform:
        if signal_len == self.signal_len:
            return self
        return NsgtPlan(self.spec, self.sample_rate, signal_len)

    def _analyze(self, samples: _Samples) -> _Coefficients:
        spectrum = scipy.fft.rfft(samples)
        coefficients = np.zeros((self.n_bins, self.time_channels), dtype=complex)
        for k, (start, window) in enumerate(zip(self._starts, self._windows)):
            sliced = np.zeros(self.time_channels, dtype=complex)
            sliced[: len(window)] = spectrum[start : start + len(window)] * window
            coefficients[k] = scipy.fft.ifft(sliced)
        return coefficients

    def _synthesize(self, coefficients: _Coefficients, signal_len: int) -> _Samples:
        spectrum = np.zeros(signal_len // 2 + 1, dtype=complex)
        slices = scipy.fft.fft(coefficients, axis=1)
        for k, (start, dual) in enumerate(zip(self._starts, self._duals)):
            spectrum[start : start + len(dual)] += slices[k, : len(dual)] * dual
        return scipy.fft.irfft(spectrum, n=signal_len)
