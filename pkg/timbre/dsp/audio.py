"""Reading, writing and resampling WAV audio."""

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from fractions import Fraction
from logging import getLogger

import numpy as np
import scipy.signal
import soundfile

from timbre.dsp import (
    AudioBuffer,
    DEFAULT_SAMPLE_RATE,
)
from timbre._typing import _PathLike

__all__ = [
    "load_audio",
    "read_wav",
    "resample",
    "write_wav",
]

logger = getLogger(__name__)

#: Taps of the windowed-sinc kernel, per polyphase branch.
KERNEL_TAPS: int = 64

#: Shape parameter of the Kaiser window applied to the sinc kernel.
KAISER_BETA: float = 5.0


def read_wav(path: _PathLike) -> AudioBuffer:
    """Read a PCM-16, PCM-24 or float32 WAV file as mono.

    Multichannel files are downmixed by averaging the channels.
    """
    data, sample_rate = soundfile.read(path, dtype="float64", always_2d=True)
    return AudioBuffer(data.mean(axis=1), int(sample_rate))


def write_wav(path: _PathLike, audio: AudioBuffer, subtype: str = "PCM_16") -> None:
    """Write mono audio. Samples outside [-1, 1] are clipped."""
    samples = np.clip(audio.samples, -1.0, 1.0)
    soundfile.write(path, samples, audio.sample_rate, subtype=subtype)


def resample(audio: AudioBuffer, target_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Polyphase resampling with a Kaiser-windowed sinc kernel."""
    if audio.sample_rate == target_rate:
        return audio
    ratio = Fraction(target_rate, audio.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    branches = max(up, down)
    taps = scipy.signal.firwin(
        KERNEL_TAPS * branches + 1, 1.0 / branches, window=("kaiser", KAISER_BETA)
    )
    samples = scipy.signal.resample_poly(audio.samples, up, down, window=taps)
    logger.debug("Resampled %d Hz -> %d Hz (%d/%d).", audio.sample_rate, target_rate, up, down)
    return AudioBuffer(samples, target_rate)


def load_audio(path: _PathLike, sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Read a WAV file, downmix it and bring it to ``sample_rate``."""
    return resample(read_wav(path), sample_rate)
