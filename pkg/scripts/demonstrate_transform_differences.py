"""Demonstrate how the different transforms see the same sounds.

timbre can train on frames of five invertible transforms. Every one
of them reconstructs a signal from its complex coefficients almost
exactly, and the unit tests make sure this is the case. But they
differ a lot once the phase is thrown away: how many bins a frame
has, where those bins sit in frequency, and how well Griffin-Lim
recovers a signal from the magnitudes alone. So instead of unit tests
I've created this educational demonstration script.

Each demonstration sound is run through every transform, and the
script prints the frame size, the round-trip error, the spectral
convergence reached by Griffin-Lim and the spectral centroid of the
middle frame. Pass WAV files on the command line to use them instead
of the built-in sounds.
"""

import sys
import warnings

import numpy as np

from timbre import NonPhysicalDescriptorWarning
from timbre.descriptors import spectral_centroid
from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    TRANSFORM_FLAGS,
    AudioBuffer,
    TransformSpec,
    analyze,
    synthesize,
)
from timbre.dsp.audio import load_audio
from timbre.dsp.frames import extract_frame
from timbre.dsp.phase import griffin_lim
from timbre.fixture import (
    ClassEnvelope,
    harmonic_tone,
)
from timbre._rng import make_rng

ITERATIONS = 50
DURATION_S = 0.5


def demo_sounds():
    t = np.arange(int(DURATION_S * DEFAULT_SAMPLE_RATE)) / DEFAULT_SAMPLE_RATE
    yield "A 440 Hz sine", AudioBuffer(0.5 * np.sin(2 * np.pi * 440 * t))
    yield "A dull harmonic tone", harmonic_tone(ClassEnvelope(2.0, 600.0, 0.8), 220.0)
    yield "A bright harmonic tone", harmonic_tone(ClassEnvelope(0.6, 3000.0, 0.2), 220.0)
    yield "A low bass note", harmonic_tone(ClassEnvelope(1.2, 500.0, 1.0), 55.0)
    yield "White noise", AudioBuffer(0.1 * make_rng(0).standard_normal(len(t)))


class Demonstration(object):
    def __init__(self, name, audio):
        self.name = name
        self.audio = audio
        self.results = {}

    def run_against(self, *flags):
        for flag in flags:
            try:
                spectrogram = analyze(self.audio, TransformSpec.from_flag(flag))
                rebuilt = synthesize(spectrogram)
                round_trip = np.linalg.norm(rebuilt.samples - self.audio.samples) / np.linalg.norm(
                    self.audio.samples
                )
                errors = []
                griffin_lim(spectrogram.magnitude(), iterations=ITERATIONS, errors=errors)
                frame = extract_frame(spectrogram, 500.0 * DURATION_S)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NonPhysicalDescriptorWarning)
                    centroid = spectral_centroid(frame)
                output = "%4d bins x %3d frames  round trip %.1e  GL %.3f  centroid %7.1f Hz" % (
                    spectrogram.n_bins, spectrogram.n_frames, round_trip, errors[-1], centroid
                )
            except Exception as e:
                output = "[EXCEPTION] %s" % str(e)
            self.results[flag] = output

    def dump(self):
        print("== %s (%.0f ms) ==" % (self.name, self.audio.duration_ms))
        for flag, output in self.results.items():
            print("%s: %s" % (flag.rjust(9), output))


flags = list(TRANSFORM_FLAGS)
print("= Comparing the following transforms: %s =" % ", ".join(flags))
print("= Griffin-Lim runs %d iterations from zero phase =" % ITERATIONS)
print()

if len(sys.argv) > 1:
    sounds = [(path, load_audio(path)) for path in sys.argv[1:]]
else:
    sounds = demo_sounds()

for name, audio in sounds:
    demo = Demonstration(name, audio)
    demo.run_against(*flags)
    demo.dump()
    print()
