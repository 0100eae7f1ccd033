"""Invertible spectral analysis and synthesis.

A `SpectralTransform` turns an `AudioBuffer` into a `Spectrogram` and
back. Concrete transforms (STFT, DCT, NSGT) live in private modules and
register themselves with `transform_registry`, which can look them up
by name or by feature.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from collections import defaultdict
from dataclasses import (
    asdict,
    dataclass,
    replace,
)
import hashlib
import json
import sys
from types import ModuleType
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Optional,
    Type,
)

import numpy as np

from timbre.exceptions import (
    ConfigError,
    InputTooShort,
    MissingPhase,
    PlanMismatch,
    Unsupported,
)
from timbre._typing import (
    _BinFrequencies,
    _Coefficients,
    _NsgtScale,
    _Samples,
    _TransformKind,
)

__all__ = [
    "AudioBuffer",
    "Spectrogram",
    "SpectralTransform",
    "TransformRegistry",
    "TransformSpec",
    "design_transform",
    "transform_registry",
]

#: The rate every corpus is resampled to before analysis.
DEFAULT_SAMPLE_RATE: int = 22050

# Some useful features for a SpectralTransform to have.
FOURIER = "fourier"
COSINE = "cosine"
GABOR = "gabor"
LINEAR_FREQUENCY = "linear-frequency"
WARPED_FREQUENCY = "warped-frequency"

#: Command-line names of every supported transform configuration.
TRANSFORM_FLAGS: Dict[str, Dict[str, Any]] = {
    "stft": dict(kind="stft"),
    "dct": dict(kind="dct"),
    "nsgt-cq": dict(kind="nsgt", nsgt_scale="cq"),
    "nsgt-mel": dict(kind="nsgt", nsgt_scale="mel"),
    "nsgt-erb": dict(kind="nsgt", nsgt_scale="erb"),
}


@dataclass(frozen=True)
class TransformSpec:
    """Parameters of one invertible transform.

    :param kind: "stft", "dct" or "nsgt".
    :param window_ms: Analysis window duration for STFT and DCT.
    :param hop_ms: Hop between frames for STFT and DCT.
    :param nsgt_scale: Frequency scale of an NSGT: "cq", "mel" or "erb".
    :param fmin: Lowest NSGT center frequency, in Hz.
    :param fmax: Highest NSGT center frequency, in Hz.
    :param bins_per_octave: Resolution of the constant-Q scale.
    :param nsgt_bins: Number of bins of the Mel and ERB scales.
    """

    kind: _TransformKind = "nsgt"
    window_ms: float = 40.0
    hop_ms: float = 10.0
    nsgt_scale: Optional[_NsgtScale] = "erb"
    fmin: float = 30.0
    fmax: float = 11000.0
    bins_per_octave: int = 48
    nsgt_bins: int = 400

    def __post_init__(self) -> None:
        if self.kind not in ("stft", "dct", "nsgt"):
            raise ConfigError("Unknown transform kind %r." % self.kind)
        if self.kind == "nsgt":
            if self.nsgt_scale not in ("cq", "mel", "erb"):
                raise ConfigError("Unknown NSGT scale %r." % self.nsgt_scale)
        elif self.nsgt_scale is not None:
            # Only meaningful for the NSGT; normalize so that equal
            # transforms compare (and hash) equal.
            object.__setattr__(self, "nsgt_scale", None)
        if not (self.window_ms > self.hop_ms > 0):
            raise ConfigError(
                "Need window_ms > hop_ms > 0, got %s and %s."
                % (self.window_ms, self.hop_ms)
            )
        if not (0 < self.fmin < self.fmax):
            raise ConfigError(
                "Need 0 < fmin < fmax, got %s and %s." % (self.fmin, self.fmax)
            )

    @classmethod
    def from_flag(cls, flag: str, **overrides: Any) -> TransformSpec:
        """Build a spec from a command-line name such as ``nsgt-erb``."""
        try:
            base = TRANSFORM_FLAGS[flag]
        except KeyError:
            raise ConfigError(
                "Unknown transform %r; choose one of %s."
                % (flag, ", ".join(TRANSFORM_FLAGS))
            )
        values = dict(base)
        values.update(overrides)
        if values["kind"] != "nsgt":
            values["nsgt_scale"] = None
        return cls(**values)

    @property
    def flag(self) -> str:
        """The command-line name of this transform."""
        if self.kind == "nsgt":
            return "nsgt-%s" % self.nsgt_scale
        return self.kind

    def validate(self, sample_rate: int) -> None:
        """Check the frequency range against a sample rate."""
        if self.fmax > sample_rate / 2:
            raise ConfigError(
                "fmax %s Hz is above the Nyquist frequency of %d Hz audio."
                % (self.fmax, sample_rate)
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> TransformSpec:
        return cls(**data)

    def digest(self) -> str:
        """A short stable hash identifying this transform configuration."""
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf8")).hexdigest()[:16]


@dataclass
class AudioBuffer:
    """A mono waveform with its sample rate."""

    samples: _Samples
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError("Sample rate must be positive, got %r." % self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Audio contains NaN or infinite samples.")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """A time-ordered sequence of coefficient vectors.

    :param coefficients: A (bins, frames) array.
    :param spec: The transform that produced the coefficients.
    :param sample_rate: Rate of the analyzed signal.
    :param signal_len: Number of samples of the analyzed signal.
    :param hop: Distance between frames, in samples (may be fractional
        for an NSGT).
    :param has_phase: False once the phase (or DCT sign) has been discarded.
    """

    coefficients: _Coefficients
    spec: TransformSpec
    sample_rate: int
    signal_len: int
    hop: float
    has_phase: bool = True

    @property
    def n_bins(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_frames(self) -> int:
        return self.coefficients.shape[1]

    @property
    def hop_ms(self) -> float:
        return 1000.0 * self.hop / self.sample_rate

    def magnitude(self) -> Spectrogram:
        """Discard the phase, keeping only the modulus of every coefficient."""
        return replace(
            self, coefficients=np.abs(self.coefficients), has_phase=False
        )

    def frame_index(self, at_ms: float) -> int:
        """Index of the frame whose center is nearest ``at_ms``."""
        return int(round(at_ms / self.hop_ms))


class SpectralTransform(object):
    """An invertible analysis/synthesis pair.

    This is an abstract superclass. Subclasses implement
    `_analyze` and `_synthesize`; this class takes care of the
    bookkeeping that is the same for every transform.

    :param spec: The transform parameters.
    :param sample_rate: Rate of the signals this transform will see.
    :param signal_len: Length of the signals this transform will see.
        Transforms that can analyze any length ignore it.
    """

    #: The public name of this transform.
    NAME: str = "[Unknown transform]"

    #: The `TransformSpec.kind` this class implements.
    KIND: str = ""

    #: Features used by `TransformRegistry.lookup`.
    features: Iterable[str] = []

    #: True if a transform instance only works for one signal length.
    length_dependent: bool = False

    #: False if the coefficients are real, so the "phase" is a sign.
    complex_coefficients: bool = True

    spec: TransformSpec
    sample_rate: int
    signal_len: Optional[int]

    def __init__(
        self,
        spec: TransformSpec,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
        signal_len: Optional[int] = None,
    ):
        if spec.kind != self.KIND:
            raise Unsupported(
                "%s cannot implement a %r transform." % (self.NAME, spec.kind)
            )
        spec.validate(sample_rate)
        self.spec = spec
        self.sample_rate = sample_rate
        self.signal_len = signal_len

    # The methods subclasses must define.

    @property
    def n_bins(self) -> int:
        """The length F of one frame."""
        raise NotImplementedError()

    @property
    def hop(self) -> float:
        """The distance between frames, in samples."""
        raise NotImplementedError()

    def n_frames(self, signal_len: int) -> int:
        """How many frames `forward` produces for a signal of this length."""
        raise NotImplementedError()

    def bin_frequencies(self) -> _BinFrequencies:
        """The frequency associated with each bin, in Hz."""
        raise NotImplementedError()

    def _analyze(self, samples: _Samples) -> _Coefficients:
        raise NotImplementedError()

    def _synthesize(self, coefficients: _Coefficients, signal_len: int) -> _Samples:
        raise NotImplementedError()

    # The methods subclasses may override.

    def coefficient_weights(self) -> np.ndarray:
        """Per-bin weights under which `inverse` is the least-squares
        inverse of `forward`. Griffin-Lim measures its error with them.
        """
        return np.ones(self.n_bins)

    def for_length(self, signal_len: int) -> SpectralTransform:
        """A transform able to analyze and synthesize ``signal_len`` samples."""
        return self

    @property
    def min_length(self) -> int:
        """The shortest signal this transform can analyze."""
        return 1

    # The public interface.

    def forward(self, audio: AudioBuffer) -> Spectrogram:
        """Analyze a signal."""
        if audio.sample_rate != self.sample_rate:
            raise PlanMismatch(
                "%s was designed for %d Hz audio, not %d Hz."
                % (self.NAME, self.sample_rate, audio.sample_rate)
            )
        if len(audio) < self.min_length:
            raise InputTooShort(len(audio), self.min_length)
        if self.length_dependent and len(audio) != self.signal_len:
            raise PlanMismatch(
                "%s was designed for %d samples, not %d."
                % (self.NAME, self.signal_len, len(audio))
            )
        coefficients = self._analyze(audio.samples)
        return Spectrogram(
            coefficients=coefficients,
            spec=self.spec,
            sample_rate=self.sample_rate,
            signal_len=len(audio),
            hop=self.hop,
        )

    def inverse(self, spectrogram: Spectrogram) -> AudioBuffer:
        """Synthesize the signal whose analysis is ``spectrogram``."""
        if not spectrogram.has_phase:
            raise MissingPhase(
                "This spectrogram only has magnitudes; recover a phase "
                "with griffin_lim() before inverting it."
            )
        self._check_compatible(spectrogram.coefficients, spectrogram.signal_len)
        samples = self._synthesize(spectrogram.coefficients, spectrogram.signal_len)
        return AudioBuffer(samples, self.sample_rate)

    def _check_compatible(self, coefficients: _Coefficients, signal_len: int) -> None:
        if self.length_dependent and signal_len != self.signal_len:
            raise PlanMismatch(
                "%s was designed for %d samples, not %d."
                % (self.NAME, self.signal_len, signal_len)
            )
        expected = (self.n_bins, self.n_frames(signal_len))
        if coefficients.shape != expected:
            raise PlanMismatch(
                "%s expects %r coefficients for %d samples, got %r."
                % (self.NAME, expected, signal_len, coefficients.shape)
            )

    def project(self, coefficients: _Coefficients, signal_len: int) -> _Coefficients:
        """Map coefficients to the nearest consistent coefficients:
        the analysis of their least-squares synthesis.
        """
        self._check_compatible(coefficients, signal_len)
        return self._analyze(self._synthesize(coefficients, signal_len))

    def __repr__(self) -> str:
        return "<%s %s>" % (self.__class__.__name__, self.spec.flag)


class TransformRegistry(object):
    """A way of looking up SpectralTransform subclasses by their name
    or by desired features.
    """

    transforms_for_feature: Dict[str, List[Type[SpectralTransform]]]
    transforms: List[Type[SpectralTransform]]

    def __init__(self) -> None:
        self.transforms_for_feature = defaultdict(list)
        self.transforms = []

    def register(self, transform_class: Type[SpectralTransform]) -> None:
        """Register a transform based on its advertised features.

        :param transform_class: A subclass of `SpectralTransform`. Its
           `SpectralTransform.features` attribute should list its features.
        """
        for feature in transform_class.features:
            self.transforms_for_feature[feature].insert(0, transform_class)
        self.transforms.insert(0, transform_class)

    def lookup(self, *features: str) -> Optional[Type[SpectralTransform]]:
        """Look up a SpectralTransform subclass with the desired features.

        :param features: A list of features to look for. If none are
            provided, the most recently registered transform will be used.
        :return: A SpectralTransform subclass, or None if there's no
            registered subclass with all the requested features.
        """
        if len(self.transforms) == 0:
            return None

        if len(features) == 0:
            return self.transforms[0]

        # Keep only the transforms that have every feature, preferring
        # the most recently registered one.
        candidate_set = None
        for feature in features:
            having = set(self.transforms_for_feature.get(feature, []))
            candidate_set = having if candidate_set is None else candidate_set & having
        if not candidate_set:
            return None
        for candidate in self.transforms:
            if candidate in candidate_set:
                return candidate
        return None


#: `design_transform` uses this registry to find the class that
#: implements a `TransformSpec.kind`.
transform_registry: TransformRegistry = TransformRegistry()


def design_transform(
    spec: TransformSpec,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    signal_len: Optional[int] = None,
) -> SpectralTransform:
    """Build the transform described by ``spec``.

    :param signal_len: Required for an NSGT, whose window bank depends
        on the signal length.
    """
    transform_class = transform_registry.lookup(spec.kind)
    if transform_class is None:
        raise Unsupported("No transform is registered for %r." % spec.kind)
    if transform_class.length_dependent and signal_len is None:
        raise PlanMismatch("A %s needs the signal length to be designed." % spec.kind)
    return transform_class(spec, sample_rate, signal_len)


def register_transforms_from(module: ModuleType) -> None:
    """Copy SpectralTransforms from the given module into this module."""
    this_module = sys.modules[__name__]
    for name in module.__all__:
        obj = getattr(module, name)

        if isinstance(obj, type) and issubclass(obj, SpectralTransform):
            setattr(this_module, name, obj)
            this_module.__all__.append(name)
            this_module.transform_registry.register(obj)


from . import _dct  # noqa: E402
from . import _stft  # noqa: E402
from . import _nsgt  # noqa: E402

register_transforms_from(_dct)
register_transforms_from(_stft)
register_transforms_from(_nsgt)


def _require_kind(spec: TransformSpec, kind: str) -> None:
    if spec.kind != kind:
        raise Unsupported("Expected a %s spec, got %r." % (kind, spec.kind))


def analyze(audio: AudioBuffer, spec: TransformSpec) -> Spectrogram:
    """Analyze a signal with any transform, designing it for this signal."""
    transform = design_transform(spec, audio.sample_rate, len(audio))
    return transform.forward(audio)


def synthesize(spectrogram: Spectrogram) -> AudioBuffer:
    """Invert a spectrogram that still has its phase."""
    transform = design_transform(
        spectrogram.spec, spectrogram.sample_rate, spectrogram.signal_len
    )
    return transform.inverse(spectrogram)


def stft_forward(audio: AudioBuffer, spec: TransformSpec) -> Spectrogram:
    _require_kind(spec, "stft")
    return analyze(audio, spec)


def stft_inverse(spectrogram: Spectrogram) -> AudioBuffer:
    _require_kind(spectrogram.spec, "stft")
    return synthesize(spectrogram)


def dct_forward(audio: AudioBuffer, spec: TransformSpec) -> Spectrogram:
    _require_kind(spec, "dct")
    return analyze(audio, spec)


def dct_inverse(spectrogram: Spectrogram) -> AudioBuffer:
    _require_kind(spectrogram.spec, "dct")
    return synthesize(spectrogram)


def nsgt_design(
    spec: TransformSpec, sample_rate: int, signal_len: int
) -> SpectralTransform:
    """Design an NSGT window bank for one signal length."""
    _require_kind(spec, "nsgt")
    return design_transform(spec, sample_rate, signal_len)


def nsgt_forward(audio: AudioBuffer, plan: SpectralTransform) -> Spectrogram:
    _require_kind(plan.spec, "nsgt")
    return plan.forward(audio)


def nsgt_inverse(spectrogram: Spectrogram, plan: SpectralTransform) -> AudioBuffer:
    _require_kind(plan.spec, "nsgt")
    return plan.inverse(spectrogram)


__all__ += [
    "analyze",
    "dct_forward",
    "dct_inverse",
    "nsgt_design",
    "nsgt_forward",
    "nsgt_inverse",
    "stft_forward",
    "stft_inverse",
    "synthesize",
]
