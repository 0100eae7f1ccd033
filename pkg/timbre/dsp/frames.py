"""Single spectral frames: extraction, corpus normalization and storage.

A corpus is stored as one binary frame store. The layout is::

    b"TSF1"
    uint32   length of the transform spec (JSON, UTF-8)
    bytes    the transform spec
    uint32   F, the number of bins per frame
    uint32   the number of frames
    float64  the corpus normalization constant
    float32  the frames, row-major, F values each

All integers and floats are little-endian. Class labels, source ids
and the train/test split live in a sidecar JSON manifest (see
`timbre.corpus.CorpusManifest`).
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import dataclass
import json
import struct
from typing import (
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from timbre.dsp import (
    Spectrogram,
    TransformSpec,
)
from timbre.exceptions import (
    CorruptFile,
    DegenerateCorpus,
    OutOfRange,
)
from timbre._typing import (
    _ClassLabel,
    _Magnitudes,
    _PathLike,
)

__all__ = [
    "FrameStore",
    "SpectralFrame",
    "corpus_normalize",
    "denormalize",
    "extract_frame",
    "tile_frames",
]

MAGIC: bytes = b"TSF1"

#: Where the sustained part of a sample is taken from.
DEFAULT_FRAME_MS: float = 200.0


@dataclass
class SpectralFrame:
    """One magnitude frame of a transform.

    :param magnitudes: F non-negative values.
    :param spec: The transform the frame comes from.
    :param class_label: The instrument class, if known.
    :param source_id: Identifier of the corpus sample.
    """

    magnitudes: _Magnitudes
    spec: TransformSpec
    class_label: Optional[_ClassLabel] = None
    source_id: str = ""

    def __post_init__(self) -> None:
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64).reshape(-1)
        if np.any(self.magnitudes < 0) or not np.all(np.isfinite(self.magnitudes)):
            raise ValueError(
                "Frame %r has negative or non-finite magnitudes." % self.source_id
            )

    def __len__(self) -> int:
        return len(self.magnitudes)


def extract_frame(
    spectrogram: Spectrogram,
    at_ms: float = DEFAULT_FRAME_MS,
    class_label: Optional[_ClassLabel] = None,
    source_id: str = "",
) -> SpectralFrame:
    """Take the magnitude of the frame nearest ``at_ms``; the phase is dropped."""
    duration_ms = 1000.0 * spectrogram.signal_len / spectrogram.sample_rate
    if at_ms < 0 or at_ms > duration_ms:
        raise OutOfRange(
            "%.1f ms is outside this %.1f ms signal." % (at_ms, duration_ms)
        )
    index = min(spectrogram.frame_index(at_ms), spectrogram.n_frames - 1)
    return SpectralFrame(
        np.abs(spectrogram.coefficients[:, index]),
        spectrogram.spec,
        class_label=class_label,
        source_id=source_id,
    )


def corpus_normalize(
    frames: Sequence[SpectralFrame],
) -> Tuple[List[SpectralFrame], float]:
    """Divide every frame by the largest magnitude found in the corpus.

    :return: The normalized frames, and the constant needed to undo
        the normalization at synthesis time.
    """
    if len(frames) == 0:
        raise DegenerateCorpus("The corpus has no frames.")
    norm_constant = float(max(frame.magnitudes.max() for frame in frames))
    if norm_constant <= 0:
        raise DegenerateCorpus("Every frame of the corpus is silent.")
    normalized = [
        SpectralFrame(
            frame.magnitudes / norm_constant,
            frame.spec,
            class_label=frame.class_label,
            source_id=frame.source_id,
        )
        for frame in frames
    ]
    return normalized, norm_constant


def denormalize(magnitudes: _Magnitudes, norm_constant: float) -> _Magnitudes:
    """Undo `corpus_normalize`."""
    return np.asarray(magnitudes) * norm_constant


def tile_frames(frames: _Magnitudes, n_columns: int) -> _Magnitudes:
    """Stretch (n, F) frames over an (F, n_columns) magnitude grid.

    Column ``j`` repeats frame ``floor(j * n / n_columns)``, so each
    frame covers an equal share of the grid.
    """
    frames = np.atleast_2d(frames)
    which = (np.arange(n_columns) * len(frames)) // n_columns
    return frames[which].T


@dataclass
class FrameStore:
    """The frames of a corpus, in the order of its manifest."""

    spec: TransformSpec
    magnitudes: np.ndarray
    norm_constant: float = 1.0

    def __post_init__(self) -> None:
        self.magnitudes = np.atleast_2d(np.asarray(self.magnitudes, dtype="<f4"))

    def __len__(self) -> int:
        return len(self.magnitudes)

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    @classmethod
    def from_frames(
        cls, frames: Sequence[SpectralFrame], norm_constant: float = 1.0
    ) -> FrameStore:
        if len(frames) == 0:
            raise DegenerateCorpus("The corpus has no frames.")
        return cls(
            frames[0].spec,
            np.stack([frame.magnitudes for frame in frames]),
            norm_constant,
        )

    def frame(
        self, index: int, class_label: Optional[_ClassLabel] = None, source_id: str = ""
    ) -> SpectralFrame:
        return SpectralFrame(
            self.magnitudes[index], self.spec, class_label=class_label, source_id=source_id
        )

    def write(self, path: _PathLike) -> None:
        spec_json = json.dumps(self.spec.to_dict(), sort_keys=True).encode("utf8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(spec_json)))
            fh.write(spec_json)
            fh.write(
                struct.pack("<IId", self.n_bins, len(self), float(self.norm_constant))
            )
            fh.write(np.ascontiguousarray(self.magnitudes, dtype="<f4").tobytes())

    @classmethod
    def read(cls, path: _PathLike) -> FrameStore:
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != MAGIC:
            raise CorruptFile("%s is not a frame store." % path)
        try:
            (spec_len,) = struct.unpack_from("<I", data, 4)
            offset = 8 + spec_len
            spec = TransformSpec.from_dict(json.loads(data[8:offset].decode("utf8")))
            n_bins, count, norm_constant = struct.unpack_from("<IId", data, offset)
            offset += struct.calcsize("<IId")
        except (struct.error, ValueError, TypeError) as e:
            raise CorruptFile("%s has an unreadable header: %s" % (path, e))
        expected = offset + 4 * n_bins * count
        if len(data) != expected:
            raise CorruptFile(
                "%s should have %d bytes, has %d." % (path, expected, len(data))
            )
        magnitudes = np.frombuffer(data, dtype="<f4", offset=offset).reshape(count, n_bins)
        return cls(spec, magnitudes.copy(), norm_constant)
