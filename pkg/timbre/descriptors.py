"""Spectral centroid and spectral bandwidth of single frames.

Both treat a frame's magnitudes as weights over its bin frequencies:
the centroid is the weighted mean frequency and the bandwidth the
weighted standard deviation around it. Frequencies are linear in Hz
on every transform, including the log-spaced NSGT scales.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import csv
from dataclasses import dataclass
from typing import (
    Any,
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Union,
)
import warnings

import numpy as np

from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    TransformSpec,
    design_transform,
)
from timbre.dsp._nsgt import center_frequencies
from timbre.dsp.frames import SpectralFrame
from timbre.exceptions import UndefinedDescriptor
from timbre._typing import (
    _BinFrequencies,
    _DescriptorKind,
    _Magnitudes,
    _PathLike,
)
from timbre._warnings import NonPhysicalDescriptorWarning

__all__ = [
    "DESCRIPTORS",
    "DescriptorValue",
    "bandwidths",
    "bin_frequencies",
    "centroids",
    "describe_frames",
    "descriptor_function",
    "is_physical",
    "spectral_bandwidth",
    "spectral_centroid",
    "write_descriptor_csv",
]


def is_physical(spec: TransformSpec) -> bool:
    """False for transforms whose bins are not frequencies (the DCT)."""
    return spec.kind != "dct"


def bin_frequencies(
    spec: TransformSpec, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> _BinFrequencies:
    """The frequency of every bin, in Hz.

    STFT bin ``k`` is at ``k * sr / N``. NSGT bins are the scale's
    center frequencies. DCT coefficient ``k`` is mapped to
    ``k * sr / (2N)``, which is not a physical frequency; a
    `NonPhysicalDescriptorWarning` says so.
    """
    if spec.kind == "nsgt":
        spec.validate(sample_rate)
        return center_frequencies(spec)
    if not is_physical(spec):
        warnings.warn(
            NonPhysicalDescriptorWarning.MESSAGE,
            NonPhysicalDescriptorWarning,
            stacklevel=2,
        )
    return design_transform(spec, sample_rate).bin_frequencies()


def _weights(magnitudes: _Magnitudes, frequencies: _BinFrequencies) -> np.ndarray:
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    if magnitudes.shape[-1] != len(frequencies):
        raise ValueError(
            "%d magnitudes but %d bin frequencies."
            % (magnitudes.shape[-1], len(frequencies))
        )
    return magnitudes


def centroids(magnitudes: _Magnitudes, frequencies: _BinFrequencies) -> np.ndarray:
    """The centroid of every row; NaN for silent rows."""
    m = _weights(np.atleast_2d(magnitudes), frequencies)
    total = m.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        result = (m @ frequencies) / total
    result[~(total > 0)] = np.nan
    return result


def bandwidths(magnitudes: _Magnitudes, frequencies: _BinFrequencies) -> np.ndarray:
    """The bandwidth of every row; NaN for silent rows."""
    m = _weights(np.atleast_2d(magnitudes), frequencies)
    total = m.sum(axis=1)
    centers = centroids(m, frequencies)
    with np.errstate(invalid="ignore", divide="ignore"):
        spread = (m * (frequencies[None, :] - centers[:, None]) ** 2).sum(axis=1) / total
    result = np.sqrt(np.maximum(spread, 0.0))
    result[~(total > 0)] = np.nan
    return result


_Frame = Union[SpectralFrame, _Magnitudes]


def _frame_weights(
    frame: _Frame, frequencies: Optional[_BinFrequencies], sample_rate: int
) -> tuple:
    if isinstance(frame, SpectralFrame):
        if frequencies is None:
            frequencies = bin_frequencies(frame.spec, sample_rate)
        magnitudes = frame.magnitudes
    else:
        if frequencies is None:
            raise ValueError("Bare magnitudes need their bin frequencies.")
        magnitudes = np.asarray(frame, dtype=np.float64)
    if not magnitudes.sum() > 0:
        raise UndefinedDescriptor("A silent frame has no spectral centroid or bandwidth.")
    return magnitudes, np.asarray(frequencies, dtype=np.float64)


def spectral_centroid(
    frame: _Frame,
    frequencies: Optional[_BinFrequencies] = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> float:
    """``sum f_k m_k / sum m_k``, in Hz."""
    magnitudes, frequencies = _frame_weights(frame, frequencies, sample_rate)
    return float(centroids(magnitudes, frequencies)[0])


def spectral_bandwidth(
    frame: _Frame,
    frequencies: Optional[_BinFrequencies] = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> float:
    """``sqrt(sum m_k (f_k - centroid)^2 / sum m_k)``, in Hz."""
    magnitudes, frequencies = _frame_weights(frame, frequencies, sample_rate)
    return float(bandwidths(magnitudes, frequencies)[0])


#: Batch descriptor functions by name.
DESCRIPTORS: Dict[str, Callable[[_Magnitudes, _BinFrequencies], np.ndarray]] = {
    "centroid": centroids,
    "bandwidth": bandwidths,
}


def descriptor_function(
    kind: _DescriptorKind,
) -> Callable[[_Magnitudes, _BinFrequencies], np.ndarray]:
    try:
        return DESCRIPTORS[kind]
    except KeyError:
        raise ValueError(
            "Unknown descriptor %r; choose one of %s." % (kind, ", ".join(DESCRIPTORS))
        )


@dataclass
class DescriptorValue:
    """One descriptor of one frame.

    ``physical`` is False when the bins it was computed on are not
    frequencies; ``value`` is then on the DCT's index scale, not in Hz.
    A silent frame has a NaN value.
    """

    kind: _DescriptorKind
    value: float
    frame_ref: str = ""
    physical: bool = True


def describe_frames(
    frames: Sequence[SpectralFrame], sample_rate: int = DEFAULT_SAMPLE_RATE
) -> List[Dict[str, Any]]:
    """Centroid and bandwidth of every frame, as rows for `write_descriptor_csv`.

    Each row holds the frame's ``source_id`` and ``class_label`` and a
    `DescriptorValue` under ``centroid`` and ``bandwidth``.
    """
    if len(frames) == 0:
        return []
    spec = frames[0].spec
    physical = is_physical(spec)
    frequencies = bin_frequencies(spec, sample_rate)
    magnitudes = np.stack([frame.magnitudes for frame in frames])
    centers = centroids(magnitudes, frequencies)
    widths = bandwidths(magnitudes, frequencies)
    return [
        dict(
            source_id=frame.source_id,
            class_label=frame.class_label or "",
            centroid=DescriptorValue("centroid", float(centers[i]), frame.source_id, physical),
            bandwidth=DescriptorValue("bandwidth", float(widths[i]), frame.source_id, physical),
        )
        for i, frame in enumerate(frames)
    ]


def _cell(value: DescriptorValue) -> str:
    return "" if np.isnan(value.value) else repr(value.value)


def write_descriptor_csv(path: _PathLike, rows: Iterable[Dict[str, Any]]) -> None:
    """One line per frame. The ``physical`` column is ``false`` for DCT
    frames, whose descriptor columns are then not in Hz."""
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source_id", "class", "centroid_hz", "bandwidth_hz", "physical"])
        for row in rows:
            writer.writerow(
                [
                    row["source_id"],
                    row["class_label"],
                    _cell(row["centroid"]),
                    _cell(row["bandwidth"]),
                    "true" if row["centroid"].physical else "false",
                ]
            )
