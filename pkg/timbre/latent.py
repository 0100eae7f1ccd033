"""Working with a trained latent space.

`fit_pca` finds the 3-d linear view of the space used for plots, for
the descriptor grids and for path synthesis. The rest of the module
encodes frames into that view, interpolates paths between latent
points and turns decoded paths back into audio.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import dataclass
import json
from logging import getLogger
import os
from typing import (
    Any,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)
import warnings

import numpy as np
from sklearn.decomposition import PCA
import torch

from timbre.descriptors import (
    DESCRIPTORS,
    bin_frequencies,
    is_physical,
)
from timbre.diff import to_tensor
from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    AudioBuffer,
    Spectrogram,
    TransformSpec,
    design_transform,
)
from timbre.dsp.frames import (
    SpectralFrame,
    denormalize,
    tile_frames,
)
from timbre.dsp.phase import (
    DEFAULT_ITERATIONS,
    griffin_lim,
)
from timbre.exceptions import (
    EmptySplit,
    PlanMismatch,
)
from timbre.vae import (
    VaeModel,
    encode_frames,
)
from timbre._typing import (
    _ClassLabel,
    _LatentLike,
    _PathLike,
)
from timbre._warnings import RankDeficientWarning

__all__ = [
    "DEFAULT_PATH_FRAME_MS",
    "DEFAULT_PLANES",
    "DescriptorGrid",
    "LatentPath",
    "OutOfDomain",
    "PcaProjection",
    "RenderedPath",
    "class_centroids",
    "decode_points",
    "descriptor_grid",
    "encode_out_of_domain",
    "fit_pca",
    "interpolate_path",
    "render_frames",
    "render_path",
    "smoothness",
]

logger = getLogger(__name__)

#: Audio duration of one decoded frame along a path.
DEFAULT_PATH_FRAME_MS: float = 25.0

#: The x levels of the default descriptor grid.
DEFAULT_PLANES: Tuple[float, ...] = (-0.75, -0.45, -0.15, 0.15, 0.45, 0.75)

#: Relative variance below which a principal axis counts as empty.
_RANK_TOLERANCE: float = 1e-10


@dataclass
class PcaProjection:
    """A 3-d orthonormal view of the latent space.

    :param mean: The mean latent point, which projects to the origin.
    :param basis: A (3, d_z) array whose rows are the principal axes,
        sorted by decreasing variance.
    :param explained_variance: The variance along each axis.
    :param explained_variance_ratio: The share of the total variance
        along each axis.
    """

    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def latent_dims(self) -> int:
        return len(self.mean)

    def project(self, z: _LatentLike) -> np.ndarray:
        """PCA coordinates of one latent point or of a (n, d_z) batch."""
        z = np.asarray(z, dtype=np.float64)
        return (z - self.mean) @ self.basis.T

    def lift(self, xyz: _LatentLike) -> np.ndarray:
        """The latent point with these PCA coordinates and no component
        outside the principal subspace.
        """
        xyz = np.asarray(xyz, dtype=np.float64)
        return self.mean + xyz @ self.basis

    def to_dict(self) -> Dict[str, Any]:
        return dict(
            mean=self.mean.tolist(),
            basis=self.basis.tolist(),
            explained_variance=self.explained_variance.tolist(),
            explained_variance_ratio=self.explained_variance_ratio.tolist(),
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PcaProjection:
        return cls(
            np.asarray(data["mean"], dtype=np.float64),
            np.asarray(data["basis"], dtype=np.float64),
            np.asarray(data["explained_variance"], dtype=np.float64),
            np.asarray(data["explained_variance_ratio"], dtype=np.float64),
        )


def _canonical_axes(basis: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    basis = basis.copy()
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return basis


def fit_pca(latents: np.ndarray) -> PcaProjection:
    """The top three principal axes of a set of latent points.

    If the points span fewer than three dimensions, the missing axes
    are completed with arbitrary orthonormal directions (with zero
    variance) and a `RankDeficientWarning` is issued.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2:
        raise ValueError("Expected a (points, d_z) array, got shape %s." % (latents.shape,))
    n, d = latents.shape
    if n < 4:
        raise ValueError("PCA needs at least 4 latent points, got %d." % n)
    if d < 3:
        raise ValueError("A 3-d view needs at least 3 latent dimensions, got %d." % d)

    pca = PCA(n_components=min(3, n), svd_solver="full").fit(latents)
    total = float(latents.var(axis=0, ddof=1).sum())
    variance = pca.explained_variance_
    rank = int(np.sum(variance > _RANK_TOLERANCE * max(total, np.finfo(float).tiny)))
    axes = pca.components_[:rank]
    if rank < 3:
        warnings.warn(
            RankDeficientWarning.MESSAGE % dict(rank=rank),
            RankDeficientWarning,
            stacklevel=2,
        )
        # Householder QR keeps the span of the leading columns, so the
        # trailing columns complete the basis orthonormally.
        q, _ = np.linalg.qr(np.hstack([axes.T, np.eye(d)]))
        axes = np.vstack([axes, q[:, rank:3].T])
        variance = np.concatenate([variance[:rank], np.zeros(3 - rank)])
    variance = np.asarray(variance[:3], dtype=np.float64)
    ratio = variance / total if total > 0 else np.zeros(3)
    logger.debug("PCA on %d latent points: explained variance ratio %s.", n, ratio)
    return PcaProjection(
        mean=pca.mean_.astype(np.float64),
        basis=_canonical_axes(axes),
        explained_variance=variance,
        explained_variance_ratio=ratio,
    )


def class_centroids(
    latents: np.ndarray, labels: Sequence[Optional[_ClassLabel]]
) -> Tuple[List[_ClassLabel], np.ndarray]:
    """The mean latent point of every labeled class, in sorted class order."""
    latents = np.asarray(latents, dtype=np.float64)
    if len(labels) != len(latents):
        raise ValueError("%d labels for %d latent points." % (len(labels), len(latents)))
    classes = sorted(set(label for label in labels if label is not None))
    labels_array = np.asarray(labels, dtype=object)
    centroids = np.array([latents[labels_array == cls].mean(axis=0) for cls in classes])
    return classes, centroids.reshape(len(classes), latents.shape[1])


@dataclass
class OutOfDomain:
    """Latent points of frames the model was not trained on."""

    latents: np.ndarray
    centroid: np.ndarray


def encode_out_of_domain(
    model: VaeModel,
    frames: Sequence[SpectralFrame],
    spec: Optional[TransformSpec] = None,
) -> OutOfDomain:
    """Encode frames of an unseen class, and their centroid.

    :param spec: The transform the model was trained on. Frames from
        any other transform raise `PlanMismatch`.
    """
    if len(frames) == 0:
        raise EmptySplit("There are no frames to encode.")
    expected = spec if spec is not None else frames[0].spec
    for frame in frames:
        if frame.spec != expected:
            raise PlanMismatch(
                "Frame %r is a %s frame; the model expects %s frames."
                % (frame.source_id, frame.spec.flag, expected.flag)
            )
        if len(frame) != model.input_dims:
            raise PlanMismatch(
                "Frame %r has %d bins; the model expects %d."
                % (frame.source_id, len(frame), model.input_dims)
            )
    latents = encode_frames(model, frames)
    return OutOfDomain(latents, latents.mean(axis=0))


@dataclass
class LatentPath:
    """A polyline through the latent space.

    :param waypoints: A (k, d_z) array, k >= 2.
    :param samples_per_segment: Points per segment, endpoints included.
    """

    waypoints: np.ndarray
    samples_per_segment: int = 2

    def __post_init__(self) -> None:
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=np.float64))
        if len(self.waypoints) < 2:
            raise ValueError("A path needs at least 2 waypoints, got %d." % len(self.waypoints))
        if self.samples_per_segment < 2:
            raise ValueError(
                "samples_per_segment must be at least 2, got %d." % self.samples_per_segment
            )

    def points(self) -> np.ndarray:
        """Every sampled point. Waypoints shared by two segments appear once."""
        n = self.samples_per_segment
        fractions = np.arange(n) / (n - 1)
        result = [self.waypoints[:1]]
        for start, end in zip(self.waypoints[:-1], self.waypoints[1:]):
            segment = start + fractions[:, None] * (end - start)
            segment[-1] = end
            result.append(segment[1:])
        return np.vstack(result)

    def __len__(self) -> int:
        return (len(self.waypoints) - 1) * (self.samples_per_segment - 1) + 1


def interpolate_path(z_a: _LatentLike, z_b: _LatentLike, n: int) -> LatentPath:
    """``n`` equally spaced points from ``z_a`` to ``z_b``, both included."""
    z_a = np.asarray(z_a, dtype=np.float64).reshape(-1)
    z_b = np.asarray(z_b, dtype=np.float64).reshape(-1)
    if z_a.shape != z_b.shape:
        raise ValueError("Endpoints of shape %s and %s." % (z_a.shape, z_b.shape))
    return LatentPath(np.stack([z_a, z_b]), samples_per_segment=n)


def decode_points(model: VaeModel, points: np.ndarray) -> np.ndarray:
    """Decoded frames of a (n, d_z) batch, in corpus-normalized units."""
    with torch.no_grad():
        decoded = model.decode(to_tensor(np.atleast_2d(points), model.dtype))
    return decoded.cpu().numpy().astype(np.float64)


@dataclass
class RenderedPath:
    """The audio of a path and what it was made from.

    :param frames: The decoded frames, de-normalized, as (n, F).
    :param magnitudes: The tiled magnitude spectrogram that was inverted.
    """

    audio: AudioBuffer
    frames: np.ndarray
    magnitudes: Spectrogram


def render_frames(
    frames: np.ndarray,
    spec: TransformSpec,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    frame_ms: float = DEFAULT_PATH_FRAME_MS,
    iterations: int = DEFAULT_ITERATIONS,
    init: Union[str, np.ndarray] = "zero",
    rng: Optional[np.random.Generator] = None,
) -> Tuple[AudioBuffer, Spectrogram]:
    """Give each (n, F) frame ``frame_ms`` of audio and recover a phase.

    The signal is designed at least as long as the transform's
    shortest input and cropped back afterwards.
    """
    frames = np.atleast_2d(frames)
    length = int(round(len(frames) * frame_ms * sample_rate / 1000.0))
    if length < 1:
        raise ValueError("frame_ms=%r gives an empty signal." % frame_ms)
    transform = design_transform(spec, sample_rate, length)
    designed = max(length, transform.min_length)
    transform = transform.for_length(designed)
    n_columns = transform.n_frames(designed)
    if frames.shape[1] != transform.n_bins:
        raise PlanMismatch(
            "Frames have %d bins but a %s has %d."
            % (frames.shape[1], spec.flag, transform.n_bins)
        )
    magnitudes = Spectrogram(
        coefficients=tile_frames(frames, n_columns),
        spec=spec,
        sample_rate=sample_rate,
        signal_len=designed,
        hop=transform.hop,
        has_phase=False,
    )
    audio = griffin_lim(magnitudes, transform, iterations=iterations, init=init, rng=rng)
    return AudioBuffer(audio.samples[:length], sample_rate), magnitudes


def render_path(
    model: VaeModel,
    path: Union[LatentPath, np.ndarray],
    spec: TransformSpec,
    norm_constant: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    frame_ms: float = DEFAULT_PATH_FRAME_MS,
    iterations: int = DEFAULT_ITERATIONS,
    init: Union[str, np.ndarray] = "zero",
    rng: Optional[np.random.Generator] = None,
) -> RenderedPath:
    """Decode every point of a path and synthesize the concatenation."""
    points = path.points() if isinstance(path, LatentPath) else np.atleast_2d(path)
    frames = denormalize(decode_points(model, points), norm_constant)
    audio, magnitudes = render_frames(
        frames, spec, sample_rate, frame_ms, iterations, init, rng
    )
    logger.info(
        "Rendered %d path points into %.1f ms of audio.", len(points), audio.duration_ms
    )
    return RenderedPath(audio, frames, magnitudes)


def smoothness(field: np.ndarray) -> float:
    """Median absolute difference between 4-neighbours of a 2-d field.

    NaN entries are ignored; NaN if there are no neighbours.
    """
    field = np.asarray(field, dtype=np.float64)
    differences = np.concatenate(
        [
            np.abs(np.diff(field, axis=0)).ravel(),
            np.abs(np.diff(field, axis=1)).ravel(),
        ]
    )
    differences = differences[np.isfinite(differences)]
    if len(differences) == 0:
        return float("nan")
    return float(np.median(differences))


@dataclass
class DescriptorGrid:
    """Descriptor values over planes of constant x in PCA coordinates.

    ``fields[descriptor][p]`` is a (size, size) array for plane
    ``planes[p]``; row ``i`` is the y level ``levels[i]`` and column
    ``j`` the z level ``levels[j]``.
    ``physical`` is False when the values come from DCT coefficients
    and are not in Hz.
    """

    planes: Tuple[float, ...]
    levels: np.ndarray
    fields: Dict[str, np.ndarray]
    physical: bool = True

    def smoothness(self) -> Dict[str, List[float]]:
        return {
            kind: [smoothness(plane) for plane in values]
            for kind, values in self.fields.items()
        }

    def write(self, directory: _PathLike) -> str:
        """One CSV per plane and descriptor, and an ``index.json``
        describing them. Returns the index path.
        """
        os.makedirs(directory, exist_ok=True)
        entries = []
        roughness = self.smoothness()
        for kind, values in self.fields.items():
            for p, plane in enumerate(self.planes):
                name = "%s_plane%d.csv" % (kind, p)
                np.savetxt(
                    os.path.join(directory, name), values[p], delimiter=",", fmt="%.10g"
                )
                entries.append(
                    dict(
                        descriptor=kind,
                        x=plane,
                        file=name,
                        smoothness=roughness[kind][p],
                    )
                )
        index = os.path.join(directory, "index.json")
        with open(index, "w", encoding="utf8") as fh:
            json.dump(
                dict(
                    levels=self.levels.tolist(),
                    planes=list(self.planes),
                    fields=entries,
                    physical=self.physical,
                ),
                fh,
                indent=2,
                sort_keys=True,
            )
        return index


def descriptor_grid(
    model: VaeModel,
    pca: PcaProjection,
    spec: TransformSpec,
    planes: Sequence[float] = DEFAULT_PLANES,
    size: int = 50,
    value_range: Tuple[float, float] = (-1.0, 1.0),
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> DescriptorGrid:
    """Decode a size x size grid on every plane and compute every
    descriptor of every decoded frame.

    Grid nodes are lifted from PCA coordinates, so the latent
    coordinates outside the principal subspace stay at the mean.
    """
    if size < 1:
        raise ValueError("Grid size must be positive, got %d." % size)
    if len(planes) == 0:
        raise ValueError("A descriptor grid needs at least one plane.")
    low, high = value_range
    levels = np.linspace(low, high, size)
    frequencies = bin_frequencies(spec, sample_rate)
    y, z = np.meshgrid(levels, levels, indexing="ij")
    fields: Dict[str, List[np.ndarray]] = {kind: [] for kind in DESCRIPTORS}
    for plane in planes:
        xyz = np.stack([np.full(y.size, plane), y.ravel(), z.ravel()], axis=1)
        decoded = decode_points(model, pca.lift(xyz))
        for kind, function in DESCRIPTORS.items():
            fields[kind].append(function(decoded, frequencies).reshape(size, size))
    logger.debug("Decoded %d grid nodes on %d planes.", size * size, len(planes))
    return DescriptorGrid(
        planes=tuple(float(p) for p in planes),
        levels=levels,
        fields={kind: np.stack(values) for kind, values in fields.items()},
        physical=is_physical(spec),
    )
