"""Descriptor-based path synthesis.

Starting from the latent point of an origin frame, each step samples
a neighborhood of the current point, decodes every candidate and
keeps the one whose descriptor change best matches the change asked
for by the target series. The chosen points form a latent path whose
decoded frames are the synthesized spectra.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import csv
from dataclasses import dataclass
from logging import getLogger
import math
from typing import (
    List,
    Optional,
    Union,
)

import numpy as np
from typing_extensions import Literal

from timbre.descriptors import (
    bin_frequencies,
    descriptor_function,
)
from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    TransformSpec,
)
from timbre.dsp.frames import (
    SpectralFrame,
    denormalize,
)
from timbre.dsp.phase import DEFAULT_ITERATIONS
from timbre.exceptions import (
    ConfigError,
    EmptyTarget,
    PlanMismatch,
    StuckAtStep,
    UndefinedDescriptor,
)
from timbre.latent import (
    DEFAULT_PATH_FRAME_MS,
    PcaProjection,
    RenderedPath,
    decode_points,
    render_frames,
)
from timbre.vae import (
    VaeModel,
    encode_frames,
)
from timbre._rng import stream
from timbre._typing import (
    _DescriptorKind,
    _PathLike,
    _Sampling,
)

__all__ = [
    "NeighborhoodSpec",
    "SynthResult",
    "TargetSeries",
    "descriptor_synth",
    "render_synth",
    "target_shape",
]

logger = getLogger(__name__)


@dataclass
class TargetSeries:
    """The descriptor values a synthesized path should follow, one per step."""

    values: np.ndarray
    kind: _DescriptorKind = "centroid"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.values) == 0:
            raise EmptyTarget("A target series needs at least one value.")
        if not np.all(np.isfinite(self.values)):
            raise EmptyTarget("A target series must only hold finite values.")
        descriptor_function(self.kind)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def read_csv(cls, path: _PathLike, kind: _DescriptorKind = "centroid") -> TargetSeries:
        """One value per line; blank lines are ignored."""
        values = []
        with open(path, encoding="utf8") as fh:
            for number, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    values.append(float(line.split(",")[0]))
                except ValueError:
                    raise ConfigError("%s line %d: %r is not a number." % (path, number, line))
        return cls(np.array(values), kind)

    def rescaled(self, start_hz: float, stop_hz: float) -> TargetSeries:
        """Map a shape in [0, 1] onto the span from ``start_hz`` to ``stop_hz``."""
        return TargetSeries(start_hz + self.values * (stop_hz - start_hz), self.kind)


def target_shape(
    kind: Literal["linear", "log"],
    n: int,
    start_hz: float,
    stop_hz: float,
    descriptor: _DescriptorKind = "centroid",
) -> TargetSeries:
    """A built-in target: a straight line or a logarithmic curve
    between two values. Descending targets have ``stop_hz < start_hz``.
    """
    if n < 1:
        raise EmptyTarget("A target series needs at least one value.")
    u = np.linspace(0.0, 1.0, n) if n > 1 else np.ones(1)
    if kind == "linear":
        shape = u
    elif kind == "log":
        shape = np.log1p(9.0 * u) / math.log(10.0)
    else:
        raise ConfigError("Unknown target shape %r; choose linear or log." % kind)
    return TargetSeries(shape, descriptor).rescaled(start_hz, stop_hz)


@dataclass(frozen=True)
class NeighborhoodSpec:
    """How candidates are drawn around the current point.

    :param radius: Standard deviation of the Gaussian perturbations,
        or half the side of the grid, in latent units.
    :param count: Number of Gaussian candidates. A grid uses the
        smallest lattice with at least this many nodes in PCA space,
        and the 2 d_z axis neighbors in the full space.
    :param space: "pca" perturbs the 3 PCA coordinates and lifts the
        result; "full" perturbs every latent coordinate.
    """

    radius: float = 0.1
    count: int = 64
    sampling: _Sampling = "gaussian"
    space: Literal["pca", "full"] = "pca"

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ConfigError("The neighborhood radius must be positive, got %r." % self.radius)
        if self.count < 2:
            raise ConfigError("A neighborhood needs at least 2 candidates, got %d." % self.count)
        if self.sampling not in ("gaussian", "grid"):
            raise ConfigError("Unknown sampling %r; choose gaussian or grid." % self.sampling)
        if self.space not in ("pca", "full"):
            raise ConfigError("Unknown neighborhood space %r; choose pca or full." % self.space)

    def offsets(self, dims: int, rng: np.random.Generator) -> np.ndarray:
        """Perturbations in a ``dims``-dimensional space, one per row."""
        if self.sampling == "gaussian":
            return self.radius * rng.standard_normal((self.count, dims))
        if dims <= 3:
            side = max(2, int(math.ceil(self.count ** (1.0 / dims))))
            levels = np.linspace(-self.radius, self.radius, side)
            mesh = np.meshgrid(*([levels] * dims), indexing="ij")
            return np.stack([axis.ravel() for axis in mesh], axis=1)
        axes = np.eye(dims) * self.radius
        return np.vstack([axes, -axes])

    def candidates(
        self,
        z: np.ndarray,
        rng: np.random.Generator,
        pca: Optional[PcaProjection] = None,
    ) -> np.ndarray:
        """The current point followed by its sampled neighbors."""
        if self.space == "pca":
            if pca is None:
                raise ConfigError("A PCA neighborhood needs a fitted PcaProjection.")
            neighbors = z + self.offsets(3, rng) @ pca.basis
        else:
            neighbors = z + self.offsets(len(z), rng)
        return np.vstack([z[None, :], neighbors])


@dataclass
class SynthResult:
    """A synthesized path.

    :param spectra: The (N, F) decoded frames of steps 1..N, in
        corpus-normalized units.
    :param path: The (N + 1, d_z) latent points, origin first.
    :param achieved: The descriptor at each point of the path.
    :param deltas: The selection cost of each chosen step.
    :param target: The (N,) target values.
    :param xyz: The path in PCA coordinates, if a projection was used.
    """

    spectra: np.ndarray
    path: np.ndarray
    achieved: np.ndarray
    deltas: np.ndarray
    target: TargetSeries
    spec: TransformSpec
    xyz: Optional[np.ndarray] = None

    @property
    def steps(self) -> int:
        return len(self.spectra)

    def target_steps(self) -> np.ndarray:
        """``t[i] - t[i-1]``, with the origin's value standing in for t[0]."""
        return np.diff(np.concatenate([self.achieved[:1], self.target.values]))

    def tracking_error(self) -> float:
        """Sum over steps of |achieved change - target change|."""
        return float(np.abs(np.diff(self.achieved) - self.target_steps()).sum())

    def write_trace(self, path: _PathLike) -> None:
        """Columns: step, delta, achieved, target, x, y, z. Step 0 is the origin."""
        with open(path, "w", newline="", encoding="utf8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "delta", "achieved", "target", "x", "y", "z"])
            targets = np.concatenate([self.achieved[:1], self.target.values])
            for step in range(len(self.path)):
                delta = "" if step == 0 else repr(float(self.deltas[step - 1]))
                if self.xyz is None:
                    xyz: List[str] = ["", "", ""]
                else:
                    xyz = [repr(float(v)) for v in self.xyz[step]]
                writer.writerow(
                    [step, delta, repr(float(self.achieved[step])), repr(float(targets[step]))]
                    + xyz
                )


@dataclass
class _Beam:
    points: List[np.ndarray]
    spectra: List[np.ndarray]
    achieved: List[float]
    deltas: List[float]
    cost: float = 0.0


def descriptor_synth(
    model: VaeModel,
    x0: SpectralFrame,
    target: TargetSeries,
    nbh: NeighborhoodSpec = NeighborhoodSpec(),
    rng: Optional[np.random.Generator] = None,
    pca: Optional[PcaProjection] = None,
    spec: Optional[TransformSpec] = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    beam_width: int = 1,
    origin_descriptor: Literal["input", "decoded"] = "input",
) -> SynthResult:
    """Search the latent space for a path whose descriptor follows ``target``.

    At step ``i`` every candidate ``c`` around the previous point costs
    ``((d(c) - d[i-1]) - (t[i] - t[i-1]))**2``, where ``d[i-1]`` is the
    descriptor of the previous chosen point and ``t[0]`` is the
    origin's descriptor. The current point is always a candidate.
    Candidates whose descriptor is undefined are discarded; ties go to
    the lowest candidate index.

    :param spec: The transform the model was trained on.
    :param beam_width: Keep this many partial paths, ranked by their
        cumulative cost. 1 is the greedy search.
    :param origin_descriptor: Measure the origin's descriptor on ``x0``
        itself ("input") or on its decoded frame ("decoded").
    :raise StuckAtStep: If no candidate of a step has a defined descriptor.
    """
    if beam_width < 1:
        raise ConfigError("beam_width must be at least 1, got %d." % beam_width)
    if origin_descriptor not in ("decoded", "input"):
        raise ConfigError("origin_descriptor must be 'decoded' or 'input'.")
    if spec is not None and x0.spec != spec:
        raise PlanMismatch(
            "The origin is a %s frame; the model expects %s frames." % (x0.spec.flag, spec.flag)
        )
    if len(x0) != model.input_dims:
        raise PlanMismatch(
            "The origin has %d bins; the model expects %d." % (len(x0), model.input_dims)
        )
    if rng is None:
        rng = stream(0, "synth")
    measure = descriptor_function(target.kind)
    frequencies = bin_frequencies(x0.spec, sample_rate)

    z0 = encode_frames(model, [x0])[0]
    decoded0 = decode_points(model, z0)[0]
    source = decoded0 if origin_descriptor == "decoded" else x0.magnitudes
    d0 = float(measure(source, frequencies)[0])
    if not np.isfinite(d0):
        raise UndefinedDescriptor("The origin frame has no %s." % target.kind)
    t = np.concatenate([[d0], target.values])

    beams = [_Beam([z0], [], [d0], [])]
    for i in range(1, len(t)):
        wanted = t[i] - t[i - 1]
        expansions = []
        for b, beam in enumerate(beams):
            candidates = nbh.candidates(beam.points[-1], rng, pca)
            decoded = decode_points(model, candidates)
            values = measure(decoded, frequencies)
            deltas = ((values - beam.achieved[-1]) - wanted) ** 2
            for c in np.flatnonzero(np.isfinite(deltas)):
                expansions.append(
                    (beam.cost + deltas[c], b, int(c), candidates[c], decoded[c], values[c], deltas[c])
                )
        if not expansions:
            raise StuckAtStep(i)
        expansions.sort(key=lambda e: (e[0], e[1], e[2]))
        beams = [
            _Beam(
                beams[b].points + [point],
                beams[b].spectra + [frame],
                beams[b].achieved + [float(value)],
                beams[b].deltas + [float(delta)],
                float(cost),
            )
            for cost, b, _, point, frame, value, delta in expansions[:beam_width]
        ]
        logger.debug("Step %d: best cumulative cost %g.", i, beams[0].cost)

    best = beams[0]
    path = np.stack(best.points)
    result = SynthResult(
        spectra=np.stack(best.spectra),
        path=path,
        achieved=np.array(best.achieved),
        deltas=np.array(best.deltas),
        target=target,
        spec=x0.spec,
        xyz=None if pca is None else pca.project(path),
    )
    logger.info(
        "Synthesized a %d-step %s path; tracking error %g.",
        result.steps, target.kind, result.tracking_error(),
    )
    return result


def render_synth(
    result: SynthResult,
    norm_constant: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    frame_ms: float = DEFAULT_PATH_FRAME_MS,
    iterations: int = DEFAULT_ITERATIONS,
    init: Union[str, np.ndarray] = "zero",
    rng: Optional[np.random.Generator] = None,
) -> RenderedPath:
    """Audio of the synthesized spectra, ``frame_ms`` per step."""
    frames = denormalize(result.spectra, norm_constant)
    audio, magnitudes = render_frames(
        frames, result.spec, sample_rate, frame_ms, iterations, init, rng
    )
    return RenderedPath(audio, frames, magnitudes)
