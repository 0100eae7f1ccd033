"""Helper classes and functions for tests."""

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import os
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
)

import numpy as np
from scipy.spatial.distance import (
    pdist,
    squareform,
)
import torch

from timbre.dsp import (
    AudioBuffer,
    DEFAULT_SAMPLE_RATE,
    TransformSpec,
)
from timbre.corpus import (
    load_corpus,
    load_target,
    prepare,
)
from timbre.dsp.frames import SpectralFrame
from timbre.fixture import fixture_gen
from timbre.ratings import (
    DissimilarityMatrix,
    TimbreTarget,
)
from timbre.vae import (
    TrainConfig,
    VaeModel,
    train,
)
from timbre._rng import (
    make_rng,
    stream,
)

#: A spec for frames that never go through a real transform.
FRAME_SPEC = TransformSpec.from_flag("stft")

#: Classes of the small synthetic corpora below, with target coordinates
#: that put A and B close together and C and D far from both.
SMALL_TARGET_COORDS: Dict[str, List[float]] = {
    "A": [0.0, 0.0, 0.0],
    "B": [0.1, 0.0, 0.0],
    "C": [1.0, 0.0, 0.0],
    "D": [0.0, 1.0, 0.0],
}


def tone(
    frequencies: Sequence[float] = (440.0,),
    duration_s: float = 0.25,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    amplitude: float = 0.5,
) -> AudioBuffer:
    """A sum of equally loud sines, normalized to ``amplitude``."""
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    samples = sum(np.sin(2 * np.pi * f * t) for f in frequencies)
    samples = amplitude * samples / np.abs(samples).max()
    return AudioBuffer(samples, sample_rate)


def noise(duration_s: float = 0.25, sample_rate: int = DEFAULT_SAMPLE_RATE, seed: int = 0) -> AudioBuffer:
    rng = make_rng(seed)
    return AudioBuffer(0.1 * rng.standard_normal(int(duration_s * sample_rate)), sample_rate)


def class_frames(
    classes: Sequence[str] = ("A", "B", "C", "D"),
    per_class: int = 6,
    n_bins: int = 8,
    seed: int = 0,
    spread: float = 0.02,
) -> List[SpectralFrame]:
    """Frames clustered around one random prototype per class."""
    rng = make_rng(seed)
    frames = []
    for cls in classes:
        prototype = rng.uniform(0.1, 0.9, n_bins)
        for k in range(per_class):
            magnitudes = np.clip(prototype + spread * rng.standard_normal(n_bins), 0.0, 1.0)
            frames.append(SpectralFrame(magnitudes, FRAME_SPEC, cls, "%s_%d" % (cls, k)))
    return frames


def small_target(classes: Optional[Sequence[str]] = None) -> TimbreTarget:
    if classes is None:
        classes = list(SMALL_TARGET_COORDS)
    coords = np.array([SMALL_TARGET_COORDS[cls] for cls in classes])
    distances = squareform(pdist(coords))
    matrix = DissimilarityMatrix(list(classes), distances / distances.max())
    return TimbreTarget(list(classes), coords, np.zeros(len(classes)), matrix)


def micro_model(
    input_dims: int = 8,
    latent_dims: int = 2,
    hidden_units: int = 16,
    hidden_layers: int = 1,
    seed: int = 0,
    dtype: torch.dtype = torch.float64,
) -> VaeModel:
    """A model small enough to train in a fraction of a second."""
    return VaeModel(
        input_dims, latent_dims, hidden_units, hidden_layers, rng=make_rng(seed), dtype=dtype
    )


def micro_config(**overrides) -> TrainConfig:
    values = dict(
        stage1_epochs=5,
        stage2_epochs=5,
        warmup_epochs=2,
        batch_size=8,
        latent_dims=2,
        hidden_units=16,
        hidden_layers=1,
        learning_rate=1e-3,
        beta_final=1.0,
        eval_every=5,
        eval_samples=4,
    )
    values.update(overrides)
    return TrainConfig(**values)


def trained_on_fixture(directory, alpha: float, seed: int = 0, stage2_epochs: int = 80):
    """Prepare a six-class fixture corpus under ``directory`` and train
    a small model on it. Returns the model, the training log, the
    training frames and the target.
    """
    fixture = os.path.join(directory, "fixture")
    prepared = os.path.join(directory, "prepared")
    if not os.path.isdir(prepared):
        fixture_gen(fixture, n_classes=6, samples_per_class=10, seed=seed, duration_s=0.3)
        prepare(
            os.path.join(fixture, "corpus"), prepared, FRAME_SPEC,
            ratings=os.path.join(fixture, "ratings.csv"), seed=seed, frame_ms=150.0,
        )
    manifest, store = load_corpus(prepared)
    target = load_target(prepared)
    config = TrainConfig(
        stage1_epochs=150,
        stage2_epochs=stage2_epochs,
        warmup_epochs=30,
        beta_final=1.0,
        alpha=alpha,
        learning_rate=1e-3,
        batch_size=16,
        latent_dims=3,
        hidden_units=64,
        hidden_layers=2,
        seed=seed,
    )
    model = VaeModel(store.n_bins, 3, 64, 2, rng=stream(seed, "init"))
    frames = manifest.frames(store, "train")
    log = train(model, frames, target, config)
    return model, log, frames, target
