"""Evaluation bundles for trained checkpoints."""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import csv
from dataclasses import (
    asdict,
    dataclass,
    field,
)
import json
from logging import getLogger
import os
from typing import (
    Any,
    Dict,
    List,
    Optional,
)

import numpy as np
import torch

from timbre.checkpoint import Checkpoint
from timbre.corpus import CorpusManifest
from timbre.dsp.frames import FrameStore
from timbre.exceptions import EmptySplit
from timbre.latent import (
    PcaProjection,
    class_centroids,
    fit_pca,
)
from timbre.ratings import TimbreTarget
from timbre.regularizer import (
    distance_correlation,
    reg_loss,
)
from timbre.vae import (
    encode_frames,
    evaluate,
    pca_baseline_mse,
)
from timbre._rng import stream
from timbre._typing import _PathLike

__all__ = [
    "Report",
    "report",
]

logger = getLogger(__name__)


@dataclass
class Report:
    """Test metrics of a checkpoint and where its classes sit.

    :param distance_kl: The penalty between the full-corpus class
        centroids and the target; NaN without a target.
    :param class_coords: PCA coordinates of every class centroid.
    """

    test_log_likelihood: float
    test_mse: float
    pca_baseline_mse: float
    distance_kl: float = float("nan")
    distance_correlation: float = float("nan")
    classes: List[str] = field(default_factory=list)
    class_coords: List[List[float]] = field(default_factory=list)
    model: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    pca: Optional[PcaProjection] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["pca"] = None if self.pca is None else self.pca.to_dict()
        for key in ("test_log_likelihood", "test_mse", "pca_baseline_mse",
                    "distance_kl", "distance_correlation"):
            if np.isnan(data[key]):
                data[key] = None
        return data

    def write(self, directory: _PathLike) -> None:
        """``report.json``, and ``classes.csv`` with the class coordinates."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "report.json"), "w", encoding="utf8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(directory, "classes.csv"), "w", newline="", encoding="utf8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["class", "x", "y", "z"])
            for name, coords in zip(self.classes, self.class_coords):
                writer.writerow([name] + [repr(float(v)) for v in coords])


def report(
    checkpoint: Checkpoint,
    manifest: CorpusManifest,
    store: FrameStore,
    target: Optional[TimbreTarget] = None,
    samples: int = 64,
    seed: int = 0,
) -> Report:
    """Evaluate a checkpoint on the test split of its corpus.

    The penalty and distance correlation use the class centroids of the
    whole corpus; classes missing from the target are left out.
    """
    model = checkpoint.model
    checkpoint.check_spec(manifest.spec)
    train_frames = manifest.frames(store, "train")
    test_frames = manifest.frames(store, "test")
    if not test_frames:
        raise EmptySplit("The corpus has no test frames to evaluate on.")
    evaluation = evaluate(model, test_frames, samples, stream(seed, "noise"))
    baseline = pca_baseline_mse(train_frames, test_frames, components=model.latent_dims)

    frames = manifest.frames(store)
    latents = encode_frames(model, frames)
    classes, centroids = class_centroids(latents, [frame.class_label for frame in frames])
    pca = fit_pca(latents) if len(latents) >= 4 and latents.shape[1] >= 3 else None
    coords = pca.project(centroids) if pca is not None else centroids[:, :3]

    result = Report(
        test_log_likelihood=evaluation.log_likelihood,
        test_mse=evaluation.mse,
        pca_baseline_mse=baseline,
        classes=classes,
        class_coords=np.asarray(coords).tolist(),
        model=model.architecture(),
        config=checkpoint.config.to_dict(),
        pca=pca,
    )
    if target is not None:
        shared = [cls for cls in classes if cls in target]
        if len(shared) >= 2:
            z = centroids[[classes.index(cls) for cls in shared]]
            t = target.coordinates_for(shared)
            with torch.no_grad():
                result.distance_kl = float(
                    reg_loss(torch.from_numpy(z), t, checkpoint.config.symmetric_norm)
                )
            result.distance_correlation = distance_correlation(z, t)
    logger.info(
        "Test MSE %.5f (PCA baseline %.5f), distance KL %.5f.",
        result.test_mse, result.pca_baseline_mse, result.distance_kl,
    )
    return result
