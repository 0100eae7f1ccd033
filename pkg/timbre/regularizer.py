"""The perceptual distance penalty between latent classes and a timbre space.

Each instrument class has one point in the latent space (the mean of
its posterior means) and one in the timbre target. Distances between
classes become probabilities on both sides: a Gaussian neighbor
distribution normalized per row in the latent space, and a Student-t
kernel normalized over the whole matrix in the target space. The
penalty is the sum of the KL divergences between the two.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import dataclass
from logging import getLogger
from typing import (
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from scipy.spatial.distance import pdist
import torch

from timbre.diff import normalized_exp
from timbre.ratings import TimbreTarget
from timbre._typing import _ClassLabel

__all__ = [
    "ClassBatch",
    "EPSILON",
    "MIN_CLASSES",
    "class_representatives",
    "distance_correlation",
    "latent_neighbor_dist",
    "reg_loss",
    "target_neighbor_dist",
]

logger = getLogger(__name__)

#: Added inside every logarithm and denominator.
EPSILON: float = 1e-12

#: Below this many classes the penalty is not computed.
MIN_CLASSES: int = 3

_ArrayOrTensor = Union[np.ndarray, torch.Tensor]


def _squared_distances(points: torch.Tensor) -> torch.Tensor:
    # Differences rather than torch.cdist: the gradient stays finite
    # for coincident points.
    differences = points[:, None, :] - points[None, :, :]
    return (differences**2).sum(dim=-1)


def _as_tensor(points: _ArrayOrTensor, like: Optional[torch.Tensor] = None) -> torch.Tensor:
    if isinstance(points, torch.Tensor):
        return points
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(points), dtype=dtype)


def latent_neighbor_dist(z: _ArrayOrTensor) -> torch.Tensor:
    """Row ``i`` is the probability that point ``i`` picks each other
    point as its neighbor, under a Gaussian with ``2 sigma^2 = 1``.

    Rows sum to one and the diagonal is zero. Coincident points give
    uniform rows.
    """
    z = _as_tensor(z)
    n = z.shape[0]
    if n < 2:
        raise ValueError("A neighbor distribution needs at least 2 points, got %d." % n)
    self_mask = torch.eye(n, dtype=torch.bool)
    return normalized_exp(-_squared_distances(z), dim=1, exclude=self_mask)


def target_neighbor_dist(
    t: _ArrayOrTensor, symmetric_norm: bool = False
) -> torch.Tensor:
    """Student-t similarities ``1 / (1 + d^2)`` between target points.

    By default the whole matrix is normalized to sum to one, so rows
    do not sum to one individually. With ``symmetric_norm`` each row
    is normalized like the latent distribution instead.
    """
    t = _as_tensor(t)
    n = t.shape[0]
    if n < 2:
        raise ValueError("A neighbor distribution needs at least 2 points, got %d." % n)
    kernel = 1.0 / (1.0 + _squared_distances(t))
    kernel = kernel.masked_fill(torch.eye(n, dtype=torch.bool), 0.0)
    if symmetric_norm:
        return kernel / (kernel.sum(dim=1, keepdim=True) + EPSILON)
    return kernel / (kernel.sum() + EPSILON)


def reg_loss(
    z_reps: _ArrayOrTensor,
    t_reps: _ArrayOrTensor,
    symmetric_norm: bool = False,
) -> torch.Tensor:
    """``sum_ij Dz_ij log(Dz_ij / Dt_ij)``, differentiable in ``z_reps``."""
    z_reps = _as_tensor(z_reps)
    t_reps = _as_tensor(t_reps, like=z_reps).detach()
    if z_reps.shape[0] != t_reps.shape[0]:
        raise ValueError(
            "%d latent classes but %d target classes."
            % (z_reps.shape[0], t_reps.shape[0])
        )
    latent = latent_neighbor_dist(z_reps)
    target = target_neighbor_dist(t_reps, symmetric_norm).to(latent.dtype)
    return (latent * torch.log((latent + EPSILON) / (target + EPSILON))).sum()


def class_representatives(
    latents: torch.Tensor,
    labels: Sequence[Optional[_ClassLabel]],
    classes: Optional[Sequence[_ClassLabel]] = None,
) -> Tuple[torch.Tensor, List[_ClassLabel]]:
    """The mean latent point of every class present in ``labels``.

    :param classes: The classes to consider, in output order. By
        default every label present, sorted.
    :return: A (classes, d_z) tensor and the classes it covers.
    """
    if len(labels) != latents.shape[0]:
        raise ValueError("%d labels for %d latent points." % (len(labels), latents.shape[0]))
    if classes is None:
        classes = sorted(set(label for label in labels if label is not None))
    present = []
    means = []
    for cls in classes:
        rows = [i for i, label in enumerate(labels) if label == cls]
        if rows:
            present.append(cls)
            means.append(latents[rows].mean(dim=0))
    if not means:
        return latents.new_zeros((0, latents.shape[1])), []
    return torch.stack(means), present


@dataclass
class ClassBatch:
    """Matching latent and target points for the classes of one batch."""

    classes: List[_ClassLabel]
    z: torch.Tensor
    targets: np.ndarray

    @classmethod
    def from_batch(
        cls,
        latents: torch.Tensor,
        labels: Sequence[Optional[_ClassLabel]],
        target: TimbreTarget,
    ) -> ClassBatch:
        """Representatives of the classes of ``target`` found in a batch.

        Labels the target does not know are left out.
        """
        z, present = class_representatives(latents, labels, target.instruments)
        return cls(present, z, target.coordinates_for(present))

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def usable(self) -> bool:
        return len(self.classes) >= MIN_CLASSES

    def loss(self, symmetric_norm: bool = False) -> torch.Tensor:
        return reg_loss(self.z, self.targets, symmetric_norm)


def distance_correlation(z_reps: _ArrayOrTensor, t_reps: _ArrayOrTensor) -> float:
    """Pearson correlation between the pairwise distances of two point sets."""
    if isinstance(z_reps, torch.Tensor):
        z_reps = z_reps.detach().cpu().numpy()
    if isinstance(t_reps, torch.Tensor):
        t_reps = t_reps.detach().cpu().numpy()
    latent = pdist(np.asarray(z_reps, dtype=np.float64))
    target = pdist(np.asarray(t_reps, dtype=np.float64))
    if len(latent) < 2 or latent.std() == 0 or target.std() == 0:
        return float("nan")
    return float(np.corrcoef(latent, target)[0, 1])
