"""Model checkpoints.

A checkpoint file is::

    b"TSVAE1"
    uint32   length of the JSON header
    bytes    the header (UTF-8): transform spec and its digest, corpus
             normalization constant, architecture, tensor names and
             shapes, optimizer counters, epoch, stage, training config
    float32  every model tensor, in header order
    float32  the Adam moments of every parameter, if saved

All numbers are little-endian.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import dataclass
import json
from logging import getLogger
from pathlib import Path
import struct
from typing import (
    Any,
    Dict,
    List,
    Optional,
)

import numpy as np
import torch

from timbre.diff import (
    AdamConfig,
    AdamState,
)
from timbre.dsp import TransformSpec
from timbre.exceptions import (
    CorruptFile,
    PlanMismatch,
)
from timbre.vae import (
    CheckpointWriter,
    TrainConfig,
    VaeModel,
    model_from_architecture,
)
from timbre._typing import _PathLike

__all__ = [
    "Checkpoint",
    "checkpoint_writer",
]

logger = getLogger(__name__)

MAGIC: bytes = b"TSVAE1"


def _float32_bytes(tensor: torch.Tensor) -> bytes:
    return np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4").tobytes()


@dataclass
class Checkpoint:
    """A model with everything needed to use it or to resume training.

    :param spec: The transform of the frames the model was trained on.
    :param norm_constant: The corpus normalization constant, used to
        bring decoded frames back to the corpus scale.
    """

    model: VaeModel
    spec: Optional[TransformSpec]
    norm_constant: float = 1.0
    config: TrainConfig = TrainConfig()
    epoch: int = 0
    stage: int = 1
    optimizer: Optional[AdamState] = None

    def check_spec(self, spec: TransformSpec) -> None:
        """Raise `PlanMismatch` unless frames of ``spec`` fit this model."""
        if self.spec is not None and spec != self.spec:
            raise PlanMismatch(
                "The model was trained on %s frames, not %s frames."
                % (self.spec.flag, spec.flag)
            )

    def write(self, path: _PathLike) -> None:
        tensors = self.model.state_dict()
        header: Dict[str, Any] = dict(
            spec=None if self.spec is None else self.spec.to_dict(),
            spec_digest=None if self.spec is None else self.spec.digest(),
            norm_constant=float(self.norm_constant),
            architecture=self.model.architecture(),
            tensors=[[name, list(tensor.shape)] for name, tensor in tensors.items()],
            epoch=self.epoch,
            stage=self.stage,
            config=self.config.to_dict(),
            optimizer=None,
        )
        moments = []
        if self.optimizer is not None:
            header["optimizer"] = dict(
                step=self.optimizer.step_count,
                skipped_steps=self.optimizer.skipped_steps,
            )
            moments = self.optimizer.moments()
        encoded = json.dumps(header, sort_keys=True).encode("utf8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            for tensor in tensors.values():
                fh.write(_float32_bytes(tensor))
            for first, second in moments:
                fh.write(_float32_bytes(first))
                fh.write(_float32_bytes(second))
        logger.info("Wrote checkpoint %s (epoch %d).", path, self.epoch)

    @classmethod
    def read(cls, path: _PathLike, with_optimizer: bool = False) -> Checkpoint:
        with open(path, "rb") as fh:
            data = fh.read()
        if data[: len(MAGIC)] != MAGIC:
            raise CorruptFile("%s is not a timbre checkpoint." % path)
        try:
            (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
            offset = len(MAGIC) + 4
            header = json.loads(data[offset : offset + header_len].decode("utf8"))
            offset += header_len
            spec = None if header["spec"] is None else TransformSpec.from_dict(header["spec"])
            model = model_from_architecture(header["architecture"])
            config = TrainConfig.from_dict(header["config"])
        except (struct.error, ValueError, KeyError, TypeError) as e:
            raise CorruptFile("%s has an unreadable header: %s" % (path, e))

        def take(shape: List[int]) -> torch.Tensor:
            nonlocal offset
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + 4 * count
            if end > len(data):
                raise CorruptFile("%s is truncated." % path)
            values = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            offset = end
            return torch.from_numpy(values.reshape(shape).copy())

        state = {name: take(shape) for name, shape in header["tensors"]}
        try:
            model.load_state_dict(state)
        except RuntimeError as e:
            raise CorruptFile("%s does not match its architecture: %s" % (path, e))
        model.eval()

        optimizer = None
        saved = header.get("optimizer")
        if saved is not None:
            moments = [(take(list(p.shape)), take(list(p.shape))) for p in model.parameters()]
            if with_optimizer:
                optimizer = AdamState(
                    model.parameters(), AdamConfig(learning_rate=config.learning_rate)
                )
                optimizer.skipped_steps = int(saved["skipped_steps"])
                if saved["step"] > 0:
                    for param, (first, second) in zip(optimizer.params, moments):
                        optimizer.optimizer.state[param] = dict(
                            step=torch.tensor(float(saved["step"])),
                            exp_avg=first,
                            exp_avg_sq=second,
                        )
        if offset != len(data):
            raise CorruptFile("%s has %d unexpected trailing bytes." % (path, len(data) - offset))
        return cls(
            model=model,
            spec=spec,
            norm_constant=float(header["norm_constant"]),
            config=config,
            epoch=int(header["epoch"]),
            stage=int(header["stage"]),
            optimizer=optimizer,
        )


def sibling_path(path: _PathLike, tag: str) -> Path:
    """``model.ckpt`` with tag ``stage1`` becomes ``model.stage1.ckpt``."""
    path = Path(path)
    return path.with_name("%s.%s%s" % (path.stem, tag, path.suffix))


def checkpoint_writer(
    path: _PathLike,
    spec: Optional[TransformSpec],
    norm_constant: float,
    config: TrainConfig,
) -> CheckpointWriter:
    """A `timbre.vae.train` callback that writes the final model to
    ``path``, the end of stage 1 next to it with the tag ``stage1``,
    and periodic checkpoints with the tag ``last``.
    """

    def write(
        model: VaeModel, optimizer: AdamState, epoch: int, stage: int, reason: str
    ) -> Optional[str]:
        if reason == "final":
            target = Path(path)
        elif reason == "stage1":
            target = sibling_path(path, "stage1")
        else:
            target = sibling_path(path, "last")
        Checkpoint(model, spec, norm_constant, config, epoch, stage, optimizer).write(target)
        return str(target)

    return write
