"""Tensor helpers and the Adam optimizer used by every trained model.

Reverse-mode differentiation is torch's. This module adds the few
operations the models need with the error reporting timbre promises
(`ShapeError`, `NotScalar`, `NonFiniteGradient`), the reparameterized
Gaussian sample, and a thin `AdamState` around `torch.optim.Adam` that
skips steps with non-finite gradients.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import (
    asdict,
    dataclass,
)
from logging import getLogger
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import torch

from timbre.exceptions import (
    NonFiniteGradient,
    NotScalar,
    ShapeError,
)

__all__ = [
    "AdamConfig",
    "AdamState",
    "DTYPE",
    "adam_step",
    "backward",
    "gaussian_sample",
    "matmul",
    "normal",
    "normalized_exp",
    "to_tensor",
]

logger = getLogger(__name__)

#: Parameters and activations are 32-bit; gradient checks use 64-bit.
DTYPE: torch.dtype = torch.float32

Tensor = torch.Tensor


def to_tensor(values: Any, dtype: torch.dtype = DTYPE) -> Tensor:
    """A tensor copy of an array-like, on the CPU."""
    return torch.as_tensor(np.asarray(values), dtype=dtype).clone()


def normal(
    rng: np.random.Generator, shape: Tuple[int, ...], dtype: torch.dtype = DTYPE
) -> Tensor:
    """Standard normal variates from a seeded generator, as a tensor."""
    return torch.from_numpy(rng.standard_normal(shape)).to(dtype)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product that reports incompatible shapes as `ShapeError`."""
    if a.dim() == 0 or b.dim() == 0 or a.shape[-1] != b.shape[0 if b.dim() == 1 else -2]:
        raise ShapeError(
            "Cannot multiply %s by %s." % (tuple(a.shape), tuple(b.shape))
        )
    return a @ b


def gaussian_sample(mu: Tensor, log_var: Tensor, eps: Tensor) -> Tensor:
    """The reparameterized sample ``mu + sigma * eps``.

    Gradients flow to ``mu`` and ``log_var``; ``eps`` is the noise.
    """
    if mu.shape != log_var.shape or mu.shape != eps.shape:
        raise ShapeError(
            "mu %s, log_var %s and eps %s must have one shape."
            % (tuple(mu.shape), tuple(log_var.shape), tuple(eps.shape))
        )
    return mu + torch.exp(0.5 * log_var) * eps


def normalized_exp(
    logits: Tensor, dim: int = -1, exclude: Optional[Tensor] = None
) -> Tensor:
    """``exp(logits)`` normalized to sum to one along ``dim``.

    :param exclude: A boolean mask of entries that get probability zero
        and do not count in the normalization.
    """
    if exclude is not None:
        if exclude.shape != logits.shape:
            raise ShapeError(
                "Mask %s does not match logits %s."
                % (tuple(exclude.shape), tuple(logits.shape))
            )
        logits = logits.masked_fill(exclude, float("-inf"))
    return torch.softmax(logits, dim=dim)


def backward(loss: Tensor) -> None:
    """Accumulate the gradient of ``loss`` into every leaf that requires one."""
    if loss.numel() != 1 or loss.dim() > 1:
        raise NotScalar(
            "Can only differentiate a scalar, got shape %s." % (tuple(loss.shape),)
        )
    loss.backward()


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


class AdamState(object):
    """Adam with bias correction over a fixed list of parameters.

    The moments live in the wrapped `torch.optim.Adam`. A step whose
    gradients are not all finite is skipped and counted.
    """

    def __init__(
        self, params: Iterable[Tensor], config: AdamConfig = AdamConfig()
    ):
        self.params: List[Tensor] = list(params)
        self.config = config
        self.optimizer = torch.optim.Adam(
            self.params,
            lr=config.learning_rate,
            betas=(config.beta1, config.beta2),
            eps=config.epsilon,
        )
        self.skipped_steps = 0

    @property
    def step_count(self) -> int:
        """The number of updates applied so far."""
        for param in self.params:
            state = self.optimizer.state.get(param)
            if state and "step" in state:
                return int(state["step"])
        return 0

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=False)

    def step(self) -> None:
        """Apply one update from the gradients currently stored in the
        parameters.

        :raise NonFiniteGradient: If a gradient holds NaN or infinity.
            The parameters and moments are left untouched.
        """
        for param in self.params:
            if param.grad is not None and not torch.all(torch.isfinite(param.grad)):
                self.skipped_steps += 1
                logger.warning(
                    "Skipped an optimizer step with a non-finite gradient "
                    "(%d skipped so far).", self.skipped_steps,
                )
                self.zero_grad()
                raise NonFiniteGradient("A gradient contains NaN or infinity.")
        self.optimizer.step()

    def state_dict(self) -> Dict[str, Any]:
        return dict(
            config=asdict(self.config),
            skipped_steps=self.skipped_steps,
            optimizer=self.optimizer.state_dict(),
        )

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.skipped_steps = int(state.get("skipped_steps", 0))
        self.optimizer.load_state_dict(state["optimizer"])

    def moments(self) -> List[Tuple[Tensor, Tensor]]:
        """The first and second moment of every parameter, zeros before
        the first step.
        """
        result = []
        for param in self.params:
            state = self.optimizer.state.get(param, {})
            result.append(
                (
                    state.get("exp_avg", torch.zeros_like(param)),
                    state.get("exp_avg_sq", torch.zeros_like(param)),
                )
            )
        return result


def adam_step(
    params: Sequence[Tensor], grads: Sequence[Tensor], state: AdamState
) -> None:
    """Update ``params`` in place with explicit gradients."""
    if len(params) != len(grads):
        raise ShapeError("%d parameters but %d gradients." % (len(params), len(grads)))
    for param, grad in zip(params, grads):
        if param.shape != grad.shape:
            raise ShapeError(
                "Gradient %s does not match parameter %s."
                % (tuple(grad.shape), tuple(param.shape))
            )
        param.grad = grad.detach().clone().to(param.dtype)
    state.step()
