"""Phase recovery from magnitudes with the Griffin-Lim algorithm.

The algorithm only needs a transform that can project coefficients
onto the set of consistent coefficients (the analysis of their
least-squares synthesis), so the same code serves the STFT, the DCT
and every NSGT scale.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from logging import getLogger
from typing import (
    List,
    Optional,
    Union,
)

import numpy as np

from timbre.dsp import (
    AudioBuffer,
    SpectralTransform,
    Spectrogram,
    design_transform,
)
from timbre.exceptions import PlanMismatch
from timbre._typing import (
    _Coefficients,
    _Magnitudes,
)
from timbre._rng import make_rng

__all__ = [
    "DEFAULT_ITERATIONS",
    "griffin_lim",
    "spectral_convergence",
]

logger = getLogger(__name__)

DEFAULT_ITERATIONS: int = 100


def spectral_convergence(
    target: _Magnitudes,
    achieved: _Coefficients,
    weights: Optional[np.ndarray] = None,
) -> float:
    """The weighted L2 distance between ``target`` and the modulus of
    ``achieved``, relative to the weighted norm of ``target``.

    :param weights: One weight per bin (row).
    """
    target = np.asarray(target)
    difference = np.abs(achieved) - target
    if weights is None:
        weights = np.ones(target.shape[0])
    weights = np.asarray(weights)[:, None]
    reference = np.sqrt(np.sum(weights * target**2))
    error = np.sqrt(np.sum(weights * difference**2))
    if reference == 0:
        return 0.0 if error == 0 else float("inf")
    return float(error / reference)


def _unit_phase(coefficients: _Coefficients) -> _Coefficients:
    """``c / |c|``, and 1 wherever ``c`` is zero."""
    modulus = np.abs(coefficients)
    phase = np.ones_like(coefficients)
    nonzero = modulus > 0
    phase[nonzero] = coefficients[nonzero] / modulus[nonzero]
    return phase


def _initial_phase(
    shape: tuple,
    transform: SpectralTransform,
    init: Union[str, np.ndarray],
    rng: Optional[np.random.Generator],
) -> _Coefficients:
    if isinstance(init, np.ndarray):
        if init.shape != shape:
            raise PlanMismatch(
                "Initial phase has shape %r, magnitudes have %r." % (init.shape, shape)
            )
        return _unit_phase(init)
    if init == "zero":
        dtype = complex if transform.complex_coefficients else float
        return np.ones(shape, dtype=dtype)
    if init == "random":
        if rng is None:
            rng = make_rng()
        if transform.complex_coefficients:
            return np.exp(2j * np.pi * rng.random(size=shape))
        return rng.choice(np.array([-1.0, 1.0]), size=shape)
    raise ValueError("init must be 'zero', 'random' or an array, not %r." % (init,))


def griffin_lim(
    magnitudes: Spectrogram,
    transform: Optional[SpectralTransform] = None,
    iterations: int = DEFAULT_ITERATIONS,
    init: Union[str, np.ndarray] = "zero",
    rng: Optional[np.random.Generator] = None,
    momentum: float = 0.0,
    errors: Optional[List[float]] = None,
) -> AudioBuffer:
    """Find a signal whose transform has the given magnitudes.

    Every iteration projects the current coefficients onto the
    consistent set, measures the spectral convergence, and puts the
    target magnitudes back under the phase of the projection. With
    ``momentum=0`` the spectral convergence never increases.

    :param magnitudes: A magnitude-only spectrogram.
    :param transform: The transform to invert. By default it is
        designed from ``magnitudes.spec``; `Unsupported` is raised if
        no transform implements that kind.
    :param iterations: Number of projections.
    :param init: "zero" for a zero phase, "random" for a phase drawn
        from ``rng``, or an array of coefficients whose phase is used
        as the starting point.
    :param momentum: The acceleration term of fast Griffin-Lim.
    :param errors: If given, the spectral convergence of every
        iteration is appended to this list.
    :return: The synthesized signal.
    """
    if momentum < 0:
        raise ValueError("momentum must not be negative, got %r." % momentum)
    if iterations < 0:
        raise ValueError("iterations must not be negative, got %r." % iterations)
    signal_len = magnitudes.signal_len
    if transform is None:
        transform = design_transform(magnitudes.spec, magnitudes.sample_rate, signal_len)
    transform = transform.for_length(signal_len)
    if transform.spec != magnitudes.spec:
        raise PlanMismatch(
            "These magnitudes come from a %s, not a %s."
            % (magnitudes.spec.flag, transform.spec.flag)
        )

    target = np.abs(magnitudes.coefficients)
    weights = transform.coefficient_weights()
    coefficients = target * _initial_phase(target.shape, transform, init, rng)
    previous = None
    for iteration in range(iterations):
        consistent = transform.project(coefficients, signal_len)
        error = spectral_convergence(target, consistent, weights)
        if errors is not None:
            errors.append(error)
        if momentum and previous is not None:
            accelerated = consistent + momentum * (consistent - previous)
        else:
            accelerated = consistent
        previous = consistent
        coefficients = target * _unit_phase(accelerated)
    logger.debug(
        "Griffin-Lim on a %s: %d iterations.", transform.spec.flag, iterations
    )

    recovered = Spectrogram(
        coefficients=coefficients,
        spec=magnitudes.spec,
        sample_rate=magnitudes.sample_rate,
        signal_len=signal_len,
        hop=magnitudes.hop,
    )
    return transform.inverse(recovered)
