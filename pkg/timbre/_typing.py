# Custom type aliases used throughout timbre to improve readability.

import os

from typing_extensions import (
    Literal,
    TypeAlias,
)
from typing import (
    Sequence,
    Union,
)

import numpy as np
from numpy.typing import NDArray

#: A path given to any of the file readers or writers.
_PathLike: TypeAlias = Union[str, "os.PathLike[str]"]

# Aliases for signals and coefficient arrays.
#

#: A mono waveform, one float per sample.
_Samples: TypeAlias = NDArray[np.float64]

#: A (bins, frames) coefficient array. Complex for STFT and NSGT, real
#: for DCT; always real and non-negative once the phase is discarded.
_Coefficients: TypeAlias = NDArray

#: A non-negative magnitude vector or matrix.
_Magnitudes: TypeAlias = NDArray[np.floating]

#: Center frequency of each bin, in Hz.
_BinFrequencies: TypeAlias = NDArray[np.float64]

# Aliases for the enumerations used in configuration files and on the
# command line.
#

#: The family of invertible transform.
_TransformKind: TypeAlias = Literal["stft", "dct", "nsgt"]

#: The frequency scale of an NSGT.
_NsgtScale: TypeAlias = Literal["cq", "mel", "erb"]

#: The split a corpus sample belongs to.
_Split: TypeAlias = Literal["train", "test"]

#: A single-frame spectral descriptor.
_DescriptorKind: TypeAlias = Literal["centroid", "bandwidth"]

#: How path synthesis draws its candidates.
_Sampling: TypeAlias = Literal["gaussian", "grid"]

#: An instrument class, e.g. "Clarinet".
_ClassLabel: TypeAlias = str

#: A latent position, as anything numpy can turn into a vector.
_LatentLike: TypeAlias = Union[NDArray[np.floating], Sequence[float]]
