"""Define some custom warnings."""


class ReducedDimensionWarning(UserWarning):
    """The warning issued when classical MDS finds fewer positive
    eigenvalues than the number of dimensions requested, so the
    target space is embedded in fewer dimensions.
    """

    MESSAGE: str = """The dissimilarity matrix only supports %(available)d positive dimension(s), but %(requested)d were requested. The target space will have %(available)d dimension(s).

This usually means the ratings are far from Euclidean, or that there are very few instruments. To make this warning go away, ask for fewer dimensions with --dims.
"""


class RankDeficientWarning(UserWarning):
    """The warning issued when the latent points given to PCA span
    fewer than three dimensions. The missing axes are completed with
    arbitrary orthonormal directions.
    """

    MESSAGE: str = """The latent points only span %(rank)d dimension(s); the remaining principal axes carry no variance and were completed arbitrarily.
"""


class NonPhysicalDescriptorWarning(UserWarning):
    """The warning issued when spectral descriptors are computed on DCT
    bins. DCT coefficients are not a frequency distribution, so the
    values are reported in Hz but have no physical meaning.
    """

    MESSAGE: str = """Descriptors computed on DCT bins are not physical frequencies. They are reported for completeness only.

If you want to compare descriptors across transforms, use an STFT or NSGT representation. To get rid of this warning, run:

    from timbre import NonPhysicalDescriptorWarning
    import warnings

    warnings.filterwarnings("ignore", category=NonPhysicalDescriptorWarning)
"""


class ImputedPairWarning(UserWarning):
    """The warning issued when a missing instrument pair was filled
    with the grand mean of all ratings instead of raising `MissingPair`.
    """

    MESSAGE: str = """No rating was found for the pair %(a)r / %(b)r. It was filled in with the grand mean %(mean).4f because imputation was requested; the resulting target space may be distorted.
"""
