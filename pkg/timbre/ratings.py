"""Timbre spaces from pairwise dissimilarity ratings.

Ratings from several studies are brought to a common 0-1 scale, reduced
to the largest set of instruments for which every pair was rated,
averaged into one dissimilarity matrix, and embedded with classical
multidimensional scaling. The result is a `TimbreTarget`: one
coordinate vector per instrument.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from collections import defaultdict
import csv
from dataclasses import (
    dataclass,
    field,
    replace,
)
import json
from logging import getLogger
import math
from typing import (
    Any,
    Callable,
    Collection,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)
import warnings

import numpy as np
from scipy.spatial.distance import (
    pdist,
    squareform,
)
import sklearn.manifold

from timbre.exceptions import (
    ConfigError,
    DegenerateScale,
    MissingPair,
    NoCommonPairs,
    UnknownClass,
)
from timbre._rng import make_rng
from timbre._typing import (
    _ClassLabel,
    _PathLike,
)
from timbre._warnings import (
    ImputedPairWarning,
    ReducedDimensionWarning,
)

__all__ = [
    "DissimilarityMatrix",
    "RatingRecord",
    "TimbreTarget",
    "aggregate",
    "build_target",
    "mds",
    "normalize_study",
    "read_ratings_csv",
    "select_common_instruments",
    "simulate_ratings",
    "study_instruments",
    "synthetic_matrix",
    "write_ratings_csv",
]

logger = getLogger(__name__)

#: Columns of a ratings CSV file, in order.
CSV_COLUMNS = (
    "study",
    "subject",
    "instrument_a",
    "instrument_b",
    "value",
    "scale_min",
    "scale_max",
)

#: The twelve orchestral instruments rated across the classic timbre
#: studies; the default class list of the synthetic fixture.
DEFAULT_INSTRUMENTS: Tuple[str, ...] = (
    "Piano",
    "Cello",
    "Violin",
    "Flute",
    "Clarinet",
    "Trombone",
    "French Horn",
    "English Horn",
    "Oboe",
    "Saxophone",
    "Trumpet",
    "Tuba",
)

#: Eigenvalues smaller than this fraction of the largest one count as zero.
_EIGEN_TOLERANCE: float = 1e-10


@dataclass(frozen=True)
class RatingRecord:
    """One subject's dissimilarity rating of one pair of instruments."""

    study: str
    subject: str
    instrument_a: _ClassLabel
    instrument_b: _ClassLabel
    value: float
    scale_min: float = 0.0
    scale_max: float = 1.0

    def __post_init__(self) -> None:
        if self.instrument_a == self.instrument_b:
            raise ValueError(
                "A rating compares two different instruments, got %r twice."
                % self.instrument_a
            )
        if self.scale_min > self.scale_max:
            raise ValueError(
                "Scale minimum %s is above its maximum %s."
                % (self.scale_min, self.scale_max)
            )
        if not (self.scale_min <= self.value <= self.scale_max):
            raise ValueError(
                "Rating %s is outside its scale [%s, %s]."
                % (self.value, self.scale_min, self.scale_max)
            )

    @property
    def pair(self) -> FrozenSet[_ClassLabel]:
        return frozenset((self.instrument_a, self.instrument_b))


def read_ratings_csv(path: _PathLike) -> List[RatingRecord]:
    """Read ratings from a CSV file with a header row."""
    records = []
    with open(path, newline="", encoding="utf8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ConfigError(
                "%s must have the header %s." % (path, ",".join(CSV_COLUMNS))
            )
        for line_number, row in enumerate(reader, 2):
            try:
                records.append(
                    RatingRecord(
                        study=row["study"],
                        subject=row["subject"],
                        instrument_a=row["instrument_a"],
                        instrument_b=row["instrument_b"],
                        value=float(row["value"]),
                        scale_min=float(row["scale_min"]),
                        scale_max=float(row["scale_max"]),
                    )
                )
            except (TypeError, ValueError) as e:
                raise ConfigError("%s, line %d: %s" % (path, line_number, e))
    return records


def write_ratings_csv(path: _PathLike, records: Iterable[RatingRecord]) -> None:
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.study,
                    r.subject,
                    r.instrument_a,
                    r.instrument_b,
                    repr(r.value),
                    repr(r.scale_min),
                    repr(r.scale_max),
                ]
            )


def normalize_study(records: Iterable[RatingRecord]) -> List[RatingRecord]:
    """Map every rating onto [0, 1] with its study's scale.

    Records may come from several studies; all the records of one
    study must share one scale.
    """
    records = list(records)
    scales: Dict[str, Tuple[float, float]] = {}
    for record in records:
        scale = (record.scale_min, record.scale_max)
        known = scales.setdefault(record.study, scale)
        if known != scale:
            raise ValueError(
                "Study %r uses both the scale %r and the scale %r."
                % (record.study, known, scale)
            )
    for study, (low, high) in scales.items():
        if high == low:
            raise DegenerateScale(
                "Study %r has a rating scale with equal bounds (%s)." % (study, low)
            )

    return [
        replace(
            record,
            value=(record.value - record.scale_min) / (record.scale_max - record.scale_min),
            scale_min=0.0,
            scale_max=1.0,
        )
        for record in records
    ]


def study_instruments(records: Iterable[RatingRecord]) -> Dict[str, List[_ClassLabel]]:
    """The instruments of every study, in order of first appearance."""
    studies: Dict[str, List[_ClassLabel]] = {}
    for record in records:
        instruments = studies.setdefault(record.study, [])
        for name in (record.instrument_a, record.instrument_b):
            if name not in instruments:
                instruments.append(name)
    return studies


def _largest_clique(
    nodes: Sequence[_ClassLabel],
    edges: Mapping[_ClassLabel, Set[_ClassLabel]],
    admissible: Callable[[List[_ClassLabel]], bool] = lambda clique: True,
) -> List[_ClassLabel]:
    """The largest set of pairwise-connected nodes (Bron-Kerbosch with
    pivoting) among the maximal ones that are ``admissible``. Among
    cliques of equal size the one whose members come first in
    ``nodes`` wins.
    """
    rank = {node: i for i, node in enumerate(nodes)}
    best: List[_ClassLabel] = []

    def key(clique: List[_ClassLabel]) -> Tuple[int, List[int]]:
        return (-len(clique), sorted(rank[n] for n in clique))

    def expand(clique: List[_ClassLabel], candidates: Set[_ClassLabel], excluded: Set[_ClassLabel]) -> None:
        nonlocal best
        if not candidates and not excluded:
            if admissible(clique) and key(clique) < key(best):
                best = list(clique)
            return
        pivot = max(candidates | excluded, key=lambda n: len(edges[n] & candidates))
        for node in sorted(candidates - edges[pivot], key=rank.__getitem__):
            expand(clique + [node], candidates & edges[node], excluded & edges[node])
            candidates = candidates - {node}
            excluded = excluded | {node}

    expand([], set(nodes), set())
    return sorted(best, key=rank.__getitem__)


def select_common_instruments(
    studies: Mapping[str, Sequence[_ClassLabel]],
    rated_pairs: Optional[Collection[FrozenSet[_ClassLabel]]] = None,
) -> List[_ClassLabel]:
    """The largest instrument set in which every pair has a rating.

    The set is a largest clique of the graph linking every two
    instruments rated together. With more than one study it must hold
    at least one instrument that two studies share, so the set really
    combines studies; the other members may come from a single study.

    :param studies: The instruments of each study.
    :param rated_pairs: The pairs that have at least one rating. By
        default, every pair of instruments of a study is rated.
    :raise NoCommonPairs: If fewer than two instruments qualify.
    """
    if len(studies) == 0:
        raise NoCommonPairs("There are no studies to select instruments from.")
    occurrences: Dict[_ClassLabel, int] = defaultdict(int)
    nodes: List[_ClassLabel] = []
    for instruments in studies.values():
        for name in dict.fromkeys(instruments):
            occurrences[name] += 1
            if name not in nodes:
                nodes.append(name)
    shared = {name for name in nodes if occurrences[name] >= 2}

    def combines_studies(clique: List[_ClassLabel]) -> bool:
        return len(studies) == 1 or any(name in shared for name in clique)

    if rated_pairs is None:
        rated_pairs = set()
        for instruments in studies.values():
            for i, a in enumerate(instruments):
                for b in instruments[i + 1 :]:
                    if a != b:
                        rated_pairs.add(frozenset((a, b)))
    edges: Dict[_ClassLabel, Set[_ClassLabel]] = {name: set() for name in nodes}
    for pair in rated_pairs:
        if len(pair) == 2:
            a, b = tuple(pair)
            if a in edges and b in edges:
                edges[a].add(b)
                edges[b].add(a)

    selected = _largest_clique(nodes, edges, combines_studies) if nodes else []
    if len(selected) < 2:
        raise NoCommonPairs(
            "No two instruments are rated together across %d studies." % len(studies)
        )
    logger.info("Selected %d common instruments: %s", len(selected), ", ".join(selected))
    return selected


@dataclass
class DissimilarityMatrix:
    """Symmetric dissimilarities in [0, 1] between named instruments."""

    instruments: List[_ClassLabel]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.instruments = list(self.instruments)
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.instruments)
        if self.values.shape != (n, n):
            raise ValueError(
                "%d instruments need a %dx%d matrix, got %r."
                % (n, n, n, self.values.shape)
            )
        if not np.array_equal(self.values, self.values.T):
            raise ValueError("A dissimilarity matrix must be symmetric.")
        if np.any(np.diag(self.values) != 0):
            raise ValueError("A dissimilarity matrix must have a zero diagonal.")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("Dissimilarities must lie in [0, 1].")

    def __len__(self) -> int:
        return len(self.instruments)

    def to_dict(self) -> Dict[str, Any]:
        return dict(instruments=self.instruments, values=self.values.tolist())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DissimilarityMatrix:
        return cls(list(data["instruments"]), np.array(data["values"], dtype=float))


def aggregate(
    records: Iterable[RatingRecord],
    instruments: Sequence[_ClassLabel],
    impute: bool = False,
) -> DissimilarityMatrix:
    """Average the normalized ratings of every pair of ``instruments``.

    The result does not depend on the order of ``records``.

    :param impute: Fill pairs without ratings with the grand mean of
        all the ratings used, instead of raising `MissingPair`.
    """
    index = {name: i for i, name in enumerate(instruments)}
    ratings: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    for record in records:
        if record.scale_min != 0 or record.scale_max != 1:
            raise ValueError("aggregate() needs ratings normalized with normalize_study().")
        i = index.get(record.instrument_a)
        j = index.get(record.instrument_b)
        if i is None or j is None:
            continue
        ratings[(min(i, j), max(i, j))].append(record.value)

    n = len(instruments)
    values = np.zeros((n, n))
    missing = []
    for i in range(n):
        for j in range(i + 1, n):
            pair_ratings = ratings.get((i, j))
            if not pair_ratings:
                missing.append((i, j))
                continue
            values[i, j] = values[j, i] = math.fsum(pair_ratings) / len(pair_ratings)

    if missing:
        if not impute:
            i, j = missing[0]
            raise MissingPair((instruments[i], instruments[j]))
        everything = [value for pair_ratings in ratings.values() for value in pair_ratings]
        if not everything:
            raise NoCommonPairs("None of the instruments have any rating.")
        grand_mean = math.fsum(everything) / len(everything)
        for i, j in missing:
            warnings.warn(
                ImputedPairWarning.MESSAGE
                % dict(a=instruments[i], b=instruments[j], mean=grand_mean),
                ImputedPairWarning,
                stacklevel=2,
            )
            values[i, j] = values[j, i] = grand_mean
    return DissimilarityMatrix(list(instruments), values)


def double_centered(distances: np.ndarray) -> np.ndarray:
    """``-1/2 J D^2 J``, the Gram matrix of a Euclidean configuration
    with the given distances.
    """
    n = len(distances)
    centering = np.eye(n) - np.ones((n, n)) / n
    return -0.5 * centering @ (distances**2) @ centering


def eigendecompose(symmetric: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in decreasing order, with eigenvectors as columns."""
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order], eigenvectors[:, order]


def _canonical_signs(coords: np.ndarray) -> np.ndarray:
    """Flip every axis so that its first clearly nonzero loading is positive."""
    coords = coords.copy()
    for axis in range(coords.shape[1]):
        column = coords[:, axis]
        scale = np.abs(column).max()
        if scale == 0:
            continue
        first = np.flatnonzero(np.abs(column) > 1e-9 * scale)[0]
        if column[first] < 0:
            coords[:, axis] = -column
    return coords


@dataclass
class TimbreTarget:
    """A timbre space: one coordinate row per instrument.

    :param instruments: The instrument classes, in row order.
    :param coords: An (instruments, dims) array with zero column means.
    :param eigenvalues: Every eigenvalue of the double-centered matrix,
        in decreasing order.
    :param source_matrix: The dissimilarities that were embedded.
    :param provenance: How the target was built, echoed into the JSON file.
    """

    instruments: List[_ClassLabel]
    coords: np.ndarray
    eigenvalues: np.ndarray
    source_matrix: DissimilarityMatrix
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def dims(self) -> int:
        return self.coords.shape[1]

    def __contains__(self, label: object) -> bool:
        return label in self.instruments

    def coordinates_for(self, labels: Sequence[_ClassLabel]) -> np.ndarray:
        """The rows of ``labels``, in that order."""
        rows = []
        for label in labels:
            try:
                rows.append(self.instruments.index(label))
            except ValueError:
                raise UnknownClass(label)
        return self.coords[rows]

    def renamed(self, class_mapping: Mapping[_ClassLabel, _ClassLabel]) -> TimbreTarget:
        """Rename instruments (ratings names to corpus names).

        Instruments missing from ``class_mapping`` keep their name.
        """
        names = [class_mapping.get(name, name) for name in self.instruments]
        if len(set(names)) != len(names):
            raise ConfigError("The class mapping sends two instruments to one class.")
        return replace(
            self,
            instruments=names,
            source_matrix=DissimilarityMatrix(names, self.source_matrix.values),
        )

    def to_dict(self) -> Dict[str, Any]:
        return dict(
            instruments=self.instruments,
            coords=self.coords.tolist(),
            eigenvalues=self.eigenvalues.tolist(),
            matrix=self.source_matrix.to_dict(),
            provenance=self.provenance,
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TimbreTarget:
        try:
            return cls(
                instruments=list(data["instruments"]),
                coords=np.array(data["coords"], dtype=float).reshape(
                    len(data["instruments"]), -1
                ),
                eigenvalues=np.array(data["eigenvalues"], dtype=float),
                source_matrix=DissimilarityMatrix.from_dict(data["matrix"]),
                provenance=dict(data.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError("Not a timbre target: %s" % e)

    def to_json(self, path: _PathLike) -> None:
        with open(path, "w", encoding="utf8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: _PathLike) -> TimbreTarget:
        try:
            with open(path, encoding="utf8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError("%s is not valid JSON: %s" % (path, e))
        return cls.from_dict(data)


def mds(
    matrix: DissimilarityMatrix, dims: int = 3, smacof: bool = False
) -> TimbreTarget:
    """Classical (Torgerson) multidimensional scaling.

    Coordinates are the top eigenvectors of the double-centered squared
    dissimilarities, scaled by the square roots of their eigenvalues.
    Each axis is flipped so that its first nonzero loading is positive.

    If fewer than ``dims`` eigenvalues are positive, the target gets
    fewer dimensions (at least one) and a `ReducedDimensionWarning` is
    issued.

    :param smacof: Refine the classical solution by stress
        minimization, starting from it.
    """
    if dims < 1:
        raise ConfigError("A timbre target needs at least one dimension.")
    eigenvalues, eigenvectors = eigendecompose(double_centered(matrix.values))
    largest = max(eigenvalues[0], 0.0) if len(eigenvalues) else 0.0
    available = int(np.sum(eigenvalues > _EIGEN_TOLERANCE * max(largest, 1e-300)))
    if largest == 0:
        available = 0
    used = dims
    if available < dims:
        warnings.warn(
            ReducedDimensionWarning.MESSAGE % dict(available=available, requested=dims),
            ReducedDimensionWarning,
            stacklevel=2,
        )
        used = max(available, 1)

    coords = np.zeros((len(matrix), used))
    keep = min(used, available)
    coords[:, :keep] = eigenvectors[:, :keep] * np.sqrt(eigenvalues[:keep])
    if smacof and keep > 0:
        coords, stress = sklearn.manifold.smacof(
            matrix.values,
            n_components=used,
            init=coords,
            n_init=1,
            metric=True,
            random_state=0,
        )[:2]
        logger.info("SMACOF refinement reached stress %.6f.", stress)
    coords = _canonical_signs(coords - coords.mean(axis=0))
    return TimbreTarget(
        instruments=list(matrix.instruments),
        coords=coords,
        eigenvalues=eigenvalues,
        source_matrix=matrix,
        provenance=dict(dims=dims, smacof=smacof),
    )


def build_target(
    records: Iterable[RatingRecord],
    dims: int = 3,
    smacof: bool = False,
    impute: bool = False,
    class_mapping: Optional[Mapping[_ClassLabel, _ClassLabel]] = None,
) -> TimbreTarget:
    """Ratings to timbre space: normalize each study, select the common
    instruments, aggregate and embed.
    """
    normalized = normalize_study(records)
    studies = study_instruments(normalized)
    rated = {record.pair for record in normalized}
    instruments = select_common_instruments(studies, rated)
    matrix = aggregate(normalized, instruments, impute=impute)
    target = mds(matrix, dims, smacof=smacof)
    target.provenance.update(
        studies=sorted(studies), ratings=len(normalized), impute=impute
    )
    if class_mapping:
        target = target.renamed(class_mapping)
        target.provenance["class_mapping"] = dict(class_mapping)
    return target


def synthetic_matrix(
    instruments: Sequence[_ClassLabel] = DEFAULT_INSTRUMENTS,
    n_clusters: int = 3,
    spread: float = 0.35,
    seed: int = 0,
) -> DissimilarityMatrix:
    """A plausible dissimilarity matrix for instruments grouped in
    families: instruments share a random family center in 3-d and are
    scattered around it. Distances are scaled so the largest is 1.
    """
    rng = make_rng(seed)
    centers = rng.normal(size=(n_clusters, 3))
    family = np.arange(len(instruments)) % n_clusters
    points = centers[family] + spread * rng.normal(size=(len(instruments), 3))
    distances = squareform(pdist(points))
    largest = distances.max()
    if largest > 0:
        distances = distances / largest
    np.fill_diagonal(distances, 0.0)
    return DissimilarityMatrix(list(instruments), distances)


def simulate_ratings(
    matrix: DissimilarityMatrix,
    subjects: int = 10,
    scale: Tuple[float, float] = (1.0, 9.0),
    noise: float = 0.05,
    study: str = "synthetic",
    seed: int = 0,
) -> List[RatingRecord]:
    """Ratings a panel of ``subjects`` might give for ``matrix`` on a
    discrete scale: the true dissimilarity plus Gaussian noise, rounded
    to the nearest scale step.
    """
    rng = make_rng(seed)
    low, high = scale
    records = []
    n = len(matrix)
    for subject in range(subjects):
        for i in range(n):
            for j in range(i + 1, n):
                true = matrix.values[i, j] + noise * rng.normal()
                value = float(np.clip(np.round(low + true * (high - low)), low, high))
                records.append(
                    RatingRecord(
                        study=study,
                        subject="s%02d" % subject,
                        instrument_a=matrix.instruments[i],
                        instrument_b=matrix.instruments[j],
                        value=value,
                        scale_min=low,
                        scale_max=high,
                    )
                )
    return records
