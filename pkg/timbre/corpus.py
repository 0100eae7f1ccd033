"""Turning a directory of instrument recordings into a training corpus.

A corpus directory holds one subdirectory per instrument class::

    corpus/
        Clarinet/
            clarinet_gs4_ff.wav
            ...
        Flute/
            ...

`prepare` analyzes every file, keeps one frame per file, normalizes
the corpus, splits it into a training and a test set and writes a
frame store with its `CorpusManifest`.
`analyze_files` does the same for loose recordings, without a split,
and writes the manifest next to its store: the manifest of
``sines.tsf`` is ``sines.json``.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import (
    asdict,
    dataclass,
    field,
)
import json
from logging import getLogger
import math
import os
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    TransformSpec,
    analyze,
)
from timbre.dsp.audio import load_audio
from timbre.dsp.frames import (
    DEFAULT_FRAME_MS,
    FrameStore,
    SpectralFrame,
    corpus_normalize,
    extract_frame,
)
from timbre.exceptions import (
    ConfigError,
    CorruptFile,
    DegenerateCorpus,
    EmptySplit,
    TimbreError,
)
from timbre.ratings import (
    TimbreTarget,
    build_target,
    read_ratings_csv,
)
from timbre._rng import stream
from timbre._typing import (
    _ClassLabel,
    _PathLike,
    _Split,
)

__all__ = [
    "CorpusEntry",
    "CorpusManifest",
    "MANIFEST_NAME",
    "STORE_NAME",
    "TARGET_NAME",
    "analyze_files",
    "list_corpus",
    "load_corpus",
    "load_store",
    "manifest_path",
    "load_target",
    "prepare",
    "stratified_split",
]

logger = getLogger(__name__)

STORE_NAME = "frames.tsf"
MANIFEST_NAME = "manifest.json"
TARGET_NAME = "target.json"

#: Share of the corpus held out for testing.
DEFAULT_TEST_FRACTION: float = 0.1

#: `prepare` fails if more than this share of the files cannot be read.
MAX_FAILED_FRACTION: float = 0.1


@dataclass
class CorpusEntry:
    """One recording of the corpus.

    :param source: Path of the file, relative to the corpus directory.
    :param tags: Pitch, dynamics and other tags taken from the file name.
    """

    source: str
    class_label: _ClassLabel
    split: _Split = "train"
    tags: List[str] = field(default_factory=list)


@dataclass
class CorpusManifest:
    """Everything about a frame store that is not magnitudes.

    Entries are in frame-store order.
    """

    entries: List[CorpusEntry]
    spec: TransformSpec
    norm_constant: float
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    frame_ms: float = DEFAULT_FRAME_MS
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for entry in self.entries:
            if entry.split not in ("train", "test"):
                raise ConfigError("Entry %r has unknown split %r." % (entry.source, entry.split))

    @property
    def classes(self) -> List[_ClassLabel]:
        return sorted(set(entry.class_label for entry in self.entries))

    def indices(self, split: _Split) -> List[int]:
        return [i for i, entry in enumerate(self.entries) if entry.split == split]

    def frames(self, store: FrameStore, split: Optional[_Split] = None) -> List[SpectralFrame]:
        """The labeled frames of one split, or of the whole corpus."""
        if len(store) != len(self.entries):
            raise CorruptFile(
                "The frame store has %d frames but the manifest lists %d."
                % (len(store), len(self.entries))
            )
        if store.spec != self.spec:
            raise CorruptFile("The frame store and its manifest disagree on the transform.")
        indices = range(len(self.entries)) if split is None else self.indices(split)
        return [
            store.frame(i, self.entries[i].class_label, self.entries[i].source)
            for i in indices
        ]

    def to_dict(self) -> Dict[str, Any]:
        return dict(
            entries=[asdict(entry) for entry in self.entries],
            spec=self.spec.to_dict(),
            norm_constant=self.norm_constant,
            seed=self.seed,
            sample_rate=self.sample_rate,
            frame_ms=self.frame_ms,
            config=self.config,
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CorpusManifest:
        try:
            return cls(
                entries=[CorpusEntry(**entry) for entry in data["entries"]],
                spec=TransformSpec.from_dict(data["spec"]),
                norm_constant=float(data["norm_constant"]),
                seed=int(data["seed"]),
                sample_rate=int(data["sample_rate"]),
                frame_ms=float(data["frame_ms"]),
                config=dict(data.get("config", {})),
            )
        except (KeyError, TypeError) as e:
            raise CorruptFile("Incomplete corpus manifest: %s" % e)

    def write(self, path: _PathLike) -> None:
        with open(path, "w", encoding="utf8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path: _PathLike) -> CorpusManifest:
        try:
            with open(path, encoding="utf8") as fh:
                data = json.load(fh)
        except ValueError as e:
            raise CorruptFile("%s is not a JSON manifest: %s" % (path, e))
        return cls.from_dict(data)


def list_corpus(corpus_dir: _PathLike) -> List[Tuple[str, _ClassLabel, List[str]]]:
    """Every WAV file under ``corpus_dir``, as (relative path, class,
    tags), in sorted order. The class is the name of the file's
    top-level subdirectory and the tags are the underscore-separated
    parts of its name after the first.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise ConfigError("%s is not a directory." % corpus_dir)
    found = []
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() != ".wav" or not path.is_file():
            continue
        relative = path.relative_to(root)
        if len(relative.parts) < 2:
            logger.warning("Skipping %s: it is not inside a class directory.", relative)
            continue
        found.append((relative.as_posix(), relative.parts[0], path.stem.split("_")[1:]))
    return found


def stratified_split(
    labels: Sequence[_ClassLabel],
    test_fraction: float = DEFAULT_TEST_FRACTION,
    rng: Optional[np.random.Generator] = None,
) -> List[_Split]:
    """Assign every item to "train" or "test".

    The test set has ``round(n * test_fraction)`` items, shared among
    classes in proportion to their size (largest remainders first), and
    every class keeps at least one training item.
    """
    if not 0 <= test_fraction < 1:
        raise ConfigError("test_fraction must lie in [0, 1), got %r." % test_fraction)
    if rng is None:
        rng = stream(0, "split")
    classes = sorted(set(labels))
    members = {cls: [i for i, label in enumerate(labels) if label == cls] for cls in classes}
    wanted = int(round(len(labels) * test_fraction))
    shares = {cls: len(members[cls]) * test_fraction for cls in classes}
    counts = {cls: int(math.floor(shares[cls])) for cls in classes}
    by_remainder = sorted(classes, key=lambda cls: counts[cls] - shares[cls])
    for cls in by_remainder[: max(0, wanted - sum(counts.values()))]:
        counts[cls] += 1

    splits: List[_Split] = ["train"] * len(labels)
    for cls in classes:
        count = min(counts[cls], len(members[cls]) - 1)
        for i in rng.permutation(members[cls])[:count]:
            splits[int(i)] = "test"
    return splits


def _extract(
    listing: Sequence[Tuple[str, _ClassLabel, List[str]]],
    root: _PathLike,
    spec: TransformSpec,
    sample_rate: int,
    frame_ms: float,
) -> Tuple[List[SpectralFrame], List[Tuple[str, _ClassLabel, List[str]]]]:
    frames: List[SpectralFrame] = []
    kept: List[Tuple[str, _ClassLabel, List[str]]] = []
    failed: List[str] = []
    for source, class_label, tags in listing:
        try:
            audio = load_audio(os.path.join(root, source), sample_rate)
            spectrogram = analyze(audio, spec)
            frames.append(extract_frame(spectrogram, frame_ms, class_label, source))
        except (RuntimeError, OSError, ValueError, TimbreError) as e:
            logger.warning("Skipping %s: %s", source, e)
            failed.append(source)
            continue
        kept.append((source, class_label, tags))
    if len(failed) > MAX_FAILED_FRACTION * len(listing):
        raise DegenerateCorpus(
            "%d of %d files could not be used: %s"
            % (len(failed), len(listing), ", ".join(failed))
        )
    return frames, kept


def prepare(
    corpus_dir: _PathLike,
    out_dir: _PathLike,
    spec: TransformSpec,
    ratings: Optional[_PathLike] = None,
    seed: int = 0,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    frame_ms: float = DEFAULT_FRAME_MS,
    dims: int = 3,
    class_mapping: Optional[Mapping[_ClassLabel, _ClassLabel]] = None,
    config: Optional[Dict[str, Any]] = None,
) -> CorpusManifest:
    """Build a frame store, its manifest and, given ratings, a timbre target.

    Each file is resampled, analyzed, and its frame at ``frame_ms`` is
    kept. Files that cannot be read or are too short are logged and
    skipped.

    :raise DegenerateCorpus: If more than 10% of the files were skipped.
    """
    if ratings is not None and not os.path.isfile(ratings):
        raise ConfigError("Ratings file %s does not exist." % ratings)
    spec.validate(sample_rate)
    listing = list_corpus(corpus_dir)
    if not listing:
        raise DegenerateCorpus("%s holds no WAV files in class directories." % corpus_dir)

    frames, kept = _extract(listing, corpus_dir, spec, sample_rate, frame_ms)
    normalized, norm_constant = corpus_normalize(frames)
    splits = stratified_split(
        [class_label for _, class_label, _ in kept], test_fraction, stream(seed, "split")
    )
    manifest = CorpusManifest(
        entries=[
            CorpusEntry(source, class_label, split, tags)
            for (source, class_label, tags), split in zip(kept, splits)
        ],
        spec=spec,
        norm_constant=norm_constant,
        seed=seed,
        sample_rate=sample_rate,
        frame_ms=frame_ms,
        config=dict(config or {}),
    )

    os.makedirs(out_dir, exist_ok=True)
    FrameStore.from_frames(normalized, norm_constant).write(os.path.join(out_dir, STORE_NAME))
    manifest.write(os.path.join(out_dir, MANIFEST_NAME))
    if ratings is not None:
        target = build_target(read_ratings_csv(ratings), dims, class_mapping=class_mapping)
        missing = [cls for cls in target.instruments if cls not in manifest.classes]
        if missing:
            logger.warning(
                "Target classes with no recordings in the corpus: %s.", ", ".join(missing)
            )
        target.to_json(os.path.join(out_dir, TARGET_NAME))
    logger.info(
        "Prepared %d frames (%d train, %d test) of %d classes in %s.",
        len(normalized), len(manifest.indices("train")), len(manifest.indices("test")),
        len(manifest.classes), out_dir,
    )
    return manifest


def analyze_files(
    paths: Sequence[_PathLike],
    out: _PathLike,
    spec: TransformSpec,
    class_label: Optional[_ClassLabel] = None,
    seed: int = 0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    frame_ms: float = DEFAULT_FRAME_MS,
    config: Optional[Dict[str, Any]] = None,
) -> CorpusManifest:
    """Keep the frame at ``frame_ms`` of each recording and write the
    normalized frames with their manifest.

    ``out`` is the manifest path; the store goes next to it with the
    ``.tsf`` suffix. Every entry is in the "train" split. Without
    ``class_label`` each file is labeled with the name of the
    directory it sits in.

    :raise DegenerateCorpus: If more than 10% of the files were skipped.
    """
    if not paths:
        raise ConfigError("No recordings to analyze.")
    spec.validate(sample_rate)
    listing = []
    for path in paths:
        path = Path(path)
        listing.append(
            (str(path), class_label or path.resolve().parent.name, path.stem.split("_")[1:])
        )
    frames, kept = _extract(listing, "", spec, sample_rate, frame_ms)
    normalized, norm_constant = corpus_normalize(frames)
    manifest = CorpusManifest(
        entries=[CorpusEntry(source, label, "train", tags) for source, label, tags in kept],
        spec=spec,
        norm_constant=norm_constant,
        seed=seed,
        sample_rate=sample_rate,
        frame_ms=frame_ms,
        config=dict(config or {}),
    )
    directory = os.path.dirname(os.fspath(out))
    if directory:
        os.makedirs(directory, exist_ok=True)
    store_path = os.path.splitext(os.fspath(out))[0] + ".tsf"
    FrameStore.from_frames(normalized, norm_constant).write(store_path)
    manifest.write(out)
    logger.info("Analyzed %d recordings into %s.", len(normalized), store_path)
    return manifest


def manifest_path(store_path: _PathLike) -> str:
    """The manifest that goes with a frame store.

    That is ``<name>.json`` next to ``<name>.tsf`` if there is one,
    else the ``manifest.json`` `prepare` writes into the same directory.
    """
    stem, _ = os.path.splitext(os.fspath(store_path))
    if os.path.isfile(stem + ".json"):
        return stem + ".json"
    return os.path.join(os.path.dirname(os.fspath(store_path)), MANIFEST_NAME)


def load_store(store_path: _PathLike) -> Tuple[CorpusManifest, FrameStore]:
    """A frame store and the manifest that goes with it."""
    manifest = CorpusManifest.read(manifest_path(store_path))
    store = FrameStore.read(store_path)
    if len(store) != len(manifest.entries):
        raise CorruptFile(
            "The frame store has %d frames but the manifest lists %d."
            % (len(store), len(manifest.entries))
        )
    if not manifest.entries:
        raise EmptySplit("The corpus in %s is empty." % store_path)
    return manifest, store


def load_corpus(directory: _PathLike) -> Tuple[CorpusManifest, FrameStore]:
    """The manifest and frame store written by `prepare`."""
    return load_store(os.path.join(directory, STORE_NAME))


def load_target(directory: _PathLike) -> Optional[TimbreTarget]:
    path = os.path.join(directory, TARGET_NAME)
    if not os.path.isfile(path):
        return None
    return TimbreTarget.from_json(path)
