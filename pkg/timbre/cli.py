"""The ``timbre`` command.

Every subcommand reads its inputs from files, writes its outputs to
files, and exits with 0 on success, 1 on a runtime failure and 2 on a
usage or configuration error. Options can also come from a TOML file
given with ``--config``::

    [transform]
    name = "nsgt-erb"

    [train]
    alpha = 0.1
    stage1_epochs = 500

    [paths]
    corpus = "work/corpus"

    [flags]
    seed = 3

Options given on the command line win over the file, and the
``TIMBRE_SEED`` environment variable wins over both for the seed.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import argparse
from dataclasses import (
    asdict,
    dataclass,
    field,
    fields,
    replace,
)
import json
import logging
import os
import re
import sys
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import torch

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from timbre import __version__
from timbre.checkpoint import (
    Checkpoint,
    checkpoint_writer,
)
from timbre.corpus import (
    CorpusManifest,
    DEFAULT_TEST_FRACTION,
    analyze_files,
    load_corpus,
    load_store,
    load_target,
    manifest_path,
    prepare,
)
from timbre.descriptors import (
    describe_frames,
    write_descriptor_csv,
)
from timbre.dsp import (
    DEFAULT_SAMPLE_RATE,
    TRANSFORM_FLAGS,
    TransformSpec,
    analyze,
    synthesize,
)
from timbre.dsp.audio import (
    load_audio,
    write_wav,
)
from timbre.dsp.frames import (
    DEFAULT_FRAME_MS,
    FrameStore,
    SpectralFrame,
    extract_frame,
)
from timbre.dsp.phase import (
    DEFAULT_ITERATIONS,
    griffin_lim,
)
from timbre.exceptions import (
    ConfigError,
    TimbreError,
    describe,
)
from timbre.fixture import fixture_gen
from timbre.latent import (
    DEFAULT_PATH_FRAME_MS,
    DEFAULT_PLANES,
    class_centroids,
    descriptor_grid,
    encode_out_of_domain,
    fit_pca,
    interpolate_path,
    render_path,
)
from timbre.ratings import (
    TimbreTarget,
    build_target,
    read_ratings_csv,
)
from timbre.regularizer import (
    latent_neighbor_dist,
    reg_loss,
    target_neighbor_dist,
)
from timbre.report import report
from timbre.synthpath import (
    NeighborhoodSpec,
    TargetSeries,
    descriptor_synth,
    render_synth,
    target_shape,
)
from timbre.vae import (
    AutoEncoder,
    TrainConfig,
    VaeModel,
    encode_frames,
    evaluate,
    train,
)
from timbre._rng import (
    seed_from_environment,
    stream,
)
from timbre._typing import _PathLike

__all__ = [
    "RunConfig",
    "build_parser",
    "main",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


@dataclass
class PathsSection:
    corpus: Optional[str] = None
    ratings: Optional[str] = None
    target: Optional[str] = None
    model: Optional[str] = None
    out: Optional[str] = None


@dataclass
class FlagsSection:
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    test_fraction: float = DEFAULT_TEST_FRACTION
    frame_ms: float = DEFAULT_FRAME_MS
    dims: int = 3
    smacof: bool = False
    impute: bool = False
    iterations: int = DEFAULT_ITERATIONS


def _section(cls: type, data: Mapping[str, Any], name: str) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError("Unknown key(s) in [%s]: %s." % (name, ", ".join(sorted(unknown))))
    return cls(**data)


@dataclass
class RunConfig:
    """The contents of a ``--config`` TOML file."""

    train: TrainConfig = field(default_factory=TrainConfig)
    transform: TransformSpec = field(default_factory=TransformSpec)
    paths: PathsSection = field(default_factory=PathsSection)
    flags: FlagsSection = field(default_factory=FlagsSection)

    SECTIONS = ("train", "transform", "paths", "flags")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        unknown = set(data) - set(cls.SECTIONS)
        if unknown:
            raise ConfigError("Unknown section(s): %s." % ", ".join(sorted(unknown)))
        transform = dict(data.get("transform", {}))
        try:
            name = transform.pop("name", None)
            spec = (
                TransformSpec.from_flag(name, **transform)
                if name is not None
                else TransformSpec(**transform)
            )
            return cls(
                train=TrainConfig.from_dict(data.get("train", {})),
                transform=spec,
                paths=_section(PathsSection, data.get("paths", {}), "paths"),
                flags=_section(FlagsSection, data.get("flags", {}), "flags"),
            )
        except TypeError as e:
            raise ConfigError(str(e))

    @classmethod
    def from_toml(cls, path: _PathLike) -> RunConfig:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as e:
            raise ConfigError("Cannot read %s: %s" % (path, e))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError("%s is not valid TOML: %s" % (path, e))
        config = cls.from_dict(data)
        config.validate()
        return config

    def validate(self) -> None:
        """Check that every input file the configuration names exists."""
        for name in ("corpus", "ratings", "target", "model"):
            path = getattr(self.paths, name)
            if path is not None and not os.path.exists(path):
                raise ConfigError("[paths] %s = %r does not exist." % (name, path))

    def to_dict(self) -> Dict[str, Any]:
        return dict(
            train=self.train.to_dict(),
            transform=self.transform.to_dict(),
            paths=asdict(self.paths),
            flags=asdict(self.flags),
        )


def _pick(value: Any, default: Any) -> Any:
    return default if value is None else value


def _required(value: Optional[str], what: str) -> str:
    if value is None:
        raise ConfigError("No %s was given." % what)
    return value


def _existing(path: Optional[str], what: str) -> str:
    path = _required(path, what)
    if not os.path.exists(path):
        raise ConfigError("%s %s does not exist." % (what.capitalize(), path))
    return path


def _seed(args: argparse.Namespace, config: RunConfig) -> int:
    return seed_from_environment(_pick(getattr(args, "seed", None), config.flags.seed))


def _spec(args: argparse.Namespace, config: RunConfig) -> TransformSpec:
    flag = getattr(args, "transform", None)
    if flag is None:
        return config.transform
    return TransformSpec.from_flag(flag)


def _write_json(path: _PathLike, data: Any) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_model(args: argparse.Namespace, config: RunConfig) -> Checkpoint:
    return Checkpoint.read(_existing(_pick(args.model, config.paths.model), "model"))


def _corpus_dir(args: argparse.Namespace, config: RunConfig) -> str:
    return _existing(_pick(getattr(args, "corpus", None), config.paths.corpus), "corpus")


def _corpus(
    args: argparse.Namespace, config: RunConfig
) -> Tuple[CorpusManifest, FrameStore, str]:
    """The frame store given with --frames, else the prepared corpus
    directory, with the directory a target is looked up in."""
    frames = getattr(args, "frames", None)
    if frames is not None:
        path = _existing(frames, "frame store")
        manifest, store = load_store(path)
        return manifest, store, os.path.dirname(path) or os.curdir
    directory = _corpus_dir(args, config)
    manifest, store = load_corpus(directory)
    return manifest, store, directory


def _target(
    args: argparse.Namespace, config: RunConfig, directory: str
) -> Optional[TimbreTarget]:
    """The target given on the command line, else the one prepared with the corpus."""
    path = _pick(getattr(args, "target", None), config.paths.target)
    if path is None:
        return load_target(directory)
    return TimbreTarget.from_json(_existing(path, "target file"))


def _frame_from_wav(
    path: str, checkpoint: Checkpoint, sample_rate: int, frame_ms: float
) -> SpectralFrame:
    """The normalized frame of a recording, as the model sees it."""
    if checkpoint.spec is None:
        raise ConfigError("The checkpoint does not record its transform.")
    audio = load_audio(_existing(path, "audio file"), sample_rate)
    frame = extract_frame(analyze(audio, checkpoint.spec), frame_ms, source_id=path)
    return SpectralFrame(frame.magnitudes / checkpoint.norm_constant, frame.spec, source_id=path)


# The subcommands.


def cmd_fixture(args: argparse.Namespace, config: RunConfig) -> int:
    out = _required(_pick(args.out, config.paths.out), "output directory")
    fixture = fixture_gen(
        out,
        n_classes=args.classes,
        samples_per_class=args.samples,
        seed=_seed(args, config),
        duration_s=args.duration,
        sample_rate=config.flags.sample_rate,
    )
    print("Wrote %d files of %d classes and %d ratings to %s."
          % (len(fixture.files), len(fixture.classes), len(fixture.ratings), out))
    return EXIT_OK


def cmd_prepare(args: argparse.Namespace, config: RunConfig) -> int:
    corpus = _existing(_pick(args.corpus, config.paths.corpus), "corpus directory")
    ratings = _pick(args.ratings, config.paths.ratings)
    if ratings is not None:
        _existing(ratings, "ratings file")
    manifest = prepare(
        corpus,
        _required(_pick(args.out, config.paths.out), "output directory"),
        _spec(args, config),
        ratings=ratings,
        seed=_seed(args, config),
        test_fraction=_pick(args.test_fraction, config.flags.test_fraction),
        sample_rate=config.flags.sample_rate,
        frame_ms=config.flags.frame_ms,
        dims=_pick(args.dims, config.flags.dims),
        config=config.to_dict(),
    )
    print("%d train / %d test frames." % (len(manifest.indices("train")), len(manifest.indices("test"))))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> int:
    spec = _spec(args, config)
    sample_rate = config.flags.sample_rate
    if len(args.inputs) > 1 and (args.magnitudes or args.griffin_lim):
        raise ConfigError("--magnitudes and --griffin-lim take a single input.")
    for path in args.inputs:
        audio = load_audio(_existing(path, "audio file"), sample_rate)
        spectrogram = analyze(audio, spec)
        rebuilt = synthesize(spectrogram)
        error = np.linalg.norm(rebuilt.samples - audio.samples) / max(
            np.linalg.norm(audio.samples), 1e-300
        )
        print("%s: %d bins x %d frames, hop %.2f ms, round-trip error %.3g"
              % (spec.flag, spectrogram.n_bins, spectrogram.n_frames, spectrogram.hop_ms, error))
    if args.out:
        manifest = analyze_files(
            args.inputs,
            args.out,
            spec,
            class_label=args.label,
            seed=_seed(args, config),
            sample_rate=sample_rate,
            frame_ms=_pick(args.frame_ms, config.flags.frame_ms),
            config=config.to_dict(),
        )
        print("Wrote %d frames to %s." % (len(manifest.entries), args.out))
    if args.magnitudes or args.griffin_lim:
        magnitudes = spectrogram.magnitude()
    if args.magnitudes:
        np.save(args.magnitudes, magnitudes.coefficients)
    if args.griffin_lim:
        errors: List[float] = []
        recovered = griffin_lim(
            magnitudes, iterations=_pick(args.iterations, config.flags.iterations), errors=errors
        )
        write_wav(args.griffin_lim, recovered)
        if errors:
            print("Griffin-Lim spectral convergence: %.4g" % errors[-1])
    return EXIT_OK


def cmd_target(args: argparse.Namespace, config: RunConfig) -> int:
    ratings = _existing(_pick(args.ratings, config.paths.ratings), "ratings file")
    target = build_target(
        read_ratings_csv(ratings),
        dims=_pick(args.dims, config.flags.dims),
        smacof=args.smacof or config.flags.smacof,
        impute=args.impute or config.flags.impute,
    )
    target.to_json(_required(_pick(args.out, config.paths.target), "target output path"))
    print("Embedded %d instruments in %d dimensions." % (len(target.instruments), target.dims))
    return EXIT_OK


_TRAIN_OVERRIDES = {
    "alpha": "alpha",
    "beta": "beta_final",
    "warmup": "warmup_epochs",
    "stage1": "stage1_epochs",
    "stage2": "stage2_epochs",
    "lr": "learning_rate",
    "batch": "batch_size",
    "latent_dims": "latent_dims",
    "hidden_units": "hidden_units",
    "hidden_layers": "hidden_layers",
    "model_kind": "model",
    "checkpoint_every": "checkpoint_every",
}


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    manifest, store, directory = _corpus(args, config)
    target = _target(args, config, directory)
    overrides = {
        option: getattr(args, name)
        for name, option in _TRAIN_OVERRIDES.items()
        if getattr(args, name) is not None
    }
    if args.symmetric_norm:
        overrides["symmetric_norm"] = True
    if args.skip_unknown_classes:
        overrides["skip_unknown_classes"] = True
    base = config.train
    if args.full_scale:
        full = TrainConfig.full_scale()
        base = replace(
            base, stage1_epochs=full.stage1_epochs, stage2_epochs=full.stage2_epochs
        )
    train_config = replace(base, seed=_seed(args, config), **overrides)

    out = _required(_pick(args.out, config.paths.model), "model output path")
    optimizer = None
    start_epoch = 0
    if args.resume:
        resumed = Checkpoint.read(_existing(args.resume, "checkpoint"), with_optimizer=True)
        resumed.check_spec(manifest.spec)
        model = resumed.model
        optimizer = resumed.optimizer
        start_epoch = resumed.epoch
    else:
        model_class = AutoEncoder if train_config.model == "ae" else VaeModel
        model = model_class(
            store.n_bins,
            train_config.latent_dims,
            train_config.hidden_units,
            train_config.hidden_layers,
            rng=stream(train_config.seed, "init"),
        )
    log = train(
        model,
        manifest.frames(store, "train"),
        target,
        train_config,
        test_frames=manifest.frames(store, "test"),
        checkpoint=checkpoint_writer(out, manifest.spec, manifest.norm_constant, train_config),
        optimizer=optimizer,
        start_epoch=start_epoch,
    )
    log_path = args.log or os.path.splitext(out)[0] + ".log.csv"
    log.write_csv(log_path)
    print("Trained %d epochs; model in %s, log in %s." % (len(log), out, log_path))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    manifest, store, _ = _corpus(args, config)
    checkpoint.check_spec(manifest.spec)
    evaluation = evaluate(
        checkpoint.model,
        manifest.frames(store, "test"),
        args.samples,
        stream(_seed(args, config), "noise"),
    )
    print("test log p(x) %s" % evaluation.log_likelihood)
    print("test MSE %s" % evaluation.mse)
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    manifest, store, directory = _corpus(args, config)
    target = _target(args, config, directory)
    result = report(checkpoint, manifest, store, target, args.samples, _seed(args, config))
    result.write(_required(_pick(args.out, config.paths.out), "report directory"))
    print("test MSE %.6g, distance KL %.6g" % (result.test_mse, result.distance_kl))
    return EXIT_OK


def cmd_project(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    manifest, store, _ = _corpus(args, config)
    checkpoint.check_spec(manifest.spec)
    frames = manifest.frames(store, "train")
    latents = encode_frames(checkpoint.model, frames)
    pca = fit_pca(latents)
    classes, centroids = class_centroids(latents, [frame.class_label for frame in frames])
    data: Dict[str, Any] = dict(
        pca=pca.to_dict(),
        classes={cls: pca.project(c).tolist() for cls, c in zip(classes, centroids)},
    )
    if args.extra:
        extra = [
            _frame_from_wav(path, checkpoint, manifest.sample_rate, manifest.frame_ms)
            for path in args.extra
        ]
        encoded = encode_out_of_domain(checkpoint.model, extra, checkpoint.spec)
        data["out_of_domain"] = dict(
            label=args.label,
            points=pca.project(encoded.latents).tolist(),
            centroid=pca.project(encoded.centroid).tolist(),
        )
    _write_json(_required(args.out, "output path"), data)
    return EXIT_OK


def _endpoint(
    value: str, checkpoint: Checkpoint, sample_rate: int, frame_ms: float
) -> np.ndarray:
    """A latent point from a JSON list of coordinates or a recording."""
    if value.lower().endswith(".json"):
        with open(_existing(value, "latent point file"), encoding="utf8") as fh:
            data = json.load(fh)
        if isinstance(data, dict):
            data = data["latent"]
        point = np.asarray(data, dtype=np.float64)
        if point.shape != (checkpoint.model.latent_dims,):
            raise ConfigError(
                "%s holds %d coordinates; the model has %d latent dimensions."
                % (value, point.size, checkpoint.model.latent_dims)
            )
        return point
    frame = _frame_from_wav(value, checkpoint, sample_rate, frame_ms)
    return encode_frames(checkpoint.model, [frame])[0]


def cmd_path(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    if args.render and checkpoint.spec is None:
        raise ConfigError("The checkpoint does not record its transform, so it cannot render.")
    sample_rate = config.flags.sample_rate
    z_a = _endpoint(args.start, checkpoint, sample_rate, config.flags.frame_ms)
    z_b = _endpoint(args.end, checkpoint, sample_rate, config.flags.frame_ms)
    path = interpolate_path(z_a, z_b, args.steps)
    if args.out:
        _write_json(args.out, dict(points=path.points().tolist()))
    if args.render:
        rendered = render_path(
            checkpoint.model,
            path,
            checkpoint.spec,
            checkpoint.norm_constant,
            sample_rate,
            frame_ms=args.frame_ms,
            iterations=_pick(args.iterations, config.flags.iterations),
            rng=stream(_seed(args, config), "phase"),
        )
        write_wav(args.render, rendered.audio)
    return EXIT_OK


def _floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("%r is not a comma-separated list of numbers." % text)


class _FloatList(argparse.Action):
    """Collects numbers given space-separated, comma-separated or both."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, [number for value in values for number in value])


_LIST_OPTIONS = ("--planes", "--range", "--span")
_NEGATIVE_LIST = re.compile(r"^-\.?\d[^,]*,")


class _Parser(argparse.ArgumentParser):
    """An argument parser that reads ``--planes -0.75,-0.45`` as a
    value of ``--planes`` rather than as an unknown option."""

    def parse_known_args(self, args=None, namespace=None):
        joined: List[str] = []
        for arg in sys.argv[1:] if args is None else args:
            if joined and joined[-1] in _LIST_OPTIONS and _NEGATIVE_LIST.match(arg):
                joined[-1] = "%s=%s" % (joined[-1], arg)
            else:
                joined.append(arg)
        return super().parse_known_args(joined, namespace)


def cmd_grid(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    manifest, store, _ = _corpus(args, config)
    checkpoint.check_spec(manifest.spec)
    if len(args.range) != 2:
        raise ConfigError("--range takes two numbers, got %d." % len(args.range))
    pca = fit_pca(encode_frames(checkpoint.model, manifest.frames(store, "train")))
    grid = descriptor_grid(
        checkpoint.model,
        pca,
        manifest.spec,
        planes=args.planes,
        size=args.size,
        value_range=(args.range[0], args.range[1]),
        sample_rate=manifest.sample_rate,
    )
    index = grid.write(_required(args.out, "output directory"))
    print("Wrote %s." % index)
    return EXIT_OK


def cmd_describe(args: argparse.Namespace, config: RunConfig) -> int:
    store_path = _existing(args.frames, "frame store")
    if os.path.exists(manifest_path(store_path)):
        manifest, store = load_store(store_path)
        frames = manifest.frames(store)
        sample_rate = manifest.sample_rate
    else:
        store = FrameStore.read(store_path)
        frames = [store.frame(i, source_id=str(i)) for i in range(len(store))]
        sample_rate = config.flags.sample_rate
    write_descriptor_csv(
        _required(args.out, "output path"), describe_frames(frames, sample_rate)
    )
    return EXIT_OK


def cmd_desc_synth(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    manifest, store, _ = _corpus(args, config)
    checkpoint.check_spec(manifest.spec)
    seed = _seed(args, config)
    origin = _frame_from_wav(args.origin, checkpoint, manifest.sample_rate, manifest.frame_ms)
    if args.target:
        target = TargetSeries.read_csv(_existing(args.target, "target file"), args.descriptor)
        if args.span:
            target = target.rescaled(args.span[0], args.span[1])
    else:
        if not args.span or len(args.span) != 2:
            raise ConfigError("Give --target or --shape with --span START,STOP.")
        target = target_shape(args.shape, args.steps, args.span[0], args.span[1], args.descriptor)
    neighborhood = NeighborhoodSpec(
        radius=args.radius, count=args.candidates, sampling=args.sampling, space=args.space
    )
    pca = fit_pca(encode_frames(checkpoint.model, manifest.frames(store, "train")))
    result = descriptor_synth(
        checkpoint.model,
        origin,
        target,
        neighborhood,
        rng=stream(seed, "synth"),
        pca=pca,
        spec=checkpoint.spec,
        sample_rate=manifest.sample_rate,
        beam_width=args.beam,
        origin_descriptor=args.origin_descriptor,
    )
    if args.trace:
        result.write_trace(args.trace)
    if args.render:
        rendered = render_synth(
            result,
            checkpoint.norm_constant,
            manifest.sample_rate,
            frame_ms=args.frame_ms,
            iterations=_pick(args.iterations, config.flags.iterations),
            rng=stream(seed, "phase"),
        )
        write_wav(args.render, rendered.audio)
    print("%d steps, tracking error %.4g" % (result.steps, result.tracking_error()))
    return EXIT_OK


def cmd_inspect_reg(args: argparse.Namespace, config: RunConfig) -> int:
    checkpoint = _load_model(args, config)
    manifest, store, directory = _corpus(args, config)
    target = _target(args, config, directory)
    if target is None:
        raise ConfigError("No timbre target was given and the corpus has none.")
    frames = manifest.frames(store)
    classes, centroids = class_centroids(
        encode_frames(checkpoint.model, frames), [frame.class_label for frame in frames]
    )
    shared = [cls for cls in classes if cls in target]
    if len(shared) < 2:
        raise ConfigError("Fewer than 2 corpus classes are in the target.")
    z = torch.from_numpy(centroids[[classes.index(cls) for cls in shared]])
    t = target.coordinates_for(shared)
    symmetric = checkpoint.config.symmetric_norm
    with torch.no_grad():
        data = dict(
            classes=shared,
            latent=latent_neighbor_dist(z).numpy().tolist(),
            target=target_neighbor_dist(t, symmetric).numpy().tolist(),
            reg=float(reg_loss(z, t, symmetric)),
        )
    if args.out:
        _write_json(args.out, data)
    print("R = %.6g over %d classes" % (data["reg"], len(shared)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="timbre", description="Perceptually-regularized generative timbre spaces."
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debugging detail.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log warnings.")
    parser.add_argument("--config", help="A TOML run configuration.")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    def command(name: str, handler: Callable[..., int], help: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help)
        sub.set_defaults(handler=handler)
        sub.add_argument("--seed", type=int, help="Root random seed.")
        return sub

    def model_and_corpus(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--model", help="A checkpoint written by `timbre train`.")
        sub.add_argument("--corpus", help="A directory written by `timbre prepare`.")
        sub.add_argument(
            "--frames", help="A frame store; wins over --corpus. Its manifest sits next to it."
        )

    transforms = sorted(TRANSFORM_FLAGS)

    sub = command("fixture", cmd_fixture, "Write a synthetic corpus and ratings.")
    sub.add_argument("--out")
    sub.add_argument("--classes", type=int, default=12)
    sub.add_argument("--samples", type=int, default=20, help="Samples per class.")
    sub.add_argument("--duration", type=float, default=0.5, help="Seconds per sample.")

    sub = command("prepare", cmd_prepare, "Build a frame store from a WAV corpus.")
    sub.add_argument("--corpus")
    sub.add_argument("--ratings")
    sub.add_argument("--out")
    sub.add_argument("--transform", choices=transforms)
    sub.add_argument("--test-fraction", type=float)
    sub.add_argument("--dims", type=int)

    sub = command("analyze", cmd_analyze, "Analyze WAV files into a frame store.")
    sub.add_argument("inputs", nargs="+", metavar="input")
    sub.add_argument("--transform", choices=transforms)
    sub.add_argument("--frame-ms", type=float, help="Where the kept frame of each file starts.")
    sub.add_argument("--label", help="Class of every input (default: its directory name).")
    sub.add_argument(
        "--out", help="Write a manifest here and the frame store next to it as .tsf."
    )
    sub.add_argument("--magnitudes", help="Save the magnitudes of one input as a .npy file.")
    sub.add_argument("--griffin-lim", help="Resynthesize the magnitudes into this WAV file.")
    sub.add_argument("--iterations", type=int)

    sub = command("target", cmd_target, "Build a timbre space from ratings.")
    sub.add_argument("--ratings")
    sub.add_argument("--out")
    sub.add_argument("--dims", type=int)
    sub.add_argument("--smacof", action="store_true")
    sub.add_argument("--impute", action="store_true")

    sub = command("train", cmd_train, "Train a model on a prepared corpus.")
    sub.add_argument("--corpus")
    sub.add_argument("--frames", help="A frame store written by `timbre analyze`.")
    sub.add_argument("--target")
    sub.add_argument("--out", help="Checkpoint path.")
    sub.add_argument("--log", help="Training log CSV (default: next to the checkpoint).")
    sub.add_argument("--resume", help="Continue from this checkpoint.")
    sub.add_argument("--alpha", type=float)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--warmup", type=int)
    sub.add_argument("--stage1", type=int)
    sub.add_argument("--stage2", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch", type=int)
    sub.add_argument("--latent-dims", type=int)
    sub.add_argument("--hidden-units", type=int)
    sub.add_argument("--hidden-layers", type=int)
    sub.add_argument("--model-kind", choices=["vae", "ae"])
    sub.add_argument("--checkpoint-every", type=int)
    sub.add_argument("--symmetric-norm", action="store_true")
    sub.add_argument("--skip-unknown-classes", action="store_true")
    sub.add_argument(
        "--full-scale",
        action="store_true",
        help="Train 5000 + 1000 epochs unless --stage1 or --stage2 say otherwise.",
    )

    sub = command("evaluate", cmd_evaluate, "Test log-likelihood and MSE.")
    model_and_corpus(sub)
    sub.add_argument("--samples", type=int, default=64)

    sub = command("report", cmd_report, "Write an evaluation bundle.")
    model_and_corpus(sub)
    sub.add_argument("--target")
    sub.add_argument("--out")
    sub.add_argument("--samples", type=int, default=64)

    sub = command("project", cmd_project, "PCA coordinates of the classes.")
    model_and_corpus(sub)
    sub.add_argument("--extra", nargs="*", help="Recordings of an unseen class.")
    sub.add_argument("--label", default="extra")
    sub.add_argument("--out")

    sub = command("path", cmd_path, "Interpolate and render a latent path.")
    sub.add_argument("--model")
    sub.add_argument("--from", dest="start", required=True, help="A WAV file or latent JSON.")
    sub.add_argument("--to", dest="end", required=True, help="A WAV file or latent JSON.")
    sub.add_argument("--steps", type=int, default=6)
    sub.add_argument("--out", help="Write the path points as JSON.")
    sub.add_argument("--render", help="Write the path audio to this WAV file.")
    sub.add_argument("--frame-ms", type=float, default=DEFAULT_PATH_FRAME_MS)
    sub.add_argument("--iterations", type=int)

    sub = command("grid", cmd_grid, "Descriptor fields over PCA planes.")
    model_and_corpus(sub)
    sub.add_argument(
        "--planes", type=_floats, nargs="+", action=_FloatList, default=list(DEFAULT_PLANES)
    )
    sub.add_argument("--size", type=int, default=50)
    sub.add_argument("--range", type=_floats, nargs="+", action=_FloatList, default=[-1.0, 1.0])
    sub.add_argument("--out")

    sub = command("describe", cmd_describe, "Descriptors of every frame of a store.")
    sub.add_argument("--frames", required=True)
    sub.add_argument("--out")

    sub = command("desc-synth", cmd_desc_synth, "Descriptor-based path synthesis.")
    model_and_corpus(sub)
    sub.add_argument("--origin", required=True, help="The starting recording.")
    sub.add_argument("--descriptor", choices=["centroid", "bandwidth"], default="centroid")
    sub.add_argument("--target", help="A CSV file with one target value per line.")
    sub.add_argument("--shape", choices=["linear", "log"], default="linear")
    sub.add_argument(
        "--span", type=_floats, nargs="+", action=_FloatList, help="START STOP in Hz."
    )
    sub.add_argument("--steps", type=int, default=32)
    sub.add_argument("--radius", type=float, default=0.1)
    sub.add_argument("--candidates", type=int, default=64)
    sub.add_argument("--sampling", choices=["gaussian", "grid"], default="gaussian")
    sub.add_argument("--space", choices=["pca", "full"], default="pca")
    sub.add_argument("--beam", type=int, default=1)
    sub.add_argument(
        "--origin-descriptor",
        choices=["input", "decoded"],
        default="input",
        help="Measure the starting descriptor on the recording or on its decoded frame.",
    )
    sub.add_argument("--render")
    sub.add_argument("--trace")
    sub.add_argument("--frame-ms", type=float, default=DEFAULT_PATH_FRAME_MS)
    sub.add_argument("--iterations", type=int)

    sub = command("inspect-reg", cmd_inspect_reg, "Neighbor distributions and R.")
    model_and_corpus(sub)
    sub.add_argument("--target")
    sub.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig.from_toml(args.config) if args.config else RunConfig()
        return args.handler(args, config)
    except ConfigError as e:
        print("timbre: %s" % describe(e), file=sys.stderr)
        return EXIT_USAGE
    except TimbreError as e:
        print("timbre: %s" % describe(e), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
