"""The variational auto-encoder over spectral frames, and its training.

Training runs in two stages. The first minimizes the negative ELBO,
``recon + beta * KL``, with beta ramping up linearly during a warm-up.
The second adds the perceptual penalty ``alpha * R`` (see
`timbre.regularizer`) computed on stratified batches, with beta held
at its final value.
"""
from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from dataclasses import (
    asdict,
    dataclass,
    field,
    fields,
)
import csv
from logging import getLogger
import math
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
from sklearn.decomposition import PCA
import torch
from torch import nn
from torch.nn import functional as F

from timbre.diff import (
    DTYPE,
    AdamConfig,
    AdamState,
    backward,
    gaussian_sample,
    normal,
    to_tensor,
)
from timbre.dsp import TransformSpec
from timbre.dsp.frames import SpectralFrame
from timbre.exceptions import (
    ConfigError,
    EmptySplit,
    NonFiniteGradient,
    NonFiniteInput,
    ShapeError,
    TrainingDiverged,
    UnknownClass,
)
from timbre.ratings import TimbreTarget
from timbre.regularizer import (
    ClassBatch,
    class_representatives,
    reg_loss,
)
from timbre._rng import (
    epoch_stream,
    stream,
)
from timbre._typing import (
    _ClassLabel,
    _PathLike,
)

__all__ = [
    "AutoEncoder",
    "EpochMetrics",
    "Evaluation",
    "TrainConfig",
    "TrainingLog",
    "VaeModel",
    "corpus_reg",
    "elbo_loss",
    "encode_frames",
    "evaluate",
    "kl_divergence",
    "pca_baseline_mse",
    "sample_prior",
    "stratified_batches",
    "train",
    "warmup_beta",
]

logger = getLogger(__name__)

_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a training run.

    The epoch counts default to a desk-scale schedule; `full_scale`
    restores the full one.

    :param model: "vae", or "ae" for the deterministic auto-encoder baseline.
    :param checkpoint_every: Write a checkpoint every this many epochs
        (0 for the stage boundaries only).
    :param eval_every: Compute test metrics every this many epochs, and
        always on the last epoch of each stage.
    :param eval_samples: Importance samples per datum for log p(x).
    :param skip_unknown_classes: Leave frames whose class the target
        does not know out of the penalty instead of failing.
    """

    beta_final: float = 2.0
    warmup_epochs: int = 100
    alpha: float = 0.1
    stage1_epochs: int = 500
    stage2_epochs: int = 100
    learning_rate: float = 1e-4
    batch_size: int = 64
    seed: int = 0
    latent_dims: int = 64
    hidden_units: int = 2000
    hidden_layers: int = 3
    model: str = "vae"
    symmetric_norm: bool = False
    checkpoint_every: int = 0
    eval_every: int = 10
    eval_samples: int = 64
    skip_unknown_classes: bool = False

    def __post_init__(self) -> None:
        for name in ("warmup_epochs", "stage1_epochs", "stage2_epochs", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError("%s must not be negative." % name)
        for name in ("batch_size", "latent_dims", "hidden_units", "hidden_layers",
                     "eval_every", "eval_samples"):
            if getattr(self, name) <= 0:
                raise ConfigError("%s must be positive." % name)
        if self.stage1_epochs + self.stage2_epochs == 0:
            raise ConfigError("A training run needs at least one epoch.")
        if self.beta_final < 0 or self.alpha < 0:
            raise ConfigError("beta_final and alpha must not be negative.")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive.")
        if self.model not in ("vae", "ae"):
            raise ConfigError("model must be 'vae' or 'ae', not %r." % self.model)

    @classmethod
    def full_scale(cls, **overrides: Any) -> TrainConfig:
        values: Dict[str, Any] = dict(stage1_epochs=5000, stage2_epochs=1000)
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError("Unknown training option(s): %s." % ", ".join(sorted(unknown)))
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e))


def _uniform_(tensor: torch.Tensor, bound: float, rng: np.random.Generator) -> None:
    values = rng.uniform(-bound, bound, size=tuple(tensor.shape))
    with torch.no_grad():
        tensor.copy_(torch.from_numpy(values))


class VaeModel(nn.Module):
    """A mean-field Gaussian encoder and a softplus decoder, both ReLU
    multilayer perceptrons.

    :param input_dims: F, the length of a spectral frame.
    :param latent_dims: Dimensionality of the latent space.
    :param hidden_units: Width of every hidden layer.
    :param hidden_layers: Number of hidden layers on each side.
    :param rng: Draws the initial weights (He-uniform, zero biases).
    """

    #: False for models without a posterior variance.
    variational: bool = True
    KIND: str = "vae"

    def __init__(
        self,
        input_dims: int,
        latent_dims: int = 64,
        hidden_units: int = 2000,
        hidden_layers: int = 3,
        rng: Optional[np.random.Generator] = None,
        dtype: torch.dtype = DTYPE,
    ):
        super(VaeModel, self).__init__()
        self.input_dims = input_dims
        self.latent_dims = latent_dims
        self.hidden_units = hidden_units
        self.hidden_layers = hidden_layers

        def stack(first: int) -> nn.Sequential:
            layers: List[nn.Module] = []
            width = first
            for _ in range(hidden_layers):
                layers += [nn.Linear(width, hidden_units, dtype=dtype), nn.ReLU()]
                width = hidden_units
            return nn.Sequential(*layers)

        self.encoder = stack(input_dims)
        self.mu_head = nn.Linear(hidden_units, latent_dims, dtype=dtype)
        self.log_var_head = nn.Linear(hidden_units, latent_dims, dtype=dtype)
        self.decoder = stack(latent_dims)
        self.output = nn.Linear(hidden_units, input_dims, dtype=dtype)

        if rng is None:
            rng = stream(0, "init")
        for module in self.modules():
            if isinstance(module, nn.Linear):
                _uniform_(module.weight, math.sqrt(6.0 / module.in_features), rng)
                nn.init.zeros_(module.bias)

    @property
    def dtype(self) -> torch.dtype:
        return self.output.weight.dtype

    def architecture(self) -> Dict[str, Any]:
        return dict(
            kind=self.KIND,
            input_dims=self.input_dims,
            latent_dims=self.latent_dims,
            hidden_units=self.hidden_units,
            hidden_layers=self.hidden_layers,
        )

    def _check(self, values: torch.Tensor, width: int, what: str) -> torch.Tensor:
        values = torch.as_tensor(values, dtype=self.dtype)
        if values.dim() == 1:
            values = values[None, :]
        if values.dim() != 2 or values.shape[1] != width:
            raise ShapeError(
                "%s must have %d columns, got shape %s." % (what, width, tuple(values.shape))
            )
        if not torch.all(torch.isfinite(values)):
            raise NonFiniteInput("%s contains NaN or infinity." % what)
        return values

    def encode(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """The posterior mean and log-variance of every frame of a batch."""
        hidden = self.encoder(self._check(x, self.input_dims, "Input frames"))
        return self.mu_head(hidden), self.log_var_head(hidden)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """Non-negative frames for a batch of latent points."""
        hidden = self.decoder(self._check(z, self.latent_dims, "Latent points"))
        return F.softplus(self.output(hidden))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Reconstruct frames through their posterior means."""
        mu, _ = self.encode(x)
        return self.decode(mu)


class AutoEncoder(VaeModel):
    """The same networks trained as a plain auto-encoder: the latent
    point is the encoder mean, and there is no KL term.
    """

    variational = False
    KIND = "ae"


def model_from_architecture(
    architecture: Mapping[str, Any],
    rng: Optional[np.random.Generator] = None,
    dtype: torch.dtype = DTYPE,
) -> VaeModel:
    kinds = {VaeModel.KIND: VaeModel, AutoEncoder.KIND: AutoEncoder}
    try:
        model_class = kinds[architecture["kind"]]
        return model_class(
            int(architecture["input_dims"]),
            int(architecture["latent_dims"]),
            int(architecture["hidden_units"]),
            int(architecture["hidden_layers"]),
            rng=rng,
            dtype=dtype,
        )
    except KeyError as e:
        raise ConfigError("Incomplete model architecture, missing %s." % e)


def kl_divergence(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(q(z|x) || N(0, I)) per datum, averaged over the batch."""
    per_datum = 0.5 * (mu**2 + torch.exp(log_var) - log_var - 1.0).sum(dim=1)
    return per_datum.mean()


def _elbo_terms(
    model: VaeModel, x: torch.Tensor, eps: Optional[torch.Tensor]
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Reconstruction term, KL term and posterior means of a batch."""
    x = model._check(x, model.input_dims, "Input frames")
    mu, log_var = model.encode(x)
    if model.variational:
        if eps is None:
            raise ValueError("A variational model needs noise to sample its posterior.")
        z = gaussian_sample(mu, log_var, eps.to(mu.dtype))
        kl = kl_divergence(mu, log_var)
    else:
        z = mu
        kl = mu.new_zeros(())
    x_hat = model.decode(z)
    recon = 0.5 * ((x - x_hat) ** 2).sum(dim=1).mean()
    return recon, kl, mu


def elbo_loss(
    model: VaeModel,
    x: torch.Tensor,
    beta: float,
    rng: Optional[np.random.Generator] = None,
    eps: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """The negative ELBO of a batch, with a unit-variance Gaussian decoder.

    One reparameterized sample is drawn per datum, with noise ``eps``
    or, if it is not given, from ``rng``. The constant of the Gaussian
    log-likelihood is dropped.

    :return: ``(recon + beta * kl, recon, kl)``, each averaged over the batch.
    """
    if beta < 0:
        raise ValueError("beta must not be negative, got %r." % beta)
    if eps is None and rng is not None and model.variational:
        eps = normal(rng, (len(x), model.latent_dims), model.dtype)
    recon, kl, _ = _elbo_terms(model, x, eps)
    return recon + beta * kl, recon, kl


def warmup_beta(epoch: int, config: TrainConfig) -> float:
    """Beta grows linearly from 0 to ``beta_final`` over the warm-up epochs."""
    if epoch < 0:
        raise ValueError("epoch must not be negative, got %r." % epoch)
    if config.warmup_epochs == 0:
        return config.beta_final
    return config.beta_final * min(1.0, epoch / config.warmup_epochs)


def sample_prior(model: VaeModel, n: int, rng: np.random.Generator) -> torch.Tensor:
    """Decode ``n`` draws from the standard normal prior."""
    with torch.no_grad():
        return model.decode(normal(rng, (n, model.latent_dims), model.dtype))


def _stack(frames: Sequence[SpectralFrame]) -> np.ndarray:
    if len(frames) == 0:
        raise EmptySplit("No frames were given.")
    return np.stack([frame.magnitudes for frame in frames])


def encode_frames(model: VaeModel, frames: Sequence[SpectralFrame]) -> np.ndarray:
    """The posterior mean of every frame, as a (frames, d_z) array."""
    with torch.no_grad():
        mu, _ = model.encode(to_tensor(_stack(frames), model.dtype))
    return mu.cpu().numpy().astype(np.float64)


@dataclass
class Evaluation:
    """Test-set metrics.

    :param log_likelihood: Mean importance-sampled log p(x); NaN for
        models without a posterior.
    :param mse: Mean squared reconstruction error through the posterior
        mean, summed over bins and averaged over frames.
    """

    log_likelihood: float
    mse: float


def _log_likelihood(
    model: VaeModel, x: torch.Tensor, samples: int, rng: np.random.Generator
) -> float:
    mu, log_var = model.encode(x)
    std = torch.exp(0.5 * log_var)
    n, d = mu.shape
    weights = []
    for _ in range(samples):
        eps = normal(rng, (n, d), model.dtype)
        z = mu + std * eps
        x_hat = model.decode(z)
        log_px_z = -0.5 * ((x - x_hat) ** 2).sum(dim=1) - 0.5 * x.shape[1] * _LOG_2PI
        log_pz = -0.5 * (z**2).sum(dim=1) - 0.5 * d * _LOG_2PI
        log_qz = (-0.5 * eps**2 - 0.5 * log_var).sum(dim=1) - 0.5 * d * _LOG_2PI
        weights.append(log_px_z + log_pz - log_qz)
    stacked = torch.stack(weights).to(torch.float64)
    per_datum = torch.logsumexp(stacked, dim=0) - math.log(samples)
    return float(per_datum.mean())


def evaluate(
    model: VaeModel,
    test_frames: Sequence[SpectralFrame],
    samples: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> Evaluation:
    """Test log-likelihood and reconstruction error of a model."""
    x = to_tensor(_stack(test_frames), model.dtype)
    if rng is None:
        rng = stream(0, "noise")
    with torch.no_grad():
        mu, _ = model.encode(x)
        mse = float(((x - model.decode(mu)) ** 2).sum(dim=1).mean())
        ll = _log_likelihood(model, x, samples, rng) if model.variational else float("nan")
    return Evaluation(log_likelihood=ll, mse=mse)


def pca_baseline_mse(
    train_frames: Sequence[SpectralFrame],
    test_frames: Sequence[SpectralFrame],
    components: int = 64,
) -> float:
    """Test reconstruction error of a linear PCA model with at most
    ``components`` components, fitted on the training frames.
    """
    train_x = _stack(train_frames)
    test_x = _stack(test_frames)
    components = min(components, len(train_x), train_x.shape[1])
    pca = PCA(n_components=components, svd_solver="full").fit(train_x)
    rebuilt = pca.inverse_transform(pca.transform(test_x))
    return float(((test_x - rebuilt) ** 2).sum(axis=1).mean())


def corpus_reg(
    model: VaeModel,
    frames: Sequence[SpectralFrame],
    target: TimbreTarget,
    symmetric_norm: bool = False,
) -> float:
    """The penalty computed on full-corpus class means of the posterior means.

    Classes the target does not know are ignored. NaN if fewer than two
    classes remain.
    """
    latents = torch.from_numpy(encode_frames(model, frames))
    labels = [frame.class_label for frame in frames]
    z, present = class_representatives(latents, labels, target.instruments)
    if len(present) < 2:
        return float("nan")
    with torch.no_grad():
        return float(reg_loss(z, target.coordinates_for(present), symmetric_norm))


def stratified_batches(
    labels: Sequence[Optional[_ClassLabel]],
    batch_size: int,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Split frame indices into batches that each hold every class.

    Each class is shuffled and dealt round-robin over the batches from
    a random starting batch. A class with fewer frames than there are
    batches is repeated, so every batch still sees it.
    """
    n = len(labels)
    n_batches = max(1, math.ceil(n / batch_size))
    members: Dict[Any, List[int]] = {}
    for i, label in enumerate(labels):
        members.setdefault(label, []).append(i)
    batches: List[List[int]] = [[] for _ in range(n_batches)]
    for label in sorted(members, key=lambda label: (label is None, str(label))):
        indices = rng.permutation(members[label])
        if label is not None and len(indices) < n_batches:
            indices = np.resize(indices, n_batches)
        start = int(rng.integers(n_batches))
        for k, index in enumerate(indices):
            batches[(start + k) % n_batches].append(int(index))
    return [np.array(batch, dtype=np.int64) for batch in batches if batch]


def _shuffled_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


@dataclass
class EpochMetrics:
    """One row of the training log."""

    epoch: int
    stage: int
    beta: float
    alpha: float
    recon: float
    kl: float
    reg: float = float("nan")
    test_recon: float = float("nan")
    test_ll: float = float("nan")

    COLUMNS = ("epoch", "stage", "beta", "alpha", "recon", "kl", "reg", "test_recon", "test_ll")

    def row(self) -> List[str]:
        values = []
        for column in self.COLUMNS:
            value = getattr(self, column)
            if isinstance(value, float):
                values.append("" if math.isnan(value) else repr(value))
            else:
                values.append(str(value))
        return values


@dataclass
class TrainingLog:
    rows: List[EpochMetrics] = field(default_factory=list)

    def append(self, metrics: EpochMetrics) -> None:
        self.rows.append(metrics)

    def __len__(self) -> int:
        return len(self.rows)

    def stage(self, stage: int) -> List[EpochMetrics]:
        return [row for row in self.rows if row.stage == stage]

    def write_csv(self, path: _PathLike) -> None:
        with open(path, "w", newline="", encoding="utf8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(EpochMetrics.COLUMNS)
            for metrics in self.rows:
                writer.writerow(metrics.row())


#: Called after every epoch with the model, the optimizer, the epoch,
#: the stage, and the reason ("periodic", "stage1" or "final"). Returns
#: the path written, if any.
CheckpointWriter = Callable[[VaeModel, AdamState, int, int, str], Optional[str]]


def _check_labels(
    frames: Sequence[SpectralFrame], target: Optional[TimbreTarget], config: TrainConfig
) -> None:
    if config.alpha == 0 or config.stage2_epochs == 0:
        return
    if target is None:
        raise ConfigError("Training with alpha > 0 needs a timbre target.")
    if config.skip_unknown_classes:
        return
    for frame in frames:
        if frame.class_label is not None and frame.class_label not in target:
            raise UnknownClass(str(frame.class_label))


def train(
    model: VaeModel,
    frames: Sequence[SpectralFrame],
    target: Optional[TimbreTarget],
    config: TrainConfig,
    test_frames: Optional[Sequence[SpectralFrame]] = None,
    checkpoint: Optional[CheckpointWriter] = None,
    optimizer: Optional[AdamState] = None,
    start_epoch: int = 0,
) -> TrainingLog:
    """Train ``model`` in place and return the per-epoch metrics.

    Stage 1 runs ``stage1_epochs`` epochs of ``recon + beta * KL`` with
    beta warming up. Stage 2 runs ``stage2_epochs`` epochs of
    ``recon + beta_final * KL + alpha * R`` on stratified batches; a
    batch with fewer than three target classes gets no penalty.

    Each epoch draws its batch order and noise from streams of its own,
    so resuming with the saved model and optimizer after epoch ``k``
    matches a run that was never interrupted. The logged recon and KL
    are averaged over the batches whose update was applied.

    :param start_epoch: Resume after this many completed epochs.
    :raise TrainingDiverged: If the loss stops being finite.
    """
    _check_labels(frames, target, config)
    x_all = to_tensor(_stack(frames), model.dtype)
    if x_all.shape[1] != model.input_dims:
        raise ShapeError(
            "The model takes %d bins, the frames have %d." % (model.input_dims, x_all.shape[1])
        )
    labels = [frame.class_label for frame in frames]
    known = [label if target is not None and label in target else None for label in labels]

    if optimizer is None:
        optimizer = AdamState(
            model.parameters(), AdamConfig(learning_rate=config.learning_rate)
        )
    log = TrainingLog()
    last_checkpoint: Optional[str] = None
    total = config.stage1_epochs + config.stage2_epochs

    for epoch in range(start_epoch, total):
        stage = 1 if epoch < config.stage1_epochs else 2
        batch_rng = epoch_stream(config.seed, "batches", epoch)
        noise_rng = epoch_stream(config.seed, "noise", epoch)
        if stage == 1:
            beta = warmup_beta(epoch, config)
            alpha = 0.0
            batches = _shuffled_batches(len(x_all), config.batch_size, batch_rng)
        else:
            beta = config.beta_final
            alpha = config.alpha
            batches = stratified_batches(known, config.batch_size, batch_rng)

        model.train()
        sums = np.zeros(2)
        stepped = 0
        skipped_reg = 0
        for batch in batches:
            x = x_all[torch.from_numpy(batch)]
            eps = normal(noise_rng, (len(batch), model.latent_dims), model.dtype)
            recon, kl, mu = _elbo_terms(model, x, eps)
            loss = recon + beta * kl
            if alpha > 0 and target is not None:
                class_batch = ClassBatch.from_batch(mu, [known[i] for i in batch], target)
                if class_batch.usable:
                    loss = loss + alpha * class_batch.loss(config.symmetric_norm)
                else:
                    skipped_reg += 1
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch + 1, last_checkpoint)
            optimizer.zero_grad()
            backward(loss)
            try:
                optimizer.step()
            except NonFiniteGradient:
                continue
            sums += (float(recon), float(kl))
            stepped += 1
        if skipped_reg:
            logger.warning(
                "Epoch %d: %d batch(es) had fewer than 3 target classes; "
                "the penalty was skipped for them.", epoch + 1, skipped_reg,
            )

        model.eval()
        means = sums / stepped if stepped else np.full(2, np.nan)
        metrics = EpochMetrics(
            epoch=epoch + 1,
            stage=stage,
            beta=beta,
            alpha=alpha,
            recon=float(means[0]),
            kl=float(means[1]),
        )
        if target is not None:
            metrics.reg = corpus_reg(model, frames, target, config.symmetric_norm)
        last_of_stage = epoch + 1 in (config.stage1_epochs, total)
        if test_frames and ((epoch + 1) % config.eval_every == 0 or last_of_stage):
            evaluation = evaluate(
                model, test_frames, config.eval_samples, stream(config.seed, "noise")
            )
            metrics.test_recon = evaluation.mse
            metrics.test_ll = evaluation.log_likelihood
        log.append(metrics)
        logger.info(
            "Epoch %d (stage %d): recon %.5f, kl %.5f, reg %.5f",
            metrics.epoch, stage, metrics.recon, metrics.kl, metrics.reg,
        )

        if checkpoint is not None:
            reason = None
            if epoch + 1 == total:
                reason = "final"
            elif epoch + 1 == config.stage1_epochs:
                reason = "stage1"
            elif config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                reason = "periodic"
            if reason is not None:
                written = checkpoint(model, optimizer, epoch + 1, stage, reason)
                if written is not None:
                    last_checkpoint = written
    return log
