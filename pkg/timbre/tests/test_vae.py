"""Tests of the model, its losses and the two-stage training loop."""

import copy
import math

import numpy as np
import pytest
import torch

from timbre.diff import (
    AdamConfig,
    AdamState,
)
from timbre.exceptions import (
    ConfigError,
    EmptySplit,
    NonFiniteGradient,
    NonFiniteInput,
    ShapeError,
    TrainingDiverged,
    UnknownClass,
)
from timbre.tests import (
    class_frames,
    micro_config,
    micro_model,
    small_target,
    trained_on_fixture,
)
from timbre.vae import (
    AutoEncoder,
    EpochMetrics,
    TrainConfig,
    TrainingLog,
    corpus_reg,
    elbo_loss,
    encode_frames,
    evaluate,
    kl_divergence,
    model_from_architecture,
    pca_baseline_mse,
    sample_prior,
    stratified_batches,
    train,
    warmup_beta,
)
from timbre._rng import make_rng


class TestVaeModel(object):
    def test_shapes(self):
        model = micro_model()
        mu, log_var = model.encode(torch.zeros(3, 8))
        assert mu.shape == (3, 2)
        assert log_var.shape == (3, 2)
        assert model.decode(mu).shape == (3, 8)
        assert model(torch.zeros(8)).shape == (1, 8)

    def test_decoder_output_is_non_negative(self):
        model = micro_model()
        z = torch.linspace(-20, 20, 40, dtype=torch.float64).reshape(20, 2)
        assert torch.all(model.decode(z) >= 0)

    def test_rejects_wrong_width(self):
        model = micro_model()
        with pytest.raises(ShapeError):
            model.encode(torch.zeros(3, 7))
        with pytest.raises(ShapeError):
            model.decode(torch.zeros(3, 3))

    def test_rejects_non_finite_input(self):
        x = torch.zeros(2, 8)
        x[1, 3] = float("nan")
        with pytest.raises(NonFiniteInput):
            micro_model().encode(x)

    def test_seeded_initialization(self):
        first = micro_model(seed=4).state_dict()
        second = micro_model(seed=4).state_dict()
        third = micro_model(seed=5).state_dict()
        for name in first:
            assert torch.equal(first[name], second[name])
        assert not torch.equal(first["output.weight"], third["output.weight"])

    def test_architecture(self):
        model = micro_model()
        rebuilt = model_from_architecture(model.architecture())
        assert rebuilt.architecture() == model.architecture()
        assert type(rebuilt) is type(model)

        ae = model_from_architecture(dict(model.architecture(), kind="ae"))
        assert isinstance(ae, AutoEncoder)
        assert not ae.variational

    def test_incomplete_architecture(self):
        with pytest.raises(ConfigError):
            model_from_architecture(dict(kind="vae", input_dims=8))


class TestLosses(object):
    def test_kl_of_the_prior_is_zero(self):
        zeros = torch.zeros(4, 3)
        assert kl_divergence(zeros, zeros).item() == 0.0

    def test_kl_is_a_batch_mean(self):
        mu = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
        assert kl_divergence(mu, torch.zeros(2, 2)).item() == pytest.approx(0.25)

    def test_elbo_combines_its_terms(self):
        model = micro_model()
        x = torch.from_numpy(make_rng(1).uniform(0, 1, (5, 8)))
        eps = torch.zeros(5, 2, dtype=torch.float64)
        total, recon, kl = elbo_loss(model, x, beta=2.0, eps=eps)
        assert total.item() == pytest.approx(recon.item() + 2.0 * kl.item())
        assert recon.item() > 0
        assert kl.item() >= 0

    def test_elbo_is_differentiable(self):
        model = micro_model()
        x = torch.from_numpy(make_rng(1).uniform(0, 1, (5, 8)))
        total, _, _ = elbo_loss(model, x, beta=1.0, rng=make_rng(2))
        total.backward()
        assert all(p.grad is not None for p in model.parameters())

    def test_variational_model_needs_noise(self):
        with pytest.raises(ValueError):
            elbo_loss(micro_model(), torch.zeros(2, 8), beta=1.0)

    def test_negative_beta(self):
        with pytest.raises(ValueError):
            elbo_loss(micro_model(), torch.zeros(2, 8), beta=-1.0, rng=make_rng(0))

    def test_autoencoder_has_no_kl(self):
        model = AutoEncoder(8, 2, 16, 1, rng=make_rng(0), dtype=torch.float64)
        total, recon, kl = elbo_loss(model, torch.ones(3, 8), beta=5.0)
        assert kl.item() == 0.0
        assert total.item() == recon.item()

    def test_warmup_beta(self):
        config = micro_config(warmup_epochs=4, beta_final=2.0)
        assert [warmup_beta(e, config) for e in range(6)] == [0.0, 0.5, 1.0, 1.5, 2.0, 2.0]
        assert warmup_beta(0, micro_config(warmup_epochs=0)) == 1.0
        with pytest.raises(ValueError):
            warmup_beta(-1, config)


class TestInference(object):
    def test_sample_prior(self):
        decoded = sample_prior(micro_model(), 5, make_rng(0))
        assert decoded.shape == (5, 8)
        assert torch.all(decoded >= 0)

    def test_encode_frames(self):
        latents = encode_frames(micro_model(), class_frames())
        assert latents.shape == (24, 2)
        assert latents.dtype == np.float64
        with pytest.raises(EmptySplit):
            encode_frames(micro_model(), [])

    def test_evaluate(self):
        frames = class_frames()
        result = evaluate(micro_model(), frames, samples=4, rng=make_rng(0))
        assert result.mse > 0
        assert math.isfinite(result.log_likelihood)
        again = evaluate(micro_model(), frames, samples=4, rng=make_rng(0))
        assert again.log_likelihood == result.log_likelihood

    def test_evaluate_autoencoder(self):
        model = AutoEncoder(8, 2, 16, 1, rng=make_rng(0), dtype=torch.float64)
        result = evaluate(model, class_frames(), samples=4)
        assert math.isnan(result.log_likelihood)
        assert result.mse > 0

    def test_pca_baseline(self):
        frames = class_frames()
        # Enough components to span the training frames exactly.
        assert pca_baseline_mse(frames, frames, components=8) < 1e-20
        assert pca_baseline_mse(frames, frames, components=1) > 0

    def test_corpus_reg(self):
        model = micro_model()
        assert math.isfinite(corpus_reg(model, class_frames(), small_target()))
        assert math.isnan(corpus_reg(model, class_frames(classes=("A",)), small_target()))


class TestStratifiedBatches(object):
    labels = ["A"] * 6 + ["B"] * 6 + ["C"] * 2

    def test_every_batch_sees_every_class(self):
        batches = stratified_batches(self.labels, 4, make_rng(0))
        assert len(batches) == 4
        for batch in batches:
            assert {self.labels[i] for i in batch} == {"A", "B", "C"}

    def test_every_frame_is_used(self):
        batches = stratified_batches(self.labels, 4, make_rng(0))
        assert set(np.concatenate(batches)) == set(range(len(self.labels)))

    def test_unlabeled_frames_are_not_repeated(self):
        labels = ["A"] * 8 + [None]
        batches = stratified_batches(labels, 4, make_rng(1))
        assert sum(len(batch) for batch in batches) == 9

    def test_seeded(self):
        first = stratified_batches(self.labels, 4, make_rng(3))
        second = stratified_batches(self.labels, 4, make_rng(3))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)


class TestTrainConfig(object):
    def test_defaults(self):
        config = TrainConfig()
        assert config.beta_final == 2.0
        assert config.alpha == 0.1
        assert config.model == "vae"

    def test_full_scale(self):
        config = TrainConfig.full_scale(alpha=0.5)
        assert (config.stage1_epochs, config.stage2_epochs) == (5000, 1000)
        assert config.alpha == 0.5

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(stage1_epochs=-1),
            dict(batch_size=0),
            dict(stage1_epochs=0, stage2_epochs=0),
            dict(alpha=-0.1),
            dict(learning_rate=0.0),
            dict(model="gan"),
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            TrainConfig(**overrides)

    def test_dict_round_trip(self):
        config = micro_config(alpha=0.3)
        assert TrainConfig.from_dict(config.to_dict()) == config

    def test_unknown_option(self):
        with pytest.raises(ConfigError) as info:
            TrainConfig.from_dict(dict(alfa=0.3))
        assert "alfa" in str(info.value)


class TestTrainingLog(object):
    def test_missing_values_are_blank(self, tmp_path):
        log = TrainingLog()
        log.append(EpochMetrics(epoch=1, stage=1, beta=0.0, alpha=0.0, recon=1.5, kl=0.25))
        path = tmp_path / "train.csv"
        log.write_csv(path)
        header, row = path.read_text().splitlines()
        assert header == ",".join(EpochMetrics.COLUMNS)
        assert row == "1,1,0.0,0.0,1.5,0.25,,,"


class TestTrain(object):
    def test_two_stages(self):
        frames = class_frames()
        log = train(micro_model(), frames, small_target(), micro_config(), test_frames=frames[:4])
        assert len(log) == 10
        assert [m.epoch for m in log.rows] == list(range(1, 11))
        assert len(log.stage(1)) == 5
        assert len(log.stage(2)) == 5
        assert all(m.alpha == 0.0 for m in log.stage(1))
        assert all(m.alpha == 0.1 and m.beta == 1.0 for m in log.stage(2))
        assert [m.beta for m in log.stage(1)[:3]] == [0.0, 0.5, 1.0]
        assert all(math.isfinite(m.reg) for m in log.rows)

    def test_evaluation_schedule(self):
        frames = class_frames()
        config = micro_config(stage1_epochs=4, stage2_epochs=3, eval_every=3)
        log = train(micro_model(), frames, small_target(), config, test_frames=frames[:4])
        evaluated = [m.epoch for m in log.rows if not math.isnan(m.test_recon)]
        assert evaluated == [3, 4, 6, 7]

    def test_reconstruction_improves(self):
        frames = class_frames()
        config = micro_config(stage1_epochs=40, stage2_epochs=0, learning_rate=1e-2)
        log = train(micro_model(), frames, None, config)
        assert log.rows[-1].recon < log.rows[0].recon

    def test_seeded(self):
        frames = class_frames()
        first, second = micro_model(), micro_model()
        train(first, frames, small_target(), micro_config())
        train(second, frames, small_target(), micro_config())
        for a, b in zip(first.parameters(), second.parameters()):
            assert torch.equal(a, b)

    def test_checkpoint_reasons(self):
        calls = []

        def checkpoint(model, optimizer, epoch, stage, reason):
            calls.append((epoch, stage, reason))
            return "model-%d.ckpt" % epoch

        config = micro_config(checkpoint_every=3)
        train(micro_model(), class_frames(), small_target(), config, checkpoint=checkpoint)
        assert calls == [
            (3, 1, "periodic"),
            (5, 1, "stage1"),
            (6, 2, "periodic"),
            (9, 2, "periodic"),
            (10, 2, "final"),
        ]

    def test_resume(self):
        log = train(
            micro_model(), class_frames(), small_target(), micro_config(), start_epoch=7
        )
        assert [m.epoch for m in log.rows] == [8, 9, 10]

    def test_resume_matches_an_uninterrupted_run(self):
        frames, target, config = class_frames(), small_target(), micro_config()
        saved = {}

        def keep_stage1(model, optimizer, epoch, stage, reason):
            if reason == "stage1":
                saved.update(
                    model=copy.deepcopy(model.state_dict()),
                    optimizer=copy.deepcopy(optimizer.state_dict()),
                    epoch=epoch,
                )

        uninterrupted = micro_model()
        full_log = train(uninterrupted, frames, target, config, checkpoint=keep_stage1)

        resumed = micro_model(seed=1)
        resumed.load_state_dict(saved["model"])
        optimizer = AdamState(
            resumed.parameters(), AdamConfig(learning_rate=config.learning_rate)
        )
        optimizer.load_state_dict(saved["optimizer"])
        log = train(
            resumed, frames, target, config, optimizer=optimizer, start_epoch=saved["epoch"]
        )
        assert [m.epoch for m in log.rows] == [6, 7, 8, 9, 10]
        assert [m.recon for m in log.rows] == [m.recon for m in full_log.rows[5:]]
        assert [m.reg for m in log.rows] == [m.reg for m in full_log.rows[5:]]
        for a, b in zip(uninterrupted.parameters(), resumed.parameters()):
            assert torch.equal(a, b)

    def test_refused_updates_are_left_out_of_the_average(self, monkeypatch):
        def refuse(self):
            raise NonFiniteGradient("A gradient contains NaN or infinity.")

        monkeypatch.setattr(AdamState, "step", refuse)
        model = micro_model()
        before = [param.detach().clone() for param in model.parameters()]
        config = micro_config(stage1_epochs=2, stage2_epochs=0)
        log = train(model, class_frames(), small_target(), config)
        assert len(log) == 2
        assert all(math.isnan(row.recon) and math.isnan(row.kl) for row in log.rows)
        for a, b in zip(before, model.parameters()):
            assert torch.equal(a, b)

    def test_divergence_names_the_last_checkpoint(self):
        def poison(model, optimizer, epoch, stage, reason):
            with torch.no_grad():
                model.output.weight.fill_(float("nan"))
            return "good.ckpt"

        with pytest.raises(TrainingDiverged) as info:
            train(micro_model(), class_frames(), small_target(), micro_config(), checkpoint=poison)
        assert info.value.epoch == 6
        assert info.value.checkpoint == "good.ckpt"

    def test_unknown_class(self):
        frames = class_frames(classes=("A", "B", "Kazoo"))
        with pytest.raises(UnknownClass) as info:
            train(micro_model(), frames, small_target(), micro_config())
        assert info.value.label == "Kazoo"

        config = micro_config(skip_unknown_classes=True)
        log = train(micro_model(), frames, small_target(), config)
        assert len(log) == 10

    def test_penalty_needs_a_target(self):
        with pytest.raises(ConfigError):
            train(micro_model(), class_frames(), None, micro_config())
        log = train(micro_model(), class_frames(), None, micro_config(alpha=0.0))
        assert all(math.isnan(m.reg) for m in log.rows)

    def test_frame_width_must_match(self):
        with pytest.raises(ShapeError):
            train(micro_model(), class_frames(n_bins=6), small_target(), micro_config())

    def test_autoencoder(self):
        model = AutoEncoder(8, 2, 16, 1, rng=make_rng(0), dtype=torch.float64)
        log = train(model, class_frames(), small_target(), micro_config())
        assert all(m.kl == 0.0 for m in log.rows)


@pytest.mark.slow
class TestRegularizationOnFixture(object):
    def test_penalty_pulls_the_latent_space_toward_the_target(self, tmp_path):
        _, plain, _, _ = trained_on_fixture(tmp_path, alpha=0.0)
        _, regularized, _, _ = trained_on_fixture(tmp_path, alpha=1.0)
        # Both runs share their first stage.
        assert plain.rows[149].reg == pytest.approx(regularized.rows[149].reg)
        assert regularized.rows[-1].reg < plain.rows[-1].reg
