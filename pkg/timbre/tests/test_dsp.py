"""Tests of the spectral transforms, frame extraction and audio I/O."""

import numpy as np
import pytest
import soundfile

from timbre.dsp import (
    AudioBuffer,
    Spectrogram,
    SpectralTransform,
    TransformRegistry,
    TransformSpec,
    analyze,
    design_transform,
    stft_forward,
    synthesize,
    transform_registry,
)
from timbre.dsp._dct import DctTransform
from timbre.dsp._nsgt import (
    NsgtPlan,
    center_frequencies,
)
from timbre.dsp._stft import StftTransform
from timbre.dsp.audio import (
    load_audio,
    read_wav,
    resample,
    write_wav,
)
from timbre.dsp.frames import (
    FrameStore,
    SpectralFrame,
    corpus_normalize,
    denormalize,
    extract_frame,
    tile_frames,
)
from timbre.exceptions import (
    ConfigError,
    CorruptFile,
    DegenerateCorpus,
    InputTooShort,
    MissingPhase,
    OutOfRange,
    PlanMismatch,
    Unsupported,
)
from timbre.tests import (
    FRAME_SPEC,
    noise,
    tone,
)

ALL_FLAGS = ["stft", "dct", "nsgt-cq", "nsgt-mel", "nsgt-erb"]


class TestTransformSpec(object):
    def test_from_flag(self):
        spec = TransformSpec.from_flag("nsgt-mel")
        assert spec.kind == "nsgt"
        assert spec.nsgt_scale == "mel"
        assert spec.flag == "nsgt-mel"

    @pytest.mark.parametrize("flag", ALL_FLAGS)
    def test_flag_round_trip(self, flag):
        assert TransformSpec.from_flag(flag).flag == flag

    def test_scale_is_dropped_outside_nsgt(self):
        assert TransformSpec(kind="stft").nsgt_scale is None
        assert TransformSpec(kind="stft") == TransformSpec.from_flag("stft")

    def test_overrides(self):
        spec = TransformSpec.from_flag("nsgt-erb", nsgt_bins=100)
        assert spec.nsgt_bins == 100

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(kind="wavelet"),
            dict(kind="nsgt", nsgt_scale="bark"),
            dict(window_ms=10, hop_ms=10),
            dict(hop_ms=0),
            dict(fmin=0),
            dict(fmin=500, fmax=400),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            TransformSpec(**kwargs)

    def test_unknown_flag(self):
        with pytest.raises(ConfigError):
            TransformSpec.from_flag("wavelet")

    def test_fmax_above_nyquist(self):
        with pytest.raises(ConfigError):
            TransformSpec().validate(16000)
        TransformSpec().validate(22050)

    def test_dict_and_digest(self):
        spec = TransformSpec.from_flag("nsgt-cq")
        assert TransformSpec.from_dict(spec.to_dict()) == spec
        assert spec.digest() == TransformSpec.from_flag("nsgt-cq").digest()
        assert spec.digest() != TransformSpec.from_flag("nsgt-erb").digest()


class TestTransformRegistry(object):
    def test_lookup_by_kind(self):
        assert transform_registry.lookup("stft") is StftTransform
        assert transform_registry.lookup("dct") is DctTransform
        assert transform_registry.lookup("nsgt") is NsgtPlan

    def test_lookup_by_feature(self):
        assert transform_registry.lookup("gabor") is NsgtPlan
        assert transform_registry.lookup("cosine", "linear-frequency") is DctTransform
        assert transform_registry.lookup("cosine", "gabor") is None
        assert transform_registry.lookup("no-such-feature") is None

    def test_empty_registry(self):
        assert TransformRegistry().lookup() is None

    def test_most_recent_wins(self):
        registry = TransformRegistry()

        class Other(SpectralTransform):
            features = ["stft", "fourier"]

        registry.register(StftTransform)
        registry.register(Other)
        assert registry.lookup("fourier") is Other
        assert registry.lookup("linear-frequency") is StftTransform
        assert registry.lookup() is Other

    def test_design_needs_length_for_nsgt(self):
        with pytest.raises(PlanMismatch):
            design_transform(TransformSpec.from_flag("nsgt-erb"))

    def test_wrong_kind(self):
        with pytest.raises(Unsupported):
            StftTransform(TransformSpec.from_flag("dct"))
        with pytest.raises(Unsupported):
            stft_forward(tone(), TransformSpec.from_flag("dct"))


class TestRoundTrip(object):
    @pytest.mark.parametrize("flag", ALL_FLAGS)
    def test_perfect_reconstruction(self, flag):
        audio = noise(0.25)
        spectrogram = analyze(audio, TransformSpec.from_flag(flag))
        rebuilt = synthesize(spectrogram)
        assert len(rebuilt) == len(audio)
        np.testing.assert_allclose(rebuilt.samples, audio.samples, atol=1e-8)

    @pytest.mark.parametrize("flag", ALL_FLAGS)
    def test_magnitude_has_no_phase(self, flag):
        spectrogram = analyze(tone(), TransformSpec.from_flag(flag))
        magnitudes = spectrogram.magnitude()
        assert not magnitudes.has_phase
        assert np.all(magnitudes.coefficients >= 0)
        with pytest.raises(MissingPhase):
            synthesize(magnitudes)

    def test_stft_shape(self):
        audio = tone(duration_s=0.25)
        spectrogram = analyze(audio, TransformSpec.from_flag("stft"))
        # 40 ms and 10 ms at 22050 Hz.
        assert spectrogram.n_bins == 882 // 2 + 1
        assert spectrogram.n_frames == 1 + len(audio) // 220
        assert spectrogram.hop == 220

    def test_dct_is_real(self):
        spectrogram = analyze(tone(), TransformSpec.from_flag("dct"))
        assert spectrogram.n_bins == 882
        assert not np.iscomplexobj(spectrogram.coefficients)

    def test_dct_of_a_constant_lands_at_dc(self):
        spectrogram = analyze(AudioBuffer(np.ones(5512)), TransformSpec.from_flag("dct"))
        column = spectrogram.coefficients[:, spectrogram.n_frames // 2]
        assert np.argmax(np.abs(column)) == 0
        assert column[0] ** 2 > 0.5 * np.sum(column**2)

    def test_stft_peak_at_tone_frequency(self):
        spec = TransformSpec.from_flag("stft")
        spectrogram = analyze(tone((1000.0,)), spec)
        transform = design_transform(spec)
        column = np.abs(spectrogram.coefficients[:, spectrogram.n_frames // 2])
        peak = transform.bin_frequencies()[np.argmax(column)]
        assert abs(peak - 1000.0) <= 22050 / 882

    def test_too_short(self):
        with pytest.raises(InputTooShort) as info:
            analyze(AudioBuffer(np.zeros(100)), TransformSpec.from_flag("stft"))
        assert info.value.needed == 882

    def test_wrong_sample_rate(self):
        transform = design_transform(TransformSpec.from_flag("stft"), 22050)
        with pytest.raises(PlanMismatch):
            transform.forward(tone(sample_rate=44100))

    def test_coefficient_shape_is_checked(self):
        spectrogram = analyze(tone(), TransformSpec.from_flag("stft"))
        spectrogram.coefficients = spectrogram.coefficients[:, :-1]
        with pytest.raises(PlanMismatch):
            synthesize(spectrogram)


class TestNsgt(object):
    def test_plan_is_length_dependent(self):
        spec = TransformSpec.from_flag("nsgt-erb")
        plan = design_transform(spec, 22050, 5000)
        with pytest.raises(PlanMismatch):
            plan.forward(tone(duration_s=0.25))
        assert plan.for_length(5000) is plan
        assert plan.for_length(6000).signal_len == 6000

    @pytest.mark.parametrize("flag", ["nsgt-mel", "nsgt-erb"])
    def test_warped_scales_have_fixed_bin_count(self, flag):
        spec = TransformSpec.from_flag(flag, nsgt_bins=120)
        plan = design_transform(spec, 22050, 5000)
        assert plan.n_bins == 120
        frequencies = plan.bin_frequencies()
        assert frequencies[0] == pytest.approx(spec.fmin)
        assert frequencies[-1] == pytest.approx(spec.fmax)
        assert np.all(np.diff(frequencies) > 0)

    @pytest.mark.parametrize("flag", ["nsgt-mel", "nsgt-erb"])
    def test_default_warped_frames_have_400_bins(self, flag):
        spectrogram = analyze(tone(duration_s=0.3), TransformSpec.from_flag(flag))
        assert spectrogram.n_bins == 400
        assert len(extract_frame(spectrogram, 100.0)) == 400

    def test_constant_q_peak_at_tone_frequency(self):
        spec = TransformSpec.from_flag("nsgt-cq")
        spectrogram = analyze(tone((1000.0,), duration_s=0.5), spec)
        assert spectrogram.n_bins == 409
        energy = np.abs(spectrogram.coefficients).sum(axis=1)
        peak = center_frequencies(spec)[np.argmax(energy)]
        assert abs(np.log2(peak / 1000.0)) <= 1.0 / 48

    def test_edge_windows_reach_dc_and_nyquist(self):
        plan = design_transform(TransformSpec.from_flag("nsgt-erb"), 22050, 4096)
        assert plan.frame_diagonal[0] == pytest.approx(1.0)
        assert plan.frame_diagonal[-1] == pytest.approx(1.0)
        audio = AudioBuffer(1.0 + 0.1 * np.cos(0.3 * np.arange(4096)))
        rebuilt = synthesize(analyze(audio, TransformSpec.from_flag("nsgt-erb")))
        np.testing.assert_allclose(rebuilt.samples, audio.samples, atol=1e-8)

    def test_constant_q_spacing(self):
        spec = TransformSpec.from_flag("nsgt-cq", bins_per_octave=12, fmin=110, fmax=880)
        centers = center_frequencies(spec)
        assert len(centers) == 36
        np.testing.assert_allclose(centers[12], 220.0)
        np.testing.assert_allclose(centers[1:] / centers[:-1], 2 ** (1 / 12))

    def test_every_frequency_is_covered(self):
        plan = design_transform(TransformSpec.from_flag("nsgt-cq"), 22050, 4096)
        assert plan.frame_diagonal.min() > 0
        assert plan.time_channels == max(plan.supports)
        assert plan.n_frames(4096) == plan.time_channels
        assert plan.hop == pytest.approx(4096 / plan.time_channels)


class TestFrames(object):
    def test_extract_frame(self):
        spectrogram = analyze(tone(duration_s=0.5), TransformSpec.from_flag("stft"))
        frame = extract_frame(spectrogram, 200.0, "Flute", "flute_a4")
        np.testing.assert_array_equal(frame.magnitudes, np.abs(spectrogram.coefficients[:, 20]))
        assert frame.class_label == "Flute"
        assert frame.source_id == "flute_a4"
        assert len(frame) == spectrogram.n_bins

    def test_extract_out_of_range(self):
        spectrogram = analyze(tone(duration_s=0.1), TransformSpec.from_flag("stft"))
        with pytest.raises(OutOfRange):
            extract_frame(spectrogram, 200.0)
        with pytest.raises(OutOfRange):
            extract_frame(spectrogram, -1.0)

    def test_frame_rejects_negative_magnitudes(self):
        with pytest.raises(ValueError):
            SpectralFrame(np.array([0.5, -0.1]), FRAME_SPEC)
        with pytest.raises(ValueError):
            SpectralFrame(np.array([0.5, np.nan]), FRAME_SPEC)

    def test_corpus_normalize(self):
        frames = [
            SpectralFrame(np.array([1.0, 4.0]), FRAME_SPEC, "A", "a"),
            SpectralFrame(np.array([2.0, 0.0]), FRAME_SPEC, "B", "b"),
        ]
        normalized, norm_constant = corpus_normalize(frames)
        assert norm_constant == 4.0
        assert max(frame.magnitudes.max() for frame in normalized) == 1.0
        np.testing.assert_array_equal(normalized[0].magnitudes, [0.25, 1.0])
        assert normalized[1].class_label == "B"
        np.testing.assert_array_equal(
            denormalize(normalized[0].magnitudes, norm_constant), frames[0].magnitudes
        )

    def test_corpus_normalize_degenerate(self):
        with pytest.raises(DegenerateCorpus):
            corpus_normalize([])
        with pytest.raises(DegenerateCorpus):
            corpus_normalize([SpectralFrame(np.zeros(3), FRAME_SPEC)])

    def test_tile_frames(self):
        frames = np.array([[1.0, 2.0], [3.0, 4.0]])
        grid = tile_frames(frames, 4)
        assert grid.shape == (2, 4)
        np.testing.assert_array_equal(grid[0], [1.0, 1.0, 3.0, 3.0])
        np.testing.assert_array_equal(grid[1], [2.0, 2.0, 4.0, 4.0])


class TestFrameStore(object):
    def store(self):
        frames = [
            SpectralFrame(np.array([0.0, 0.5, 1.0]), FRAME_SPEC),
            SpectralFrame(np.array([0.25, 0.75, 0.125]), FRAME_SPEC),
        ]
        return FrameStore.from_frames(frames, norm_constant=3.5)

    def test_write_and_read(self, tmp_path):
        path = tmp_path / "frames.tsf"
        self.store().write(path)
        loaded = FrameStore.read(path)
        assert loaded.spec == FRAME_SPEC
        assert loaded.norm_constant == 3.5
        assert len(loaded) == 2
        assert loaded.n_bins == 3
        np.testing.assert_array_equal(loaded.magnitudes[1], [0.25, 0.75, 0.125])
        frame = loaded.frame(1, "Oboe", "oboe_1")
        assert frame.class_label == "Oboe"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "frames.tsf"
        path.write_bytes(b"RIFF" + bytes(40))
        with pytest.raises(CorruptFile):
            FrameStore.read(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "frames.tsf"
        self.store().write(path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(CorruptFile):
            FrameStore.read(path)

    def test_empty(self):
        with pytest.raises(DegenerateCorpus):
            FrameStore.from_frames([])


class TestAudio(object):
    def test_write_and_read(self, tmp_path):
        audio = tone()
        path = tmp_path / "tone.wav"
        write_wav(path, audio)
        loaded = read_wav(path)
        assert loaded.sample_rate == audio.sample_rate
        np.testing.assert_allclose(loaded.samples, audio.samples, atol=1e-4)

    def test_write_clips(self, tmp_path):
        path = tmp_path / "loud.wav"
        write_wav(path, AudioBuffer(np.array([2.0, -2.0, 0.0] * 100)))
        assert np.abs(read_wav(path).samples).max() <= 1.0

    def test_stereo_is_downmixed(self, tmp_path):
        path = tmp_path / "stereo.wav"
        left = np.full(1000, 0.5)
        right = np.zeros(1000)
        soundfile.write(path, np.stack([left, right], axis=1), 22050, subtype="FLOAT")
        loaded = read_wav(path)
        np.testing.assert_allclose(loaded.samples, 0.25, atol=1e-6)

    def test_resample_keeps_frequency(self):
        audio = tone((1000.0,), duration_s=0.5, sample_rate=44100)
        resampled = resample(audio, 22050)
        assert resampled.sample_rate == 22050
        assert abs(len(resampled) - len(audio) // 2) <= 1
        spectrum = np.abs(np.fft.rfft(resampled.samples))
        peak = np.argmax(spectrum) * 22050 / len(resampled)
        assert abs(peak - 1000.0) < 5.0

    def test_resample_same_rate(self):
        audio = tone()
        assert resample(audio, audio.sample_rate) is audio

    def test_load_audio(self, tmp_path):
        path = tmp_path / "tone.wav"
        write_wav(path, tone(sample_rate=44100))
        assert load_audio(path).sample_rate == 22050

    def test_buffer_validation(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.array([0.0, np.inf]))
        with pytest.raises(ValueError):
            AudioBuffer(np.zeros(3), 0)
        assert AudioBuffer(np.zeros(22050)).duration_ms == 1000.0
