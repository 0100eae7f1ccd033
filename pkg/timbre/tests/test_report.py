import json
import math

import pytest

from timbre.checkpoint import Checkpoint
from timbre.corpus import (
    CorpusEntry,
    CorpusManifest,
)
from timbre.dsp import TransformSpec
from timbre.dsp.frames import FrameStore
from timbre.exceptions import (
    EmptySplit,
    PlanMismatch,
)
from timbre.report import report
from timbre.tests import (
    FRAME_SPEC,
    class_frames,
    micro_config,
    micro_model,
    small_target,
)


def corpus(test_every=3):
    frames = class_frames()
    entries = [
        CorpusEntry(frame.source_id, frame.class_label, "test" if i % test_every == 0 else "train")
        for i, frame in enumerate(frames)
    ]
    return CorpusManifest(entries, FRAME_SPEC, 1.0), FrameStore.from_frames(frames)


def checkpoint():
    return Checkpoint(micro_model(latent_dims=3), FRAME_SPEC, config=micro_config(latent_dims=3))


class TestReport(object):
    def test_metrics(self):
        manifest, store = corpus()
        result = report(checkpoint(), manifest, store, small_target(), samples=4)
        assert math.isfinite(result.test_log_likelihood)
        assert result.test_mse > 0
        assert result.pca_baseline_mse >= 0
        assert result.distance_kl > 0
        assert -1.0 <= result.distance_correlation <= 1.0
        assert result.classes == ["A", "B", "C", "D"]
        assert len(result.class_coords) == 4
        assert all(len(coords) == 3 for coords in result.class_coords)
        assert result.model["latent_dims"] == 3

    def test_without_target(self):
        manifest, store = corpus()
        result = report(checkpoint(), manifest, store, samples=4)
        assert math.isnan(result.distance_kl)
        assert result.to_dict()["distance_kl"] is None

    def test_write(self, tmp_path):
        manifest, store = corpus()
        result = report(checkpoint(), manifest, store, small_target(), samples=4)
        result.write(tmp_path / "report")
        with open(tmp_path / "report" / "report.json") as fh:
            data = json.load(fh)
        assert data["classes"] == ["A", "B", "C", "D"]
        assert len(data["pca"]["basis"]) == 3
        lines = (tmp_path / "report" / "classes.csv").read_text().splitlines()
        assert lines[0] == "class,x,y,z"
        assert [line.split(",")[0] for line in lines[1:]] == ["A", "B", "C", "D"]

    def test_seeded(self):
        manifest, store = corpus()
        first = report(checkpoint(), manifest, store, samples=4, seed=3)
        second = report(checkpoint(), manifest, store, samples=4, seed=3)
        assert first.test_log_likelihood == second.test_log_likelihood

    def test_needs_test_frames(self):
        manifest, store = corpus(test_every=1000)
        for entry in manifest.entries:
            entry.split = "train"
        with pytest.raises(EmptySplit):
            report(checkpoint(), manifest, store)

    def test_transform_must_match(self):
        manifest, store = corpus()
        mismatched = Checkpoint(micro_model(latent_dims=3), TransformSpec.from_flag("dct"))
        with pytest.raises(PlanMismatch):
            report(mismatched, manifest, store)
