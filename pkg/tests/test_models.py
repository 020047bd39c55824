"""Encoders, codecs, wrappers, the weight format, and training behavior.

The slow trained-model assertions (held-out accuracy, codec PSNR, denoiser
validation MSE) use the session-scoped assets fixture.
"""

import numpy as np
import pytest

from svia.config import PipelineConfig, load_flat_config
from svia.errors import TrainingError, ValidationError
from svia.models import (
    HashedTextEncoder,
    IdentityCodec,
    SinusoidalStepEncoder,
    ToyCityClassifier,
    ToyDenoiser,
    ToySegmenter,
    TrainedCodec,
    codec_psnr,
    load_model,
    load_weights,
    noise_prediction_mse,
    pixel_accuracy,
    save_weights,
    segment,
    top1_accuracy,
    train_component,
)
from svia.models.training import _run_epochs
from svia.seeds import make_rng
from svia.synthetic import CATEGORIES, generate_dataset, load_dataset
from _stubs import ConstantScoreSegmenter, FixedLabelSegmenter


class TestTextEncoder:
    def test_deterministic(self):
        enc = HashedTextEncoder(dim=16)
        a = enc.encode("a photo of a road")
        b = enc.encode("a photo of a road")
        assert np.array_equal(a, b)

    def test_distinct_prompts_differ(self):
        enc = HashedTextEncoder(dim=16)
        assert not np.array_equal(enc.encode("a photo of a road"), enc.encode("a photo of a building"))

    def test_dimension_constant(self):
        enc = HashedTextEncoder(dim=8)
        for p in ("", "one", "two words", "a much longer prompt with many tokens"):
            assert enc.encode(p).shape == (8,)

    def test_empty_prompt_is_zero(self):
        assert (HashedTextEncoder(dim=4).encode("") == 0).all()

    def test_case_insensitive_tokens(self):
        enc = HashedTextEncoder(dim=16)
        assert np.array_equal(enc.encode("Road"), enc.encode("road"))


class TestStepEncoder:
    def test_injective_over_steps(self):
        enc = SinusoidalStepEncoder(dim=32, total_steps=50)
        rows = np.stack([enc.encode(i) for i in range(1, 51)])
        assert len({row.tobytes() for row in rows}) == 50

    def test_progress_alignment_across_totals(self):
        a = SinusoidalStepEncoder(dim=16, total_steps=10)
        b = SinusoidalStepEncoder(dim=16, total_steps=50)
        assert np.allclose(a.encode(2), b.encode(10))  # same progress 0.2

    def test_bounds(self):
        enc = SinusoidalStepEncoder(dim=8, total_steps=5)
        with pytest.raises(ValidationError):
            enc.encode(0)
        with pytest.raises(ValidationError):
            enc.encode(6)


class TestIdentityCodec:
    def test_roundtrip_exact(self, rng):
        codec = IdentityCodec(16, 16)
        x = rng.random((3, 16, 16))
        assert np.array_equal(codec.decode(codec.encode(x)), x)

    def test_latent_size_and_dims(self):
        codec = IdentityCodec(16, 24)
        assert codec.latent_size(16, 24) == 3 * 16 * 24
        with pytest.raises(ValidationError):
            codec.latent_size(16, 16)

    def test_decode_clamps(self):
        codec = IdentityCodec(8, 8)
        out = codec.decode(np.full(3 * 64, 7.0))
        assert out.max() <= 1.0


class TestWeightFormat:
    def test_roundtrip_bits(self, tmp_path, rng):
        arrays = [("w", rng.random((3, 4)).astype(np.float32)), ("b", rng.random(4).astype(np.float32))]
        p = tmp_path / "m.svw"
        save_weights(p, arrays, "arch_x", {"k": 1}, seed=9, config_hash="abc")
        header, back = load_weights(p)
        assert header["arch"] == "arch_x"
        assert header["seed"] == 9
        assert header["config_hash"] == "abc"
        assert [s["name"] for s in header["params"]] == ["w", "b"]
        for (_, a), b in zip(arrays, back):
            assert np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.svw"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValidationError, match="magic"):
            load_weights(p)

    def test_trailing_bytes_rejected(self, tmp_path, rng):
        p = tmp_path / "m.svw"
        save_weights(p, [("w", rng.random(3).astype(np.float32))], "a", {}, 0, "")
        p.write_bytes(p.read_bytes() + b"\x01")
        with pytest.raises(ValidationError, match="trailing"):
            load_weights(p)

    def test_wrapper_roundtrip(self, tmp_path):
        seg = ToySegmenter.random(list(CATEGORIES), seed=3)
        p = tmp_path / "seg.svw"
        seg.save(p, seed=3, config_hash="h")
        back = load_model(p)
        x = np.random.default_rng(0).random((3, 16, 16))
        assert np.array_equal(seg.predict(x), back.predict(x))

    def test_unknown_arch(self, tmp_path, rng):
        p = tmp_path / "m.svw"
        save_weights(p, [("w", rng.random(3).astype(np.float32))], "mystery_v9", {}, 0, "")
        with pytest.raises(ValidationError, match="mystery_v9"):
            load_model(p)


class TestSegment:
    def test_fixed_labels_roundtrip(self, rng):
        labels = rng.integers(0, 7, size=(16, 16))
        model = FixedLabelSegmenter(labels, list(CATEGORIES))
        ms = segment(model, rng.random((3, 16, 16)))
        assert np.array_equal(np.argmax(ms.masks, axis=0), labels)
        assert ms.category_names == list(CATEGORIES)

    def test_constant_scores_tie_break_to_zero(self, rng):
        model = ConstantScoreSegmenter(5, (8, 8))
        ms = segment(model, rng.random((3, 8, 8)))
        assert (ms.masks[0] == 1).all()

    def test_output_always_one_hot(self, rng):
        seg = ToySegmenter.random(list(CATEGORIES), seed=1)
        for _ in range(5):
            ms = segment(seg, rng.random((3, 16, 16)))
            assert (ms.masks.sum(axis=0) == 1).all()

    def test_overfit_single_scene_exact(self, tmp_path):
        # One scene, enough epochs: the argmax map must match ground truth.
        d = tmp_path / "one"
        generate_dataset(1, 2, (64, 64), 42, d)
        flat = load_flat_config(None)
        flat["train.segmenter.epochs"] = "200"
        flat["train.segmenter.batch_size"] = "1"
        flat["train.segmenter.lr"] = "5e-3"
        config = PipelineConfig.from_flat(flat)
        out = train_component("segmenter", d, config, seed=1, out_path=tmp_path / "seg.svw")
        seg = load_model(out)
        assert pixel_accuracy(seg, load_dataset(d)) == 1.0


class TestDenoiserWrapper:
    def test_deterministic(self, rng):
        den = ToyDenoiser.random(16, 16, seed=2)
        y = rng.standard_normal(3 * 16 * 16)
        e_s = rng.standard_normal(32)
        e_t = rng.standard_normal(16)
        e_img = np.concatenate([rng.random(3 * 16 * 16), (rng.random(256) < 0.5).astype(np.float64)])
        a = den.predict_noise(y, 3, e_s, e_t, e_img)
        b = den.predict_noise(y, 3, e_s, e_t, e_img)
        assert np.array_equal(a, b)
        assert a.shape == y.shape

    def test_rejects_wrong_e_img(self, rng):
        den = ToyDenoiser.random(16, 16, seed=2)
        with pytest.raises(ValidationError):
            den.predict_noise(rng.standard_normal(768), 1, rng.standard_normal(32), rng.standard_normal(16), rng.random(10))


class TestTrainingLoop:
    def test_nan_loss_aborts(self):
        with pytest.raises(TrainingError, match="non-finite"):
            _run_epochs("demo", 2, 4, 2, make_rng(0), lambda idx, epoch: float("nan"))

    def test_non_decreasing_loss_aborts(self):
        with pytest.raises(TrainingError, match="did not decrease"):
            _run_epochs("demo", 3, 4, 2, make_rng(0), lambda idx, epoch: 1.0)

    def test_decreasing_loss_recorded(self):
        losses = iter([4.0, 4.0, 3.0, 3.0, 2.0, 2.0])
        out = _run_epochs("demo", 3, 4, 2, make_rng(0), lambda idx, epoch: next(losses))
        assert out == [4.0, 3.0, 2.0]

    def test_unknown_kind(self, tmp_path):
        config = PipelineConfig.from_flat(load_flat_config(None))
        with pytest.raises(TrainingError, match="unknown component"):
            train_component("discriminator", tmp_path, config, 0, tmp_path / "w.svw")

    def test_seeded_training_bit_identical(self, tmp_path):
        d = tmp_path / "tiny"
        generate_dataset(16, 2, (32, 32), 11, d)
        flat = load_flat_config(None)
        flat["train.city_classifier.epochs"] = "3"
        flat["train.city_classifier.batch_size"] = "8"
        config = PipelineConfig.from_flat(flat)
        p1 = train_component("city_classifier", d, config, seed=5, out_path=tmp_path / "c1.svw")
        p2 = train_component("city_classifier", d, config, seed=5, out_path=tmp_path / "c2.svw")
        assert p1.read_bytes() == p2.read_bytes()
        p3 = train_component("city_classifier", d, config, seed=6, out_path=tmp_path / "c3.svw")
        assert p1.read_bytes() != p3.read_bytes()

    def test_trainlog_written(self, tmp_path):
        d = tmp_path / "tiny2"
        generate_dataset(8, 2, (32, 32), 3, d)
        flat = load_flat_config(None)
        flat["train.city_classifier.epochs"] = "3"
        config = PipelineConfig.from_flat(flat)
        out = train_component("city_classifier", d, config, seed=5, out_path=tmp_path / "c.svw")
        log = out.with_suffix(".trainlog.json")
        assert log.exists()
        import json

        data = json.loads(log.read_text())
        assert data["component"] == "city_classifier"
        assert len(data["epochs"]) == 3
        assert data["epochs"][-1]["loss"] < data["epochs"][0]["loss"]


class TestClassifierWrapper:
    def test_predict_shape_and_finiteness(self, rng):
        clf = ToyCityClassifier.random(8, seed=4)
        scores = clf.predict(rng.random((3, 16, 16)))
        assert scores.shape == (8,)
        assert np.isfinite(scores).all()

    def test_feature_maps_shape(self, rng):
        clf = ToyCityClassifier.random(4, seed=4)
        fm = clf.feature_maps(rng.random((3, 32, 32)))
        assert fm.shape == (64, 4, 4)

    def test_class_gradients_shapes(self, rng):
        clf = ToyCityClassifier.random(4, seed=4)
        acts, grads = clf.class_gradients(rng.random((3, 32, 32)), 2)
        assert acts.shape == grads.shape == (64, 4, 4)
        with pytest.raises(ValidationError):
            clf.class_gradients(rng.random((3, 32, 32)), 7)


@pytest.mark.slow
class TestTrainedComponents:
    def test_segmenter_heldout_accuracy(self, assets):
        seg = load_model(assets.weights["segmenter"])
        assert pixel_accuracy(seg, assets.test_records) >= 0.90

    def test_classifier_heldout_top1(self, assets):
        clf = load_model(assets.weights["city_classifier"])
        assert top1_accuracy(clf, assets.test_records) >= 0.95

    def test_denoiser_beats_zero_predictor(self, assets):
        den = load_model(assets.weights["denoiser"])
        mse = noise_prediction_mse(den, assets.test_records[:50], assets.config, seed=5)
        assert mse < 1.0  # zero-predictor MSE is the noise variance, 1.0

    def test_trained_codec_psnr(self, assets):
        cod = load_model(assets.weights["codec"])
        assert codec_psnr(cod, assets.test_records[:50]) >= 25.0

    def test_trained_codec_roundtrip_shape(self, assets, rng):
        cod = load_model(assets.weights["codec"])
        assert isinstance(cod, TrainedCodec)
        x = rng.random((3, 64, 64))
        rec = cod.decode(cod.encode(x))
        assert rec.shape == x.shape
        assert rec.min() >= 0 and rec.max() <= 1

    def test_extractor_id_tagged(self, assets):
        ex = load_model(assets.weights["feature_extractor"])
        assert ex.extractor_id.startswith("toyconv_trained_")


def test_text_encoder_distinct_default_prompts():
    flat = load_flat_config(None)
    config = PipelineConfig.from_flat(flat)
    enc = HashedTextEncoder(dim=config.text_dim)
    embs = [enc.encode(p) for p in config.prompts.values()]
    for i in range(len(embs)):
        for j in range(i + 1, len(embs)):
            assert not np.array_equal(embs[i], embs[j])
