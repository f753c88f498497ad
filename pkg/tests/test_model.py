"""Model construction, forward shapes, adapter math, weight-file round trips."""

import struct

import numpy as np
import pytest

from oracles import conv1x1_loops
from parceldelin.errors import ConfigError, FormatError, ShapeError
from parceldelin.nn import Tensor
from parceldelin.model import (
    UNet,
    UNetConfig,
    build,
    default_config,
    load_weights,
    save_weights,
)
from parceldelin.variants import ModelVariant
from parceldelin.weights import read_weight_file, write_weight_file

SMALL = dict(size_px=32, depth=2, base_filters=4)


def small_model(variant=ModelVariant.SPATIAL, seed=0):
    return build(variant, default_config(variant, **SMALL), init_seed=seed)


class TestBuild:
    def test_spatial_shapes_default_architecture(self):
        model = build(ModelVariant.SPATIAL, default_config(ModelVariant.SPATIAL, size_px=64, depth=4, base_filters=4))
        x = np.random.default_rng(0).random((2, 3, 64, 64)).astype(np.float32)
        y = model.forward(x)
        assert y.shape == (2, 1, 64, 64)

    def test_spatiotemporal_input_channels(self):
        model = build(
            ModelVariant.SPATIOTEMPORAL,
            default_config(ModelVariant.SPATIOTEMPORAL, size_px=64, depth=4, base_filters=4),
        )
        x = np.random.default_rng(1).random((1, 9, 64, 64)).astype(np.float32)
        assert model.forward(x).shape == (1, 1, 64, 64)
        with pytest.raises(ShapeError):
            model.forward(np.zeros((1, 3, 64, 64), dtype=np.float32))

    def test_indivisible_size_rejected(self):
        config = default_config(ModelVariant.SPATIAL, size_px=100, depth=4)
        with pytest.raises(ConfigError, match="100"):
            build(ModelVariant.SPATIAL, config)

    def test_depth_too_small(self):
        with pytest.raises(ConfigError, match="depth"):
            UNetConfig(depth=1, dilation_rates=(1,), size_px=32).validate()

    def test_dilation_rate_length(self):
        with pytest.raises(ConfigError, match="dilation_rates"):
            UNetConfig(depth=3, dilation_rates=(1, 2), size_px=32).validate()

    def test_pretrained_requires_unit_dilation(self):
        config = UNetConfig(in_channels=3, depth=2, base_filters=4, dilation_rates=(1, 2), use_batchnorm=True, size_px=32)
        with pytest.raises(ConfigError, match="dilation"):
            build(ModelVariant.SPATIAL_PRETRAINED, config)

    def test_default_configs_per_variant(self):
        scratch = default_config(ModelVariant.SPATIAL, size_px=32, depth=2)
        assert scratch.dilation_rates == (1, 2) and not scratch.use_batchnorm
        pre = default_config(ModelVariant.SPATIAL_PRETRAINED, size_px=32, depth=2)
        assert pre.dilation_rates == (1, 1) and pre.use_batchnorm


class TestForward:
    def test_output_in_unit_interval(self):
        model = small_model()
        y = model.forward(np.random.default_rng(2).random((2, 3, 32, 32)).astype(np.float32))
        assert np.all(y.data > 0) and np.all(y.data < 1)

    def test_zero_weights_give_half(self):
        model = small_model()
        for p in model.parameters():
            p.data = np.zeros_like(p.data)
        y = model.forward(np.random.default_rng(3).random((1, 3, 32, 32)).astype(np.float32))
        np.testing.assert_allclose(y.data, 0.5, atol=1e-7)

    def test_duplicate_batch_items_identical(self):
        model = build(
            ModelVariant.SPATIAL_PRETRAINED,
            default_config(ModelVariant.SPATIAL_PRETRAINED, **SMALL),
            init_seed=5,
        )
        one = np.random.default_rng(4).random((1, 3, 32, 32)).astype(np.float32)
        batch = np.concatenate([one, one], axis=0)
        y = model.forward(batch, train=False)
        assert np.array_equal(y.data[0], y.data[1])

    def test_output_size_matches_input_for_all_variants(self):
        for variant in ModelVariant:
            model = small_model(variant)
            x = np.random.default_rng(6).random((1, variant.input_channels, 32, 32)).astype(np.float32)
            assert model.forward(x).shape == (1, 1, 32, 32)


class TestAdapter:
    def make_pretrained_st(self):
        variant = ModelVariant.SPATIOTEMPORAL_PRETRAINED
        return build(variant, default_config(variant, **SMALL), init_seed=7)

    def test_averaging_kernel_gives_temporal_mean(self):
        model = self.make_pretrained_st()
        w = np.zeros((3, 9, 1, 1), dtype=np.float32)
        for c in range(3):
            for s in range(3):
                w[c, 3 * s + c, 0, 0] = 1.0 / 3.0
        model.adapter.w.data = w
        model.adapter.b.data = np.zeros(3, dtype=np.float32)
        x = np.random.default_rng(8).random((1, 9, 32, 32)).astype(np.float32)
        out = model.adapter(Tensor(x)).data
        expected = (x[:, 0:3] + x[:, 3:6] + x[:, 6:9]) / 3.0
        np.testing.assert_allclose(out, expected, atol=1e-6)

    def test_slot1_selector(self):
        model = self.make_pretrained_st()
        w = np.zeros((3, 9, 1, 1), dtype=np.float32)
        for c in range(3):
            w[c, 3 + c, 0, 0] = 1.0
        model.adapter.w.data = w
        model.adapter.b.data = np.zeros(3, dtype=np.float32)
        x = np.random.default_rng(9).random((2, 9, 32, 32)).astype(np.float32)
        out = model.adapter(Tensor(x)).data
        np.testing.assert_allclose(out, x[:, 3:6], atol=1e-7)

    def test_random_adapter_matches_1x1_loop_oracle(self):
        model = self.make_pretrained_st()
        x = np.random.default_rng(10).random((1, 9, 8, 8)).astype(np.float32)
        out = model.adapter(Tensor(x)).data
        oracle = conv1x1_loops(x, model.adapter.w.data, model.adapter.b.data)
        np.testing.assert_allclose(out, oracle, atol=1e-6)

    def test_parameter_count_arithmetic(self):
        pre_spatial = build(
            ModelVariant.SPATIAL_PRETRAINED,
            default_config(ModelVariant.SPATIAL_PRETRAINED, **SMALL),
        )
        pre_st = self.make_pretrained_st()
        assert pre_st.parameter_count() == pre_spatial.parameter_count() + 30


class TestWeights:
    def test_roundtrip_bitexact_forward(self, tmp_path):
        model = small_model(seed=11)
        x = np.random.default_rng(12).random((1, 3, 32, 32)).astype(np.float32)
        before = model.forward(x).data.copy()
        path = tmp_path / "m.pswt"
        save_weights(model, path)
        other = small_model(seed=99)  # different init
        report = load_weights(other, path)
        assert not report.missing and not report.unused
        after = other.forward(x).data
        assert np.array_equal(before, after)

    def test_file_bytes_roundtrip(self, tmp_path):
        model = small_model(seed=13)
        p1 = tmp_path / "a.pswt"
        p2 = tmp_path / "b.pswt"
        save_weights(model, p1)
        entries = read_weight_file(p1)
        write_weight_file(p2, entries)
        assert p1.read_bytes() == p2.read_bytes()

    def test_partial_encoder_load_reports_rest(self, tmp_path):
        model = small_model(seed=14)
        enc_only = {k: v for k, v in model.state_entries().items() if k.startswith("enc")}
        path = tmp_path / "enc.pswt"
        write_weight_file(path, enc_only)
        target = small_model(seed=15)
        decoder_before = [p.data.copy() for p in target.parameters() if p.name.startswith("dec")]
        report = load_weights(target, path, allow_partial=True)
        assert set(report.loaded) == set(enc_only)
        assert all(not n.startswith("enc") for n in report.missing)
        assert any(n.startswith("dec") for n in report.missing)
        decoder_after = [p.data for p in target.parameters() if p.name.startswith("dec")]
        for b, a in zip(decoder_before, decoder_after):
            assert np.array_equal(b, a)

    def test_strict_load_rejects_mismatch(self, tmp_path):
        model = small_model(seed=14)
        enc_only = {k: v for k, v in model.state_entries().items() if k.startswith("enc")}
        path = tmp_path / "enc.pswt"
        write_weight_file(path, enc_only)
        with pytest.raises(FormatError, match="missing"):
            load_weights(small_model(), path)

    def test_wrong_dims_shape_error(self, tmp_path):
        model = small_model(seed=16)
        entries = dict(model.state_entries())
        entries["head.w"] = np.zeros((2, 4, 1, 1), dtype=np.float32)
        path = tmp_path / "bad.pswt"
        write_weight_file(path, entries)
        with pytest.raises(ShapeError, match="head.w"):
            load_weights(small_model(), path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.pswt"
        save_weights(small_model(), path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_weight_file(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "x.pswt"
        save_weights(small_model(), path)
        data = bytearray(path.read_bytes())
        struct.pack_into("<I", data, 4, 9)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            read_weight_file(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.pswt"
        save_weights(small_model(), path)
        truncated = tmp_path / "t.pswt"
        truncated.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError, match="truncated"):
            read_weight_file(truncated)

    def test_batchnorm_buffers_roundtrip(self, tmp_path):
        variant = ModelVariant.SPATIAL_PRETRAINED
        model = build(variant, default_config(variant, **SMALL), init_seed=17)
        # train-mode pass perturbs the running stats
        x = np.random.default_rng(18).random((2, 3, 32, 32)).astype(np.float32)
        model.forward(x, train=True)
        path = tmp_path / "bn.pswt"
        save_weights(model, path)
        clone = build(variant, default_config(variant, **SMALL), init_seed=3)
        load_weights(clone, path)
        y1 = model.forward(x, train=False).data
        y2 = clone.forward(x, train=False).data
        assert np.array_equal(y1, y2)
