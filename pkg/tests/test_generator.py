import numpy as np
import pytest
import torch

from dipwtv.exceptions import ConfigError
from dipwtv.generator import (
    GeneratorConfig,
    build_generator,
    forward_image,
    load_checkpoint,
    parameter_count,
    sample_input,
    save_checkpoint,
)


def small_cfg(**kw):
    base = dict(
        levels=2,
        down_channels=(8, 16),
        up_channels=(8, 16),
        skip_channels=(4, 4),
        input_channels=8,
        output_channels=1,
        seed=0,
    )
    base.update(kw)
    return GeneratorConfig(**base)


class TestConfig:
    def test_mismatched_channel_lists_rejected(self):
        with pytest.raises(ConfigError):
            small_cfg(down_channels=(8,))

    def test_bad_upsample_mode_rejected(self):
        with pytest.raises(ConfigError):
            small_cfg(upsample_mode="cubic")

    def test_bad_output_channels_rejected(self):
        with pytest.raises(ConfigError):
            small_cfg(output_channels=2)

    def test_zero_levels_rejected(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(levels=0, down_channels=(), up_channels=(),
                            skip_channels=(), input_channels=4)


class TestSampleInput:
    def test_values_in_range(self):
        z = sample_input(small_cfg(), 16, 16, seed=1)
        assert z.data.min() >= 0.0
        assert z.data.max() <= 0.1

    def test_same_seed_identical(self):
        cfg = small_cfg()
        a = sample_input(cfg, 16, 16, seed=7)
        b = sample_input(cfg, 16, 16, seed=7)
        assert np.array_equal(a.data, b.data)

    def test_mean_concentration(self):
        cfg = small_cfg(input_channels=32)
        z = sample_input(cfg, 64, 64, seed=3)
        assert abs(z.data.mean() - 0.05) < 0.003

    def test_frozen(self):
        z = sample_input(small_cfg(), 16, 16, seed=0)
        with pytest.raises(ValueError):
            z.data[0, 0, 0] = 1.0

    def test_too_small_rejected(self):
        with pytest.raises(ConfigError):
            sample_input(small_cfg(), 4, 16, seed=0)


class TestBuild:
    def test_output_shape_default_plan(self):
        cfg = GeneratorConfig(seed=1)  # 4 levels, d=u=[16,32,64,128]
        net = build_generator(cfg)
        z = sample_input(cfg, 64, 64, seed=2)
        out = net(z.tensor())
        assert tuple(out.shape) == (1, 1, 64, 64)

    def test_minimal_depth_8x8(self):
        cfg = GeneratorConfig(levels=1, down_channels=(4,), up_channels=(4,),
                              skip_channels=(2,), input_channels=4, seed=0)
        net = build_generator(cfg)
        z = sample_input(cfg, 8, 8, seed=0)
        assert tuple(net(z.tensor()).shape) == (1, 1, 8, 8)

    def test_odd_sizes_padded_and_cropped(self):
        cfg = small_cfg()
        net = build_generator(cfg)
        z = sample_input(cfg, 21, 35, seed=0)
        assert tuple(net(z.tensor()).shape) == (1, 1, 21, 35)

    def test_same_seed_bit_identical_parameters(self):
        cfg = small_cfg(seed=11)
        a = build_generator(cfg)
        b = build_generator(cfg)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_parameter_count_formula(self):
        for cfg in (
            small_cfg(),
            GeneratorConfig(seed=0),
            GeneratorConfig(levels=3, down_channels=(8, 16, 32),
                            up_channels=(4, 8, 16), skip_channels=(2, 2, 2),
                            input_channels=16, output_channels=3, seed=0),
        ):
            net = build_generator(cfg)
            assert sum(p.numel() for p in net.parameters()) == parameter_count(cfg)

    def test_rgb_output(self):
        cfg = small_cfg(output_channels=3)
        net = build_generator(cfg)
        z = sample_input(cfg, 16, 16, seed=0)
        assert tuple(net(z.tensor()).shape) == (1, 3, 16, 16)


class TestForward:
    def test_output_within_unit_interval(self, tiny_gen_cfg):
        net = build_generator(tiny_gen_cfg)
        z = sample_input(tiny_gen_cfg, 8, 8, seed=4)
        img = forward_image(net, z)
        assert img.shape == (8, 8, 1)
        assert img.min() >= 0.0
        assert img.max() <= 1.0

    def test_eval_mode_deterministic(self, tiny_gen_cfg):
        net = build_generator(tiny_gen_cfg).eval()
        z = sample_input(tiny_gen_cfg, 8, 8, seed=4)
        assert np.array_equal(forward_image(net, z), forward_image(net, z))

    def test_fuzz_no_nonfinite(self, tiny_gen_cfg):
        net = build_generator(tiny_gen_cfg)
        for seed in range(100):
            z = sample_input(tiny_gen_cfg, 8, 8, seed=seed)
            img = forward_image(net, z)
            assert np.all(np.isfinite(img))

    def test_batchnorm_normalizes_in_training_mode(self, tiny_gen_cfg):
        # at init the affine transform is identity, so each BN output must
        # be zero-mean unit-variance per channel
        net = build_generator(tiny_gen_cfg).double().train()
        captured = []

        def hook(_m, _inp, out):
            captured.append(out)

        for m in net.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.register_forward_hook(hook)
        z = sample_input(tiny_gen_cfg, 8, 8, seed=1)
        net(z.tensor(torch.float64))
        assert captured
        for out in captured:
            per_ch = out.transpose(0, 1).reshape(out.shape[1], -1)
            mean = per_ch.mean(dim=1)
            var = per_ch.var(dim=1, unbiased=False)
            assert mean.abs().max().item() < 1e-5
            assert (var - 1).abs().max().item() < 1e-3


class TestCheckpoint:
    def test_round_trip(self, tmp_path, tiny_gen_cfg):
        net = build_generator(tiny_gen_cfg)
        path = tmp_path / "gen.pt"
        save_checkpoint(net, path)
        restored = load_checkpoint(path)
        assert restored.cfg == tiny_gen_cfg
        for pa, pb in zip(net.parameters(), restored.parameters()):
            assert torch.equal(pa, pb)

    def test_version_check(self, tmp_path, tiny_gen_cfg):
        net = build_generator(tiny_gen_cfg)
        path = tmp_path / "gen.pt"
        torch.save({"format_version": 999, "config": {}, "state": net.state_dict()}, path)
        with pytest.raises(ConfigError):
            load_checkpoint(path)
