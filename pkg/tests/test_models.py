import numpy as np
import pytest
from pydantic import ValidationError

from engine import ShapeError, Tensor
from models import (
    BlockSpec,
    DiscriminatorConfig,
    GeneratorConfig,
    PPResBlock,
    ResBlock,
    build_discriminator,
    build_from_config,
    build_generator,
    generator_forward,
    teacher_forward,
)
from harness.sampling import generate
from tests.conftest import freeze

F64 = np.float64


def inputs(cfg, batch=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((batch, cfg.z_dim)), rng.integers(0, cfg.num_classes, size=batch)


def pp_block(spec, seed=0, **kwargs):
    return PPResBlock(spec, 3, np.random.default_rng(seed), alpha=0.7, delta=1e3, pivot=0.005, mask_init=0.01,
                      dtype=F64, **kwargs).assign_paths()


class TestConfig:
    def test_default_schedule(self):
        cfg = GeneratorConfig()
        assert cfg.num_blocks == 5
        assert [b.out_ch for b in cfg.blocks] == [128, 64, 64, 32, 32]
        assert cfg.image_size == 32

    def test_inconsistent_chain(self):
        with pytest.raises(ValidationError, match="channel chain"):
            GeneratorConfig(blocks=[BlockSpec(in_ch=8, out_ch=8), BlockSpec(in_ch=4, out_ch=4)],
                            attention_after=None)

    def test_widened_teacher_has_no_masks(self, tiny_gen_cfg):
        teacher = tiny_gen_cfg.widened(2)
        assert not teacher.prunable
        assert [b.out_ch for b in teacher.blocks] == [2 * b.out_ch for b in tiny_gen_cfg.blocks]


class TestPPResBlock:
    def test_all_ones_matches_plain_block(self, rng):
        spec = BlockSpec(in_ch=4, out_ch=4, upsample=True)
        plain = ResBlock(spec, 3, np.random.default_rng(5), dtype=F64)
        block = pp_block(spec)
        block.load_state_dict(plain.state_dict(), strict=False)
        for m in block.masks():
            freeze(m, np.ones(m.n))
        x = Tensor(rng.standard_normal((2, 4, 2, 2)))
        cls = np.array([0, 2])
        np.testing.assert_allclose(block(x, cls).data, plain(x, cls).data, atol=1e-12)

    def test_zero_mask2_leaves_bias_and_skip(self, rng):
        block = pp_block(BlockSpec(in_ch=4, out_ch=6, upsample=False))
        freeze(block.mask2, np.zeros(6))
        block.transition.bias.data = np.linspace(-1, 1, 6)
        x = Tensor(rng.standard_normal((2, 4, 3, 3)))
        expected = block._skip(x).data + block.transition.bias.data.reshape(1, 6, 1, 1)
        np.testing.assert_allclose(block(x, np.array([0, 1])).data, expected, atol=1e-12)

    def test_zero_network(self, rng):
        block = pp_block(BlockSpec(in_ch=4, out_ch=4, upsample=False))
        for conv in (block.conv1, block.conv2, block.skip):
            conv.weight.data = np.zeros_like(conv.weight.data)
        out = block(Tensor(rng.standard_normal((2, 4, 2, 2))), np.array([0, 1]))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_upsample_doubles_spatial_dims(self, rng):
        out = pp_block(BlockSpec(in_ch=4, out_ch=2))(Tensor(rng.standard_normal((1, 4, 3, 3))), np.array([1]))
        assert out.shape == (1, 2, 6, 6)

    def test_mask_widths_follow_convolutions(self):
        block = pp_block(BlockSpec(in_ch=4, out_ch=6))
        assert (block.mask1.n, block.mask2.n) == (block.conv1.out_channels, block.conv2.out_channels)

    def test_input_channel_mismatch(self):
        with pytest.raises(ShapeError):
            pp_block(BlockSpec(in_ch=4, out_ch=4))(Tensor(np.ones((1, 3, 2, 2))), np.array([0]))


class TestGenerator:
    def test_shapes_and_range(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, seed=0, dtype=F64)
        z, cls = inputs(tiny_gen_cfg)
        image, taps = generator_forward(gen, z, cls)
        assert image.shape == (3, 3, 16, 16)
        assert np.all(np.abs(image.data) <= 1.0)
        assert len(taps) == 5
        assert [t.shape[1] for t in taps] == [b.out_ch for b in tiny_gen_cfg.blocks]
        assert len(gen.masks()) == 10

    def test_same_seed_same_parameters(self, tiny_gen_cfg):
        a = build_generator(tiny_gen_cfg, seed=4, dtype=F64).state_dict()
        b = build_from_config(tiny_gen_cfg, seed=4, dtype=F64).state_dict()
        assert list(a) == list(b)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_eval_mode_is_deterministic(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, seed=0, dtype=F64)
        z, cls = inputs(tiny_gen_cfg)
        np.testing.assert_array_equal(generate(gen, z, cls), generate(gen, z, cls))

    def test_parameters_are_row_major(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, seed=0, dtype=F64)
        for name, value in gen.state_dict().items():
            assert value.flags.c_contiguous, name

    def test_twin_from_copied_values_is_bit_identical(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, seed=0, dtype=F64)
        twin = build_generator(tiny_gen_cfg, seed=9, dtype=F64)
        twin.load_state_dict({name: np.asfortranarray(v) for name, v in gen.state_dict().items()})
        assert all(v.flags.c_contiguous for v in twin.state_dict().values())
        z, cls = inputs(tiny_gen_cfg, batch=4)
        np.testing.assert_array_equal(generate(twin, z, cls), generate(gen, z, cls))

    def test_zero_output_layer(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, seed=0, dtype=F64)
        gen.to_rgb.weight.data = np.zeros_like(gen.to_rgb.weight.data)
        z, cls = inputs(tiny_gen_cfg)
        np.testing.assert_array_equal(generate(gen, z, cls), 0.0)

    def test_invalid_class(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, dtype=F64)
        z, _ = inputs(tiny_gen_cfg, batch=2)
        with pytest.raises(ValueError):
            generator_forward(gen, z, np.array([0, 9]))

    def test_noise_shape(self, tiny_gen_cfg):
        gen = build_generator(tiny_gen_cfg, dtype=F64)
        with pytest.raises(ShapeError):
            generator_forward(gen, np.zeros((2, 3)), np.array([0, 1]))

    def test_teacher_forward(self, tiny_gen_cfg):
        teacher = build_generator(tiny_gen_cfg.widened(2), dtype=F64).eval()
        z, cls = inputs(tiny_gen_cfg)
        image, taps = teacher_forward(teacher, z, cls)
        assert image.shape == (3, 3, 16, 16)
        assert not image.requires_grad
        assert teacher.masks() == []
        assert taps[0].shape[1] == 2 * tiny_gen_cfg.blocks[0].out_ch

    def test_teacher_forward_rejects_student(self, tiny_gen_cfg):
        z, cls = inputs(tiny_gen_cfg)
        with pytest.raises(ValueError):
            teacher_forward(build_generator(tiny_gen_cfg, dtype=F64), z, cls)


class TestDiscriminator:
    def test_logits(self):
        cfg = DiscriminatorConfig(num_classes=3, image_size=16, base_width=8)
        disc = build_discriminator(cfg, seed=0, dtype=F64)
        out = disc(Tensor(np.random.default_rng(0).uniform(-1, 1, (2, 3, 16, 16))), np.array([0, 1]))
        assert out.shape == (2,)

    def test_classes_change_logit(self):
        cfg = DiscriminatorConfig(num_classes=3, image_size=16, base_width=8)
        disc = build_discriminator(cfg, seed=0, dtype=F64)
        image = np.random.default_rng(1).uniform(-1, 1, (1, 3, 16, 16))
        batch = Tensor(np.concatenate([image, image]))
        out = disc(batch, np.array([0, 2])).data
        assert out[0] != out[1]

    def test_zero_network(self):
        cfg = DiscriminatorConfig(num_classes=3, image_size=16, base_width=8, spectral_norm=False)
        disc = build_discriminator(cfg, seed=0, dtype=F64)
        for _, p in disc.named_parameters():
            p.data = np.zeros_like(p.data)
        assert np.all(disc(Tensor(np.zeros((2, 3, 16, 16))), np.array([0, 1])).data == 0.0)

    def test_wrong_image_size(self):
        disc = build_discriminator(DiscriminatorConfig(num_classes=3, image_size=16, base_width=8), dtype=F64)
        with pytest.raises(ShapeError):
            disc(Tensor(np.zeros((1, 3, 8, 8))), np.array([0]))

    def test_unknown_config_type(self):
        with pytest.raises(TypeError):
            build_from_config(object())
