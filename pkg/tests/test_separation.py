import numpy as np
import pytest
import torch

from helpers import gradient_check, micro_model_config
from sdnet.model import SDNet
from sdnet.objectives import total_loss
from sdnet.separation import Separator, apply_mask


def small_separator(**overrides):
    params = dict(
        input_dim=16,
        bottleneck_channels=8,
        blocks=1,
        layers_per_block=2,
        hidden=12,
        kernel=3,
        decoder_kernel=40,
        decoder_stride=20,
    )
    params.update(overrides)
    return Separator(**params)


class TestBottleneck:
    def test_shape(self):
        sep = small_separator()
        out = sep.bottleneck(torch.randn(9, 16))
        assert out.shape == (9, 8)
        out_b = sep.bottleneck(torch.randn(2, 9, 16))
        assert out_b.shape == (2, 9, 8)

    def test_zero_input_zero_bias(self):
        sep = small_separator()
        with torch.no_grad():
            sep.bottleneck_conv.bias.zero_()
        assert torch.all(sep.bottleneck(torch.zeros(5, 16)) == 0)

    def test_additivity(self):
        sep = small_separator().double()
        a = torch.randn(3, 16, dtype=torch.float64)
        b = torch.randn(3, 16, dtype=torch.float64)
        bias = sep.bottleneck_conv.bias.detach().reshape(1, -1)
        lhs = sep.bottleneck(a + b)
        rhs = sep.bottleneck(a) + sep.bottleneck(b) - bias
        assert torch.allclose(lhs, rhs, atol=1e-10)


class TestTcnForward:
    def test_output_in_unit_interval(self):
        sep = small_separator()
        out = sep.tcn_forward(torch.randn(30, 8))
        assert torch.all(out > 0) and torch.all(out < 1)

    def test_t_preserved(self):
        sep = small_separator()
        for t in (1, 2, 7, 64):
            assert sep.tcn_forward(torch.randn(t, 8)).shape == (t, 8)

    def test_no_nan_for_bounded_inputs(self):
        sep = small_separator()
        out = sep.tcn_forward(10.0 * torch.ones(50, 8))
        assert torch.all(torch.isfinite(out))
        out = sep.tcn_forward(-10.0 * torch.rand(50, 8))
        assert torch.all(torch.isfinite(out))

    def test_receptive_field_bound(self):
        # default dilation schedule: 4 blocks x 8 layers, per-side reach
        # = sum of dilations = 4 * (2^8 - 1) = 1020 frames
        torch.manual_seed(0)
        sep = Separator(input_dim=8, bottleneck_channels=4, blocks=4, layers_per_block=8, hidden=6).double()
        assert sep.receptive_field == 1020
        t = 2100
        x = torch.randn(t, 4, dtype=torch.float64)
        base = sep.tcn_forward(x)
        probe_frame = 40
        x_far = x.clone()
        x_far[probe_frame + 1021] += 100.0  # just beyond reach: bit-identical
        far = sep.tcn_forward(x_far)
        assert torch.equal(far[probe_frame], base[probe_frame])
        x_near = x.clone()
        x_near[probe_frame + 500] += 100.0  # well inside reach: visible
        near = sep.tcn_forward(x_near)
        assert not torch.equal(near[probe_frame], base[probe_frame])


class TestApplyMask:
    def test_identity_mask(self):
        f = torch.randn(6, 8)
        g = torch.rand(6, 8)
        assert torch.allclose(apply_mask(f, g, torch.ones(8)), f * g)

    def test_zero_mask_annihilates(self):
        f, g = torch.randn(6, 8), torch.rand(6, 8)
        assert torch.all(apply_mask(f, g, torch.zeros(8)) == 0)

    def test_mask_ratio(self):
        f, g = torch.randn(6, 8) + 2.0, torch.rand(6, 8) + 0.5
        ma, mb = torch.rand(8) + 0.5, torch.rand(8) + 0.5
        za, zb = apply_mask(f, g, ma), apply_mask(f, g, mb)
        assert torch.allclose(za / zb, (ma / mb).expand(6, 8), atol=1e-5)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            apply_mask(torch.randn(6, 8), torch.rand(6, 8), torch.ones(7))
        with pytest.raises(ValueError):
            apply_mask(torch.randn(6, 8), torch.rand(5, 8), torch.ones(8))


class TestDecodeWaveform:
    def test_length_formula(self):
        sep = small_separator()
        wave = sep.decode_waveform(torch.randn(399, 8))
        assert wave.shape == (8000,)  # (399-1)*20 + 40

    def test_zero_linearity(self):
        sep = small_separator()
        with torch.no_grad():
            sep.decoder_conv.bias.zero_()
        assert torch.all(sep.decode_waveform(torch.zeros(10, 8)) == 0)
        z = torch.randn(10, 8)
        assert torch.allclose(sep.decode_waveform(2.5 * z), 2.5 * sep.decode_waveform(z), atol=1e-5)


class TestSeparatePipeline:
    def test_output_count_and_length(self):
        torch.manual_seed(1)
        model = SDNet(micro_model_config())
        mix = torch.randn(2, 800)
        sources, result = model.separate(mix, mode="greedy")
        assert len(sources) == result.n_sources
        for s in sources:
            assert s.waveform.shape == (800,)  # length rounds to the frame grid
            assert 0 <= s.direction_token <= model.cfg.n_directions + 1

    def test_non_grid_length_rounds_down(self):
        torch.manual_seed(2)
        model = SDNet(micro_model_config())
        sources, _ = model.separate(torch.randn(2, 815), mode="greedy")
        for s in sources:
            assert s.waveform.shape == (800,)

    def test_mask_swap_permutes_outputs(self):
        sep = small_separator()
        f = torch.randn(20, 8)
        g = sep.tcn_forward(f)
        ma, mb = torch.randn(8), torch.randn(8)
        wa1 = sep.decode_waveform(apply_mask(f, g, ma))
        wb1 = sep.decode_waveform(apply_mask(f, g, mb))
        wb2 = sep.decode_waveform(apply_mask(f, g, mb))
        wa2 = sep.decode_waveform(apply_mask(f, g, ma))
        assert torch.equal(wa1, wa2)
        assert torch.equal(wb1, wb2)

    def test_teacher_forward_shapes(self):
        torch.manual_seed(3)
        model = SDNet(micro_model_config())
        est, spk_d, dir_d = model.forward_teacher(
            torch.randn(2, 2, 800), torch.tensor([[0, 1], [2, 3]]), torch.tensor([[0, 1], [2, 3]])
        )
        assert est.shape == (2, 2, 800)
        assert spk_d.shape == (2, 3, 6)
        assert dir_d.shape == (2, 3, 7)

    def test_input_validation(self):
        model = SDNet(micro_model_config())
        with pytest.raises(ValueError):
            model.separate(torch.randn(3, 800))
        with pytest.raises(ValueError):
            model.separate(torch.randn(2, 800), mode="magic")


class TestEndToEndGradient:
    def test_micro_model_composite_loss(self):
        torch.manual_seed(4)
        model = SDNet(micro_model_config()).double()
        mix = torch.randn(1, 2, 240, dtype=torch.float64)
        targets = torch.randn(1, 2, 240, dtype=torch.float64)
        spk = torch.tensor([[0, 1]])
        dirs = torch.tensor([[2, 3]])
        spk_eos = torch.cat([spk, torch.full((1, 1), model.speaker_eos)], dim=1)
        dir_eos = torch.cat([dirs, torch.full((1, 1), model.direction_eos)], dim=1)

        def loss_fn():
            est, spk_d, dir_d = model.forward_teacher(mix, spk, dirs)
            return total_loss(est, targets[..., : est.shape[-1]], spk_d, dir_d, spk_eos, dir_eos).total

        err = gradient_check(loss_fn, model.parameters(), coords_per_param=6)
        assert err < 1e-4
