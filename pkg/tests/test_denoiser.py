"""Conditional denoiser: AdaGN behavior, the preconditioning identity, the
analytic Gaussian oracle, conditioning liveness, and frame locality."""

import numpy as np
import pytest
import torch

from seqdae.denoiser import (AdaGNParams, AdaptiveGroupNorm, AnalyticGaussianDenoiser,
                             ConditionalDenoiser, UNetDenoiserNet, VectorDenoiserNet,
                             analytic_gaussian_denoiser, apply_adagn)
from seqdae.diffusion import DenoiserConfig, precondition_coeffs
from seqdae.errors import ConfigurationError, ContractViolation

CFG = DenoiserConfig()


def _vector_denoiser(seed=0, data_dim=12, cond_dim=6):
    torch.manual_seed(seed)
    net = VectorDenoiserNet(data_dim, cond_dim, width=32, depth=2)
    return ConditionalDenoiser(net, CFG, frame_shape=(data_dim,))


class TestAdaGN:
    def _mod(self, channels=16, cond=5, embed=8, seed=0):
        torch.manual_seed(seed)
        return AdaptiveGroupNorm(channels, cond, embed, groups=4)

    def test_identity_modulation_is_plain_groupnorm(self):
        mod = self._mod()
        h = torch.randn(10, 16)
        params = AdaGNParams(z_scale=torch.ones(10, 16),
                             t_scale=torch.ones(10, 16),
                             t_bias=torch.zeros(10, 16))
        out = apply_adagn(h, params, mod.norm)
        torch.testing.assert_close(out, mod.norm(h))

    def test_homogeneous_in_z_scale(self):
        mod = self._mod()
        h = torch.randn(4, 16)
        t = torch.randn(4, 8)
        z = torch.randn(4, 5)
        params = mod.modulation(t, z)
        doubled = AdaGNParams(2.0 * params.z_scale, params.t_scale, params.t_bias)
        torch.testing.assert_close(apply_adagn(h, doubled, mod.norm),
                                   2.0 * apply_adagn(h, params, mod.norm))

    def test_group_statistics(self):
        mod = self._mod()
        h = torch.randn(64, 16, dtype=torch.float64)
        normed = mod.norm(h.float()).double()
        grouped = normed.reshape(64, 4, 4)
        assert grouped.mean(dim=-1).abs().max() < 1e-5
        assert (grouped.var(dim=-1, unbiased=False).mean(0) - 1).abs().max() < 1e-5

    def test_channel_group_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            AdaptiveGroupNorm(10, 4, 8, groups=4)

    def test_spatial_broadcast(self):
        torch.manual_seed(0)
        mod = AdaptiveGroupNorm(8, 3, 8, groups=4)
        h = torch.randn(2, 8, 5, 5)
        out = mod(h, torch.randn(2, 8), torch.randn(2, 3))
        assert out.shape == h.shape


class TestConditionalDenoiser:
    def test_output_identity_exact(self):
        den = _vector_denoiser()
        x_t = torch.randn(7, 12)
        sigma = torch.rand(7) + 0.05
        z = torch.randn(7, 6)
        out = den.denoise(x_t, sigma, z)
        c = precondition_coeffs(sigma.reshape(-1, 1), CFG)
        torch.testing.assert_close(out.x0_hat, c.c_skip * x_t + c.c_out * out.f_raw,
                                   rtol=0.0, atol=0.0)

    def test_small_sigma_limit(self):
        den = _vector_denoiser()
        x_t = torch.randn(5, 12)
        out = den.denoise(x_t, 1e-6, torch.randn(5, 6))
        torch.testing.assert_close(out.x0_hat, x_t, atol=1e-4, rtol=0.0)

    def test_deterministic(self):
        den = _vector_denoiser()
        x_t = torch.randn(4, 12)
        z = torch.randn(4, 6)
        a = den.denoise(x_t, 0.7, z)
        b = den.denoise(x_t, 0.7, z)
        assert torch.equal(a.x0_hat, b.x0_hat)

    def test_conditioning_is_live(self):
        den = _vector_denoiser(seed=1)
        x_t = torch.randn(3, 12)
        z = torch.randn(3, 6)
        base = den.denoise(x_t, 0.5, z).x0_hat
        for dim in range(6):
            bumped = z.clone()
            bumped[:, dim] += 0.5
            assert not torch.equal(den.denoise(x_t, 0.5, bumped).x0_hat, base)

    def test_frame_locality(self):
        # changing one frame's row never touches another row's output
        den = _vector_denoiser(seed=2)
        x = torch.randn(6, 12)
        z = torch.randn(6, 6)
        base = den.denoise(x, 0.9, z).x0_hat
        x2 = x.clone()
        x2[3] += 1.0
        out = den.denoise(x2, 0.9, z).x0_hat
        keep = torch.arange(6) != 3
        assert torch.equal(out[keep], base[keep])
        assert not torch.equal(out[3], base[3])

    def test_unet_shapes_and_locality(self):
        torch.manual_seed(0)
        net = UNetDenoiserNet(1, 10, base_channels=16)
        den = ConditionalDenoiser(net, CFG, frame_shape=(1, 16, 16))
        x = torch.randn(4, 1, 16, 16)
        z = torch.randn(4, 10)
        out = den.denoise(x, 2.0, z)
        assert out.x0_hat.shape == x.shape
        x2 = x.clone()
        x2[1] += 1.0
        out2 = den.denoise(x2, 2.0, z).x0_hat
        keep = torch.arange(4) != 1
        assert torch.equal(out2[keep], out.x0_hat[keep])

    def test_batch_mismatch_rejected(self):
        den = _vector_denoiser()
        with pytest.raises(ContractViolation):
            den.denoise(torch.randn(4, 12), torch.rand(3), torch.randn(4, 6))
        with pytest.raises(ContractViolation):
            den.denoise(torch.randn(4, 12), 0.5, torch.randn(3, 6))


class TestAnalyticGaussianDenoiser:
    def test_equal_variance_midpoint(self):
        mu = torch.zeros(4) + 0.3
        den = analytic_gaussian_denoiser(mu, 0.25)
        x_t = torch.randn(5, 4, dtype=torch.float64)
        out = den.denoise(x_t, 0.5, None)
        torch.testing.assert_close(out.x0_hat, (x_t + 0.3) / 2.0)

    def test_small_sigma_returns_input(self):
        den = analytic_gaussian_denoiser(torch.zeros(3), 1.0)
        x_t = torch.randn(2, 3, dtype=torch.float64)
        torch.testing.assert_close(den.denoise(x_t, 1e-8, None).x0_hat, x_t,
                                   rtol=1e-12, atol=1e-12)

    def test_large_sigma_returns_mean(self):
        mu = torch.tensor([1.0, -2.0], dtype=torch.float64)
        den = analytic_gaussian_denoiser(mu, 0.5)
        x_t = torch.randn(4, 2, dtype=torch.float64)
        out = den.denoise(x_t, 1e6, None).x0_hat
        torch.testing.assert_close(out, mu.expand(4, 2), rtol=1e-9, atol=1e-9)

    def test_posterior_mean_formula(self):
        mu = torch.tensor([0.2, -0.4, 1.0], dtype=torch.float64)
        s2 = 0.49
        den = analytic_gaussian_denoiser(mu, s2)
        x_t = torch.randn(6, 3, dtype=torch.float64)
        for sigma in (0.1, 0.7, 3.0):
            expected = (s2 * x_t + sigma ** 2 * mu) / (s2 + sigma ** 2)
            torch.testing.assert_close(den.denoise(x_t, sigma, None).x0_hat,
                                       expected, rtol=1e-8, atol=1e-12)

    def test_identity_with_f_raw_holds(self):
        den = analytic_gaussian_denoiser(torch.zeros(3) + 0.1, 0.3)
        x_t = torch.randn(4, 3, dtype=torch.float64)
        sigma = 0.8
        out = den.denoise(x_t, sigma, None)
        c = precondition_coeffs(sigma, CFG)
        torch.testing.assert_close(out.x0_hat, c.c_skip * x_t + c.c_out * out.f_raw,
                                   rtol=1e-12, atol=1e-12)

    def test_rejects_bad_variance(self):
        with pytest.raises(ConfigurationError):
            AnalyticGaussianDenoiser(torch.zeros(2), 0.0)
