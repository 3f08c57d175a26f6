"""Per-frame conditional denoiser.

A raw network F (residual MLP for vector frames, small U-Net for image
frames) is conditioned on the latent code of its frame through adaptive
group normalization and wrapped in the preconditioning of
:mod:`seqdae.diffusion`:

    x0_hat = c_skip * x_t + c_out * F(c_in * x_t, z, c_noise)

The denoiser is frame-local: every operation acts row-independently, so the
output for one frame never reads another frame.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import torch
from torch import nn

from .diffusion import DenoiserConfig, expand_like, precondition_coeffs
from .errors import ConfigurationError, ContractViolation


class AdaGNParams(NamedTuple):
    z_scale: torch.Tensor
    t_scale: torch.Tensor
    t_bias: torch.Tensor


class DenoiserOutput(NamedTuple):
    x0_hat: torch.Tensor
    f_raw: torch.Tensor


class NoiseEmbedding(nn.Module):
    """Sinusoidal features of c_noise followed by a 2-layer MLP."""

    def __init__(self, embed_dim: int = 64, n_freqs: int = 8):
        super().__init__()
        freqs = torch.exp(torch.linspace(math.log(0.5), math.log(64.0), n_freqs))
        self.register_buffer("freqs", freqs)
        self.mlp = nn.Sequential(
            nn.Linear(2 * n_freqs, embed_dim),
            nn.SiLU(),
            nn.Linear(embed_dim, embed_dim),
        )
        self.embed_dim = embed_dim

    def forward(self, c_noise: torch.Tensor) -> torch.Tensor:
        c = torch.atleast_1d(c_noise)[:, None] * self.freqs[None, :].to(c_noise.dtype)
        feats = torch.cat([torch.sin(2 * math.pi * c), torch.cos(2 * math.pi * c)], dim=-1)
        return self.mlp(feats)


class AdaptiveGroupNorm(nn.Module):
    """GroupNorm modulated by a latent code and a noise embedding.

    forward(h, t_embed, z) = z_scale * (t_scale * GroupNorm(h) + t_bias)
    where z_scale comes from a linear map of z and (t_scale, t_bias) from a
    linear map of the noise embedding.  Scales initialize around 1 so the
    module starts close to plain group normalization.
    """

    def __init__(self, channels: int, cond_dim: int, embed_dim: int, groups: int = 8):
        super().__init__()
        if channels % groups != 0:
            raise ConfigurationError(f"channels {channels} not divisible by groups {groups}")
        self.norm = nn.GroupNorm(groups, channels, eps=1e-6, affine=False)
        self.z_proj = nn.Linear(cond_dim, channels)
        self.t_proj = nn.Linear(embed_dim, 2 * channels)
        self.channels = channels
        with torch.no_grad():
            self.z_proj.bias.fill_(1.0)
            self.t_proj.bias[:channels] = 1.0
            self.t_proj.bias[channels:] = 0.0

    def modulation(self, t_embed: torch.Tensor, z: torch.Tensor) -> AdaGNParams:
        t_affine = self.t_proj(t_embed)
        return AdaGNParams(
            z_scale=self.z_proj(z),
            t_scale=t_affine[:, : self.channels],
            t_bias=t_affine[:, self.channels:],
        )

    def forward(self, h: torch.Tensor, t_embed: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        params = self.modulation(t_embed, z)
        return apply_adagn(h, params, self.norm)


def apply_adagn(h: torch.Tensor, params: AdaGNParams, norm: nn.GroupNorm) -> torch.Tensor:
    """Apply an AdaGN modulation; scales/biases broadcast over spatial dims."""
    normed = norm(h)
    shape = (h.shape[0], h.shape[1]) + (1,) * (h.ndim - 2)
    z_s = params.z_scale.reshape(shape)
    t_s = params.t_scale.reshape(shape)
    t_b = params.t_bias.reshape(shape)
    return z_s * (t_s * normed + t_b)


class _VectorBlock(nn.Module):
    def __init__(self, width, cond_dim, embed_dim, groups):
        super().__init__()
        self.adagn = AdaptiveGroupNorm(width, cond_dim, embed_dim, groups)
        self.linear = nn.Linear(width, width)

    def forward(self, h, t_embed, z):
        return h + self.linear(torch.nn.functional.silu(self.adagn(h, t_embed, z)))


class VectorDenoiserNet(nn.Module):
    """Residual MLP backbone for vector-valued frames."""

    def __init__(self, data_dim: int, cond_dim: int, width: int = 128,
                 depth: int = 3, embed_dim: int = 64, groups: int = 8):
        super().__init__()
        self.in_proj = nn.Linear(data_dim, width)
        self.blocks = nn.ModuleList(
            [_VectorBlock(width, cond_dim, embed_dim, groups) for _ in range(depth)])
        self.out_norm = AdaptiveGroupNorm(width, cond_dim, embed_dim, groups)
        self.out_proj = nn.Linear(width, data_dim)

    def forward(self, x, t_embed, z):
        h = self.in_proj(x)
        for block in self.blocks:
            h = block(h, t_embed, z)
        return self.out_proj(torch.nn.functional.silu(self.out_norm(h, t_embed, z)))


class _ConvBlock(nn.Module):
    def __init__(self, channels, cond_dim, embed_dim, groups):
        super().__init__()
        self.adagn1 = AdaptiveGroupNorm(channels, cond_dim, embed_dim, groups)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.adagn2 = AdaptiveGroupNorm(channels, cond_dim, embed_dim, groups)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, h, t_embed, z):
        y = self.conv1(torch.nn.functional.silu(self.adagn1(h, t_embed, z)))
        y = self.conv2(torch.nn.functional.silu(self.adagn2(y, t_embed, z)))
        return h + y


class UNetDenoiserNet(nn.Module):
    """Small two-level U-Net with AdaGN conditioning at every block.

    Two fixed coordinate channels are appended to the input so a global
    latent code can address spatial position through channel modulation.
    """

    def __init__(self, in_channels: int, cond_dim: int, base_channels: int = 32,
                 embed_dim: int = 64, groups: int = 8):
        super().__init__()
        c = base_channels
        self.stem = nn.Conv2d(in_channels + 2, c, 3, padding=1)
        self.enc = _ConvBlock(c, cond_dim, embed_dim, groups)
        self.down = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.mid1 = _ConvBlock(2 * c, cond_dim, embed_dim, groups)
        self.mid2 = _ConvBlock(2 * c, cond_dim, embed_dim, groups)
        self.up = nn.ConvTranspose2d(2 * c, c, 4, stride=2, padding=1)
        self.fuse = nn.Conv2d(2 * c, c, 3, padding=1)
        self.dec = _ConvBlock(c, cond_dim, embed_dim, groups)
        self.out_norm = AdaptiveGroupNorm(c, cond_dim, embed_dim, groups)
        self.out_conv = nn.Conv2d(c, in_channels, 3, padding=1)

    @staticmethod
    def _coords(x: torch.Tensor) -> torch.Tensor:
        n, _, hh, ww = x.shape
        ys = torch.linspace(-1.0, 1.0, hh, dtype=x.dtype, device=x.device)
        xs = torch.linspace(-1.0, 1.0, ww, dtype=x.dtype, device=x.device)
        gy, gx = torch.meshgrid(ys, xs, indexing="ij")
        grid = torch.stack([gy, gx])[None].expand(n, -1, -1, -1)
        return grid

    def forward(self, x, t_embed, z):
        h = self.stem(torch.cat([x, self._coords(x)], dim=1))
        skip = self.enc(h, t_embed, z)
        h = self.down(skip)
        h = self.mid1(h, t_embed, z)
        h = self.mid2(h, t_embed, z)
        h = self.up(h)
        h = self.fuse(torch.cat([h, skip], dim=1))
        h = self.dec(h, t_embed, z)
        return self.out_conv(torch.nn.functional.silu(self.out_norm(h, t_embed, z)))


class ConditionalDenoiser(nn.Module):
    """Preconditioning wrapper around a raw backbone network.

    The per-frame conditioning vector [static ; dynamic] passes through a
    small shared embedding MLP before the per-block AdaGN linear maps, so
    blocks can modulate on nonlinear functions of the code.  frame_shape,
    when given, lets samplers draw initial noise without an explicit x_init.
    """

    def __init__(self, net: nn.Module, cfg: DenoiserConfig, cond_dim: int | None = None,
                 cond_embed_dim: int | None = None, embed_dim: int = 64,
                 frame_shape: tuple[int, ...] | None = None):
        super().__init__()
        self.net = net
        self.cfg = cfg
        self.noise_embed = NoiseEmbedding(embed_dim)
        if cond_dim is not None and cond_embed_dim is not None:
            self.cond_embed = nn.Sequential(
                nn.Linear(cond_dim, cond_embed_dim), nn.SiLU(),
                nn.Linear(cond_embed_dim, cond_embed_dim), nn.SiLU(),
            )
        else:
            self.cond_embed = None
        self.frame_shape = tuple(frame_shape) if frame_shape is not None else None

    def denoise(self, x_t: torch.Tensor, sigma, z: torch.Tensor) -> DenoiserOutput:
        sigma = torch.as_tensor(sigma, dtype=x_t.dtype, device=x_t.device)
        if sigma.ndim == 0:
            sigma = sigma.expand(x_t.shape[0])
        if sigma.shape[0] != x_t.shape[0]:
            raise ContractViolation(
                f"sigma batch {sigma.shape[0]} != frame batch {x_t.shape[0]}")
        if z is not None and z.shape[0] != x_t.shape[0]:
            raise ContractViolation(f"z batch {z.shape[0]} != frame batch {x_t.shape[0]}")
        coeffs = precondition_coeffs(sigma, self.cfg)
        c_skip = expand_like(coeffs.c_skip, x_t)
        c_in = expand_like(coeffs.c_in, x_t)
        c_out = expand_like(coeffs.c_out, x_t)
        t_embed = self.noise_embed(coeffs.c_noise)
        cond = self.cond_embed(z) if self.cond_embed is not None else z
        f_raw = self.net(c_in * x_t, t_embed, cond)
        return DenoiserOutput(x0_hat=c_skip * x_t + c_out * f_raw, f_raw=f_raw)

    forward = denoise


class AnalyticGaussianDenoiser:
    """Exact posterior-mean denoiser for data drawn N(mu, s2 * I).

    x0_hat(x_t, sigma) = (s2 * x_t + sigma^2 * mu) / (s2 + sigma^2); the
    conditioning argument is ignored.  Used as a closed-form oracle for
    sampler tests.
    """

    def __init__(self, mu: torch.Tensor, s2: float, cfg: DenoiserConfig | None = None):
        if s2 <= 0:
            raise ConfigurationError(f"s2 must be positive, got {s2}")
        self.mu = torch.as_tensor(mu)
        self.s2 = float(s2)
        self.cfg = cfg if cfg is not None else DenoiserConfig()
        self.frame_shape = tuple(self.mu.shape)

    def denoise(self, x_t: torch.Tensor, sigma, z=None) -> DenoiserOutput:
        sigma = torch.as_tensor(sigma, dtype=x_t.dtype, device=x_t.device)
        if sigma.ndim == 1:
            sigma = expand_like(sigma, x_t)
        mu = self.mu.to(dtype=x_t.dtype, device=x_t.device)
        x0_hat = (self.s2 * x_t + sigma ** 2 * mu) / (self.s2 + sigma ** 2)
        coeffs = precondition_coeffs(sigma, self.cfg)
        f_raw = (x0_hat - coeffs.c_skip * x_t) / coeffs.c_out
        return DenoiserOutput(x0_hat=x0_hat, f_raw=f_raw)


def analytic_gaussian_denoiser(mu, s2: float, cfg: DenoiserConfig | None = None):
    """Build the Gaussian oracle denoiser (test fixture, not a model)."""
    return AnalyticGaussianDenoiser(mu, s2, cfg)
