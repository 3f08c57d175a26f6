"""Latent diffusion prior over the joint factor vector.

A small noise-prediction MLP is trained on flattened (static, dynamic)
vectors with the standard discrete forward process

    z_t = sqrt(alpha_bar_t) * z_0 + sqrt(1 - alpha_bar_t) * eps

under a linear beta schedule, and sampled deterministically (eta = 0) on a
uniformly strided subset of steps.  Training the prior jointly over the full
vector lets it capture statistical dependence between the static and dynamic
parts; the independent baseline trains one prior per part instead and exists
only for that comparison.

Latent pools are standardized per dimension before training and samples are
de-standardized on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .encoder import LatentFactors
from .errors import ConfigurationError, ContractViolation, DomainError
from .streams import as_generator


@dataclass(frozen=True)
class LatentPriorConfig:
    joint_dim: int
    diffusion_steps: int = 1000
    beta_schedule: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    mlp_layers: int = 10
    mlp_hidden: int = 128
    inference_steps: int = 50

    def __post_init__(self):
        if self.diffusion_steps < 1:
            raise ConfigurationError("diffusion_steps must be >= 1")
        if self.joint_dim < 1:
            raise ConfigurationError("joint_dim must be >= 1")
        if self.beta_schedule != "linear":
            raise ConfigurationError(f"unsupported beta schedule {self.beta_schedule!r}")
        if not 0 < self.beta_start < self.beta_end < 1:
            raise ConfigurationError("need 0 < beta_start < beta_end < 1")
        if self.mlp_layers < 1 or self.mlp_hidden < 1:
            raise ConfigurationError("mlp size must be positive")


def flatten_latents(z: LatentFactors) -> torch.Tensor:
    """Concatenate [static ; dynamic_1 ; ... ; dynamic_V] into one vector."""
    if not z.is_shared:
        raise ContractViolation("prior operates on shared-static factors only")
    b, v, k = z.dynamic.shape
    return torch.cat([z.static, z.dynamic.reshape(b, v * k)], dim=1)


def unflatten_latents(vec: torch.Tensor, static_dim: int, n_frames: int,
                      dynamic_dim: int) -> LatentFactors:
    """Exact inverse of flatten_latents for given dimensions."""
    expected = static_dim + n_frames * dynamic_dim
    if vec.shape[1] != expected:
        raise ContractViolation(f"joint dim {vec.shape[1]} != {expected}")
    static = vec[:, :static_dim]
    dynamic = vec[:, static_dim:].reshape(vec.shape[0], n_frames, dynamic_dim)
    return LatentFactors(static=static, dynamic=dynamic)


def alpha_bars(cfg: LatentPriorConfig) -> np.ndarray:
    """Cumulative products of (1 - beta_t), t = 1..T, linear beta schedule."""
    betas = np.linspace(cfg.beta_start, cfg.beta_end, cfg.diffusion_steps)
    return np.cumprod(1.0 - betas)


class NoisePredictor(nn.Module):
    """Plain MLP predicting the injected noise from (z_t, t/T)."""

    def __init__(self, cfg: LatentPriorConfig):
        super().__init__()
        width = cfg.mlp_hidden
        layers: list[nn.Module] = [nn.Linear(cfg.joint_dim + 2, width), nn.SiLU()]
        for _ in range(cfg.mlp_layers - 2):
            layers += [nn.Linear(width, width), nn.SiLU()]
        layers.append(nn.Linear(width, cfg.joint_dim))
        self.net = nn.Sequential(*layers)
        self.T = cfg.diffusion_steps

    def forward(self, z_t: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        frac = t.to(z_t.dtype)[:, None] / self.T
        feats = torch.cat([z_t, frac, torch.cos(torch.pi * frac)], dim=1)
        return self.net(feats)


def latent_ddim_loss(z0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor,
                     model: NoisePredictor, bars: np.ndarray) -> torch.Tensor:
    """Noise-prediction MSE at step t (1-based) of the forward process."""
    t = torch.as_tensor(t)
    if t.ndim == 0:
        t = t.expand(z0.shape[0])
    if int(t.min()) < 1 or int(t.max()) > len(bars):
        raise DomainError(f"t must lie in 1..{len(bars)}")
    ab = torch.as_tensor(bars, dtype=z0.dtype, device=z0.device)[t - 1][:, None]
    z_t = torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps
    return ((model(z_t, t) - eps) ** 2).mean()


@dataclass
class LatentPrior:
    """A trained (or trainable) prior over standardized joint latents."""

    cfg: LatentPriorConfig
    model: NoisePredictor
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def create(cls, cfg: LatentPriorConfig, seed: int = 0) -> "LatentPrior":
        torch.manual_seed(seed)
        return cls(cfg=cfg, model=NoisePredictor(cfg),
                   mean=np.zeros(cfg.joint_dim), std=np.ones(cfg.joint_dim))

    def fit(self, pool: np.ndarray, steps: int = 2000, batch_size: int = 128,
            lr: float = 1e-3, weight_decay: float = 1e-5, seed: int = 0) -> list[float]:
        """Standardize the pool and train the noise predictor; returns losses."""
        pool = np.asarray(pool, dtype=np.float64)
        if pool.ndim != 2 or pool.shape[1] != self.cfg.joint_dim:
            raise ContractViolation(f"pool must be (n, {self.cfg.joint_dim})")
        self.mean = pool.mean(axis=0)
        std = pool.std(axis=0)
        std[std <= 1e-12] = 1.0
        self.std = std
        zs = torch.as_tensor(((pool - self.mean) / self.std), dtype=torch.float32)
        bars = alpha_bars(self.cfg)
        rng = as_generator(seed)
        opt = torch.optim.AdamW(self.model.parameters(), lr=lr, weight_decay=weight_decay)
        losses = []
        for _ in range(steps):
            idx = rng.integers(0, len(zs), batch_size)
            t = torch.as_tensor(rng.integers(1, self.cfg.diffusion_steps + 1, batch_size))
            eps = torch.as_tensor(rng.standard_normal((batch_size, self.cfg.joint_dim)),
                                  dtype=torch.float32)
            loss = latent_ddim_loss(zs[idx], t, eps, self.model, bars)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.item()))
        return losses

    @torch.no_grad()
    def sample_joint(self, n: int, steps: int | None = None, seed: int = 0) -> np.ndarray:
        """Deterministic reverse pass from N(0, I); returns joint vectors."""
        cfg = self.cfg
        steps = cfg.inference_steps if steps is None else steps
        steps = min(steps, cfg.diffusion_steps)
        bars = alpha_bars(cfg)
        stride = np.unique(np.linspace(1, cfg.diffusion_steps, steps).round().astype(int))[::-1]
        rng = as_generator(seed)
        z = torch.as_tensor(rng.standard_normal((n, cfg.joint_dim)), dtype=torch.float32)
        self.model.eval()
        for j, t in enumerate(stride):
            ab_t = float(bars[t - 1])
            tt = torch.full((n,), int(t), dtype=torch.long)
            eps_hat = self.model(z, tt)
            z0_hat = (z - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
            ab_prev = float(bars[stride[j + 1] - 1]) if j + 1 < len(stride) else 1.0
            z = np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
        out = z.numpy().astype(np.float64) * self.std + self.mean
        return out


def sample_prior(prior: LatentPrior, n: int, static_dim: int, n_frames: int,
                 dynamic_dim: int, steps: int | None = None, seed: int = 0) -> LatentFactors:
    """Draw joint factor samples and unflatten them."""
    joint = prior.sample_joint(n, steps=steps, seed=seed)
    return unflatten_latents(torch.as_tensor(joint, dtype=torch.float32),
                             static_dim, n_frames, dynamic_dim)


@dataclass
class IndependentPrior:
    """Two separate priors, one over the static part and one over the rest."""

    static_prior: LatentPrior
    dynamic_prior: LatentPrior
    static_dim: int

    def fit(self, pool: np.ndarray, **kwargs) -> None:
        pool = np.asarray(pool, dtype=np.float64)
        self.static_prior.fit(pool[:, :self.static_dim], **kwargs)
        self.dynamic_prior.fit(pool[:, self.static_dim:], **kwargs)

    def sample_joint(self, n: int, steps: int | None = None, seed: int = 0) -> np.ndarray:
        s = self.static_prior.sample_joint(n, steps=steps, seed=seed)
        d = self.dynamic_prior.sample_joint(n, steps=steps, seed=seed + 1)
        return np.concatenate([s, d], axis=1)


def independent_prior_baseline(cfg: LatentPriorConfig, static_dim: int,
                               seed: int = 0) -> IndependentPrior:
    """Split-dimension baseline for the dependent-vs-independent comparison."""
    if not 0 < static_dim < cfg.joint_dim:
        raise ConfigurationError("static_dim must split the joint dimension")
    s_cfg = replace(cfg, joint_dim=static_dim)
    d_cfg = replace(cfg, joint_dim=cfg.joint_dim - static_dim)
    return IndependentPrior(static_prior=LatentPrior.create(s_cfg, seed=seed),
                            dynamic_prior=LatentPrior.create(d_cfg, seed=seed + 1),
                            static_dim=static_dim)


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Energy distance between two sample sets: 2 E|X-Y| - E|X-X'| - E|Y-Y'|."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def _mean_pairwise(a, b):
        total = 0.0
        for row in range(0, len(a), 256):
            blk = a[row:row + 256]
            d2 = ((blk ** 2).sum(1)[:, None] + (b ** 2).sum(1)[None, :]
                  - 2.0 * blk @ b.T)
            total += np.sqrt(np.clip(d2, 0.0, None)).sum()
        return total / (len(a) * len(b))

    return 2.0 * _mean_pairwise(x, y) - _mean_pairwise(x, x) - _mean_pairwise(y, y)
