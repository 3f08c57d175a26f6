"""Sequential semantic encoder.

Maps a clean sequence to one static code per sequence and one low-dimensional
dynamic code per frame.  Frames pass through a per-frame backbone and linear
layer, a unidirectional LSTM summarizes them; the static code reads the last
hidden state and the dynamic codes come from a second LSTM pass.  Both
recurrences run strictly forward, so the dynamic code of frame tau is a
function of frames <= tau only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, ContractViolation
from .streams import as_generator


@dataclass(frozen=True)
class EncoderConfig:
    frame_feature_dim: int = 64
    hidden_dim: int = 64
    static_dim: int = 16
    dynamic_dim: int = 4
    backbone: str = "mlp"
    share_static: bool = True

    def __post_init__(self):
        for name in ("frame_feature_dim", "hidden_dim", "static_dim", "dynamic_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.dynamic_dim > self.static_dim:
            raise ConfigurationError(
                f"dynamic_dim {self.dynamic_dim} must not exceed static_dim {self.static_dim}")
        if self.backbone not in ("mlp", "conv"):
            raise ConfigurationError(f"unknown backbone {self.backbone!r}")


@dataclass
class LatentFactors:
    """One static code plus per-frame dynamic codes for a batch of sequences.

    static has shape (B, h) when shared across the sequence, or (B, V, h)
    for the non-shared ablation.  dynamic always has shape (B, V, k).
    """

    static: torch.Tensor
    dynamic: torch.Tensor

    def __post_init__(self):
        if self.dynamic.ndim != 3:
            raise ContractViolation(f"dynamic must be (B, V, k), got {tuple(self.dynamic.shape)}")
        if self.static.ndim not in (2, 3):
            raise ContractViolation(f"static must be (B, h) or (B, V, h), got {tuple(self.static.shape)}")
        if self.static.shape[0] != self.dynamic.shape[0]:
            raise ContractViolation("static and dynamic batch sizes differ")
        if self.static.ndim == 3 and self.static.shape[1] != self.dynamic.shape[1]:
            raise ContractViolation("per-frame static and dynamic frame counts differ")

    @property
    def is_shared(self) -> bool:
        return self.static.ndim == 2

    @property
    def n_frames(self) -> int:
        return self.dynamic.shape[1]

    @property
    def static_dim(self) -> int:
        return self.static.shape[-1]

    @property
    def dynamic_dim(self) -> int:
        return self.dynamic.shape[-1]

    def frame_conditioning(self) -> torch.Tensor:
        """Per-frame conditioning vectors [static ; dynamic], shape (B, V, h + k)."""
        if self.is_shared:
            stat = self.static[:, None, :].expand(-1, self.n_frames, -1)
        else:
            stat = self.static
        return torch.cat([stat, self.dynamic], dim=-1)

    def detach(self) -> "LatentFactors":
        return LatentFactors(self.static.detach(), self.dynamic.detach())


class _ConvFrameBackbone(nn.Module):
    """Three strided conv blocks followed by a linear projection."""

    def __init__(self, frame_shape, out_dim):
        super().__init__()
        c = frame_shape[0]
        self.convs = nn.Sequential(
            nn.Conv2d(c, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.SiLU(),
        )
        with torch.no_grad():
            probe = self.convs(torch.zeros(1, *frame_shape))
        self.proj = nn.Linear(probe.numel(), out_dim)

    def forward(self, x):
        return self.proj(self.convs(x).flatten(1))


class _MlpFrameBackbone(nn.Module):
    def __init__(self, frame_shape, out_dim):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(frame_shape[0], out_dim), nn.SiLU(),
            nn.Linear(out_dim, out_dim),
        )

    def forward(self, x):
        return self.net(x)


class SequenceEncoder(nn.Module):
    """Encode a batch of sequences into latent factors.

    frame_shape is (d,) for vector frames (backbone "mlp") or (C, H, W) for
    image frames (backbone "conv").
    """

    def __init__(self, cfg: EncoderConfig, frame_shape: tuple[int, ...]):
        super().__init__()
        frame_shape = tuple(frame_shape)
        if cfg.backbone == "conv" and len(frame_shape) != 3:
            raise ConfigurationError(f"conv backbone needs (C, H, W) frames, got {frame_shape}")
        if cfg.backbone == "mlp" and len(frame_shape) != 1:
            raise ConfigurationError(f"mlp backbone needs flat frames, got {frame_shape}")
        self.cfg = cfg
        self.frame_shape = frame_shape
        if cfg.backbone == "conv":
            self.backbone = _ConvFrameBackbone(frame_shape, cfg.frame_feature_dim)
        else:
            self.backbone = _MlpFrameBackbone(frame_shape, cfg.frame_feature_dim)
        self.frame_proj = nn.Linear(cfg.frame_feature_dim, cfg.hidden_dim)
        self.summary_lstm = nn.LSTM(cfg.hidden_dim, cfg.hidden_dim, batch_first=True)
        self.static_head = nn.Linear(cfg.hidden_dim, cfg.static_dim)
        self.dynamic_lstm = nn.LSTM(cfg.hidden_dim, cfg.hidden_dim, batch_first=True)
        self.dynamic_head = nn.Linear(cfg.hidden_dim, cfg.dynamic_dim)

    @property
    def conditioning_dim(self) -> int:
        return self.cfg.static_dim + self.cfg.dynamic_dim

    def forward(self, x: torch.Tensor) -> LatentFactors:
        if x.ndim < 3 or x.shape[1] < 1:
            raise ContractViolation(f"expected (B, V, ...) with V >= 1, got {tuple(x.shape)}")
        if tuple(x.shape[2:]) != self.frame_shape:
            raise ContractViolation(
                f"frame shape {tuple(x.shape[2:])} does not match encoder {self.frame_shape}")
        b, v = x.shape[0], x.shape[1]
        feats = self.backbone(x.reshape(b * v, *self.frame_shape))
        feats = self.frame_proj(feats).reshape(b, v, -1)
        hidden, _ = self.summary_lstm(feats)
        if self.cfg.share_static:
            static = self.static_head(hidden[:, -1, :])
        else:
            static = self.static_head(hidden)
        summarized, _ = self.dynamic_lstm(hidden)
        dynamic = self.dynamic_head(summarized)
        return LatentFactors(static=static, dynamic=dynamic)

    encode = forward


def encode_stochastic_latent(x0: torch.Tensor, sigma: float, rng) -> torch.Tensor:
    """Noise a clean frame to level sigma: x0 + sigma * eps, eps ~ N(0, I)."""
    if sigma <= 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    rng = as_generator(rng)
    eps = rng.standard_normal(tuple(x0.shape))
    return x0 + sigma * torch.as_tensor(eps, dtype=x0.dtype, device=x0.device)
