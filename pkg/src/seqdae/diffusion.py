"""Noise-level machinery: preconditioning, training-noise draws, the training
loss, and the inference step schedule.

The denoiser is parameterized as

    x0_hat = c_skip(sigma) * x_t + c_out(sigma) * F(c_in(sigma) * x_t, z, c_noise(sigma))

with the standard closed forms

    c_skip  = sigma_data^2 / (sigma^2 + sigma_data^2)
    c_in    = 1 / sqrt(sigma^2 + sigma_data^2)
    c_out   = sigma * sigma_data / sqrt(sigma^2 + sigma_data^2)
    c_noise = ln(sigma) / 4

All functions here are pure; they accept floats, numpy arrays, or torch
tensors and preserve the input's type and dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import torch

from .errors import ConfigurationError, ContractViolation, DomainError
from .streams import as_generator

MAX_GAMMA = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class DenoiserConfig:
    """Noise-distribution and schedule constants.

    sigma_data is the target per-element standard deviation of the training
    data; p_mean / p_std parameterize the log-normal training noise draw.
    """

    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0

    def __post_init__(self):
        if self.sigma_data <= 0:
            raise ConfigurationError(f"sigma_data must be positive, got {self.sigma_data}")
        if self.p_std < 0:
            raise ConfigurationError(f"p_std must be nonnegative, got {self.p_std}")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ConfigurationError(
                f"need 0 < sigma_min < sigma_max, got ({self.sigma_min}, {self.sigma_max})")
        if self.rho <= 0:
            raise ConfigurationError(f"rho must be positive, got {self.rho}")


class PreconditionCoeffs(NamedTuple):
    c_skip: object
    c_in: object
    c_out: object
    c_noise: object


def _log(x):
    if isinstance(x, torch.Tensor):
        return torch.log(x)
    if isinstance(x, np.ndarray):
        return np.log(x)
    return math.log(x)


def _sqrt(x):
    if isinstance(x, torch.Tensor):
        return torch.sqrt(x)
    if isinstance(x, np.ndarray):
        return np.sqrt(x)
    return math.sqrt(x)


def precondition_coeffs(sigma, cfg: DenoiserConfig) -> PreconditionCoeffs:
    """Per-sigma scaling coefficients for the preconditioned denoiser."""
    if isinstance(sigma, (int, float)):
        if sigma <= 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
    else:
        lo = sigma.min()
        if float(lo) <= 0:
            raise DomainError("sigma must be positive everywhere")
    sd2 = cfg.sigma_data ** 2
    denom = sigma ** 2 + sd2
    root = _sqrt(denom)
    return PreconditionCoeffs(
        c_skip=sd2 / denom,
        c_in=1.0 / root,
        c_out=sigma * cfg.sigma_data / root,
        c_noise=_log(sigma) / 4.0,
    )


def sample_training_sigma(cfg: DenoiserConfig, rng, size=None):
    """Draw training noise levels with ln(sigma) ~ Normal(p_mean, p_std^2).

    Returns a float when size is None, else an ndarray of that shape.
    """
    rng = as_generator(rng)
    draw = rng.standard_normal(size)
    out = np.exp(cfg.p_mean + cfg.p_std * draw)
    if size is None:
        return float(out)
    return out


def expand_like(values: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Reshape a per-sample vector (N,) so it broadcasts against (N, ...)."""
    if values.ndim == 0:
        return values
    return values.reshape(values.shape[0], *([1] * (reference.ndim - 1)))


def training_loss(x0: torch.Tensor, z: torch.Tensor, sigma: torch.Tensor,
                  noise: torch.Tensor, denoiser) -> torch.Tensor:
    """Denoising score-matching loss for one batch of frames.

    x0:    clean frames, shape (N, ...).
    z:     per-frame conditioning vectors, shape (N, cond_dim).
    sigma: per-frame noise levels, shape (N,) or scalar.
    noise: standard-normal tensor shaped like x0.

    With the loss weight fixed at 1 / c_out(sigma)^2 the effective
    per-sample term is the unit-weight MSE between the raw network output
    and its regression target (x0 - c_skip * x_t) / c_out.
    """
    if noise.shape != x0.shape:
        raise ContractViolation(f"noise shape {tuple(noise.shape)} != x0 shape {tuple(x0.shape)}")
    sigma = torch.as_tensor(sigma, dtype=x0.dtype, device=x0.device)
    sig = expand_like(sigma, x0)
    x_t = x0 + sig * noise
    out = denoiser.denoise(x_t, sigma, z)
    coeffs = precondition_coeffs(sig, denoiser.cfg)
    target = (x0 - coeffs.c_skip * x_t) / coeffs.c_out
    lam = 1.0 / coeffs.c_out ** 2
    weight = lam * coeffs.c_out ** 2
    return (weight * (out.f_raw - target) ** 2).mean()


@dataclass(frozen=True)
class SigmaSchedule:
    """Decreasing noise levels t_0 > ... > t_{N-1} > t_N = 0 plus churn knobs.

    levels has N + 1 entries; the sampler takes N integration steps.  The
    per-step churn factor gamma_i is min(s_churn / N, sqrt(2) - 1) whenever
    t_i falls inside [s_tmin, s_tmax] and 0 otherwise.
    """

    levels: np.ndarray
    s_churn: float = 0.0
    s_noise: float = 1.0
    s_tmin: float = 0.0
    s_tmax: float = float("inf")

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, "levels", levels)
        if levels.ndim != 1 or levels.size < 2:
            raise ConfigurationError("schedule needs at least one step (two levels)")
        if not np.all(np.diff(levels) < 0):
            raise ConfigurationError("levels must be strictly decreasing")
        if levels[-1] != 0.0:
            raise ConfigurationError(f"final level must be exactly 0, got {levels[-1]}")
        if self.s_churn < 0 or self.s_noise <= 0:
            raise ConfigurationError("need s_churn >= 0 and s_noise > 0")

    @property
    def n_steps(self) -> int:
        return len(self.levels) - 1

    def gammas(self) -> np.ndarray:
        """Churn factor per step, zero outside the [s_tmin, s_tmax] window."""
        t = self.levels[:-1]
        gamma = np.where(
            (t >= self.s_tmin) & (t <= self.s_tmax),
            min(self.s_churn / self.n_steps, MAX_GAMMA),
            0.0,
        )
        return gamma

    def ascending(self) -> np.ndarray:
        """Positive levels from smallest to largest (encoding traversal)."""
        return self.levels[:-1][::-1].copy()


def karras_step_schedule(n: int, cfg: DenoiserConfig, *, s_churn: float = 0.0,
                         s_noise: float = 1.0, s_tmin: float = 0.0,
                         s_tmax: float = float("inf")) -> SigmaSchedule:
    """Polynomially spaced noise levels from sigma_max down to 0.

    t_i = (sigma_max^(1/rho) + i/(n-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho
    for i < n, and t_n = 0.  n = 1 degenerates to [sigma_max, 0].
    """
    if n < 1:
        raise DomainError(f"step count must be >= 1, got {n}")
    if n == 1:
        levels = np.array([cfg.sigma_max, 0.0])
    else:
        i = np.arange(n, dtype=np.float64)
        lo = cfg.sigma_min ** (1.0 / cfg.rho)
        hi = cfg.sigma_max ** (1.0 / cfg.rho)
        levels = (hi + i / (n - 1) * (lo - hi)) ** cfg.rho
        levels = np.concatenate([levels, [0.0]])
    return SigmaSchedule(levels=levels, s_churn=s_churn, s_noise=s_noise,
                         s_tmin=s_tmin, s_tmax=s_tmax)
