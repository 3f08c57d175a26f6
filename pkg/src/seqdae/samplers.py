"""Conditioned stochastic Heun sampler, stochastic encoding, and the
composite swap / reconstruction procedures.

The sampler integrates the probability-flow ODE dx/dt = (x - D(x, z; t)) / t
from the top noise level down to 0 with a second-order (Heun) correction on
every step except the final one, optionally re-injecting noise before each
step ("churn").  Stochastic encoding runs the same integrator upward from
the clean input, treating it as lying at the smallest positive level, and
skips the correction on the step that lands on sigma_max.

Frames are denoised independently given their conditioning vectors, so all
(sequence, frame) pairs are processed as one flat batch; per-frame noise
comes from counter-based streams keyed by (seed, sequence, frame), which
makes single-frame and joint sampling agree bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .diffusion import MAX_GAMMA, SigmaSchedule
from .encoder import LatentFactors, SequenceEncoder
from .errors import ContractViolation
from .streams import frame_streams

SAMPLE_STREAM = 0
ENCODE_STREAM = 1


@dataclass
class SampleRequest:
    """Inputs for one conditioned sampling run.

    x_init, when given, is a sequence tensor already at the top noise level
    (typically a stochastic-encoding output); otherwise the initial state is
    drawn from N(0, t_0^2 I) per frame.
    """

    z: LatentFactors
    schedule: SigmaSchedule
    x_init: torch.Tensor | None = None
    seed: int = 0
    sequence_offset: int = 0
    frame_offset: int = 0


def _flat_conditioning(z: LatentFactors) -> torch.Tensor:
    cond = z.frame_conditioning()
    return cond.reshape(-1, cond.shape[-1])


def _draw(streams, frame_shape, dtype, device, scale: float = 1.0) -> torch.Tensor:
    rows = [g.standard_normal(frame_shape) for g in streams]
    out = torch.as_tensor(np.stack(rows), dtype=dtype, device=device)
    return out * scale if scale != 1.0 else out


@torch.no_grad()
def conditioned_sample(req: SampleRequest, denoiser) -> torch.Tensor:
    """Integrate the reverse process from t_0 down to 0 under fixed factors.

    Returns a (B, V, ...) sequence tensor at noise level 0.
    """
    sched = req.schedule
    levels = sched.levels
    if levels[-1] != 0.0:
        raise ContractViolation("schedule must end at level 0")
    b, v = req.z.dynamic.shape[0], req.z.n_frames
    cond = _flat_conditioning(req.z)
    gammas = sched.gammas()

    if req.x_init is not None:
        if req.x_init.shape[0] != b or req.x_init.shape[1] != v:
            raise ContractViolation(
                f"x_init shape {tuple(req.x_init.shape)} does not match factors ({b}, {v})")
        x = req.x_init.reshape(b * v, *req.x_init.shape[2:]).clone()
        frame_shape = tuple(req.x_init.shape[2:])
        streams = None
    else:
        frame_shape = getattr(denoiser, "frame_shape", None)
        if frame_shape is None:
            raise ContractViolation("x_init missing and denoiser does not define frame_shape")
        streams = frame_streams(req.seed, b, v, req.sequence_offset,
                                req.frame_offset, SAMPLE_STREAM)
        dtype = req.z.dynamic.dtype if req.z.dynamic.is_floating_point() else torch.float32
        x = _draw(streams, frame_shape, dtype, req.z.dynamic.device, scale=float(levels[0]))

    for i in range(sched.n_steps):
        t_cur, t_next, gamma = float(levels[i]), float(levels[i + 1]), float(gammas[i])
        if gamma > 0.0:
            if streams is None:
                streams = frame_streams(req.seed, b, v, req.sequence_offset,
                                        req.frame_offset, SAMPLE_STREAM)
            t_hat = t_cur * (1.0 + gamma)
            eps = _draw(streams, frame_shape, x.dtype, x.device, scale=sched.s_noise)
            x_hat = x + math.sqrt(t_hat ** 2 - t_cur ** 2) * eps
        else:
            t_hat, x_hat = t_cur, x
        denoised = denoiser.denoise(x_hat, t_hat, cond).x0_hat
        d_cur = (x_hat - denoised) / t_hat
        # Euler landing in ratio form: exact x = denoised when t_next == 0.
        x = denoised + (t_next / t_hat) * (x_hat - denoised)
        if t_next != 0.0:
            d_next = (x - denoiser.denoise(x, t_next, cond).x0_hat) / t_next
            x = x_hat + (t_next - t_hat) * 0.5 * (d_cur + d_next)
    return x.reshape(b, v, *x.shape[1:])


@torch.no_grad()
def stochastic_encode(x0: torch.Tensor, z: LatentFactors, schedule: SigmaSchedule,
                      denoiser, seed: int = 0, sequence_offset: int = 0,
                      frame_offset: int = 0) -> torch.Tensor:
    """Integrate the probability-flow ODE upward to the top noise level.

    The clean input is treated as the state at the smallest positive level,
    incurring an O(sigma_min) startup error.  Inverts conditioned_sample up
    to discretization error when churn is off.
    """
    if x0.ndim < 3:
        raise ContractViolation(f"expected (B, V, ...) input, got {tuple(x0.shape)}")
    b, v = x0.shape[0], x0.shape[1]
    if z.dynamic.shape[0] != b or z.n_frames != v:
        raise ContractViolation("factor shapes do not match the input sequence")
    asc = schedule.ascending()
    sigma_max = float(asc[-1])
    cond = _flat_conditioning(z)
    gamma_val = min(schedule.s_churn / max(len(asc) - 1, 1), MAX_GAMMA)
    streams = None

    x = x0.reshape(b * v, *x0.shape[2:]).clone()
    frame_shape = tuple(x0.shape[2:])
    for i in range(len(asc) - 1):
        t_cur, t_next = float(asc[i]), float(asc[i + 1])
        in_window = schedule.s_tmin <= t_cur <= schedule.s_tmax
        gamma = gamma_val if in_window else 0.0
        if gamma > 0.0:
            if streams is None:
                streams = frame_streams(seed, b, v, sequence_offset,
                                        frame_offset, ENCODE_STREAM)
            t_hat = t_cur * (1.0 + gamma)
            eps = _draw(streams, frame_shape, x.dtype, x.device, scale=schedule.s_noise)
            x_hat = x + math.sqrt(t_hat ** 2 - t_cur ** 2) * eps
        else:
            t_hat, x_hat = t_cur, x
        denoised = denoiser.denoise(x_hat, t_hat, cond).x0_hat
        d_cur = (x_hat - denoised) / t_hat
        x = denoised + (t_next / t_hat) * (x_hat - denoised)
        if t_next != sigma_max:
            d_next = (x - denoiser.denoise(x, t_next, cond).x0_hat) / t_next
            x = x_hat + (t_next - t_hat) * 0.5 * (d_cur + d_next)
    return x.reshape(b, v, *x.shape[1:])


def _merge_factors(static_source: LatentFactors, dynamic_source: LatentFactors) -> LatentFactors:
    return LatentFactors(static=static_source.static, dynamic=dynamic_source.dynamic)


@torch.no_grad()
def conditional_swap(x_static_src: torch.Tensor, x_dyn_src: torch.Tensor,
                     encoder: SequenceEncoder, denoiser, schedule: SigmaSchedule,
                     seed: int = 0, encode_conditioning: str = "dyn_source") -> torch.Tensor:
    """Reconstruct sequences carrying one input's static code and the other's
    dynamics.

    The dynamic-source sequences are stochastically encoded and the result
    seeds the reverse sampler, which runs under the merged factors.  The
    encoding pass is conditioned on the dynamic source's own factors by
    default ("dyn_source"); under "swapped" it uses the merged factors, which
    makes the round trip collapse to a reconstruction of the dynamic source
    whenever churn is off (kept only for comparison runs).
    """
    if x_static_src.shape != x_dyn_src.shape:
        raise ContractViolation(
            f"swap inputs must share shape, got {tuple(x_static_src.shape)} "
            f"vs {tuple(x_dyn_src.shape)}")
    if encode_conditioning not in ("dyn_source", "swapped"):
        raise ContractViolation(f"unknown encode_conditioning {encode_conditioning!r}")
    z_static = encoder(x_static_src)
    z_dyn = encoder(x_dyn_src)
    z_bar = _merge_factors(z_static, z_dyn)
    enc_cond = z_dyn if encode_conditioning == "dyn_source" else z_bar
    x_init = stochastic_encode(x_dyn_src, enc_cond, schedule, denoiser, seed=seed)
    return conditioned_sample(SampleRequest(z=z_bar, schedule=schedule,
                                            x_init=x_init, seed=seed), denoiser)


@torch.no_grad()
def reconstruct(x: torch.Tensor, encoder: SequenceEncoder, denoiser,
                schedule: SigmaSchedule, seed: int = 0) -> torch.Tensor:
    """Encode, stochastically encode, then sample back under the same factors."""
    z = encoder(x)
    x_init = stochastic_encode(x, z, schedule, denoiser, seed=seed)
    return conditioned_sample(SampleRequest(z=z, schedule=schedule,
                                            x_init=x_init, seed=seed), denoiser)
