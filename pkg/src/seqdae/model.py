"""Bundle tying a trained encoder/denoiser pair to its normalizer and
sampling schedule, with numpy-facing convenience methods.

Everything that crosses this boundary is in data units; normalization and
tensor conversion happen here so callers (metrics, CLI, estimators) never
touch them directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .data import Normalizer
from .denoiser import ConditionalDenoiser
from .diffusion import DenoiserConfig, SigmaSchedule, karras_step_schedule
from .encoder import LatentFactors, SequenceEncoder
from .samplers import SampleRequest, conditioned_sample, conditional_swap, reconstruct


@dataclass
class TrainedModel:
    encoder: SequenceEncoder
    denoiser: ConditionalDenoiser
    normalizer: Normalizer
    generator: str | None = None
    sample_steps: int = 24
    swap_encode_conditioning: str = "dyn_source"
    swap_churn: float = 0.0

    def schedule(self, n_steps: int | None = None,
                 s_churn: float = 0.0) -> SigmaSchedule:
        return karras_step_schedule(n_steps or self.sample_steps, self.denoiser.cfg,
                                    s_churn=s_churn)

    def _to_tensor(self, frames: np.ndarray) -> torch.Tensor:
        normed = self.normalizer.apply(np.asarray(frames, dtype=np.float64))
        return torch.as_tensor(normed.astype(np.float32))

    def _to_frames(self, x: torch.Tensor) -> np.ndarray:
        return self.normalizer.invert(x.detach().numpy().astype(np.float64))

    @torch.no_grad()
    def encode(self, frames: np.ndarray) -> LatentFactors:
        self.encoder.eval()
        return self.encoder(self._to_tensor(frames))

    @torch.no_grad()
    def reconstruct(self, frames: np.ndarray, seed: int = 0,
                    n_steps: int | None = None) -> np.ndarray:
        self.encoder.eval()
        self.denoiser.eval()
        out = reconstruct(self._to_tensor(frames), self.encoder, self.denoiser,
                          self.schedule(n_steps), seed=seed)
        return self._to_frames(out)

    @torch.no_grad()
    def swap(self, static_src: np.ndarray, dynamic_src: np.ndarray, seed: int = 0,
             n_steps: int | None = None, s_churn: float | None = None) -> np.ndarray:
        """Swap sampling; churn defaults to the model's swap_churn setting.

        Noise re-injection during the reverse pass hands content decisions
        back to the conditioning, which strengthens the static transfer.
        """
        self.encoder.eval()
        self.denoiser.eval()
        churn = self.swap_churn if s_churn is None else s_churn
        out = conditional_swap(self._to_tensor(static_src), self._to_tensor(dynamic_src),
                               self.encoder, self.denoiser,
                               self.schedule(n_steps, s_churn=churn),
                               seed=seed, encode_conditioning=self.swap_encode_conditioning)
        return self._to_frames(out)

    @torch.no_grad()
    def resample_with_factors(self, frames: np.ndarray, z: LatentFactors,
                              seed: int = 0, n_steps: int | None = None) -> np.ndarray:
        """Re-decode sequences under modified factors (latent traversal).

        The sequences are stochastically encoded under their own factors and
        the reverse pass runs under `z`.
        """
        from .samplers import stochastic_encode

        self.encoder.eval()
        self.denoiser.eval()
        x = self._to_tensor(frames)
        sched = self.schedule(n_steps)
        x_init = stochastic_encode(x, self.encoder(x), sched, self.denoiser, seed=seed)
        out = conditioned_sample(SampleRequest(z=z, schedule=sched, x_init=x_init,
                                               seed=seed), self.denoiser)
        return self._to_frames(out)

    @torch.no_grad()
    def decode_factors(self, z: LatentFactors, seed: int = 0,
                       n_steps: int | None = None) -> np.ndarray:
        """Sample sequences from factors alone, starting at pure noise."""
        self.denoiser.eval()
        out = conditioned_sample(SampleRequest(z=z, schedule=self.schedule(n_steps),
                                               seed=seed), self.denoiser)
        return self._to_frames(out)

    @torch.no_grad()
    def reconstruction_mse(self, frames: np.ndarray, seed: int = 0,
                           n_steps: int | None = None) -> float:
        """Mean squared reconstruction error in normalized units."""
        x = self._to_tensor(frames)
        self.encoder.eval()
        self.denoiser.eval()
        rec = reconstruct(x, self.encoder, self.denoiser, self.schedule(n_steps), seed=seed)
        return float(((rec - x) ** 2).mean().item())
