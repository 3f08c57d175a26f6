"""Checkpoint container: model parameters, optimizer and RNG state, the
config that produced them, and normalizer statistics.

A checkpoint restored mid-training reproduces the next optimization step
bitwise (parameters, optimizer moments, and both RNG streams round-trip).
Loading a checkpoint with an unknown format version fails loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ContractViolation

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config_text: str
    config_hash: str
    encoder_state: dict
    denoiser_state: dict
    normalizer_state: dict
    step: int = 0
    optimizer_state: dict | None = None
    torch_rng_state: torch.Tensor | None = None
    numpy_rng_state: dict | None = None
    prior_state: dict | None = None
    format_version: int = CHECKPOINT_VERSION

    def save(self, path) -> None:
        payload = {
            "format_version": self.format_version,
            "config_text": self.config_text,
            "config_hash": self.config_hash,
            "encoder_state": self.encoder_state,
            "denoiser_state": self.denoiser_state,
            "normalizer_state": self.normalizer_state,
            "step": self.step,
            "optimizer_state": self.optimizer_state,
            "torch_rng_state": self.torch_rng_state,
            "numpy_rng_state": self.numpy_rng_state,
            "prior_state": self.prior_state,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        version = payload.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise ContractViolation(
                f"checkpoint {path} has format version {version}, "
                f"this build reads version {CHECKPOINT_VERSION}")
        return cls(**{k: payload[k] for k in payload})


def normalizer_to_state(norm) -> dict:
    return {"shift": np.asarray(norm.shift), "scale": np.asarray(norm.scale),
            "modality": norm.modality, "target_std": norm.target_std}


def normalizer_from_state(state: dict):
    from .data import Normalizer

    return Normalizer(shift=np.asarray(state["shift"]), scale=np.asarray(state["scale"]),
                      modality=state["modality"], target_std=state["target_std"])
