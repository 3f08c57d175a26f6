"""seqdae: a diffusion autoencoder that factorizes sequences into one static
code and per-frame dynamic codes, trained with a single denoising loss."""

from .config import ExperimentConfig, default_config
from .data import (Codec, SequenceBatch, SequenceLabels, fit_normalizer,
                   gen_bouncing_shape, gen_toy_physio, gen_toy_speaker,
                   identity_codec, normalize)
from .denoiser import (AdaptiveGroupNorm, AnalyticGaussianDenoiser,
                       ConditionalDenoiser, analytic_gaussian_denoiser)
from .diffusion import (DenoiserConfig, PreconditionCoeffs, SigmaSchedule,
                        karras_step_schedule, precondition_coeffs,
                        sample_training_sigma, training_loss)
from .encoder import EncoderConfig, LatentFactors, SequenceEncoder, encode_stochastic_latent
from .estimators import LatentFactorPrior, SequenceDisentangler
from .metrics import (VerificationTrial, compute_eer, disentanglement_gap,
                      downstream_probes, pca_traverse, reconstruction_mse,
                      swap_preservation_scores)
from .model import TrainedModel
from .prior import (LatentPrior, LatentPriorConfig, energy_distance,
                    flatten_latents, independent_prior_baseline, sample_prior,
                    unflatten_latents)
from .report import MetricsReport
from .samplers import (SampleRequest, conditional_swap, conditioned_sample,
                       reconstruct, stochastic_encode)
from .training import train, train_prior

__version__ = "0.1.0"

__all__ = [
    "AdaptiveGroupNorm", "AnalyticGaussianDenoiser", "Codec",
    "ConditionalDenoiser", "DenoiserConfig", "EncoderConfig",
    "ExperimentConfig", "LatentFactorPrior", "LatentFactors", "LatentPrior",
    "LatentPriorConfig", "MetricsReport", "PreconditionCoeffs",
    "SampleRequest", "SequenceBatch", "SequenceDisentangler",
    "SequenceEncoder", "SequenceLabels", "SigmaSchedule", "TrainedModel",
    "VerificationTrial", "analytic_gaussian_denoiser", "compute_eer",
    "conditional_swap", "conditioned_sample", "default_config",
    "disentanglement_gap", "downstream_probes", "encode_stochastic_latent",
    "energy_distance", "fit_normalizer", "flatten_latents",
    "gen_bouncing_shape", "gen_toy_physio", "gen_toy_speaker",
    "identity_codec", "independent_prior_baseline", "karras_step_schedule",
    "normalize", "pca_traverse", "precondition_coeffs", "reconstruct",
    "reconstruction_mse", "sample_prior", "sample_training_sigma",
    "stochastic_encode", "swap_preservation_scores", "train", "train_prior",
    "training_loss", "unflatten_latents",
]
