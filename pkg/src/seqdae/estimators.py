"""scikit-learn style estimators wrapping the sequence model and the latent
prior, so both compose with pipelines and model-selection tooling.

``SequenceDisentangler.fit`` trains on an array of sequences and
``transform`` returns the flattened joint factor codes; ``reconstruct`` and
``swap`` expose the sampling procedures on raw arrays.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .config import (DatasetConfig, DenoiserNetConfig, ExperimentConfig,
                     OptimizerConfig)
from .data import SequenceBatch
from .diffusion import DenoiserConfig
from .encoder import EncoderConfig
from .prior import LatentPrior, LatentPriorConfig, flatten_latents
from .training import train
from .validation import check_matching_sequences, check_sequences


class SequenceDisentangler(BaseEstimator, TransformerMixin):
    """Diffusion autoencoder over sequences with a static/dynamic split.

    Parameters mirror the experiment configuration; fitting stores a
    ``model_`` bundle and the training ``losses_``.
    """

    def __init__(self, static_dim=16, dynamic_dim=4, hidden_dim=64,
                 frame_feature_dim=64, share_static=True, denoiser_width=192,
                 denoiser_depth=3, base_channels=32, sigma_data=0.5,
                 p_mean=-0.6, p_std=1.6, sigma_min=0.002, sigma_max=80.0,
                 rho=7.0, sample_steps=24, learning_rate=2e-3,
                 weight_decay=1e-5, batch_size=32, n_steps=2000, seed=0,
                 swap_encode_conditioning="dyn_source"):
        self.static_dim = static_dim
        self.dynamic_dim = dynamic_dim
        self.hidden_dim = hidden_dim
        self.frame_feature_dim = frame_feature_dim
        self.share_static = share_static
        self.denoiser_width = denoiser_width
        self.denoiser_depth = denoiser_depth
        self.base_channels = base_channels
        self.sigma_data = sigma_data
        self.p_mean = p_mean
        self.p_std = p_std
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.rho = rho
        self.sample_steps = sample_steps
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.seed = seed
        self.swap_encode_conditioning = swap_encode_conditioning

    def _config(self, X: np.ndarray) -> ExperimentConfig:
        modality = "image" if X.ndim == 5 else "vector"
        return ExperimentConfig(
            dataset=DatasetConfig(generator="custom", n_train=len(X), n_test=0,
                                  n_frames=X.shape[1], seed=self.seed),
            encoder=EncoderConfig(
                frame_feature_dim=self.frame_feature_dim, hidden_dim=self.hidden_dim,
                static_dim=self.static_dim, dynamic_dim=self.dynamic_dim,
                backbone="conv" if modality == "image" else "mlp",
                share_static=self.share_static),
            diffusion=DenoiserConfig(
                sigma_data=self.sigma_data, p_mean=self.p_mean, p_std=self.p_std,
                sigma_min=self.sigma_min, sigma_max=self.sigma_max, rho=self.rho),
            denoiser_net=DenoiserNetConfig(
                base_channels=self.base_channels, width=self.denoiser_width,
                depth=self.denoiser_depth),
            optimizer=OptimizerConfig(
                lr=self.learning_rate, weight_decay=self.weight_decay,
                batch_size=self.batch_size, steps=self.n_steps),
            seed=self.seed,
            swap_encode_conditioning=self.swap_encode_conditioning,
        )

    def fit(self, X, y=None):
        X = check_sequences(X)
        modality = "image" if X.ndim == 5 else "vector"
        batch = SequenceBatch(frames=X, modality=modality)
        result = train(self._config(X), batch)
        self.model_ = result.model
        self.losses_ = result.losses
        self.n_frames_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this SequenceDisentangler is not fitted yet")

    def encode(self, X):
        """Latent factors of X: (static (n, h), dynamic (n, V, k)) arrays."""
        self._check_fitted()
        z = self.model_.encode(check_sequences(X))
        return z.static.numpy(), z.dynamic.numpy()

    def transform(self, X):
        """Flattened joint codes [static ; dynamic_1 ; ... ; dynamic_V]."""
        self._check_fitted()
        z = self.model_.encode(check_sequences(X))
        return flatten_latents(z).numpy()

    def reconstruct(self, X, seed: int = 0):
        self._check_fitted()
        return self.model_.reconstruct(check_sequences(X), seed=seed)

    def swap(self, X_static, X_dynamic, seed: int = 0):
        """Sequences carrying X_static's static codes and X_dynamic's dynamics."""
        self._check_fitted()
        a, b = check_matching_sequences(X_static, X_dynamic)
        return self.model_.swap(a, b, seed=seed)

    def score(self, X, y=None):
        """Negative reconstruction MSE (normalized units); higher is better."""
        self._check_fitted()
        return -self.model_.reconstruction_mse(check_sequences(X))


class LatentFactorPrior(BaseEstimator):
    """Diffusion prior over joint latent codes (vectors in, vectors out)."""

    def __init__(self, diffusion_steps=1000, beta_start=1e-4, beta_end=2e-2,
                 mlp_layers=10, mlp_hidden=128, inference_steps=50,
                 train_steps=2000, batch_size=128, learning_rate=1e-3, seed=0):
        self.diffusion_steps = diffusion_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.mlp_layers = mlp_layers
        self.mlp_hidden = mlp_hidden
        self.inference_steps = inference_steps
        self.train_steps = train_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, Z, y=None):
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2:
            raise ValueError(f"expected (n, d) latent pool, got shape {Z.shape}")
        cfg = LatentPriorConfig(
            joint_dim=Z.shape[1], diffusion_steps=self.diffusion_steps,
            beta_start=self.beta_start, beta_end=self.beta_end,
            mlp_layers=self.mlp_layers, mlp_hidden=self.mlp_hidden,
            inference_steps=self.inference_steps)
        self.prior_ = LatentPrior.create(cfg, seed=self.seed)
        self.losses_ = self.prior_.fit(Z, steps=self.train_steps,
                                       batch_size=self.batch_size,
                                       lr=self.learning_rate, seed=self.seed)
        return self

    def sample(self, n: int, seed: int = 0):
        if not hasattr(self, "prior_"):
            raise NotFittedError("this LatentFactorPrior is not fitted yet")
        return self.prior_.sample_joint(n, seed=seed)
