"""Training loops for the sequence model and the latent prior.

The sequence model trains under the single denoising loss: per batch, clean
sequences are encoded to factors, one noise level is drawn per frame, and
the preconditioned denoiser regresses the noise-free frame conditioned on
[static ; dynamic].  The encoder receives gradient only through the
conditioning pathway.  The latent prior trains separately on the pool of
encoded factors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .checkpoint import Checkpoint, normalizer_from_state, normalizer_to_state
from .config import ExperimentConfig
from .container import read_batch
from .data import FRAME_SHAPES, GENERATORS, SequenceBatch, fit_normalizer
from .denoiser import ConditionalDenoiser, UNetDenoiserNet, VectorDenoiserNet
from .diffusion import sample_training_sigma, training_loss
from .encoder import SequenceEncoder
from .errors import ConfigurationError, NumericFailure
from .model import TrainedModel
from .prior import LatentPrior, LatentPriorConfig, flatten_latents

logger = logging.getLogger(__name__)

COND_EMBED_DIM = 64


def generate_dataset(config: ExperimentConfig, split: str = "train") -> SequenceBatch:
    ds = config.dataset
    if ds.generator not in GENERATORS:
        raise ConfigurationError(f"unknown generator {ds.generator!r}")
    gen = GENERATORS[ds.generator]
    n = ds.n_train if split == "train" else ds.n_test
    # test split uses a distinct stream under the same factor bank
    seed = ds.seed if split == "train" else ds.seed + 1_000_003
    kwargs = {}
    if ds.generator != "toy_physio":
        kwargs["correlated"] = ds.correlated
    if ds.generator == "toy_speaker":
        kwargs["n_speakers"] = ds.n_speakers
    return gen(n, ds.n_frames, seed, **kwargs)


def build_modules(config: ExperimentConfig,
                  frame_shape: tuple[int, ...]) -> tuple[SequenceEncoder, ConditionalDenoiser]:
    torch.manual_seed(config.seed)
    encoder = SequenceEncoder(config.encoder, frame_shape)
    cond_dim = config.encoder.static_dim + config.encoder.dynamic_dim
    net_cfg = config.denoiser_net
    if config.encoder.backbone == "conv":
        net = UNetDenoiserNet(frame_shape[0], COND_EMBED_DIM,
                              base_channels=net_cfg.base_channels,
                              embed_dim=net_cfg.embed_dim, groups=net_cfg.groups)
    else:
        net = VectorDenoiserNet(frame_shape[0], COND_EMBED_DIM, width=net_cfg.width,
                                depth=net_cfg.depth, embed_dim=net_cfg.embed_dim,
                                groups=net_cfg.groups)
    denoiser = ConditionalDenoiser(net, config.diffusion, cond_dim=cond_dim,
                                   cond_embed_dim=COND_EMBED_DIM,
                                   embed_dim=net_cfg.embed_dim, frame_shape=frame_shape)
    return encoder, denoiser


@dataclass
class TrainResult:
    model: TrainedModel
    losses: list[float]
    checkpoint: Checkpoint


def train(config: ExperimentConfig, train_batch: SequenceBatch | None = None,
          resume: Checkpoint | None = None, log_every: int = 200) -> TrainResult:
    """Joint encoder + denoiser optimization under the single loss.

    Aborts with NumericFailure (and the offending step index) if the loss
    turns non-finite.
    """
    config.validate()
    if train_batch is None:
        train_batch = generate_dataset(config, "train")
    normalizer = fit_normalizer(train_batch)
    frames = normalizer.apply(train_batch.frames.astype(np.float64)).astype(np.float32)
    x_all = torch.as_tensor(frames)
    n, v = x_all.shape[0], x_all.shape[1]
    frame_shape = tuple(x_all.shape[2:])

    encoder, denoiser = build_modules(config, frame_shape)
    opt_cfg = config.optimizer
    params = list(encoder.parameters()) + list(denoiser.parameters())
    optimizer = torch.optim.AdamW(params, lr=opt_cfg.lr, weight_decay=opt_cfg.weight_decay)
    rng = np.random.default_rng(config.seed)
    start_step = 0
    if resume is not None:
        encoder.load_state_dict(resume.encoder_state)
        denoiser.load_state_dict(resume.denoiser_state)
        if resume.optimizer_state is not None:
            optimizer.load_state_dict(resume.optimizer_state)
        if resume.torch_rng_state is not None:
            torch.set_rng_state(resume.torch_rng_state)
        if resume.numpy_rng_state is not None:
            rng.bit_generator.state = resume.numpy_rng_state
        start_step = resume.step

    encoder.train()
    denoiser.train()
    losses: list[float] = []
    batch = opt_cfg.batch_size
    for step in range(start_step, opt_cfg.steps):
        idx = rng.integers(0, n, batch)
        x = x_all[idx]
        z = encoder(x)
        cond = z.frame_conditioning().reshape(batch * v, -1)
        x0 = x.reshape(batch * v, *frame_shape)
        sigma = torch.as_tensor(sample_training_sigma(config.diffusion, rng, size=batch * v),
                                dtype=torch.float32)
        noise = torch.as_tensor(rng.standard_normal(tuple(x0.shape)), dtype=torch.float32)
        loss = training_loss(x0, cond, sigma, noise, denoiser)
        if not torch.isfinite(loss):
            raise NumericFailure(f"non-finite training loss at step {step}")
        optimizer.zero_grad()
        loss.backward()
        if opt_cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(params, opt_cfg.grad_clip)
        optimizer.step()
        losses.append(float(loss.item()))
        if log_every and step % log_every == 0:
            logger.info("step %d loss %.5f", step, losses[-1])

    model = TrainedModel(encoder=encoder, denoiser=denoiser, normalizer=normalizer,
                         generator=train_batch.generator,
                         sample_steps=config.schedule.steps,
                         swap_encode_conditioning=config.swap_encode_conditioning,
                         swap_churn=config.eval.swap_churn)
    ckpt = Checkpoint(
        config_text=config.to_text(),
        config_hash=config.config_hash(),
        encoder_state=encoder.state_dict(),
        denoiser_state=denoiser.state_dict(),
        normalizer_state=normalizer_to_state(normalizer),
        step=opt_cfg.steps,
        optimizer_state=optimizer.state_dict(),
        torch_rng_state=torch.get_rng_state(),
        numpy_rng_state=rng.bit_generator.state,
    )
    return TrainResult(model=model, losses=losses, checkpoint=ckpt)


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[TrainedModel, ExperimentConfig]:
    config = ExperimentConfig.from_text(ckpt.config_text).validate()
    normalizer = normalizer_from_state(ckpt.normalizer_state)
    frame_shape = FRAME_SHAPES[config.dataset.generator]
    encoder, denoiser = build_modules(config, frame_shape)
    encoder.load_state_dict(ckpt.encoder_state)
    denoiser.load_state_dict(ckpt.denoiser_state)
    encoder.eval()
    denoiser.eval()
    model = TrainedModel(encoder=encoder, denoiser=denoiser, normalizer=normalizer,
                         generator=config.dataset.generator,
                         sample_steps=config.schedule.steps,
                         swap_encode_conditioning=config.swap_encode_conditioning,
                         swap_churn=config.eval.swap_churn)
    return model, config


def encode_pool(model: TrainedModel, batch: SequenceBatch,
                chunk: int = 256) -> np.ndarray:
    """Encode a dataset into flattened joint factor vectors."""
    outs = []
    for lo in range(0, batch.n_sequences, chunk):
        z = model.encode(batch.frames[lo:lo + chunk])
        outs.append(flatten_latents(z).numpy().astype(np.float64))
    return np.concatenate(outs, axis=0)


def train_prior(config: ExperimentConfig, model: TrainedModel,
                train_batch: SequenceBatch | None = None,
                seed: int | None = None) -> LatentPrior:
    """Train the latent prior on the encoded training pool (separately from
    the main model)."""
    if train_batch is None:
        train_batch = generate_dataset(config, "train")
    pool = encode_pool(model, train_batch)
    prior_cfg = LatentPriorConfig(
        joint_dim=pool.shape[1],
        diffusion_steps=config.prior.diffusion_steps,
        beta_start=config.prior.beta_start,
        beta_end=config.prior.beta_end,
        mlp_layers=config.prior.mlp_layers,
        mlp_hidden=config.prior.mlp_hidden,
        inference_steps=config.prior.inference_steps,
    )
    prior = LatentPrior.create(prior_cfg, seed=config.seed if seed is None else seed)
    prior.fit(pool, steps=config.prior.train_steps, batch_size=config.prior.batch_size,
              lr=config.prior.lr, seed=config.seed if seed is None else seed)
    return prior


def prior_to_state(prior: LatentPrior) -> dict:
    return {"cfg": prior.cfg.__dict__, "model_state": prior.model.state_dict(),
            "mean": prior.mean, "std": prior.std}


def prior_from_state(state: dict) -> LatentPrior:
    cfg = LatentPriorConfig(**state["cfg"])
    prior = LatentPrior.create(cfg)
    prior.model.load_state_dict(state["model_state"])
    prior.mean = np.asarray(state["mean"])
    prior.std = np.asarray(state["std"])
    return prior
