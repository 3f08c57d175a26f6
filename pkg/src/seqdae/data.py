"""Factor-labeled synthetic sequence generators, normalization, and the
codec seam.

Three desk-scale generators cover the three modalities the model targets:

* ``gen_bouncing_shape`` -- 16x16 single-channel video of a soft-edged square
  or disc bouncing at constant velocity.  Static factors: shape and one of
  four intensity levels (8 classes).  Dynamic factor: the 2-D center.
* ``gen_toy_speaker``   -- 80-dim spectral frames: a per-speaker unit
  template scaled by a smooth content envelope plus a content tilt along a
  fixed direction orthogonal to every template.
* ``gen_toy_physio``    -- 10-dim clinical-style frames: per-class channel
  baselines plus a 2-D AR(1) trend, with a per-sequence regression target.

Every generator derives one child stream per sequence, so datasets are
bitwise reproducible and independent of generation order.  Speaker templates
and class baselines come from a separate fixed bank seed so that train and
test splits drawn with different seeds share the same factor structure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .streams import per_sequence_streams

logger = logging.getLogger(__name__)

IMAGE_SIZE = 16
SHAPE_HALF = 2.5
POS_LO = 4.5
POS_HI = IMAGE_SIZE - 1 - POS_LO
INTENSITIES = np.array([0.25, 0.5, 0.75, 1.0])
BANK_SEED = 777


@dataclass
class SequenceLabels:
    """Ground-truth factors attached to synthetically generated batches."""

    static_label: np.ndarray
    dynamic_track: np.ndarray
    regression_target: np.ndarray | None = None


@dataclass
class SequenceBatch:
    """A batch of sequences: frames (B, V, ...) plus modality and labels."""

    frames: np.ndarray
    modality: str
    labels: SequenceLabels | None = None
    generator: str | None = None

    def __post_init__(self):
        if self.modality not in ("vector", "image"):
            raise ContractViolation(f"unknown modality {self.modality!r}")
        if self.frames.ndim < 3 or self.frames.shape[1] < 1:
            raise ContractViolation(f"frames must be (B, V, ...), got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ContractViolation("frames contain non-finite values")

    @property
    def n_sequences(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def frame_shape(self) -> tuple[int, ...]:
        return tuple(self.frames.shape[2:])


@dataclass(frozen=True)
class Codec:
    """Frame codec seam; a perceptual compressor can plug in here.

    The default identity codec round-trips bit-exactly.
    """

    encode: Callable[[np.ndarray], np.ndarray]
    decode: Callable[[np.ndarray], np.ndarray]
    name: str = "identity"


def identity_codec() -> Codec:
    return Codec(encode=lambda x: x, decode=lambda x: x, name="identity")


# ---------------------------------------------------------------------------
# bouncing shapes (image modality)

def _fold(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Reflect unbounded positions into [lo, hi] (measure-preserving)."""
    span = hi - lo
    m = np.mod(x - lo, 2 * span)
    return lo + np.minimum(m, 2 * span - m)


def _render_shapes(centers: np.ndarray, shape_idx: np.ndarray,
                   intensity: np.ndarray) -> np.ndarray:
    n, v, _ = centers.shape
    grid = np.arange(IMAGE_SIZE, dtype=np.float64)
    gy = grid[None, None, :, None]
    gx = grid[None, None, None, :]
    cy = centers[..., 0][..., None, None]
    cx = centers[..., 1][..., None, None]
    dy = np.abs(gy - cy)
    dx = np.abs(gx - cx)
    square = np.clip(SHAPE_HALF + 0.5 - np.maximum(dy, dx), 0.0, 1.0)
    disc = np.clip(SHAPE_HALF + 0.5 - np.sqrt(dy ** 2 + dx ** 2), 0.0, 1.0)
    mask = np.where(shape_idx[:, None, None, None] == 0, square, disc)
    frames = mask * intensity[:, None, None, None]
    return frames[:, :, None, :, :].astype(np.float32)


def gen_bouncing_shape(n: int, v: int, rng, correlated: bool = False) -> SequenceBatch:
    """Soft-edged square/disc bouncing in a 16x16 box at constant velocity.

    correlated=True couples the bounce speed to the static intensity level;
    the default keeps ground-truth factors independent.
    """
    if v < 2:
        raise ContractViolation(f"need at least 2 frames, got {v}")
    seed = rng if isinstance(rng, (int, np.integer)) else int(np.random.default_rng(rng).integers(2 ** 31))
    streams = per_sequence_streams(int(seed), n)
    shape_idx = np.empty(n, dtype=np.int64)
    inten_idx = np.empty(n, dtype=np.int64)
    p0 = np.empty((n, 2))
    vel = np.empty((n, 2))
    for j, g in enumerate(streams):
        shape_idx[j] = g.integers(2)
        inten_idx[j] = g.integers(4)
        p0[j] = g.uniform(POS_LO, POS_HI, size=2)
        angle = g.uniform(0, 2 * np.pi)
        speed = g.uniform(0.8, 1.6)
        if correlated:
            speed = 0.5 + 0.35 * inten_idx[j] + g.uniform(0.0, 0.1)
        vel[j] = speed * np.array([np.sin(angle), np.cos(angle)])
    taus = np.arange(v, dtype=np.float64)
    raw = p0[:, None, :] + vel[:, None, :] * taus[None, :, None]
    centers = _fold(raw, POS_LO, POS_HI)
    frames = _render_shapes(centers, shape_idx, INTENSITIES[inten_idx])
    track = ((centers - POS_LO) / (POS_HI - POS_LO)).astype(np.float32)
    labels = SequenceLabels(static_label=shape_idx * 4 + inten_idx, dynamic_track=track)
    return SequenceBatch(frames=frames, modality="image", labels=labels,
                         generator="bouncing_shapes")


def _object_mask(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Robust peak (mean of top-5 pixels) and noise-suppressed object mass."""
    flat = img.reshape(*img.shape[:-2], -1)
    top = np.sort(flat, axis=-1)[..., -5:]
    peak = top.mean(axis=-1)
    w = img * (img > 0.4 * peak[..., None, None])
    return peak, w


def bouncing_center_track(frames: np.ndarray) -> np.ndarray:
    """Estimate the per-frame object center from pixel center of mass.

    Returns positions on the same [0, 1] scale as the generator's track.
    """
    x = np.clip(np.asarray(frames, dtype=np.float64), 0.0, None)
    img = x[:, :, 0]
    _, w = _object_mask(img)
    grid = np.arange(IMAGE_SIZE, dtype=np.float64)
    mass = w.sum(axis=(-1, -2)) + 1e-12
    cy = (w.sum(axis=-1) * grid).sum(axis=-1) / mass
    cx = (w.sum(axis=-2) * grid).sum(axis=-1) / mass
    com = np.stack([cy, cx], axis=-1)
    return ((com - POS_LO) / (POS_HI - POS_LO)).astype(np.float32)


def bouncing_static_features(frames: np.ndarray) -> np.ndarray:
    """Per-sequence features separating shape and intensity level.

    Peak value tracks intensity; the radial mass profile around the center
    of mass separates the square from the disc (corner mass sits beyond the
    disc radius).  Robust to the small reconstruction noise of a trained
    model.
    """
    x = np.clip(np.asarray(frames, dtype=np.float64), 0.0, None)
    img = x[:, :, 0]
    peak, w = _object_mask(img)
    mass = w.sum(axis=(-1, -2))
    grid = np.arange(IMAGE_SIZE, dtype=np.float64)
    total = mass + 1e-12
    cy = ((w.sum(axis=-1) * grid).sum(axis=-1) / total)[..., None, None]
    cx = ((w.sum(axis=-2) * grid).sum(axis=-1) / total)[..., None, None]
    rho = np.sqrt((grid[None, None, :, None] - cy) ** 2
                  + (grid[None, None, None, :] - cx) ** 2)
    edges = (1.25, 2.5, 3.25, 5.0)
    rings = [(w * (rho < edges[0])).sum(axis=(-1, -2)) / total]
    for lo, hi in zip(edges[:-1], edges[1:]):
        rings.append((w * ((rho >= lo) & (rho < hi))).sum(axis=(-1, -2)) / total)
    feats = np.stack([peak, mass / np.maximum(peak, 1e-9), *rings], axis=-1)
    return feats.mean(axis=1)


# ---------------------------------------------------------------------------
# toy speaker (vector modality, 80-dim frames)

SPEAKER_DIM = 80


def speaker_basis(n_speakers: int, bank_seed: int = BANK_SEED):
    """Fixed content-tilt direction and unit speaker templates orthogonal to it."""
    g = np.random.default_rng(bank_seed)
    u = g.standard_normal(SPEAKER_DIM)
    u /= np.linalg.norm(u)
    templates = g.standard_normal((n_speakers, SPEAKER_DIM))
    templates -= np.outer(templates @ u, u)
    templates /= np.linalg.norm(templates, axis=1, keepdims=True)
    return templates, u


def _smooth_envelope(g: np.random.Generator, v: int) -> np.ndarray:
    # low frequencies so the per-sequence mean itself varies widely, the way
    # the average spectrum of a short speech segment depends on its content
    taus = np.arange(v, dtype=np.float64)
    env = np.zeros(v)
    weight = 0.0
    for _ in range(2):
        amp = g.uniform(0.5, 1.0)
        freq = g.uniform(0.3, 1.8)
        phase = g.uniform(0, 2 * np.pi)
        env += amp * np.sin(2 * np.pi * freq * taus / v + phase)
        weight += amp
    return env / weight


def gen_toy_speaker(n: int, v: int, rng, n_speakers: int = 12,
                    correlated: bool = False, bank_seed: int = BANK_SEED) -> SequenceBatch:
    """Spectral-envelope frames: template * amplitude envelope + content tilt."""
    if v < 2:
        raise ContractViolation(f"need at least 2 frames, got {v}")
    templates, u = speaker_basis(n_speakers, bank_seed)
    seed = rng if isinstance(rng, (int, np.integer)) else int(np.random.default_rng(rng).integers(2 ** 31))
    streams = per_sequence_streams(int(seed), n)
    frames = np.empty((n, v, SPEAKER_DIM), dtype=np.float32)
    track = np.empty((n, v, 2), dtype=np.float32)
    spk = np.empty(n, dtype=np.int64)
    for j, g in enumerate(streams):
        s = g.integers(n_speakers)
        spk[j] = s
        env_a = 1.0 + 0.7 * _smooth_envelope(g, v)
        if correlated:
            env_a = env_a + 0.8 * (s / max(n_speakers - 1, 1) - 0.5)
        env_b = 1.2 * _smooth_envelope(g, v)
        seq = env_a[:, None] * templates[s][None, :] + env_b[:, None] * u[None, :]
        frames[j] = seq.astype(np.float32)
        track[j] = np.stack([env_a, env_b], axis=-1).astype(np.float32)
    labels = SequenceLabels(static_label=spk, dynamic_track=track)
    return SequenceBatch(frames=frames, modality="vector", labels=labels,
                         generator="toy_speaker")


def speaker_content_track(frames: np.ndarray, n_speakers: int = 12,
                          bank_seed: int = BANK_SEED) -> np.ndarray:
    """Recover (amplitude, tilt) envelopes; exact on clean generator output."""
    _, u = speaker_basis(n_speakers, bank_seed)
    x = np.asarray(frames, dtype=np.float64)
    env_b = x @ u
    resid = x - env_b[..., None] * u
    env_a = np.linalg.norm(resid, axis=-1)
    return np.stack([env_a, env_b], axis=-1).astype(np.float32)


def speaker_static_features(frames: np.ndarray, n_speakers: int = 12,
                            bank_seed: int = BANK_SEED) -> np.ndarray:
    """Mean template direction per sequence (speaker-identity features)."""
    _, u = speaker_basis(n_speakers, bank_seed)
    x = np.asarray(frames, dtype=np.float64)
    resid = x - (x @ u)[..., None] * u
    resid /= np.linalg.norm(resid, axis=-1, keepdims=True) + 1e-12
    return resid.mean(axis=1)


# ---------------------------------------------------------------------------
# toy physiological time series (vector modality, 10-dim frames)

PHYSIO_DIM = 10
PHYSIO_AR = 0.9
PHYSIO_DRIVE = 0.25


def physio_bank(n_classes: int = 4, bank_seed: int = BANK_SEED):
    """Fixed class baselines and a trend mixing matrix."""
    g = np.random.default_rng(bank_seed + 1)
    baselines = g.standard_normal((n_classes, PHYSIO_DIM))
    baselines /= np.linalg.norm(baselines, axis=1, keepdims=True)
    baselines *= 1.2
    mixing = g.standard_normal((PHYSIO_DIM, 2)) * 0.5
    return baselines, mixing


def gen_toy_physio(n: int, v: int, rng, n_classes: int = 4,
                   bank_seed: int = BANK_SEED) -> SequenceBatch:
    """Channel baselines (class) plus a 2-D AR(1) trend (regression target).

    The regression target is the mean of the final frame's trend state.
    """
    if v < 2:
        raise ContractViolation(f"need at least 2 frames, got {v}")
    baselines, mixing = physio_bank(n_classes, bank_seed)
    seed = rng if isinstance(rng, (int, np.integer)) else int(np.random.default_rng(rng).integers(2 ** 31))
    streams = per_sequence_streams(int(seed), n)
    frames = np.empty((n, v, PHYSIO_DIM), dtype=np.float32)
    track = np.empty((n, v, 2), dtype=np.float32)
    cls = np.empty(n, dtype=np.int64)
    target = np.empty(n, dtype=np.float32)
    stat_std = PHYSIO_DRIVE / np.sqrt(1.0 - PHYSIO_AR ** 2)
    for j, g in enumerate(streams):
        c = g.integers(n_classes)
        cls[j] = c
        trend = np.empty((v, 2))
        trend[0] = g.standard_normal(2) * stat_std
        for tau in range(1, v):
            trend[tau] = PHYSIO_AR * trend[tau - 1] + PHYSIO_DRIVE * g.standard_normal(2)
        obs = g.standard_normal((v, PHYSIO_DIM)) * 0.05
        frames[j] = (baselines[c][None, :] + trend @ mixing.T + obs).astype(np.float32)
        track[j] = trend.astype(np.float32)
        target[j] = trend[-1].mean()
    labels = SequenceLabels(static_label=cls, dynamic_track=track, regression_target=target)
    return SequenceBatch(frames=frames, modality="vector", labels=labels,
                         generator="toy_physio")


# ---------------------------------------------------------------------------
# generator registry used by evaluation probes

GENERATORS = {
    "bouncing_shapes": gen_bouncing_shape,
    "toy_speaker": gen_toy_speaker,
    "toy_physio": gen_toy_physio,
}

FRAME_SHAPES = {
    "bouncing_shapes": (1, IMAGE_SIZE, IMAGE_SIZE),
    "toy_speaker": (SPEAKER_DIM,),
    "toy_physio": (PHYSIO_DIM,),
}


def static_probe_features(frames: np.ndarray, generator: str) -> np.ndarray:
    """Per-sequence feature matrix for the ground-truth static-label probe."""
    if generator == "bouncing_shapes":
        return bouncing_static_features(frames)
    if generator == "toy_speaker":
        return speaker_static_features(frames)
    if generator == "toy_physio":
        return np.asarray(frames, dtype=np.float64).mean(axis=1)
    raise ConfigurationError(f"no static probe features for generator {generator!r}")


def dynamic_track_estimate(frames: np.ndarray, generator: str) -> np.ndarray:
    """Per-frame dynamic-track estimate from raw frames (generator oracle)."""
    if generator == "bouncing_shapes":
        return bouncing_center_track(frames)
    if generator == "toy_speaker":
        return speaker_content_track(frames)
    if generator == "toy_physio":
        _, mixing = physio_bank()
        x = np.asarray(frames, dtype=np.float64)
        sol = np.linalg.pinv(mixing)
        return (x @ sol.T).astype(np.float32)
    raise ConfigurationError(f"no dynamic track estimate for generator {generator!r}")


# ---------------------------------------------------------------------------
# normalization

@dataclass
class Normalizer:
    """Global per-channel shift/scale taking data to zero mean, std 0.5."""

    shift: np.ndarray
    scale: np.ndarray
    modality: str
    target_std: float = 0.5

    def _reshape(self, frames: np.ndarray):
        if self.modality == "image":
            return self.shift.reshape(1, 1, -1, 1, 1), self.scale.reshape(1, 1, -1, 1, 1)
        return self.shift.reshape(1, 1, -1), self.scale.reshape(1, 1, -1)

    def apply(self, frames: np.ndarray) -> np.ndarray:
        shift, scale = self._reshape(frames)
        return ((frames - shift.astype(frames.dtype)) * scale.astype(frames.dtype))

    def invert(self, frames: np.ndarray) -> np.ndarray:
        shift, scale = self._reshape(frames)
        return frames / scale.astype(frames.dtype) + shift.astype(frames.dtype)


def fit_normalizer(batch: SequenceBatch, target_std: float = 0.5) -> Normalizer:
    """Fit global per-channel statistics over every frame of the dataset."""
    x = np.asarray(batch.frames, dtype=np.float64)
    if batch.modality == "image":
        axes = (0, 1, 3, 4)
        mean = x.mean(axis=axes)
        std = x.std(axis=axes)
    else:
        mean = x.mean(axis=(0, 1))
        std = x.std(axis=(0, 1))
    scale = np.ones_like(std)
    dead = std <= 0
    if dead.any():
        logger.warning("normalizer: %d zero-variance channel(s), scale left at 1", int(dead.sum()))
    scale[~dead] = target_std / std[~dead]
    return Normalizer(shift=mean, scale=scale, modality=batch.modality, target_std=target_std)


def normalize(batch: SequenceBatch, stats: Normalizer) -> SequenceBatch:
    return SequenceBatch(frames=stats.apply(batch.frames).astype(batch.frames.dtype),
                         modality=batch.modality, labels=batch.labels,
                         generator=batch.generator)


def denormalize(frames: np.ndarray, stats: Normalizer) -> np.ndarray:
    return stats.invert(frames)
