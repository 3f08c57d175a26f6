"""Counter-based random streams.

Every stochastic routine takes an explicit seed (or numpy Generator) instead
of touching global state.  Samplers additionally need one independent stream
per (sequence, frame) pair so that sampling frames one at a time draws the
exact same noise as sampling them jointly.  Philox keyed on
(seed, sequence_index, frame_index) gives that for free.
"""

from __future__ import annotations

import numpy as np


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    """Coerce a seed or Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def frame_stream(seed: int, sequence_index: int, frame_index: int,
                 label: int = 0) -> np.random.Generator:
    """Independent stream for one frame of one sequence.

    The stream identity depends only on (seed, sequence_index, frame_index,
    label), never on batch composition.  label separates distinct consumers
    (e.g. the reverse sampler and the stochastic encoder) under one seed.
    """
    key = np.array(
        [np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF),
         (np.uint64(label) << np.uint64(56))
         | (np.uint64(sequence_index) << np.uint64(20))
         | np.uint64(frame_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def frame_streams(seed: int, n_sequences: int, n_frames: int,
                  sequence_offset: int = 0, frame_offset: int = 0,
                  label: int = 0) -> list[np.random.Generator]:
    """Streams for a (sequence, frame) grid, row-major."""
    return [
        frame_stream(seed, b + sequence_offset, t + frame_offset, label)
        for b in range(n_sequences)
        for t in range(n_frames)
    ]


def per_sequence_streams(seed: int, n_sequences: int) -> list[np.random.Generator]:
    """One child stream per generated sequence (dataset generation)."""
    root = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in root.spawn(n_sequences)]
