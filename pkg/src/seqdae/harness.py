"""Experiment orchestration: run-directory training, evaluation, prior
comparison, and the ablation grid.

Run directory layout:

    <run>/config.snapshot      exact config used (flat text)
    <run>/metrics.report       latest evaluation report
    <run>/checkpoints/main.pt  model checkpoint (+ prior when trained)
    <run>/figures/             plots + raw CSVs
    <run>/pairs.json           persisted swap pair list
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint
from .config import ExperimentConfig
from .container import read_batch, write_batch
from .data import SequenceBatch
from .errors import ConfigurationError, ContractViolation
from .metrics import (PairList, build_pair_list, disentanglement_gap,
                      downstream_probes, fit_static_probe, fit_traversal,
                      pca_traverse, reconstruction_mse, swap_preservation_scores)
from .model import TrainedModel
from .prior import energy_distance, independent_prior_baseline
from .report import MetricsReport
from .training import (TrainResult, encode_pool, generate_dataset,
                       model_from_checkpoint, prior_from_state, prior_to_state,
                       train, train_prior)
from .viz import ensure_run_dirs, save_loss_curve, save_sequence_grid, save_table_csv

logger = logging.getLogger(__name__)


def run_train(config: ExperimentConfig, run_dir, data_path=None) -> TrainResult:
    dirs = ensure_run_dirs(run_dir)
    config.validate()
    batch = read_batch(data_path) if data_path else None
    result = train(config, batch)
    config.save(dirs["run"] / "config.snapshot")
    result.checkpoint.save(dirs["checkpoints"] / "main.pt")
    save_loss_curve(result.losses, dirs["figures"] / "loss_curve.png",
                    dirs["figures"] / "loss_curve.csv")
    return result


def load_run(run_dir) -> tuple[TrainedModel, ExperimentConfig, Checkpoint]:
    ckpt_path = Path(run_dir) / "checkpoints" / "main.pt"
    if not ckpt_path.exists():
        raise ContractViolation(f"no checkpoint under {run_dir}")
    ckpt = Checkpoint.load(ckpt_path)
    model, config = model_from_checkpoint(ckpt)
    return model, config, ckpt


def run_train_prior(run_dir, data_path=None, seed: int | None = None):
    model, config, ckpt = load_run(run_dir)
    batch = read_batch(data_path) if data_path else None
    prior = train_prior(config, model, batch, seed=seed)
    ckpt.prior_state = prior_to_state(prior)
    ckpt.save(Path(run_dir) / "checkpoints" / "main.pt")
    return prior


def _test_batch(config: ExperimentConfig, data_path=None) -> SequenceBatch:
    if data_path:
        return read_batch(data_path)
    return generate_dataset(config, "test")


def _pair_list(run_dir, n_sequences: int, n_pairs: int, seed: int) -> PairList:
    path = Path(run_dir) / "pairs.json"
    if path.exists():
        return PairList.load(path)
    pairs = build_pair_list(n_sequences, n_pairs, seed=seed)
    pairs.save(path)
    return pairs


def evaluate_run(run_dir, data_path=None, threads: int = 1,
                 seed: int | None = None) -> MetricsReport:
    """Full evaluation of a run: reconstruction, disentanglement EER gap,
    swap preservation, and (when targets exist) downstream probes.

    Single-threaded by default so repeated invocations produce bitwise
    identical reports.
    """
    torch.set_num_threads(threads)
    model, config, ckpt = load_run(run_dir)
    eval_seed = config.seed if seed is None else seed
    test = _test_batch(config, data_path)
    report = MetricsReport(seed=eval_seed, config_hash=config.config_hash())
    n_eval = min(config.eval.n_eval_sequences, test.n_sequences)
    report.update({
        "recon.mse": reconstruction_mse(model, SequenceBatch(
            frames=test.frames[:n_eval], modality=test.modality,
            generator=test.generator), seed=eval_seed),
        "recon.n_sequences": n_eval,
    })
    if test.labels is not None:
        z = model.encode(test.frames)
        static_eer, dynamic_eer, gap = disentanglement_gap(
            z.static.numpy(), z.dynamic.numpy(), test.labels.static_label,
            max_trials=config.eval.max_trials, seed=eval_seed)
        report.update({"eer.static": static_eer, "eer.dynamic": dynamic_eer,
                       "eer.gap": gap, "eer.similarity": "cosine",
                       "eer.dynamic_pooling": "mean"})
        if test.generator in ("bouncing_shapes", "toy_speaker"):
            train_set = generate_dataset(config, "train")
            probe = fit_static_probe(train_set)
            pairs = _pair_list(run_dir, test.n_sequences, config.eval.n_pairs, eval_seed)
            swap_report = swap_preservation_scores(model, test, pairs, probe, seed=eval_seed)
            report.update(swap_report.values)
        if test.generator == "toy_physio":
            probes = downstream_probes(z.static.numpy(), z.dynamic.numpy(),
                                       test.labels.static_label,
                                       test.labels.regression_target, seed=eval_seed)
            report.update(probes.values)
    report.write(Path(run_dir) / "metrics.report")
    return report


def run_reconstruct(run_dir, data_path=None, n: int = 8, seed: int = 0):
    model, config, _ = load_run(run_dir)
    test = _test_batch(config, data_path)
    frames = test.frames[:n]
    recon = model.reconstruct(frames, seed=seed)
    dirs = ensure_run_dirs(run_dir)
    rows = []
    for j in range(len(frames)):
        mse = float(((recon[j] - frames[j]) ** 2).mean())
        rows.append([j, mse])
    save_table_csv(dirs["figures"] / "reconstruction.csv", ["sequence", "mse"], rows)
    panels = [seq for pair in zip(frames, recon) for seq in pair]
    save_sequence_grid(panels, dirs["figures"] / "reconstruction.png",
                       title="input / reconstruction")
    return recon


def run_swap(run_dir, data_path=None, n_pairs: int = 8, seed: int = 0):
    model, config, _ = load_run(run_dir)
    test = _test_batch(config, data_path)
    pairs = build_pair_list(test.n_sequences, n_pairs, seed=seed)
    a, b = pairs.static_idx, pairs.dynamic_idx
    out = model.swap(test.frames[a], test.frames[b], seed=seed)
    dirs = ensure_run_dirs(run_dir)
    panels = [seq for trip in zip(test.frames[a], test.frames[b], out) for seq in trip]
    save_sequence_grid(panels, dirs["figures"] / "swap.png",
                       title="static source / dynamic source / swap")
    save_table_csv(dirs["figures"] / "swap_pairs.csv",
                   ["static_idx", "dynamic_idx"], list(zip(a.tolist(), b.tolist())))
    return out


def run_sample(run_dir, n: int = 8, seed: int = 0, steps: int | None = None):
    """Unconditional generation: draw factors from the prior, then decode."""
    model, config, ckpt = load_run(run_dir)
    if ckpt.prior_state is None:
        raise ContractViolation("run has no trained prior; run train-prior first")
    prior = prior_from_state(ckpt.prior_state)
    joint = prior.sample_joint(n, seed=seed)
    from .prior import unflatten_latents

    z = unflatten_latents(torch.as_tensor(joint, dtype=torch.float32),
                          config.encoder.static_dim, config.dataset.n_frames,
                          config.encoder.dynamic_dim)
    frames = model.decode_factors(z, seed=seed, n_steps=steps)
    dirs = ensure_run_dirs(run_dir)
    save_sequence_grid(list(frames), dirs["figures"] / "samples.png", title="prior samples")
    return frames


def run_traverse(run_dir, data_path=None, component: int = 0,
                 alphas=(-0.3, -0.15, 0.0, 0.15, 0.3), pool_size: int = 512,
                 index: int = 0, seed: int = 0):
    """PCA traversal of the static code of one test sequence."""
    model, config, _ = load_run(run_dir)
    test = _test_batch(config, data_path)
    z_pool = model.encode(test.frames[:pool_size])
    pool = z_pool.static.numpy()
    spec = fit_traversal(pool, kappa=max(abs(a) for a in alphas) + 1e-9)
    z = model.encode(test.frames[index:index + 1])
    frames_out = []
    rows = []
    for alpha in alphas:
        s_mod = pca_traverse(z.static.numpy()[0], spec, component, float(alpha))
        z_mod = type(z)(static=torch.as_tensor(s_mod[None], dtype=torch.float32),
                        dynamic=z.dynamic)
        dec = model.resample_with_factors(test.frames[index:index + 1], z_mod, seed=seed)
        frames_out.append(dec[0])
        rows.append([alpha] + list(np.asarray(z_mod.static[0])[:4]))
    dirs = ensure_run_dirs(run_dir)
    save_sequence_grid(frames_out, dirs["figures"] / "traversal.png",
                       title=f"component {component}")
    save_table_csv(dirs["figures"] / "traversal.csv",
                   ["alpha", "s0", "s1", "s2", "s3"], rows)
    return frames_out


def compare_priors(run_dir, data_path=None, n_seeds: int = 5,
                   sample_n: int = 512) -> MetricsReport:
    """Dependent vs independent prior: energy distance to a held-out pool.

    With an explicit dataset the last quarter is held out; otherwise the
    config's train/test splits are used.
    """
    model, config, _ = load_run(run_dir)
    if data_path:
        full = read_batch(data_path)
        cut = (3 * full.n_sequences) // 4
        pool = encode_pool(model, SequenceBatch(frames=full.frames[:cut],
                                                modality=full.modality,
                                                generator=full.generator))
        held_out = encode_pool(model, SequenceBatch(frames=full.frames[cut:],
                                                    modality=full.modality,
                                                    generator=full.generator))
    else:
        pool = encode_pool(model, generate_dataset(config, "train"))
        held_out = encode_pool(model, generate_dataset(config, "test"))
    static_dim = config.encoder.static_dim
    prior_cfg = None
    rows = []
    wins = 0
    from .prior import LatentPrior, LatentPriorConfig

    prior_cfg = LatentPriorConfig(
        joint_dim=pool.shape[1], diffusion_steps=config.prior.diffusion_steps,
        beta_start=config.prior.beta_start, beta_end=config.prior.beta_end,
        mlp_layers=config.prior.mlp_layers, mlp_hidden=config.prior.mlp_hidden,
        inference_steps=config.prior.inference_steps)
    for s in range(n_seeds):
        dep = LatentPrior.create(prior_cfg, seed=config.seed + 100 + s)
        dep.fit(pool, steps=config.prior.train_steps,
                batch_size=config.prior.batch_size, lr=config.prior.lr,
                seed=config.seed + 100 + s)
        indep = independent_prior_baseline(prior_cfg, static_dim,
                                           seed=config.seed + 200 + s)
        indep.fit(pool, steps=config.prior.train_steps,
                  batch_size=config.prior.batch_size, lr=config.prior.lr,
                  seed=config.seed + 200 + s)
        e_dep = energy_distance(dep.sample_joint(sample_n, seed=s), held_out)
        e_ind = energy_distance(indep.sample_joint(sample_n, seed=s), held_out)
        wins += int(e_dep < e_ind)
        rows.append([s, e_dep, e_ind])
        logger.info("prior seed %d: dependent %.4f independent %.4f", s, e_dep, e_ind)
    report = MetricsReport(seed=config.seed, config_hash=config.config_hash())
    report.update({
        "priors.n_seeds": n_seeds,
        "priors.dependent_wins": wins,
        "priors.energy_dependent_mean": float(np.mean([r[1] for r in rows])),
        "priors.energy_independent_mean": float(np.mean([r[2] for r in rows])),
    })
    dirs = ensure_run_dirs(run_dir)
    save_table_csv(dirs["figures"] / "prior_comparison.csv",
                   ["seed", "energy_dependent", "energy_independent"], rows)
    report.write(dirs["run"] / "metrics.report")
    return report


def run_ablation(base_config: ExperimentConfig, run_dir, small_k: int | None = None,
                 large_k: int | None = None) -> MetricsReport:
    """Four-cell grid over share_static x dynamic dimension.

    Each cell trains a short model and is scored with the swap preservation
    probes on one fixed pair list.
    """
    dirs = ensure_run_dirs(run_dir)
    base_config.validate()
    small = small_k or base_config.encoder.dynamic_dim
    large = large_k or min(base_config.encoder.static_dim, 8 * small)
    test = generate_dataset(base_config, "test")
    train_set = generate_dataset(base_config, "train")
    probe = fit_static_probe(train_set)
    pairs = _pair_list(run_dir, test.n_sequences, base_config.eval.n_pairs,
                       base_config.seed)
    rows = []
    cells = {}
    for share in (True, False):
        for k in (small, large):
            enc_cfg = replace(base_config.encoder, dynamic_dim=k, share_static=share)
            cfg = base_config.with_overrides(encoder=enc_cfg)
            result = train(cfg, train_set)
            scores = swap_preservation_scores(result.model, test, pairs, probe,
                                              seed=base_config.seed)
            cell = ("shared" if share else "per_frame", k)
            cells[cell] = scores.values
            rows.append([cell[0], k,
                         scores.values["swap.static_probe_acc"],
                         scores.values["swap.dynamic_track_r"]])
            logger.info("ablation cell share=%s k=%d: static %.3f dynamic %.3f",
                        share, k, scores.values["swap.static_probe_acc"],
                        scores.values["swap.dynamic_track_r"])
    report = MetricsReport(seed=base_config.seed, config_hash=base_config.config_hash())
    for (share, k), values in cells.items():
        report.update({
            f"ablate.{share}.k{k}.static_probe_acc": values["swap.static_probe_acc"],
            f"ablate.{share}.k{k}.dynamic_track_r": values["swap.dynamic_track_r"],
        })
    combined = {cell: cells[cell]["swap.static_probe_acc"]
                + max(cells[cell]["swap.dynamic_track_r"], 0.0) for cell in cells}
    best = max(combined, key=combined.get)
    report.update({"ablate.best_cell": f"{best[0]}.k{best[1]}",
                   "ablate.small_k": small, "ablate.large_k": large})
    save_table_csv(dirs["figures"] / "ablation.csv",
                   ["static_mode", "k", "static_probe_acc", "dynamic_track_r"], rows)
    report.write(dirs["run"] / "metrics.report")
    return report


def run_gen_data(generator: str, n: int, frames: int, seed: int, out_path,
                 correlated: bool = False) -> SequenceBatch:
    from .data import GENERATORS

    if generator not in GENERATORS:
        raise ConfigurationError(f"unknown generator {generator!r}")
    kwargs = {"correlated": correlated} if generator != "toy_physio" else {}
    batch = GENERATORS[generator](n, frames, seed, **kwargs)
    write_batch(out_path, batch, seed=seed)
    return batch
