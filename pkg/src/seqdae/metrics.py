"""Evaluation protocol: verification EER, the disentanglement gap, swap
preservation probes, PCA latent traversal, downstream probes, and
reconstruction error.

The EER is computed on the ROC polyline: operating points are swept over
the observed scores and the equal-error point is found by linear
interpolation between the two adjacent points where the false-positive and
false-negative rates cross.  Swap preservation replaces pretrained-network
judges with probes trained on the synthetic generators' ground truth: a
classifier over generator features checks the static factor, and the
generator's own track extractor checks the dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression, Ridge
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .data import SequenceBatch, dynamic_track_estimate, static_probe_features
from .errors import ContractViolation, DomainError
from .model import TrainedModel
from .report import MetricsReport
from .streams import as_generator


@dataclass(frozen=True)
class VerificationTrial:
    score: float
    is_same: bool

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ContractViolation(f"trial score must be finite, got {self.score}")


def compute_eer(trials) -> float:
    """Equal error rate of a set of verification trials.

    Sweeps the decision threshold over the observed scores ("same" when
    score >= threshold) and returns the rate at the FPR = FNR crossing,
    linearly interpolated between adjacent operating points.
    """
    scores = np.array([t.score for t in trials], dtype=np.float64)
    labels = np.array([t.is_same for t in trials], dtype=bool)
    if labels.all() or (~labels).all():
        raise ContractViolation("need at least one same and one different trial")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    n_same = int(labels.sum())
    n_diff = len(labels) - n_same
    # operating points at each distinct score, threshold descending
    distinct = np.nonzero(np.diff(scores))[0]
    idx = np.concatenate([distinct, [len(scores) - 1]])
    tp = np.cumsum(labels)[idx]
    fp = np.cumsum(~labels)[idx]
    fpr = np.concatenate([[0.0], fp / n_diff])
    fnr = np.concatenate([[1.0], 1.0 - tp / n_same])
    diff = fnr - fpr
    cross = int(np.argmax(diff <= 0))
    if diff[cross] == 0.0:
        return float(fpr[cross])
    a, b = cross - 1, cross
    alpha = diff[a] / (diff[a] - diff[b])
    return float(fpr[a] + alpha * (fpr[b] - fpr[a]))


def cosine_trials(codes: np.ndarray, identities: np.ndarray,
                  max_trials: int | None = None, seed: int = 0) -> list[VerificationTrial]:
    """All-pairs cosine-similarity trials (optionally subsampled)."""
    codes = np.asarray(codes, dtype=np.float64)
    identities = np.asarray(identities)
    norm = codes / (np.linalg.norm(codes, axis=1, keepdims=True) + 1e-12)
    ii, jj = np.triu_indices(len(codes), k=1)
    if max_trials is not None and len(ii) > max_trials:
        keep = as_generator(seed).choice(len(ii), max_trials, replace=False)
        ii, jj = ii[keep], jj[keep]
    sims = (norm[ii] * norm[jj]).sum(axis=1)
    same = identities[ii] == identities[jj]
    return [VerificationTrial(float(s), bool(m)) for s, m in zip(sims, same)]


def disentanglement_gap(static_codes: np.ndarray, dynamic_codes: np.ndarray,
                        identities: np.ndarray, pooling: str = "mean",
                        max_trials: int | None = None, seed: int = 0):
    """Static EER, dynamic EER, and their gap (dynamic - static).

    Dynamic codes (B, V, k) are pooled over frames before building trials;
    identity should separate well in the static codes and poorly in the
    pooled dynamic codes, making the gap large.
    """
    identities = np.asarray(identities)
    if len(np.unique(identities)) < 2:
        raise ContractViolation("need at least two identity classes")
    if pooling != "mean":
        raise ContractViolation(f"unsupported pooling {pooling!r}")
    pooled = np.asarray(dynamic_codes, dtype=np.float64).mean(axis=1)
    static_eer = compute_eer(cosine_trials(static_codes, identities, max_trials, seed))
    dynamic_eer = compute_eer(cosine_trials(pooled, identities, max_trials, seed))
    return static_eer, dynamic_eer, dynamic_eer - static_eer


# ---------------------------------------------------------------------------
# PCA latent traversal

@dataclass
class TraversalSpec:
    """Pool statistics and principal directions for static-code traversal."""

    mean: np.ndarray
    std: np.ndarray
    components: np.ndarray
    kappa: float = 0.3

    def __post_init__(self):
        if self.kappa <= 0:
            raise ContractViolation("kappa must be positive")


def fit_traversal(pool: np.ndarray, kappa: float = 0.3) -> TraversalSpec:
    """PCA of a pool of static codes, computed in standardized coordinates."""
    pool = np.asarray(pool, dtype=np.float64)
    b, h = pool.shape
    if b < h:
        raise ContractViolation(f"pool size {b} must be >= code dimension {h}")
    mean = pool.mean(axis=0)
    std = pool.std(axis=0)
    dead = std <= 1e-8
    if dead.any():
        std = std.copy()
        std[dead] = 1e-8
    standardized = (pool - mean) / std
    _, _, vt = np.linalg.svd(standardized, full_matrices=False)
    return TraversalSpec(mean=mean, std=std, components=vt, kappa=kappa)


def pca_traverse(s: np.ndarray, pool, component: int, alpha: float) -> np.ndarray:
    """Move a static code along pool principal direction `component` by alpha.

    s_bar = ((s - mu) / sigma + alpha * v_i * sqrt(h)) * sigma + mu;
    alpha = 0 returns s exactly.  `pool` may be a raw code pool or a
    fitted TraversalSpec.
    """
    spec = pool if isinstance(pool, TraversalSpec) else fit_traversal(np.asarray(pool))
    s = np.asarray(s, dtype=np.float64)
    h = spec.components.shape[1]
    if not 0 <= component < len(spec.components):
        raise DomainError(f"component {component} out of range")
    if abs(alpha) > spec.kappa:
        raise DomainError(f"|alpha| = {abs(alpha)} exceeds kappa = {spec.kappa}")
    if alpha == 0.0:
        return s.copy()
    direction = spec.components[component] * np.sqrt(h)
    return ((s - spec.mean) / spec.std + alpha * direction) * spec.std + spec.mean


# ---------------------------------------------------------------------------
# swap preservation

@dataclass
class PairList:
    """Fixed (static source, dynamic source) index pairs, persisted with the
    seed that drew them so every evaluated model sees the same pairs."""

    static_idx: np.ndarray
    dynamic_idx: np.ndarray
    seed: int

    def save(self, path) -> None:
        payload = {"seed": self.seed,
                   "static_idx": self.static_idx.tolist(),
                   "dynamic_idx": self.dynamic_idx.tolist()}
        Path(path).write_text(json.dumps(payload, indent=0) + "\n")

    @classmethod
    def load(cls, path) -> "PairList":
        payload = json.loads(Path(path).read_text())
        return cls(static_idx=np.array(payload["static_idx"], dtype=np.int64),
                   dynamic_idx=np.array(payload["dynamic_idx"], dtype=np.int64),
                   seed=int(payload["seed"]))


def build_pair_list(n_sequences: int, n_pairs: int, seed: int = 0) -> PairList:
    rng = as_generator(seed)
    static_idx = rng.choice(n_sequences, n_pairs, replace=n_pairs > n_sequences)
    dynamic_idx = rng.choice(n_sequences, n_pairs, replace=n_pairs > n_sequences)
    return PairList(static_idx=static_idx, dynamic_idx=dynamic_idx, seed=seed)


def fit_static_probe(train_batch: SequenceBatch):
    """Classifier from generator features to the ground-truth static label."""
    if train_batch.labels is None:
        raise ContractViolation("probe training requires labeled data")
    feats = static_probe_features(train_batch.frames, train_batch.generator)
    probe = make_pipeline(StandardScaler(), LogisticRegression(max_iter=5000, C=30.0))
    probe.fit(feats, train_batch.labels.static_label)
    return probe


def _track_correlations(est: np.ndarray, ref: np.ndarray) -> np.ndarray:
    flat_e = est.reshape(len(est), -1).astype(np.float64)
    flat_r = ref.reshape(len(ref), -1).astype(np.float64)
    e = flat_e - flat_e.mean(axis=1, keepdims=True)
    r = flat_r - flat_r.mean(axis=1, keepdims=True)
    denom = np.sqrt((e ** 2).sum(1) * (r ** 2).sum(1)) + 1e-12
    return (e * r).sum(1) / denom


def swap_preservation_scores(model: TrainedModel, test_batch: SequenceBatch,
                             pairs: PairList, probe, seed: int = 0) -> MetricsReport:
    """Probe-based preservation scores over a fixed swap pair list.

    For each pair (x, x_hat): the static-frozen swap (s from x, dynamics
    from x_hat) must keep x's static label according to the probe; the
    dynamics-frozen swap (s from x_hat, dynamics from x) must keep x's
    dynamic track according to the generator's extractor.
    """
    if test_batch.labels is None:
        raise ContractViolation("swap evaluation requires labeled data")
    frames = test_batch.frames
    a, b = pairs.static_idx, pairs.dynamic_idx
    static_frozen = model.swap(frames[a], frames[b], seed=seed)
    feats = static_probe_features(static_frozen, test_batch.generator)
    static_acc = float((probe.predict(feats) == test_batch.labels.static_label[a]).mean())

    dynamics_frozen = model.swap(frames[b], frames[a], seed=seed + 1)
    est = dynamic_track_estimate(dynamics_frozen, test_batch.generator)
    ref = test_batch.labels.dynamic_track[a]
    corrs = _track_correlations(est, ref)
    mae = float(np.abs(est - ref).mean())

    report = MetricsReport(seed=seed)
    report.update({
        "swap.static_probe_acc": static_acc,
        "swap.dynamic_track_r": float(corrs.mean()),
        "swap.dynamic_track_mae": mae,
        "swap.n_pairs": int(len(a)),
        "swap.pair_seed": int(pairs.seed),
    })
    return report


# ---------------------------------------------------------------------------
# downstream probes

def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve (rank statistic with tie correction)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractViolation("auroc needs both classes")
    order = np.argsort(scores)
    ranks = np.empty(len(scores))
    ranks[order] = np.arange(1, len(scores) + 1)
    # average ranks over ties
    for value in np.unique(scores):
        mask = scores == value
        if mask.sum() > 1:
            ranks[mask] = ranks[mask].mean()
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Average precision with tied scores processed as one block."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise ContractViolation("auprc needs both classes")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    ap = 0.0
    tp = fp = 0
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and scores[j] == scores[i]:
            j += 1
        block_tp = int(labels[i:j].sum())
        tp += block_tp
        fp += (j - i) - block_tp
        recall_gain = block_tp / n_pos
        precision = tp / (tp + fp)
        ap += recall_gain * precision
        i = j
    return float(ap)


def _macro_ovr(metric, proba: np.ndarray, labels: np.ndarray) -> float:
    classes = np.unique(labels)
    vals = [metric(proba[:, k], labels == cls) for k, cls in enumerate(classes)]
    return float(np.mean(vals))


def downstream_probes(static_codes: np.ndarray, dynamic_codes: np.ndarray,
                      class_target: np.ndarray, regression_target: np.ndarray | None = None,
                      train_frac: float = 0.6, seed: int = 0) -> MetricsReport:
    """Predictive and classification probes over learned latents.

    Fits linear probes on a split of the sequences: a joint-feature
    classifier and regressor (prediction task), plus static-only and
    dynamic-only classifiers whose contrast shows where the global label
    lives.
    """
    class_target = np.asarray(class_target)
    if len(np.unique(class_target)) < 2:
        raise ContractViolation("class target must have at least two classes")
    static_codes = np.asarray(static_codes, dtype=np.float64)
    dyn = np.asarray(dynamic_codes, dtype=np.float64)
    dyn_feats = np.concatenate([dyn.mean(axis=1), dyn[:, -1, :]], axis=1)
    joint = np.concatenate([static_codes, dyn_feats], axis=1)
    n = len(class_target)
    rng = as_generator(seed)
    perm = rng.permutation(n)
    cut = int(train_frac * n)
    tr, te = perm[:cut], perm[cut:]

    def _clf(feats):
        probe = make_pipeline(StandardScaler(), LogisticRegression(max_iter=5000))
        probe.fit(feats[tr], class_target[tr])
        acc = float(probe.score(feats[te], class_target[te]))
        proba = probe.predict_proba(feats[te])
        return acc, proba

    joint_acc, joint_proba = _clf(joint)
    static_acc, _ = _clf(static_codes)
    dynamic_acc, _ = _clf(dyn_feats)
    report = MetricsReport(seed=seed)
    report.update({
        "probe.prediction.auroc": _macro_ovr(auroc, joint_proba, class_target[te]),
        "probe.prediction.auprc": _macro_ovr(auprc, joint_proba, class_target[te]),
        "probe.prediction.acc": joint_acc,
        "probe.classification.static_only_acc": static_acc,
        "probe.classification.dynamic_only_acc": dynamic_acc,
        "probe.classification.static_minus_dynamic": static_acc - dynamic_acc,
    })
    if regression_target is not None:
        reg = make_pipeline(StandardScaler(), Ridge(alpha=1.0))
        target = np.asarray(regression_target, dtype=np.float64)
        reg.fit(joint[tr], target[tr])
        mae = float(np.abs(reg.predict(joint[te]) - target[te]).mean())
        report.update({"probe.prediction.mae": mae})
    return report


def reconstruction_mse(model: TrainedModel, test_batch: SequenceBatch,
                       seed: int = 0, n_steps: int | None = None) -> float:
    """Mean squared reconstruction error in normalized units."""
    return model.reconstruction_mse(test_batch.frames, seed=seed, n_steps=n_steps)
