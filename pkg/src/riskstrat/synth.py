"""Desk-scale synthetic data generators for both learning engines.

`make_mtl_data` plants a sparse (optionally shared or low-rank) coefficient
matrix and emits noisy linear targets; `make_llp_blobs` draws two Gaussian
blobs and an optional corrupted copy of the labels simulating a noisy initial
clustering.  Everything is deterministic under the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np


@dataclass
class MtlSynthData:
    X: np.ndarray
    W_star: np.ndarray
    Y: np.ndarray
    support: np.ndarray
    task_names: List[str] = field(default_factory=list)


def make_mtl_data(
    n: int = 200,
    d: int = 50,
    n_tasks: int = 4,
    support_frac: float = 0.1,
    noise: float = 0.1,
    task_jitter: float = 0.1,
    structure: str = "shared",
    rank: int = 1,
    amplitude: float = 1.0,
    seed: int = 0,
) -> MtlSynthData:
    """Plant Y = X W* + noise with a controllable coefficient structure.

    structure="shared": all tasks share one sparse support; per-task columns
    are the base vector plus task_jitter-scaled perturbations on the support.
    structure="independent": each task draws its own sparse support.
    structure="lowrank": W* = sum of `rank` outer products (dense).
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    s = max(1, int(round(support_frac * d)))
    W = np.zeros((d, n_tasks))
    if structure == "shared":
        support = rng.choice(d, size=s, replace=False)
        base = rng.normal(size=s) * amplitude
        base += np.sign(base) * 0.5 * amplitude  # keep coefficients off zero
        for i in range(n_tasks):
            W[support, i] = base + task_jitter * rng.normal(size=s)
        supp_mask = np.zeros(d, dtype=bool)
        supp_mask[support] = True
    elif structure == "independent":
        supp_mask = np.zeros((d, n_tasks), dtype=bool)
        for i in range(n_tasks):
            support = rng.choice(d, size=s, replace=False)
            vals = rng.normal(size=s) * amplitude
            vals += np.sign(vals) * 0.5 * amplitude
            W[support, i] = vals
            supp_mask[support, i] = True
    elif structure == "lowrank":
        for _ in range(rank):
            W += np.outer(rng.normal(size=d), rng.normal(size=n_tasks)) * amplitude
        supp_mask = np.ones(d, dtype=bool)
    else:
        raise ValueError(f"unknown structure {structure!r}")
    Y = X @ W + noise * rng.normal(size=(n, n_tasks))
    return MtlSynthData(
        X=X, W_star=W, Y=Y, support=supp_mask,
        task_names=[f"task{i}" for i in range(n_tasks)],
    )


@dataclass
class LlpSynthData:
    X: np.ndarray
    truth: np.ndarray
    init_labels: Optional[np.ndarray] = None


def make_llp_blobs(
    n: int = 200,
    d: int = 2,
    separation: float = 4.0,
    flip_rate: float = 0.0,
    pos_fraction: float = 0.5,
    flip_mode: str = "to_negative",
    neg_scale: float = 1.0,
    pos_scale: float = 1.0,
    outlier_frac: float = 0.0,
    outlier_shift: float = 6.0,
    flip_bias: float = 0.7,
    seed: int = 0,
) -> LlpSynthData:
    """Two Gaussian blobs with centers `separation` apart along the first axis.

    truth is +1 for the positive blob.  neg_scale/pos_scale set the per-blob
    standard deviations.  With outlier_frac > 0, that fraction of the positive
    blob is drawn outlier_shift further out along the first axis: a same-class
    appearance-outlier cloud that displaces class centroids without sitting
    near the decision margin.  With flip_rate > 0, init_labels holds a
    corrupted copy of truth standing in for a noisy initial clustering:
    flip_mode="to_negative" relabels the chosen fraction of positives as -1
    (the skew seen when an unsupervised grouping over-assigns the majority
    class); "symmetric" flips a uniformly chosen fraction of all samples;
    "biased" splits the flips flip_bias : (1 - flip_bias) between
    positive-to-negative and negative-to-positive.
    """
    if not 0.0 <= flip_rate < 1.0:
        raise ValueError(f"flip_rate must lie in [0, 1), got {flip_rate}")
    rng = np.random.default_rng(seed)
    n_pos = int(round(pos_fraction * n))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both blobs need at least one sample")
    centers = np.zeros((2, d))
    centers[0, 0] = -separation / 2.0
    centers[1, 0] = +separation / 2.0
    pos_part = centers[1] + pos_scale * rng.normal(size=(n_pos, d))
    if outlier_frac > 0:
        n_out = int(round(outlier_frac * n_pos))
        out_idx = rng.choice(n_pos, size=n_out, replace=False)
        pos_part[out_idx, 0] += outlier_shift
    X = np.vstack(
        [centers[0] + neg_scale * rng.normal(size=(n_neg, d)), pos_part]
    )
    truth = np.concatenate([np.full(n_neg, -1), np.full(n_pos, 1)])
    perm = rng.permutation(n)
    X, truth = X[perm], truth[perm]

    init = None
    if flip_rate > 0:
        init = truth.copy()
        n_flip = int(round(flip_rate * n))
        if flip_mode == "to_negative":
            pos_idx = np.where(truth == 1)[0]
            n_flip = min(n_flip, len(pos_idx))
            chosen = rng.choice(pos_idx, size=n_flip, replace=False)
            init[chosen] = -1
        elif flip_mode == "symmetric":
            chosen = rng.choice(n, size=n_flip, replace=False)
            init[chosen] = -init[chosen]
        elif flip_mode == "biased":
            if not 0.0 <= flip_bias <= 1.0:
                raise ValueError(f"flip_bias must lie in [0, 1], got {flip_bias}")
            pos_idx = np.where(truth == 1)[0]
            neg_idx = np.where(truth == -1)[0]
            n_p2n = min(int(round(flip_bias * n_flip)), len(pos_idx))
            n_n2p = min(n_flip - n_p2n, len(neg_idx))
            init[rng.choice(pos_idx, size=n_p2n, replace=False)] = -1
            init[rng.choice(neg_idx, size=n_n2p, replace=False)] = 1
        else:
            raise ValueError(f"unknown flip_mode {flip_mode!r}")
    return LlpSynthData(X=X, truth=truth, init_labels=init)


def make_rater_scores(
    true_scores: np.ndarray,
    n_raters: int = 4,
    rater_noise: float = 0.7,
    missing_rate: float = 0.25,
    scale: Tuple[int, int] = (1, 5),
    min_present: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Ordinal rater-score matrix around continuous true scores.

    Each rater reports round(true + noise) clipped to the scale; cells go
    missing at missing_rate but at least min_present raters stay per row.
    Returns an n x n_raters float matrix with NaN for missing cells.
    """
    rng = np.random.default_rng(seed)
    true_scores = np.asarray(true_scores, dtype=float)
    n = true_scores.shape[0]
    lo, hi = scale
    scores = np.clip(
        np.round(true_scores[:, None] + rater_noise * rng.normal(size=(n, n_raters))),
        lo, hi,
    )
    if missing_rate > 0:
        drop = rng.uniform(size=(n, n_raters)) < missing_rate
        for j in range(n):
            keep = np.where(~drop[j])[0]
            if len(keep) < min_present:
                present = rng.choice(n_raters, size=min_present, replace=False)
                drop[j] = True
                drop[j, present] = False
        scores[drop] = np.nan
    return scores
