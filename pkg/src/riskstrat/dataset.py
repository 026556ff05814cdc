"""Feature/rater-score ingestion, target construction, rebalancing, CV splits.

File formats (CSV throughout):

- features.csv: optional header; each row is ``id,f1,...,fd``.
- raters.csv:   each row is ``id,task,score_1,...,score_R``; an empty field is
  a missing rating.
- truth.csv:    each row is ``id,label`` with labels in {-1,+1}.

All randomized operations take an explicit seed and are deterministic given it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input files."""


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------


@dataclass
class FeatureMatrix:
    """Dense n x d matrix of per-sample feature vectors with aligned ids."""

    data: np.ndarray
    sample_ids: List[str]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise DataError(f"feature data must be 2-D, got shape {self.data.shape}")
        n, d = self.data.shape
        if n < 1 or d < 1:
            raise DataError(f"feature matrix must be at least 1x1, got {n}x{d}")
        if not np.all(np.isfinite(self.data)):
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise DataError(
                f"non-finite feature value at row {bad[0]}, column {bad[1]}"
            )
        if len(self.sample_ids) != n:
            raise DataError(
                f"{len(self.sample_ids)} sample ids for {n} rows"
            )
        if len(set(self.sample_ids)) != n:
            raise DataError("sample ids are not unique")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def load_features(
    path,
    has_header: bool = True,
    id_column: bool = True,
) -> FeatureMatrix:
    """Parse a features CSV into a FeatureMatrix.

    When id_column is False, row numbers (as strings) become the sample ids.
    Parse failures report the offending row and column; NaN/Inf cells are
    rejected by name.
    """
    rows: List[List[str]] = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if rec:
                rows.append(rec)
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no rows")

    width = len(rows[0])
    ids: List[str] = []
    data = np.empty((len(rows), width - (1 if id_column else 0)), dtype=float)
    for i, rec in enumerate(rows):
        if len(rec) != width:
            raise DataError(
                f"{path}: ragged row {i}: expected {width} fields, got {len(rec)}"
            )
        if id_column:
            ids.append(rec[0])
            cells = rec[1:]
        else:
            ids.append(str(i))
            cells = rec
        for j, cell in enumerate(cells):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse row {i}, column {j}: {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{path}: non-finite value {cell!r} at row {i}, column {j}"
                )
            data[i, j] = v
    return FeatureMatrix(data=data, sample_ids=ids)


def save_features(fm: FeatureMatrix, path, header: bool = True) -> None:
    """Write a FeatureMatrix as CSV with 17 significant digits (round-trip safe)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["id"] + [f"f{j}" for j in range(fm.d)])
        for sid, row in zip(fm.sample_ids, fm.data):
            w.writerow([sid] + [f"{v:.17g}" for v in row])


# ---------------------------------------------------------------------------
# Rater scores and targets
# ---------------------------------------------------------------------------


@dataclass
class RaterScores:
    """Ordinal scores from R raters for one task; NaN marks a missing cell."""

    scores: np.ndarray
    task_name: str
    scale_min: int
    scale_max: int
    sample_ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.ndim != 2:
            raise DataError("rater scores must be an n x R matrix")
        present = ~np.isnan(self.scores)
        if not np.all(present.any(axis=1)):
            j = int(np.argmin(present.any(axis=1)))
            raise DataError(f"sample {j} ({self.sid(j)}) has no rater scores")
        vals = self.scores[present]
        if vals.size and (vals.min() < self.scale_min or vals.max() > self.scale_max):
            raise DataError(
                f"task {self.task_name}: score outside "
                f"[{self.scale_min}, {self.scale_max}]"
            )
        if not self.sample_ids:
            self.sample_ids = [str(i) for i in range(self.scores.shape[0])]

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def sid(self, j: int) -> str:
        return self.sample_ids[j] if self.sample_ids else str(j)

    def rater_counts(self) -> np.ndarray:
        return (~np.isnan(self.scores)).sum(axis=1)


def load_raters(
    path,
    scales: Optional[Dict[str, Tuple[int, int]]] = None,
    default_scale: Tuple[int, int] = (1, 5),
    has_header: bool = True,
) -> Dict[str, RaterScores]:
    """Parse a raters CSV (id,task,score_1,...) grouped per task.

    scales maps task names to (scale_min, scale_max); unlisted tasks get
    default_scale.
    """
    scales = scales or {}
    per_task: Dict[str, Tuple[List[str], List[List[float]]]] = {}
    with open(path, newline="") as fh:
        rows = [rec for rec in csv.reader(fh) if rec]
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no rows")
    for i, rec in enumerate(rows):
        if len(rec) < 3:
            raise DataError(
                f"{path}: row {i} needs id,task and at least one score field"
            )
        sid, task = rec[0], rec[1]
        scores: List[float] = []
        for j, cell in enumerate(rec[2:]):
            if cell.strip() == "":
                scores.append(float("nan"))
                continue
            try:
                scores.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: cannot parse row {i}, score field {j}: {cell!r}"
                ) from None
        ids, mat = per_task.setdefault(task, ([], []))
        ids.append(sid)
        mat.append(scores)

    out: Dict[str, RaterScores] = {}
    for task, (ids, mat) in per_task.items():
        width = max(len(r) for r in mat)
        padded = np.full((len(mat), width), np.nan)
        for i, r in enumerate(mat):
            padded[i, : len(r)] = r
        lo, hi = scales.get(task, default_scale)
        out[task] = RaterScores(
            scores=padded, task_name=task, scale_min=lo, scale_max=hi,
            sample_ids=ids,
        )
    return out


def aggregate_raters(
    raw: RaterScores,
    exclude_at_pivot: bool = False,
    min_raters: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean score per sample plus an inclusion mask.

    mask[j] is 0 when the sample has fewer than min_raters present scores, or
    when exclude_at_pivot is set and the mean equals the scale midpoint
    exactly (the indecision-exclusion rule).
    """
    present = ~np.isnan(raw.scores)
    counts = present.sum(axis=1)
    if np.any(counts == 0):
        j = int(np.argmin(counts))
        raise DataError(f"sample {raw.sid(j)} has no rater scores")
    with np.errstate(invalid="ignore"):
        targets = np.nanmean(raw.scores, axis=1)
    mask = (counts >= min_raters).astype(int)
    if exclude_at_pivot:
        pivot = (raw.scale_min + raw.scale_max) / 2.0
        mask[targets == pivot] = 0
    return targets, mask


def binarize(
    targets: np.ndarray,
    scale_min: float,
    scale_max: float,
    mask: Optional[np.ndarray] = None,
    pivot_tie: str = "error",
) -> np.ndarray:
    """Map mean scores to {-1,+1} around the scale midpoint.

    Scores above the pivot become +1, below become -1.  A score exactly at the
    pivot for a still-included sample is ambiguous: with pivot_tie="error"
    (default) it raises, "negative"/"positive" force a side.
    """
    targets = np.asarray(targets, dtype=float)
    pivot = (scale_min + scale_max) / 2.0
    labels = np.where(targets > pivot, 1, -1)
    at_pivot = targets == pivot
    if mask is not None:
        at_pivot = at_pivot & (np.asarray(mask) != 0)
    if np.any(at_pivot):
        if pivot_tie == "error":
            j = int(np.argmax(at_pivot))
            raise DataError(
                f"sample {j}: target {targets[j]} equals pivot {pivot} but is "
                "not masked out; ambiguous label"
            )
        labels[at_pivot] = 1 if pivot_tie == "positive" else -1
    return labels


@dataclass
class TaskTargets:
    """Per-task mean scores, binary labels, and inclusion masks for M tasks."""

    task_names: List[str]
    targets: np.ndarray
    binary_labels: np.ndarray
    mask: np.ndarray

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def n_tasks(self) -> int:
        return len(self.task_names)

    def task_index(self, name: str) -> int:
        try:
            return self.task_names.index(name)
        except ValueError:
            raise KeyError(f"unknown task {name!r}; have {self.task_names}") from None


def build_task_targets(
    raters_by_task: Dict[str, RaterScores],
    sample_ids: Sequence[str],
    exclude_at_pivot_tasks: Sequence[str] = (),
    min_raters: int = 1,
    pivot_tie: str = "negative",
) -> TaskTargets:
    """Assemble TaskTargets aligned to sample_ids from per-task rater scores.

    Tasks named in exclude_at_pivot_tasks drop pivot-valued means from their
    mask; other tasks resolve exact-pivot means with pivot_tie.  Samples
    missing from a task's file get mask 0 for that task.
    """
    tasks = sorted(raters_by_task)
    n, M = len(sample_ids), len(tasks)
    pos = {sid: i for i, sid in enumerate(sample_ids)}
    targets = np.zeros((n, M))
    labels = np.full((n, M), -1, dtype=int)
    mask = np.zeros((n, M), dtype=int)
    for ti, task in enumerate(tasks):
        raw = raters_by_task[task]
        missing = [sid for sid in raw.sample_ids if sid not in pos]
        if missing:
            raise DataError(
                f"task {task}: rater ids not present in features: "
                + ", ".join(missing[:10])
            )
        tg, mk = aggregate_raters(
            raw,
            exclude_at_pivot=task in exclude_at_pivot_tasks,
            min_raters=min_raters,
        )
        lb = binarize(tg, raw.scale_min, raw.scale_max, mask=mk, pivot_tie=pivot_tie)
        rows = [pos[sid] for sid in raw.sample_ids]
        targets[rows, ti] = tg
        labels[rows, ti] = lb
        mask[rows, ti] = mk
    return TaskTargets(
        task_names=tasks, targets=targets, binary_labels=labels, mask=mask
    )


# ---------------------------------------------------------------------------
# ADASYN rebalancing
# ---------------------------------------------------------------------------


def adasyn_core(
    X: np.ndarray,
    labels: np.ndarray,
    k_neighbors: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Generate minority-class synthetic points by adaptive interpolation.

    Returns (synthetic_points, parents, neighbors, lambdas) where each
    synthetic row equals X[m[p]] + lam * (X[m[z]] - X[m[p]]) for minority rows
    m; parents/neighbors index into the minority subset.  The number of
    synthetic points per minority sample follows the density ratio
    r_i = (majority fraction among its k nearest neighbors), normalized and
    apportioned so exactly majority_count - minority_count points are
    produced.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise DataError("adasyn: input contains a single class")
    if classes.size > 2:
        raise DataError(f"adasyn: expected 2 classes, got {classes.size}")
    minority = classes[np.argmin(counts)]
    n_min, n_maj = counts.min(), counts.max()
    G = int(n_maj - n_min)
    min_idx = np.where(labels == minority)[0]
    empty = np.empty(0, dtype=int)
    if G == 0:
        return np.empty((0, X.shape[1])), empty, empty, np.empty(0)
    if n_min < k_neighbors + 1:
        raise DataError(
            f"adasyn: minority class has {n_min} samples, needs at least "
            f"k_neighbors+1 = {k_neighbors + 1}"
        )

    # Majority fraction among each minority point's k nearest neighbors
    # (searched over all samples, excluding the point itself).
    d_all = np.linalg.norm(X[min_idx][:, None, :] - X[None, :, :], axis=2)
    r = np.empty(len(min_idx))
    for i, gi in enumerate(min_idx):
        d = d_all[i].copy()
        d[gi] = np.inf
        nn = np.argsort(d, kind="stable")[:k_neighbors]
        r[i] = np.mean(labels[nn] != minority)
    r_hat = r / r.sum() if r.sum() > 0 else np.full(len(min_idx), 1.0 / len(min_idx))

    # Largest-remainder apportionment so the counts sum to exactly G.
    quota = r_hat * G
    g = np.floor(quota).astype(int)
    rem = G - g.sum()
    if rem > 0:
        order = np.argsort(-(quota - g), kind="stable")
        g[order[:rem]] += 1

    # k nearest minority neighbors of each minority point, for interpolation.
    d_min = np.linalg.norm(X[min_idx][:, None, :] - X[min_idx][None, :, :], axis=2)
    np.fill_diagonal(d_min, np.inf)
    nn_min = np.argsort(d_min, axis=1, kind="stable")[:, :k_neighbors]

    synth = np.empty((G, X.shape[1]))
    parents = np.empty(G, dtype=int)
    neighbors = np.empty(G, dtype=int)
    lams = np.empty(G)
    pos = 0
    for i in range(len(min_idx)):
        for _ in range(g[i]):
            z = nn_min[i, rng.integers(k_neighbors)]
            lam = rng.uniform()
            synth[pos] = X[min_idx[i]] + lam * (X[min_idx[z]] - X[min_idx[i]])
            parents[pos] = i
            neighbors[pos] = z
            lams[pos] = lam
            pos += 1
    return synth, parents, neighbors, lams


def adasyn_rebalance(
    features: FeatureMatrix,
    labels: np.ndarray,
    k_neighbors: int = 5,
    seed: int = 0,
) -> Tuple[FeatureMatrix, np.ndarray]:
    """Append synthetic minority samples until class counts are equal."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    synth, _, _, _ = adasyn_core(features.data, labels, k_neighbors, rng)
    if synth.shape[0] == 0:
        return features, labels
    classes, counts = np.unique(labels, return_counts=True)
    minority = classes[np.argmin(counts)]
    new_ids = list(features.sample_ids) + [
        f"synthetic-{i}" for i in range(synth.shape[0])
    ]
    out = FeatureMatrix(
        data=np.vstack([features.data, synth]), sample_ids=new_ids
    )
    out_labels = np.concatenate([labels, np.full(synth.shape[0], minority)])
    return out, out_labels


# ---------------------------------------------------------------------------
# Cross-validation plans
# ---------------------------------------------------------------------------


@dataclass
class CvPlan:
    n_folds: int
    assignments: np.ndarray
    stratify_on: Optional[str] = None
    seed: int = 0

    def folds(self) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        """Yield (fold_index, train_indices, test_indices) per fold."""
        all_idx = np.arange(len(self.assignments))
        for f in range(self.n_folds):
            test = all_idx[self.assignments == f]
            train = all_idx[self.assignments != f]
            yield f, train, test


def make_cv_plan(
    labels: np.ndarray,
    n_folds: int,
    seed: int = 0,
    stratified: bool = True,
    stratify_on: Optional[str] = None,
) -> CvPlan:
    """Partition [0, n) into folds of near-equal size.

    Stratified mode shuffles within each label class and deals the
    class-grouped sequence round-robin, so per-fold class counts deviate from
    the global ratio by at most one sample while fold sizes stay balanced.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n_folds < 2:
        raise DataError(f"n_folds must be >= 2, got {n_folds}")
    if n < n_folds:
        raise DataError(f"cannot split {n} samples into {n_folds} folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=int)
    if stratified:
        order: List[int] = []
        for cls in np.unique(labels):
            idx = np.where(labels == cls)[0]
            rng.shuffle(idx)
            order.extend(idx.tolist())
    else:
        idx = np.arange(n)
        rng.shuffle(idx)
        order = idx.tolist()
    for pos, sample in enumerate(order):
        assignments[sample] = pos % n_folds
    return CvPlan(
        n_folds=n_folds, assignments=assignments,
        stratify_on=stratify_on, seed=seed,
    )


# ---------------------------------------------------------------------------
# Feature standardization (train-fold statistics)
# ---------------------------------------------------------------------------


@dataclass
class Standardizer:
    """Z-score transform fitted on training data only."""

    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    def fit(self, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        self.std = std
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise RuntimeError("Standardizer.transform called before fit")
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        return self.fit(X).transform(X)
