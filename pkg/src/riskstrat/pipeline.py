"""End-to-end training/evaluation flows shared by the CLI and tests.

Both flows are strictly fold-local: standardization statistics, task-graph
estimation, rebalancing, and all fitting happen inside each training fold;
ground-truth labels for the unsupervised flow touch evaluation code only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import metrics, mtl, propsvm
from .dataset import (
    FeatureMatrix,
    Standardizer,
    TaskTargets,
    adasyn_core,
    make_cv_plan,
)
from .proxgrad import OptimizerConfig


@dataclass
class MtlRunConfig:
    rho1: float = 1.0
    rho2: float = 10.0
    rho_trace: float = 1.0
    rho_ridge: float = 1.0
    corr_threshold: float = 0.5
    folds: int = 10
    seed: int = 42
    eval_task: Optional[str] = None
    baselines: Tuple[str, ...] = ("lasso", "ridge", "trace")
    use_inconsistency: bool = True
    adasyn: bool = False
    adasyn_k: int = 5
    standardize: bool = True
    max_iters: int = 1000
    tol: float = 1e-6

    def to_dict(self) -> dict:
        out = asdict(self)
        out["baselines"] = list(self.baselines)
        return out


@dataclass
class PropSvmRunConfig:
    cost: float = 1.0
    epsilon: float = 0.1
    folds: int = 10
    seed: int = 42
    max_outer_iters: int = 50
    standardize: bool = True
    baselines: Tuple[str, ...] = ("clustering", "clustering+svm")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["baselines"] = list(self.baselines)
        return out


def _optimizer_config(cfg: MtlRunConfig) -> OptimizerConfig:
    return OptimizerConfig(max_iters=cfg.max_iters, tol=cfg.tol, seed=cfg.seed)


def _task_training_views(
    X: np.ndarray,
    targets: TaskTargets,
    psi: Optional[np.ndarray],
    rows: np.ndarray,
) -> Tuple[List[np.ndarray], List[np.ndarray], List[Optional[np.ndarray]], List[float]]:
    """Per-task centered (X_i, Y_i, psi_i, target offset) over included rows."""
    Xs, Ys, Ps, offsets = [], [], [], []
    for ti in range(targets.n_tasks):
        keep = rows[targets.mask[rows, ti] == 1]
        yi = targets.targets[keep, ti]
        off = float(yi.mean()) if yi.size else 0.0
        Xs.append(X[keep])
        Ys.append(yi - off)
        Ps.append(psi[keep, ti] if psi is not None else None)
        offsets.append(off)
    return Xs, Ys, Ps, offsets


def _rebalance_task(Xi, yi, pi, labels, k_neighbors, rng):
    """ADASYN on one task's training view; synthetic points interpolate the
    continuous target (and psi) with the same mixing weight as the features."""
    synth, parents, neighbors, lams = adasyn_core(Xi, labels, k_neighbors, rng)
    if synth.shape[0] == 0:
        return Xi, yi, pi
    classes, counts = np.unique(labels, return_counts=True)
    minority = classes[np.argmin(counts)]
    minority_rows = np.where(labels == minority)[0]

    def mix(values):
        base = values[minority_rows]
        return (1 - lams) * base[parents] + lams * base[neighbors]

    yi_new = np.concatenate([yi, mix(yi)])
    pi_new = np.concatenate([pi, mix(pi)]) if pi is not None else None
    return np.vstack([Xi, synth]), yi_new, pi_new


def train_mtl(
    features: FeatureMatrix,
    targets: TaskTargets,
    psi_by_task: Optional[Dict[str, np.ndarray]] = None,
    config: Optional[MtlRunConfig] = None,
) -> dict:
    """Cross-validated graph-regularized sparse MTL with per-task baselines.

    Returns a JSON-ready report: pooled and per-fold regression metrics per
    method and task, the eval-task predictions of every method, the task graph
    of the final full-data model, and the exact run configuration.
    """
    cfg = config or MtlRunConfig()
    X_all = features.data
    if targets.n != X_all.shape[0]:
        raise ValueError(
            f"targets cover {targets.n} samples, features have {X_all.shape[0]}"
        )
    eval_task = cfg.eval_task or (
        "malignancy" if "malignancy" in targets.task_names else targets.task_names[0]
    )
    eval_ti = targets.task_index(eval_task)

    psi = None
    if cfg.use_inconsistency and psi_by_task:
        psi = np.ones((targets.n, targets.n_tasks))
        for name, vec in psi_by_task.items():
            psi[:, targets.task_index(name)] = np.asarray(vec, dtype=float)

    opt_cfg = _optimizer_config(cfg)
    plan = make_cv_plan(
        targets.binary_labels[:, eval_ti],
        n_folds=cfg.folds,
        seed=cfg.seed,
        stratified=True,
        stratify_on=eval_task,
    )
    methods = ["graph_sparse_mtl"] + [
        {"lasso": "lasso", "ridge": "ridge", "trace": "trace_mtl"}[b]
        for b in cfg.baselines
    ]
    fold_reports: Dict[str, Dict[str, List[metrics.EvalReport]]] = {
        m: {t: [] for t in targets.task_names} for m in methods
    }
    predictions: Dict[str, List[dict]] = {m: [] for m in methods}
    structures: List[List[List[int]]] = []
    rng = np.random.default_rng(cfg.seed)

    for fold, train_idx, test_idx in plan.folds():
        scaler = Standardizer()
        X_train = (
            scaler.fit_transform(X_all[train_idx])
            if cfg.standardize
            else X_all[train_idx]
        )
        X_test = scaler.transform(X_all[test_idx]) if cfg.standardize else X_all[test_idx]
        loc = {g: i for i, g in enumerate(train_idx)}

        S = mtl.estimate_structure(
            X_train,
            targets.targets[train_idx],
            rho2=cfg.rho2,
            corr_threshold=cfg.corr_threshold,
            cfg=opt_cfg,
            mask=targets.mask[train_idx],
        )
        structures.append([list(e) for e in S.edges])

        Xs, Ys, Ps, offsets = [], [], [], []
        for ti in range(targets.n_tasks):
            keep = train_idx[targets.mask[train_idx, ti] == 1]
            rows = np.array([loc[g] for g in keep], dtype=int)
            Xi, yi = X_train[rows], targets.targets[keep, ti]
            pi = psi[keep, ti] if psi is not None else None
            if cfg.adasyn:
                Xi, yi, pi = _rebalance_task(
                    Xi, yi, pi, targets.binary_labels[keep, ti], cfg.adasyn_k, rng
                )
            # Penalized fits carry no intercept; center each task's targets on
            # the training fold and restore the offset at prediction time.
            off = float(yi.mean()) if yi.size else 0.0
            Xs.append(Xi)
            Ys.append(yi - off)
            Ps.append(pi)
            offsets.append(off)

        fitted: Dict[str, mtl.WeightMatrix] = {}
        fitted["graph_sparse_mtl"] = mtl.fit_graph_sparse_mtl(
            Xs, Ps, Ys, S, cfg.rho1, cfg.rho2, cfg=opt_cfg,
            task_names=targets.task_names,
        )
        if "lasso" in methods:
            fitted["lasso"] = mtl.WeightMatrix(
                W=np.column_stack(
                    [mtl.fit_lasso(Xi, yi, cfg.rho2, cfg=opt_cfg) for Xi, yi in zip(Xs, Ys)]
                ),
                task_names=targets.task_names,
            )
        if "ridge" in methods:
            fitted["ridge"] = mtl.WeightMatrix(
                W=np.column_stack(
                    [mtl.fit_ridge(Xi, yi, cfg.rho_ridge) for Xi, yi in zip(Xs, Ys)]
                ),
                task_names=targets.task_names,
            )
        if "trace_mtl" in methods:
            fitted["trace_mtl"] = mtl.fit_trace_mtl(
                Xs, Ys, cfg.rho_trace, cfg=opt_cfg, task_names=targets.task_names
            )

        for method, wm in fitted.items():
            for ti, task in enumerate(targets.task_names):
                keep = test_idx[targets.mask[test_idx, ti] == 1]
                if keep.size == 0:
                    continue
                test_rows = np.searchsorted(test_idx, keep)
                pred = mtl.predict_scores(X_test[test_rows], wm, task) + offsets[ti]
                truth = targets.targets[keep, ti]
                fold_reports[method][task].append(
                    metrics.regression_report(pred, truth)
                )
                if ti == eval_ti:
                    predictions[method].extend(
                        {
                            "id": features.sample_ids[g],
                            "pred": float(p),
                            "truth": float(t),
                        }
                        for g, p, t in zip(keep, pred, truth)
                    )

    report_methods = {}
    for method in methods:
        per_task = {}
        for task in targets.task_names:
            reps = fold_reports[method][task]
            if reps:
                per_task[task] = metrics.aggregate_cv(reps).to_dict()
        report_methods[method] = per_task

    # Final model on the full data for the emitted artifact.
    scaler = Standardizer()
    X_full = scaler.fit_transform(X_all) if cfg.standardize else X_all
    S_full = mtl.estimate_structure(
        X_full, targets.targets, rho2=cfg.rho2,
        corr_threshold=cfg.corr_threshold, cfg=opt_cfg, mask=targets.mask,
    )
    all_rows = np.arange(targets.n)
    Xs, Ys, Ps, final_offsets = _task_training_views(X_full, targets, psi, all_rows)
    final_model = mtl.fit_graph_sparse_mtl(
        Xs, Ps, Ys, S_full, cfg.rho1, cfg.rho2, cfg=opt_cfg,
        task_names=targets.task_names,
    )

    return {
        "command": "train-mtl",
        "config": cfg.to_dict(),
        "tasks": targets.task_names,
        "eval_task": eval_task,
        "structure_edges": [list(e) for e in S_full.edges],
        "per_fold_structure_edges": structures,
        "target_offsets": final_offsets,
        "methods": report_methods,
        "predictions": {m: predictions[m] for m in methods},
        "_final_model": final_model,
        "_final_structure": S_full,
    }


def train_propsvm(
    features: FeatureMatrix,
    truth: Optional[np.ndarray] = None,
    config: Optional[PropSvmRunConfig] = None,
    init_labels: Optional[np.ndarray] = None,
) -> dict:
    """Cross-validated unsupervised pipeline with clustering baselines.

    Per fold: cluster the training features (or adopt init_labels as the
    initial grouping), derive bags and label proportions, fit the
    proportion-constrained SVM, classify the held-out fold, and score against
    truth after evaluation-side orientation.  Without truth, fits one model on
    all data and skips evaluation.
    """
    cfg = config or PropSvmRunConfig()
    X_all = features.data
    n = X_all.shape[0]
    if init_labels is not None:
        init_labels = np.asarray(init_labels, dtype=int)
        if init_labels.shape[0] != n:
            raise ValueError(f"{init_labels.shape[0]} init labels for {n} samples")
    if truth is not None:
        truth = np.asarray(truth, dtype=int)
        if truth.shape[0] != n:
            raise ValueError(f"truth covers {truth.shape[0]} samples, need {n}")

    rng = np.random.default_rng(cfg.seed)
    fold_seeds = rng.integers(0, 2**31 - 1, size=max(cfg.folds, 1))

    def fit_one(train_idx, fold_seed):
        scaler = Standardizer()
        X_train = (
            scaler.fit_transform(X_all[train_idx])
            if cfg.standardize
            else X_all[train_idx]
        )
        if init_labels is not None:
            assignment = (init_labels[train_idx] == 1).astype(int)
            if np.unique(assignment).size < 2:
                raise ValueError("initial labels give a single group")
        else:
            assignment = propsvm.kmeans(X_train, k=2, seed=int(fold_seed)).assignment
        bags = propsvm.label_proportions(
            assignment, positive_cluster=1, epsilon=cfg.epsilon
        )
        init = np.where(assignment == 1, 1, -1)
        history: List[float] = []
        model, final_labels = propsvm.fit_propsvm(
            X_train, bags, init, K=cfg.cost,
            max_outer_iters=cfg.max_outer_iters, history=history,
        )
        return scaler, assignment, bags, model, final_labels, history

    if truth is None:
        scaler, assignment, bags, model, final_labels, history = fit_one(
            np.arange(n), fold_seeds[0]
        )
        return {
            "command": "train-propsvm",
            "config": cfg.to_dict(),
            "evaluated": False,
            "objective_trace": history,
            "bag_summary": _bag_summary(bags),
            "_final_model": model,
        }

    plan = make_cv_plan(
        truth, n_folds=cfg.folds, seed=cfg.seed, stratified=True
    )
    method_names = ["propsvm"] + list(cfg.baselines)
    fold_reports: Dict[str, List[metrics.EvalReport]] = {m: [] for m in method_names}
    predictions: Dict[str, List[dict]] = {m: [] for m in method_names}
    traces: List[List[float]] = []

    for fold, train_idx, test_idx in plan.folds():
        scaler, assignment, bags, model, _, history = fit_one(
            train_idx, fold_seeds[fold]
        )
        traces.append(history)
        X_test = (
            scaler.transform(X_all[test_idx]) if cfg.standardize else X_all[test_idx]
        )
        X_train = (
            scaler.transform(X_all[train_idx]) if cfg.standardize else X_all[train_idx]
        )
        preds = {"propsvm": model.predict(X_test)}
        for b in cfg.baselines:
            preds[b] = propsvm.baseline_cluster_classify(
                X_train, X_test, b, K=cfg.cost, init_assignment=assignment
            )
        truth_test = truth[test_idx]
        for method, pred in preds.items():
            clusters = ((np.asarray(pred) + 1) // 2).astype(int)
            mapping = propsvm.orient_clusters(clusters, truth_test)
            oriented = propsvm.apply_orientation(clusters, mapping)
            fold_reports[method].append(metrics.binary_report(oriented, truth_test))
            predictions[method].extend(
                {
                    "id": features.sample_ids[g],
                    "pred": int(p),
                    "truth": int(t),
                }
                for g, p, t in zip(test_idx, oriented, truth_test)
            )

    scaler, assignment, bags, final_model, _, _ = fit_one(
        np.arange(n), fold_seeds[0]
    )
    return {
        "command": "train-propsvm",
        "config": cfg.to_dict(),
        "evaluated": True,
        "methods": {
            m: metrics.aggregate_cv(fold_reports[m]).to_dict() for m in method_names
        },
        "predictions": predictions,
        "objective_traces": traces,
        "bag_summary": _bag_summary(bags),
        "_final_model": final_model,
    }


def _bag_summary(bags: propsvm.BagSet) -> dict:
    return {
        "sizes": [int(len(b)) for b in bags.bags],
        "proportions": [float(p) for p in bags.proportions],
        "epsilon": bags.epsilon,
        "cluster_fractions": [float(f) for f in bags.cluster_fractions],
    }
