"""Command-line front end: synthetic data, training runs, evaluation.

Every command is deterministic given its inputs and --seed; reports embed the
exact resolved configuration.  Errors print to stderr with an ``error:``
prefix and exit nonzero.  Flag values override --config file entries, which
override built-in defaults.
"""

from __future__ import annotations

import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import metrics, synth
from .dataset import (
    DataError,
    FeatureMatrix,
    build_task_targets,
    load_features,
    load_raters,
    save_features,
)
from .mtl import inconsistency_scores, save_structure_matrix, save_weight_matrix
from .pipeline import MtlRunConfig, PropSvmRunConfig, train_mtl, train_propsvm


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_config_file(path):
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return data


def _resolve(flag_value, file_cfg: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in file_cfg:
        return file_cfg[key]
    return default


def _write_report(report: dict, out_dir: Path) -> Path:
    report = dict(report)
    report["created_at"] = datetime.now(timezone.utc).isoformat()
    path = out_dir / "report.json"
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_labels_csv(path, ids, values, value_format="{:d}"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"])
        for sid, v in zip(ids, values):
            w.writerow([sid, value_format.format(v)])


def _read_value_csv(path, column="value"):
    """id,value CSV -> (ids, values); accepts a header row or none."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: no rows")
    if rows and not _is_number(rows[0][-1]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    ids, values = [], []
    for i, rec in enumerate(rows):
        if len(rec) < 2:
            raise DataError(f"{path}: row {i} needs id and {column}")
        ids.append(rec[0])
        try:
            values.append(float(rec[-1]))
        except ValueError:
            raise DataError(f"{path}: cannot parse row {i}: {rec[-1]!r}") from None
    return ids, np.array(values)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _align_to_features(fm: FeatureMatrix, ids, values, what: str) -> np.ndarray:
    pos = {sid: i for i, sid in enumerate(ids)}
    missing = [sid for sid in fm.sample_ids if sid not in pos]
    if missing:
        raise DataError(
            f"{what} is missing ids present in features: " + ", ".join(missing[:10])
        )
    return np.array([values[pos[sid]] for sid in fm.sample_ids])


def _parse_scales(scale_args):
    scales = {}
    for arg in scale_args:
        try:
            task, rng = arg.split("=", 1)
            lo, hi = rng.split(":", 1)
            scales[task] = (int(lo), int(hi))
        except ValueError:
            raise DataError(
                f"bad --scale {arg!r}; expected task=min:max"
            ) from None
    return scales


@click.group()
def main():
    """Multi-task sparse regression and proportion-SVM pipelines."""


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.command("synth")
@click.option("--kind", type=click.Choice(["mtl", "llp"]), required=True)
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--d", type=int, default=20, show_default=True)
@click.option("--tasks", type=int, default=4, show_default=True)
@click.option("--support-frac", type=float, default=0.1, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True)
@click.option("--jitter", type=float, default=0.1, show_default=True)
@click.option(
    "--structure",
    type=click.Choice(["shared", "independent", "lowrank"]),
    default="shared",
    show_default=True,
)
@click.option("--rank", type=int, default=1, show_default=True)
@click.option("--with-raters", is_flag=True, help="also emit raters.csv (mtl kind)")
@click.option("--separation", type=float, default=4.0, show_default=True)
@click.option("--flip", type=float, default=0.0, show_default=True)
@click.option(
    "--flip-mode",
    type=click.Choice(["symmetric", "to_negative", "biased"]),
    default="biased",
    show_default=True,
)
@click.option("--flip-bias", type=float, default=0.7, show_default=True)
@click.option("--pos-fraction", type=float, default=0.5, show_default=True)
@click.option("--outlier-frac", type=float, default=0.0, show_default=True)
@click.option("--outlier-shift", type=float, default=6.0, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_synth(
    kind, n, d, tasks, support_frac, noise, jitter, structure, rank, with_raters,
    separation, flip, flip_mode, flip_bias, pos_fraction, outlier_frac,
    outlier_shift, seed, out,
):
    """Write synthetic desk-scale datasets for either pipeline."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        if kind == "mtl":
            data = synth.make_mtl_data(
                n=n, d=d, n_tasks=tasks, support_frac=support_frac, noise=noise,
                task_jitter=jitter, structure=structure, rank=rank, seed=seed,
            )
            ids = [f"s{i:05d}" for i in range(n)]
            save_features(FeatureMatrix(data=data.X, sample_ids=ids), out / "features.csv")
            with open(out / "targets.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["id"] + data.task_names)
                for sid, row in zip(ids, data.Y):
                    w.writerow([sid] + [f"{v:.17g}" for v in row])
            with open(out / "planted_W.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(data.task_names)
                for row in data.W_star:
                    w.writerow([f"{v:.17g}" for v in row])
            if with_raters:
                _write_synth_raters(out / "raters.csv", ids, data, seed)
        else:
            data = synth.make_llp_blobs(
                n=n, d=d, separation=separation, flip_rate=flip,
                flip_mode=flip_mode, flip_bias=flip_bias,
                pos_fraction=pos_fraction, outlier_frac=outlier_frac,
                outlier_shift=outlier_shift, seed=seed,
            )
            ids = [f"s{i:05d}" for i in range(n)]
            save_features(FeatureMatrix(data=data.X, sample_ids=ids), out / "features.csv")
            _write_labels_csv(out / "truth.csv", ids, data.truth)
            if data.init_labels is not None:
                _write_labels_csv(out / "init.csv", ids, data.init_labels)
        click.echo(f"wrote {kind} dataset to {out}")
    except (DataError, ValueError, OSError) as exc:
        _fail(str(exc))


def _write_synth_raters(path, ids, data, seed):
    # Rescale each task's targets onto the 1..5 ordinal scale, then simulate
    # multi-rater scores around them.
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n_raters = 4
        w.writerow(["id", "task"] + [f"score_{r}" for r in range(1, n_raters + 1)])
        for ti, task in enumerate(data.task_names):
            y = data.Y[:, ti]
            span = y.max() - y.min()
            scaled = 1 + 4 * (y - y.min()) / (span if span > 0 else 1.0)
            scores = synth.make_rater_scores(
                scaled, n_raters=n_raters, seed=seed + 17 * ti, min_present=3
            )
            for sid, row in zip(ids, scores):
                w.writerow(
                    [sid, task]
                    + ["" if np.isnan(v) else f"{v:.17g}" for v in row]
                )


# ---------------------------------------------------------------------------
# train-mtl
# ---------------------------------------------------------------------------


@main.command("train-mtl")
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--raters", "raters_path", type=click.Path(exists=True), default=None)
@click.option("--targets", "targets_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--rho1", type=float, default=None, help="graph penalty weight [1]")
@click.option("--rho2", type=float, default=None, help="l1 weight [10]")
@click.option("--rho-trace", type=float, default=None, help="nuclear-norm weight [1]")
@click.option("--corr-threshold", type=float, default=None, help="edge threshold [0.5]")
@click.option("--folds", type=int, default=None, help="CV folds [10]")
@click.option("--seed", type=int, default=None, help="RNG seed [42]")
@click.option("--eval-task", type=str, default=None)
@click.option("--baselines", type=str, default=None, help="comma list of lasso,ridge,trace")
@click.option("--scale", "scale_args", multiple=True, help="task=min:max rater scale")
@click.option("--min-raters", type=int, default=None, help="inclusion threshold [3]")
@click.option("--adasyn", is_flag=True, default=None, help="rebalance training folds")
@click.option("--no-header", is_flag=True, help="features.csv has no header row")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_train_mtl(
    features_path, raters_path, targets_path, config_path, rho1, rho2, rho_trace,
    corr_threshold, folds, seed, eval_task, baselines, scale_args, min_raters,
    adasyn, no_header, out,
):
    """Cross-validated graph-regularized sparse MTL with baselines."""
    try:
        file_cfg = _load_config_file(config_path)
        fm = load_features(features_path, has_header=not no_header)
        base_names = _resolve(baselines, file_cfg, "baselines", "lasso,ridge,trace")
        cfg = MtlRunConfig(
            rho1=_resolve(rho1, file_cfg, "rho1", 1.0),
            rho2=_resolve(rho2, file_cfg, "rho2", 10.0),
            rho_trace=_resolve(rho_trace, file_cfg, "rho_trace", 1.0),
            corr_threshold=_resolve(corr_threshold, file_cfg, "corr_threshold", 0.5),
            folds=_resolve(folds, file_cfg, "folds", 10),
            seed=_resolve(seed, file_cfg, "seed", 42),
            eval_task=_resolve(eval_task, file_cfg, "eval_task", None),
            baselines=tuple(b for b in base_names.split(",") if b),
            adasyn=bool(_resolve(adasyn, file_cfg, "adasyn", False)),
            max_iters=_resolve(None, file_cfg, "max_iters", 1000),
            tol=_resolve(None, file_cfg, "tol", 1e-6),
        )
        psi_by_task = None
        if raters_path is not None:
            scales = _parse_scales(scale_args)
            raters = load_raters(raters_path, scales=scales)
            exclude = file_cfg.get("exclude_at_pivot_tasks", ["malignancy"])
            targets = build_task_targets(
                raters, fm.sample_ids,
                exclude_at_pivot_tasks=[t for t in exclude if t in raters],
                min_raters=_resolve(min_raters, file_cfg, "min_raters", 3),
                pivot_tie="negative",
            )
            psi_by_task = {
                name: inconsistency_scores(r).psi for name, r in raters.items()
            }
        elif targets_path is not None:
            targets = _load_targets_csv(targets_path, fm)
        else:
            raise DataError("provide --raters or --targets")

        report = train_mtl(fm, targets, psi_by_task=psi_by_task, config=cfg)
        out.mkdir(parents=True, exist_ok=True)
        final_model = report.pop("_final_model")
        final_structure = report.pop("_final_structure")
        save_weight_matrix(
            final_model, out / "model.csv", out / "model.json",
            hyperparams={
                "rho1": cfg.rho1,
                "rho2": cfg.rho2,
                "target_offsets": report["target_offsets"],
            },
        )
        save_structure_matrix(
            final_structure, out / "structure.csv", out / "structure.json",
            hyperparams={"rho2": cfg.rho2, "corr_threshold": cfg.corr_threshold},
        )
        path = _write_report(report, out)
        click.echo(f"wrote {path}")
    except (DataError, ValueError, RuntimeError, OSError) as exc:
        _fail(str(exc))


def _load_targets_csv(path, fm: FeatureMatrix):
    from .dataset import TaskTargets

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one row")
    header = rows[0]
    task_names = header[1:]
    ids = [r[0] for r in rows[1:]]
    vals = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    aligned = _align_to_features(fm, ids, vals, "targets file")
    # Continuous targets: all samples included; stratification labels come
    # from a median split per task.
    n, M = aligned.shape
    labels = np.empty((n, M), dtype=int)
    for i in range(M):
        med = float(np.median(aligned[:, i]))
        labels[:, i] = np.where(aligned[:, i] > med, 1, -1)
    return TaskTargets(
        task_names=task_names,
        targets=aligned,
        binary_labels=labels,
        mask=np.ones((n, M), dtype=int),
    )


# ---------------------------------------------------------------------------
# train-propsvm
# ---------------------------------------------------------------------------


@main.command("train-propsvm")
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), default=None,
              help="evaluation-only labels; training never sees them")
@click.option("--init-labels", "init_path", type=click.Path(exists=True), default=None,
              help="external initial grouping replacing the k-means step")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--cost", type=float, default=None, help="SVM cost K [1.0]")
@click.option("--epsilon", type=float, default=None, help="proportion slack [0.1]")
@click.option("--folds", type=int, default=None, help="CV folds [10]")
@click.option("--seed", type=int, default=None, help="RNG seed [42]")
@click.option("--max-outer", type=int, default=None, help="outer iterations [50]")
@click.option("--no-header", is_flag=True, help="features.csv has no header row")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_train_propsvm(
    features_path, truth_path, init_path, config_path, cost, epsilon, folds,
    seed, max_outer, no_header, out,
):
    """Cluster, derive label proportions, train the proportion-SVM."""
    try:
        file_cfg = _load_config_file(config_path)
        fm = load_features(features_path, has_header=not no_header)
        cfg = PropSvmRunConfig(
            cost=_resolve(cost, file_cfg, "cost", 1.0),
            epsilon=_resolve(epsilon, file_cfg, "epsilon", 0.1),
            folds=_resolve(folds, file_cfg, "folds", 10),
            seed=_resolve(seed, file_cfg, "seed", 42),
            max_outer_iters=_resolve(max_outer, file_cfg, "max_outer_iters", 50),
        )
        truth = None
        if truth_path is not None:
            ids, values = _read_value_csv(truth_path, "label")
            truth = _align_to_features(fm, ids, values, "truth file").astype(int)
        init_labels = None
        if init_path is not None:
            ids, values = _read_value_csv(init_path, "label")
            init_labels = _align_to_features(fm, ids, values, "init file").astype(int)

        report = train_propsvm(fm, truth=truth, config=cfg, init_labels=init_labels)
        out.mkdir(parents=True, exist_ok=True)
        model = report.pop("_final_model")
        with open(out / "model.json", "w") as fh:
            json.dump(
                {
                    "weights": [float(v) for v in model.weights],
                    "bias": model.bias,
                    "cost": model.cost,
                    "epsilon": cfg.epsilon,
                    "bag_summary": report["bag_summary"],
                },
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
        path = _write_report(report, out)
        click.echo(f"wrote {path}")
    except (DataError, ValueError, RuntimeError, OSError) as exc:
        _fail(str(exc))


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


@main.command("evaluate")
@click.option("--predictions", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["regression", "binary"]), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def cmd_evaluate(pred_path, truth_path, mode, out):
    """Score a predictions CSV against a truth CSV."""
    try:
        pred_ids, pred_vals = _read_value_csv(pred_path, "prediction")
        truth_ids, truth_vals = _read_value_csv(truth_path, "truth")
        tpos = {sid: i for i, sid in enumerate(truth_ids)}
        missing = [sid for sid in pred_ids if sid not in tpos]
        if missing:
            raise DataError(
                "truth file is missing predicted ids: " + ", ".join(missing[:10])
            )
        truth_aligned = np.array([truth_vals[tpos[sid]] for sid in pred_ids])
        if mode == "regression":
            rep = metrics.regression_report(pred_vals, truth_aligned)
        else:
            rep = metrics.binary_report(
                pred_vals.astype(int), truth_aligned.astype(int)
            )
        out.mkdir(parents=True, exist_ok=True)
        report = {
            "command": "evaluate",
            "config": {"mode": mode},
            "result": rep.to_dict(),
        }
        path = _write_report(report, out)
        click.echo(f"wrote {path}")
    except (DataError, ValueError, OSError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
