"""Multi-task sparse regression and proportion-SVM pipelines for tumor risk
stratification on precomputed feature vectors."""

from .dataset import (
    CvPlan,
    DataError,
    FeatureMatrix,
    RaterScores,
    Standardizer,
    TaskTargets,
    adasyn_rebalance,
    aggregate_raters,
    binarize,
    build_task_targets,
    load_features,
    load_raters,
    make_cv_plan,
    save_features,
)
from .metrics import (
    EvalReport,
    aggregate_cv,
    binary_report,
    mean_abs_score_diff,
    regression_accuracy,
    regression_report,
)
from .mtl import (
    InconsistencyVector,
    RegularizationConfig,
    StructureMatrix,
    WeightMatrix,
    estimate_structure,
    fit_graph_sparse_mtl,
    fit_lasso,
    fit_ridge,
    fit_trace_mtl,
    graph_penalty,
    inconsistency_scores,
    predict_scores,
    structure_from_edges,
)
from .propsvm import (
    BagSet,
    ClusterModel,
    SvmModel,
    baseline_cluster_classify,
    fit_linear_svm,
    fit_propsvm,
    kmeans,
    label_proportions,
    orient_clusters,
)
from .proxgrad import (
    OptimizerConfig,
    ProxTerm,
    SmoothObjective,
    SolveReport,
    check_gradient,
    prox_l1,
    prox_nuclear,
    solve_apg,
)

__version__ = "0.1.0"
