"""trigad: triple-channel graph anomaly detection with curvature-based
mixture estimation, exact optimal-transport curvature, and mutual
distillation training."""

__version__ = "0.1.0"

from trigad.graph import (  # noqa: F401
    LABEL_ATTR,
    LABEL_MIXED,
    LABEL_NORMAL,
    LABEL_STRUCT,
    Graph,
    InjectionConfig,
    NormalizedAdj,
    PropagationStack,
    build_adjacency,
    diffuse,
    hop_distances,
    inject_anomalies,
    knn_graph,
    load_graph,
    make_graph,
    mask_attributes,
    mask_edges,
    normalize_adjacency,
    propagate_multiscale,
    save_graph,
    synthetic_communities,
)
from trigad.curvature import (  # noqa: F401
    CurvatureTable,
    DiscreteDistribution,
    base_distribution,
    mixed_curvature_table,
    mixed_distribution,
    ollivier_curvature,
    ot_backend_name,
    ot_oracle,
    wasserstein,
)
from trigad.nn import (  # noqa: F401
    Adam,
    Param,
    frobenius_loss,
    grad_check,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from trigad.config import (  # noqa: F401
    DistillConfig,
    RunConfig,
    TrainSchedule,
    config_hash,
    default_config,
    load_config,
    save_config,
)
from trigad.training import (  # noqa: F401
    PHASE_ORDER,
    TrainResult,
    load_trained,
    orchestrate,
    run_gradcheck_suite,
    sample_triplets,
    score_channels,
    train_phase,
    train_unified,
    triplet_loss,
)
from trigad.evaluate import (  # noqa: F401
    anomaly_report,
    auc_pr,
    auc_roc,
    combine_scores,
    macro_f1,
    rank_nodes,
)
