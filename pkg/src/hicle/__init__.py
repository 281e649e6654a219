"""Hierarchical multi-label contrastive representation learning engine."""

from .data import (
    Dataset,
    SyntheticSpec,
    augment,
    generate_skewed,
    generate_synthetic,
    split_by_instance,
    split_seen_unseen,
)
from .evaluation import (
    ClusteringReport,
    RetrievalReport,
    ViolationReport,
    clustering_report,
    distance_violation_rate,
    kmeans,
    map_at_r,
    nmi,
    topk_retrieval,
)
from .hierarchy import (
    HierarchyTree,
    LabelPath,
    PairingTensor,
    build_tree,
    lca_level,
    pairing_tensor,
)
from .losses import (
    LossConfig,
    LossOutput,
    hicone,
    himulcon,
    himulcone,
    lambda_value,
    loss_violation_rate,
    pair_log_prob,
    simclr,
    supcon,
)
from .model import (
    EncoderModel,
    OptimizerState,
    TrainConfig,
    backward,
    embed,
    forward,
    init_model,
    lr_at_epoch,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
    train_linear_probe,
)
from .sampling import EpochPlan, SamplerConfig, plan_epoch

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
