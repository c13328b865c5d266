"""opal: active semi-supervised annotation with cooperating encoders.

Two small dense networks learn from a sliver of labels. At fixed
intervals each one projects the training pool to 2D, propagates labels
over an optimum-path forest, keeps its most confident picks as
pseudo-labels for the *other* network, and sends its least confident
points to an annotation oracle (simulated or a human over HTTP).
"""

from .data import (
    AugmentPolicy,
    Dataset,
    DatasetError,
    FoldSplit,
    LabelStateError,
    LabelStore,
    Sample,
    SplitPlan,
    augment_batch,
    load_dataset,
    make_blob_dataset,
    make_pairs,
    stratified_split,
    strong_augment,
    write_binary_matrix,
    write_feature_csv,
)
from .losses import (
    LossBreakdown,
    class_weight_tau,
    contrastive_distance,
    contrastive_loss,
    semisup_loss,
    supervised_loss,
)
from .metrics import accuracy, cohens_kappa
from .network import (
    Arch,
    ArchMismatchError,
    NetworkParams,
    classify,
    encode,
    init_params,
    load_network,
    project_contrastive,
    save_network,
)
from .opf import (
    PropagationResult,
    PrototypeSet,
    confidence,
    propagate,
    runner_up_costs,
    write_propagation_csv,
)
from .optim import OptimizerState, cosine_lr, sgd_step
from .selection import (
    ActiveQuery,
    InteractiveOracle,
    LabelConflictError,
    NotPendingError,
    OracleTimeout,
    PseudoLabelSet,
    SimulatedOracle,
    merge_active,
    oracle_label,
    select_confident,
    select_uncertain,
)
from .trainer import (
    ConfigError,
    FoldRun,
    RunConfig,
    RunState,
    benchmark_config,
    crossval_run,
    ensemble_predict,
    interval_due,
    make_benchmark_dataset,
    resume_run,
    train_supervised_baseline,
)
from .tsne import (
    AffinityMatrix,
    DegenerateRowError,
    NonFiniteGradientError,
    Projection2D,
    kl_divergence,
    pairwise_affinities,
    project,
    tsne_embed,
)

__version__ = "0.1.0"
