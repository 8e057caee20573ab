"""Ranking toolkit built on robust slow-growth losses.

Two tracks share the same loss calculus: a feature-based track with a
linear model and batch training, and a latent track with learned
embeddings, a linearized bound, unbiased sparse stochastic gradients,
and a stratified in-process parallel trainer.
"""

from .losses import (
    TransformKind,
    logistic_loss,
    logistic_loss_grad,
    robust_loss,
    robust_loss_grad,
    transform,
    transform_grad,
)
from .ltr import (
    ContextBlock,
    LinearModel,
    RankingDataset,
    TrainConfig,
    dcg,
    exp2_gain,
    gradient_robirank,
    mean_ndcg,
    ndcg_at_k,
    objective_basic,
    objective_indicator,
    objective_robirank,
    rank_of,
    score,
    train,
)
from .lcr import (
    AuxVars,
    InteractionSet,
    LatentModel,
    SgdConfig,
    SparseGradient,
    baseline_objective,
    bound_gradient_dense,
    bound_objective,
    exact_objective,
    latent_score,
    serial_train,
    sg_estimate,
    sg_term,
    xi_step,
)
from .parallel import (
    ParallelConfig,
    make_partitions,
    parallel_train,
    ssgd_identity_check,
    stratum_objective,
)
from .data import (
    align_test_set,
    make_synthetic_lcr,
    make_synthetic_rank,
    parse_letor,
    parse_triplets,
    write_letor,
)
from .metrics import MetricReport, mean_ndcg_curve, precision_at_k
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DivergenceError, ParseError

__version__ = "0.1.0"
