"""Representation-similarity finetuning toolkit.

Measures how far finetuning drifts from a pretrained representation
(linear CKA) and constrains that drift during training, either directly
through a CKA penalty or through covariance alignment on a learnable
orthogonal transform, with diagnostics for sharpness, parameter
centrality, and interpolation paths.
"""

from .analysis import (
    SharpnessConfig,
    SharpnessResult,
    batch_cov_error,
    interpolation_path,
    param_centrality,
    sharpness,
    sharpness_of,
    strict_betweenness,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_from_dict, config_from_json, load_config
from .data import Dataset, SyntheticTaskPair, TaskParams, make_task_pair
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateFeaturesError,
    DimensionError,
    InsufficientSamplesError,
    NpyFormatError,
    PretrainQualityError,
    RankError,
    RepsimError,
    SymmetryError,
    TrainingDivergedError,
)
from .linalg import frobenius_dist_sq, qr_orthogonalize, random_orthogonal, sym_eig
from .losses import (
    LossConfig,
    cls_loss_and_grad,
    cov_loss_and_grads,
    fit_alignment,
    hcs_loss,
    mu_loss_and_grads,
    repsim_total,
)
from .manifold import (
    CovarianceStats,
    OrthogonalParam,
    cayley,
    cayley_grad,
    cov_stats,
    procrustes_oracle,
    skew_upper,
    stats_backprop,
)
from .model import MlpModel
from .npyio import read_npy, write_npy
from .rng import SeededRng
from .similarity import cka_loss_and_grad, linear_cka
from .trainer import (
    FinetuneResult,
    ModelDims,
    RunMetrics,
    SgdConfig,
    finetune,
    lambda_sweep,
    pretrain,
    run_method,
)

__version__ = "0.1.0"
