"""Content/style disentanglement over precomputed joint embeddings.

Two small MLP encoders map a joint image embedding into separate content and
style spaces, trained with pair-based contrastive losses (text-embedding
similarity defines content pairs, style tags define style pairs) plus an
optional style classifier. Evaluation covers distance correlation between
the two spaces, linear probes, and cosine retrieval.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import OptimConfig, RunConfig
from .data import (
    Dataset,
    EmbeddingRecord,
    PromptEntry,
    PromptManifest,
    gen_prompt_manifest,
    gen_synthetic_dataset,
    read_dataset,
    split_by_group,
    split_dataset,
    write_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    FormatError,
    GoyaError,
    NumericsError,
    ShapeError,
    StateError,
    UsageError,
)
from .losses import (
    LossBreakdown,
    LossConfig,
    content_loss,
    cosine_similarity,
    evaluate_total_loss,
    ntxent_loss,
    select_content_pairs,
    style_ce_loss,
    style_loss,
    style_positive_mask,
    total_loss_and_grad,
    triplet_loss,
)
from .metrics import (
    ConfusionMatrix,
    LinearProbe,
    ProbeConfig,
    distance_correlation,
    distance_correlation_subsampled,
    double_center,
    evaluate_probe,
    pairwise_euclidean,
    precision_at_k,
    rank_neighbors,
    retrieve_topk,
    train_probe,
)
from .model import GoyaModel, ModelConfig
from .train import TrainingResult, run_training

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "OptimConfig", "RunConfig",
    "Dataset", "EmbeddingRecord", "PromptEntry", "PromptManifest",
    "gen_prompt_manifest", "gen_synthetic_dataset", "read_dataset",
    "split_by_group", "split_dataset", "write_dataset",
    "GoyaError", "ShapeError", "StateError", "NumericsError",
    "DegenerateInputError", "FormatError", "DataError", "ConfigError", "UsageError",
    "LossBreakdown", "LossConfig", "content_loss", "cosine_similarity",
    "evaluate_total_loss", "ntxent_loss", "select_content_pairs", "style_ce_loss",
    "style_loss", "style_positive_mask", "total_loss_and_grad", "triplet_loss",
    "ConfusionMatrix", "LinearProbe", "ProbeConfig", "distance_correlation",
    "distance_correlation_subsampled", "double_center", "evaluate_probe",
    "pairwise_euclidean", "precision_at_k", "rank_neighbors", "retrieve_topk",
    "train_probe",
    "GoyaModel", "ModelConfig",
    "TrainingResult", "run_training",
]
