"""Embedding-space artwork classification and retrieval toolkit.

Works on frozen-encoder embeddings: ingest them once, then classify with
prompt banks (zero-shot), labeled reference sets (k-NN), or a trained
linear head, and run exact cosine top-K retrieval. Everything is
deterministic and file-backed; see FORMATS.md for the wire formats.
"""

from artemb.errors import ArtembError, FormatError, TrainingDivergedError, ValidationError
from artemb.knn import ReferenceIndex, build_reference, classify_knn
from artemb.metrics import (
    EvalReport,
    accuracy_at_1,
    build_report,
    confusion_matrix,
    macro_metrics,
    render_report,
)
from artemb.probe import (
    AdamState,
    LinearProbe,
    TrainConfig,
    TrainHistory,
    adam_step,
    forward,
    loss_and_grad,
    predict,
    read_probe,
    train_probe,
    write_probe,
)
from artemb.retrieval import RetrievalIndex, RetrievedItem, build_index, retrieve
from artemb.similarity import ScoredHit, cosine, l2_normalize, top_k
from artemb.store import (
    EmbeddingSet,
    LabelSpace,
    RowMeta,
    SplitAssignment,
    apply_split,
    derive_labelspace,
    filter_labels,
    read_labelspaces,
    read_store,
    split_dataset,
    write_labelspaces,
    write_store,
)
from artemb.zeroshot import (
    DEFAULT_TEMPLATES,
    PromptBank,
    build_prompts,
    classify_zero_shot,
    read_prompt_bank,
    write_prompt_bank,
)

__version__ = "0.1.0"

__all__ = [
    "ArtembError",
    "FormatError",
    "ValidationError",
    "TrainingDivergedError",
    "EmbeddingSet",
    "LabelSpace",
    "RowMeta",
    "SplitAssignment",
    "read_store",
    "write_store",
    "read_labelspaces",
    "write_labelspaces",
    "derive_labelspace",
    "filter_labels",
    "split_dataset",
    "apply_split",
    "ScoredHit",
    "l2_normalize",
    "cosine",
    "top_k",
    "DEFAULT_TEMPLATES",
    "PromptBank",
    "build_prompts",
    "classify_zero_shot",
    "read_prompt_bank",
    "write_prompt_bank",
    "ReferenceIndex",
    "build_reference",
    "classify_knn",
    "LinearProbe",
    "TrainConfig",
    "TrainHistory",
    "AdamState",
    "forward",
    "loss_and_grad",
    "adam_step",
    "train_probe",
    "predict",
    "read_probe",
    "write_probe",
    "RetrievalIndex",
    "RetrievedItem",
    "build_index",
    "retrieve",
    "EvalReport",
    "confusion_matrix",
    "macro_metrics",
    "accuracy_at_1",
    "build_report",
    "render_report",
    "__version__",
]
