"""Polyphonic audio event detection with multi-class multi-task networks.

Submodules cover the numeric core (tensor, ops, gradcheck), log-mel feature
extraction (features), the power-set label codec (labelspace), the attention
based multi-task network and CRNN baseline (model, checkpoint), training
(training), frame-based scoring (evaluation), the synthetic corpus generator
(datasets), run configuration (config), and the command line front end (cli).
The most common entry points are re-exported here; figure rendering stays in
polyaed.figures so importing the library never pulls in matplotlib.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .datasets import CorpusSpec, generate_corpus, prepare_corpus
from .evaluation import evaluate_model, f1_by_degree, frame_prf
from .features import FeatureConfig, log_mel, segment_stream, standardize
from .gradcheck import finite_diff_check
from .labelspace import (
    DEFAULT_CATEGORIES,
    CategorySet,
    TaskDecomposition,
    decode_predictions,
    encode_targets,
    equal_split,
)
from .model import (
    Model,
    ModelConfig,
    build_model,
    forward_baseline,
    forward_multitask,
    predict_events,
)
from .tensor import Tape, Tensor
from .training import TrainConfig, adam_step, multilabel_loss, multitask_loss, train_run

__version__ = "0.1.0"

__all__ = [
    "CategorySet",
    "CorpusSpec",
    "DEFAULT_CATEGORIES",
    "FeatureConfig",
    "Model",
    "ModelConfig",
    "RunConfig",
    "Tape",
    "TaskDecomposition",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "build_model",
    "decode_predictions",
    "encode_targets",
    "equal_split",
    "evaluate_model",
    "f1_by_degree",
    "finite_diff_check",
    "forward_baseline",
    "forward_multitask",
    "frame_prf",
    "generate_corpus",
    "load_checkpoint",
    "load_run_config",
    "log_mel",
    "multilabel_loss",
    "multitask_loss",
    "predict_events",
    "prepare_corpus",
    "save_checkpoint",
    "segment_stream",
    "standardize",
    "train_run",
    "__version__",
]
