"""From-scratch deep-learning toolkit for three-class KDD traffic
classification: dataset ingest, feature preprocessing, a tape-based
autodiff engine, four neural architectures, training with best-model
checkpointing, multiclass evaluation, and SVD/PCA dataset diagnostics.
"""

__version__ = "0.1.0"

from .evaluation import EvalReport, accuracy, auc, confusion, evaluate
from .ingest import (CLASS_NAMES, Dataset, RawRecord, class_distribution,
                     filter_classes, load_kdd_dataset, parse_kdd_file)
from .models import (ArchitectureDescriptor, Model, build_cnn, build_cnn_lstm,
                     build_dnn, build_lstm, build_model)
from .preprocess import FeatureMatrix, PreprocessorState, feature_length, fit, transform
from .tensor import Tape, Tensor, backward, gradcheck
from .train import Checkpoint, TrainConfig, TrainLog, split_validation, train

__all__ = [
    "ArchitectureDescriptor", "CLASS_NAMES", "Checkpoint", "Dataset",
    "EvalReport", "FeatureMatrix", "Model", "PreprocessorState", "RawRecord",
    "Tape", "Tensor", "TrainConfig", "TrainLog", "accuracy", "auc",
    "backward", "build_cnn", "build_cnn_lstm", "build_dnn", "build_lstm",
    "build_model", "class_distribution", "confusion", "evaluate",
    "feature_length", "filter_classes", "fit", "gradcheck",
    "load_kdd_dataset", "parse_kdd_file", "split_validation", "train",
    "transform",
]
