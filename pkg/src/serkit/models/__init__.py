"""The three classifier families: RBF-SVM, BiLSTM and residual CNN."""

from .checkpoint import (
    MODEL_KINDS,
    ImportReport,
    build_model,
    import_pretrained,
    load_model,
    model_inputs,
    model_kind,
    save_model,
    save_state,
)
from .networks import build_lstm_net, build_resnet, lstm_param_count, stage_block_counts
from .neural import LSTMClassifier, ResNetClassifier
from .svm import RBFSVMClassifier, rbf_kernel, rbf_kernel_matrix, smo_binary

__all__ = [
    "MODEL_KINDS", "ImportReport", "LSTMClassifier", "RBFSVMClassifier", "ResNetClassifier",
    "build_lstm_net", "build_model", "build_resnet", "import_pretrained", "load_model",
    "lstm_param_count", "model_inputs", "model_kind", "rbf_kernel", "rbf_kernel_matrix", "save_model", "save_state",
    "smo_binary", "stage_block_counts",
]
