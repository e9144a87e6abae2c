"""Speech emotion recognition from log-mel spectrograms and MFCCs.

Feature extraction, augmentation, three classifier families (RBF-SVM,
bidirectional LSTM, residual CNN) and their training/evaluation loop, all on
numpy with scikit-learn style estimators.
"""

from .audio_io import AudioClip, decode_wav, resample, write_wav
from .dataset import EmotionLabel, ManifestEntry, SplitSpec, read_manifest, stratified_split
from .dsp import MFCC, LogMelSpectrogram, TimeMeanPool, log_mel_spectrogram, mfcc
from .errors import SerkitError
from .models import LSTMClassifier, RBFSVMClassifier, ResNetClassifier, build_model, load_model, save_model
from .train import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "EmotionLabel", "LSTMClassifier", "LogMelSpectrogram", "MFCC", "ManifestEntry",
    "RBFSVMClassifier", "ResNetClassifier", "SerkitError", "SplitSpec", "TimeMeanPool", "TrainConfig",
    "build_model", "decode_wav", "load_model", "log_mel_spectrogram", "mfcc", "read_manifest",
    "resample", "save_model", "stratified_split", "write_wav",
]
