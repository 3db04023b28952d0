"""F0 contour estimation from spectrogram images with a small regression CNN.

The package covers the whole experiment: synthetic voiced corpora, the
spectrogram front end, the network and its trainer, a YIN comparator,
contour metrics, and a command-line driver.
"""

from .audio_io import AudioClip, read_wav, write_wav
from .baseline import YinConfig, yin_f0
from .cnn import CnnModel, forward, init_model, load_model, predict_f0, save_model
from .errors import SpectroPitchError
from .frontend import FrontendConfig, SpectrogramImage, make_image_windows
from .metrics import accuracy_rate, aggregate, evaluate_contour, pearson
from .synth import DatasetConfig, F0Contour, SynthSpec, Trajectory, build_dataset, synth_harmonic
from .trainer import TrainConfig, train

__version__ = "0.1.0"
