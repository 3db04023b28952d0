"""Supervised training and split evaluation for the regression CNN."""

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cnn
from .audio_io import read_wav
from .errors import DivergedLoss
from .frontend import FrontendConfig, make_image_windows, make_target
from .metrics import evaluate_contour
from .synth import read_contour_csv

log = logging.getLogger(__name__)


def n_workers() -> int:
    """Worker count from SPECTROPITCH_THREADS (0 or unset means one per CPU)."""
    try:
        n = int(os.environ.get("SPECTROPITCH_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    workers = min(n_workers(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_decay: float = 1.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    n_filters: int = 3

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class SGD:
    def __init__(self, lr, momentum=0.0):
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, model, grads):
        for name, p in model.params().items():
            v = self.momentum * self.velocity.get(name, 0.0) - self.lr * grads[name]
            self.velocity[name] = v
            p[...] = p + v


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, model, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for name, p in model.params().items():
            g = grads[name]
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p[...] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(cfg.lr, cfg.momentum)
    return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


# -- data -----------------------------------------------------------------

@dataclass
class EntryFeatures:
    """All (image, target) pairs cut from one manifest entry, in time order."""

    entry: dict
    images: list
    targets: np.ndarray = field(repr=False)

    @property
    def pixels(self):
        return np.stack([im.pixels for im in self.images])


def featurize_entry(entry: dict, cfg: FrontendConfig = FrontendConfig()) -> EntryFeatures:
    clip = read_wav(entry["clip_path"])
    contour = read_contour_csv(entry["contour_path"])
    images = make_image_windows(clip, cfg)
    targets = np.stack([make_target(contour, im.start_time_s, cfg) for im in images])
    return EntryFeatures(entry, images, targets)


def featurize_manifest(manifest, cfg: FrontendConfig = FrontendConfig(), split=None):
    """Featurize every entry (optionally one split), preserving manifest order."""
    entries = [e for e in manifest["entries"] if split is None or e["split"] == split]
    return _map(lambda e: featurize_entry(e, cfg), entries)


def stack_pairs(groups):
    """Concatenate grouped features into ``(X, Y)`` arrays."""
    if not groups:
        return np.zeros((0, 27, 64)), np.zeros((0, cnn.N_OUTPUTS))
    x = np.concatenate([g.pixels for g in groups])
    y = np.concatenate([g.targets for g in groups])
    return x, y


# -- training -------------------------------------------------------------

@dataclass
class LossHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self):
        return len(self.train_mse)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse"])
            for i, (tr, va) in enumerate(zip(self.train_mse, self.val_mse), start=1):
                w.writerow([i, repr(tr), repr(va)])


def dataset_mse(model, x, y, batch_size=256) -> float:
    """Mean squared error over a full dataset, no parameter update."""
    if len(x) == 0:
        return float("nan")
    total = 0.0
    for i in range(0, len(x), batch_size):
        out = cnn.forward(model, x[i:i + batch_size])
        total += float(np.sum((out - y[i:i + batch_size]) ** 2))
    return total / y.size


def _as_arrays(data):
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        return np.asarray(data[0], np.float64), np.asarray(data[1], np.float64)
    data = list(data)
    if data and isinstance(data[0], EntryFeatures):
        return stack_pairs(data)
    x = np.stack([getattr(im, "pixels", im) for im, _ in data]).astype(np.float64)
    y = np.stack([np.asarray(t, np.float64) for _, t in data])
    return x, y


def train(train_data, val_data, cfg: TrainConfig = TrainConfig(), out_dir=None, model=None):
    """Minibatch training with per-epoch validation.

    ``train_data``/``val_data`` may be ``(X, Y)`` arrays, lists of
    ``(image, target)`` pairs, or lists of :class:`EntryFeatures`.

    The train MSE for an epoch is the mean per-sample loss seen during that
    epoch's updates; validation MSE is a separate pass after the epoch. The
    returned model is the checkpoint with the lowest validation MSE (the
    final one when there is no validation data).

    When ``out_dir`` is given, ``loss.csv``, ``model.spf0`` (best
    checkpoint), ``final.spf0`` and ``train_config.json`` are written there.
    """
    x, y = _as_arrays(train_data)
    xv, yv = _as_arrays(val_data) if val_data is not None else (x[:0], y[:0])
    if len(x) == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    model = model.copy() if model is not None else cnn.init_model(cfg.n_filters, cfg.seed)
    opt = make_optimizer(cfg)
    history = LossHistory()
    best, best_val = model.copy(), np.inf

    per_sample = np.zeros(len(x))
    for epoch in range(1, cfg.epochs + 1):
        opt.lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
        order = rng.permutation(len(x)) if cfg.shuffle else np.arange(len(x))
        for i in range(0, len(x), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss, grads, out = cnn.backward(model, x[idx], y[idx], return_outputs=True)
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss {loss} at epoch {epoch}, batch {i // cfg.batch_size}")
            per_sample[idx] = np.mean((out - y[idx]) ** 2, axis=1)
            opt.step(model, grads)
        train_mse = float(np.mean(per_sample))
        val_mse = dataset_mse(model, xv, yv)
        history.train_mse.append(train_mse)
        history.val_mse.append(val_mse)
        score = val_mse if len(xv) else -epoch
        if score < best_val:
            best_val, best = score, model.copy()
            history.best_epoch = epoch
        log.info("epoch %d train_mse %.6f val_mse %.6f", epoch, train_mse, val_mse)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        history.write_csv(out_dir / "loss.csv")
        cnn.save_model(best, out_dir / "model.spf0")
        cnn.save_model(model, out_dir / "final.spf0")
        with open(out_dir / "train_config.json", "w") as fh:
            json.dump(asdict(cfg), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return best, history


# -- evaluation -----------------------------------------------------------

def raw_outputs(model, pixels):
    """Network outputs for a stack of images; ``model`` may be any callable."""
    if isinstance(model, cnn.CnnModel):
        return cnn.forward(model, pixels)
    return np.asarray(model(pixels), dtype=np.float64)


def predict_entry(model, group: EntryFeatures, cfg: FrontendConfig = FrontendConfig()):
    """Concatenated predicted contour (Hz) for all windows of an entry."""
    return cnn.raw_to_hz(raw_outputs(model, group.pixels).reshape(-1), cfg)


def truth_entry(group: EntryFeatures, cfg: FrontendConfig = FrontendConfig()):
    return group.targets.reshape(-1) * cfg.norm_max_hz


def evaluate_split(model, groups, cfg: FrontendConfig = FrontendConfig(), tolerance: float = 0.05):
    """One EvalReport per entry, sorted by entry id.

    The reference contour is the entry's target vectors in Hz, so prediction
    and truth share the 44-per-buffer frame grid.
    """
    reports = []
    for g in groups:
        est = predict_entry(model, g, cfg)
        reports.append(evaluate_contour(g.entry["entry_id"], est, truth_entry(g, cfg),
                                        g.entry.get("snr_db", float("nan")), tolerance))
    return sorted(reports, key=lambda r: r.entry_id)
