"""Regression CNN mapping a 27 x 64 spectrogram image to 44 F0 values.

Layer chain at the defaults::

    27x64 --conv 16x3 (valid), ReLU--> 12x62xC --maxpool 2x2--> 6x31xC
          --flatten (row, col, channel)--> 186*C --dense ReLU--> 300
          --dense ReLU--> 200 --dense--> 44

Parameters are stored as float32; every forward and backward computation is
carried out in float64. Dense weights have shape ``(n_out, n_in)``.
"""

import struct
from dataclasses import dataclass, fields

import numpy as np

from .errors import BadShape, MalformedModelFile
from .frontend import IMAGE_COLS, IMAGE_ROWS, FrontendConfig

KERNEL_SHAPE = (16, 3)
POOL = 2
HIDDEN = (300, 200)
N_OUTPUTS = 44
VOICING_FLOOR_HZ = 50.0

MODEL_MAGIC = b"SPF0"
MODEL_VERSION = 1


@dataclass
class CnnModel:
    conv_w: np.ndarray  # (C, kh, kw)
    conv_b: np.ndarray  # (C,)
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    @property
    def n_filters(self) -> int:
        return self.conv_w.shape[0]

    @property
    def flatten_dim(self) -> int:
        return self.fc1_w.shape[1]

    def params(self) -> dict:
        """Parameter arrays keyed by name, in serialization order."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self, dtype=None):
        return CnnModel(**{k: np.array(v, dtype=dtype or v.dtype) for k, v in self.params().items()})


PARAM_NAMES = tuple(f.name for f in fields(CnnModel))


def pooled_shape(n_filters, in_shape=(IMAGE_ROWS, IMAGE_COLS), kernel=KERNEL_SHAPE):
    conv_h = in_shape[0] - kernel[0] + 1
    conv_w = in_shape[1] - kernel[1] + 1
    return conv_h // POOL, conv_w // POOL, n_filters


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def init_model(n_filters: int = 3, seed: int = 0) -> CnnModel:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    rng = np.random.default_rng(seed)
    kh, kw = KERNEL_SHAPE
    ph, pw, c = pooled_shape(n_filters)
    flat = ph * pw * c
    h1, h2 = HIDDEN
    # conv fan-out counts the receptive field per output channel
    return CnnModel(
        conv_w=_glorot(rng, (n_filters, kh, kw), kh * kw, n_filters * kh * kw),
        conv_b=np.zeros(n_filters, np.float32),
        fc1_w=_glorot(rng, (h1, flat), flat, h1),
        fc1_b=np.zeros(h1, np.float32),
        fc2_w=_glorot(rng, (h2, h1), h1, h2),
        fc2_b=np.zeros(h2, np.float32),
        out_w=_glorot(rng, (N_OUTPUTS, h2), h2, N_OUTPUTS),
        out_b=np.zeros(N_OUTPUTS, np.float32),
    )


def _as_batch(images):
    if hasattr(images, "pixels"):
        images = images.pixels
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise BadShape(f"expected image or batch of images, got shape {x.shape}")
    return x


def _forward(model: CnnModel, x):
    kh, kw = model.conv_w.shape[1:]
    b, h, w = x.shape
    ch, cw = h - kh + 1, w - kw + 1
    if ch < POOL or cw < POOL:
        raise BadShape(f"image {h}x{w} too small for a {kh}x{kw} kernel")
    n_f = model.n_filters
    patches = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    patches = patches.reshape(b * ch * cw, kh * kw)
    kernels = model.conv_w.reshape(n_f, kh * kw).astype(np.float64)
    z = (patches @ kernels.T + model.conv_b).reshape(b, ch, cw, n_f)
    a = np.maximum(z, 0.0)

    ph, pw = ch // POOL, cw // POOL
    windows = a[:, : ph * POOL, : pw * POOL].reshape(b, ph, POOL, pw, POOL, n_f)
    windows = windows.transpose(0, 1, 3, 5, 2, 4).reshape(b, ph, pw, n_f, POOL * POOL)
    arg = windows.argmax(axis=-1)  # first maximum in row-major order
    pooled = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    flat = pooled.reshape(b, -1)
    if flat.shape[1] != model.flatten_dim:
        raise BadShape(f"image yields {flat.shape[1]} features, model expects {model.flatten_dim}")

    z1 = flat @ model.fc1_w.T.astype(np.float64) + model.fc1_b
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.fc2_w.T.astype(np.float64) + model.fc2_b
    a2 = np.maximum(z2, 0.0)
    out = a2 @ model.out_w.T.astype(np.float64) + model.out_b
    cache = dict(patches=patches, z=z, arg=arg, flat=flat, z1=z1, a1=a1, z2=z2, a2=a2,
                 shape=(b, ch, cw, ph, pw, n_f))
    return out, cache


def forward(model: CnnModel, image) -> np.ndarray:
    """Raw network outputs: shape (44,) for one image, (B, 44) for a batch."""
    x = _as_batch(image)
    out, _ = _forward(model, x)
    return out[0] if np.ndim(getattr(image, "pixels", image)) == 2 else out


def loss_mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise BadShape(f"prediction {pred.shape} and target {target.shape} differ")
    return float(np.mean((pred - target) ** 2))


def backward(model: CnnModel, images, targets, return_outputs=False):
    """Loss and exact gradients of the MSE averaged over a batch.

    ``images`` may be a single image (with a single 44-vector target) or a
    batch ``(B, 27, 64)`` with targets ``(B, 44)``; per-sample losses are
    averaged, so a batch of one equals the single-image case.

    Returns
    -------
    loss : float
    grads : dict
        Arrays keyed like :meth:`CnnModel.params`, in float64.
    outputs : ndarray
        Only when ``return_outputs`` is set: the (B, 44) forward outputs.
    """
    x = _as_batch(images)
    y = np.asarray(targets, dtype=np.float64).reshape(x.shape[0], -1)
    out, c = _forward(model, x)
    b, ch, cw, ph, pw, n_f = c["shape"]
    diff = out - y
    loss = float(np.mean(diff ** 2))

    d_out = 2.0 * diff / diff.size
    g = {"out_w": d_out.T @ c["a2"], "out_b": d_out.sum(axis=0)}
    d_a2 = d_out @ model.out_w.astype(np.float64)
    d_z2 = d_a2 * (c["z2"] > 0)
    g["fc2_w"] = d_z2.T @ c["a1"]
    g["fc2_b"] = d_z2.sum(axis=0)
    d_a1 = d_z2 @ model.fc2_w.astype(np.float64)
    d_z1 = d_a1 * (c["z1"] > 0)
    g["fc1_w"] = d_z1.T @ c["flat"]
    g["fc1_b"] = d_z1.sum(axis=0)
    d_flat = d_z1 @ model.fc1_w.astype(np.float64)

    # route pooled gradient to the selected element of each 2x2 window
    d_windows = np.zeros((b, ph, pw, n_f, POOL * POOL))
    np.put_along_axis(d_windows, c["arg"][..., None], d_flat.reshape(b, ph, pw, n_f)[..., None], axis=-1)
    d_a = np.zeros((b, ch, cw, n_f))
    d_a[:, : ph * POOL, : pw * POOL] = (
        d_windows.reshape(b, ph, pw, n_f, POOL, POOL).transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, ph * POOL, pw * POOL, n_f)
    )
    d_z = (d_a * (c["z"] > 0)).reshape(-1, n_f)
    g["conv_w"] = (d_z.T @ c["patches"]).reshape(model.conv_w.shape)
    g["conv_b"] = d_z.sum(axis=0)
    if return_outputs:
        return loss, g, out
    return loss, g


def _loss_and_pattern(model, x, y):
    out, c = _forward(model, x)
    pattern = (c["z"] > 0, c["arg"], c["z1"] > 0, c["z2"] > 0)
    return float(np.mean((out - y) ** 2)), pattern


def _same_pattern(p, q):
    return all(np.array_equal(a, b) for a, b in zip(p, q))


def grad_check_report(model: CnnModel, image, target, epsilon: float = 1e-3, n_params: int = 200,
                      seed: int = 0, backward_fn=None, min_epsilon: float = 1e-7) -> dict:
    """Compare analytic gradients with central differences.

    At least ``n_params`` coordinates are drawn, spread evenly over every
    parameter array. The check runs on a float64 copy of ``model`` so the
    perturbation is not rounded away.

    The loss is piecewise quadratic in any single weight, so a central
    difference is exact unless the stencil straddles a ReLU or max-pool
    switch. When the activation pattern at ``w +/- eps`` differs from the
    one at ``w``, the step is divided by 10 (down to ``min_epsilon``) and
    the coordinate is retried; coordinates that never become kink-free are
    counted in ``n_skipped``.

    ``backward_fn`` substitutes the analytic gradient under test (defaults
    to :func:`backward`).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    backward_fn = backward_fn or backward
    work = model.copy(np.float64)
    x = _as_batch(image)
    y = np.asarray(target, dtype=np.float64).reshape(x.shape[0], -1)
    _, analytic = backward_fn(work, x, y)
    _, base = _loss_and_pattern(work, x, y)

    rng = np.random.default_rng(seed)
    per_array = -(-n_params // len(PARAM_NAMES))
    worst, n_checked, n_shrunk, n_skipped = 0.0, 0, 0, 0
    for name in PARAM_NAMES:
        flat = getattr(work, name).reshape(-1)
        idx = rng.choice(flat.size, size=per_array, replace=flat.size < per_array)
        grad = np.asarray(analytic[name]).reshape(-1)
        for i in idx:
            orig = flat[i]
            eps = epsilon
            while True:
                flat[i] = orig + eps
                f_plus, p_plus = _loss_and_pattern(work, x, y)
                flat[i] = orig - eps
                f_minus, p_minus = _loss_and_pattern(work, x, y)
                flat[i] = orig
                smooth = _same_pattern(p_plus, base) and _same_pattern(p_minus, base)
                if smooth or eps / 10 < min_epsilon:
                    break
                eps /= 10
            if not smooth:
                n_skipped += 1
                continue
            n_shrunk += eps < epsilon
            numeric = (f_plus - f_minus) / (2 * eps)
            a = grad[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
            n_checked += 1
    return {"max_rel_error": worst, "n_checked": n_checked, "n_shrunk": int(n_shrunk), "n_skipped": n_skipped}


def grad_check(model: CnnModel, image, target, epsilon: float = 1e-3, n_params: int = 200,
               seed: int = 0, backward_fn=None) -> float:
    """Maximum relative gradient error; see :func:`grad_check_report`."""
    return grad_check_report(model, image, target, epsilon, n_params, seed, backward_fn)["max_rel_error"]


def predict_f0(model: CnnModel, image, cfg: FrontendConfig = FrontendConfig(), raw=None):
    """Denormalized F0 contour (44 frames) for one image.

    Outputs below 50 Hz are reported unvoiced (0.0); outputs are clamped to
    ``cfg.norm_max_hz``. ``raw`` may supply precomputed network outputs.
    """
    from .synth import F0Contour

    values = forward(model, image) if raw is None else np.asarray(raw, dtype=np.float64)
    return F0Contour(cfg.target_hop_s, raw_to_hz(values, cfg))


def raw_to_hz(values, cfg: FrontendConfig = FrontendConfig()):
    f = np.asarray(values, dtype=np.float64) * cfg.norm_max_hz
    f = np.minimum(f, cfg.norm_max_hz)
    f[f < VOICING_FLOOR_HZ] = 0.0
    return f


# -- serialization --------------------------------------------------------
#
# magic "SPF0", u32 version, then u32 header
#   (C, kh, kw, in_h, in_w, flatten_dim, hidden1, hidden2, n_out)
# then float32 arrays in PARAM_NAMES order, all little-endian.

_HEADER = struct.Struct("<9I")


def _expected_shapes(c, kh, kw, flat, h1, h2, n_out):
    return {
        "conv_w": (c, kh, kw), "conv_b": (c,),
        "fc1_w": (h1, flat), "fc1_b": (h1,),
        "fc2_w": (h2, h1), "fc2_b": (h2,),
        "out_w": (n_out, h2), "out_b": (n_out,),
    }


def model_to_bytes(model: CnnModel) -> bytes:
    c, kh, kw = model.conv_w.shape
    h1, h2 = model.fc1_w.shape[0], model.fc2_w.shape[0]
    header = _HEADER.pack(c, kh, kw, IMAGE_ROWS, IMAGE_COLS, model.flatten_dim, h1, h2, model.out_w.shape[0])
    body = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in model.params().values())
    return MODEL_MAGIC + struct.pack("<I", MODEL_VERSION) + header + body


def model_from_bytes(data: bytes) -> CnnModel:
    if len(data) < 8 + _HEADER.size:
        raise MalformedModelFile("file too short for header")
    if data[:4] != MODEL_MAGIC:
        raise MalformedModelFile(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != MODEL_VERSION:
        raise MalformedModelFile(f"unsupported model version {version}")
    c, kh, kw, in_h, in_w, flat, h1, h2, n_out = _HEADER.unpack_from(data, 8)
    if c < 1 or in_h < kh or in_w < kw:
        raise MalformedModelFile("inconsistent geometry in header")
    ph, pw, _ = pooled_shape(c, (in_h, in_w), (kh, kw))
    if flat != ph * pw * c:
        raise MalformedModelFile(f"flatten_dim {flat} does not match geometry ({ph}x{pw}x{c})")
    shapes = _expected_shapes(c, kh, kw, flat, h1, h2, n_out)
    n_floats = sum(int(np.prod(s)) for s in shapes.values())
    offset = 8 + _HEADER.size
    if len(data) != offset + 4 * n_floats:
        raise MalformedModelFile(f"expected {offset + 4 * n_floats} bytes, found {len(data)}")
    arrays = {}
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(data, dtype="<f4", count=size, offset=offset).astype(np.float32).reshape(shapes[name])
        offset += 4 * size
    return CnnModel(**arrays)


def save_model(model: CnnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
