"""A small patch-wise MLP noise predictor, trained with hand-written backprop and Adam.

Input per pixel: the ``p x p`` patch of ``x_t`` around it, the same patch of
the corrupted image, and the two time features ``(sigma_t, sigma_bar_t)``.
Output: a ``p x p`` patch of predicted noise.  At inference every pixel gets
the average of all overlapping patch predictions that cover it.  Borders are
handled by edge replication.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .predictor import Condition
from .schedule import BetaSchedule, build_grid, build_schedule
from .streams import stream
from .tensor_io import ImageTensor, as_array, read_tensor, write_tensor

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TinyMLP:
    """Weights are stored as float32; forward passes run in float64."""

    patch: int
    hidden: tuple
    beta: BetaSchedule
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    def __post_init__(self):
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError("patch side must be a positive odd number")

    @property
    def n_in(self) -> int:
        return 2 * self.patch * self.patch + 2

    @property
    def n_out(self) -> int:
        return self.patch * self.patch

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def predict(self, x_t: ImageTensor, n: int, t: float, y: Condition) -> ImageTensor:
        return mlp_predict(self, x_t, n, t, y)


def init_mlp(patch: int = 5, hidden=(64, 64), beta: BetaSchedule | None = None, seed: int = 0) -> TinyMLP:
    """He-initialised weights, zero biases."""
    beta = beta if beta is not None else BetaSchedule()
    rng = stream(seed)
    sizes = [2 * patch * patch + 2, *hidden, patch * patch]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = math.sqrt(2.0 / fan_in) if i < len(sizes) - 2 else math.sqrt(1.0 / fan_in)
        weights.append((scale * rng.standard_normal((fan_in, fan_out))).astype(np.float32))
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return TinyMLP(patch=patch, hidden=tuple(hidden), beta=beta, weights=weights, biases=biases)


def forward(params: list, X: np.ndarray):
    """Forward pass over a batch; returns the output and the activations needed by :func:`backward`."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        h = h @ w + b
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def backward(params: list, acts: list, d_out: np.ndarray) -> list:
    grads = [None] * len(params)
    n_layers = len(params) // 2
    d = d_out
    for i in reversed(range(n_layers)):
        w = params[2 * i]
        inp = acts[i]
        grads[2 * i] = inp.T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        if i > 0:
            d = (d @ w.T) * (acts[i] > 0)
    return grads


def loss_and_grad(params: list, X: np.ndarray, target: np.ndarray):
    """Mean squared error over every output entry of the batch and its gradient."""
    out, acts = forward(params, X)
    resid = out - target
    loss = float(np.mean(resid * resid))
    grads = backward(params, acts, 2.0 * resid / resid.size)
    return loss, grads


def _pad(img: np.ndarray, half: int) -> np.ndarray:
    return np.pad(img, half, mode="edge")


def _time_features(beta: BetaSchedule, t) -> tuple:
    return beta.sigma(t), beta.sigma_bar(t)


def _windows(img: np.ndarray, p: int) -> np.ndarray:
    """All ``p x p`` windows centred on each pixel, flattened: shape ``(H*W, p*p)``."""
    padded = _pad(img, p // 2)
    win = np.lib.stride_tricks.sliding_window_view(padded, (p, p))
    return win.reshape(-1, p * p)


def mlp_predict(net: TinyMLP, x_t: ImageTensor, n: int, t: float, y: Condition) -> ImageTensor:
    if x_t.channels != 1 or y.xN.shape != x_t.shape:
        raise ValueError(f"expected matching single-channel images, got {x_t.shape} and {y.xN.shape}")
    p, half = net.patch, net.patch // 2
    H, W = x_t.height, x_t.width
    xt_win = _windows(as_array(x_t.plane), p)
    xn_win = _windows(as_array(y.xN.plane), p)
    sig, sbar = _time_features(net.beta, t)
    feats = np.empty((H * W, net.n_in))
    feats[:, : p * p] = xt_win
    feats[:, p * p : 2 * p * p] = xn_win
    feats[:, -2] = sig
    feats[:, -1] = sbar
    params = [np.asarray(q, dtype=np.float64) for q in net.params()]
    out, _ = forward(params, feats)
    out = out.reshape(H, W, p, p)
    acc = np.zeros((H + 2 * half, W + 2 * half))
    cnt = np.zeros_like(acc)
    for di in range(p):
        for dj in range(p):
            acc[di : di + H, dj : dj + W] += out[:, :, di, dj]
            cnt[di : di + H, dj : dj + W] += 1.0
    pred = acc[half : half + H, half : half + W] / cnt[half : half + H, half : half + W]
    return x_t.with_data(pred)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 64
    iters: int = 3000
    seed: int = 0
    patch: int = 5
    hidden: tuple = (64, 64)
    train_N: int = 1000
    train_t_min: float = 1e-6
    log_every: int = 100
    lr_decay: bool = True


def _training_schedule(beta: BetaSchedule, cfg: TrainConfig):
    return build_schedule(beta, build_grid(cfg.train_N, "quadratic", cfg.train_t_min))


def sample_batch(pairs, s, p: int, batch: int, rng: np.random.Generator):
    """Draw a training batch of ``(features, targets)``.

    Each row picks a pair, an interior step ``n`` of the training grid and a
    patch centre; ``x_t`` is drawn from the bridge marginal on that patch and
    the target is ``(x_t - x0) / sigma_t``.  ``pairs`` is the stacked output
    of :func:`_padded_pairs` (two arrays of shape ``(count, H, W)``).
    """
    clean, corrupted = pairs
    count, H, W = clean.shape
    idx = rng.integers(0, count, size=batch)
    ns = rng.integers(1, s.N, size=batch)
    rows = rng.integers(0, H - p + 1, size=batch)
    cols = rng.integers(0, W - p + 1, size=batch)
    noise = rng.standard_normal((batch, p * p))
    di, dj = np.divmod(np.arange(p * p), p)
    r = rows[:, None] + di
    c = cols[:, None] + dj
    p0 = clean[idx[:, None], r, c]
    pN = corrupted[idx[:, None], r, c]
    sig2, sbar2 = s.sigma2[ns], s.sbar2[ns]
    tot = sig2 + sbar2
    w0, w1, var = sbar2 / tot, sig2 / tot, sig2 * sbar2 / tot
    sig = np.sqrt(sig2)
    xt = w0[:, None] * p0 + w1[:, None] * pN + np.sqrt(var)[:, None] * noise
    feats = np.empty((batch, 2 * p * p + 2))
    feats[:, : p * p] = xt
    feats[:, p * p : 2 * p * p] = pN
    feats[:, -2] = sig
    feats[:, -1] = np.sqrt(sbar2)
    return feats, (xt - p0) / sig[:, None]


def _padded_pairs(dataset, p: int):
    clean, corrupted = [], []
    for x0, xN in dataset:
        if x0.shape != xN.shape:
            raise ValueError(f"pair shape mismatch {x0.shape} vs {xN.shape}")
        clean.append(_pad(as_array(x0.plane), p // 2))
        corrupted.append(_pad(as_array(xN.plane), p // 2))
    if len({c.shape for c in clean}) > 1:
        raise ValueError("training images must all have the same size")
    return np.stack(clean), np.stack(corrupted)


def train_tiny_mlp(dataset, beta: BetaSchedule, cfg: TrainConfig = TrainConfig(), net: TinyMLP | None = None):
    """Fit the noise predictor on ``(x0, xN)`` pairs; returns ``(net, loss_log)``.

    ``loss_log`` holds ``(iteration, mean loss over the preceding log window)``.
    """
    if len(dataset) == 0:
        raise ValueError("training needs a non-empty dataset")
    s = _training_schedule(beta, cfg)
    net = net if net is not None else init_mlp(cfg.patch, cfg.hidden, beta, cfg.seed)
    p = net.patch
    pairs = _padded_pairs(dataset, p)
    rng = stream(cfg.seed, 1)
    params = [np.asarray(q, dtype=np.float64).copy() for q in net.params()]
    m1 = [np.zeros_like(q) for q in params]
    m2 = [np.zeros_like(q) for q in params]
    b1, b2, adam_eps = 0.9, 0.999, 1e-8
    loss_log, window = [], []
    for it in range(1, cfg.iters + 1):
        X, T = sample_batch(pairs, s, p, cfg.batch, rng)
        loss, grads = loss_and_grad(params, X, T)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"loss became {loss} at iteration {it}")
        window.append(loss)
        lr = cfg.lr * (0.5 * (1 + math.cos(math.pi * it / cfg.iters)) if cfg.lr_decay else 1.0)
        for q, g, a, v in zip(params, grads, m1, m2):
            a *= b1
            a += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            a_hat = a / (1 - b1**it)
            v_hat = v / (1 - b2**it)
            q -= lr * a_hat / (np.sqrt(v_hat) + adam_eps)
        if it % cfg.log_every == 0 or it == cfg.iters:
            mean_loss = float(np.mean(window))
            loss_log.append((it, mean_loss))
            log.info("iter %d loss %.5f", it, mean_loss)
            window = []
    trained = TinyMLP(
        patch=p,
        hidden=net.hidden,
        beta=net.beta,
        weights=[q.astype(np.float32) for q in params[0::2]],
        biases=[q.astype(np.float32) for q in params[1::2]],
    )
    return trained, loss_log


def save_mlp(net: TinyMLP, directory) -> None:
    """One tensor file per weight/bias plus ``manifest.txt`` listing layer order and config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        f"patch={net.patch}",
        f"hidden={','.join(str(h) for h in net.hidden)}",
        f"beta_kind={net.beta.kind}",
        f"beta_min={net.beta.beta_min!r}",
        f"beta_max={net.beta.beta_max!r}",
    ]
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        write_tensor(ImageTensor(w), directory / f"layer{i}_w.bin")
        write_tensor(ImageTensor(b[None, :]), directory / f"layer{i}_b.bin")
        lines.append(f"layer={i} layer{i}_w.bin layer{i}_b.bin")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_mlp(directory) -> TinyMLP:
    directory = Path(directory)
    conf, layers = {}, []
    for line in (directory / "manifest.txt").read_text().splitlines():
        key, _, value = line.partition("=")
        if key == "layer":
            _, wname, bname = value.split()
            layers.append((wname, bname))
        else:
            conf[key] = value
    hidden = tuple(int(h) for h in conf["hidden"].split(",") if h)
    beta = BetaSchedule(conf["beta_kind"], float(conf["beta_min"]), float(conf["beta_max"]))
    weights = [read_tensor(directory / w).plane.copy() for w, _ in layers]
    biases = [read_tensor(directory / b).plane[0].copy() for _, b in layers]
    return TinyMLP(patch=int(conf["patch"]), hidden=hidden, beta=beta, weights=weights, biases=biases)
