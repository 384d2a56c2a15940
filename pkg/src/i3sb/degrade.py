"""Synthetic clean/corrupted image pairs for the denoising and 4x super-resolution tasks."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .streams import stream
from .tensor_io import ImageTensor, as_array, read_tensor, write_tensor

DEGRADE_KINDS = ("gaussian_noise", "downsample4x")
DATASET_KINDS = ("texture_field", "checker_blobs")
SMOOTHING_KERNEL = np.array([0.25, 0.5, 0.25])
TEXTURE_PASSES = 4


@dataclass(frozen=True)
class DegradeSpec:
    kind: str = "gaussian_noise"
    noise_sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEGRADE_KINDS:
            raise ValueError(f"unknown degradation {self.kind!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def box_mean4(img: np.ndarray) -> np.ndarray:
    """Average over non-overlapping 4x4 blocks."""
    H, W = img.shape
    if H % 4 or W % 4:
        raise ValueError(f"image size {H}x{W} is not divisible by 4")
    return img.reshape(H // 4, 4, W // 4, 4).mean(axis=(1, 3))


def _lerp_axis(coarse: np.ndarray, n_fine: int, axis: int) -> np.ndarray:
    # fine pixel centre x sits at coarse coordinate (x + 0.5) / 4 - 0.5, clamped at the borders
    n_coarse = coarse.shape[axis]
    u = np.clip((np.arange(n_fine) + 0.5) / 4.0 - 0.5, 0.0, n_coarse - 1)
    lo = np.floor(u).astype(int)
    hi = np.minimum(lo + 1, n_coarse - 1)
    frac = u - lo
    a = np.take(coarse, lo, axis=axis)
    b = np.take(coarse, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = n_fine
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def upsample4_bilinear(coarse: np.ndarray) -> np.ndarray:
    h, w = coarse.shape
    rows = _lerp_axis(coarse, 4 * h, axis=0)
    return _lerp_axis(rows, 4 * w, axis=1)


def apply(spec: DegradeSpec, x0: ImageTensor, index: int = 0) -> ImageTensor:
    """Corrupt ``x0``; the output always lives on the same pixel grid as the input.

    ``index`` selects the noise stream (``stream(spec.seed, index)``) so every
    image of a dataset gets independent, reproducible noise.
    """
    img = as_array(x0.plane)
    if spec.kind == "gaussian_noise":
        if spec.noise_sigma == 0:
            return x0
        noisy = img + spec.noise_sigma * stream(spec.seed, index).standard_normal(img.shape)
        return x0.with_data(noisy)
    return x0.with_data(upsample4_bilinear(box_mean4(img)))


def _smooth(field: np.ndarray, passes: int) -> np.ndarray:
    k = SMOOTHING_KERNEL
    for _ in range(passes):
        for axis in (0, 1):
            field = k[0] * np.roll(field, 1, axis) + k[1] * field + k[2] * np.roll(field, -1, axis)
    return field


def _rescale(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return 2.0 * (img - lo) / (hi - lo) - 1.0


def texture_field(size: int, rng: np.random.Generator) -> np.ndarray:
    """Periodic Gaussian random field: white noise smoothed by ``TEXTURE_PASSES``
    separable passes of the ``[0.25, 0.5, 0.25]`` kernel, min-max rescaled to ``[-1, 1]``."""
    return _rescale(_smooth(rng.standard_normal((size, size)), TEXTURE_PASSES))


def checker_blobs(size: int, rng: np.random.Generator) -> np.ndarray:
    cell = max(size // 8, 1)
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.where(((yy // cell) + (xx // cell)) % 2 == 0, 0.25, -0.25)
    for _ in range(int(rng.integers(2, 5))):
        r0, c0 = rng.integers(0, size, 2)
        h, w = rng.integers(size // 8, size // 2, 2)
        img[r0 : r0 + h, c0 : c0 + w] = rng.uniform(-1, 1)
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0, size, 2)
        rad = rng.uniform(size / 16, size / 5)
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad] = rng.uniform(-1, 1)
    return _rescale(img)


def make_toy_dataset(kind: str, count: int, size: int, seed: int, degrade: DegradeSpec = DegradeSpec()):
    """List of ``(clean, corrupted)`` ImageTensor pairs in the ``[-1, 1]`` working range."""
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if size % 4:
        raise ValueError(f"size must be divisible by 4, got {size}")
    make = texture_field if kind == "texture_field" else checker_blobs
    pairs = []
    for i in range(count):
        clean = ImageTensor(make(size, stream(seed, i)), -1.0, 1.0)
        pairs.append((clean, apply(degrade, clean, index=i)))
    return pairs


def save_dataset(pairs, directory) -> str:
    """Write pairs as tensor files plus ``manifest.tsv``; returns the manifest's SHA-256."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["id\tclean\tcorrupted\tclean_sha256\tcorrupted_sha256"]
    for i, (clean, corrupted) in enumerate(pairs):
        names = (f"{i:05d}_clean.bin", f"{i:05d}_corrupted.bin")
        digests = []
        for name, img in zip(names, (clean, corrupted)):
            write_tensor(img, directory / name)
            digests.append(hashlib.sha256((directory / name).read_bytes()).hexdigest())
        lines.append(f"{i:05d}\t{names[0]}\t{names[1]}\t{digests[0]}\t{digests[1]}")
    text = "\n".join(lines) + "\n"
    (directory / "manifest.tsv").write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_dataset(directory):
    """Inverse of :func:`save_dataset`: ``[(id, clean, corrupted), ...]``."""
    directory = Path(directory)
    rows = (directory / "manifest.tsv").read_text().splitlines()[1:]
    out = []
    for row in rows:
        ident, clean, corrupted, *_ = row.split("\t")
        out.append((ident, read_tensor(directory / clean), read_tensor(directory / corrupted)))
    return out
