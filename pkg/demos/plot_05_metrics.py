"""
SSIM and Haralick texture distance
==================================

Quality metrics on a texture image under increasing noise, plus a few of the
individual Haralick features.
"""

import numpy as np

from i3sb.degrade import texture_field
from i3sb.metrics import FEATURE_NAMES, GlcmConfig, glcm, haralick, haralick_distance, rmse, ssim
from i3sb.streams import stream

clean = texture_field(64, stream(1))
rng = stream(2)

print(f"{'noise':>6s} {'ssim':>7s} {'haralick':>9s} {'rmse':>7s}")
for sigma in (0.0, 0.05, 0.1, 0.2, 0.4):
    noisy = np.clip(clean + sigma * rng.standard_normal(clean.shape), -1, 1)
    print(f"{sigma:6.2f} {ssim(noisy, clean, 2.0):7.3f} {haralick_distance(noisy, clean):9.3f} {rmse(noisy, clean):7.3f}")

# co-occurrence matrices: one per offset, each normalized to sum 1
mats = glcm(clean, GlcmConfig(levels=8))
print("GLCM shape", mats.shape, "sums", mats.sum(axis=(1, 2)))

# features of a constant image and of the texture
for name, img in (("constant", np.full((32, 32), 0.2)), ("texture", clean)):
    f = dict(zip(FEATURE_NAMES, haralick(img)))
    print(name, {k: round(f[k], 4) for k in ("angular_second_moment", "contrast", "entropy", "correlation")})

# restrict both metrics to a rectangle (row0, row1, col0, col1)
noisy = np.clip(clean + 0.2 * rng.standard_normal(clean.shape), -1, 1)
box = (16, 48, 16, 48)
print("inside box: ssim", round(ssim(noisy, clean, 2.0, bbox=box), 3),
      " haralick", round(haralick_distance(noisy, clean, bbox=box), 3))
