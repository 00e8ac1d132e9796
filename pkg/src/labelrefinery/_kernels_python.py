"""Pure-numpy augmentation kernels.

Fallback for :mod:`labelrefinery._kernels_native`. Both implementations
perform the identical sequence of float32 operations so their outputs are
bit-for-bit equal; keep any change mirrored in the .pyx file.
"""

import numpy as np


def crop_resize_bilinear(src, y0, y1, fy, x0, x1, fx):
    """Gather-and-blend bilinear resample.

    src: float32 (H, W, C); y0/y1/x0/x1: absolute source indices per output
    row/column; fy/fx: float32 interpolation fractions.
    """
    p00 = src[np.ix_(y0, x0)]
    p01 = src[np.ix_(y0, x1)]
    p10 = src[np.ix_(y1, x0)]
    p11 = src[np.ix_(y1, x1)]
    wx = fx[None, :, None]
    wy = fy[:, None, None]
    top = p00 + (p01 - p00) * wx
    bot = p10 + (p11 - p10) * wx
    return top + (bot - top) * wy


def gaussian_blur(src, taps):
    """Separable Gaussian blur with edge-replicate padding.

    src: float32 (H, W, C); taps: float32 normalized kernel of odd length.
    """
    r = (taps.shape[0] - 1) // 2
    h, w = src.shape[0], src.shape[1]
    padded = np.pad(src, ((0, 0), (r, r), (0, 0)), mode="edge")
    tmp = np.zeros_like(src)
    for t in range(taps.shape[0]):
        tmp += taps[t] * padded[:, t:t + w]
    padded = np.pad(tmp, ((r, r), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(src)
    for t in range(taps.shape[0]):
        out += taps[t] * padded[t:t + h]
    return out
