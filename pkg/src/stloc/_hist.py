"""Dense per-pixel orientation voting and integral-image box sums."""
from __future__ import annotations


import numpy as np

from ._kernels import orientation_scatter


def gradient(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences over the last two axes, edge-replicated."""
    img = np.asarray(img, dtype=np.float64)
    pad = [(0, 0)] * (img.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(img, pad, mode="edge")
    gx = 0.5 * (p[..., 1:-1, 2:] - p[..., 1:-1, :-2])
    gy = 0.5 * (p[..., 2:, 1:-1] - p[..., :-2, 1:-1])
    return gx, gy


def orientation_votes(dx: np.ndarray, dy: np.ndarray, nbins: int = 8,
                      weight: np.ndarray | None = None) -> np.ndarray:
    """Signed (360 degree) orientation histogram votes with bilinear bin split.

    Returns ``(nbins,) + dx.shape``.  Votes carry the vector magnitude unless
    ``weight`` is given.  Bin ``k`` is centred on angle ``k * 360 / nbins``.
    """
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    w = np.hypot(dx, dy) if weight is None else np.asarray(weight, dtype=np.float64)
    out = np.zeros((nbins, dx.size))
    orientation_scatter(np.ascontiguousarray(dx).ravel(), np.ascontiguousarray(dy).ravel(),
                        np.ascontiguousarray(np.broadcast_to(w, dx.shape)).ravel(), nbins, out)
    return out.reshape((nbins,) + dx.shape)


def integral(maps: np.ndarray) -> np.ndarray:
    """Zero-padded 2-D cumulative sums over the last two axes: shape ``(..., H+1, W+1)``."""
    maps = np.asarray(maps, dtype=np.float64)
    pad = [(0, 0)] * (maps.ndim - 2) + [(1, 0), (1, 0)]
    return np.pad(maps, pad).cumsum(axis=-2).cumsum(axis=-1)


def grid_sums(ii: np.ndarray, row_edges: np.ndarray, col_edges: np.ndarray) -> np.ndarray:
    """Sums over a grid of cells for many boxes at once.

    ``ii`` is ``(C, H+1, W+1)``; ``row_edges`` ``(n, gy+1)`` and ``col_edges``
    ``(n, gx+1)`` give integer cell boundaries.  Returns ``(n, gy, gx, C)``.
    """
    r = row_edges[:, :, None]
    c = col_edges[:, None, :]
    corners = ii[:, r, c]  # (C, n, gy+1, gx+1)
    cells = corners[:, :, 1:, 1:] - corners[:, :, :-1, 1:] - corners[:, :, 1:, :-1] + corners[:, :, :-1, :-1]
    return np.moveaxis(cells, 0, -1)


def l2_normalize(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """L2-normalize along ``axis``; all-zero slices stay exactly zero."""
    norm = np.sqrt((x * x).sum(axis=axis, keepdims=True))
    return np.divide(x, norm, out=np.zeros_like(x, dtype=np.float64), where=norm > 0)
