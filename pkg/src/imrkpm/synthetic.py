"""Synthetic micrographs with known geometry, used by tests, ``verify`` and demos."""

import numpy as np

from .imaging import ImageGrid

FOREGROUND = 220  # inclusion (bright)
BACKGROUND = 70  # matrix


def circle_image(n=60, radius_px=15.0, center_px=None, pixel_size=1.0, fg=FOREGROUND, bg=BACKGROUND):
    """Square image with one bright disc; pixels whose centroid is inside are ``fg``.

    Returns ``(ImageGrid, center_mm, radius_mm)``.
    """
    c = (n / 2, n / 2) if center_px is None else center_px
    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    r = np.hypot(ii + 0.5 - c[0], jj + 0.5 - c[1])
    arr = np.where(r < radius_px, fg, bg).astype(np.uint8)
    img = ImageGrid(arr, pixel_size=pixel_size)
    return img, (c[0] * pixel_size, c[1] * pixel_size), radius_px * pixel_size


def checkerboard_image(n_cells=3, cell_px=8, pixel_size=1.0, fg=FOREGROUND, bg=BACKGROUND):
    """Checkerboard of ``n_cells`` x ``n_cells`` squares; cell (0, 0) is matrix."""
    idx = np.arange(n_cells * cell_px) // cell_px
    parity = (idx[:, None] + idx[None, :]) % 2
    return ImageGrid(np.where(parity == 1, fg, bg).astype(np.uint8), pixel_size=pixel_size)


def blank_image(width, height, pixel_size=1.0, value=BACKGROUND):
    return ImageGrid(np.full((height, width), value, dtype=np.uint8), pixel_size=pixel_size)
