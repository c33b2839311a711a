"""Grayscale micrograph loading, Otsu thresholding and pixel labelling.

Array convention: ``intensities[j, i]`` is the pixel in column ``i`` and row
``j`` counted from the *bottom* of the image, so that physical ``y`` grows
with ``j``. Files store the top row first; :func:`load_image` flips them.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DegenerateInputError, ImageFormatError, ParameterError

MATRIX = 1
INCLUSION = -1

DEFAULT_PIXEL_SIZE = 0.008  # mm, one 8 micron voxel


@dataclass(frozen=True)
class ImageGrid:
    intensities: np.ndarray
    pixel_size: float = DEFAULT_PIXEL_SIZE
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError("image must be a non-empty 2D array")
        if not self.pixel_size > 0:
            raise ParameterError(f"pixel_size must be positive, got {self.pixel_size}")
        if arr.min() < 0 or arr.max() > 255:
            raise ParameterError("intensities must lie in [0, 255]")
        arr = np.array(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "pixel_size", float(self.pixel_size))

    @property
    def width(self):
        return self.intensities.shape[1]

    @property
    def height(self):
        return self.intensities.shape[0]

    @property
    def extent(self):
        """(x0, y0, x1, y1) of the rectangle covered by the pixel cells."""
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.pixel_size, y0 + self.height * self.pixel_size)

    def centroid(self, i, j):
        return (
            self.origin[0] + self.pixel_size * (i + 0.5),
            self.origin[1] + self.pixel_size * (j + 0.5),
        )

    def index_of(self, x, y):
        """Inverse of :meth:`centroid` (rounded to the containing pixel)."""
        i = int(np.floor((x - self.origin[0]) / self.pixel_size))
        j = int(np.floor((y - self.origin[1]) / self.pixel_size))
        return i, j

    def centroids(self):
        """Pixel centroids, shape (height*width, 2), row-major from the bottom row."""
        jj, ii = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        x = self.origin[0] + self.pixel_size * (ii.ravel() + 0.5)
        y = self.origin[1] + self.pixel_size * (jj.ravel() + 0.5)
        return np.column_stack([x, y])

    def histogram(self):
        return np.bincount(self.intensities.ravel(), minlength=256)


@dataclass(frozen=True)
class PhaseLabels:
    labels: np.ndarray
    threshold: int

    @property
    def n_matrix(self):
        return int(np.count_nonzero(self.labels == MATRIX))

    @property
    def n_inclusion(self):
        return int(np.count_nonzero(self.labels == INCLUSION))


def load_image(path, pixel_size=DEFAULT_PIXEL_SIZE, origin=(0.0, 0.0)):
    """Read an 8-bit grayscale PGM (P2/P5) or PNG into an :class:`ImageGrid`.

    Images carry no physical scale, so ``pixel_size`` (mm) and ``origin``
    (lower-left corner of the pixel grid, mm) come from configuration.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    if path.stat().st_size == 0:
        raise ImageFormatError(f"{path}: empty file")
    try:
        with Image.open(path) as im:
            fmt = im.format
            mode = im.mode
            if fmt not in ("PNG", "PPM"):
                raise ImageFormatError(f"{path}: unsupported format {fmt}; expected PGM or PNG")
            if mode != "L":
                raise ImageFormatError(
                    f"{path}: unsupported pixel mode {mode!r}; need 8-bit grayscale"
                )
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"{path}: cannot decode image ({exc})") from exc
    return ImageGrid(arr[::-1].copy(), pixel_size=pixel_size, origin=origin)


def save_pgm(path, img):
    """Write an :class:`ImageGrid` as binary P5 (top row first)."""
    data = np.ascontiguousarray(img.intensities[::-1])
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def between_class_variance(histogram):
    """sigma_b^2(t) for every t in 0..255; class 0 is ``intensity < t``."""
    hist = np.asarray(histogram, dtype=np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    # w0(t), mu0(t) over intensities strictly below t
    w0 = np.concatenate([[0.0], np.cumsum(hist)[:-1]]) / total
    m0 = np.concatenate([[0.0], np.cumsum(hist * levels)[:-1]]) / total
    w1 = 1.0 - w0
    mt = (hist * levels).sum() / total
    var = np.zeros(256)
    ok = (w0 > 0) & (w1 > 0)
    mu0 = m0[ok] / w0[ok]
    mu1 = (mt - m0[ok]) / w1[ok]
    var[ok] = w0[ok] * w1[ok] * (mu0 - mu1) ** 2
    return var


def otsu_threshold(histogram):
    """Threshold maximising the between-class variance (smallest t on ties).

    Raises
    ------
    DegenerateInputError
        If the histogram is empty or holds a single occupied level.
    """
    hist = np.asarray(histogram)
    if hist.shape != (256,):
        raise ParameterError("histogram must have 256 bins")
    if np.any(hist < 0):
        raise ParameterError("histogram counts must be nonnegative")
    if hist.sum() <= 0:
        raise DegenerateInputError("all-zero histogram")
    var = between_class_variance(hist)
    if var.max() <= 0.0:
        raise DegenerateInputError("histogram has a single occupied level; no threshold exists")
    return int(np.argmax(var))


def label_pixels(img, t):
    """+1 (matrix) where intensity < t, -1 (inclusion) elsewhere."""
    if not 0 <= t <= 255:
        raise ParameterError(f"threshold must be in [0, 255], got {t}")
    labels = np.where(img.intensities < t, MATRIX, INCLUSION).astype(np.int8)
    labels.setflags(write=False)
    return PhaseLabels(labels, int(t))


def training_data(img, labels):
    """Pixel centroids and their flattened labels, matching :meth:`ImageGrid.centroids`."""
    return img.centroids(), np.asarray(labels.labels, dtype=np.float64).ravel()


def write_labeled_csv(path, img, labels):
    pts, y = training_data(img, labels)
    with open(path, "w") as fh:
        fh.write("x,y,label\n")
        for (x, yy), lab in zip(pts, y):
            fh.write(f"{x:.17g},{yy:.17g},{int(lab)}\n")


def read_labeled_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]
