"""Dense 2D grids: sparse depth container, finite differences, window and
region partitioning. Everything downstream (losses, solver, metrics) is built
on these primitives."""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .validation import check_depth_field, check_mask

# 4-connectivity for connected-component splitting
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class SparseDepth:
    """Sparse depth measurements on an HxW grid.

    `map` holds the measured depth in meters at valid pixels and 0 elsewhere;
    `valid` marks the measurement set. Depths are strictly positive, so the
    zero-means-missing convention is unambiguous.
    """

    map: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.map = np.asarray(self.map, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.map.ndim != 2 or self.map.shape != self.valid.shape:
            raise ValueError("sparse map and validity mask must be matching 2D arrays")
        vals = self.map[self.valid]
        if not np.all(np.isfinite(vals)):
            raise ValueError("sparse depths must be finite")
        if vals.size and np.min(vals) <= 0:
            raise ValueError("sparse depths must be strictly positive")
        if np.any(self.map[~self.valid] != 0):
            raise ValueError("invalid pixels must hold 0 in the sparse map")

    @property
    def shape(self):
        return self.map.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.valid))

    def samples(self):
        """Return (rows, cols, depths) in row-major pixel order."""
        rows, cols = np.nonzero(self.valid)
        return rows, cols, self.map[rows, cols]

    @classmethod
    def from_samples(cls, height, width, rows, cols, depths):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        depths = np.asarray(depths, dtype=np.float64)
        if not (rows.shape == cols.shape == depths.shape) or rows.ndim != 1:
            raise ValueError("rows, cols, depths must be 1D arrays of equal length")
        if rows.size == 0:
            raise ValueError("sparse depth needs at least one sample")
        if np.any((rows < 0) | (rows >= height) | (cols < 0) | (cols >= width)):
            raise ValueError("sample coordinates out of bounds")
        flat = rows * width + cols
        if np.unique(flat).size != flat.size:
            raise ValueError("duplicate sample coordinates")
        m = np.zeros((height, width), dtype=np.float64)
        m[rows, cols] = depths
        v = np.zeros((height, width), dtype=bool)
        v[rows, cols] = True
        return cls(m, v)

    @classmethod
    def from_map(cls, depth_map):
        """Build from a dense map where 0 marks missing pixels."""
        m = np.asarray(depth_map, dtype=np.float64)
        return cls(np.where(m > 0, m, 0.0), m > 0)


@dataclass
class GradientField:
    """Forward differences of a depth field.

    dx(i,j) = D(i,j+1) - D(i,j) with dx = 0 on the last column, dy likewise
    on the last row; magnitude = |dx| + |dy| elementwise.
    """

    dx: np.ndarray
    dy: np.ndarray
    magnitude: np.ndarray


@dataclass
class WindowPartition:
    """Non-overlapping tiling of an HxW grid into windows of at most
    window_size x window_size pixels, row-major from the top-left. Grids not
    divisible by window_size keep smaller remainder windows at the right and
    bottom edges so every pixel is covered."""

    height: int
    width: int
    window_size: int
    boxes: list = field(default_factory=list)  # (r0, r1, c0, c1) half-open

    def __len__(self) -> int:
        return len(self.boxes)

    def indices(self, k) -> np.ndarray:
        """Flat pixel indices of window k, ascending (row-major)."""
        r0, r1, c0, c1 = self.boxes[k]
        rr = np.arange(r0, r1)[:, None] * self.width + np.arange(c0, c1)[None, :]
        return rr.ravel()

    def sizes(self) -> np.ndarray:
        return np.array([(r1 - r0) * (c1 - c0) for r0, r1, c0, c1 in self.boxes])


def forward_gradients(values) -> GradientField:
    """Forward-difference gradient field of a dense depth grid."""
    arr = check_depth_field(values)
    dx = np.zeros_like(arr)
    dy = np.zeros_like(arr)
    dx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    dy[:-1, :] = arr[1:, :] - arr[:-1, :]
    return GradientField(dx=dx, dy=dy, magnitude=np.abs(dx) + np.abs(dy))


def image_gradient_magnitude(image) -> np.ndarray:
    """|dx| + |dy| of a luminance image, same stencil as forward_gradients."""
    arr = np.asarray(image, dtype=np.float64)
    gx = np.zeros_like(arr)
    gy = np.zeros_like(arr)
    gx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    gy[:-1, :] = arr[1:, :] - arr[:-1, :]
    return np.abs(gx) + np.abs(gy)


def partition_windows(height, width, window_size) -> WindowPartition:
    """Tile an HxW grid into ceil(H/w) x ceil(W/w) windows, row-major."""
    if window_size < 1:
        raise ValueError(f"window size must be >= 1, got {window_size}")
    if height < 1 or width < 1:
        raise ValueError("grid dimensions must be >= 1")
    boxes = []
    for r0 in range(0, height, window_size):
        for c0 in range(0, width, window_size):
            boxes.append((r0, min(r0 + window_size, height),
                          c0, min(c0 + window_size, width)))
    return WindowPartition(height=height, width=width,
                           window_size=window_size, boxes=boxes)


def region_index(labels, split_connected=False):
    """Pixel-index sets of the mask regions.

    Returns a list of ascending flat-index arrays, one per non-empty region,
    ordered by label (and by component scan order when split_connected
    divides a label into its 4-connected components).
    """
    arr = check_mask(labels)
    flat = arr.ravel()
    regions = []
    for lab in np.unique(arr):
        sel = arr == lab
        if not split_connected:
            regions.append(np.flatnonzero(flat == lab))
            continue
        comp, n = ndimage.label(sel, structure=_CROSS)
        comp_flat = comp.ravel()
        for c in range(1, n + 1):
            regions.append(np.flatnonzero(comp_flat == c))
    return regions
