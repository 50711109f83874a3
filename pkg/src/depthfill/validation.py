"""Input validation helpers shared by every module."""

import numpy as np


def check_depth_field(values, name="depth field"):
    """Validate a dense depth grid and return it as a float64 array.

    Requires a finite, non-negative 2D array of at least 2x2 (forward
    differences need one neighbor in each direction).
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"{name} must be at least 2x2, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative depths")
    return arr


def check_mask(labels, name="segmentation mask"):
    """Validate a label map: 2D, non-negative integers."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.asarray(arr, dtype=np.float64)
        if not np.all(np.isfinite(rounded)) or np.any(rounded != np.round(rounded)):
            raise ValueError(f"{name} labels must be integers")
        arr = rounded.astype(np.int64)
    else:
        arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError(f"{name} labels must be non-negative")
    return arr


def check_image(image, name="image"):
    """Validate a luminance array: 2D with finite values."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2D luminance array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_same_shape(shape, other, name="input"):
    if tuple(shape) != tuple(other.shape):
        raise ValueError(f"{name} shape {other.shape} does not match {tuple(shape)}")
    return other
