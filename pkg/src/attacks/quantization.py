"""
Grid quantization for the discrete image analog
Snaps 0-255 pixel values onto the permitted set Z_q
"""
from typing import List

import numpy as np

from src.errors import DataError

MAX_PIXEL = 255


def permitted_levels(q: int) -> np.ndarray:
    """Z_q = {round(k * 255 / (q - 1)) : k = 0..q-1}, endpoints exactly 0 and 255"""
    if q < 2:
        raise DataError(f"quantization needs at least 2 levels, got {q}")
    k = np.arange(q, dtype=np.float64)
    # Half-up rounding so the set does not depend on banker's rounding
    return np.floor(k * MAX_PIXEL / (q - 1) + 0.5).astype(np.int64)


def _check_range(grid: np.ndarray):
    if np.any(grid < 0) or np.any(grid > MAX_PIXEL):
        raise DataError("grid values must lie in 0..255")


def quantize_grid(grid, q: int) -> np.ndarray:
    """Snap every value to the nearest member of Z_q; exact ties snap downward"""
    levels = permitted_levels(q)
    values = np.asarray(grid, dtype=np.float64)
    _check_range(values)
    distances = np.abs(values[..., None] - levels)
    # argmin returns the first (lowest) level on ties
    return levels[np.argmin(distances, axis=-1)]


def is_quantized(grid, q: int) -> bool:
    return bool(np.all(np.isin(np.asarray(grid), permitted_levels(q))))


def adjacent_levels(value: int, q: int) -> List[int]:
    """Permitted values one step below and above `value` (which must be in Z_q)"""
    levels = permitted_levels(q)
    matches = np.nonzero(levels == int(value))[0]
    if len(matches) == 0:
        raise DataError(f"value {value} is not a permitted {q}-level quantization value")
    idx = int(matches[0])
    neighbours = []
    if idx > 0:
        neighbours.append(int(levels[idx - 1]))
    if idx < len(levels) - 1:
        neighbours.append(int(levels[idx + 1]))
    return neighbours


def neutral_value(q: int) -> int:
    """Mid-gray value used to neutral pixel saliency, snapped onto Z_q"""
    return int(quantize_grid(np.array([128]), q)[0])
