"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .geometry import SpatialGrid


def check_points(X, grid: SpatialGrid | None = None) -> np.ndarray:
    """``(n, 2)`` float array of points; inside ``grid``'s closed box if given."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"expected points with 2 coordinates, got shape {X.shape}")
    if grid is not None:
        x0, x1, y0, y1 = grid.bounds
        outside = (X[:, 0] < x0) | (X[:, 0] > x1) | (X[:, 1] < y0) | (X[:, 1] > y1)
        if outside.any():
            raise ValueError(f"{int(outside.sum())} points lie outside the domain")
    return X


def check_field(values, grid: SpatialGrid, name: str = "field", allow_nan: bool = False) -> np.ndarray:
    arr = check_array(values, dtype=np.float64, ensure_all_finite="allow-nan" if allow_nan else True)
    if arr.shape != grid.shape:
        raise ValueError(f"{name} has shape {arr.shape}, grid is {grid.shape}")
    return arr


def check_scaling_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    """Sweep table ``X = [[kn, h], ...]`` with positive entries and errors ``y``."""
    X = check_array(X, dtype=np.float64)
    y = check_array(np.asarray(y, float).reshape(-1, 1), dtype=np.float64).ravel()
    if X.shape[1] != 2:
        raise ValueError(f"expected columns (kn, h), got shape {X.shape}")
    if len(y) != len(X):
        raise ValueError(f"{len(X)} sweep points but {len(y)} errors")
    if np.any(X <= 0):
        raise ValueError("kn and h must be positive")
    return X, y
