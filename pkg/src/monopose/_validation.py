"""Small input-validation helpers shared by the estimators and the core types."""

import numbers

import numpy as np


def as_points(points, dim=None, name="points", allow_nan=False):
    """Return ``points`` as a read-only float64 ``(n, d)`` array copy."""
    arr = np.array(points, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional (n, d), got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {arr.shape[1]}")
    if allow_nan:
        if np.isinf(arr).any():
            raise ValueError(f"{name} contains infinite values")
    elif not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def as_vector(v, size, name="vector"):
    arr = np.array(v, dtype=np.float64, copy=True).reshape(-1)
    if arr.shape != (size,):
        raise ValueError(f"{name} must have {size} entries, got {arr.size}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_keypoint_batch(X, n_joints=None, name="X"):
    """Accept ``(m, n, 2)`` or ``(m, 2n)`` keypoint batches, return ``(m, n, 2)``."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] % 2:
            raise ValueError(f"{name} with 2 dims must have an even number of columns")
        arr = arr.reshape(arr.shape[0], -1, 2)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"{name} must have shape (m, n, 2) or (m, 2n), got {np.shape(X)}")
    if n_joints is not None and arr.shape[1] != n_joints:
        raise ValueError(f"{name} has {arr.shape[1]} joints, expected {n_joints}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_pose_batch(y, n_joints=None, name="y"):
    """Accept ``(m, n, 3)`` or ``(m, 3n)`` pose batches, return ``(m, n, 3)``."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] % 3:
            raise ValueError(f"{name} with 2 dims must have a multiple of 3 columns")
        arr = arr.reshape(arr.shape[0], -1, 3)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (m, n, 3) or (m, 3n), got {np.shape(y)}")
    if n_joints is not None and arr.shape[1] != n_joints:
        raise ValueError(f"{name} has {arr.shape[1]} joints, expected {n_joints}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr
