"""Soft-argmax decoding of per-joint heatmaps.

Cell ``(x, y)`` is column ``x``, row ``y``; coordinates refer to cell
centres, so the top-left cell centre is ``(0, 0)``.  Activations are
non-negative likelihoods.  They are moved to the log domain before the
tempered softmax, which makes ``temperature=1`` the plain normalised
expectation and lets large temperatures approach the discrete argmax.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import Keypoints2D
from .exceptions import AllZeroHeatmap


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Stack of ``n`` single-joint grids, shape ``(n, height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[1] == 0 or v.shape[2] == 0:
            raise ValueError(f"heatmap values must be (n, H, W), got {np.shape(self.values)}")
        if not np.isfinite(v).all():
            raise ValueError("heatmap values must be finite")
        if (v < 0).any():
            raise ValueError("heatmap activations must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_joints(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]

    def __eq__(self, other):
        return isinstance(other, Heatmap) and np.array_equal(self.values, other.values)

    __hash__ = None


def _soft_argmax_grids(values, temperature, logits=False):
    n, h, w = values.shape
    flat = values.reshape(n, -1)
    if logits:
        z = temperature * flat
    else:
        empty = ~(flat > 0).any(axis=1)
        if empty.any():
            raise AllZeroHeatmap(f"joint grid {int(np.argmax(empty))} is identically zero")
        with np.errstate(divide="ignore"):
            z = temperature * np.log(flat)
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    p = p.reshape(n, h, w)
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    u = (p.sum(axis=1) * xs).sum(axis=1)
    v = (p.sum(axis=2) * ys).sum(axis=1)
    # rounding in the normalisation can overshoot the grid by an ulp
    return np.stack([np.clip(u, 0.0, w - 1), np.clip(v, 0.0, h - 1)], axis=1)


def soft_argmax(hm, temperature=1.0, scale=1.0, offset=(0.0, 0.0), logits=False):
    """Decode each joint grid to its sub-pixel expected location.

    The per-cell weights are ``softmax(temperature * log(values))``, or
    ``softmax(temperature * values)`` when ``logits`` is true.  The decoded
    grid coordinates are mapped to image space by ``scale * uv + offset``.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    values = hm.values if isinstance(hm, Heatmap) else Heatmap(hm).values
    uv = _soft_argmax_grids(values, float(temperature), logits)
    uv = uv * np.asarray(scale, dtype=np.float64) + np.asarray(offset, dtype=np.float64)
    return Keypoints2D(uv, np.ones(uv.shape[0], dtype=bool))


def synthesize_gaussian(center, sigma, width, height):
    """Unnormalised isotropic Gaussian with peak value 1 at ``center``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    cx, cy = float(center[0]), float(center[1])
    xs = np.arange(int(width), dtype=np.float64)
    ys = np.arange(int(height), dtype=np.float64)
    d2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
    return Heatmap(np.exp(-d2 / (2.0 * sigma * sigma)))


def stack_heatmaps(grids):
    return Heatmap(np.concatenate([g.values for g in grids], axis=0))


class SoftArgmaxDecoder(TransformerMixin, BaseEstimator):
    """Stateless transformer from heatmap stacks to keypoint coordinates.

    Parameters
    ----------
    temperature : float, default=1.0
        Sharpness of the softmax over log-activations.
    scale, offset : float or pair
        Affine map from heatmap cells to image pixels.
    """

    def __init__(self, temperature=1.0, scale=1.0, offset=(0.0, 0.0)):
        self.temperature = temperature
        self.scale = scale
        self.offset = offset

    def fit(self, X=None, y=None):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        return self

    def transform(self, X):
        """``X`` is ``(n, H, W)`` or a batch ``(m, n, H, W)``; returns ``(..., n, 2)``."""
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 3:
            return soft_argmax(arr, self.temperature, self.scale, self.offset).joints.copy()
        if arr.ndim != 4:
            raise ValueError(f"expected (n, H, W) or (m, n, H, W) heatmaps, got {arr.shape}")
        return np.stack([soft_argmax(a, self.temperature, self.scale, self.offset).joints
                         for a in arr])
