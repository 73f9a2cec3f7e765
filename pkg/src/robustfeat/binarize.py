"""Input binarizers: threshold rounding, lattice snapping, nearest-neighbor
projection onto an anchor set; plus the per-input certification check for the
threshold variant and the straight-through backward rule used when a
binarizer sits inside an attacked pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Image


def _pixels(x) -> np.ndarray:
    if isinstance(x, Image):
        return x.pixels
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class ThresholdBinarizer:
    """Pixels below tau go to 0, pixels at or above tau go to 1."""

    tau: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie strictly inside (0, 1), got {self.tau}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (_pixels(x) >= self.tau).astype(np.float64)

    def backward(self, upstream_grad: np.ndarray) -> np.ndarray:
        return bpda_backward(upstream_grad)


@dataclass(frozen=True)
class LatticeBinarizer:
    """Snap each coordinate to the nearest level of the uniform grid
    {0, 1/(levels-1), ..., 1}; midpoint ties round up."""

    levels: int = 2

    def __post_init__(self) -> None:
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        step = self.levels - 1
        return np.floor(_pixels(x) * step + 0.5) / step

    def backward(self, upstream_grad: np.ndarray) -> np.ndarray:
        return bpda_backward(upstream_grad)


@dataclass(frozen=True)
class NearestNeighborBinarizer:
    """Project onto the nearest anchor point; ties break to the lowest index."""

    anchors: np.ndarray
    metric: str = "linf"

    def __post_init__(self) -> None:
        anchors = np.atleast_2d(np.asarray(self.anchors, dtype=np.float64))
        object.__setattr__(self, "anchors", anchors)
        if anchors.shape[0] == 0:
            raise ValueError("anchor set must be non-empty")
        if not np.isfinite(anchors).all():
            raise ValueError("anchors must be finite")
        if self.metric not in ("linf", "l2"):
            raise ValueError(f"metric must be 'linf' or 'l2', got {self.metric!r}")

    def nearest_index(self, x: np.ndarray) -> int:
        diffs = self.anchors - _pixels(x).reshape(1, -1)
        if self.metric == "linf":
            dists = np.abs(diffs).max(axis=1)
        else:
            dists = np.sqrt((diffs * diffs).sum(axis=1))
        return int(np.argmin(dists))  # argmin takes the first minimum

    def apply(self, x: np.ndarray) -> np.ndarray:
        flat = _pixels(x)
        return self.anchors[self.nearest_index(flat)].reshape(flat.shape)

    def backward(self, upstream_grad: np.ndarray) -> np.ndarray:
        return bpda_backward(upstream_grad)


@dataclass
class Certificate:
    """Outcome of a per-input robustness check for the threshold binarizer."""

    certified: bool
    witness_pixels: np.ndarray  # flat indices violating the margin condition
    epsilon: float

    def __post_init__(self) -> None:
        self.witness_pixels = np.asarray(self.witness_pixels, dtype=np.int64)
        assert self.certified == (self.witness_pixels.size == 0)


def binarize_threshold(x, b: ThresholdBinarizer) -> np.ndarray:
    return b.apply(x)


def binarize_lattice(x, b: LatticeBinarizer) -> np.ndarray:
    return b.apply(x)


def binarize_nn(x, b: NearestNeighborBinarizer) -> np.ndarray:
    return b.apply(x)


def certify_threshold(x, b: ThresholdBinarizer, epsilon: float) -> Certificate:
    """Check that every pixel clears tau by more than epsilon.

    Certified means the binarized output is provably constant on the L-inf
    ball of radius epsilon around x (intersected with [0,1]^n), so any
    deterministic classifier downstream is robust at x.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    flat = _pixels(x).reshape(-1)
    ones = flat >= b.tau
    safe = np.where(ones, flat >= b.tau + epsilon, flat < b.tau - epsilon)
    witnesses = np.flatnonzero(~safe)
    return Certificate(witnesses.size == 0, witnesses, epsilon)


def bpda_backward(upstream_grad: np.ndarray) -> np.ndarray:
    """Identity surrogate derivative (straight-through estimator)."""
    g = np.asarray(upstream_grad, dtype=np.float64)
    if not np.isfinite(g).all():
        raise ValueError("upstream gradient must be finite")
    return g
