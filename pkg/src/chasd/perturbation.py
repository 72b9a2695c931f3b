"""Where to perturb: saliency, top-m patch masks and localized Gaussian noise."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import AttentionMap, PatchGeometry, VisualGrid
from .numerics import top_m_indices


@dataclass(frozen=True, eq=False)
class PatchMask:
    bits: np.ndarray  # bool, length N

    @property
    def m(self) -> int:
        return int(self.bits.sum())

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.bits))

    @classmethod
    def from_indices(cls, n: int, indices) -> "PatchMask":
        bits = np.zeros(n, dtype=bool)
        bits[list(indices)] = True
        return cls(bits)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    stream: np.random.Generator

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def saliency(attention: AttentionMap) -> np.ndarray:
    """Per-token saliency: attention averaged over heads."""
    return attention.weights.mean(axis=0)


def mask_size(k: float, n: int) -> int:
    if not 0 < k <= 1:
        raise ValueError(f"sparsity k must be in (0, 1], got {k}")
    # k*n can land a hair above an integer (0.7*10 -> 7.000000000000001)
    m = math.ceil(round(k * n, 9))
    return min(max(m, 1), n)


def build_mask(scores, k: float) -> PatchMask:
    s = np.asarray(scores, dtype=np.float64)
    m = mask_size(k, s.size)
    return PatchMask.from_indices(s.size, top_m_indices(s, m))


def upsample_mask(mask: PatchMask, geometry: PatchGeometry) -> np.ndarray:
    """Nearest-neighbour block replication of a token mask to an ``(H, W)`` pixel mask."""
    if mask.bits.size != geometry.n_tokens:
        raise ValueError(f"mask has {mask.bits.size} tokens, geometry has {geometry.n_tokens}")
    grid = mask.bits.reshape(geometry.grid_rows, geometry.grid_cols)
    return np.kron(grid, np.ones((geometry.patch_px_h, geometry.patch_px_w), dtype=bool)).astype(bool)


def perturb(visual: VisualGrid, pixel_mask: np.ndarray, noise: NoiseSpec) -> VisualGrid:
    """Add N(0, sigma^2) noise to masked pixels (every channel); leave the rest untouched.

    A full image of noise is drawn on every call so the stream advances by the
    same amount whatever the mask covers.
    """
    pm = np.asarray(pixel_mask, dtype=bool)
    if pm.shape != visual.pixels.shape[1:]:
        raise ValueError(f"pixel mask shape {pm.shape} does not match image {visual.pixels.shape[1:]}")
    eps = noise.stream.normal(0.0, noise.sigma, size=visual.pixels.shape)
    out = np.where(pm[None, :, :], visual.pixels + eps, visual.pixels)
    return visual.replace(out)
