"""Forward-pass contract and a deterministic toy vision-language model.

A backend maps ``(prefix tokens, image)`` to next-token logits plus the
head-wise attention of the current position over the visual tokens.  The
decoder consumes nothing else, so the toy model below is enough to exercise
the whole pipeline without real checkpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import rng
from .numerics import softmax


@dataclass(frozen=True)
class PatchGeometry:
    grid_rows: int
    grid_cols: int
    patch_px_h: int
    patch_px_w: int
    channels: int = 3

    def __post_init__(self):
        for name in ("grid_rows", "grid_cols", "patch_px_h", "patch_px_w", "channels"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def n_tokens(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def height(self) -> int:
        return self.grid_rows * self.patch_px_h

    @property
    def width(self) -> int:
        return self.grid_cols * self.patch_px_w

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_px_h * self.patch_px_w

    def patches(self, pixels: np.ndarray) -> np.ndarray:
        """Flatten a ``(C, H, W)`` image into ``(N, C*ph*pw)`` row-major patches."""
        c, r, ph, g, pw = self.channels, self.grid_rows, self.patch_px_h, self.grid_cols, self.patch_px_w
        blocks = pixels.reshape(c, r, ph, g, pw).transpose(1, 3, 0, 2, 4)
        return blocks.reshape(r * g, c * ph * pw)


@dataclass(frozen=True, eq=False)
class VisualGrid:
    pixels: np.ndarray
    geometry: PatchGeometry

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != self.geometry.shape:
            raise ValueError(f"pixel shape {px.shape} does not match geometry {self.geometry.shape}")
        if not np.isfinite(px).all():
            raise ValueError("visual grid contains non-finite values")
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other):
        if not isinstance(other, VisualGrid):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.pixels, other.pixels)

    def replace(self, pixels: np.ndarray) -> "VisualGrid":
        return VisualGrid(pixels, self.geometry)


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """``(H, N)`` post-softmax attention of the current position over visual tokens."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("attention must be a non-empty H x N matrix")
        if (w < 0).any() or not np.allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("attention rows must be probability vectors")
        object.__setattr__(self, "weights", w)

    @property
    def heads(self) -> int:
        return self.weights.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class BackendOutput:
    logits: np.ndarray
    attention: AttentionMap


class Backend(Protocol):
    vocab_size: int
    geometry: PatchGeometry

    def forward(self, prefix: Sequence[int], visual: VisualGrid) -> BackendOutput: ...


@dataclass(frozen=True)
class ToyBackendSpec:
    seed: int = 0
    vocab_size: int = 32
    geometry: PatchGeometry = PatchGeometry(4, 4, 4, 4, 3)
    embed_dim: int = 32
    head_count: int = 4

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if self.head_count < 1:
            raise ValueError("head_count must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


# Gains applied on top of fan-in scaled initialisation.  Chosen so that the
# attention is visibly peaked and next-token confidence spans (0, 1).
_QK_GAIN = 2.0
_LOGIT_GAIN = 4.0


class ToyBackend:
    """One-layer cross-attention model with fixed pseudo-random weights.

    Forward pass:

    1. prefix state = mean of the prefix token embeddings
    2. per-head attention = softmax over patches of ``<Wq_h s, Wk_h e_i> / sqrt(d)``
    3. pooled visual feature = attention-weighted patch embeddings, averaged over heads
    4. logits = ``(s + pooled) @ W_out``
    """

    def __init__(self, spec: ToyBackendSpec):
        self.spec = spec
        self.vocab_size = spec.vocab_size
        self.geometry = spec.geometry
        d = spec.embed_dim
        p = spec.geometry.patch_dim

        def normal(name, shape, scale, index=0):
            return rng.stream(spec.seed, name, index).normal(0.0, scale, size=shape)

        self.patch_proj = normal("patch_proj", (p, d), 1.0 / math.sqrt(p))
        self.token_embed = normal("token_embed", (spec.vocab_size, d), 1.0)
        self.query = np.stack([normal("query", (d, d), _QK_GAIN / math.sqrt(d), h) for h in range(spec.head_count)])
        self.key = np.stack([normal("key", (d, d), _QK_GAIN / math.sqrt(d), h) for h in range(spec.head_count)])
        self.out_proj = normal("out_proj", (d, spec.vocab_size), _LOGIT_GAIN / math.sqrt(d))
        for arr in (self.patch_proj, self.token_embed, self.query, self.key, self.out_proj):
            arr.setflags(write=False)

    def prefix_state(self, prefix: Sequence[int]) -> np.ndarray:
        ids = np.asarray(prefix, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("prefix must contain at least one token")
        if (ids < 0).any() or (ids >= self.vocab_size).any():
            raise ValueError(f"prefix tokens must lie in [0, {self.vocab_size})")
        return self.token_embed[ids].mean(axis=0)

    def forward(self, prefix: Sequence[int], visual: VisualGrid) -> BackendOutput:
        if visual.geometry != self.geometry:
            raise ValueError(f"visual geometry {visual.geometry} does not match backend {self.geometry}")
        state = self.prefix_state(prefix)
        embeds = self.geometry.patches(visual.pixels) @ self.patch_proj  # (N, d)
        q = np.einsum("d,hde->he", state, self.query)  # (H, d)
        k = np.einsum("nd,hde->hne", embeds, self.key)  # (H, N, d)
        scores = np.einsum("he,hne->hn", q, k) / math.sqrt(self.spec.embed_dim)
        attn = np.stack([softmax(row) for row in scores])
        pooled = (attn @ embeds).mean(axis=0)
        logits = (state + pooled) @ self.out_proj
        return BackendOutput(logits=logits, attention=AttentionMap(attn))


def build_toy_backend(spec: ToyBackendSpec) -> ToyBackend:
    return ToyBackend(spec)
