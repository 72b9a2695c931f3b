"""Confidence-gated, attention-localized contrastive decoding for vision-language models."""
from .backend import (
    AttentionMap,
    BackendOutput,
    PatchGeometry,
    ToyBackend,
    ToyBackendSpec,
    VisualGrid,
    build_toy_backend,
)
from .calibrate import GateDecision, apc_candidates, apply_candidates, calibrated_logits, contrast_logits, gate
from .decoder import (
    DecodeTrace,
    DecoderConfig,
    StepTrace,
    decode,
    decode_step,
    efficiency_report,
    make_streams,
    sample_token,
)
from .numerics import DegenerateLogitsError, max_prob, softmax, top_m_indices
from .perturbation import NoiseSpec, PatchMask, build_mask, perturb, saliency, upsample_mask

__version__ = "0.1.0"
