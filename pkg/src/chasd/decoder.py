"""The step-wise decode loop.

Each step runs the original forward pass and checks the confidence gate.
Confident steps emit a token straight from the original logits.  Uncertain
steps perturb the most-attended patches, run a second forward pass on the
perturbed image, and emit from the contrasted, APC-truncated logits.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .backend import Backend, VisualGrid
from .calibrate import calibrated_logits, gate
from .numerics import DegenerateLogitsError, as_logits, softmax
from .perturbation import NoiseSpec, build_mask, perturb, saliency, upsample_mask

GREEDY = "greedy"
SAMPLE = "sample"


@dataclass(frozen=True)
class DecoderConfig:
    alpha: float = 1.0
    beta: float = 0.1
    tau: float = 0.5
    k: float = 0.1
    sigma: float = 1.0
    mode: str = GREEDY
    temperature: float = 1.0
    max_len: int = 16
    eos_token: int = 0
    seed: int = 0

    def __post_init__(self):
        checks = [
            ("alpha", self.alpha >= 0, ">= 0"),
            ("beta", 0 <= self.beta < 1, "in [0, 1)"),
            ("tau", 0 <= self.tau <= 1, "in [0, 1]"),
            ("k", 0 < self.k <= 1, "in (0, 1]"),
            ("sigma", self.sigma >= 0, ">= 0"),
            ("mode", self.mode in (GREEDY, SAMPLE), f"one of {GREEDY!r}, {SAMPLE!r}"),
            ("temperature", self.temperature > 0, "> 0"),
            ("max_len", self.max_len >= 1, ">= 1"),
            ("eos_token", self.eos_token >= 0, ">= 0"),
            ("seed", self.seed >= 0, ">= 0"),
        ]
        for key, ok, rule in checks:
            if not ok:
                raise ValueError(f"{key} must be {rule}, got {getattr(self, key)!r}")


@dataclass(frozen=True)
class StepTrace:
    t: int
    token: int
    p_max: float
    triggered: bool
    mask_indices: tuple[int, ...] = ()
    candidate_count: int = 0
    forward_calls: int = 1

    def __post_init__(self):
        if self.triggered != (self.forward_calls == 2) or self.triggered != bool(self.mask_indices):
            raise ValueError(f"inconsistent step trace at t={self.t}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mask_indices"] = list(self.mask_indices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StepTrace":
        return cls(
            t=int(d["t"]),
            token=int(d["token"]),
            p_max=float(d["p_max"]),
            triggered=bool(d["triggered"]),
            mask_indices=tuple(int(i) for i in d["mask_indices"]),
            candidate_count=int(d["candidate_count"]),
            forward_calls=int(d["forward_calls"]),
        )


@dataclass
class DecodeTrace:
    steps: list[StepTrace] = field(default_factory=list)

    @property
    def tokens(self) -> list[int]:
        return [s.token for s in self.steps]

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def triggered_count(self) -> int:
        return sum(s.triggered for s in self.steps)

    @property
    def total_forwards(self) -> int:
        return sum(s.forward_calls for s in self.steps)

    @property
    def trigger_rate(self) -> float:
        if not self.steps:
            raise ValueError("empty trace has no trigger rate")
        return self.triggered_count / self.length


@dataclass
class Streams:
    """Independent random substreams owned by one decode job."""

    noise: np.random.Generator
    sample: np.random.Generator


def make_streams(seed: int, job: int = 0) -> Streams:
    return Streams(noise=rng.stream(seed, "noise", job), sample=rng.stream(seed, "sample", job))


@dataclass
class StepResult:
    token: int
    trace: StepTrace
    l_ori: np.ndarray
    l_final: np.ndarray


def sample_token(logits, mode: str, temperature: float, generator: np.random.Generator | None) -> int:
    x = as_logits(logits)
    if not np.isfinite(x).any():
        raise DegenerateLogitsError("cannot select a token: all logits are -inf")
    if mode == GREEDY:
        return int(np.argmax(x))
    if mode != SAMPLE:
        raise ValueError(f"unknown mode {mode!r}")
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    p = softmax(x / temperature)
    cdf = np.cumsum(p)
    u = generator.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    # guard the u == cdf[-1] rounding edge
    return min(idx, int(np.flatnonzero(p > 0)[-1]))


def calibrate_step(
    backend: Backend, prefix: Sequence[int], visual: VisualGrid, cfg: DecoderConfig, streams: Streams, t: int = 0
) -> StepResult:
    out = backend.forward(prefix, visual)
    l_ori = out.logits
    decision = gate(softmax(l_ori), cfg.tau)
    if not decision.triggered:
        token = sample_token(l_ori, cfg.mode, cfg.temperature, streams.sample)
        return StepResult(token, StepTrace(t, token, decision.p_max, False), l_ori, l_ori)

    mask = build_mask(saliency(out.attention), cfg.k)
    negative = perturb(visual, upsample_mask(mask, visual.geometry), NoiseSpec(cfg.sigma, streams.noise))
    l_neg = backend.forward(prefix, negative).logits
    l_final, n_candidates = calibrated_logits(l_ori, l_neg, cfg.alpha, cfg.beta)
    token = sample_token(l_final, cfg.mode, cfg.temperature, streams.sample)
    trace = StepTrace(t, token, decision.p_max, True, mask.indices, n_candidates, 2)
    return StepResult(token, trace, l_ori, l_final)


def decode_step(
    backend: Backend, prefix: Sequence[int], visual: VisualGrid, cfg: DecoderConfig, streams: Streams, t: int = 0
) -> tuple[int, StepTrace]:
    res = calibrate_step(backend, prefix, visual, cfg, streams, t)
    return res.token, res.trace


def decode(
    backend: Backend,
    prompt: Sequence[int],
    visual: VisualGrid,
    cfg: DecoderConfig,
    job: int = 0,
    eos_token: int | None = None,
    on_step=None,
) -> DecodeTrace:
    """Decode until EOS or ``cfg.max_len`` steps.

    ``job`` keys the random substreams, so jobs of one run are independent of
    each other and of execution order.  ``on_step`` receives every
    :class:`StepResult` as it is produced.
    """
    prefix = [int(x) for x in prompt]
    if not prefix:
        raise ValueError("prompt must contain at least one token")
    eos = cfg.eos_token if eos_token is None else eos_token
    streams = make_streams(cfg.seed, job)
    trace = DecodeTrace()
    for t in range(cfg.max_len):
        res = calibrate_step(backend, prefix, visual, cfg, streams, t)
        if on_step is not None:
            on_step(res)
        trace.steps.append(res.trace)
        prefix.append(res.token)
        if res.token == eos:
            break
    return trace


def efficiency_report(trace: DecodeTrace) -> dict:
    if not trace.steps:
        raise ValueError("cannot report on an empty trace")
    n = trace.length
    theta = trace.trigger_rate
    return {
        "L": n,
        "triggered_count": trace.triggered_count,
        "theta": theta,
        "total_forwards": trace.total_forwards,
        "expected_forwards": (1 + theta) * n,
        "forwards_per_step": [s.forward_calls for s in trace.steps],
    }
