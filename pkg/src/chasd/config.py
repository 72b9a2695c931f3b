"""Flat YAML run configuration covering the decoder and the toy backend."""
from __future__ import annotations

import dataclasses
import numbers
from dataclasses import dataclass, field

import yaml

from .backend import PatchGeometry, ToyBackendSpec
from .decoder import DecoderConfig


class ConfigError(ValueError):
    pass


_DECODER_KEYS = {f.name: f for f in dataclasses.fields(DecoderConfig)}
_BACKEND_DEFAULTS = {
    "backend_seed": 0,
    "vocab_size": 32,
    "grid_rows": 4,
    "grid_cols": 4,
    "patch_px_h": 4,
    "patch_px_w": 4,
    "channels": 3,
    "embed_dim": 32,
    "heads": 4,
}
_RUN_DEFAULTS = {"yes_token": 1}
_STR_KEYS = {"mode"}
_INT_KEYS = {"max_len", "eos_token", "seed", *_BACKEND_DEFAULTS, *_RUN_DEFAULTS}

KEYS = tuple(_DECODER_KEYS) + tuple(_BACKEND_DEFAULTS) + tuple(_RUN_DEFAULTS)


@dataclass(frozen=True)
class Config:
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    backend: ToyBackendSpec = field(default_factory=ToyBackendSpec)
    yes_token: int = 1

    def __post_init__(self):
        v = self.backend.vocab_size
        if self.decoder.eos_token >= v:
            raise ConfigError(f"eos_token must be < vocab_size ({v}), got {self.decoder.eos_token}")
        if not 0 <= self.yes_token < v:
            raise ConfigError(f"yes_token must be in [0, {v}), got {self.yes_token}")

    def to_dict(self) -> dict:
        b = self.backend
        g = b.geometry
        out = dataclasses.asdict(self.decoder)
        out.update(
            backend_seed=b.seed,
            vocab_size=b.vocab_size,
            grid_rows=g.grid_rows,
            grid_cols=g.grid_cols,
            patch_px_h=g.patch_px_h,
            patch_px_w=g.patch_px_w,
            channels=g.channels,
            embed_dim=b.embed_dim,
            heads=b.head_count,
            yes_token=self.yes_token,
        )
        return out

    def replace(self, **overrides) -> "Config":
        return from_mapping({**self.to_dict(), **overrides})


def _coerce(key: str, value):
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if key in _INT_KEYS:
        if int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def from_mapping(mapping: dict) -> Config:
    unknown = sorted(set(mapping) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in mapping.items() if v is not None}
    dec = {k: values[k] for k in _DECODER_KEYS if k in values}
    bk = {**_BACKEND_DEFAULTS, **{k: values[k] for k in _BACKEND_DEFAULTS if k in values}}
    try:
        decoder = DecoderConfig(**dec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        geometry = PatchGeometry(bk["grid_rows"], bk["grid_cols"], bk["patch_px_h"], bk["patch_px_w"], bk["channels"])
        backend = ToyBackendSpec(
            seed=bk["backend_seed"],
            vocab_size=bk["vocab_size"],
            geometry=geometry,
            embed_dim=bk["embed_dim"],
            head_count=bk["heads"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Config(decoder, backend, values.get("yes_token", _RUN_DEFAULTS["yes_token"]))


def parse_config(text: str) -> Config:
    """Parse a flat ``key: value`` YAML document; missing keys take their defaults."""
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a key-value mapping")
    return from_mapping(data)


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
