"""Run configuration: a flat, documented key=value text format.

Unknown keys are errors so a config file can never silently drift from
the code. `config_hash` is the canonical fingerprint that goes into
checkpoints, reports, and run manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, fields

from .errors import ConfigError
from .world import HAND4X2, ROBOT7D, WorldConfig

COSMO_ON = "on"
ACTION_NONE = "none"
ACTION_PLAIN_TEXT = "plain_text"
ACTION_CODEC = "codec"
SAME_OR_LATER = "same_or_later"
SAME_OR_EARLIER = "same_or_earlier"


@dataclass
class RunConfig:
    # world
    frame_size: int = 32
    n_objects: int = 2
    horizon: int = 4
    speed: float = 0.15
    schema: str = HAND4X2
    # model dims
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    patch: int = 8
    d_vis: int = 32
    history_len: int = 2
    # losses
    lambda1: float = 0.1
    lambda2: float = 0.01
    embed_loss_weight: float = 1.0
    codec_rt_weight: float = 0.5
    # stage 1 training
    stage1_epochs: int = 3
    stage1_batch: int = 8
    stage1_lr: float = 1e-3
    phi_v_steps: int = 400
    phi_v_batch: int = 8
    phi_v_lr: float = 2e-3
    codec_steps: int = 300
    codec_batch: int = 64
    codec_lr: float = 2e-3
    narration_temperature: float = 0.0
    # stage 2 training
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    latent_channels: int = 4
    vae_steps: int = 600
    vae_batch: int = 32
    vae_lr: float = 2e-3
    vae_kl_weight: float = 1e-4
    unet_base: int = 48
    unet_steps: int = 900
    unet_batch: int = 16
    unet_lr: float = 1e-3
    # ablation axes
    cosmo: bool = True
    action_input: str = ACTION_CODEC
    cca: bool = True
    cca_direction: str = SAME_OR_LATER

    def validate(self):
        if self.schema not in (HAND4X2, ROBOT7D):
            raise ConfigError(f"schema must be {HAND4X2} or {ROBOT7D}")
        if self.action_input not in (ACTION_NONE, ACTION_PLAIN_TEXT, ACTION_CODEC):
            raise ConfigError(f"action_input must be none|plain_text|codec, got {self.action_input!r}")
        if self.cca_direction not in (SAME_OR_LATER, SAME_OR_EARLIER):
            raise ConfigError(f"cca_direction must be {SAME_OR_LATER}|{SAME_OR_EARLIER}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if self.frame_size % self.patch != 0:
            raise ConfigError(f"frame_size {self.frame_size} not divisible by patch {self.patch}")
        if self.frame_size % 4 != 0:
            raise ConfigError("frame_size must be divisible by 4 for the VAE")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.history_len != 2:
            raise ConfigError("only a 2-timestep history window is supported")
        if self.cca and self.action_input == ACTION_NONE:
            raise ConfigError("cca requires an action input (no queries otherwise)")
        if self.diffusion_steps < 2:
            raise ConfigError("diffusion_steps must be >= 2")
        self.world_config()  # validates world fields
        return self

    def world_config(self) -> WorldConfig:
        return WorldConfig(frame_size=self.frame_size, n_objects=self.n_objects,
                           horizon=self.horizon, speed=self.speed,
                           schema=self.schema).validate()

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key, raw, typ):
    raw = raw.strip()
    try:
        if typ == "bool" or typ is bool:
            if raw.lower() in ("true", "on", "1", "yes"):
                return True
            if raw.lower() in ("false", "off", "0", "no"):
                return False
            raise ValueError(raw)
        if typ == "int" or typ is int:
            return int(raw)
        if typ == "float" or typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {typ}") from exc


def load_config(path=None, overrides=None) -> RunConfig:
    """Read `key = value` lines; '#' starts a comment; unknown keys raise."""
    values = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in _FIELD_TYPES:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _parse_value(key, raw, _FIELD_TYPES[key])
    for key, val in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val if not isinstance(val, str) else _parse_value(key, val, _FIELD_TYPES[key])
    return RunConfig(**values).validate()


def save_config(cfg: RunConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        for key, val in cfg.to_dict().items():
            fh.write(f"{key} = {val}\n")
