"""Run configuration: a flat TOML document resolved against defaults."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .gswin import GswinConfig
from .losses import DEFAULT_ALPHA, DEFAULT_MOMENTUM, DEFAULT_TAU, DESK_QUEUE_SIZE
from .smr import DIRECTIONS, SmrParams


@dataclass(frozen=True)
class RunConfig:
    # image encoder
    patch_size: int = 4
    window: int = 8
    base_channels: int = 32
    stage_depths: tuple[int, ...] = (1, 1, 3, 1)
    heads_per_stage: tuple[int, ...] = ()  # empty: channels // 16
    proj_dim: int = 256
    mlp_ratio: float = 4.0
    rel_pos_bias: bool = False
    shift: int = -1  # negative: window // 2
    image_size: int = 256
    gwg_shared: bool = False
    share_glw: bool = False
    feature_pool: str = "token0"
    # text and fusion
    text_layers_total: int = 12
    text_len: int = 32
    text_width: int = 64
    text_heads: int = 4
    mlm_prob: float = 0.15
    # losses
    alpha: float = DEFAULT_ALPHA
    tau: float = DEFAULT_TAU
    queue_size: int = DESK_QUEUE_SIZE
    momentum: float = DEFAULT_MOMENTUM
    # rerank
    k: int = 10
    gamma1: float = 0.9
    gamma2: float = 1.9
    direction: str = "i2t"
    # run
    seed: int = 0
    out: str = "."
    vocab: str = ""

    def gswin(self) -> GswinConfig:
        return GswinConfig(
            patch_size=self.patch_size,
            win=self.window,
            base_channels=self.base_channels,
            stage_depths=tuple(self.stage_depths),
            heads_per_stage=tuple(self.heads_per_stage) or None,
            proj_dim=self.proj_dim,
            mlp_ratio=self.mlp_ratio,
            rel_pos_bias=self.rel_pos_bias,
            shift=None if self.shift < 0 else self.shift,
            image_size=self.image_size,
            gwg_shared=self.gwg_shared,
            share_glw=self.share_glw,
            feature_pool=self.feature_pool,
        )

    def smr(self, direction: str | None = None) -> SmrParams:
        return SmrParams(self.k, self.gamma1, self.gamma2, direction or self.direction)

    @property
    def text_layers(self) -> int:
        return self.text_layers_total // 2

    @property
    def fusion_layers(self) -> int:
        return self.text_layers_total - self.text_layers

    def validate(self) -> "RunConfig":
        self.gswin().validate()
        if self.text_layers_total < 2 or self.text_layers_total % 2:
            raise ConfigError(f"text_layers_total must be even and >= 2, got {self.text_layers_total}")
        if self.text_len < 2:
            raise ConfigError(f"text_len must be >= 2, got {self.text_len}")
        if self.text_width % self.text_heads:
            raise ConfigError(f"text_heads {self.text_heads} do not divide text_width {self.text_width}")
        if not 0 < self.mlm_prob < 1:
            raise ConfigError(f"mlm_prob must be in (0, 1), got {self.mlm_prob}")
        if self.tau <= 0 or self.alpha < 0:
            raise ConfigError(f"tau must be > 0 and alpha >= 0, got {self.tau}, {self.alpha}")
        if self.queue_size < 1:
            raise ConfigError(f"queue_size must be >= 1, got {self.queue_size}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        try:
            self.smr().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value):
    default = _FIELDS[key].default
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
            raise ConfigError(f"{key}: expected a list of integers, got {value!r}")
        return tuple(value)
    raise ConfigError(f"{key}: unsupported value {value!r}")


def config_from_mapping(doc: dict, **overrides) -> RunConfig:
    values = {}
    for key, value in {**doc, **{k: v for k, v in overrides.items() if v is not None}}.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, dict):
            raise ConfigError(f"{key}: nested tables are not supported")
        values[key] = _coerce(key, value)
    return RunConfig(**values).validate()


def load_config(path=None, **overrides) -> RunConfig:
    """Parse a flat TOML file; missing keys take defaults, unknown keys are rejected."""
    doc = {}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_mapping(doc, **overrides)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return "[" + ", ".join(_toml_value(x) for x in v) + "]"


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{name} = {_toml_value(getattr(cfg, name))}\n" for name in _FIELDS)
