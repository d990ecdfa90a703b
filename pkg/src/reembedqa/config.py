"""Run configuration: defaults, JSON config files, env vars, CLI flags.

Precedence (lowest to highest): built-in defaults, --config file, then
REEMBEDQA_* environment variables, then explicit command-line flags. The
effective configuration is echoed into every output artifact.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Any

ENV_PREFIX = "REEMBEDQA_"


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    variant: str = "tr"
    # representation sizes
    d_w: int = 300
    d_c: int = 100
    char_dim: int = 16
    char_widths: tuple[int, ...] = (1, 2, 3, 4, 5)
    char_filters: tuple[int, ...] = (20, 20, 20, 20, 20)
    # encoders
    num_layers: int = 2
    d_h: int = 200
    d_f: int = 100
    mlp_dims: tuple[int, ...] = (865, 865, 400)
    # regularization
    input_dropout: float = 0.6
    hidden_dropout: float = 0.1
    word_dropout: float = 0.15
    ff_dropout: float = 0.2
    variational_dropout: bool = False
    # re-embedding
    reembed_bias: bool = True
    align_on_raw_embeddings: bool = False
    # optimization
    batch_size: int = 80
    max_span_len: int = 30
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_steps: int = 20000
    eval_every: int = 500
    patience: int = 5
    stop_em: float | None = None
    min_count: int = 1
    seed: int = 0
    # paths
    train_file: str | None = None
    dev_file: str | None = None
    embeddings: str | None = None
    lm_states: str | None = None
    out_dir: str = "runs/default"

    def validate(self) -> None:
        from .reembedder import Variant
        try:
            Variant(self.variant)
        except ValueError:
            raise ConfigError(
                f"unknown variant {self.variant!r}; expected one of "
                f"{[v.value for v in Variant]}") from None
        if len(self.char_widths) != len(self.char_filters):
            raise ConfigError("char_widths and char_filters must have equal length")
        if sum(self.char_filters) != self.d_c:
            raise ConfigError(
                f"char filters sum to {sum(self.char_filters)} but d_c={self.d_c}")
        for name in ("input_dropout", "hidden_dropout", "word_dropout", "ff_dropout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if Variant(self.variant).uses_lm and not self.lm_states:
            raise ConfigError(
                f"variant {self.variant!r} needs --lm-states pointing at a "
                "precomputed LM state file")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    """Coerce a string/JSON value to the field's declared type."""
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config field {name!r}")
    default = _FIELD_TYPES[name].default
    if isinstance(value, str):
        ftype = _FIELD_TYPES[name].type
        if isinstance(default, bool) or ftype == "bool":
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ConfigError(f"{name}: expected boolean, got {value!r}")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple) or (default is None and name in
                                          ("char_widths", "char_filters", "mlp_dims")):
            return tuple(int(v) for v in value.replace(",", " ").split())
        if default is None and name in ("stop_em",):
            return float(value)
        return value
    if isinstance(value, list):
        return tuple(value)
    return value


def load_config(path: str | None = None, env: dict[str, str] | None = None,
                overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge defaults, a JSON config file, environment, and overrides."""
    values: dict[str, Any] = {}
    if path:
        with open(path, encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config file must hold a JSON object")
        for k, v in raw.items():
            values[k] = _coerce(k, v)
    env = os.environ if env is None else env
    for key, v in env.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in _FIELD_TYPES:
                values[name] = _coerce(name, v)
    if overrides:
        for k, v in overrides.items():
            if v is not None:
                values[k] = _coerce(k, v)
    config = RunConfig(**values)
    return config
