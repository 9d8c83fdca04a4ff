"""Engine configuration: defaults, file loading, overrides, and hashing.

Config files are YAML (JSON is valid YAML) mirroring the dataclass tree
below; CLI --set overrides use dotted paths and win over the file. Unknown
keys are rejected by name, and every run embeds a hash of the effective
config so outputs can be traced back to their exact settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field

import yaml

from .backend import (
    Backend,
    HttpBackend,
    HttpBackendSettings,
    MockBackend,
    PolicyParams,
    ScriptedPolicyBackend,
)
from .errors import ConfigError
from .evaluation import EVAL_MODES, ReflectionVocab
from .rewards import RewardConfig
from .task import StageBudgets

BACKEND_KINDS = ("scripted", "http", "mock")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"
    base_url: str = "http://localhost:8000/v1"
    model: str = "default"
    timeout_s: float = 60.0
    max_in_flight: int = 8
    api_key_env: str = "THINKER_API_KEY"
    max_attempts: int = 3
    backoff_s: float = 0.5
    policy: PolicyParams = field(default_factory=PolicyParams)

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend kind must be one of {BACKEND_KINDS}")
        if self.timeout_s <= 0:
            raise ValueError("backend.timeout_s must be positive")
        if self.max_in_flight < 1:
            raise ValueError("backend.max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("backend.max_attempts must be >= 1")
        if self.backoff_s < 0:
            raise ValueError("backend.backoff_s must be >= 0")

    def http_settings(self) -> HttpBackendSettings:
        return HttpBackendSettings(
            base_url=self.base_url,
            model=self.model,
            timeout_s=self.timeout_s,
            max_in_flight=self.max_in_flight,
            api_key_env=self.api_key_env,
            max_attempts=self.max_attempts,
            backoff_s=self.backoff_s,
        )


@dataclass(frozen=True)
class RolloutConfig:
    parallelism: int = 4
    samples_per_prompt: int = 32
    batch_size: int = 128

    def __post_init__(self) -> None:
        for name in ("parallelism", "samples_per_prompt", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"rollout.{name} must be >= 1")


@dataclass(frozen=True)
class EvalConfig:
    k: int = 16
    vocab: tuple[str, ...] = ("wait", "however", "alternatively")
    modes: tuple[str, ...] = ("thinker",)
    single_turn_tokens: int = 8000

    def __post_init__(self) -> None:
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.k < 1:
            raise ValueError("eval.k must be >= 1")
        if not self.vocab:
            raise ValueError("eval.vocab must be nonempty")
        if not self.modes:
            raise ValueError("eval.modes must be nonempty")
        for mode in self.modes:
            if mode.replace("-", "_") not in EVAL_MODES:
                raise ValueError(f"eval.modes entry {mode!r} not one of {EVAL_MODES}")
        if self.single_turn_tokens < 1:
            raise ValueError("eval.single_turn_tokens must be >= 1")

    def reflection_vocab(self) -> ReflectionVocab:
        return ReflectionVocab(terms=self.vocab)


@dataclass(frozen=True)
class EngineConfig:
    budgets: StageBudgets = field(default_factory=StageBudgets)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _coerce_scalar(hint, value, path: str):
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        members = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            if len(members) != len(typing.get_args(hint)):
                return None
            raise ConfigError(f"{path}: null is not allowed")
        hint = members[0]
        origin = typing.get_origin(hint)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        inner = typing.get_args(hint)[0] if typing.get_args(hint) else str
        return tuple(_coerce_scalar(inner, v, f"{path}[{i}]") for i, v in enumerate(value))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _build_dataclass(dc_type, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(dc_type)
    known = {f.name: f for f in dataclasses.fields(dc_type)}
    kwargs = {}
    for key, value in data.items():
        full = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config key {full!r}")
        hint = hints[known[key].name]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build_dataclass(hint, value, full)
        else:
            kwargs[key] = _coerce_scalar(hint, value, full)
    # fill defaults for absent keys via normal construction
    try:
        return dc_type(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data: dict | None) -> EngineConfig:
    return _build_dataclass(EngineConfig, data or {}, "")


def _set_dotted(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {part!r} is not a section")
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, object]:
    """Parse one --set override of the form section.key=value."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r}: unparseable value ({exc})") from exc
    if isinstance(value, str):
        # YAML 1.1 misses bare scientific notation like 1e-4
        try:
            value = int(value)
        except ValueError:
            try:
                value = float(value)
            except ValueError:
                pass
    return key, value


def load_config(path: str | None = None, overrides: list[str] | None = None) -> EngineConfig:
    """Effective config = defaults, overlaid by the file, then by --set flags."""
    tree: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path!r} is not valid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path!r} must contain a mapping at the top level")
        tree = loaded
    for override in overrides or []:
        key, value = parse_override(override)
        _set_dotted(tree, key, value)
    return config_from_dict(tree)


def config_to_dict(cfg: EngineConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: EngineConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_backend(cfg: EngineConfig, mock_fixtures=None) -> Backend:
    """Instantiate the configured backend (mock requires explicit fixtures)."""
    if cfg.backend.kind == "scripted":
        return ScriptedPolicyBackend(cfg.backend.policy)
    if cfg.backend.kind == "http":
        return HttpBackend(cfg.backend.http_settings())
    if mock_fixtures is None:
        raise ConfigError("mock backend needs fixtures; it is meant for tests")
    return MockBackend(mock_fixtures)
