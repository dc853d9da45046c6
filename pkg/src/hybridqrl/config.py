"""Run configuration: flat dotted-key JSON files, named presets, manifests.

Every key has a materialised default, so a manifest written from a
``RunConfig`` reconstructs it exactly. Keys under ``assumed.`` document
choices the model does not expose as knobs (initialisation schemes,
grayscale weights, tie-breaking); they are checked on load and cannot be
changed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional

from .envs import ENVIRONMENTS, PreprocConfig, spec_sheet
from .envs.preprocessing import LUMA_WEIGHTS
from .errors import ConfigurationError
from .model import CLASSICAL, GROUPS, HYBRID, MODEL_TYPES, NetSpec
from .rl import BASE_LR, TrainerConfig

CONFIG_VERSION = 1

ASSUMED = {
    "assumed.batch_size_source": "convention (minibatch size is not stated)",
    "assumed.adam": "bias-corrected Adam, per-group learning rates",
    "assumed.init.conv": "he_uniform weights, zero bias",
    "assumed.init.dense": "he_uniform for relu layers, glorot_uniform otherwise; zero bias",
    "assumed.init.pqc": "normal(0, (0.01*pi)^2)",
    "assumed.layer_biases": True,
    "assumed.grayscale_weights": [float(w) for w in LUMA_WEIGHTS],
    "assumed.observation_dtype": "uint8 (round(255 * luma)), scaled by 1/255 in the network",
    "assumed.tie_break": "lowest action index",
    "assumed.epsilon_clock": "post-warmup environment steps",
}


@dataclass(frozen=True)
class Preset:
    name: str
    model_type: str
    readout_lr: float
    reward_scale: float
    latent: int
    runs: str

    @property
    def readout_group(self) -> str:
        return "postproc" if self.model_type == HYBRID else "out"

    def keys(self) -> dict:
        out = {"model.type": self.model_type, "trainer.reward_scale": self.reward_scale}
        if self.model_type == HYBRID:
            n = {16: 4, 36: 6}[self.latent]
            out.update({"model.n_qubits": n, "model.n_layers": n, "model.latent_dim": None})
        else:
            out["model.latent_dim"] = self.latent
        for g in GROUPS[self.model_type]:
            out[f"trainer.lr.{g}"] = BASE_LR
        out[f"trainer.lr.{self.readout_group}"] = self.readout_lr
        return out


PRESETS = {
    p.name: p
    for p in (
        Preset("q-baseline", HYBRID, 2.5e-4, 1.0, 16, "5 (4 in Pong)"),
        Preset("quantum-1a", HYBRID, 2.5e-3, 1.0, 16, "3"),
        Preset("quantum-1b", HYBRID, 2.5e-3, 10.0, 16, "3"),
        Preset("quantum-1c", HYBRID, 2.5e-2, 10.0, 16, "3"),
        Preset("quantum-1d", HYBRID, 2.5e-2, 100.0, 16, "3"),
        Preset("quantum-1e", HYBRID, 2.5e-1, 10.0, 16, "3"),
        Preset("quantum-1f", HYBRID, 2.5e-1, 100.0, 16, "3"),
        Preset("quantum-2a", HYBRID, 2.5e-4, 1.0, 36, "5"),
        Preset("quantum-2b", HYBRID, 2.5e-2, 10.0, 36, "5"),
        Preset("quantum-2c", HYBRID, 2.5e-1, 100.0, 36, "5"),
        Preset("c-baseline", CLASSICAL, 2.5e-4, 1.0, 16, "5 (4 in Pong)"),
        Preset("classical-1a", CLASSICAL, 2.5e-2, 10.0, 16, "5"),
        Preset("classical-1b", CLASSICAL, 2.5e-1, 100.0, 16, "5"),
        Preset("classical-2", CLASSICAL, 2.5e-4, 1.0, 36, "5"),
    )
}


@dataclass
class RunConfig:
    env: str = "mini-pong"
    env_overrides: Dict[str, object] = field(default_factory=dict)
    preproc: PreprocConfig = field(default_factory=PreprocConfig)
    model: NetSpec = field(default_factory=lambda: NetSpec(HYBRID))
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    seed: int = 0
    output_dir: str = "runs/default"
    checkpoint_every: int = 0
    preset: Optional[str] = None
    audit: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigurationError(f"env.name: unknown environment {self.env!r}")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be >= 0")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigurationError(f"preset: unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        self.trainer = replace(self.trainer, seed=self.seed, learning_rates=dict(self.trainer.learning_rates))
        groups = set(GROUPS[self.model.model_type])
        unknown = set(self.trainer.learning_rates) - groups
        if unknown:
            raise ConfigurationError(f"trainer.lr: no group {sorted(unknown)} in a {self.model.model_type} model")
        for g in groups:
            self.trainer.learning_rates.setdefault(g, BASE_LR)
        self.trainer.validate()

    # -- summary views
    @property
    def readout_group(self) -> str:
        return "postproc" if self.model.model_type == HYBRID else "out"

    def table_row(self) -> tuple:
        """(readout learning rate, reward scale, latent dimension)."""
        return (self.trainer.learning_rates[self.readout_group], self.trainer.reward_scale, self.model.latent)

    # -- flat dotted keys
    def to_flat(self) -> dict:
        out = {
            "config_version": CONFIG_VERSION,
            "preset": self.preset,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "checkpoint_every": self.checkpoint_every,
            "env.name": self.env,
        }
        params = spec_sheet(self.env)
        params.update(self.env_overrides)
        for k, v in params.items():
            out[f"env.{k}"] = list(v) if isinstance(v, tuple) else v
        for f in fields(PreprocConfig):
            out[f"preproc.{f.name}"] = getattr(self.preproc, f.name)
        m = self.model.to_dict()
        out["model.type"] = m.pop("model_type")
        for k, v in m.items():
            out[f"model.{k}"] = v
        for f in fields(TrainerConfig):
            if f.name in ("seed", "learning_rates"):
                continue
            out[f"trainer.{f.name}"] = getattr(self.trainer, f.name)
        for g in GROUPS[self.model.model_type]:
            out[f"trainer.lr.{g}"] = self.trainer.learning_rates[g]
        out.update(ASSUMED)
        out["audit"] = list(self.audit)
        return out

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        flat = dict(flat)
        version = flat.pop("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigurationError(f"config_version: unsupported version {version}")
        for key, value in ASSUMED.items():
            if key in flat and flat.pop(key) != value:
                raise ConfigurationError(f"{key}: fixed by the implementation, expected {value!r}")
        top = {k: flat.pop(k) for k in ("preset", "seed", "output_dir", "checkpoint_every", "audit") if k in flat}
        env = flat.pop("env.name", "mini-pong")
        if env not in ENVIRONMENTS:
            raise ConfigurationError(f"env.name: unknown environment {env!r}")
        sheet = spec_sheet(env)
        env_over, preproc, model, trainer, lrs = {}, {}, {}, {}, {}
        model_fields = {f.name for f in fields(NetSpec)}
        trainer_fields = {f.name for f in fields(TrainerConfig)} - {"seed", "learning_rates"}
        preproc_fields = {f.name for f in fields(PreprocConfig)}
        for key, value in flat.items():
            section, _, name = key.partition(".")
            if section == "env" and name in sheet:
                if value != sheet[name]:
                    env_over[name] = tuple(value) if isinstance(value, list) else value
            elif section == "preproc" and name in preproc_fields:
                preproc[name] = value
            elif section == "model" and (name in model_fields or name == "type"):
                model["model_type" if name == "type" else name] = value
            elif section == "trainer" and name.startswith("lr."):
                lrs[name[3:]] = float(value)
            elif section == "trainer" and name in trainer_fields:
                trainer[name] = value
            else:
                raise ConfigurationError(f"{key}: unknown configuration key")
        try:
            spec = NetSpec.from_dict({"model_type": HYBRID, **model})
            pre = PreprocConfig(**preproc)
            tcfg = TrainerConfig(learning_rates=lrs, **trainer)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from exc
        return cls(env=env, env_overrides=env_over, preproc=pre, model=spec, trainer=tcfg, **top)

    # -- files
    def to_json(self) -> str:
        return json.dumps(self.to_flat(), indent=2, sort_keys=True)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path


def resolve(keys: Optional[dict] = None, preset: Optional[str] = None) -> RunConfig:
    """Build a config from an optional preset plus explicit flat keys.

    Explicit keys win over the preset; each one that changes a preset value is
    recorded in ``audit``.
    """
    keys = dict(keys or {})
    preset = keys.pop("preset", None) if preset is None else preset
    flat: dict = {}
    audit: List[str] = list(keys.pop("audit", []))
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        flat.update(PRESETS[preset].keys())
        flat["preset"] = preset
        for k, v in keys.items():
            if k in flat and flat[k] != v:
                audit.append(f"override {k}: preset {flat[k]!r} -> {v!r}")
    flat.update(keys)
    flat["audit"] = audit
    mt = flat.get("model.type", HYBRID)
    if mt not in MODEL_TYPES:
        raise ConfigurationError(f"model.type: unknown model type {mt!r}")
    # learning-rate keys of other model types are dropped when the type changes
    flat = {k: v for k, v in flat.items() if not k.startswith("trainer.lr.") or k[len("trainer.lr."):] in GROUPS[mt]}
    return RunConfig.from_flat(flat)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return resolve(data)


def parse_override(text: str):
    """``key=value`` with the value parsed as JSON when possible."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value

