"""Miniature pixel environments and the observation pipeline."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .minibreakout import MiniBreakout, MiniBreakoutSpec
from .minipong import ACTION_NAMES, LEFT, NOOP, RIGHT, MiniPong, MiniPongSpec
from .preprocessing import (
    FrameStacker,
    LazyFrames,
    PixelPipeline,
    PreprocConfig,
    downsample,
    grayscale,
    skip_and_pool,
    stack,
    stack_batch,
    to_uint8,
)

ENVIRONMENTS = {
    "mini-pong": (MiniPong, MiniPongSpec),
    "mini-breakout": (MiniBreakout, MiniBreakoutSpec),
}


def spec_sheet(name: str) -> dict:
    """Default parameters of an environment as shipped in its JSON spec sheet."""
    if name not in ENVIRONMENTS:
        raise ConfigurationError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    text = resources.files("hybridqrl.data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def make_env(name: str, seed: int = 0, **overrides):
    """Raw environment from its spec sheet plus keyword overrides."""
    cls, spec_cls = ENVIRONMENTS.get(name, (None, None))
    if cls is None:
        raise ConfigurationError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    params = spec_sheet(name)
    unknown = set(overrides) - set(params)
    if unknown:
        raise ConfigurationError(f"unknown {name} parameters: {sorted(unknown)}")
    params.update(overrides)
    if params.get("reward_table") is not None:
        params["reward_table"] = tuple(params["reward_table"])
    return cls(spec_cls(**params), seed=seed)


def make_pipeline(name: str, seed: int = 0, preproc: PreprocConfig = PreprocConfig(), **overrides) -> PixelPipeline:
    return PixelPipeline(make_env(name, seed, **overrides), preproc)


def trajectory_frames(env, actions) -> np.ndarray:
    frames = [env.reset()]
    for a in actions:
        frame, _, terminal = env.step(a)
        frames.append(frame)
        if terminal:
            break
    return np.stack(frames)


def trajectory_hash(frames: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(frames).tobytes()).hexdigest()


def dump_trajectory(frames: np.ndarray, path) -> Path:
    path = Path(path)
    np.savez_compressed(path, frames=frames, sha256=trajectory_hash(frames))
    return path


def load_trajectory(path) -> np.ndarray:
    with np.load(path) as data:
        return data["frames"]


__all__ = [
    "ACTION_NAMES",
    "ENVIRONMENTS",
    "FrameStacker",
    "LEFT",
    "LazyFrames",
    "MiniBreakout",
    "MiniBreakoutSpec",
    "MiniPong",
    "MiniPongSpec",
    "NOOP",
    "PixelPipeline",
    "PreprocConfig",
    "RIGHT",
    "downsample",
    "dump_trajectory",
    "grayscale",
    "load_trajectory",
    "make_env",
    "make_pipeline",
    "skip_and_pool",
    "spec_sheet",
    "stack",
    "stack_batch",
    "to_uint8",
    "trajectory_frames",
    "trajectory_hash",
]
