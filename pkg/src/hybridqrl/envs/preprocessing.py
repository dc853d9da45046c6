"""Observation pipeline: grayscale, area downsampling, frame skip with
max-pooling of the last frames, and frame stacking.

Pooled frames are quantised to uint8 (``round(255 * luma)``) before they are
stacked so that replay memory stays small; the networks rescale by 1/255.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ArgumentError, ConfigurationError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class PreprocConfig:
    target_size: int = 84
    skip: int = 4
    pool_last: int = 2
    stack: int = 4

    def __post_init__(self):
        if self.skip < 1 or self.pool_last < 1 or self.skip < self.pool_last:
            raise ConfigurationError("need skip >= pool_last >= 1")
        if self.stack < 1 or self.target_size < 1:
            raise ConfigurationError("stack and target_size must be positive")


def grayscale(frame: np.ndarray) -> np.ndarray:
    """Luminance in [0, 1] of an ``(H, W, 3)`` uint8 frame."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ArgumentError(f"expected an (H, W, 3) frame, got {frame.shape}")
    return (frame.astype(np.float64) @ LUMA_WEIGHTS) / 255.0


def _area_matrix(src: int, dst: int) -> np.ndarray:
    """Row i holds the overlap of source pixels with target cell i, normalised to sum 1."""
    edges_src = np.arange(src + 1) / src
    edges_dst = np.arange(dst + 1) / dst
    lo = np.maximum(edges_dst[:-1, None], edges_src[None, :-1])
    hi = np.minimum(edges_dst[1:, None], edges_src[None, 1:])
    m = np.clip(hi - lo, 0.0, None)
    return m / m.sum(axis=1, keepdims=True)


def downsample(frame: np.ndarray, target_size) -> np.ndarray:
    """Area-average resampling of a 2-D frame to ``target_size`` (int or (h, w))."""
    frame = np.asarray(frame, dtype=np.float64)
    th, tw = (target_size, target_size) if np.isscalar(target_size) else target_size
    h, w = frame.shape[:2]
    if th > h or tw > w:
        raise ArgumentError(f"cannot upscale {h}x{w} to {th}x{tw}")
    if (th, tw) == (h, w):
        return frame.copy()
    if h % th == 0 and w % tw == 0:
        fy, fx = h // th, w // tw
        return frame.reshape(th, fy, tw, fx).mean(axis=(1, 3))
    return _area_matrix(h, th) @ frame @ _area_matrix(w, tw).T


def to_uint8(gray: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(gray, 0.0, 1.0) * 255.0).astype(np.uint8)


def skip_and_pool(env, action: int, config: PreprocConfig = PreprocConfig()) -> Tuple[np.ndarray, float, bool]:
    """Repeat ``action`` for ``config.skip`` frames.

    Returns the elementwise max over the grayscale versions of the last
    ``pool_last`` frames, the summed reward and the terminal flag. If the
    episode ends early the window is cut short and the frames seen so far are
    pooled.
    """
    frames, total, terminal = [], 0.0, False
    for _ in range(config.skip):
        frame, reward, terminal = env.step(action)
        total += reward
        frames.append(frame)
        if terminal or getattr(env, "truncated", False):
            break
    tail = frames[-config.pool_last :]
    pooled = grayscale(tail[0])
    for f in tail[1:]:
        pooled = np.maximum(pooled, grayscale(f))
    return pooled, total, terminal


class LazyFrames:
    """Frame stack that shares its 2-D frames with neighbouring stacks.

    Converts to an ``(H, W, stack)`` uint8 array on demand; channel 0 is the
    oldest frame.
    """

    __slots__ = ("frames",)

    def __init__(self, frames):
        self.frames = tuple(frames)

    def __array__(self, dtype=None, copy=None):
        out = np.stack(self.frames, axis=-1)
        return out if dtype is None else out.astype(dtype)

    @property
    def shape(self):
        h, w = self.frames[0].shape
        return (h, w, len(self.frames))

    def __eq__(self, other):
        return np.array_equal(np.asarray(self), np.asarray(other))


def stack_batch(stacks) -> np.ndarray:
    """``(batch, H, W, C)`` uint8 array from a sequence of ``LazyFrames``."""
    first = stacks[0]
    out = np.empty((len(stacks),) + first.shape, dtype=np.uint8)
    for i, s in enumerate(stacks):
        for c, f in enumerate(s.frames):
            out[i, :, :, c] = f
    return out


class FrameStacker:
    def __init__(self, depth: int = 4):
        self.depth = depth
        self._frames = deque(maxlen=depth)

    def reset(self, frame: np.ndarray) -> LazyFrames:
        self._frames.clear()
        self._frames.extend([frame] * self.depth)
        return LazyFrames(self._frames)

    def push(self, frame: np.ndarray) -> LazyFrames:
        self._frames.append(frame)
        return LazyFrames(self._frames)


def stack(history, depth: int = 4) -> np.ndarray:
    """Stack pooled frames (oldest first) into ``(H, W, depth)``; short histories
    are padded by repeating the first frame."""
    history = list(history)[-depth:]
    if not history:
        raise ArgumentError("empty frame history")
    history = [history[0]] * (depth - len(history)) + history
    return np.stack(history, axis=-1)


class PixelPipeline:
    """Wraps a raw ``PixelEnv`` and emits ``(target, target, stack)`` uint8 observations."""

    def __init__(self, env, config: PreprocConfig = PreprocConfig()):
        self.env = env
        self.config = config
        self.stacker = FrameStacker(config.stack)
        self.n_actions = env.n_actions

    @property
    def truncated(self) -> bool:
        return bool(getattr(self.env, "truncated", False))

    def _finish(self, gray):
        return to_uint8(downsample(gray, self.config.target_size))

    def reset(self) -> LazyFrames:
        first = self.env.reset()
        return self.stacker.reset(self._finish(grayscale(first)))

    def step(self, action: int):
        pooled, reward, terminal = skip_and_pool(self.env, action, self.config)
        return self.stacker.push(self._finish(pooled)), reward, terminal
