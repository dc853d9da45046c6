"""Diagnostics: Q-value surfaces over two head inputs, latent-feature
histograms and trailing-average return curves.

Surfaces can be taken in two input spaces:

* ``"conv"``: the flattened conv-stack output (the input of the
  pre-processing / bottleneck layer);
* ``"latent"``: the output of that layer, i.e. the PQC inputs of a hybrid
  net or the hidden-layer inputs of a classical one.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArchitectureError, ArgumentError
from .model import QNetwork
from .rl import select_action

SPACES = ("conv", "latent")
CSV_FLOAT = "%.17g"  # round-trips float64 exactly


# ---------------------------------------------------------------------------
# conv-output logging and truncated heads


@dataclass
class ConvOutputLog:
    """Flattened conv outputs for every step of one episode."""

    vectors: np.ndarray
    observations: Optional[np.ndarray] = None
    episode_return: float = 0.0

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors))
        if self.observations is not None and len(self.observations) != len(self.vectors):
            raise ArgumentError("one observation per logged vector required")

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def mean(self) -> np.ndarray:
        return self.vectors.astype(np.float64).mean(axis=0)

    def save(self, path) -> Path:
        path = Path(path)
        extra = {} if self.observations is None else {"observations": self.observations}
        with open(path, "wb") as fh:
            np.savez_compressed(fh, vectors=self.vectors, episode_return=self.episode_return, **extra)
        return path

    @classmethod
    def load(cls, path) -> "ConvOutputLog":
        with np.load(path) as data:
            obs = data["observations"] if "observations" in data else None
            return cls(data["vectors"], obs, float(data["episode_return"]))


def log_episode(net: QNetwork, env, epsilon: float = 0.0, seed: int = 0, max_steps: Optional[int] = None,
                keep_observations: bool = False) -> ConvOutputLog:
    """Play one episode with an epsilon-greedy policy, recording conv outputs per step."""
    rng = np.random.default_rng(seed)
    obs = env.reset()
    vectors, frames, total, steps = [], [], 0.0, 0
    while True:
        x = np.asarray(obs)
        vectors.append(net.conv_features(x)[0].copy())
        if keep_observations:
            frames.append(x)
        obs, reward, terminal = env.step(select_action(net, x, epsilon, rng))
        total += reward
        steps += 1
        if terminal or getattr(env, "truncated", False) or (max_steps is not None and steps >= max_steps):
            break
    return ConvOutputLog(np.stack(vectors), np.stack(frames) if keep_observations else None, total)


class Head:
    """Copy of a network without its conv stack."""

    def __init__(self, net: QNetwork):
        if not hasattr(net, "latent_head_forward"):
            raise ArchitectureError(f"{type(net).__name__} has no separable head")
        self.net = net.clone()
        self.spec = net.spec

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def n_inputs(self, space: str = "conv") -> int:
        _check_space(space)
        return self.spec.conv_output_dim if space == "conv" else self.spec.latent

    def forward(self, features) -> np.ndarray:
        return self.net.head_forward(np.atleast_2d(features))

    def forward_latent(self, z) -> np.ndarray:
        return self.net.latent_head_forward(np.atleast_2d(z))

    def latent(self, features) -> np.ndarray:
        return self.net.latent(np.atleast_2d(features))

    def evaluate(self, points, space: str = "conv") -> np.ndarray:
        _check_space(space)
        return self.forward(points) if space == "conv" else self.forward_latent(points)


def truncate_model(net: QNetwork) -> Head:
    return Head(net)


def _check_space(space: str) -> None:
    if space not in SPACES:
        raise ArgumentError(f"space must be one of {SPACES}, got {space!r}")


# ---------------------------------------------------------------------------
# surfaces


@dataclass
class SurfaceGrid:
    i: int
    j: int
    range_i: Tuple[float, float]
    range_j: Tuple[float, float]
    resolution: int
    space: str
    q: np.ndarray  # (resolution, resolution, n_actions); axis 0 follows x_i

    @property
    def xs_i(self) -> np.ndarray:
        return np.linspace(self.range_i[0], self.range_i[1], self.resolution)

    @property
    def xs_j(self) -> np.ndarray:
        return np.linspace(self.range_j[0], self.range_j[1], self.resolution)

    @property
    def n_actions(self) -> int:
        return self.q.shape[2]

    def points(self) -> np.ndarray:
        """Grid coordinates, one row per cell (x_i major, x_j minor)."""
        gi, gj = np.meshgrid(self.xs_i, self.xs_j, indexing="ij")
        return np.column_stack([gi.ravel(), gj.ravel()])

    def rows(self) -> np.ndarray:
        q = self.q.astype(np.float64).reshape(-1, self.n_actions)
        return np.column_stack([self.points(), q])

    def columns(self) -> List[str]:
        return ["x_i", "x_j"] + [f"q_{a}" for a in range(self.n_actions)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.rows(), fmt=CSV_FLOAT, delimiter=",", header=",".join(self.columns()), comments="")
        return buf.getvalue()

    def write(self, path, **manifest_extra) -> Tuple[Path, Path]:
        path = Path(path)
        path.write_text(self.to_csv())
        mpath = path.with_suffix(".json")
        mpath.write_text(json.dumps(self.manifest(**manifest_extra), indent=2, sort_keys=True) + "\n")
        return path, mpath

    def manifest(self, **extra) -> dict:
        out = {
            "indices": [self.i, self.j],
            "ranges": [list(self.range_i), list(self.range_j)],
            "resolution": self.resolution,
            "space": self.space,
            "columns": self.columns(),
            "schema_version": 1,
        }
        out.update(extra)
        return out


def read_surface_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = next(csv.reader(fh))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if header[:2] != ["x_i", "x_j"]:
        raise ArgumentError(f"{path} is not a surface CSV")
    return data


def q_surface(head: Head, mean_vector, i: int, j: int, ranges, resolution: int, space: str = "conv") -> SurfaceGrid:
    """Q-values on a ``resolution x resolution`` grid over inputs ``i`` and ``j``;
    every other input is held at ``mean_vector``."""
    _check_space(space)
    base = np.asarray(mean_vector, dtype=np.float64)
    n = head.n_inputs(space)
    if base.shape != (n,):
        raise ArgumentError(f"mean vector needs {n} entries, got shape {base.shape}")
    if i == j:
        raise ArgumentError("feature indices must differ")
    if not (0 <= i < n and 0 <= j < n):
        raise ArgumentError(f"feature indices must lie in [0, {n})")
    if resolution < 2:
        raise ArgumentError("resolution must be >= 2")
    (lo_i, hi_i), (lo_j, hi_j) = ranges
    grid = SurfaceGrid(i, j, (float(lo_i), float(hi_i)), (float(lo_j), float(hi_j)), resolution, space,
                       np.empty((0, 0, 0)))
    pts = grid.points()
    inputs = np.tile(base, (len(pts), 1))
    inputs[:, i] = pts[:, 0]
    inputs[:, j] = pts[:, 1]
    q = head.evaluate(inputs, space)
    grid.q = np.asarray(q).reshape(resolution, resolution, -1)
    return grid


def pick_features(n_inputs: int, seed: int) -> Tuple[int, int]:
    """Two distinct input indices chosen by a seeded generator."""
    if n_inputs < 2:
        raise ArgumentError("need at least two inputs")
    i, j = np.random.default_rng(seed).choice(n_inputs, size=2, replace=False)
    return int(i), int(j)


def auto_ranges(vectors, i: int, j: int, expand: float = 1.0):
    """Min/max of features ``i`` and ``j`` over logged vectors, optionally widened
    about the centre by ``expand``."""
    v = np.asarray(vectors, dtype=np.float64)
    out = []
    for k in (i, j):
        lo, hi = float(v[:, k].min()), float(v[:, k].max())
        c, half = (lo + hi) / 2, (hi - lo) / 2 * expand
        out.append((c - half, c + half) if expand != 1.0 else (lo, hi))
    return tuple(out)


def second_differences(values, axis: int = 0) -> np.ndarray:
    return np.diff(np.asarray(values, dtype=np.float64), n=2, axis=axis)


# ---------------------------------------------------------------------------
# return curves


def smooth_returns(returns: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what is available."""
    if window < 1:
        raise ArgumentError("window must be >= 1")
    r = np.asarray(returns, dtype=np.float64)
    n = r.size
    if n == 0:
        return r
    # averaging offsets from the newest return keeps window 1 and constant runs exact
    acc = np.zeros(n)
    for d in range(1, min(window, n)):
        acc[d:] += r[: n - d] - r[d:]
    counts = np.minimum(np.arange(1, n + 1), window)
    return r + acc / counts


def trailing_mean(returns: Sequence[float], window: int) -> float:
    r = np.asarray(returns, dtype=np.float64)
    if r.size == 0:
        return float("nan")
    return float(r[-window:].mean())


def read_returns(log_path) -> np.ndarray:
    """Episode returns (env units) from a training JSONL log."""
    out = []
    with open(log_path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("type") == "episode":
                out.append(rec["return_env_units"])
    return np.asarray(out, dtype=np.float64)


# ---------------------------------------------------------------------------
# latent-feature histograms

DEFAULT_BINS = np.linspace(-4 * np.pi, 4 * np.pi, 65)


@dataclass
class FeatureHistogram:
    step: int
    n_samples: int
    edges: np.ndarray
    counts: np.ndarray
    underflow: int
    overflow: int
    frac_within_pi: float
    frac_within_2pi: float
    mean: float
    std: float

    def summary(self) -> dict:
        return {
            "step": self.step,
            "n_samples": self.n_samples,
            "frac_within_pi": self.frac_within_pi,
            "frac_within_2pi": self.frac_within_2pi,
            "underflow": self.underflow,
            "overflow": self.overflow,
            "mean": self.mean,
            "std": self.std,
        }


def feature_histogram(step: int, values, edges=DEFAULT_BINS) -> FeatureHistogram:
    """Histogram of all latent values in one snapshot; out-of-range samples are
    counted in ``underflow`` / ``overflow`` so every sample is accounted for."""
    v = np.asarray(values, dtype=np.float64).ravel()
    edges = np.asarray(edges, dtype=np.float64)
    counts, _ = np.histogram(v, bins=edges)
    under = int((v < edges[0]).sum())
    over = int((v > edges[-1]).sum())
    n = v.size
    return FeatureHistogram(
        step=int(step),
        n_samples=n,
        edges=edges,
        counts=counts,
        underflow=under,
        overflow=over,
        frac_within_pi=float(np.mean(np.abs(v) <= np.pi)) if n else 0.0,
        frac_within_2pi=float(np.mean(np.abs(v) <= 2 * np.pi)) if n else 0.0,
        mean=float(v.mean()) if n else 0.0,
        std=float(v.std()) if n else 0.0,
    )


@dataclass
class FeatureHistogramLogger:
    """Training hook: pass as ``on_features`` to collect one histogram per snapshot."""

    edges: np.ndarray = field(default_factory=lambda: DEFAULT_BINS.copy())
    snapshots: List[FeatureHistogram] = field(default_factory=list)
    samples: List[np.ndarray] = field(default_factory=list)
    keep_samples: bool = False

    def __call__(self, step: int, latent: np.ndarray) -> None:
        self.snapshots.append(feature_histogram(step, latent, self.edges))
        if self.keep_samples:
            self.samples.append(np.asarray(latent, dtype=np.float64))

    def summary_csv(self) -> str:
        buf = io.StringIO()
        cols = ["step", "n_samples", "frac_within_pi", "frac_within_2pi", "underflow", "overflow", "mean", "std"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for h in self.snapshots:
            s = h.summary()
            w.writerow([repr(s[c]) if isinstance(s[c], float) else s[c] for c in cols])
        return buf.getvalue()

    def counts_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "bin_lo", "bin_hi", "count"])
        for h in self.snapshots:
            for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                w.writerow([h.step, repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()
