"""Q-networks: the hybrid conv -> linear -> PQC -> linear model and the
classical reference (with or without a bottleneck layer).

Both share one interface: ``forward`` / ``backward`` over a batch of NHWC
observations, named parameter groups with separate learning rates,
``clone`` / ``sync_from`` for target networks, and a serialisable ``NetSpec``.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import nn, pqc
from .errors import ArchitectureError, ArgumentError, ConfigurationError, StateError

HYBRID = "hybrid"
CLASSICAL = "classical"
UNCONSTRAINED = "classical-unconstrained"
MODEL_TYPES = (HYBRID, CLASSICAL, UNCONSTRAINED)

GROUPS = {
    HYBRID: ("conv", "preproc", "pqc", "postproc"),
    CLASSICAL: ("conv", "bottleneck", "hidden", "out"),
    UNCONSTRAINED: ("conv", "hidden", "out"),
}


@dataclass(frozen=True)
class NetSpec:
    """Everything needed to rebuild a network with freshly initialised weights."""

    model_type: str = HYBRID
    n_actions: int = 3
    input_shape: Tuple[int, int, int] = (84, 84, 4)
    conv_stack: Tuple[nn.ConvLayerSpec, ...] = nn.REFERENCE_CONV_STACK
    n_qubits: int = 4
    n_layers: int = 4
    latent_dim: Optional[int] = None  # classical bottleneck width; defaults to n_qubits * n_layers
    hidden_dim: int = 512
    preproc_activation: str = "linear"
    dtype: str = "float32"

    def __post_init__(self):
        if self.model_type not in MODEL_TYPES:
            raise ConfigurationError(f"unknown model type {self.model_type!r}")
        if self.preproc_activation not in ("linear", "tanh_pi"):
            raise ConfigurationError(f"preproc activation must be linear or tanh_pi, got {self.preproc_activation!r}")
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        stack = tuple(s if isinstance(s, nn.ConvLayerSpec) else nn.ConvLayerSpec(**s) for s in self.conv_stack)
        object.__setattr__(self, "conv_stack", stack)
        if stack and stack[0].in_channels != self.input_shape[2]:
            raise ConfigurationError("first conv layer channels do not match the input")
        for a, b in zip(stack, stack[1:]):
            if a.out_channels != b.in_channels:
                raise ConfigurationError("conv stack channel counts do not chain")

    @property
    def latent(self) -> int:
        if self.model_type == HYBRID:
            return self.n_qubits * self.n_layers
        return self.latent_dim if self.latent_dim is not None else self.n_qubits * self.n_layers

    @property
    def conv_output_dim(self) -> int:
        h, w, c = self.input_shape
        for s in self.conv_stack:
            h, w, c = s.output_shape(h, w)
        return h * w * c

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["conv_stack"] = [asdict(s) for s in self.conv_stack]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        d = dict(d)
        if "conv_stack" in d:
            d["conv_stack"] = tuple(s if isinstance(s, nn.ConvLayerSpec) else nn.ConvLayerSpec(**s) for s in d["conv_stack"])
        if "input_shape" in d:
            d["input_shape"] = tuple(d["input_shape"])
        return cls(**d)


TINY_CONV_STACK = (nn.ConvLayerSpec(1, 4, 3, 2),)


def tiny_spec(model_type: str = HYBRID, **kw) -> NetSpec:
    """Downscaled 8x8x1 network with a single conv layer, used for gradient checks."""
    base = dict(model_type=model_type, input_shape=(8, 8, 1), conv_stack=TINY_CONV_STACK, n_qubits=2, n_layers=1, hidden_dim=8, n_actions=3)
    base.update(kw)
    return NetSpec(**base)


class QNetwork:
    """Common machinery; subclasses build ``self.head`` and implement the head passes."""

    def __init__(self, spec: NetSpec, seed=None):
        self.spec = spec
        self.dtype = np.dtype(spec.dtype).type
        rng = np.random.default_rng(seed)
        self.conv = [nn.Conv2D(s, rng, self.dtype) for s in spec.conv_stack]
        self._build_head(rng)
        self._conv_out_shape = None

    # -- subclass hooks
    def _build_head(self, rng):
        raise NotImplementedError

    def head_forward(self, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def head_backward(self, grad_q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def named_params(self) -> List[Tuple[str, str, np.ndarray]]:
        raise NotImplementedError

    # -- shared
    def _prepare_obs(self, obs) -> np.ndarray:
        obs = np.asarray(obs)
        if obs.ndim == 3:
            obs = obs[None]
        if obs.shape[1:] != self.spec.input_shape:
            raise ArgumentError(f"observation shape {obs.shape[1:]} does not match {self.spec.input_shape}")
        if obs.dtype == np.uint8:
            return obs.astype(self.dtype) * self.dtype(1.0 / 255.0)
        return obs.astype(self.dtype, copy=False)

    def conv_features(self, obs) -> np.ndarray:
        """Flattened conv-stack output, shape ``(batch, conv_output_dim)``."""
        x = self._prepare_obs(obs)
        for layer in self.conv:
            x = layer.forward(x)
        self._conv_out_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def forward(self, obs) -> np.ndarray:
        return self.head_forward(self.conv_features(obs))

    def q_values(self, obs) -> np.ndarray:
        """Q-values for a single observation (``(H, W, C)``) or a batch."""
        obs = np.asarray(obs)
        q = self.forward(obs)
        return q[0] if obs.ndim == 3 else q

    def backward(self, grad_q: np.ndarray) -> Dict[str, List[np.ndarray]]:
        """Gradients of ``sum(grad_q * Q)`` for every parameter group (summed over the batch)."""
        if self._conv_out_shape is None:
            raise StateError("backward called before forward")
        g = self.head_backward(np.asarray(grad_q, dtype=self.dtype))
        g = g.reshape(self._conv_out_shape)
        for i in reversed(range(len(self.conv))):
            g = self.conv[i].backward(g, need_input_grad=i > 0)
        return self.gradients()

    def gradients(self) -> Dict[str, List[np.ndarray]]:
        grads = {name: [] for name in self.group_names}
        for group, name, _ in self.named_params():
            grads[group].append(self._grad_of(group, name))
        return grads

    def _grad_of(self, group: str, name: str) -> np.ndarray:
        if group == "conv":
            idx, pname = name.split(".")
            return self.conv[int(idx)].grads[pname]
        return self._head_grad(group, name)

    def _head_grad(self, group, name):
        raise NotImplementedError

    @property
    def group_names(self) -> Tuple[str, ...]:
        return GROUPS[self.spec.model_type]

    def param_groups(self) -> Dict[str, List[np.ndarray]]:
        groups = {name: [] for name in self.group_names}
        for group, _, arr in self.named_params():
            groups[group].append(arr)
        return groups

    def group_sizes(self) -> Dict[str, int]:
        return {g: int(sum(a.size for a in arrs)) for g, arrs in self.param_groups().items()}

    def n_params(self) -> int:
        return sum(self.group_sizes().values())

    def clone(self) -> "QNetwork":
        twin = copy.deepcopy(self)
        twin._drop_caches()
        return twin

    def sync_from(self, other: "QNetwork") -> None:
        """Copy every parameter of ``other`` into this network (target-network update)."""
        if other.spec != self.spec:
            raise ArchitectureError("cannot sync networks with different architectures")
        for (_, _, dst), (_, _, src) in zip(self.named_params(), other.named_params()):
            dst[...] = src

    def _drop_caches(self):
        self._conv_out_shape = None
        for layer in self.conv:
            layer._cache = None


class HybridQNet(QNetwork):
    """conv stack -> dense pre-processing (n*l, linear) -> PQC -> dense post-processing."""

    def _build_head(self, rng):
        s = self.spec
        self.arch = pqc.PqcArchitecture(s.n_qubits, s.n_layers)
        self.preproc = nn.Dense(nn.DenseLayerSpec(s.conv_output_dim, self.arch.n_features, s.preproc_activation), rng, self.dtype)
        self.theta = pqc.init_params(self.arch, rng)
        self.postproc = nn.Dense(nn.DenseLayerSpec(s.n_qubits, s.n_actions, "linear"), rng, self.dtype)
        self.theta_grad = np.zeros_like(self.theta)
        self._latent = None

    def latent(self, features: np.ndarray) -> np.ndarray:
        return self.preproc.forward(np.asarray(features, dtype=self.dtype))

    def latent_head_forward(self, z):
        """Q-values from PQC inputs ``z`` (everything after the pre-processing layer)."""
        self._latent = np.asarray(z).astype(np.float64)
        expz = pqc.pqc_forward(self.arch, self.theta, self._latent)
        return self.postproc.forward(expz.astype(self.dtype))

    def head_forward(self, features):
        return self.latent_head_forward(self.latent(features))

    def head_backward(self, grad_q):
        if self._latent is None:
            raise StateError("backward called before forward")
        g_exp = self.postproc.backward(grad_q)
        d_theta, d_x = pqc.pqc_vjp(self.arch, self.theta, self._latent, g_exp.astype(np.float64))
        self.theta_grad = d_theta.sum(axis=0)
        return self.preproc.backward(d_x.astype(self.dtype))

    def named_params(self):
        out = []
        for i, layer in enumerate(self.conv):
            out += [("conv", f"{i}.W", layer.params["W"]), ("conv", f"{i}.b", layer.params["b"])]
        out += [("preproc", "W", self.preproc.params["W"]), ("preproc", "b", self.preproc.params["b"])]
        out += [("pqc", "theta", self.theta)]
        out += [("postproc", "W", self.postproc.params["W"]), ("postproc", "b", self.postproc.params["b"])]
        return out

    def _head_grad(self, group, name):
        if group == "pqc":
            return self.theta_grad
        return {"preproc": self.preproc, "postproc": self.postproc}[group].grads[name]

    def _drop_caches(self):
        super()._drop_caches()
        self._latent = None
        self.preproc._cache = self.postproc._cache = None


class ClassicalQNet(QNetwork):
    """conv stack -> [linear bottleneck] -> dense ReLU hidden layer -> linear output."""

    def _build_head(self, rng):
        s = self.spec
        d = s.conv_output_dim
        if s.model_type == CLASSICAL:
            self.bottleneck = nn.Dense(nn.DenseLayerSpec(d, s.latent, s.preproc_activation), rng, self.dtype)
            d = s.latent
        else:
            self.bottleneck = None
        self.hidden = nn.Dense(nn.DenseLayerSpec(d, s.hidden_dim, "relu"), rng, self.dtype)
        self.out = nn.Dense(nn.DenseLayerSpec(s.hidden_dim, s.n_actions, "linear"), rng, self.dtype)

    def latent(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=self.dtype)
        return features if self.bottleneck is None else self.bottleneck.forward(features)

    def latent_head_forward(self, z):
        """Q-values from bottleneck outputs ``z`` (hidden layer onward)."""
        return self.out.forward(self.hidden.forward(np.asarray(z, dtype=self.dtype)))

    def head_forward(self, features):
        return self.latent_head_forward(self.latent(features))

    def head_backward(self, grad_q):
        g = self.hidden.backward(self.out.backward(grad_q))
        return g if self.bottleneck is None else self.bottleneck.backward(g)

    def _layers(self):
        layers = [("bottleneck", self.bottleneck)] if self.bottleneck is not None else []
        return layers + [("hidden", self.hidden), ("out", self.out)]

    def named_params(self):
        out = []
        for i, layer in enumerate(self.conv):
            out += [("conv", f"{i}.W", layer.params["W"]), ("conv", f"{i}.b", layer.params["b"])]
        for group, layer in self._layers():
            out += [(group, "W", layer.params["W"]), (group, "b", layer.params["b"])]
        return out

    def _head_grad(self, group, name):
        return dict(self._layers())[group].grads[name]

    def _drop_caches(self):
        super()._drop_caches()
        for _, layer in self._layers():
            layer._cache = None


def build_net(spec: NetSpec, seed=None) -> QNetwork:
    if spec.model_type == HYBRID:
        return HybridQNet(spec, seed)
    return ClassicalQNet(spec, seed)


def clone_target(net: QNetwork) -> QNetwork:
    return net.clone()


def sync_target(target: QNetwork, online: QNetwork) -> None:
    target.sync_from(online)


def q_forward(net: QNetwork, observation) -> np.ndarray:
    return net.q_values(observation)


def q_backward(net: QNetwork, observation, upstream_q_grads) -> Dict[str, List[np.ndarray]]:
    """Forward ``observation`` and return group gradients of ``sum(upstream * Q)``."""
    net.forward(observation)
    return net.backward(np.atleast_2d(upstream_q_grads))
