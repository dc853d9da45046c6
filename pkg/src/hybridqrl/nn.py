"""Small numpy neural-network kernels with hand-written backward passes.

Tensors are plain ``numpy`` arrays in NHWC layout for images and
``(batch, features)`` for dense activations. Arithmetic runs in float32 by
default; ``float64_mode()`` switches newly created layers to float64 for
gradient checking.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, StateError

ACTIVATIONS = ("linear", "relu", "tanh_pi")

_dtype = np.float32


def default_dtype():
    return _dtype


def set_default_dtype(dtype) -> None:
    global _dtype
    _dtype = np.dtype(dtype).type


@contextlib.contextmanager
def float64_mode():
    prev = _dtype
    set_default_dtype(np.float64)
    try:
        yield
    finally:
        set_default_dtype(prev)


# ---------------------------------------------------------------------------
# activations


def tanh_pi(x):
    # tanh saturates to exactly 1 for large |x|; clip to the largest value below pi in x's precision
    y = np.pi * np.tanh(x)
    inside = np.nextafter(np.asarray(np.pi, dtype=np.result_type(y)), 0)
    return np.clip(y, -inside, inside).astype(np.result_type(y), copy=False)


def tanh_pi_grad(x):
    t = np.tanh(x)
    return np.pi * (1.0 - t * t)


def activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return pre
    if activation == "relu":
        return np.maximum(pre, 0)
    if activation == "tanh_pi":
        return (np.pi * np.tanh(pre)).astype(pre.dtype, copy=False)
    raise ArgumentError(f"unknown activation {activation!r}")


def activation_backward(grad: np.ndarray, pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "linear":
        return grad
    if activation == "relu":
        return np.where(pre > 0, grad, 0).astype(grad.dtype, copy=False)
    if activation == "tanh_pi":
        return (grad * tanh_pi_grad(pre)).astype(grad.dtype, copy=False)
    raise ArgumentError(f"unknown activation {activation!r}")


# ---------------------------------------------------------------------------
# layer specs


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    if kernel > size:
        raise ArgumentError(f"kernel {kernel} larger than input {size}")
    return (size - kernel) // stride + 1


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int
    activation: str = "relu"

    def output_shape(self, height: int, width: int) -> tuple:
        return (
            conv_output_size(height, self.kernel_size, self.stride),
            conv_output_size(width, self.kernel_size, self.stride),
            self.out_channels,
        )

    @property
    def n_params(self) -> int:
        return self.kernel_size**2 * self.in_channels * self.out_channels + self.out_channels


@dataclass(frozen=True)
class DenseLayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ArgumentError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


# the convolutional feature extractor used by both Q-networks
REFERENCE_CONV_STACK = (
    ConvLayerSpec(4, 32, 8, 4),
    ConvLayerSpec(32, 64, 4, 2),
    ConvLayerSpec(64, 64, 3, 1),
)


def init_weights(fan_in: int, fan_out: int, shape, activation: str, rng, dtype) -> np.ndarray:
    """He-uniform for ReLU layers, Glorot-uniform otherwise."""
    if activation == "relu":
        limit = np.sqrt(6.0 / fan_in)
    else:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# functional kernels


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    # windows: (B, H-k+1, W-k+1, C, k, k) -> strided -> (B, Ho, Wo, k, k, C)
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int, activation: str = "relu"):
    """Valid (unpadded) 2-D convolution on NHWC input.

    ``weights`` has shape ``(k, k, in_channels, out_channels)``. Returns the
    activated output and a cache for ``conv2d_backward``.
    """
    if x.ndim != 4:
        raise ArgumentError(f"conv input must be NHWC, got shape {x.shape}")
    k, k2, cin, cout = weights.shape
    if k != k2 or x.shape[3] != cin:
        raise ArgumentError(f"input channels {x.shape[3]} do not match weights {weights.shape}")
    b, h, w, _ = x.shape
    ho, wo = conv_output_size(h, k, stride), conv_output_size(w, k, stride)
    cols = _im2col(x, k, stride).reshape(b * ho * wo, k * k * cin)
    pre = (cols @ weights.reshape(k * k * cin, cout) + bias).reshape(b, ho, wo, cout)
    cache = {"cols": cols, "pre": pre, "x_shape": x.shape, "weights": weights, "stride": stride, "activation": activation}
    return activate(pre, activation), cache


def conv2d_backward(grad_out: np.ndarray, cache: Optional[dict], need_input_grad: bool = True):
    """Returns ``(grad_input, grad_weights, grad_bias)``; ``grad_input`` is None if not requested."""
    if cache is None:
        raise StateError("conv2d_backward called without a forward cache")
    weights, stride = cache["weights"], cache["stride"]
    k, _, cin, cout = weights.shape
    b, h, w, _ = cache["x_shape"]
    g = activation_backward(grad_out, cache["pre"], cache["activation"])
    _, ho, wo, _ = g.shape
    g2 = g.reshape(b * ho * wo, cout)
    grad_w = (cache["cols"].T @ g2).reshape(weights.shape)
    grad_b = g2.sum(axis=0)
    if not need_input_grad:
        return None, grad_w, grad_b
    gcols = (g2 @ weights.reshape(k * k * cin, cout).T).reshape(b, ho, wo, k, k, cin)
    grad_x = np.zeros(cache["x_shape"], dtype=g.dtype)
    for i in range(k):
        for j in range(k):
            grad_x[:, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride, :] += gcols[:, :, :, i, j, :]
    return grad_x, grad_w, grad_b


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, activation: str = "linear"):
    if x.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ArgumentError(f"dense input shape {x.shape} does not match weights {weights.shape}")
    pre = x @ weights + bias
    return activate(pre, activation), {"x": x, "pre": pre, "weights": weights, "activation": activation}


def dense_backward(grad_out: np.ndarray, cache: Optional[dict]):
    """Returns ``(grad_input, grad_weights, grad_bias)``."""
    if cache is None:
        raise StateError("dense_backward called without a forward cache")
    g = activation_backward(grad_out, cache["pre"], cache["activation"])
    return g @ cache["weights"].T, cache["x"].T @ g, g.sum(axis=0)


# ---------------------------------------------------------------------------
# stateful layers


class Conv2D:
    def __init__(self, spec: ConvLayerSpec, rng=None, dtype=None):
        self.spec = spec
        dtype = dtype or default_dtype()
        rng = np.random.default_rng(rng)
        k = spec.kernel_size
        fan_in, fan_out = k * k * spec.in_channels, k * k * spec.out_channels
        self.params = {
            "W": init_weights(fan_in, fan_out, (k, k, spec.in_channels, spec.out_channels), spec.activation, rng, dtype),
            "b": np.zeros(spec.out_channels, dtype=dtype),
        }
        self.grads: Dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x):
        out, self._cache = conv2d_forward(x, self.params["W"], self.params["b"], self.spec.stride, self.spec.activation)
        return out

    def backward(self, grad_out, need_input_grad=True):
        gx, gw, gb = conv2d_backward(grad_out, self._cache, need_input_grad)
        self.grads = {"W": gw, "b": gb}
        return gx


class Dense:
    def __init__(self, spec: DenseLayerSpec, rng=None, dtype=None):
        self.spec = spec
        dtype = dtype or default_dtype()
        rng = np.random.default_rng(rng)
        self.params = {
            "W": init_weights(spec.in_dim, spec.out_dim, (spec.in_dim, spec.out_dim), spec.activation, rng, dtype),
            "b": np.zeros(spec.out_dim, dtype=dtype),
        }
        self.grads: Dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x):
        out, self._cache = dense_forward(x, self.params["W"], self.params["b"], self.spec.activation)
        return out

    def backward(self, grad_out):
        gx, gw, gb = dense_backward(grad_out, self._cache)
        self.grads = {"W": gw, "b": gb}
        return gx


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: List[np.ndarray], grads: List[np.ndarray], state: AdamState, learning_rate: float) -> None:
    """One bias-corrected Adam update applied in place to ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ArgumentError("params, grads and optimizer state must have equal length")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ArgumentError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p -= (learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)


@dataclass
class Adam:
    """Adam over named parameter groups, each with its own learning rate."""

    groups: Dict[str, List[np.ndarray]]
    learning_rates: Dict[str, float]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: Dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self):
        missing = set(self.groups) - set(self.learning_rates)
        if missing:
            raise ArgumentError(f"no learning rate for groups {sorted(missing)}")
        for name, params in self.groups.items():
            self.states[name] = AdamState.zeros_like(params, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def step(self, grads: Dict[str, List[np.ndarray]]) -> None:
        for name in self.groups:
            adam_step(self.groups[name], grads[name], self.states[name], self.learning_rates[name])
