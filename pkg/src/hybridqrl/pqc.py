"""Layered data re-uploading circuit: forward pass and exact gradients.

One layer is a variational block (RX, RY, RZ on every qubit, in that
order), a ring of CZ gates, and an RX encoding block. ``n_layers`` such
layers are followed by one final variational block; every qubit is then
measured in the Z basis.

Parameter layout (flat ``theta``): block-major, then qubit, then axis
(RX, RY, RZ). Index of ``(block, qubit, axis)`` is ``(block*n + qubit)*3 + axis``.
Features are consumed layer by layer: feature ``layer*n + qubit`` drives the
encoding gate on ``qubit`` in ``layer``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from . import qsim
from .errors import ArgumentError, ConfigurationError, NumericalError

INIT_STD = 0.01 * np.pi
SHIFT = np.pi / 2


@dataclass(frozen=True)
class PqcArchitecture:
    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_qubits > qsim.MAX_QUBITS:
            raise ConfigurationError(f"n_qubits out of range: {self.n_qubits}")
        if self.n_layers < 1:
            raise ConfigurationError(f"n_layers must be positive: {self.n_layers}")

    @property
    def n_params(self) -> int:
        return 3 * self.n_qubits * (self.n_layers + 1)

    @property
    def n_features(self) -> int:
        return self.n_qubits * self.n_layers

    @property
    def n_encoding_gates(self) -> int:
        return sum(1 for op in self.program() if op[0] == "rot" and op[3] == "x")

    def entangling_pairs(self) -> List[Tuple[int, int]]:
        n = self.n_qubits
        if n == 1:
            return []
        if n == 2:
            # the ring would name (0, 1) twice and CZ is an involution
            return [(0, 1)]
        return [(q, q + 1) for q in range(n - 1)] + [(0, n - 1)]

    def program(self) -> list:
        """Gate program as a list of ``("rot", kind, qubit, source, index)`` / ``("cz", pairs)``."""
        ops = []
        n = self.n_qubits

        def variational(block):
            for q in range(n):
                for axis, kind in enumerate(qsim.ROTATIONS):
                    ops.append(("rot", kind, q, "theta", (block * n + q) * 3 + axis))

        for layer in range(self.n_layers):
            variational(layer)
            pairs = self.entangling_pairs()
            if pairs:
                ops.append(("cz", pairs))
            for q in range(n):
                ops.append(("rot", "RX", q, "x", layer * n + q))
        variational(self.n_layers)
        return ops

    def gates(self, theta, features) -> List[qsim.GateOp]:
        """Concrete ``GateOp`` list for one parameter/feature assignment."""
        out = []
        for op in self.program():
            if op[0] == "cz":
                out.extend(qsim.GateOp("CZ", target=t, control=c) for c, t in op[1])
            else:
                _, kind, q, src, idx = op
                angle = theta[idx] if src == "theta" else features[idx]
                out.append(qsim.GateOp(kind, target=q, angle=float(angle)))
        return out


@dataclass
class PqcGradient:
    d_theta: np.ndarray  # (n outputs, n_params)
    d_x: np.ndarray  # (n outputs, n_features)


def init_params(arch: PqcArchitecture, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    return rng.normal(0.0, INIT_STD, size=arch.n_params)


def _prepare(arch, theta, features):
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != arch.n_features:
        raise ArgumentError(f"features must have trailing size {arch.n_features}, got {x.shape}")
    if theta.shape[-1] != arch.n_params or theta.ndim > 2:
        raise ArgumentError(f"theta must have trailing size {arch.n_params}, got {theta.shape}")
    if theta.ndim == 2 and theta.shape[0] != x2.shape[0]:
        raise ArgumentError("per-row theta must match the feature batch size")
    return theta, x2, single


def _angle(theta, x, src, idx):
    if src == "x":
        return x[:, idx]
    return theta[idx] if theta.ndim == 1 else theta[:, idx]


@lru_cache(maxsize=None)
def _ring_signs(n_qubits: int, pairs: tuple) -> np.ndarray:
    return qsim.cz_signs(n_qubits, pairs)


def _cz_cache(arch):
    return _ring_signs(arch.n_qubits, tuple(arch.entangling_pairs()))


def _evolve(arch, theta, x) -> np.ndarray:
    n = arch.n_qubits
    psi = qsim.zero_states(n, x.shape[0])
    for op in arch.program():
        if op[0] == "cz":
            psi *= _cz_cache(arch)
        else:
            _, kind, q, src, idx = op
            qsim.rotate_batch(psi, n, kind, q, _angle(theta, x, src, idx))
    qsim.check_norm(psi)
    return psi


def pqc_forward(arch: PqcArchitecture, params, features) -> np.ndarray:
    """Qubit-wise <Z> outputs. ``features`` may be ``(n_features,)`` or ``(batch, n_features)``.

    ``params`` may also carry a leading batch axis matching ``features``.
    """
    theta, x, single = _prepare(arch, params, features)
    out = qsim.expectations_batch(_evolve(arch, theta, x), arch.n_qubits)
    return out[0] if single else out


# generator application per rotation kind; the adjoint sweep looks these up
_GENERATORS = {kind: (lambda psi, n, q, _k=kind: qsim.pauli_batch(psi, n, _k, q)) for kind in qsim.ROTATIONS}


def pqc_vjp(arch: PqcArchitecture, params, features, upstream) -> Tuple[np.ndarray, np.ndarray]:
    """Adjoint-method vector-Jacobian product.

    For each row ``b`` computes the gradient of ``sum_o upstream[b, o] * <Z_o>``
    with respect to ``theta`` and the row's features. Returns per-row arrays
    ``(d_theta (batch, n_params), d_x (batch, n_features))``.
    """
    theta, x, _ = _prepare(arch, params, features)
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    n = arch.n_qubits
    if g.shape != (x.shape[0], n):
        raise ArgumentError(f"upstream must have shape {(x.shape[0], n)}, got {g.shape}")
    psi = _evolve(arch, theta, x)
    # lam = M psi with M = sum_o g_o Z_o (diagonal)
    lam = psi * (g @ qsim.z_signs(n).T)
    d_theta = np.zeros((x.shape[0], arch.n_params))
    d_x = np.zeros((x.shape[0], arch.n_features))
    cz = _cz_cache(arch)
    for op in reversed(arch.program()):
        if op[0] == "cz":
            psi *= cz
            lam *= cz
            continue
        _, kind, q, src, idx = op
        p_psi = _GENERATORS[kind](psi, n, q)
        # d<M>/d angle = 2 Re <lam| (-i/2) P |psi> = Im <lam|P|psi>
        grad = np.sum(np.conj(lam) * p_psi, axis=1).imag
        if src == "theta":
            d_theta[:, idx] = grad
        else:
            d_x[:, idx] = grad
        inv = -_angle(theta, x, src, idx)
        qsim.rotate_batch(psi, n, kind, q, inv)
        qsim.rotate_batch(lam, n, kind, q, inv)
    return d_theta, d_x


def pqc_grad_adjoint(arch: PqcArchitecture, params, features) -> PqcGradient:
    """Full Jacobian of all outputs via one batched adjoint sweep (one row per output)."""
    theta, x, _ = _prepare(arch, params, features)
    if x.shape[0] != 1 or theta.ndim != 1:
        raise ArgumentError("pqc_grad_adjoint takes a single instance")
    n = arch.n_qubits
    xs = np.repeat(x, n, axis=0)
    d_theta, d_x = pqc_vjp(arch, theta, xs, np.eye(n))
    return PqcGradient(d_theta, d_x)


def pqc_grad_shift(arch: PqcArchitecture, params, features) -> PqcGradient:
    """Full Jacobian by the two-term parameter-shift rule.

    Encoding angles are shifted the same way; each feature drives exactly one
    gate so no chain-rule sum is needed.
    """
    theta, x, _ = _prepare(arch, params, features)
    if x.shape[0] != 1 or theta.ndim != 1:
        raise ArgumentError("pqc_grad_shift takes a single instance")
    p, f = arch.n_params, arch.n_features
    rows = 2 * (p + f)
    thetas = np.repeat(theta[None, :], rows, axis=0)
    xs = np.repeat(x, rows, axis=0)
    k = np.arange(p)
    thetas[2 * k, k] += SHIFT
    thetas[2 * k + 1, k] -= SHIFT
    j = np.arange(f)
    xs[2 * p + 2 * j, j] += SHIFT
    xs[2 * p + 2 * j + 1, j] -= SHIFT
    vals = pqc_forward(arch, thetas, xs)
    diff = (vals[0::2] - vals[1::2]) / 2.0  # (p + f, n)
    return PqcGradient(diff[:p].T.copy(), diff[p:].T.copy())


def fit_sinusoid(angles, values) -> Tuple[float, float, float]:
    """Least-squares fit of ``a*sin(angle + b) + c``; returns ``(a, b, c)`` with ``a >= 0``."""
    angles = np.asarray(angles, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if angles.ndim != 1 or angles.shape != values.shape or angles.size < 3:
        raise ArgumentError("need at least 3 (angle, value) pairs")
    design = np.column_stack([np.sin(angles), np.cos(angles), np.ones_like(angles)])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-9 * sv[0]:
        raise NumericalError("sample angles do not determine a unique sinusoid")
    (alpha, beta, c), *_ = np.linalg.lstsq(design, values, rcond=None)
    # alpha sin + beta cos = a sin(angle + b)
    a = float(np.hypot(alpha, beta))
    b = float(np.arctan2(beta, alpha)) if a > 0 else 0.0
    return a, b, float(c)


def eval_sinusoid(coeffs, angles) -> np.ndarray:
    a, b, c = coeffs
    return a * np.sin(np.asarray(angles, dtype=np.float64) + b) + c
