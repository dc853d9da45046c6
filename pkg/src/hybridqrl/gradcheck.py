"""Oracle suites comparing every analytic derivative with an independent route.

Each check returns its maximum error; a suite wraps the checks of one scope
(``qsim``, ``pqc``, ``nn``, ``model``) and reports pass/fail per named check.
All suites run in 64-bit mode.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy.linalg import expm

from . import nn, pqc, qsim
from .model import CLASSICAL, HYBRID, UNCONSTRAINED, build_net, tiny_spec

SCOPES = ("qsim", "pqc", "nn", "model")
FD_STEP = 1e-5

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass
class CheckResult:
    scope: str
    name: str
    max_error: float
    tolerance: float
    seconds: float
    error: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = f" error={self.error}" if self.error else ""
        return f"{status} {self.scope}.{self.name} max_error={self.max_error:.3e} tol={self.tolerance:.1e} ({self.seconds:.2f}s){tail}"


def central_difference(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Jacobian ``d f / d x`` of shape ``f(x).shape + x.shape`` by central differences."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(f(x))
    jac = np.zeros(f0.shape + x.shape)
    flat = x.ravel()
    for k in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[k] += h
        xm[k] -= h
        d = (np.asarray(f(xp.reshape(x.shape))) - np.asarray(f(xm.reshape(x.shape)))) / (2 * h)
        jac.reshape(f0.shape + (-1,))[..., k] = d
    return jac


def relative_error(a, b, floor: float = 1e-6) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def scaled_error(a, b) -> float:
    """Max abs difference normalised by the largest reference entry."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-12)) if a.size else 0.0


# ---------------------------------------------------------------------------
# qsim


def dense_rotation(kind: str, qubit: int, n_qubits: int, angle: float) -> np.ndarray:
    """``exp(-i angle/2 P_qubit)`` on the full register via the matrix exponential."""
    p = PAULI[kind[1]]
    ops = [p if q == qubit else np.eye(2) for q in reversed(range(n_qubits))]
    return expm(-0.5j * angle * reduce(np.kron, ops))


def dense_cz(a: int, b: int, n_qubits: int) -> np.ndarray:
    idx = np.arange(2**n_qubits)
    both = ((idx >> a) & 1) & ((idx >> b) & 1)
    return np.diag(np.where(both, -1.0, 1.0)).astype(complex)


def dense_z(qubit: int, n_qubits: int) -> np.ndarray:
    ops = [PAULI["Z"] if q == qubit else np.eye(2) for q in reversed(range(n_qubits))]
    return reduce(np.kron, ops)


def random_gates(n_qubits: int, n_gates: int, rng) -> List[qsim.GateOp]:
    gates = []
    for _ in range(n_gates):
        if n_qubits > 1 and rng.random() < 0.25:
            a, b = rng.choice(n_qubits, size=2, replace=False)
            gates.append(qsim.GateOp("CZ", int(a), int(b)))
        else:
            kind = qsim.ROTATIONS[rng.integers(3)]
            gates.append(qsim.GateOp(kind, int(rng.integers(n_qubits)), angle=float(rng.uniform(-np.pi, np.pi))))
    return gates


def dense_unitary(gate: qsim.GateOp, n_qubits: int) -> np.ndarray:
    if gate.kind == "CZ":
        return dense_cz(gate.target, gate.control, n_qubits)
    return dense_rotation(gate.kind, gate.target, n_qubits, gate.angle)


def check_gate_matrices(rng, trials: int = 30) -> float:
    err = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 5))
        (gate,) = random_gates(n, 1, rng)
        err = max(err, np.abs(qsim.gate_matrix(gate, n) - dense_unitary(gate, n)).max())
    return err


def check_circuits(rng, trials: int = 20) -> float:
    """Simulator output and <Z> values against dense matrix products."""
    err = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 6))
        gates = random_gates(n, 12, rng)
        state = qsim.run_circuit(n, gates)
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1.0
        for g in gates:
            psi = dense_unitary(g, n) @ psi
        err = max(err, np.abs(state.amplitudes - psi).max())
        for q in range(n):
            ref = np.real(np.conj(psi) @ dense_z(q, n) @ psi)
            err = max(err, abs(qsim.expectation_z(state, q) - ref))
    return err


# ---------------------------------------------------------------------------
# pqc


def random_pqc(rng, max_qubits: int = 5, max_layers: int = 4):
    arch = pqc.PqcArchitecture(int(rng.integers(1, max_qubits + 1)), int(rng.integers(1, max_layers + 1)))
    theta = rng.uniform(-np.pi, np.pi, arch.n_params)
    x = rng.uniform(-np.pi, np.pi, arch.n_features)
    return arch, theta, x


def pqc_fd_jacobian(arch, theta, x, h: float = FD_STEP) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences, all shifted copies evaluated as one batch."""
    p, f = arch.n_params, arch.n_features
    rows = 2 * (p + f)
    thetas = np.repeat(theta[None, :], rows, axis=0)
    xs = np.repeat(x[None, :], rows, axis=0)
    k, j = np.arange(p), np.arange(f)
    thetas[2 * k, k] += h
    thetas[2 * k + 1, k] -= h
    xs[2 * p + 2 * j, j] += h
    xs[2 * p + 2 * j + 1, j] -= h
    vals = pqc.pqc_forward(arch, thetas, xs)
    d = (vals[0::2] - vals[1::2]) / (2 * h)
    return d[:p].T, d[p:].T


def check_shift_vs_fd(seed: int = 0, instances: int = 50) -> float:
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(instances):
        arch, theta, x = random_pqc(rng)
        g = pqc.pqc_grad_shift(arch, theta, x)
        dt, dx = pqc_fd_jacobian(arch, theta, x)
        err = max(err, np.abs(g.d_theta - dt).max(), np.abs(g.d_x - dx).max())
    return float(err)


def check_shift_vs_adjoint(seed: int = 0, instances: int = 50) -> float:
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(instances):
        arch, theta, x = random_pqc(rng)
        s = pqc.pqc_grad_shift(arch, theta, x)
        a = pqc.pqc_grad_adjoint(arch, theta, x)
        err = max(err, np.abs(s.d_theta - a.d_theta).max(), np.abs(s.d_x - a.d_x).max())
    return float(err)


def check_vjp_batch(seed: int = 0, instances: int = 10) -> float:
    """Batched VJP rows against upstream-weighted full Jacobians."""
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(instances):
        arch, theta, _ = random_pqc(rng)
        xs = rng.uniform(-np.pi, np.pi, (4, arch.n_features))
        up = rng.normal(size=(4, arch.n_qubits))
        dt, dx = pqc.pqc_vjp(arch, theta, xs, up)
        for b in range(4):
            s = pqc.pqc_grad_shift(arch, theta, xs[b])
            err = max(err, np.abs(up[b] @ s.d_theta - dt[b]).max(), np.abs(up[b] @ s.d_x - dx[b]).max())
    return float(err)


def check_sinusoid_slices(seed: int = 0, slices: int = 20, held_out: int = 20) -> float:
    """Three evaluations along one angle predict any other angle on that slice."""
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(slices):
        arch, theta, x = random_pqc(rng)
        use_theta = rng.random() < 0.5 or arch.n_features == 0
        k = int(rng.integers(arch.n_params if use_theta else arch.n_features))
        out = int(rng.integers(arch.n_qubits))

        def f(angles):
            th = np.repeat(theta[None, :], len(angles), axis=0)
            xs = np.repeat(x[None, :], len(angles), axis=0)
            (th if use_theta else xs)[:, k] = angles
            return pqc.pqc_forward(arch, th, xs)[:, out]

        fit_at = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3]) + rng.uniform(-np.pi, np.pi)
        coeffs = pqc.fit_sinusoid(fit_at, f(fit_at))
        probe = rng.uniform(-3 * np.pi, 3 * np.pi, held_out)
        err = max(err, np.abs(pqc.eval_sinusoid(coeffs, probe) - f(probe)).max())
    return float(err)


# ---------------------------------------------------------------------------
# nn


def naive_conv(x, w, b, stride):
    bsz, h, wd, _ = x.shape
    k, _, _, cout = w.shape
    oh, ow = nn.conv_output_size(h, k, stride), nn.conv_output_size(wd, k, stride)
    out = np.zeros((bsz, oh, ow, cout))
    for i in range(oh):
        for j in range(ow):
            patch = x[:, i * stride : i * stride + k, j * stride : j * stride + k, :]
            out[:, i, j, :] = np.tensordot(patch, w, axes=([1, 2, 3], [0, 1, 2])) + b
    return out


def check_conv_forward(rng) -> float:
    err = 0.0
    for k, s, act in ((3, 1, "linear"), (4, 2, "relu"), (3, 2, "tanh_pi")):
        x = rng.normal(size=(2, 9, 9, 3))
        w = rng.normal(size=(k, k, 3, 4))
        b = rng.normal(size=4)
        out, _ = nn.conv2d_forward(x, w, b, s, act)
        err = max(err, np.abs(out - nn.activate(naive_conv(x, w, b, s), act)).max())
    return float(err)


def check_conv_backward(rng) -> float:
    err = 0.0
    for k, s, act in ((3, 1, "linear"), (4, 2, "tanh_pi"), (3, 2, "linear")):
        x = rng.normal(size=(2, 7, 7, 2))
        w = rng.normal(size=(k, k, 2, 3))
        b = rng.normal(size=3)
        out, cache = nn.conv2d_forward(x, w, b, s, act)
        up = rng.normal(size=out.shape)
        gx, gw, gb = nn.conv2d_backward(up, cache)

        def loss(x_, w_, b_):
            return np.sum(up * nn.conv2d_forward(x_, w_, b_, s, act)[0])

        err = max(
            err,
            scaled_error(gx, central_difference(lambda v: loss(v, w, b), x)),
            scaled_error(gw, central_difference(lambda v: loss(x, v, b), w)),
            scaled_error(gb, central_difference(lambda v: loss(x, w, v), b)),
        )
    return float(err)


def check_dense_backward(rng) -> float:
    err = 0.0
    for act in ("linear", "tanh_pi", "relu"):
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(5, 4))
        b = rng.normal(size=4)
        out, cache = nn.dense_forward(x, w, b, act)
        up = rng.normal(size=out.shape)
        gx, gw, gb = nn.dense_backward(up, cache)

        def loss(x_, w_, b_):
            return np.sum(up * nn.dense_forward(x_, w_, b_, act)[0])

        err = max(
            err,
            scaled_error(gx, central_difference(lambda v: loss(v, w, b), x)),
            scaled_error(gw, central_difference(lambda v: loss(x, v, b), w)),
            scaled_error(gb, central_difference(lambda v: loss(x, w, v), b)),
        )
    return float(err)


def check_tanh_pi(rng) -> float:
    x = np.concatenate([rng.uniform(-6, 6, 200), [0.0, 1e-3, -2.5]])
    fd = (nn.tanh_pi(x + FD_STEP) - nn.tanh_pi(x - FD_STEP)) / (2 * FD_STEP)
    return float(np.abs(nn.tanh_pi_grad(x) - fd).max())


def check_adam(rng) -> float:
    """Three in-place updates against the textbook recursion written out by hand."""
    p = rng.normal(size=6)
    ref = p.copy()
    state = nn.AdamState.zeros_like([p])
    m = np.zeros(6)
    v = np.zeros(6)
    err = 0.0
    for t in range(1, 4):
        g = rng.normal(size=6)
        nn.adam_step([p], [g], state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        err = max(err, np.abs(p - ref).max())
    return float(err)


# ---------------------------------------------------------------------------
# model


def model_gradient_error(model_type: str, seed: int = 0, **spec_kw) -> float:
    """Max relative error of all parameter gradients of ``sum(u * Q)`` on a tiny net."""
    rng = np.random.default_rng(seed)
    spec = tiny_spec(model_type, dtype="float64", **spec_kw)
    net = build_net(spec, seed=seed)
    obs = rng.uniform(0.0, 1.0, (2,) + spec.input_shape)
    up = rng.normal(size=(2, spec.n_actions))
    net.forward(obs)
    grads = net.backward(up)
    err = 0.0
    params = net.param_groups()
    for group, arrs in params.items():
        for arr, g in zip(arrs, grads[group]):
            saved = arr.copy()

            def loss(v, arr=arr):
                arr[...] = v
                return np.sum(up * net.forward(obs))

            fd = central_difference(loss, saved)
            arr[...] = saved
            err = max(err, relative_error(g, fd))
    return float(err)


def check_model(seed: int = 0) -> float:
    return max(model_gradient_error(mt, seed) for mt in (HYBRID, CLASSICAL, UNCONSTRAINED))


# ---------------------------------------------------------------------------
# suites

SUITES: Dict[str, List[Tuple[str, Callable[[int], float], float]]] = {
    "qsim": [
        ("gate_matrix_vs_expm", lambda s: check_gate_matrices(np.random.default_rng(s)), 1e-12),
        ("circuit_vs_dense", lambda s: check_circuits(np.random.default_rng(s)), 1e-12),
    ],
    "pqc": [
        ("shift_vs_finite_difference", check_shift_vs_fd, 1e-6),
        ("shift_vs_adjoint", check_shift_vs_adjoint, 1e-10),
        ("vjp_batch_rows", check_vjp_batch, 1e-10),
        ("sinusoid_slices", check_sinusoid_slices, 1e-8),
    ],
    "nn": [
        ("conv_forward_vs_naive", lambda s: check_conv_forward(np.random.default_rng(s)), 1e-12),
        ("conv_backward_vs_fd", lambda s: check_conv_backward(np.random.default_rng(s)), 1e-7),
        ("dense_backward_vs_fd", lambda s: check_dense_backward(np.random.default_rng(s)), 1e-7),
        ("tanh_pi_grad_vs_fd", lambda s: check_tanh_pi(np.random.default_rng(s)), 1e-8),
        ("adam_vs_hand_recursion", lambda s: check_adam(np.random.default_rng(s)), 1e-12),
    ],
    "model": [
        ("hybrid_end_to_end", lambda s: model_gradient_error(HYBRID, s), 1e-4),
        ("hybrid_tanh_pi_end_to_end", lambda s: model_gradient_error(HYBRID, s, preproc_activation="tanh_pi"), 1e-4),
        ("classical_end_to_end", lambda s: model_gradient_error(CLASSICAL, s), 1e-4),
        ("unconstrained_end_to_end", lambda s: model_gradient_error(UNCONSTRAINED, s), 1e-4),
    ],
}


def run_suite(scope: str, seed: int = 0) -> List[CheckResult]:
    if scope not in SUITES:
        raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
    results = []
    with nn.float64_mode():
        for name, fn, tol in SUITES[scope]:
            t0 = time.perf_counter()
            msg = ""
            try:
                err = fn(seed)
            except Exception as exc:  # a crashing check is a failing check
                err, msg = float("inf"), f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(scope, name, err, tol, time.perf_counter() - t0, msg))
    return results
