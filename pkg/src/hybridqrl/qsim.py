"""Dense statevector simulation for few-qubit circuits.

Amplitudes live in a flat array of length ``2**n``; qubit 0 is the least
significant bit of the basis index. Gates are applied in place by pairing
amplitudes whose indices differ only in the target bit.

Two layers are exposed:

* ``StateVector`` / ``GateOp`` / ``apply_gate`` etc. operate on one state.
* The ``*_batch`` kernels operate on a ``(batch, 2**n)`` array and accept
  per-row angles. ``pqc`` builds on these.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ArgumentError, ConfigurationError, NormDriftError

MAX_QUBITS = 16
NORM_TOL = 1e-8

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("CZ",)


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ArgumentError(
                f"expected {2**self.n_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm_sq(self) -> float:
        return float(np.sum(self.amplitudes.real**2 + self.amplitudes.imag**2))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: Optional[int] = None
    angle: Optional[float] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ArgumentError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CZ":
            if self.control is None:
                raise ArgumentError("CZ needs a control qubit")
            if self.control == self.target:
                raise ArgumentError("CZ control and target must differ")
            if self.angle is not None:
                raise ArgumentError("CZ takes no angle")
        else:
            if self.angle is None:
                raise ArgumentError(f"{self.kind} needs an angle")
            if self.control is not None:
                raise ArgumentError(f"{self.kind} takes no control qubit")

    def qubits(self) -> tuple:
        return (self.target,) if self.control is None else (self.control, self.target)


@dataclass(frozen=True)
class ZObservable:
    qubit: int


def _check_n_qubits(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits!r}")


def _check_qubit(q: int, n_qubits: int) -> None:
    if not 0 <= q < n_qubits:
        raise ArgumentError(f"qubit index {q} out of range for {n_qubits} qubits")


def check_norm(amplitudes: np.ndarray, tol: float = NORM_TOL) -> None:
    """Raise ``NormDriftError`` if any row's squared norm is off by more than ``tol``."""
    amps = np.atleast_2d(amplitudes)
    norms = np.sum(amps.real**2 + amps.imag**2, axis=-1)
    drift = np.max(np.abs(norms - 1.0))
    if not drift <= tol:
        raise NormDriftError(f"statevector norm drift {drift:.3e} exceeds {tol:.0e}")


# ---------------------------------------------------------------------------
# batched kernels: psi has shape (batch, 2**n) and is modified in place


def zero_states(n_qubits: int, batch: int = 1) -> np.ndarray:
    _check_n_qubits(n_qubits)
    psi = np.zeros((batch, 2**n_qubits), dtype=np.complex128)
    psi[:, 0] = 1.0
    return psi


def _pair_view(psi: np.ndarray, n_qubits: int, qubit: int):
    v = psi.reshape(psi.shape[0], 2 ** (n_qubits - 1 - qubit), 2, 2**qubit)
    return v[:, :, 0, :], v[:, :, 1, :]


def _angle_column(angle, batch: int) -> np.ndarray:
    a = np.asarray(angle, dtype=np.float64)
    if a.ndim == 0:
        return a
    if a.shape != (batch,):
        raise ArgumentError(f"per-row angles must have shape ({batch},), got {a.shape}")
    return a[:, None, None]


def rotate_batch(psi: np.ndarray, n_qubits: int, kind: str, qubit: int, angle) -> None:
    """Apply ``exp(-i angle/2 P)`` with ``P`` given by ``kind`` to every row."""
    a0, a1 = _pair_view(psi, n_qubits, qubit)
    half = _angle_column(angle, psi.shape[0]) / 2.0
    c, s = np.cos(half), np.sin(half)
    if kind == "RX":
        u0 = a0.copy()
        a0 *= c
        a0 -= 1j * s * a1
        a1 *= c
        a1 -= 1j * s * u0
    elif kind == "RY":
        u0 = a0.copy()
        a0 *= c
        a0 -= s * a1
        a1 *= c
        a1 += s * u0
    elif kind == "RZ":
        phase = np.exp(-1j * half)
        a0 *= phase
        a1 *= np.conj(phase)
    else:
        raise ArgumentError(f"not a rotation: {kind!r}")


def pauli_batch(psi: np.ndarray, n_qubits: int, kind: str, qubit: int) -> np.ndarray:
    """Return a new array equal to ``P psi`` where ``P`` is the generator of ``kind``."""
    out = np.empty_like(psi)
    a0, a1 = _pair_view(psi, n_qubits, qubit)
    o0, o1 = _pair_view(out, n_qubits, qubit)
    if kind == "RX":
        o0[...] = a1
        o1[...] = a0
    elif kind == "RY":
        o0[...] = -1j * a1
        o1[...] = 1j * a0
    elif kind == "RZ":
        o0[...] = a0
        o1[...] = -a1
    else:
        raise ArgumentError(f"not a rotation: {kind!r}")
    return out


def cz_signs(n_qubits: int, pairs) -> np.ndarray:
    """Diagonal (+1/-1) of the product of CZ gates on the given qubit pairs."""
    idx = np.arange(2**n_qubits)
    signs = np.ones(2**n_qubits)
    for c, t in pairs:
        both = ((idx >> c) & 1) & ((idx >> t) & 1)
        signs[both == 1] *= -1.0
    return signs


def z_signs(n_qubits: int) -> np.ndarray:
    """Matrix of shape (2**n, n): +1 where bit q of the index is 0, else -1."""
    idx = np.arange(2**n_qubits)[:, None]
    bits = (idx >> np.arange(n_qubits)[None, :]) & 1
    return 1.0 - 2.0 * bits


def expectations_batch(psi: np.ndarray, n_qubits: int) -> np.ndarray:
    """All qubit-wise <Z> for every row; shape (batch, n)."""
    probs = psi.real**2 + psi.imag**2
    return probs @ z_signs(n_qubits)


# ---------------------------------------------------------------------------
# single-state API


def init_state(n_qubits: int) -> StateVector:
    return StateVector(n_qubits, zero_states(n_qubits)[0])


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Apply ``gate`` to ``state`` in place and return it."""
    n = state.n_qubits
    for q in gate.qubits():
        _check_qubit(q, n)
    psi = state.amplitudes.reshape(1, -1)
    if gate.kind == "CZ":
        psi *= cz_signs(n, [(gate.control, gate.target)])
    else:
        rotate_batch(psi, n, gate.kind, gate.target, gate.angle)
    return state


def run_circuit(n_qubits: int, gates) -> StateVector:
    state = init_state(n_qubits)
    for g in gates:
        apply_gate(state, g)
    check_norm(state.amplitudes)
    return state


def expectation_z(state: StateVector, obs: Union[ZObservable, int]) -> float:
    q = obs.qubit if isinstance(obs, ZObservable) else int(obs)
    _check_qubit(q, state.n_qubits)
    check_norm(state.amplitudes)
    probs = state.probabilities()
    bit = (np.arange(probs.size) >> q) & 1
    # fixed-order sequential reduction
    return float(np.sum(np.where(bit == 0, probs, -probs)))


def sample_z(state: StateVector, obs: Union[ZObservable, int], shots: int, rng=None) -> dict:
    """Draw ``shots`` Z-basis outcomes for one qubit; returns ``{+1: count, -1: count}``."""
    if shots < 1:
        raise ArgumentError("shots must be >= 1")
    q = obs.qubit if isinstance(obs, ZObservable) else int(obs)
    _check_qubit(q, state.n_qubits)
    rng = np.random.default_rng(rng)
    probs = state.probabilities()
    bit = (np.arange(probs.size) >> q) & 1
    p_plus = float(np.clip(np.sum(probs[bit == 0]), 0.0, 1.0))
    n_plus = int(rng.binomial(shots, p_plus))
    return {+1: n_plus, -1: shots - n_plus}


def gate_matrix(gate: GateOp, n_qubits: int) -> np.ndarray:
    """Full ``2**n x 2**n`` unitary of ``gate``; only used as a brute-force reference."""
    dim = 2**n_qubits
    if gate.kind == "CZ":
        return np.diag(cz_signs(n_qubits, [(gate.control, gate.target)])).astype(np.complex128)
    c, s = np.cos(gate.angle / 2), np.sin(gate.angle / 2)
    if gate.kind == "RX":
        m = np.array([[c, -1j * s], [-1j * s, c]])
    elif gate.kind == "RY":
        m = np.array([[c, -s], [s, c]], dtype=np.complex128)
    else:
        m = np.diag([np.exp(-0.5j * gate.angle), np.exp(0.5j * gate.angle)])
    # qubit 0 is the least significant bit, i.e. the rightmost kron factor
    full = np.eye(1, dtype=np.complex128)
    for q in reversed(range(n_qubits)):
        full = np.kron(full, m if q == gate.target else np.eye(2))
    assert full.shape == (dim, dim)
    return full
