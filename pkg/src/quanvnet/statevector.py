"""Exact dense statevector simulation with multi-controlled gates and adjoint gradients.

Conventions, fixed once so amplitude dumps are reproducible bit-for-bit:

* Basis indexing is little-endian: qubit ``i`` contributes bit ``i`` of the
  basis index, with weight ``2**i``.
* Rotations follow ``R_A(theta) = exp(-1j * theta * A / 2)`` for
  ``A in {X, Y, Z}``.
* Everything is double-precision complex; no sampling noise.

Gate application is an in-place strided update: only the amplitude pairs whose
control bits match are touched, so a gate with many controls is cheap. All
kernels accept a stack of states shaped ``(batch, 2**n)``; the public
single-state API wraps a one-row batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GATE_KINDS = ("H", "X", "Z", "RX", "RY", "RZ")
ROTATION_KINDS = ("RX", "RY", "RZ")

MAX_QUBITS = 30  # resource guard: 2**30 amplitudes is already 16 GiB

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def constant(theta: float) -> tuple:
    """Angle fixed at circuit-construction time."""
    return ("const", float(theta))


def data_slot(i: int) -> tuple:
    """Angle taken from entry ``i`` of the data vector at run time."""
    return ("data", int(i))


def param_slot(j: int) -> tuple:
    """Angle taken from entry ``j`` of the trainable-parameter vector."""
    return ("param", int(j))


@dataclass(frozen=True)
class GateInstruction:
    """One gate: kind, target qubit, control pattern, and angle source.

    ``controls`` is a tuple of ``(qubit, required_value)`` pairs; the gate acts
    only on basis states whose control bits equal the required values (value 0
    controls are allowed). Rotation kinds carry exactly one angle source;
    H/X/Z carry none.
    """

    kind: str
    target: int
    controls: tuple = ()
    angle: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple((int(q), int(v)) for q, v in self.controls))
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind in ROTATION_KINDS:
            if self.angle is None:
                raise ValueError(f"{self.kind} requires an angle source")
        elif self.angle is not None:
            raise ValueError(f"{self.kind} carries no angle")

    def validate(self, num_qubits: int) -> None:
        qubits = [q for q, _ in self.controls]
        if self.target in qubits:
            raise ValueError("target qubit also listed as control")
        if len(set(qubits)) != len(qubits):
            raise ValueError("duplicate control qubit")
        for q in qubits + [self.target]:
            if not 0 <= q < num_qubits:
                raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")
        for _, v in self.controls:
            if v not in (0, 1):
                raise ValueError("control value must be 0 or 1")


@dataclass(frozen=True)
class CircuitProgram:
    """Ordered gate list plus the arities of its data and parameter bindings."""

    num_qubits: int
    instructions: tuple
    data_arity: int = 0
    param_arity: int = 0

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        seen_params = set()
        for instr in self.instructions:
            instr.validate(self.num_qubits)
            if instr.angle is None:
                continue
            tag, slot = instr.angle
            if tag == "data" and not 0 <= slot < self.data_arity:
                raise ValueError(f"data slot {slot} outside arity {self.data_arity}")
            if tag == "param":
                if not 0 <= slot < self.param_arity:
                    raise ValueError(f"param slot {slot} outside arity {self.param_arity}")
                if slot in seen_params:
                    raise ValueError(f"param slot {slot} bound to more than one gate")
                seen_params.add(slot)


@dataclass(frozen=True)
class MeasurementOperator:
    """Tensor product of ``(I + sign*X)`` factors on ``measured_qubits``.

    Unmeasured qubits carry identity. Hermitian by construction, eigenvalues
    in ``[0, 2**len(measured_qubits)]``.
    """

    measured_qubits: tuple
    signs: tuple

    def __post_init__(self):
        object.__setattr__(self, "measured_qubits", tuple(int(q) for q in self.measured_qubits))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.measured_qubits) != len(self.signs):
            raise ValueError("one sign per measured qubit")
        if len(set(self.measured_qubits)) != len(self.measured_qubits):
            raise ValueError("measured qubits must be distinct")
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")


@dataclass
class QuantumState:
    """Dense amplitude vector over ``num_qubits`` qubits, little-endian indexed."""

    num_qubits: int
    amplitudes: np.ndarray

    def norm_sq(self) -> float:
        return float(np.real(np.vdot(self.amplitudes, self.amplitudes)))

    def copy(self) -> "QuantumState":
        return QuantumState(self.num_qubits, self.amplitudes.copy())


def new_zero_state(num_qubits: int) -> QuantumState:
    """All-zeros computational basis state |0...0>."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amp = np.zeros(1 << num_qubits, dtype=np.complex128)
    amp[0] = 1.0
    return QuantumState(num_qubits, amp)


def dump_amplitudes(state: QuantumState) -> str:
    """Debug dump: one ``index real imag`` line per amplitude, 17 significant digits."""
    lines = [
        f"{i} {a.real:.17g} {a.imag:.17g}"
        for i, a in enumerate(state.amplitudes)
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# compiled gate kernels
# ---------------------------------------------------------------------------


@dataclass
class _CompiledGate:
    kind: str
    idx0: np.ndarray  # basis indices with control bits matching, target bit 0
    idx1: np.ndarray  # same indices with target bit 1
    angle: tuple | None


def _pair_indices(num_qubits: int, target: int, controls: tuple) -> tuple:
    fixed = {target} | {q for q, _ in controls}
    free = [q for q in range(num_qubits) if q not in fixed]
    base = 0
    for q, v in controls:
        base |= v << q
    k = np.arange(1 << len(free), dtype=np.int64)
    idx0 = np.full(k.shape, base, dtype=np.int64)
    for j, q in enumerate(free):
        idx0 |= ((k >> j) & 1) << q
    return idx0, idx0 | (np.int64(1) << target)


@lru_cache(maxsize=32)
def compile_program(program: CircuitProgram) -> tuple:
    """Precompute the strided index tables for every instruction."""
    out = []
    for instr in program.instructions:
        idx0, idx1 = _pair_indices(program.num_qubits, instr.target, instr.controls)
        out.append(_CompiledGate(instr.kind, idx0, idx1, instr.angle))
    return tuple(out)


def _resolve_angle(angle: tuple, data, params):
    """Angle value for one gate: scalar, or a column for a batch of data rows."""
    tag, slot = angle
    if tag == "const":
        if not np.isfinite(slot):
            raise ValueError("resolved gate angle is not finite")
        return slot
    if tag == "data":
        if data is None:
            raise ValueError("gate binds a data slot but no data vector was given")
        theta = np.asarray(data)[..., slot]
    else:
        if params is None:
            raise ValueError("gate binds a param slot but no parameter vector was given")
        theta = np.asarray(params)[..., slot]
    if not np.all(np.isfinite(theta)):
        raise ValueError("resolved gate angle is not finite")
    if isinstance(theta, np.ndarray) and theta.ndim == 1:
        return theta[:, None]  # broadcast over the per-row amplitude slices
    return float(theta)


def _apply_kernel(amps: np.ndarray, cg: _CompiledGate, theta=None, invert: bool = False) -> None:
    """Apply one compiled gate in place to ``amps`` of shape (batch, 2**n)."""
    kind = cg.kind
    idx0, idx1 = cg.idx0, cg.idx1
    if kind == "H":
        a0 = amps[:, idx0]
        a1 = amps[:, idx1]
        amps[:, idx0] = (a0 + a1) * _INV_SQRT2
        amps[:, idx1] = (a0 - a1) * _INV_SQRT2
        return
    if kind == "X":
        a0 = amps[:, idx0].copy()
        amps[:, idx0] = amps[:, idx1]
        amps[:, idx1] = a0
        return
    if kind == "Z":
        amps[:, idx1] = -amps[:, idx1]
        return
    half = -0.5 * theta if invert else 0.5 * theta
    if kind == "RZ":
        phase = np.exp(-1j * half)
        amps[:, idx0] *= phase
        amps[:, idx1] *= np.conj(phase)
        return
    c = np.cos(half)
    s = np.sin(half)
    a0 = amps[:, idx0]
    a1 = amps[:, idx1]
    if kind == "RX":
        amps[:, idx0] = c * a0 - 1j * s * a1
        amps[:, idx1] = -1j * s * a0 + c * a1
    else:  # RY
        amps[:, idx0] = c * a0 - s * a1
        amps[:, idx1] = s * a0 + c * a1


def _rotation_derivative_dot(bra, ket, cg: _CompiledGate, theta) -> np.ndarray:
    """Per-row 2*Re(<bra| dU/dtheta |ket>) for a (controlled) rotation gate.

    dU/dtheta acts as (-i/2) * A * R_A(theta) on the control-matching subspace
    and as zero elsewhere, so only the matching index pairs contribute.
    """
    idx0, idx1 = cg.idx0, cg.idx1
    a0 = ket[:, idx0]
    a1 = ket[:, idx1]
    half = 0.5 * theta
    if cg.kind == "RZ":
        phase = np.exp(-1j * half)
        r0 = phase * a0
        r1 = np.conj(phase) * a1
        d0 = -0.5j * r0
        d1 = 0.5j * r1
    else:
        c = np.cos(half)
        s = np.sin(half)
        if cg.kind == "RX":
            r0 = c * a0 - 1j * s * a1
            r1 = -1j * s * a0 + c * a1
            d0 = -0.5j * r1
            d1 = -0.5j * r0
        else:  # RY
            r0 = c * a0 - s * a1
            r1 = s * a0 + c * a1
            d0 = -0.5 * r1
            d1 = 0.5 * r0
    acc = np.sum(np.conj(bra[:, idx0]) * d0, axis=1)
    acc += np.sum(np.conj(bra[:, idx1]) * d1, axis=1)
    return 2.0 * np.real(acc)


def run_compiled(compiled: tuple, amps: np.ndarray, data=None, params=None) -> None:
    """Run a compiled gate sequence in place on a (batch, dim) amplitude stack."""
    for cg in compiled:
        theta = _resolve_angle(cg.angle, data, params) if cg.angle is not None else None
        _apply_kernel(amps, cg, theta)


def adjoint_sweep(
    compiled: tuple,
    psi: np.ndarray,
    bra: np.ndarray,
    data,
    params,
    param_arity: int,
    data_arity: int = 0,
    want_data_grads: bool = False,
):
    """Reverse sweep of the adjoint method over a (batch, dim) stack.

    ``psi`` is the forward final state and ``bra`` the cotangent state
    ``sum_i c_i M_i |psi>`` (per row). Returns ``(param_grads, data_grads)``
    where param gradients are summed over the batch and data gradients, when
    requested, stay per-row.
    """
    ket = psi.copy()
    bra = bra.copy()
    param_grads = np.zeros(param_arity)
    data_grads = np.zeros((psi.shape[0], data_arity)) if want_data_grads else None
    for cg in reversed(compiled):
        theta = _resolve_angle(cg.angle, data, params) if cg.angle is not None else None
        _apply_kernel(ket, cg, theta, invert=True)
        if cg.angle is not None:
            tag, slot = cg.angle
            if tag == "param" or (tag == "data" and want_data_grads):
                g = _rotation_derivative_dot(bra, ket, cg, theta)
                if tag == "param":
                    param_grads[slot] += g.sum()
                else:
                    data_grads[:, slot] += g
        _apply_kernel(bra, cg, theta, invert=True)
    return param_grads, data_grads


# ---------------------------------------------------------------------------
# public single-state API
# ---------------------------------------------------------------------------


def apply_gate(state: QuantumState, instr: GateInstruction, data=None, params=None) -> QuantumState:
    """Return the state after one gate; control-violating amplitudes are untouched."""
    instr.validate(state.num_qubits)
    idx0, idx1 = _pair_indices(state.num_qubits, instr.target, instr.controls)
    cg = _CompiledGate(instr.kind, idx0, idx1, instr.angle)
    theta = _resolve_angle(instr.angle, data, params) if instr.angle is not None else None
    amps = state.amplitudes[None, :].copy()
    _apply_kernel(amps, cg, theta)
    return QuantumState(state.num_qubits, amps[0])


def run_circuit(program: CircuitProgram, data=None, params=None) -> QuantumState:
    """Apply all instructions left to right to |0...0>."""
    data = _check_binding(data, program.data_arity, "data")
    params = _check_binding(params, program.param_arity, "params")
    state = new_zero_state(program.num_qubits)
    amps = state.amplitudes[None, :]
    run_compiled(compile_program(program), amps, data, params)
    return state


def _check_binding(vec, arity: int, name: str):
    if vec is None:
        vec = np.zeros(0)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != arity:
        raise ValueError(f"{name} vector has length {vec.shape[-1]}, program expects {arity}")
    return vec


def apply_measurement_operator(state: QuantumState, op: MeasurementOperator) -> np.ndarray:
    """Amplitudes of M|psi> for a product-of-(I +/- X) operator."""
    for q in op.measured_qubits:
        if not 0 <= q < state.num_qubits:
            raise ValueError(f"measured qubit {q} out of range")
    phi = state.amplitudes.copy()
    for q, sign in zip(op.measured_qubits, op.signs):
        idx0, idx1 = _pair_indices(state.num_qubits, q, ())
        flipped = np.empty_like(phi)
        flipped[idx0] = phi[idx1]
        flipped[idx1] = phi[idx0]
        phi += sign * flipped
    return phi


def expectation(state: QuantumState, op: MeasurementOperator) -> float:
    """<psi|M|psi>; the (tiny) imaginary residue of the Hermitian form is discarded."""
    return float(np.real(np.vdot(state.amplitudes, apply_measurement_operator(state, op))))


def adjoint_gradients(
    program: CircuitProgram,
    data,
    params,
    ops,
    cotangents,
) -> np.ndarray:
    """Gradient of ``sum_i cotangents[i] * E(M_i)`` with respect to all param slots.

    One forward simulation plus one backward sweep; cost is independent of the
    number of parameters (up to the per-gate derivative inner products).
    """
    cotangents = np.asarray(cotangents, dtype=np.float64)
    if cotangents.shape != (len(ops),):
        raise ValueError("one cotangent per measurement operator")
    if not np.all(np.isfinite(cotangents)):
        raise ValueError("cotangents must be finite")
    if program.param_arity == 0:
        return np.zeros(0)
    data = _check_binding(data, program.data_arity, "data")
    params = _check_binding(params, program.param_arity, "params")
    psi = run_circuit(program, data, params)
    bra = np.zeros_like(psi.amplitudes)
    for c, op in zip(cotangents, ops):
        if c != 0.0:
            bra += c * apply_measurement_operator(psi, op)
    param_grads, _ = adjoint_sweep(
        compile_program(program),
        psi.amplitudes[None, :],
        bra[None, :],
        data,
        params,
        program.param_arity,
    )
    return param_grads
