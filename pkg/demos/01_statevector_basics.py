"""Tour of the statevector simulator: states, controlled gates, expectations.

Run:  python demos/01_statevector_basics.py
"""

import numpy as np

from quanvnet import statevector as sv

# |0> on two qubits, then a Hadamard: amplitudes are little-endian indexed,
# so qubit 0 contributes bit 0 of the basis index.
state = sv.new_zero_state(2)
state = sv.apply_gate(state, sv.GateInstruction("H", 0))
print("H on qubit 0 of |00>:")
print(sv.dump_amplitudes(state))

# A rotation controlled on qubit 1 being |1> does nothing here ...
controlled = sv.GateInstruction("RX", 0, ((1, 1),), sv.constant(np.pi))
print("\nafter CRX(pi) with an unsatisfied control:", sv.apply_gate(state, controlled).amplitudes)

# ... but acts once the control qubit is flipped.
flipped = sv.apply_gate(state, sv.GateInstruction("X", 1))
print("after X on the control and the same CRX:  ", sv.apply_gate(flipped, controlled).amplitudes)

# Programs bind angles late: data slots for inputs, param slots for trainables.
program = sv.CircuitProgram(
    num_qubits=2,
    instructions=[
        sv.GateInstruction("H", 0),
        sv.GateInstruction("RY", 1, ((0, 1),), sv.data_slot(0)),
        sv.GateInstruction("RZ", 1, (), sv.param_slot(0)),
    ],
    data_arity=1,
    param_arity=1,
)
psi = sv.run_circuit(program, data=[0.7], params=[0.3])
print("\nbound program state:", np.round(psi.amplitudes, 6))
print("norm stays exact:    ", psi.norm_sq())

# Measurement operators are products of (I +/- X); expectations land in
# [0, 2^m]. On |+> the (I + X) factor contributes 2, on |-> it contributes 0.
plus = sv.run_circuit(sv.CircuitProgram(1, [sv.GateInstruction("H", 0)]))
print("\nE(I+X) on |+>:", sv.expectation(plus, sv.MeasurementOperator((0,), (1,))))
print("E(I-X) on |+>:", sv.expectation(plus, sv.MeasurementOperator((0,), (-1,))))

# Adjoint gradients: one forward and one backward sweep for every parameter.
ops = [sv.MeasurementOperator((0, 1), (1, -1))]
grad = sv.adjoint_gradients(program, [0.7], [0.3], ops, [1.0])
eps = 1e-6
bump = lambda t: sv.expectation(sv.run_circuit(program, [0.7], [t]), ops[0])
print("\nadjoint gradient:", grad[0])
print("finite difference:", (bump(0.3 + eps) - bump(0.3 - eps)) / (2 * eps))
