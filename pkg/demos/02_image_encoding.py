"""How a processed image becomes a quantum state.

The location register is put in uniform superposition with Hadamards; each
superpixel's feature values then drive location-controlled RX/RY/RZ rotations
on the value register, followed by location-conditioned pair entanglers that
imprint the (a,b,c,-d,e,-f,-g,-h) sign pattern.

Run:  python demos/02_image_encoding.py
"""

import numpy as np

from quanvnet import circuits, statevector as sv

config = circuits.CircuitConfig(grid_log=1, features_per_superpixel=9,
                                num_blocks=1, kernels_per_block=1)
layout = circuits.make_layout(config)
print(f"registers -> location {layout.q_l}, value {layout.q_v}, "
      f"kernel {layout.q_k}, feature-map {layout.q_f}")

encoding = circuits.build_encoding(config, layout)
kinds = [i.kind for i in encoding.instructions]
print(f"encoding fragment: {kinds.count('H')} Hadamards, "
      f"{sum(k in circuits.GATE_UNIT for k in kinds) // 3} gate units, "
      f"{kinds.count('Z')} pair entanglers, {encoding.data_arity} data slots")

# all-zero features: rotations are identity, the state is just the uniform
# location superposition with the value register untouched
zero_state = sv.run_circuit(encoding, np.zeros(encoding.data_arity))
nonzero = np.nonzero(zero_state.amplitudes)[0]
print("\nzero-feature state: amplitude 1/2 on location branches", nonzero.tolist())

# one superpixel gets features: only its branch changes
processed = np.zeros((2, 2, 9))
processed[1, 0, :3] = [np.pi / 2, np.pi / 3, np.pi / 5]
state = sv.run_circuit(encoding, processed.reshape(-1))
print("\nfeatures on superpixel (1,0) only; the other branches keep amplitude 1/2:")
for idx in np.nonzero(np.abs(state.amplitudes) > 1e-12)[0]:
    print(f"  index {idx:3d}: {state.amplitudes[idx]:.6f}")

# the sign pattern of the pair entanglers, in isolation
v = np.arange(1, 9).astype(complex) / np.sqrt(204.0)
print("\npair-entangler action on a 3-qubit value state:")
print("  before:", np.round(v.real, 4))
print("  after: ", np.round(circuits.cz_sign_pattern(v).real, 4))

# resource accounting matches the closed forms for any config
report = circuits.resource_report(
    circuits.CircuitConfig(grid_log=3, features_per_superpixel=9, num_blocks=2, kernels_per_block=2)
)
print("\nresource report for the 12-qubit production configuration:")
for line in report.as_lines():
    print(" ", line)
