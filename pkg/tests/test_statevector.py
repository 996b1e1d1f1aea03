import numpy as np
import pytest

from quanvnet import statevector as sv
from quanvnet.statevector import (
    CircuitProgram,
    GateInstruction,
    MeasurementOperator,
    constant,
    data_slot,
    param_slot,
)

import oracles


def random_program(rng, num_qubits, num_gates, data_arity=0, num_params=0):
    """Random mixed program; param slots are consumed at most once each."""
    free_params = list(rng.permutation(num_params)) if num_params else []
    kinds = ["H", "X", "Z", "RX", "RY", "RZ"]
    instrs = []
    for _ in range(num_gates):
        kind = kinds[rng.integers(len(kinds))]
        target = int(rng.integers(num_qubits))
        max_ctrl = min(3, num_qubits - 1)
        n_ctrl = int(rng.integers(max_ctrl + 1))
        pool = [q for q in range(num_qubits) if q != target]
        ctrl_qubits = rng.permutation(pool)[:n_ctrl]
        controls = tuple((int(q), int(rng.integers(2))) for q in ctrl_qubits)
        angle = None
        if kind in sv.ROTATION_KINDS:
            pick = rng.integers(3)
            if pick == 1 and data_arity > 0:
                angle = data_slot(int(rng.integers(data_arity)))
            elif pick == 2 and free_params:
                angle = param_slot(int(free_params.pop()))
            else:
                angle = constant(rng.uniform(-2 * np.pi, 2 * np.pi))
        instrs.append(GateInstruction(kind, target, controls, angle))
    return CircuitProgram(num_qubits, instrs, data_arity, num_params)


class TestZeroState:
    def test_one_qubit(self):
        s = sv.new_zero_state(1)
        assert np.array_equal(s.amplitudes, [1, 0])

    def test_two_qubits(self):
        s = sv.new_zero_state(2)
        assert np.array_equal(s.amplitudes, [1, 0, 0, 0])

    @pytest.mark.parametrize("n", [0, 31, -1])
    def test_guard(self, n):
        with pytest.raises(ValueError):
            sv.new_zero_state(n)


class TestApplyGate:
    def test_rx_pi_is_minus_i_x(self):
        s = sv.apply_gate(sv.new_zero_state(1), GateInstruction("RX", 0, (), constant(np.pi)))
        assert np.allclose(s.amplitudes, [0, -1j], atol=1e-15)

    def test_hadamard(self):
        s = sv.apply_gate(sv.new_zero_state(1), GateInstruction("H", 0))
        assert np.allclose(s.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_unsatisfied_control_is_identity(self):
        instr = GateInstruction("RX", 0, ((1, 1),), constant(np.pi))
        s = sv.apply_gate(sv.new_zero_state(2), instr)
        assert np.array_equal(s.amplitudes, [1, 0, 0, 0])

    def test_norm_preserved_per_gate(self):
        rng = np.random.default_rng(3)
        prog = random_program(rng, 4, 40)
        state = sv.new_zero_state(4)
        for instr in prog.instructions:
            state = sv.apply_gate(state, instr)
            assert abs(state.norm_sq() - 1.0) <= 1e-12

    def test_non_finite_angle_rejected(self):
        with pytest.raises(ValueError):
            sv.apply_gate(sv.new_zero_state(1), GateInstruction("RY", 0, (), constant(np.nan)))


class TestInstructionValidation:
    def test_target_in_controls(self):
        with pytest.raises(ValueError):
            sv.apply_gate(sv.new_zero_state(2), GateInstruction("Z", 0, ((0, 1),)))

    def test_duplicate_controls(self):
        with pytest.raises(ValueError):
            sv.apply_gate(sv.new_zero_state(3), GateInstruction("Z", 0, ((1, 1), (1, 0))))

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            sv.apply_gate(sv.new_zero_state(2), GateInstruction("X", 5))

    def test_rotation_needs_angle(self):
        with pytest.raises(ValueError):
            GateInstruction("RX", 0)

    def test_fixed_gate_rejects_angle(self):
        with pytest.raises(ValueError):
            GateInstruction("H", 0, (), constant(0.3))

    def test_param_slot_unique_per_program(self):
        gates = [
            GateInstruction("RX", 0, (), param_slot(0)),
            GateInstruction("RY", 0, (), param_slot(0)),
        ]
        with pytest.raises(ValueError):
            CircuitProgram(1, gates, 0, 1)

    def test_slot_outside_arity(self):
        with pytest.raises(ValueError):
            CircuitProgram(1, [GateInstruction("RX", 0, (), data_slot(2))], 2, 0)


class TestRunCircuit:
    def test_empty_program(self):
        s = sv.run_circuit(CircuitProgram(3, []))
        expect = np.zeros(8)
        expect[0] = 1
        assert np.array_equal(s.amplitudes, expect)

    def test_h_twice_is_identity(self):
        prog = CircuitProgram(3, [GateInstruction("H", 0), GateInstruction("H", 0)])
        s = sv.run_circuit(prog)
        assert np.allclose(s.amplitudes, sv.new_zero_state(3).amplitudes, atol=1e-15)

    def test_binding_length_checked(self):
        prog = CircuitProgram(1, [GateInstruction("RX", 0, (), data_slot(0))], data_arity=1)
        with pytest.raises(ValueError):
            sv.run_circuit(prog, data=np.zeros(3))

    def test_random_50_gate_program_matches_dense_oracle(self):
        rng = np.random.default_rng(7)
        data = rng.uniform(0, np.pi, 5)
        params = rng.uniform(0, 2 * np.pi, 6)
        prog = random_program(rng, 6, 50, data_arity=5, num_params=6)
        got = sv.run_circuit(prog, data, params).amplitudes
        want = oracles.dense_program_state(prog, data, params)
        assert np.max(np.abs(got - want)) <= 1e-10

    def test_oracle_equivalence_corpus(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            prog = random_program(rng, n, int(rng.integers(5, 40)), data_arity=4, num_params=3)
            data = rng.uniform(-np.pi, np.pi, 4)
            params = rng.uniform(0, 2 * np.pi, 3)
            got = sv.run_circuit(prog, data, params).amplitudes
            want = oracles.dense_program_state(prog, data, params)
            assert np.max(np.abs(got - want)) <= 1e-10


class TestAlgebraicInvariants:
    def _random_state(self, rng, n=4):
        prog = random_program(rng, n, 25)
        return sv.run_circuit(prog)

    @pytest.mark.parametrize("kind", ["H", "X", "Z"])
    def test_involutions(self, kind):
        rng = np.random.default_rng(5)
        state = self._random_state(rng)
        instr = GateInstruction(kind, 2, ((0, 1),))
        twice = sv.apply_gate(sv.apply_gate(state, instr), instr)
        assert np.max(np.abs(twice.amplitudes - state.amplitudes)) <= 1e-12

    @pytest.mark.parametrize("kind", ["RX", "RY", "RZ"])
    def test_rotation_composition(self, kind):
        rng = np.random.default_rng(6)
        state = self._random_state(rng)
        t1, t2 = rng.uniform(-np.pi, np.pi, 2)
        controls = ((1, 0), (3, 1))
        a = sv.apply_gate(state, GateInstruction(kind, 0, controls, constant(t1)))
        a = sv.apply_gate(a, GateInstruction(kind, 0, controls, constant(t2)))
        b = sv.apply_gate(state, GateInstruction(kind, 0, controls, constant(t1 + t2)))
        assert np.max(np.abs(a.amplitudes - b.amplitudes)) <= 1e-10

    def test_control_violating_amplitudes_bitwise_unchanged(self):
        rng = np.random.default_rng(8)
        state = self._random_state(rng)
        instr = GateInstruction("RY", 0, ((1, 1), (2, 0)), constant(0.7))
        after = sv.apply_gate(state, instr)
        for idx in range(16):
            matches = (idx >> 1) & 1 == 1 and (idx >> 2) & 1 == 0
            if not matches:
                assert after.amplitudes[idx] == state.amplitudes[idx]

    def test_norm_preserved_long_sequence(self):
        rng = np.random.default_rng(9)
        prog = random_program(rng, 5, 200, data_arity=3, num_params=4)
        s = sv.run_circuit(prog, rng.uniform(0, np.pi, 3), rng.uniform(0, 2 * np.pi, 4))
        assert abs(s.norm_sq() - 1.0) <= 1e-10


class TestExpectation:
    def _plus_minus_state(self, minus_at):
        # |+> everywhere except |-> on one qubit
        gates = [GateInstruction("H", q) for q in range(7)]
        gates.append(GateInstruction("Z", minus_at))
        return sv.run_circuit(CircuitProgram(7, gates))

    def test_matched_signs_give_full_weight(self):
        state = self._plus_minus_state(minus_at=3)
        signs = tuple(-1 if q == 3 else 1 for q in range(7))
        op = MeasurementOperator(tuple(range(7)), signs)
        assert abs(sv.expectation(state, op) - 128.0) <= 1e-10

    def test_minus_sign_on_plus_qubit_annihilates(self):
        state = self._plus_minus_state(minus_at=3)
        signs = tuple(-1 if q in (3, 4) else 1 for q in range(7))
        op = MeasurementOperator(tuple(range(7)), signs)
        assert abs(sv.expectation(state, op)) <= 1e-10

    @pytest.mark.parametrize("sign", [1, -1])
    def test_zero_state_factor_contributes_one(self, sign):
        state = sv.new_zero_state(1)
        op = MeasurementOperator((0,), (sign,))
        assert abs(sv.expectation(state, op) - 1.0) <= 1e-12

    def test_matches_dense_operator_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            prog = random_program(rng, n, 20)
            psi = sv.run_circuit(prog)
            m = int(rng.integers(1, n + 1))
            qubits = tuple(int(q) for q in rng.permutation(n)[:m])
            signs = tuple(int(s) for s in rng.choice([-1, 1], m))
            op = MeasurementOperator(qubits, signs)
            want = oracles.dense_expectation(n, psi.amplitudes, op)
            assert abs(sv.expectation(psi, op) - want) <= 1e-10
            assert -1e-10 <= sv.expectation(psi, op) <= 2.0**m + 1e-10


class TestAdjointGradients:
    def _ops_and_cotangents(self, rng, n, count):
        ops = []
        for _ in range(count):
            m = int(rng.integers(1, n + 1))
            qubits = tuple(int(q) for q in rng.permutation(n)[:m])
            signs = tuple(int(s) for s in rng.choice([-1, 1], m))
            ops.append(MeasurementOperator(qubits, signs))
        return ops, rng.normal(size=count)

    def test_no_parameters_gives_empty_gradient(self):
        prog = CircuitProgram(2, [GateInstruction("H", 0)])
        ops = [MeasurementOperator((0,), (1,))]
        g = sv.adjoint_gradients(prog, None, None, ops, [1.0])
        assert g.shape == (0,)

    def test_zero_cotangents_give_zero_gradient(self):
        rng = np.random.default_rng(13)
        prog = random_program(rng, 3, 20, num_params=5)
        ops, _ = self._ops_and_cotangents(rng, 3, 4)
        g = sv.adjoint_gradients(prog, None, rng.uniform(0, 2 * np.pi, 5), ops, np.zeros(4))
        assert np.array_equal(g, np.zeros(5))

    def test_non_finite_cotangents_rejected(self):
        rng = np.random.default_rng(14)
        prog = random_program(rng, 2, 10, num_params=2)
        ops = [MeasurementOperator((0,), (1,))]
        with pytest.raises(ValueError):
            sv.adjoint_gradients(prog, None, np.zeros(2), ops, [np.inf])

    def test_matches_central_differences(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            n = int(rng.integers(2, 6))
            num_params = int(rng.integers(3, 9))
            prog = random_program(rng, n, 30, data_arity=3, num_params=num_params)
            data = rng.uniform(0, np.pi, 3)
            params = rng.uniform(0, 2 * np.pi, num_params)
            ops, cot = self._ops_and_cotangents(rng, n, 5)

            def loss(p):
                psi = sv.run_circuit(prog, data, p)
                return sum(c * sv.expectation(psi, op) for c, op in zip(cot, ops))

            got = sv.adjoint_gradients(prog, data, params, ops, cot)
            want = oracles.central_differences(loss, params, eps=1e-4)
            assert oracles.relative_error(got, want) <= 1e-5


def test_dump_amplitudes_format():
    s = sv.apply_gate(sv.new_zero_state(2), GateInstruction("H", 0))
    lines = sv.dump_amplitudes(s).splitlines()
    assert len(lines) == 4
    idx, re, im = lines[1].split()
    assert idx == "1"
    assert re == f"{1 / np.sqrt(2):.17g}"
    assert im == "0"
