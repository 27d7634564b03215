import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from kzising.circuit import Circuit, GateKind, circuit_unitary
from kzising.schedule import (
    KzSchedule, ScheduleError, build_drive, even_bonds, gx, gzz, initial_state_circuit,
    odd_bonds, pad_depth, reference_qubit, trotter_step,
)
from kzising.statevector import run_circuit
from kzising.trajectory import compile_circuit, simulate

from oracles import ising_hamiltonian, plus_state, trotter_dense


def test_coefficients_at_endpoints():
    assert gx(-3.0, 3.0) == 2 and gzz(-3.0, 3.0) == 0
    assert gx(3.0, 3.0) == 0 and gzz(3.0, 3.0) == 2
    assert gx(0.0, 3.0) == gzz(0.0, 3.0) == 1


def test_initial_state():
    c = initial_state_circuit(2)
    assert [(g.kind, g.targets) for g in c.gates] == [(GateKind.H, (0,)), (GateKind.H, (1,))]
    assert np.allclose(run_circuit(initial_state_circuit(3)).amplitudes, 8 ** -0.5, atol=1e-15)
    assert len(initial_state_circuit(7)) == 7
    with pytest.raises(ScheduleError):
        initial_state_circuit(1)


def test_coupling_off_at_start():
    for order in (1, 2):
        s = KzSchedule(5, 2.0, 0.5, order, sampling="left")
        step = trotter_step(s, s.step_time(0))
        angles = [g.angle for g in step.gates if g.kind is GateKind.UZZ]
        assert angles and all(a == 0 for a in angles)


def test_first_order_angles_and_bond_order():
    s = KzSchedule(4, 1.0, 0.5, 1)
    assert s.step_time(0) == -0.75
    step = trotter_step(s, -0.75)
    ux = [g for g in step.gates if g.kind is GateKind.UX]
    uzz = [g for g in step.gates if g.kind is GateKind.UZZ]
    assert len(ux) == 4 and all(abs(g.angle - 0.875) < 1e-15 for g in ux)
    assert all(abs(g.angle - 0.125) < 1e-15 for g in uzz)
    # x layer first, then bonds (0,1),(2,3), then (1,2)
    assert step.gates[:4] == tuple(ux)
    assert [g.targets for g in uzz] == [(0, 1), (2, 3), (1, 2)]


def test_bond_partition():
    for L in range(2, 12):
        bonds = odd_bonds(L) + even_bonds(L)
        assert sorted(bonds) == [(n, n + 1) for n in range(L - 1)]
        for layer in (odd_bonds(L), even_bonds(L)):
            qs = [q for b in layer for q in b]
            assert len(qs) == len(set(qs))


def test_second_order_local_error_is_cubic():
    L, T, tk = 5, 1.0, -0.5
    errs = []
    dts = [0.2, 0.1, 0.05]
    for dt in dts:
        s = KzSchedule(L, T, dt, 2)
        U = circuit_unitary(trotter_step(s, tk))
        V = expm(-1j * ising_hamiltonian(L, T, tk) * dt)
        # the step carries no global phase, so compare directly
        errs.append(np.linalg.norm(U - V, 2))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 3.0) < 0.15


def test_first_order_local_error_is_quadratic():
    L, T, tk = 5, 1.0, -0.5
    dts = [0.2, 0.1, 0.05]
    errs = []
    for dt in dts:
        U = circuit_unitary(trotter_step(KzSchedule(L, T, dt, 1), tk))
        errs.append(np.linalg.norm(U - expm(-1j * ising_hamiltonian(L, T, tk) * dt), 2))
    assert abs(np.polyfit(np.log(dts), np.log(errs), 1)[0] - 2.0) < 0.15


def test_step_counts():
    assert KzSchedule(7, 1.0, 0.5, 1).n_steps == 2
    assert KzSchedule(13, 0.5, 0.5, 1).n_steps == 1
    c = build_drive(KzSchedule(7, 1.0, 0.5, 1))
    assert len(c) == 7 + 2 * (7 + 6)
    assert c.metadata["schedule.n_steps"] == 2 and c.metadata["schedule.order"] == 1
    empty = build_drive(KzSchedule(3, 1.0, 0.5, 2, t_stop=-1.0))
    assert [g.kind for g in empty.gates] == [GateKind.H] * 3


def test_large_drive_gate_count():
    c = build_drive(KzSchedule(33, 32.0, 0.1, 2))
    assert len(c) == 36513


def test_schedule_errors():
    with pytest.raises(ScheduleError):
        KzSchedule(5, 1.0, 0.3, 2)
    with pytest.raises(ScheduleError) as e:
        KzSchedule(5, -1.0, 0.0, 3)
    msg = str(e.value)
    assert "T must" in msg and "order must" in msg
    with pytest.raises(ScheduleError):
        KzSchedule(5, 1.0, 0.5, 2, pad=2)
    with pytest.raises(ScheduleError):
        reference_qubit(6)
    assert reference_qubit(7) == 3


@pytest.mark.parametrize("order", [1, 2])
def test_drive_matches_dense_product(order):
    L, T, dt = 5, 1.5, 0.25
    psi = run_circuit(build_drive(KzSchedule(L, T, dt, order))).amplitudes
    assert np.max(np.abs(psi - trotter_dense(L, T, dt, order))) < 1e-10


def test_drive_fidelity_against_piecewise_propagator():
    L, T, dt = 8, 4.0, 0.1
    psi = run_circuit(build_drive(KzSchedule(L, T, dt, 2))).amplitudes
    ref = plus_state(L)
    n = int(round(T / dt))
    for k in range(n):
        ref = expm(-1j * ising_hamiltonian(L, T, -T + (k + 0.5) * dt) * dt) @ ref
    assert 1 - abs(np.vdot(ref, psi)) ** 2 <= 1e-4


class TestPadding:
    def test_d1_unchanged(self):
        s = KzSchedule(5, 1.0, 0.25, 2)
        c = build_drive(s)
        assert pad_depth(c, s, 1) is c

    @pytest.mark.parametrize("order", [1, 2])
    def test_d3_state_and_count(self, order):
        s = KzSchedule(4, 1.0, 0.25, order)
        c1 = build_drive(s)
        c3 = pad_depth(c1, s, 3)
        assert len(c3) - 4 == 3 * (len(c1) - 4)
        a = run_circuit(c1).amplitudes
        b = run_circuit(c3).amplitudes
        assert np.max(np.abs(a - b)) < 1e-10

    def test_order_of_pairs(self):
        s = KzSchedule(3, 1.0, 0.5, 1)
        c = build_drive(s)
        m = c.metadata["step_gates"]
        c5 = pad_depth(c, s, 5)
        step = c.gates[3:3 + m]
        back = tuple(g.inverse() for g in reversed(step))
        assert c5.gates[3:3 + 5 * m] == step + step + back + step + back

    def test_schedule_pad_field(self):
        s = KzSchedule(5, 1.0, 0.25, 2, pad=5)
        assert build_drive(s).gates == pad_depth(build_drive(KzSchedule(5, 1.0, 0.25, 2)), s, 5).gates

    def test_bad_depth(self):
        s = KzSchedule(3, 1.0, 0.5, 1)
        c = build_drive(s)
        for d in (0, 2, -1, 4):
            with pytest.raises(ValueError):
                pad_depth(c, s, d)
        with pytest.raises(ValueError):
            pad_depth(pad_depth(c, s, 3), s, 3)

    def test_padded_noiseless_fast_path(self):
        s = KzSchedule(7, 2.0, 0.25, 2)
        c = build_drive(s)
        a = simulate(compile_circuit(c)).amplitudes
        b = simulate(compile_circuit(pad_depth(c, s, 9))).amplitudes
        assert np.max(np.abs(a - b)) < 1e-10


@settings(max_examples=15, deadline=None)
@given(data=st.data())
def test_layer_permutation_invariance(data):
    L = data.draw(st.integers(3, 7))
    order = data.draw(st.sampled_from([1, 2]))
    s = KzSchedule(L, 1.0, 0.5, order)
    c = build_drive(s)
    ref = run_circuit(c).amplitudes
    # split into layers of mutually commuting gates of one kind
    layers, cur = [], []
    for g in c.gates:
        if cur and (g.kind is not cur[-1].kind or g.angle != cur[-1].angle
                    or any(set(g.targets) & set(h.targets) for h in cur)):
            layers.append(cur)
            cur = []
        cur.append(g)
    layers.append(cur)
    gates = []
    for layer in layers:
        gates.extend(data.draw(st.permutations(layer)))
    out = run_circuit(Circuit(L, tuple(gates))).amplitudes
    assert np.max(np.abs(out - ref)) <= 1e-12
