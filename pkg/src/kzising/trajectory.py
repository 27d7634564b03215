"""Fast simulation of Pauli-perturbed circuits.

A trajectory is a circuit with Pauli operators inserted after some gates.
Instead of applying the Paulis, they are pushed to the end of the circuit as
a Pauli frame: Clifford gates (H, CNOT, Paulis) update the frame, while
rotations about a Pauli axis are conjugated by it, which only flips the sign
of their angle. The frame-adjusted rotations are then fused:

* single-qubit gates on the same wire are multiplied together;
* commuting diagonal gates (RZ, CZ, CPHASE, UZZ) are collected into one
  diagonal that is applied in a single pass;
* gates that cancel exactly (for example the ``U^dag U`` pairs of a
  depth-padded circuit that received no error) disappear before any
  amplitude is touched.

The final frame is applied to the state as one Pauli string. The result is
the same state as gate-by-gate simulation of the noisy circuit, up to a
global phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .circuit import H as _hadamard
from .circuit import Circuit, GateKind, gate_matrix
from .statevector import StateVector

__all__ = ["Program", "compile_circuit", "fuse", "simulate", "PrefixCache", "PAULI_X", "PAULI_Z"]

# per-gate opcodes
_XROT, _ZROT, _ZZ, _CZLIKE, _H, _CNOT, _PAULI, _NOP, _MAT1, _MAT2 = range(10)

# Pauli codes: 0 I, 1 X, 2 Y, 3 Z  ->  (x bit, z bit)
PAULI_X = (0, 1, 1, 0)
PAULI_Z = (0, 0, 1, 1)

_ZERO = 1e-15


@dataclass
class Program:
    """Flattened gate list of a circuit, ready for repeated trajectories."""

    num_qubits: int
    ops: list  # (opcode, q0, q1, value)
    arity: np.ndarray  # 1 or 2 per gate
    prep_gates: int
    n_gates: int


def compile_circuit(circuit: Circuit) -> Program:
    ops = []
    for g in circuit.gates:
        k, t = g.kind, g.targets
        if k is GateKind.UX:
            ops.append((_XROT, t[0], -1, g.angle))
        elif k is GateKind.RX:
            ops.append((_XROT, t[0], -1, -0.5 * g.angle))
        elif k is GateKind.RZ:
            ops.append((_ZROT, t[0], -1, -0.5 * g.angle))
        elif k is GateKind.UZZ:
            ops.append((_ZZ, t[0], t[1], g.angle))
        elif k is GateKind.CZ:
            ops.append((_CZLIKE, t[0], t[1], math.pi))
        elif k is GateKind.CPHASE:
            ops.append((_CZLIKE, t[0], t[1], g.angle))
        elif k is GateKind.H:
            ops.append((_H, t[0], -1, 0.0))
        elif k is GateKind.CNOT:
            ops.append((_CNOT, t[0], t[1], 0.0))
        elif k in (GateKind.X, GateKind.Y, GateKind.Z):
            ops.append((_PAULI, t[0], -1, {"X": 1, "Y": 2, "Z": 3}[k.value]))
        elif k is GateKind.I:
            ops.append((_NOP, t[0], -1, 0.0))
        elif g.num_qubits == 1:
            ops.append((_MAT1, t[0], -1, gate_matrix(g)))
        else:
            ops.append((_MAT2, t[0], t[1], gate_matrix(g)))
    arity = np.array([g.num_qubits for g in circuit.gates], dtype=np.int8)
    return Program(
        circuit.num_qubits, ops, arity, int(circuit.metadata.get("prep_gates", 0)), len(ops)
    )


_H_MAT = gate_matrix(_hadamard(0))


class _OneQ:
    __slots__ = ("e",)

    def __init__(self):
        # q -> float (coefficient c of exp(i c X)) or 2x2 ndarray
        self.e = {}


class _Diag:
    __slots__ = ("z", "zz", "use")

    def __init__(self):
        self.z = {}  # q -> alpha of exp(i alpha Z_q)
        self.zz = {}  # (a, b) -> beta of exp(i beta Z_a Z_b)
        self.use = {}  # q -> number of live terms on q


class _Dense:
    __slots__ = ("q", "op")

    def __init__(self, q, op):
        self.q = q
        self.op = op


def _is_identity(m):
    return abs(m[0, 1]) < _ZERO and abs(m[1, 0]) < _ZERO and abs(m[0, 0] - m[1, 1]) < _ZERO


class _Fuser:
    def __init__(self):
        self.stack = []

    # single-qubit non-diagonal gates -------------------------------------------------
    def add_1q(self, q, item):
        stack = self.stack
        target = None
        for i in range(len(stack) - 1, -1, -1):
            b = stack[i]
            if type(b) is _OneQ:
                if q in b.e:
                    self._merge_1q(i, b, q, item)
                    return
                target = b
            elif type(b) is _Diag:
                if q in b.use:
                    break
            elif q in b.q:
                break
        if target is None:
            target = _OneQ()
            stack.append(target)
        if type(item) is float:
            if abs(item) > _ZERO:
                target.e[q] = item
            elif not target.e:
                stack.pop()
        else:
            target.e[q] = item

    def _merge_1q(self, i, b, q, item):
        cur = b.e[q]
        if type(cur) is float and type(item) is float:
            new = cur + item
            if abs(new) <= _ZERO:
                del b.e[q]
            else:
                b.e[q] = new
        else:
            new = _as_matrix(item) @ _as_matrix(cur)
            if _is_identity(new):
                del b.e[q]
            else:
                b.e[q] = new
        if not b.e:
            del self.stack[i]

    # diagonal terms -------------------------------------------------------------------
    def add_diag(self, qubits, zterms, zzterm):
        """zterms: list of (q, alpha); zzterm: ((a, b), beta) or None."""
        stack = self.stack
        target_i = None
        for i in range(len(stack) - 1, -1, -1):
            b = stack[i]
            if type(b) is _Diag:
                target_i = i
            elif type(b) is _OneQ:
                if any(q in b.e for q in qubits):
                    break
            elif any(q in b.q for q in qubits):
                break
        if target_i is None:
            stack.append(_Diag())
            target_i = len(stack) - 1
        d = stack[target_i]
        for q, a in zterms:
            self._add_term(d.z, q, a, d.use, (q,))
        if zzterm is not None:
            key, beta = zzterm
            self._add_term(d.zz, key, beta, d.use, key)
        if not d.z and not d.zz:
            del stack[target_i]

    @staticmethod
    def _add_term(table, key, val, use, qubits):
        if key in table:
            new = table[key] + val
            if abs(new) <= _ZERO:
                del table[key]
                for q in qubits:
                    use[q] -= 1
                    if not use[q]:
                        del use[q]
            else:
                table[key] = new
        elif abs(val) > _ZERO:
            table[key] = val
            for q in qubits:
                use[q] = use.get(q, 0) + 1

    def add_dense(self, qubits, op):
        self.stack.append(_Dense(qubits, op))


def _as_matrix(item):
    if type(item) is float:
        c, s = math.cos(item), math.sin(item)
        return np.array([[c, 1j * s], [1j * s, c]])
    return item


def _diag_tables(d: _Diag, n: int):
    """Split the diagonal into a low-qubit table and a high-qubit table."""
    low_bits = max(1, n // 2)
    high_shift = low_bits
    for (a, b) in d.zz:
        lo, hi = min(a, b), max(a, b)
        if lo < low_bits <= hi:
            high_shift = min(high_shift, lo)
    lo_idx = np.arange(1 << low_bits)
    hi_idx = np.arange(1 << (n - high_shift))
    lo_ang = np.zeros(lo_idx.shape[0])
    hi_ang = np.zeros(hi_idx.shape[0])

    def z_lo(q):
        return 1 - 2 * ((lo_idx >> q) & 1)

    def z_hi(q):
        return 1 - 2 * ((hi_idx >> (q - high_shift)) & 1)

    for q, a in d.z.items():
        if q < low_bits:
            lo_ang += a * z_lo(q)
        else:
            hi_ang += a * z_hi(q)
    for (a, b), beta in d.zz.items():
        if max(a, b) < low_bits:
            lo_ang += beta * z_lo(a) * z_lo(b)
        else:
            hi_ang += beta * z_hi(a) * z_hi(b)
    return np.exp(1j * lo_ang), np.exp(1j * hi_ang), low_bits, high_shift


def _execute(stack, psi, n):
    for b in stack:
        tb = type(b)
        if tb is _OneQ:
            for q, e in b.e.items():
                if type(e) is float:
                    K.apply_xrot(psi, q, math.cos(e), math.sin(e))
                else:
                    K.apply_1q(psi, q, e[0, 0], e[0, 1], e[1, 0], e[1, 1])
        elif tb is _Diag:
            if n == 1:
                a = b.z.get(0, 0.0)
                K.apply_1q(psi, 0, np.exp(1j * a), 0j, 0j, np.exp(-1j * a))
                continue
            low, high, lb, hs = _diag_tables(b, n)
            K.apply_split_diagonal(psi, low, high, lb, hs)
        else:
            op = b.op
            if op == "cnot":
                K.apply_cnot(psi, b.q[0], b.q[1])
            else:
                K.apply_2q(psi, b.q[0], b.q[1], op)


def fuse(program: Program, errors=None):
    """Return the fused block list and the final Pauli frame ``(xmask, zmask)``.

    ``errors`` maps gate index to a Pauli code (1-qubit gates, 1..3) or a
    pair code ``4*a + b`` (2-qubit gates, 1..15). A dense integer array with
    zeros for untouched gates is accepted as well.
    """
    if errors is None:
        errs = {}
    elif isinstance(errors, dict):
        errs = errors
    else:
        arr = np.asarray(errors)
        nz = np.flatnonzero(arr)
        errs = dict(zip(nz.tolist(), arr[nz].tolist()))
    f = _Fuser()
    fx = 0
    fz = 0
    for gi, (code, q0, q1, val) in enumerate(program.ops):
        if code == _XROT:
            f.add_1q(q0, -val if (fz >> q0) & 1 else val)
        elif code == _ZZ:
            if ((fx >> q0) ^ (fx >> q1)) & 1:
                val = -val
            f.add_diag((q0, q1), (), ((q0, q1), val))
        elif code == _ZROT:
            f.add_diag((q0,), ((q0, -val if (fx >> q0) & 1 else val),), None)
        elif code == _CZLIKE:
            # CPHASE(phi) = phase * exp(-i phi/4 (Z_a + Z_b)) exp(i phi/4 Z_a Z_b)
            qa = -0.25 * val if not (fx >> q0) & 1 else 0.25 * val
            qb = -0.25 * val if not (fx >> q1) & 1 else 0.25 * val
            zz = 0.25 * val if not ((fx >> q0) ^ (fx >> q1)) & 1 else -0.25 * val
            f.add_diag((q0, q1), ((q0, qa), (q1, qb)), ((q0, q1), zz))
        elif code == _H:
            bx = (fx >> q0) & 1
            bz = (fz >> q0) & 1
            if bx != bz:
                fx ^= 1 << q0
                fz ^= 1 << q0
            f.add_1q(q0, _H_MAT)
        elif code == _CNOT:
            if (fx >> q0) & 1:
                fx ^= 1 << q1
            if (fz >> q1) & 1:
                fz ^= 1 << q0
            f.add_dense((q0, q1), "cnot")
        elif code == _PAULI:
            fx ^= PAULI_X[val] << q0
            fz ^= PAULI_Z[val] << q0
        elif code == _MAT1:
            m = val
            if fx >> q0 & 1 or fz >> q0 & 1:
                p = _pauli_matrix((fx >> q0 & 1, fz >> q0 & 1))
                m = p @ m @ p
            f.add_1q(q0, m)
        elif code == _MAT2:
            m = val
            pa = _pauli_matrix((fx >> q0 & 1, fz >> q0 & 1))
            pb = _pauli_matrix((fx >> q1 & 1, fz >> q1 & 1))
            p = np.kron(pa, pb)
            f.add_dense((q0, q1), p @ m @ p)
        e = errs.get(gi)
        if e:
            if q1 < 0:
                fx ^= PAULI_X[e] << q0
                fz ^= PAULI_Z[e] << q0
            else:
                a, b = divmod(e, 4)
                fx ^= (PAULI_X[a] << q0) ^ (PAULI_X[b] << q1)
                fz ^= (PAULI_Z[a] << q0) ^ (PAULI_Z[b] << q1)
    return f.stack, (fx, fz)


def _pauli_matrix(bits):
    x, z = bits
    m = np.eye(2, dtype=complex)
    if z:
        m = np.diag([1.0 + 0j, -1.0])
    if x:
        m = np.array([[0, 1], [1, 0]], dtype=complex) @ m
    return m


def simulate(program: Program | Circuit, errors=None, state: StateVector | None = None) -> StateVector:
    """Final state of ``program`` with Pauli ``errors`` inserted (see :func:`fuse`)."""
    if isinstance(program, Circuit):
        program = compile_circuit(program)
    n = program.num_qubits
    if state is None:
        state = StateVector(n)
    blocks, (fx, fz) = fuse(program, errors)
    _execute(blocks, state.amplitudes, n)
    if fx or fz:
        K.apply_pauli_string(state.amplitudes, fx, fz)
    return state


def _same_item(a, b):
    if type(a) is not type(b):
        return False
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and bool(np.array_equal(a, b))
    return a == b


def _same_table(x, y):
    if x.keys() != y.keys():
        return False
    return all(_same_item(v, y[k]) for k, v in x.items())


def same_block(a, b) -> bool:
    """Exact structural equality of two fused blocks."""
    if type(a) is not type(b):
        return False
    if type(a) is _OneQ:
        return _same_table(a.e, b.e)
    if type(a) is _Diag:
        return _same_table(a.z, b.z) and _same_table(a.zz, b.zz)
    return a.q == b.q and _same_item(a.op, b.op)


class PrefixCache:
    """Noiseless checkpoints shared by many trajectories of one program.

    Fusion is deterministic, so a trajectory's block list agrees with the
    noiseless one up to (roughly) its first error. Each trajectory restarts
    from the latest stored noiseless state inside that common prefix.
    Checkpoints are thinned to stay under ``max_bytes``.
    """

    def __init__(self, program: Program, initial: StateVector | None = None, max_bytes: int = 1 << 29):
        self.program = program
        n = program.num_qubits
        self.blocks, self.frame = fuse(program)
        state = initial.copy() if initial is not None else StateVector(n)
        nb = len(self.blocks)
        per_state = state.amplitudes.nbytes
        stride = max(1, -(-(nb + 1) * per_state // max(max_bytes, per_state)))
        self.checkpoints = {0: state.amplitudes.copy()}
        psi = state.amplitudes
        for i, b in enumerate(self.blocks, start=1):
            _execute([b], psi, n)
            if i % stride == 0 or i == nb:
                self.checkpoints[i] = psi.copy()
        self._keys = sorted(self.checkpoints)
        self.hits = 0

    def noiseless(self) -> StateVector:
        psi = self.checkpoints[len(self.blocks)].copy()
        fx, fz = self.frame
        if fx or fz:
            K.apply_pauli_string(psi, fx, fz)
        return StateVector(self.program.num_qubits, psi)

    def run(self, errors=None) -> StateVector:
        blocks, (fx, fz) = fuse(self.program, errors)
        ref = self.blocks
        j = 0
        stop = min(len(blocks), len(ref))
        while j < stop and same_block(blocks[j], ref[j]):
            j += 1
        k = self._keys[np.searchsorted(self._keys, j, side="right") - 1]
        if k:
            self.hits += 1
        psi = self.checkpoints[k].copy()
        _execute(blocks[k:], psi, self.program.num_qubits)
        if fx or fz:
            K.apply_pauli_string(psi, fx, fz)
        return StateVector(self.program.num_qubits, psi)
