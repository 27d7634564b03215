"""Circuit representation, gate matrices and the native-gate transpiler.

Two-qubit gate matrices are written in the local basis ``|q0 q1>`` with the
first target as the most significant bit, so ``CNOT(q0, q1)`` has ``q0`` as
control. Full-register operators use the little-endian convention of the
simulator: qubit 0 is the least significant bit of the basis index.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GateKind",
    "Gate",
    "Circuit",
    "UnsupportedGateError",
    "gate_matrix",
    "decompose_uzz",
    "transpile_native",
    "is_native",
    "circuit_unitary",
    "equal_up_to_phase",
    "circuit_to_text",
    "circuit_from_text",
]

_TWO_PI = 2.0 * math.pi
_FOUR_PI = 4.0 * math.pi


class UnsupportedGateError(ValueError):
    """Raised for a gate kind with no matrix or no native lowering."""


class GateKind(str, enum.Enum):
    H = "H"
    RX = "RX"
    RZ = "RZ"
    X = "X"
    Y = "Y"
    Z = "Z"
    I = "I"  # noqa: E741
    CNOT = "CNOT"
    CZ = "CZ"
    CPHASE = "CPHASE"
    UZZ = "UZZ"  # exp(i phi Z Z)
    UX = "UX"  # exp(i phi X)


PARAMETRIC = frozenset({GateKind.RX, GateKind.RZ, GateKind.CPHASE, GateKind.UZZ, GateKind.UX})
TWO_QUBIT = frozenset({GateKind.CNOT, GateKind.CZ, GateKind.CPHASE, GateKind.UZZ})
PAULIS = (GateKind.I, GateKind.X, GateKind.Y, GateKind.Z)


def normalize_angle(theta: float) -> float:
    """Map an angle into (-2pi, 2pi] without changing any gate matrix."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    theta = math.fmod(theta, _FOUR_PI)
    if theta > _TWO_PI:
        theta -= _FOUR_PI
    elif theta <= -_TWO_PI:
        theta += _FOUR_PI
    return theta


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        targets = tuple(int(q) for q in self.targets)
        object.__setattr__(self, "targets", targets)
        n = 2 if kind in TWO_QUBIT else 1
        if len(targets) != n:
            raise ValueError(f"{kind.value} acts on {n} qubit(s), got targets {targets}")
        if any(q < 0 for q in targets):
            raise ValueError(f"negative qubit index in {targets}")
        if n == 2 and targets[0] == targets[1]:
            raise ValueError(f"{kind.value} needs two distinct qubits, got {targets}")
        if kind in PARAMETRIC:
            if self.angle is None:
                raise ValueError(f"{kind.value} requires an angle")
            object.__setattr__(self, "angle", normalize_angle(float(self.angle)))
        elif self.angle is not None:
            raise ValueError(f"{kind.value} takes no angle")

    @property
    def num_qubits(self) -> int:
        return len(self.targets)

    def inverse(self) -> "Gate":
        if self.kind in PARAMETRIC:
            return Gate(self.kind, self.targets, -self.angle)
        return self

    def __repr__(self):
        qs = ",".join(map(str, self.targets))
        if self.angle is None:
            return f"{self.kind.value}({qs})"
        return f"{self.kind.value}({qs}; {self.angle:.6g})"


# convenience constructors
def H(q): return Gate(GateKind.H, (q,))
def RX(q, theta): return Gate(GateKind.RX, (q,), theta)
def RZ(q, theta): return Gate(GateKind.RZ, (q,), theta)
def CNOT(c, t): return Gate(GateKind.CNOT, (c, t))
def CZ(a, b): return Gate(GateKind.CZ, (a, b))
def UX(q, phi): return Gate(GateKind.UX, (q,), phi)
def UZZ(a, b, phi): return Gate(GateKind.UZZ, (a, b), phi)


@dataclass(frozen=True)
class Circuit:
    """Immutable gate sequence over ``num_qubits`` qubits.

    ``metadata`` is a flat mapping of provenance values (schedule fields,
    seeds, realization ids). It is carried through serialization as text.
    """

    num_qubits: int
    gates: tuple[Gate, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.num_qubits) < 1:
            raise ValueError("a circuit needs at least one qubit")
        object.__setattr__(self, "num_qubits", int(self.num_qubits))
        gates = tuple(self.gates)
        for g in gates:
            if max(g.targets) >= self.num_qubits:
                raise ValueError(f"{g!r} out of range for {self.num_qubits} qubits")
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    @property
    def gate_count(self) -> int:
        return len(self.gates)

    def depth(self) -> int:
        """Number of layers when each gate is scheduled as early as possible."""
        level = [0] * self.num_qubits
        for g in self.gates:
            d = max(level[q] for q in g.targets) + 1
            for q in g.targets:
                level[q] = d
        return max(level, default=0)

    def with_gates(self, gates: Iterable[Gate], **meta) -> "Circuit":
        md = dict(self.metadata)
        md.update(meta)
        return Circuit(self.num_qubits, tuple(gates), md)

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.num_qubits != self.num_qubits:
            raise ValueError("cannot concatenate circuits of different width")
        return Circuit(self.num_qubits, self.gates + other.gates, self.metadata)

    def inverse(self) -> "Circuit":
        return Circuit(self.num_qubits, tuple(g.inverse() for g in reversed(self.gates)), self.metadata)

    def digest(self) -> str:
        return hashlib.sha256(circuit_to_text(self, metadata=False).encode()).hexdigest()


# ---------------------------------------------------------------------------
# matrices

_SQ2 = 1.0 / math.sqrt(2.0)
_FIXED = {
    GateKind.H: np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.I: np.eye(2, dtype=complex),
    GateKind.CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    GateKind.CZ: np.diag([1, 1, 1, -1]).astype(complex),
}


def gate_matrix(g: Gate) -> np.ndarray:
    """Matrix of ``g`` in the computational z-basis (2x2 or 4x4)."""
    kind = g.kind
    if kind in _FIXED:
        return _FIXED[kind].copy()
    a = g.angle
    if kind is GateKind.RZ:
        return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
    if kind is GateKind.RX:
        c, s = math.cos(a / 2), math.sin(a / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind is GateKind.UX:
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, 1j * s], [1j * s, c]])
    if kind is GateKind.UZZ:
        e, f = np.exp(1j * a), np.exp(-1j * a)
        return np.diag([e, f, f, e])
    if kind is GateKind.CPHASE:
        return np.diag([1, 1, 1, np.exp(1j * a)]).astype(complex)
    raise UnsupportedGateError(f"no matrix for gate kind {kind!r}")


def decompose_uzz(phi: float, q: Sequence[int]) -> list[Gate]:
    """CNOT - RZ - CNOT sequence equal to exp(i phi Z_a Z_b) up to global phase."""
    a, b = q
    return [CNOT(a, b), RZ(b, -2.0 * phi), CNOT(a, b)]


def _embed(m: np.ndarray, targets: tuple[int, ...], n: int) -> np.ndarray:
    """Dense 2^n operator of a 1- or 2-qubit matrix acting on ``targets``."""
    dim = 1 << n
    idx = np.arange(dim)
    if len(targets) == 1:
        (q,) = targets
        local = (idx >> q) & 1
        rest = idx & ~(1 << q)
        out = np.zeros((dim, dim), dtype=complex)
        for row_bit in (0, 1):
            for col_bit in (0, 1):
                rows = rest | (row_bit << q)
                sel = local == col_bit
                out[rows[sel], idx[sel]] = m[row_bit, col_bit]
        return out
    q0, q1 = targets
    local = 2 * ((idx >> q0) & 1) + ((idx >> q1) & 1)
    rest = idx & ~((1 << q0) | (1 << q1))
    out = np.zeros((dim, dim), dtype=complex)
    for r in range(4):
        rows = rest | ((r >> 1) << q0) | ((r & 1) << q1)
        for c in range(4):
            sel = local == c
            out[rows[sel], idx[sel]] = m[r, c]
    return out


def circuit_unitary(c: Circuit) -> np.ndarray:
    """Dense product of all gate operators (intended for small circuits)."""
    n = c.num_qubits
    if n > 12:
        raise ValueError("dense unitary limited to 12 qubits")
    u = np.eye(1 << n, dtype=complex)
    for g in c.gates:
        u = _embed(gate_matrix(g), g.targets, n) @ u
    return u


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    """Compare two arrays after aligning the phase of their largest entry."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    k = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    if abs(b[k]) == 0:
        return bool(np.allclose(a, 0, atol=atol) and np.allclose(b, 0, atol=atol))
    phase = a[k] / b[k]
    phase /= abs(phase)
    return bool(np.max(np.abs(a - phase * b)) <= atol)


# ---------------------------------------------------------------------------
# transpiler

_HALF_PI = 0.5 * math.pi


def _quarter_turns(theta: float) -> int | None:
    k = theta / _HALF_PI
    r = round(k)
    return int(r) if abs(k - r) < 1e-12 else None


def is_native(g: Gate) -> bool:
    if g.kind in (GateKind.RZ, GateKind.CZ):
        return True
    return g.kind is GateKind.RX and _quarter_turns(g.angle) is not None


def _lower(g: Gate) -> list[Gate]:
    """Rewrite one gate over {H, RZ, RX(k pi/2), CZ}."""
    k, t = g.kind, g.targets
    if k is GateKind.I:
        return []
    if k in (GateKind.H, GateKind.RZ, GateKind.CZ):
        return [g]
    if k is GateKind.RX:
        if _quarter_turns(g.angle) is not None:
            return [g]
        return [H(t[0]), RZ(t[0], g.angle), H(t[0])]
    if k is GateKind.UX:
        return _lower(RX(t[0], -2.0 * g.angle))
    if k is GateKind.X:
        return [RX(t[0], math.pi)]
    if k is GateKind.Z:
        return [RZ(t[0], math.pi)]
    if k is GateKind.Y:
        return [RZ(t[0], math.pi), RX(t[0], math.pi)]
    if k is GateKind.CNOT:
        return [H(t[1]), CZ(*t), H(t[1])]
    if k is GateKind.UZZ:
        return [x for y in decompose_uzz(g.angle, t) for x in _lower(y)]
    if k is GateKind.CPHASE:
        a = g.angle
        return [RZ(t[0], a / 2), RZ(t[1], a / 2)] + _lower(UZZ(t[0], t[1], a / 4))
    raise UnsupportedGateError(f"no native decomposition for {k!r}")


def _peephole(gates: list[Gate], n: int) -> list[Gate]:
    """Merge adjacent RZ on a wire and cancel adjacent H pairs.

    Adjacency is per wire: the previous surviving gate touching the same
    qubit. Gates are never reordered.
    """
    out: list[Gate | None] = []
    wire: list[list[int]] = [[] for _ in range(n)]
    for g in gates:
        if g.num_qubits == 2:
            out.append(g)
            for q in g.targets:
                wire[q].append(len(out) - 1)
            continue
        q = g.targets[0]
        prev = out[wire[q][-1]] if wire[q] else None
        if prev is not None and prev.num_qubits == 1:
            if g.kind is GateKind.H and prev.kind is GateKind.H:
                out[wire[q].pop()] = None
                continue
            if g.kind is GateKind.RZ and prev.kind is GateKind.RZ:
                merged = normalize_angle(prev.angle + g.angle)
                if math.remainder(merged, _TWO_PI) == 0.0:
                    out[wire[q].pop()] = None
                else:
                    out[wire[q][-1]] = RZ(q, merged)
                continue
        if g.kind is GateKind.RZ and math.remainder(g.angle, _TWO_PI) == 0.0:
            continue
        out.append(g)
        wire[q].append(len(out) - 1)
    return [g for g in out if g is not None]


def _expand_h(gates: list[Gate]) -> list[Gate]:
    res = []
    for g in gates:
        if g.kind is GateKind.H:
            q = g.targets[0]
            res += [RZ(q, _HALF_PI), RX(q, _HALF_PI), RZ(q, _HALF_PI)]
        else:
            res.append(g)
    return res


def transpile_native(c: Circuit) -> Circuit:
    """Lower ``c`` to {RZ, RX(k pi/2), CZ} with RZ merging and H-pair removal.

    The result equals ``c`` up to a global phase.
    """
    n = c.num_qubits
    stage = []
    for g in c.gates:
        stage += _lower(g)
    stage = _peephole(stage, n)
    stage = _peephole(_expand_h(stage), n)
    # the Hadamard layer is no longer a separable prefix after lowering
    return c.with_gates(stage, representation="native", prep_gates=0, step_gates=0)


# ---------------------------------------------------------------------------
# text serialization


def circuit_to_text(c: Circuit, metadata: bool = True) -> str:
    lines = [f"# num_qubits={c.num_qubits}"]
    if metadata:
        for k, v in c.metadata.items():
            lines.append(f"# {k}={v}")
    for g in c.gates:
        parts = [g.kind.value, *map(str, g.targets)]
        if g.angle is not None:
            parts.append(repr(float(g.angle)))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def _parse_value(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    if s in ("True", "False"):
        return s == "True"
    return s


def circuit_from_text(text: str) -> Circuit:
    n = None
    meta = {}
    gates = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                k, v = k.strip(), v.strip()
                if k == "num_qubits":
                    n = int(v)
                else:
                    meta[k] = _parse_value(v)
            continue
        tok = line.split()
        try:
            kind = GateKind(tok[0])
        except ValueError:
            raise UnsupportedGateError(f"line {lineno}: unknown gate {tok[0]!r}") from None
        nq = 2 if kind in TWO_QUBIT else 1
        targets = tuple(int(x) for x in tok[1:1 + nq])
        angle = float(tok[1 + nq]) if kind in PARAMETRIC else None
        gates.append(Gate(kind, targets, angle))
    if n is None:
        n = 1 + max((max(g.targets) for g in gates), default=0)
    return Circuit(n, tuple(gates), meta)
