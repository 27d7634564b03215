"""Dense statevector engine and exact / sampled observables.

Basis ordering is little-endian: qubit ``q`` is bit ``q`` of the amplitude
index. Bitstrings are written qubit 0 first, so the string ``"0110"`` is the
basis state with qubits 1 and 2 set (index 6).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .circuit import Circuit, Gate, GateKind, gate_matrix
from .schedule import KzSchedule, even_bonds, gx, gzz, odd_bonds

__all__ = [
    "MAX_QUBITS",
    "StateVector",
    "SampleSet",
    "ObservableEstimate",
    "apply",
    "run_circuit",
    "sample",
    "probabilities",
    "correlation_exact",
    "correlation_profile",
    "correlation_sampled",
    "energy",
    "entanglement_entropy",
    "fidelity",
    "kl_divergence",
    "index_to_bitstring",
    "bitstring_to_index",
]

MAX_QUBITS = 26
ENTROPY_CUTOFF = 1e-12


def index_to_bitstring(i: int, n: int) -> str:
    return "".join("1" if (i >> q) & 1 else "0" for q in range(n))


def bitstring_to_index(s: str) -> int:
    return sum(1 << q for q, ch in enumerate(s) if ch == "1")


class StateVector:
    """``2**num_qubits`` complex amplitudes, mutated in place by :func:`apply`."""

    def __init__(self, num_qubits: int, amplitudes=None, max_qubits: int = MAX_QUBITS):
        if not 1 <= num_qubits <= max_qubits:
            raise ValueError(f"num_qubits must be in [1, {max_qubits}] (got {num_qubits})")
        self.num_qubits = int(num_qubits)
        dim = 1 << self.num_qubits
        if amplitudes is None:
            amplitudes = np.zeros(dim, dtype=np.complex128)
            amplitudes[0] = 1.0
        else:
            amplitudes = np.array(amplitudes, dtype=np.complex128)
            if amplitudes.shape != (dim,):
                raise ValueError(f"expected {dim} amplitudes, got shape {amplitudes.shape}")
        self.amplitudes = amplitudes

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        sv = cls(len(bits))
        sv.amplitudes[:] = 0
        sv.amplitudes[bitstring_to_index(bits)] = 1.0
        return sv

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __repr__(self):
        return f"StateVector(num_qubits={self.num_qubits})"


def apply(state: StateVector, gate: Gate) -> StateVector:
    """Apply ``gate`` to ``state`` in place and return it."""
    n = state.num_qubits
    if max(gate.targets) >= n:
        raise IndexError(f"{gate!r} targets a qubit outside 0..{n - 1}")
    psi = state.amplitudes
    kind = gate.kind
    if kind is GateKind.I:
        return state
    if kind is GateKind.UX:
        K.apply_xrot(psi, gate.targets[0], math.cos(gate.angle), math.sin(gate.angle))
    elif kind is GateKind.UZZ:
        K.apply_zz_phase(psi, gate.targets[0], gate.targets[1], gate.angle)
    elif kind is GateKind.CNOT:
        K.apply_cnot(psi, gate.targets[0], gate.targets[1])
    elif gate.num_qubits == 1:
        u = gate_matrix(gate)
        K.apply_1q(psi, gate.targets[0], u[0, 0], u[0, 1], u[1, 0], u[1, 1])
    else:
        K.apply_2q(psi, gate.targets[0], gate.targets[1], gate_matrix(gate))
    return state


def run_circuit(circuit: Circuit, state: StateVector | None = None) -> StateVector:
    """Gate-by-gate simulation starting from ``|0...0>`` unless ``state`` is given."""
    if state is None:
        state = StateVector(circuit.num_qubits)
    elif state.num_qubits != circuit.num_qubits:
        raise ValueError("state and circuit widths differ")
    for g in circuit.gates:
        apply(state, g)
    return state


def probabilities(state: StateVector) -> np.ndarray:
    psi = state.amplitudes
    return psi.real ** 2 + psi.imag ** 2


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampleSet:
    """Measured basis states, stored as little-endian integer outcomes."""

    num_qubits: int
    outcomes: np.ndarray
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return int(self.outcomes.shape[0])

    def bits(self) -> np.ndarray:
        """(N, L) array of measured bit values, column q is qubit q."""
        q = np.arange(self.num_qubits, dtype=np.int64)
        return ((self.outcomes[:, None] >> q) & 1).astype(np.int8)

    def bitstrings(self) -> list[str]:
        return [index_to_bitstring(int(i), self.num_qubits) for i in self.outcomes]

    def counts(self) -> dict[str, int]:
        c = Counter(self.outcomes.tolist())
        return {index_to_bitstring(i, self.num_qubits): n for i, n in sorted(c.items())}

    def distribution(self) -> np.ndarray:
        p = np.bincount(self.outcomes, minlength=1 << self.num_qubits).astype(float)
        return p / self.N

    @classmethod
    def from_counts(cls, counts: dict[str, int], **kw) -> "SampleSet":
        if not counts:
            raise ValueError("empty count map")
        lengths = {len(b) for b in counts}
        if len(lengths) != 1:
            raise ValueError("bitstrings of unequal length")
        n = lengths.pop()
        out = np.concatenate(
            [np.full(c, bitstring_to_index(b), dtype=np.int64) for b, c in counts.items()]
        )
        return cls(n, out, **kw)

    def concat(self, other: "SampleSet") -> "SampleSet":
        if other.num_qubits != self.num_qubits:
            raise ValueError("sample sets over different registers")
        return SampleSet(
            self.num_qubits, np.concatenate([self.outcomes, other.outcomes]), self.seed, self.provenance
        )


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator for a seed (int or SeedSequence)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def sample(state: StateVector, N: int, seed=None, provenance: dict | None = None) -> SampleSet:
    """Draw ``N`` i.i.d. basis states from ``|amplitude|^2``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = make_rng(seed)
    cdf = np.cumsum(probabilities(state))
    u = rng.random(N) * cdf[-1]
    out = np.searchsorted(cdf, u, side="right")
    np.minimum(out, cdf.shape[0] - 1, out=out)
    return SampleSet(
        state.num_qubits, out.astype(np.int64), seed if isinstance(seed, int) else None, dict(provenance or {})
    )


# ---------------------------------------------------------------------------
# correlations


@dataclass(frozen=True)
class ObservableEstimate:
    value: float
    stderr: float = 0.0
    asymmetric: bool = False

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")


def _partners(L: int, r: int, x: int) -> list[int]:
    if not 0 <= r < L:
        raise IndexError(f"reference qubit {r} outside 0..{L - 1}")
    if x < 1:
        raise ValueError("distance x must be >= 1")
    js = [j for j in (r + x, r - x) if 0 <= j < L]
    if not js:
        raise IndexError(f"no qubit at distance {x} from {r} in a chain of {L}")
    return js


def _z_signs(L: int, q: int, dim: int) -> np.ndarray:
    return 1 - 2 * ((np.arange(dim) >> q) & 1)


def correlation_exact(state: StateVector, r: int, x: int) -> ObservableEstimate:
    """<Z_r Z_{r+-x}> averaged over the in-range sides; stderr is 0."""
    L = state.num_qubits
    js = _partners(L, r, x)
    p = probabilities(state)
    dim = p.shape[0]
    zr = _z_signs(L, r, dim)
    vals = [float(np.dot(p, zr * _z_signs(L, j, dim))) for j in js]
    return ObservableEstimate(float(np.mean(vals)), 0.0, len(js) == 1)


def correlation_profile(state: StateVector, r: int, xs) -> np.ndarray:
    """Exact correlations for several distances in one pass over the amplitudes."""
    L = state.num_qubits
    p = probabilities(state)
    idx = np.arange(p.shape[0])
    zr = 1 - 2 * ((idx >> r) & 1)
    pr = p * zr
    # <Z_r Z_j> for every j
    zz = np.array([np.dot(pr, 1 - 2 * ((idx >> j) & 1)) for j in range(L)])
    out = []
    for x in xs:
        js = _partners(L, r, int(x))
        out.append(np.mean(zz[js]))
    return np.array(out, dtype=float)


def correlation_sampled(samples: SampleSet, r: int, x: int) -> ObservableEstimate:
    """Shot estimate (4/N) sum (s_r - 1/2)(s_j - 1/2), averaged over j = r +- x.

    The standard error is the sample standard deviation of the per-shot
    values divided by sqrt(N).
    """
    L = samples.num_qubits
    js = _partners(L, r, x)
    bits = samples.bits()
    sr = bits[:, r].astype(float) - 0.5
    per_shot = np.mean([4.0 * sr * (bits[:, j] - 0.5) for j in js], axis=0)
    N = samples.N
    value = float(per_shot.mean())
    stderr = float(per_shot.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return ObservableEstimate(value, stderr, len(js) == 1)


# ---------------------------------------------------------------------------
# energy, entropy, distribution metrics


def energy(state: StateVector, schedule: KzSchedule, t: float) -> float:
    """<H(T, t)> on the open chain."""
    L = state.num_qubits
    psi = state.amplitudes
    p = probabilities(state)
    idx = np.arange(p.shape[0])
    sx = sum(K.expect_x(psi, q) for q in range(L))
    szz = 0.0
    for a, b in odd_bonds(L) + even_bonds(L):
        szz += float(np.dot(p, 1 - 2 * (((idx >> a) ^ (idx >> b)) & 1)))
    return -gx(t, schedule.T) * sx - gzz(t, schedule.T) * szz


def entanglement_entropy(state: StateVector, cut: int) -> float:
    """Von Neumann entropy (natural log) of qubits ``0..cut-1`` against the rest."""
    L = state.num_qubits
    if not 1 <= cut < L:
        raise ValueError(f"cut must be in [1, {L - 1}] (got {cut})")
    # rows: qubits cut..L-1, columns: qubits 0..cut-1
    m = state.amplitudes.reshape(1 << (L - cut), 1 << cut)
    s = np.linalg.svd(m, compute_uv=False)
    s = s[s > ENTROPY_CUTOFF]
    lam = s * s
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def fidelity(p_exact, p_sampled) -> float:
    """Classical fidelity sum sqrt(p_exact * p_sampled)."""
    a = np.asarray(p_exact, dtype=float)
    b = np.asarray(p_sampled, dtype=float)
    if a.shape != b.shape:
        raise ValueError("distributions over different outcome sets")
    return float(np.sum(np.sqrt(a * b)))


def kl_divergence(p_sampled, p_exact) -> float:
    """KL(p_sampled || p_exact); ``inf`` when sampled mass sits where p_exact is 0."""
    q = np.asarray(p_sampled, dtype=float)
    p = np.asarray(p_exact, dtype=float)
    if q.shape != p.shape:
        raise ValueError("distributions over different outcome sets")
    m = q > 0
    if np.any(p[m] == 0):
        return math.inf
    return float(np.sum(q[m] * np.log(q[m] / p[m])))
