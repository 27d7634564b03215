"""Kibble-Zurek drive circuits for the open transverse-field Ising chain.

The interpolated Hamiltonian is ``H(T, t) = -gx(t) sum_n X_n - gzz(t) sum_n Z_n Z_{n+1}``
with ``gx = 1 - t/T`` and ``gzz = 1 + t/T``, evolved from the paramagnetic
ground state at ``t = -T``. One time step of length ``dt`` maps to

* order 1: UX on every qubit, then UZZ on odd bonds (1,2),(3,4),..., then on
  even bonds (2,3),(4,5),...;
* order 2: UX(dt/2), even(dt/2), odd(dt), even(dt/2), UX(dt/2).

Bond labels are 1-based as in the chain literature; qubit indices are 0-based,
so odd bond (1,2) acts on qubits (0,1).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .circuit import Circuit, H, UX, UZZ

__all__ = [
    "ScheduleError",
    "KzSchedule",
    "gx",
    "gzz",
    "initial_state_circuit",
    "trotter_step",
    "build_drive",
    "pad_depth",
    "reference_qubit",
    "odd_bonds",
    "even_bonds",
]

_STEP_TOL = 1e-9


class ScheduleError(ValueError):
    pass


def gx(t: float, T: float) -> float:
    return 1.0 - t / T


def gzz(t: float, T: float) -> float:
    return 1.0 + t / T


@dataclass(frozen=True)
class KzSchedule:
    """Parameters of one drive circuit.

    ``t_start`` defaults to ``-T``. ``sampling`` chooses where the
    Hamiltonian is frozen inside each step: ``"midpoint"`` (default) or
    ``"left"`` (step start).
    """

    L: int
    T: float
    dt: float
    order: int = 2
    t_stop: float = 0.0
    t_start: float | None = None
    pad: int = 0
    sampling: str = "midpoint"

    def __post_init__(self):
        if self.t_start is None:
            object.__setattr__(self, "t_start", -float(self.T))
        problems = self.problems()
        if problems:
            raise ScheduleError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if int(self.L) < 2:
            out.append(f"L must be >= 2 (got {self.L})")
        if not self.T > 0:
            out.append(f"T must be positive (got {self.T})")
        if not (0 < self.dt <= self.T):
            out.append(f"dt must satisfy 0 < dt <= T (got dt={self.dt}, T={self.T})")
        if self.order not in (1, 2):
            out.append(f"order must be 1 or 2 (got {self.order})")
        if self.pad != 0 and (self.pad < 0 or self.pad % 2 == 0):
            out.append(f"pad depth must be 0 or odd positive (got {self.pad})")
        if self.sampling not in ("midpoint", "left"):
            out.append(f"sampling must be 'midpoint' or 'left' (got {self.sampling!r})")
        if self.T > 0 and not self.t_stop <= self.T + _STEP_TOL:
            out.append(f"t_stop must be <= T (got {self.t_stop})")
        if self.T > 0 and self.dt > 0:
            span = (self.t_stop - self.t_start) / self.dt
            if span < -_STEP_TOL or abs(span - round(span)) > _STEP_TOL:
                out.append(
                    f"(t_stop - t_start)/dt = {span:.12g} is not a non-negative integer"
                )
        return out

    @property
    def n_steps(self) -> int:
        return int(round((self.t_stop - self.t_start) / self.dt))

    def step_time(self, k: int) -> float:
        """Time at which the Hamiltonian is evaluated during step ``k``."""
        offset = 0.5 if self.sampling == "midpoint" else 0.0
        return self.t_start + (k + offset) * self.dt

    def as_metadata(self) -> dict:
        md = {f"schedule.{k}": v for k, v in asdict(self).items()}
        md["schedule.n_steps"] = self.n_steps
        return md


def odd_bonds(L: int) -> list[tuple[int, int]]:
    return [(n, n + 1) for n in range(0, L - 1, 2)]


def even_bonds(L: int) -> list[tuple[int, int]]:
    return [(n, n + 1) for n in range(1, L - 1, 2)]


def reference_qubit(L: int) -> int:
    """0-based index of the middle qubit of an odd chain."""
    if L % 2 == 0:
        raise ScheduleError(f"reference qubit needs an odd chain length (got L={L})")
    return (L - 1) // 2


def initial_state_circuit(L: int) -> Circuit:
    if L < 2:
        raise ScheduleError(f"L must be >= 2 (got {L})")
    return Circuit(L, tuple(H(q) for q in range(L)), {"prep_gates": L})


def _x_layer(L, theta):
    return [UX(q, theta) for q in range(L)]


def _zz_layer(bonds, theta):
    return [UZZ(a, b, theta) for a, b in bonds]


def trotter_step(schedule: KzSchedule, t_k: float) -> Circuit:
    """Gates of one Trotter step with the Hamiltonian frozen at ``t_k``."""
    s = schedule
    lo, hi = min(s.t_start, s.t_stop), max(s.t_start, s.t_stop)
    if not (lo - _STEP_TOL <= t_k <= hi + _STEP_TOL):
        raise ScheduleError(f"t_k={t_k} outside [{s.t_start}, {s.t_stop}]")
    L, dt = s.L, s.dt
    tx = dt * gx(t_k, s.T)
    tzz = dt * gzz(t_k, s.T)
    if s.order == 1:
        gates = _x_layer(L, tx) + _zz_layer(odd_bonds(L), tzz) + _zz_layer(even_bonds(L), tzz)
    else:
        gates = (
            _x_layer(L, tx / 2)
            + _zz_layer(even_bonds(L), tzz / 2)
            + _zz_layer(odd_bonds(L), tzz)
            + _zz_layer(even_bonds(L), tzz / 2)
            + _x_layer(L, tx / 2)
        )
    return Circuit(L, tuple(gates))


def build_drive(schedule: KzSchedule) -> Circuit:
    """Hadamard preparation followed by ``n_steps`` Trotter steps.

    A schedule with ``pad >= 3`` is returned already depth-padded.
    """
    s = schedule
    gates = list(initial_state_circuit(s.L).gates)
    step_len = None
    for k in range(s.n_steps):
        step = trotter_step(s, s.step_time(k)).gates
        step_len = len(step)
        gates.extend(step)
    md = s.as_metadata()
    md["prep_gates"] = s.L
    md["step_gates"] = step_len or 0
    c = Circuit(s.L, tuple(gates), md)
    if s.pad > 1:
        c = pad_depth(c, s, s.pad)
    return c


def pad_depth(circuit: Circuit, schedule: KzSchedule, d: int) -> Circuit:
    """Replace every step ``U`` by ``(U^dagger U)^((d-1)/2) U``.

    The noiseless action is unchanged; the gate count outside the
    preparation layer grows by a factor ``d``.
    """
    if not isinstance(d, int) or d < 1 or d % 2 == 0:
        raise ValueError(f"pad depth must be an odd positive integer (got {d!r})")
    if int(circuit.metadata.get("pad", 1)) > 1:
        raise ValueError("circuit is already padded")
    if d == 1:
        return circuit
    prep = int(circuit.metadata.get("prep_gates", 0))
    n_steps = schedule.n_steps
    body = circuit.gates[prep:]
    if n_steps == 0:
        return circuit.with_gates(circuit.gates, pad=d)
    if len(body) % n_steps:
        raise ValueError("circuit body does not split into equal steps")
    m = len(body) // n_steps
    gates = list(circuit.gates[:prep])
    reps = (d - 1) // 2
    for k in range(n_steps):
        step = body[k * m:(k + 1) * m]
        back = [g.inverse() for g in reversed(step)]
        # operator (U^dag U)^reps U: U acts first, then the U, U^dag pairs
        gates.extend(step)
        for _ in range(reps):
            gates.extend(step)
            gates.extend(back)
    return circuit.with_gates(gates, pad=d)

