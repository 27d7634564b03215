"""Depolarizing gate noise, trajectory ensembles and noise-length experiments.

After every one-qubit gate a uniformly random non-identity Pauli is inserted
with probability ``p`` (``p/3`` each). After every two-qubit gate one of the
15 non-identity Pauli pairs is inserted with probability ``p`` (``p/15``
each). The Pauli acts on the state right after its gate.

Randomness is counter based: trajectory ``id`` of master seed ``s`` owns the
Philox stream keyed by ``SeedSequence(s, spawn_key=(id, 0))``, and gate ``g``
reads the ``g``-th uniform ``u_g`` of that stream. An error occurs when
``u_g < p`` and its Pauli label is ``floor(u_g / p * m)`` (``m`` = 3 or 15).
Two consequences:

* any trajectory can be replayed from ``(master_seed, id)`` alone, in any
  order and on any worker;
* runs that share a master seed but differ in ``p`` use common random
  numbers: the error set at a smaller ``p`` is a subset of the one at a
  larger ``p``. Differences between noise strengths are then much less noisy
  than independent runs would be, while every single ensemble is still an
  unbiased sample of the channel.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .circuit import Circuit, Gate, GateKind
from .schedule import KzSchedule, build_drive, pad_depth, reference_qubit
from .statevector import (
    SampleSet,
    StateVector,
    correlation_profile,
    energy,
    entanglement_entropy,
    make_rng,
    sample,
)
from .trajectory import PrefixCache, compile_circuit

__all__ = [
    "NoiseSpec",
    "TrajectoryResult",
    "EnsembleResult",
    "draw_errors",
    "noisy_instance",
    "run_ensemble",
    "sample_ensemble",
    "correlation_observable",
    "energy_observable",
    "entropy_observable",
    "XiTable",
    "xi_experiment",
    "INTENSITY_CUTOFF",
]

INTENSITY_CUTOFF = 1e-3
_PAULI_GATES = {1: GateKind.X, 2: GateKind.Y, 3: GateKind.Z}

Observable = Callable[[StateVector], "float | np.ndarray"]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise strength, seed and ensemble size.

    ``noisy_preparation`` controls whether the Hadamard layer (the first
    ``prep_gates`` gates of a drive circuit) receives errors.
    """

    p: float
    master_seed: int = 0
    trajectories: int = 1
    noisy_preparation: bool = True

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not (0.0 <= self.p <= 1.0):
            out.append(f"p must be in [0, 1] (got {self.p})")
        if not (isinstance(self.master_seed, (int, np.integer)) and 0 <= self.master_seed < 2**64):
            out.append(f"master_seed must be an unsigned 64-bit integer (got {self.master_seed!r})")
        if not (isinstance(self.trajectories, (int, np.integer)) and self.trajectories >= 1):
            out.append(f"trajectories must be a positive integer (got {self.trajectories!r})")
        return out

    def with_p(self, p: float) -> "NoiseSpec":
        return replace(self, p=p)


def _uniforms(master_seed: int, tid: int, n: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(tid), 0))
    return make_rng(ss).random(n)


def draw_errors(arity: np.ndarray, spec: NoiseSpec, tid: int, prep_gates: int = 0) -> dict[int, int]:
    """Error codes ``{gate index: code}`` of trajectory ``tid``.

    One-qubit codes are 1 (X), 2 (Y), 3 (Z). Two-qubit codes are ``4*a + b``
    with ``a`` acting on the first target and ``b`` on the second, 1..15.
    """
    arity = np.asarray(arity)
    if spec.p == 0.0 or arity.shape[0] == 0:
        return {}
    u = _uniforms(spec.master_seed, tid, arity.shape[0])
    hit = u < spec.p
    if not spec.noisy_preparation and prep_gates:
        hit[:prep_gates] = False
    idx = np.flatnonzero(hit)
    if idx.shape[0] == 0:
        return {}
    m = np.where(arity[idx] == 1, 3, 15)
    k = np.minimum(np.floor(u[idx] / spec.p * m).astype(np.int64), m - 1)
    return dict(zip(idx.tolist(), (k + 1).tolist()))


def noisy_instance(circuit: Circuit, spec: NoiseSpec, tid: int) -> Circuit:
    """Explicit circuit of trajectory ``tid`` with Pauli gates inserted."""
    for g in circuit.gates:
        if g.num_qubits not in (1, 2):
            raise ValueError(f"unsupported gate arity in {g!r}")
    arity = np.array([g.num_qubits for g in circuit.gates], dtype=np.int8)
    prep = int(circuit.metadata.get("prep_gates", 0))
    errs = draw_errors(arity, spec, tid, prep)
    if not errs:
        return circuit.with_gates(circuit.gates, **_noise_meta(spec, tid, 0))
    gates = []
    for i, g in enumerate(circuit.gates):
        gates.append(g)
        e = errs.get(i)
        if not e:
            continue
        if g.num_qubits == 1:
            gates.append(Gate(_PAULI_GATES[e], g.targets))
        else:
            a, b = divmod(e, 4)
            if a:
                gates.append(Gate(_PAULI_GATES[a], (g.targets[0],)))
            if b:
                gates.append(Gate(_PAULI_GATES[b], (g.targets[1],)))
    return circuit.with_gates(gates, **_noise_meta(spec, tid, len(errs)))


def _noise_meta(spec, tid, n_err):
    return {
        "noise.p": spec.p,
        "noise.master_seed": spec.master_seed,
        "noise.id": tid,
        "noise.errors": n_err,
    }


# ---------------------------------------------------------------------------
# observables


def correlation_observable(r: int, xs) -> Observable:
    xs = [int(x) for x in xs]
    return lambda state: correlation_profile(state, r, xs)


def energy_observable(schedule: KzSchedule, t: float | None = None) -> Observable:
    t = schedule.t_stop if t is None else t
    return lambda state: energy(state, schedule, t)


def entropy_observable(cut: int) -> Observable:
    return lambda state: entanglement_entropy(state, cut)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class TrajectoryResult:
    id: int
    master_seed: int
    values: dict
    n_errors: int


@dataclass
class EnsembleResult:
    spec: NoiseSpec
    circuit_hash: str
    mean: dict
    stderr: dict
    n_errors: np.ndarray
    trajectories: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return int(self.n_errors.shape[0])

    def manifest(self) -> dict:
        return {
            "master_seed": int(self.spec.master_seed),
            "p": float(self.spec.p),
            "M": self.M,
            "circuit_hash": self.circuit_hash,
            "noisy_preparation": bool(self.spec.noisy_preparation),
            "mean_errors": float(self.n_errors.mean()) if self.M else 0.0,
        }


def _evaluate(observables, state):
    return {k: np.asarray(f(state), dtype=float) for k, f in observables.items()}


def run_ensemble(
    circuit: Circuit,
    spec: NoiseSpec,
    observables: Mapping[str, Observable],
    workers: int = 1,
    keep_trajectories: bool = False,
    initial: StateVector | None = None,
) -> EnsembleResult:
    """Average ``observables`` over ``spec.trajectories`` noise realizations.

    The stderr is ``std(ddof=1)/sqrt(M)`` (NaN when M = 1 and p > 0).
    Trajectory ids are ``0..M-1``; results are reduced in id order, so the
    means do not depend on ``workers``.
    """
    M = int(spec.trajectories)
    chash = circuit.digest()
    prog = compile_circuit(circuit)
    cache = PrefixCache(prog, initial)
    base = _evaluate(observables, cache.noiseless())
    if spec.p == 0.0:
        trajs = [TrajectoryResult(i, spec.master_seed, base, 0) for i in range(M)] if keep_trajectories else []
        return EnsembleResult(
            spec,
            chash,
            {k: v.copy() for k, v in base.items()},
            {k: np.zeros_like(v) for k, v in base.items()},
            np.zeros(M, dtype=np.int64),
            trajs,
        )

    def one(tid):
        errs = draw_errors(prog.arity, spec, tid, prog.prep_gates)
        if not errs:
            return base, 0
        return _evaluate(observables, cache.run(errs)), len(errs)

    ids = range(M)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, ids))
    else:
        results = [one(i) for i in ids]

    stacked = {k: np.stack([r[0][k] for r in results]) for k in base}
    mean = {k: v.mean(axis=0) for k, v in stacked.items()}
    if M > 1:
        stderr = {k: v.std(axis=0, ddof=1) / math.sqrt(M) for k, v in stacked.items()}
    else:
        stderr = {k: np.full_like(v[0], np.nan) for k, v in stacked.items()}
    n_err = np.array([r[1] for r in results], dtype=np.int64)
    trajs = []
    if keep_trajectories:
        trajs = [TrajectoryResult(i, spec.master_seed, r[0], r[1]) for i, r in enumerate(results)]
    return EnsembleResult(spec, chash, mean, stderr, n_err, trajs)


def sample_ensemble(circuit: Circuit, spec: NoiseSpec, shots: int) -> SampleSet:
    """Pool ``shots`` measurements spread evenly over the noise trajectories.

    Trajectory ``i`` gets ``shots // M`` shots, plus one for the first
    ``shots % M`` ids; its shots use the stream ``(master_seed, i, 1)``.
    """
    M = int(spec.trajectories)
    if shots < M:
        raise ValueError(f"need at least one shot per trajectory ({shots} < {M})")
    prog = compile_circuit(circuit)
    cache = PrefixCache(prog)
    per, extra = divmod(int(shots), M)
    parts = []
    for tid in range(M):
        n = per + (1 if tid < extra else 0)
        errs = draw_errors(prog.arity, spec, tid, prog.prep_gates)
        state = cache.run(errs) if errs else cache.noiseless()
        ss = np.random.SeedSequence(int(spec.master_seed), spawn_key=(tid, 1))
        parts.append(sample(state, n, ss).outcomes)
    return SampleSet(
        circuit.num_qubits,
        np.concatenate(parts),
        int(spec.master_seed),
        {"p": spec.p, "M": M, "circuit_hash": circuit.digest()},
    )


# ---------------------------------------------------------------------------
# noise-length experiments


@dataclass
class XiTable:
    """Correlation ratios ``C(x, g) / C(x, 0)`` for a grid ``g`` of p or d."""

    kind: str  # "p" or "d"
    grid: list
    xs: np.ndarray
    reference: np.ndarray
    ratio: np.ndarray  # (len(grid), len(xs)); NaN where excluded
    stderr: np.ndarray
    excluded: np.ndarray  # bool per x, reference below the cutoff
    ensembles: list

    def rows(self):
        for i, g in enumerate(self.grid):
            for j, x in enumerate(self.xs):
                if not self.excluded[j]:
                    yield g, int(x), float(self.ratio[i, j]), float(self.stderr[i, j])


def xi_experiment(
    schedule: KzSchedule,
    spec: NoiseSpec,
    p_grid=None,
    d_grid=None,
    xs=None,
    r: int | None = None,
    cutoff: float = INTENSITY_CUTOFF,
    extra_observables: Mapping[str, Observable] | None = None,
    workers: int = 1,
) -> XiTable:
    """Noisy correlations divided by the noiseless ones.

    With ``p_grid`` the circuit is fixed and ``p`` varies (one shared master
    seed). With ``d_grid`` the noise ``spec.p`` is fixed and every step is
    depth-padded to ``d``. Either way the reference is the noiseless drive,
    which padding leaves unchanged. Distances whose reference correlation is
    below ``cutoff`` are excluded.
    """
    if (p_grid is None) == (d_grid is None):
        raise ValueError("give exactly one of p_grid and d_grid")
    L = schedule.L
    r = reference_qubit(L) if r is None else r
    if xs is None:
        xs = range(1, max(r, L - 1 - r) + 1)
    xs = np.array(list(xs), dtype=int)
    base = build_drive(replace(schedule, pad=0))
    obs = {"C": correlation_observable(r, xs)}
    obs.update(extra_observables or {})

    if p_grid is not None:
        kind, grid = "p", [float(p) for p in p_grid]
        jobs = [(base, spec.with_p(p)) for p in grid]
    else:
        kind, grid = "d", [int(d) for d in d_grid]
        jobs = [(pad_depth(base, schedule, d), spec) for d in grid]

    ref_state = PrefixCache(compile_circuit(base)).noiseless()
    reference = correlation_profile(ref_state, r, xs)
    excluded = reference < cutoff
    ratio = np.full((len(grid), xs.shape[0]), np.nan)
    err = np.full_like(ratio, np.nan)
    ensembles = []
    for i, (circ, sp) in enumerate(jobs):
        ens = run_ensemble(circ, sp, obs, workers=workers)
        ensembles.append(ens)
        keep = ~excluded
        ratio[i, keep] = ens.mean["C"][keep] / reference[keep]
        err[i, keep] = ens.stderr["C"][keep] / reference[keep]
    return XiTable(kind, grid, xs, reference, ratio, err, excluded, ensembles)
