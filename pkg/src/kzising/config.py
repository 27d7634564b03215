"""Run configuration: a flat JSON document with four blocks.

Example::

    {
      "schedule": {"L": 13, "T": [0.5, 1.0, 1.5], "dt": 0.1, "order": 2},
      "noise": {"p": [0.0], "trajectories": 1, "master_seed": 7},
      "measurement": {"shots": null, "x": [1, 6]},
      "analysis": {"taylor_order": 4, "atilde_mode": "free"},
      "output": "runs/l13"
    }

Every block is validated up front and all violations are reported together.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .schedule import KzSchedule

__all__ = [
    "ConfigError",
    "ScheduleBlock",
    "NoiseBlock",
    "MeasurementBlock",
    "AnalysisBlock",
    "RunConfig",
    "load_config",
    "fit_dt",
]


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


# reported once per block rather than once per (L, T)
_BLOCK_LEVEL = ("order must", "sampling must")


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def fit_dt(T: float, dt: float, t_stop: float = 0.0) -> float:
    """Largest step ``<= dt`` that divides ``t_stop + T`` into whole steps."""
    span = t_stop + T
    n = max(1, math.ceil(span / dt - 1e-9))
    return span / n


@dataclass
class ScheduleBlock:
    L: list = field(default_factory=lambda: [13])
    T: list = field(default_factory=lambda: [1.0])
    dt: float = 0.1
    order: int = 2
    t_stop: float = 0.0
    pad: list = field(default_factory=lambda: [1])
    sampling: str = "midpoint"
    dt_policy: str = "strict"  # or "fit": shrink dt per T to a whole number of steps
    representation: str = "abstract"  # or "native"

    def __post_init__(self):
        self.L = _as_list(self.L)
        self.T = _as_list(self.T)
        self.pad = _as_list(self.pad)

    def problems(self):
        out = []
        if not self.L:
            out.append("schedule.L is empty")
        if not self.T:
            out.append("schedule.T is empty")
        if not self.pad:
            out.append("schedule.pad is empty")
        for d in self.pad:
            if not isinstance(d, int) or d < 1 or d % 2 == 0:
                out.append(f"schedule.pad entries must be odd positive integers (got {d!r})")
        if self.order not in (1, 2):
            out.append(f"schedule.order must be 1 or 2 (got {self.order!r})")
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            out.append(f"schedule.dt must be positive (got {self.dt!r})")
        if self.sampling not in ("midpoint", "left"):
            out.append(f"schedule.sampling must be 'midpoint' or 'left' (got {self.sampling!r})")
        if self.dt_policy not in ("strict", "fit"):
            out.append(f"schedule.dt_policy must be 'strict' or 'fit' (got {self.dt_policy!r})")
        if self.representation not in ("abstract", "native"):
            out.append(f"schedule.representation must be 'abstract' or 'native' (got {self.representation!r})")
        for L in self.L:
            if not isinstance(L, int):
                out.append(f"schedule.L entries must be integers (got {L!r})")
                continue
            if L % 2 == 0:
                out.append(f"schedule.L={L}: correlations need an odd chain with a middle qubit")
            for T in self.T:
                try:
                    s = self.schedule(L, T, 1, check=False)
                except (TypeError, ValueError) as e:
                    out.append(f"schedule L={L}, T={T}: {e}")
                    continue
                out += [f"schedule L={L}, T={T}: {p}" for p in s.problems() if not p.startswith(_BLOCK_LEVEL)]
        return out

    def schedule(self, L, T, pad=1, check=True) -> KzSchedule:
        T = float(T)
        dt = float(self.dt)
        if self.dt_policy == "fit" and T > 0 and dt > 0:
            dt = fit_dt(T, dt, float(self.t_stop))
        kw = dict(L=int(L), T=T, dt=dt, order=int(self.order), t_stop=float(self.t_stop),
                  pad=0 if pad == 1 else int(pad), sampling=self.sampling)
        if check:
            return KzSchedule(**kw)
        obj = object.__new__(KzSchedule)
        for k, v in kw.items():
            object.__setattr__(obj, k, v)
        object.__setattr__(obj, "t_start", -T)
        return obj


@dataclass
class NoiseBlock:
    p: list = field(default_factory=lambda: [0.0])
    trajectories: int = 1
    master_seed: int = 0
    noisy_preparation: bool = True

    def __post_init__(self):
        self.p = _as_list(self.p)

    def problems(self):
        out = []
        if not self.p:
            out.append("noise.p is empty")
        for p in self.p:
            if not isinstance(p, (int, float)) or not 0 <= p <= 1:
                out.append(f"noise.p entries must lie in [0, 1] (got {p!r})")
        if not isinstance(self.trajectories, int) or self.trajectories < 1:
            out.append(f"noise.trajectories must be a positive integer (got {self.trajectories!r})")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed < 2**64:
            out.append(f"noise.master_seed must be an unsigned 64-bit integer (got {self.master_seed!r})")
        return out


@dataclass
class MeasurementBlock:
    shots: int | None = None  # None: exact expectation values
    r: int | None = None  # reference qubit, default the middle one
    x: list = field(default_factory=lambda: [1, 6])  # inclusive distance range
    t: float | None = None  # evaluation time, default schedule t_stop
    energy: bool = False
    entropy: bool = False

    def problems(self):
        out = []
        if self.shots is not None and (not isinstance(self.shots, int) or self.shots < 2):
            out.append(f"measurement.shots must be null or an integer >= 2 (got {self.shots!r})")
        if not (isinstance(self.x, list) and len(self.x) == 2 and all(isinstance(v, int) for v in self.x)
                and 1 <= self.x[0] <= self.x[1]):
            out.append(f"measurement.x must be [x_min, x_max] with 1 <= x_min <= x_max (got {self.x!r})")
        if self.r is not None and (not isinstance(self.r, int) or self.r < 0):
            out.append(f"measurement.r must be a non-negative integer (got {self.r!r})")
        if self.t is not None:
            out.append("measurement.t: only the end of the drive (t = schedule.t_stop) is supported")
        return out

    def distances(self):
        return list(range(self.x[0], self.x[1] + 1))


@dataclass
class AnalysisBlock:
    input: str | None = None
    taylor_order: int = 4
    atilde_mode: str | float = "free"
    nu: float = 1.0
    eta: float = 0.25
    z: float = 1.0
    nu_grid: list = field(default_factory=lambda: [0.5, 1.5, 101])
    eta_grid: list = field(default_factory=lambda: [0.0, 0.5, 101])
    region_factor: float = 1.2
    x_window: list | None = None
    T_window: list | None = None
    cutoff: float = 1e-3
    xi_window: list | None = None
    xi_intercept: bool = True
    xi_tilde: float | None = None
    fit_xi_tilde: bool = False
    xi_tilde_search: list = field(default_factory=lambda: [1.0, 1e6])

    def problems(self):
        out = []
        if not isinstance(self.taylor_order, int) or self.taylor_order < 0:
            out.append(f"analysis.taylor_order must be a non-negative integer (got {self.taylor_order!r})")
        if self.atilde_mode not in ("free", "fixed") and not (
            isinstance(self.atilde_mode, (int, float)) and self.atilde_mode >= 0
        ):
            out.append(f"analysis.atilde_mode must be 'free', 'fixed' or a number >= 0 (got {self.atilde_mode!r})")
        if not self.nu > 0:
            out.append("analysis.nu must be positive")
        if not self.z > 0:
            out.append("analysis.z must be positive")
        for name in ("nu_grid", "eta_grid"):
            g = getattr(self, name)
            if not (isinstance(g, list) and len(g) == 3 and g[1] >= g[0] and isinstance(g[2], int) and g[2] >= 1
                    and all(math.isfinite(v) for v in g)):
                out.append(f"analysis.{name} must be [start, stop, count] with finite bounds (got {g!r})")
        if self.nu_grid and len(self.nu_grid) == 3 and self.nu_grid[0] <= 0:
            out.append("analysis.nu_grid must stay positive")
        if not self.region_factor >= 1:
            out.append("analysis.region_factor must be >= 1")
        for name in ("x_window", "T_window", "xi_window"):
            w = getattr(self, name)
            if w is not None and not (isinstance(w, list) and len(w) == 2 and w[0] <= w[1]):
                out.append(f"analysis.{name} must be null or [lo, hi] (got {w!r})")
        if not (isinstance(self.xi_tilde_search, list) and len(self.xi_tilde_search) == 2
                and 0 < self.xi_tilde_search[0] < self.xi_tilde_search[1]):
            out.append("analysis.xi_tilde_search must be [lo, hi] with 0 < lo < hi")
        if self.xi_tilde is not None and not self.xi_tilde > 0:
            out.append("analysis.xi_tilde must be positive")
        if not self.cutoff >= 0:
            out.append("analysis.cutoff must be >= 0")
        return out


_BLOCKS = {
    "schedule": ScheduleBlock,
    "noise": NoiseBlock,
    "measurement": MeasurementBlock,
    "analysis": AnalysisBlock,
}


@dataclass
class RunConfig:
    schedule: ScheduleBlock = field(default_factory=ScheduleBlock)
    noise: NoiseBlock = field(default_factory=NoiseBlock)
    measurement: MeasurementBlock = field(default_factory=MeasurementBlock)
    analysis: AnalysisBlock = field(default_factory=AnalysisBlock)
    output: str = "out"
    threads: int = 1

    def problems(self):
        out = []
        for name in _BLOCKS:
            out += getattr(self, name).problems()
        if not isinstance(self.threads, int) or self.threads < 1:
            out.append(f"threads must be a positive integer (got {self.threads!r})")
        if not self.output:
            out.append("output directory is empty")
        m = self.measurement
        if m.shots is not None and (m.energy or m.entropy):
            out.append("measurement.energy and measurement.entropy need exact evaluation (shots = null)")
        if (m.shots is not None and isinstance(self.noise.trajectories, int) and isinstance(m.shots, int)
                and any(isinstance(p, (int, float)) and p > 0 for p in self.noise.p)
                and m.shots < self.noise.trajectories):
            out.append("measurement.shots must be >= noise.trajectories (every trajectory gets a shot)")
        if self.schedule.representation == "native" and not self.noise.noisy_preparation:
            out.append("noise.noisy_preparation = false needs the abstract representation")
        for L in self.schedule.L:
            if isinstance(L, int) and L >= 2 and m.x and isinstance(m.x, list) and len(m.x) == 2:
                r = m.r if m.r is not None else (L - 1) // 2
                if isinstance(r, int) and r >= L:
                    out.append(f"measurement.r={r} outside a chain of L={L}")
                elif isinstance(m.x[1], int) and isinstance(r, int) and m.x[1] > max(r, L - 1 - r):
                    out.append(f"measurement.x max {m.x[1]} exceeds the chain (L={L}, r={r})")
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError(["configuration must be a JSON object"])
        problems = []
        kw = {}
        for key, val in d.items():
            if key in _BLOCKS:
                block = _BLOCKS[key]
                if not isinstance(val, dict):
                    problems.append(f"{key} must be an object")
                    continue
                names = {f.name for f in fields(block)}
                unknown = sorted(set(val) - names)
                problems += [f"unknown key {key}.{u}" for u in unknown]
                try:
                    kw[key] = block(**{k: v for k, v in val.items() if k in names})
                except TypeError as e:
                    problems.append(f"{key}: {e}")
            elif key in ("output", "threads"):
                kw[key] = val
            else:
                problems.append(f"unknown key {key}")
        if problems:
            raise ConfigError(problems)
        return cls(**kw)


def load_config(path) -> RunConfig:
    """Read a config file, or the config embedded in a run manifest."""
    p = Path(path)
    try:
        d = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {p}"]) from None
    except json.JSONDecodeError as e:
        raise ConfigError([f"{p}: not valid JSON ({e})"]) from None
    if isinstance(d, dict) and "config" in d and "config_hash" in d:
        d = d["config"]
    return RunConfig.from_dict(d)
