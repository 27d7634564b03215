"""Command line driver: ``kzising {build,run,sweep,collapse,scan,xi} --config run.json``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
Every command writes its files atomically into the output directory and
finishes with ``manifest.json``, which embeds the full configuration and can
be passed back as ``--config`` to replay the run.
"""

from __future__ import annotations

import argparse
import hashlib
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as kio
from .circuit import circuit_to_text, transpile_native
from .config import ConfigError, RunConfig, load_config
from .noise import (
    NoiseSpec,
    correlation_observable,
    energy_observable,
    entropy_observable,
    run_ensemble,
    sample_ensemble,
    xi_experiment,
)
from .scaling import (
    CollapseData,
    RankDeficiencyError,
    RescalingParams,
    exponent_scan,
    extract_xi,
    fit_power_law,
    fit_scaling_function,
    fit_xi_tilde,
    rescale,
)
from .schedule import build_drive, reference_qubit
from .statevector import correlation_sampled, sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class NumericFailure(ArithmeticError):
    pass


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def point_seed(master_seed: int, L: int, T_index: int, d: int) -> int:
    """Seed of one sweep point. ``p`` is left out on purpose so that points
    differing only in noise strength share random numbers."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(L), int(T_index), int(d)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class Run:
    """Output directory bookkeeping; the manifest is written by :meth:`finish`."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.t0 = time.time()
        self.outputs = []
        self.seeds = {}
        self.noise = []

    def path(self, rel) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def wrote(self, path: Path):
        self.outputs.append(path)
        return path

    def finish(self):
        import numba

        man = {
            "command": self.command,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.digest(),
            "seeds": {"master_seed": self.cfg.noise.master_seed, "points": self.seeds},
            "noise": self.noise,
            "versions": {
                "kzising": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "numba": numba.__version__,
            },
            "wall_time_s": time.time() - self.t0,
            "outputs": {str(p.relative_to(self.out)): _sha256(p) for p in self.outputs},
        }
        kio.write_json(self.out / "manifest.json", man)


# ---------------------------------------------------------------------------
# simulation of one (L, T, p, d) point


def _circuit(cfg: RunConfig, sched):
    c = build_drive(sched)
    if cfg.schedule.representation == "native":
        c = transpile_native(c)
    return c


def compute_point(cfg: RunConfig, L: int, T_index: int, p: float, d: int):
    """Observable rows, optional samples and scalar summaries for one point."""
    T = cfg.schedule.T[T_index]
    sched = cfg.schedule.schedule(L, T, d)
    circ = _circuit(cfg, sched)
    m = cfg.measurement
    r = m.r if m.r is not None else reference_qubit(L)
    xs = m.distances()
    seed = point_seed(cfg.noise.master_seed, L, T_index, d)
    spec = NoiseSpec(float(p), seed, cfg.noise.trajectories if p > 0 else 1, cfg.noise.noisy_preparation)
    t_eval = sched.t_stop
    out = {"L": L, "T": float(T), "p": float(p), "d": d, "seed": seed, "dt": sched.dt, "gates": circ.gate_count}
    if m.shots is None:
        obs = {"C": correlation_observable(r, xs)}
        if m.energy:
            obs["energy"] = energy_observable(sched, t_eval)
        if m.entropy:
            obs["entropy"] = entropy_observable(L // 2)
        ens = run_ensemble(circ, spec, obs, workers=1)
        out["rows"] = [(T, t_eval, x, float(v), float(e)) for x, v, e in zip(xs, ens.mean["C"], ens.stderr["C"])]
        for k in ("energy", "entropy"):
            if k in obs:
                out[k] = (float(ens.mean[k]), float(ens.stderr[k]))
        out["noise"] = ens.manifest()
    else:
        if p > 0:
            samples = sample_ensemble(circ, spec, m.shots)
        else:
            from .trajectory import simulate

            samples = sample(simulate(circ), m.shots, np.random.SeedSequence(seed, spawn_key=(0, 1)))
        samples.seed = seed
        rows = []
        for x in xs:
            est = correlation_sampled(samples, r, x)
            rows.append((T, t_eval, x, est.value, est.stderr))
        out["rows"] = rows
        out["samples"] = samples
        out["noise"] = {"master_seed": seed, "p": float(p), "M": spec.trajectories, "circuit_hash": circ.digest()}
    return out


def _tag(v):
    return format(v, "g").replace("-", "m")


def _emit_point(run: Run, res, prefix=""):
    base = f"{prefix}L{res['L']}_p{_tag(res['p'])}_d{res['d']}"
    run.seeds[f"{base}_T{_tag(res['T'])}"] = res["seed"]
    run.noise.append(dict(res["noise"], L=res["L"], T=res["T"], d=res["d"]))
    if "samples" in res:
        run.wrote(kio.write_samples(run.path(f"{base}/samples_T{_tag(res['T'])}.csv"), res["samples"],
                                    [f"L={res['L']} T={res['T']} p={res['p']} d={res['d']}"]))


def _collect(run: Run, points, prefix=""):
    """Group point results by (L, p, d), write one observables CSV per group."""
    groups = {}
    for res in points:
        _emit_point(run, res, prefix)
        groups.setdefault((res["L"], res["p"], res["d"]), []).append(res)
    files = {}
    for (L, p, d), items in groups.items():
        items.sort(key=lambda r: r["T"])
        rows = [row for it in items for row in it["rows"]]
        name = f"{prefix}L{L}_p{_tag(p)}_d{d}/observables.csv"
        meta = [f"L={L} p={p} d={d} dt={items[0]['dt']} order={run.cfg.schedule.order}"]
        files[(L, p, d)] = run.wrote(kio.write_observables(run.path(name), rows, meta))
        scal = {}
        for k in ("energy", "entropy"):
            if k in items[0]:
                scal[k] = [{"T": it["T"], "mean": it[k][0], "stderr": it[k][1]} for it in items]
        if scal:
            run.wrote(kio.write_json(run.path(f"{prefix}L{L}_p{_tag(p)}_d{d}/scalars.json"), scal))
    return files


def _single(cfg: RunConfig, what: str):
    problems = []
    for name, vals in (("schedule.L", cfg.schedule.L), ("noise.p", cfg.noise.p), ("schedule.pad", cfg.schedule.pad)):
        if len(vals) != 1:
            problems.append(f"{what} needs exactly one value of {name} (got {vals}); use sweep")
    if problems:
        raise ConfigError(problems)


def _points(cfg: RunConfig, threads: int):
    jobs = [
        (L, i, p, d)
        for L in cfg.schedule.L
        for i in range(len(cfg.schedule.T))
        for p in cfg.noise.p
        for d in cfg.schedule.pad
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda j: compute_point(cfg, *j), jobs))
    return [compute_point(cfg, *j) for j in jobs]


# ---------------------------------------------------------------------------
# commands


def cmd_build(cfg: RunConfig, run: Run):
    index = []
    for L in cfg.schedule.L:
        for T in cfg.schedule.T:
            for d in cfg.schedule.pad:
                c = _circuit(cfg, cfg.schedule.schedule(L, T, d))
                name = f"circuits/L{L}_T{_tag(T)}_d{d}.txt"
                run.wrote(kio.atomic_write_text(run.path(name), circuit_to_text(c)))
                index.append({"file": name, "L": L, "T": T, "d": d, "gates": c.gate_count,
                              "depth": c.depth(), "digest": c.digest()})
    run.wrote(kio.write_json(run.path("circuits/index.json"), index))


def cmd_run(cfg: RunConfig, run: Run):
    _single(cfg, "run")
    _collect(run, _points(cfg, cfg.threads))


def cmd_sweep(cfg: RunConfig, run: Run):
    files = _collect(run, _points(cfg, cfg.threads), prefix="points/")
    run.wrote(kio.write_json(run.path("sweep_index.json"), [
        {"L": L, "p": p, "d": d, "file": str(f.relative_to(run.out))} for (L, p, d), f in files.items()
    ]))


def _analysis_data(cfg: RunConfig, run: Run) -> CollapseData:
    a = cfg.analysis
    if a.input:
        try:
            obs = kio.read_observables(a.input)
        except FileNotFoundError:
            raise ConfigError([f"analysis.input not found: {a.input}"]) from None
    else:
        _single(cfg, "analysis without analysis.input")
        files = _collect(run, _points(cfg, cfg.threads))
        obs = kio.read_observables(next(iter(files.values())))
    m = np.ones(obs.shape[0], dtype=bool)
    if a.x_window:
        m &= (obs["x"] >= a.x_window[0]) & (obs["x"] <= a.x_window[1])
    if a.T_window:
        m &= (obs["T"] >= a.T_window[0] - 1e-12) & (obs["T"] <= a.T_window[1] + 1e-12)
    data = kio.observables_to_collapse(obs[m])
    if len(data) == 0:
        raise ConfigError(["analysis windows leave no data points"])
    return data


def cmd_collapse(cfg: RunConfig, run: Run):
    a = cfg.analysis
    data = _analysis_data(cfg, run)
    params = RescalingParams(a.nu, a.eta, a.z)
    report = {"params": {"nu": a.nu, "eta": a.eta, "z": a.z, "a": params.a, "b": params.b},
              "windows": {"x": a.x_window, "T": a.T_window}, "n_points": len(data)}
    xt = a.xi_tilde
    if a.fit_xi_tilde:
        xf = fit_xi_tilde(data, params, a.taylor_order, a.atilde_mode, tuple(a.xi_tilde_search))
        report["xi_tilde_fit"] = {"xi_tilde": xf.xi_tilde, "chi2_per_dof": xf.chi2_per_dof,
                                  "unidentifiable": xf.unidentifiable, "at_edge": xf.at_edge,
                                  "profile": {"xi_tilde": xf.grid, "chi2_per_dof": xf.profile}}
        xt = None if (xf.unidentifiable or xf.at_edge) else xf.xi_tilde
    X, Y, dY = rescale(data, params, xt)
    try:
        fit = fit_scaling_function(X, Y, dY, a.taylor_order, a.atilde_mode)
    except ValueError as e:
        raise NumericFailure(str(e)) from e
    report["fit"] = {"M": fit.M, "coefficients": fit.coefficients, "atilde": fit.atilde, "chi2": fit.chi2,
                     "ndof": fit.ndof, "chi2_per_dof": fit.chi2_per_dof, "xi_tilde": xt}
    rows = [(T, x, Xi, Yi, dYi, float(fit(Xi))) for T, x, Xi, Yi, dYi in zip(data.T, data.x, X, Y, dY)]
    run.wrote(kio.write_csv(run.path("collapse.csv"), ["T", "x", "X", "Y", "dY", "F"], rows,
                            ["X = x T^-a and Y = C T^b; F is the fitted scaling function at X"]))
    run.wrote(kio.write_json(run.path("collapse_report.json"), report))


def _grid(spec):
    lo, hi, n = spec
    return np.linspace(lo, hi, int(n))


def cmd_scan(cfg: RunConfig, run: Run):
    a = cfg.analysis
    data = _analysis_data(cfg, run)
    scan = exponent_scan(data, _grid(a.nu_grid), _grid(a.eta_grid), a.taylor_order, a.atilde_mode, a.z,
                         a.xi_tilde, a.region_factor)
    reg = scan.region
    ii, jj = np.nonzero(reg)
    report = {
        "argmin": {"nu": scan.argmin[0], "eta": scan.argmin[1]},
        "min_chi2_per_dof": scan.minimum,
        "region_factor": a.region_factor,
        "region_cells": int(reg.sum()),
        "region_bounds": {"nu": [float(scan.nu[ii].min()), float(scan.nu[ii].max())],
                          "eta": [float(scan.eta[jj].min()), float(scan.eta[jj].max())]},
        "failed_cells": int(scan.failed.sum()),
        "windows": {"x": a.x_window, "T": a.T_window},
        "n_points": len(data),
    }
    try:
        report["contains_reference"] = scan.contains(a.nu, a.eta, tol=1e-9)
    except ValueError:
        report["contains_reference"] = None
    run.wrote(kio.write_surface(run.path("surface.csv"), scan))
    run.wrote(kio.write_json(run.path("scan_report.json"), report))


def cmd_xi(cfg: RunConfig, run: Run):
    s, n, m, a = cfg.schedule, cfg.noise, cfg.measurement, cfg.analysis
    problems = []
    if len(s.L) != 1 or len(s.T) != 1:
        problems.append("xi needs exactly one L and one T")
    p_grid = d_grid = None
    if len(n.p) > 1 and len(s.pad) == 1:
        p_grid = n.p
    elif len(s.pad) > 1 and len(n.p) == 1:
        d_grid = s.pad
    else:
        problems.append("xi needs either several noise.p with one schedule.pad, or several schedule.pad with one noise.p")
    if problems:
        raise ConfigError(problems)
    L, T = s.L[0], s.T[0]
    sched = s.schedule(L, T, 1)
    r = m.r if m.r is not None else reference_qubit(L)
    extra = {}
    if m.energy:
        extra["energy"] = energy_observable(sched)
    if m.entropy:
        extra["entropy"] = entropy_observable(L // 2)
    spec = NoiseSpec(float(n.p[0]), n.master_seed, n.trajectories, n.noisy_preparation)
    tab = xi_experiment(sched, spec, p_grid=p_grid, d_grid=d_grid, xs=m.distances(), r=r,
                        cutoff=a.cutoff, extra_observables=extra, workers=cfg.threads)
    window = tuple(a.xi_window) if a.xi_window else (m.x[0], max(m.x[0], min(m.x[1], max(r, L - 1 - r) - 1)))
    fits = []
    for i, g in enumerate(tab.grid):
        keep = ~tab.excluded & np.isfinite(tab.ratio[i])
        try:
            f = extract_xi(tab.xs[keep], tab.ratio[i][keep], tab.stderr[i][keep], window, T, a.xi_intercept)
            fits.append({tab.kind: g, "xi": f.xi, "xi_tilde": f.xi_tilde, "slope": f.slope,
                         "slope_stderr": f.slope_stderr, "no_decay": f.no_decay, "window": f.window})
        except ValueError as e:
            fits.append({tab.kind: g, "error": str(e)})
        run.noise.append(tab.ensembles[i].manifest())
    good = [f for f in fits if "xi" in f and not f["no_decay"] and f[tab.kind] > 0]
    report = {"kind": tab.kind, "L": L, "T": T, "r": r, "master_seed": n.master_seed,
              "reference": {"x": tab.xs, "C": tab.reference, "excluded": tab.excluded}, "fits": fits}
    if len(good) >= 2:
        g = np.array([f[tab.kind] for f in good], dtype=float)
        xi = np.array([f["xi"] for f in good])
        dxi = np.array([f["slope_stderr"] * f["xi"] ** 2 for f in good])
        pl = fit_power_law(g, xi, dxi if np.all(dxi > 0) else None)
        report["power_law"] = {"exponent": pl.exponent, "exponent_stderr": pl.exponent_stderr,
                               "prefactor": pl.prefactor}
    for k in extra:
        report[k] = [{tab.kind: g, "mean": float(e.mean[k]), "stderr": float(e.stderr[k])}
                     for g, e in zip(tab.grid, tab.ensembles)]
    run.wrote(kio.write_ratios(run.path("ratios.csv"), tab.kind, list(tab.rows()),
                               [f"L={L} T={T} r={r} master_seed={n.master_seed}"]))
    run.wrote(kio.write_json(run.path("xi_report.json"), report))


COMMANDS = {
    "build": cmd_build,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "collapse": cmd_collapse,
    "scan": cmd_scan,
    "xi": cmd_xi,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kzising", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="JSON config or a previous manifest.json")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.output = args.out
        if args.seed is not None:
            cfg.noise.master_seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        cfg.validate()
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    run = Run(cfg, args.command)
    try:
        COMMANDS[args.command](cfg, run)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, RankDeficiencyError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    run.finish()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
