import json
import math

import numpy as np
import pytest

from kzising import io as kio
from kzising.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, point_seed
from kzising.config import ConfigError, RunConfig, fit_dt, load_config
from kzising.scaling import ScanResult
from kzising.schedule import KzSchedule, build_drive
from kzising.statevector import SampleSet, correlation_exact, run_circuit


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _small(**over):
    cfg = {
        "schedule": {"L": [5], "T": [1.0], "dt": 0.5, "order": 1},
        "noise": {"p": [0.0]},
        "measurement": {"x": [1, 2]},
    }
    for k, v in over.items():
        cfg.setdefault(k, {}).update(v)
    return cfg


class TestIO:
    def test_samples_round_trip(self, tmp_path):
        s = SampleSet.from_counts({"01101": 3, "00000": 5, "11111": 1})
        s.seed = 99
        path = kio.write_samples(tmp_path / "s.csv", s, ["extra note"])
        back = kio.read_samples(path)
        assert back.counts() == s.counts()
        comments, header, _ = kio.read_csv(path)
        assert header == ["bitstring", "count"]
        assert "seed=99" in comments and "extra note" in comments

    def test_observables_round_trip_and_units(self, tmp_path):
        rows = [(1.0, 0.0, 1, 0.123456789012345, 1e-3), (1.5, 0.0, 2, -0.25, 0.0)]
        path = kio.write_observables(tmp_path / "o.csv", rows, ["L=7"])
        obs = kio.read_observables(path)
        assert obs["x"].tolist() == [1, 2]
        assert obs["value"][0] == rows[0][3]
        comments, _, _ = kio.read_csv(path)
        assert comments[0].startswith("units:")

    def test_observables_to_collapse(self):
        dt = np.dtype([("T", float), ("t", float), ("x", int), ("value", float), ("stderr", float)])
        obs = np.array([(1.0, 0.0, 1, 0.5, 0.1), (2.0, 0.0, 3, 0.2, 0.2)], dtype=dt)
        d = kio.observables_to_collapse(obs)
        assert np.array_equal(d.dC, [0.1, 0.2]) and np.array_equal(d.x, [1, 3])
        assert np.all(kio.observables_to_collapse(obs, exact_weights=True).dC == 1.0)
        obs["stderr"][0] = 0.0
        assert np.all(kio.observables_to_collapse(obs).dC == 1.0)

    def test_surface_round_trip(self, tmp_path):
        surf = np.array([[1.0, 2.0, np.nan], [0.5, 3.0, 4.0]])
        scan = ScanResult(np.array([0.8, 1.0]), np.array([0.0, 0.25, 0.5]), surf, np.isnan(surf))
        back = kio.read_surface(kio.write_surface(tmp_path / "s.csv", scan))
        assert np.array_equal(back.nu, scan.nu) and np.array_equal(back.eta, scan.eta)
        assert np.array_equal(np.isnan(back.surface), np.isnan(surf))
        assert np.allclose(back.surface[~back.failed], surf[~np.isnan(surf)])

    def test_ratios_round_trip(self, tmp_path):
        rows = [(1e-3, 1, 0.9, 0.01), (1e-3, 2, 0.8, 0.02)]
        kind, a = kio.read_ratios(kio.write_ratios(tmp_path / "r.csv", "p", rows))
        assert kind == "p" and np.allclose(a, rows)

    def test_json_non_finite(self, tmp_path):
        kio.write_json(tmp_path / "j.json", {"a": math.inf, "b": math.nan, "c": np.arange(2)})
        assert kio.read_json(tmp_path / "j.json") == {"a": "inf", "b": None, "c": [0, 1]}

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        kio.atomic_write_text(tmp_path / "a.txt", "x")
        kio.atomic_write_text(tmp_path / "a.txt", "y")
        assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
        assert (tmp_path / "a.txt").read_text() == "y"


class TestConfig:
    def test_defaults_valid(self):
        RunConfig().validate()

    def test_empty_T_list(self):
        with pytest.raises(ConfigError) as e:
            RunConfig.from_dict(_small(schedule={"T": []})).validate()
        assert "schedule.T is empty" in e.value.problems

    def test_every_problem_listed(self):
        cfg = _small(schedule={"T": [], "order": 3, "pad": [2]}, measurement={"shots": 1})
        with pytest.raises(ConfigError) as e:
            RunConfig.from_dict(cfg).validate()
        assert len(e.value.problems) >= 4

    def test_unknown_keys(self):
        with pytest.raises(ConfigError) as e:
            RunConfig.from_dict({"schedule": {"foo": 1}, "bar": 2})
        assert set(e.value.problems) == {"unknown key schedule.foo", "unknown key bar"}

    def test_even_chain_rejected(self):
        assert any("odd chain" in p for p in RunConfig.from_dict(_small(schedule={"L": [6]})).problems())

    def test_step_mismatch_and_fit_policy(self):
        cfg = RunConfig.from_dict(_small(schedule={"T": [1.0], "dt": 0.3}))
        assert cfg.problems()
        cfg.schedule.dt_policy = "fit"
        assert cfg.problems() == []
        assert fit_dt(1.0, 0.3) == pytest.approx(0.25)

    def test_digest_and_round_trip(self):
        a = RunConfig.from_dict(_small())
        b = RunConfig.from_dict(a.to_dict())
        assert a.digest() == b.digest()
        b.noise.master_seed = 1
        assert a.digest() != b.digest()

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")


class TestCLI:
    def test_empty_T_exit_code_no_outputs(self, tmp_path):
        out = tmp_path / "out"
        rc = main(["run", "--config", _write(tmp_path, _small(schedule={"T": []})), "--out", str(out)])
        assert rc == EXIT_CONFIG
        assert not out.exists()

    def test_run_exact_matches_library(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", _write(tmp_path, _small()), "--out", str(out)]) == EXIT_OK
        obs = kio.read_observables(out / "L5_p0_d1" / "observables.csv")
        sv = run_circuit(build_drive(KzSchedule(5, 1.0, 0.5, 1)))
        for row in obs:
            assert row["value"] == pytest.approx(correlation_exact(sv, 2, int(row["x"])).value, abs=1e-14)
        man = kio.read_json(out / "manifest.json")
        assert man["command"] == "run"
        assert set(man["outputs"]) == {"L5_p0_d1/observables.csv"}
        assert man["config_hash"] == RunConfig.from_dict(man["config"]).digest()

    def test_run_requires_single_point(self, tmp_path):
        cfg = _small(noise={"p": [0.0, 0.1]})
        assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_manifest_replay_bit_identical(self, tmp_path):
        cfg = _small(noise={"p": [0.05], "trajectories": 8, "master_seed": 17}, measurement={"shots": 512})
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(a)]) == EXIT_OK
        assert main(["run", "--config", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
        ma, mb = kio.read_json(a / "manifest.json"), kio.read_json(b / "manifest.json")
        assert ma["outputs"] == mb["outputs"]
        files = [f for f in ma["outputs"] if f.endswith(".csv")]
        assert any("samples" in f for f in files)
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_seed_override(self, tmp_path):
        cfg = _write(tmp_path, _small(noise={"p": [0.05], "trajectories": 4}, measurement={"shots": 256}))
        main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
        ha = kio.read_json(tmp_path / "a" / "manifest.json")["outputs"]
        hb = kio.read_json(tmp_path / "b" / "manifest.json")["outputs"]
        key = next(k for k in ha if "samples" in k)
        assert ha[key] != hb[key]

    def test_point_seed_independent_of_p(self):
        assert point_seed(5, 7, 0, 1) != point_seed(5, 7, 1, 1)
        assert point_seed(5, 7, 0, 1) == point_seed(5, 7, 0, 1)

    def test_build(self, tmp_path):
        cfg = _small(schedule={"T": [1.0, 2.0], "pad": [1, 3]})
        assert main(["build", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
        index = kio.read_json(tmp_path / "o" / "circuits" / "index.json")
        assert len(index) == 4
        assert all((tmp_path / "o" / e["file"]).exists() for e in index)

    def test_sweep_threads_and_collapse_inputs(self, tmp_path):
        cfg = _small(schedule={"T": [0.5, 1.0, 1.5], "dt": 0.25, "order": 2})
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "--config", _write(tmp_path, cfg), "--out", str(a)]) == EXIT_OK
        assert main(["sweep", "--config", _write(tmp_path, cfg), "--out", str(b), "--threads", "3"]) == EXIT_OK
        index = kio.read_json(a / "sweep_index.json")
        assert len(index) == 1
        f = index[0]["file"]
        assert (a / f).read_bytes() == (b / f).read_bytes()
        obs = kio.read_observables(a / f)
        assert sorted(set(obs["T"])) == [0.5, 1.0, 1.5]
        assert len(kio.observables_to_collapse(obs)) == 6

    def _collapse_input(self, tmp_path):
        # synthetic data obeying an exact collapse with nu = 1, eta = 0.25
        rows = []
        for T in (1.0, 2.0, 4.0):
            for x in range(1, 7):
                X = x / T ** 0.5
                rows.append((T, 0.0, x, T ** -0.125 * math.exp(-X) * (1 + 0.2 * X), 0.0))
        return str(kio.write_observables(tmp_path / "obs.csv", rows))

    def test_collapse(self, tmp_path):
        cfg = {"analysis": {"input": self._collapse_input(tmp_path), "taylor_order": 2}}
        out = tmp_path / "o"
        assert main(["collapse", "--config", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rep = kio.read_json(out / "collapse_report.json")
        assert rep["fit"]["chi2_per_dof"] < 1e-8
        assert rep["n_points"] == 18

    def test_scan(self, tmp_path):
        cfg = {"analysis": {"input": self._collapse_input(tmp_path), "taylor_order": 2,
                            "nu_grid": [0.8, 1.2, 5], "eta_grid": [0.15, 0.35, 5]}}
        out = tmp_path / "o"
        assert main(["scan", "--config", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rep = kio.read_json(out / "scan_report.json")
        assert rep["argmin"] == {"nu": 1.0, "eta": 0.25}
        assert rep["contains_reference"] is True
        assert kio.read_surface(out / "surface.csv").surface.shape == (5, 5)

    def test_missing_analysis_input(self, tmp_path):
        cfg = {"analysis": {"input": str(tmp_path / "none.csv")}}
        assert main(["collapse", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_numeric_failure_exit_code(self, tmp_path):
        # every point at the same (T, x): the scaling variable is constant and no fit is possible
        rows = [(1.0, 0.0, 2, 0.5 + 0.01 * i, 0.01) for i in range(8)]
        path = str(kio.write_observables(tmp_path / "obs.csv", rows))
        cfg = {"analysis": {"input": path, "nu_grid": [0.9, 1.1, 3], "eta_grid": [0.2, 0.3, 3]}}
        assert main(["scan", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC

    def test_xi(self, tmp_path):
        cfg = {"schedule": {"L": [7], "T": [1.0], "dt": 0.25},
               "noise": {"p": [0.0, 0.02, 0.04], "trajectories": 40, "master_seed": 3},
               "measurement": {"x": [1, 3]}, "analysis": {"xi_window": [1, 3], "cutoff": 0.0}}
        out = tmp_path / "o"
        assert main(["xi", "--config", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rep = kio.read_json(out / "xi_report.json")
        assert rep["kind"] == "p" and len(rep["fits"]) == 3
        kind, a = kio.read_ratios(out / "ratios.csv")
        assert kind == "p" and np.all(a[a[:, 0] == 0.0][:, 2] == 1.0)
        assert len(kio.read_json(out / "manifest.json")["noise"]) == 3

    def test_bad_seed_flag(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["run", "--config", _write(tmp_path, _small()), "--seed", "-1"])
