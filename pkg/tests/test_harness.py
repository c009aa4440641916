"""Command-level behavior: exit codes, output files, determinism.

Everything here drives the real commands against small linear-regression
configs (N=6, a few dozen steps) so the whole module stays under a few
seconds.  The determinism checks compare emitted bytes, not parsed
values: that is the actual contract.
"""

import json
import os
import textwrap

import numpy as np
import pytest

from exlg import __version__
from exlg.cli import main
from exlg.config import ConfigError, load_config
from exlg.harness import (
    EXIT_ASSUMPTION,
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_OK,
    _compare_labels,
    _fmt,
    _resolve_threads,
    build_mixing,
    build_task,
    cmd_compare,
    cmd_gen_data,
    cmd_run,
    cmd_sweep_h,
    cmd_theory,
    cmd_validate,
    write_csv,
)
from exlg.samplers import derive_seed
from exlg.tasks import gen_linreg_data
from exlg.theory import compute_constants, shrink_to_admissible

BASE = """
[task]
kind = linreg
n_points = 120
dim = 2
beta_true = 1.0 -0.5

[network]
topology = ring
n = 6
h = 0.3
delta = 0.2

[sampler]
algorithm = GEN_EXTRA_SGLD
eta = 0.01
steps = 40

[run]
seed = 7
out = {out}
replicas = 3
record_every = 5
"""


def make_cfg(tmp_path, out_name="out", text=BASE, **edits):
    body = textwrap.dedent(text).format(out=str(tmp_path / out_name))
    for old, new in edits.items():
        assert old in body, old
        body = body.replace(old, new)
    path = tmp_path / "exp.cfg"
    path.write_text(body)
    return str(path)


def read_metrics(path):
    series = {}
    with open(path) as fh:
        header = fh.readline().strip()
        assert header == "k,label,value"
        for line in fh:
            k, label, value = line.strip().split(",")
            series.setdefault(label, []).append((int(k), value))
    return series


class TestValidate:
    def test_ring_small_h_exits_zero(self, tmp_path, capsys):
        path = make_cfg(tmp_path, **{"h = 0.3": "h = 0.056",
                                     "eta = 0.01": "eta = 0.009"})
        assert main(["validate", "--config", path]) == EXIT_OK
        out = capsys.readouterr().out
        assert "OK" in out
        assert "stepsize clauses" in out

    def test_disconnected_exits_three(self, tmp_path, capsys):
        path = make_cfg(tmp_path,
                        **{"topology = ring": "topology = disconnected"})
        assert main(["validate", "--config", path]) == EXIT_ASSUMPTION
        assert "FAILED" in capsys.readouterr().out

    def test_disconnected_override_exits_zero(self, tmp_path, capsys):
        path = make_cfg(
            tmp_path,
            **{"topology = ring": "topology = disconnected",
               "seed = 7": "seed = 7\nallow_assumption_violations = true"})
        assert main(["validate", "--config", path]) == EXIT_OK
        assert "overridden" in capsys.readouterr().out

    def test_h_out_of_range_is_config_error(self, tmp_path):
        path = make_cfg(tmp_path, **{"h = 0.3": "h = 0.7"})
        assert main(["validate", "--config", path]) == EXIT_CONFIG

    def test_unstable_eta_warns(self, tmp_path, capsys):
        path = make_cfg(tmp_path, **{"eta = 0.01": "eta = 5.0"})
        cmd_validate(load_config(path))
        assert "unstable" in capsys.readouterr().out


class TestRun:
    def test_initial_state_only(self, tmp_path):
        path = make_cfg(tmp_path, **{"steps = 40": "steps = 0",
                                     "replicas = 3": "replicas = 1"})
        assert main(["run", "--config", path]) == EXIT_OK
        out = tmp_path / "out"
        with open(out / "trajectory.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "replica,k,agent,coord_0,coord_1"
        assert len(lines) == 1 + 6  # one record, six agents
        assert all(line.split(",")[1] == "0" for line in lines[1:])
        series = read_metrics(out / "metrics.csv")
        assert [k for k, _ in series["consensus"]] == [0]

    def test_trajectory_schema_and_order(self, tmp_path):
        cfg = load_config(make_cfg(tmp_path))
        assert cmd_run(cfg) == EXIT_OK
        with open(tmp_path / "out" / "trajectory.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "replica,k,agent,coord_0,coord_1"
        ks_expected = list(range(0, 41, 5))
        keys = [tuple(int(c) for c in line.split(",")[:3])
                for line in lines[1:]]
        assert keys == [(r, k, a) for r in range(3)
                        for k in ks_expected for a in range(6)]

    def test_metric_labels_linreg(self, tmp_path):
        cfg = load_config(make_cfg(tmp_path))
        cmd_run(cfg)
        series = read_metrics(tmp_path / "out" / "metrics.csv")
        assert set(series) == {"consensus", "w2_mean", "w2_agents"}
        ks = [k for k, _ in series["w2_mean"]]
        assert ks == list(range(0, 41, 5))

    def test_single_replica_skips_w2(self, tmp_path):
        # sample covariance needs an ensemble; R=1 emits consensus only
        cfg = load_config(make_cfg(tmp_path,
                                   **{"replicas = 3": "replicas = 1"}))
        cmd_run(cfg)
        series = read_metrics(tmp_path / "out" / "metrics.csv")
        assert set(series) == {"consensus"}

    def test_zero_temperature_emits_opt_error(self, tmp_path):
        cfg = load_config(make_cfg(
            tmp_path, **{"steps = 40": "steps = 40\ntemperature = 0"}))
        cmd_run(cfg)
        series = read_metrics(tmp_path / "out" / "metrics.csv")
        assert set(series) == {"consensus", "opt_error"}
        vals = [float(v) for _, v in series["opt_error"]]
        assert vals[-1] < vals[0]

    def test_logreg_accuracy_series(self, tmp_path):
        cfg = load_config(make_cfg(
            tmp_path,
            **{"kind = linreg": "kind = logreg-synthetic\nholdout = 200",
               "n_points = 120": "n_points = 240",
               "beta_true = 1.0 -0.5": "beta_true = 2.0 -1.0",
               "replicas = 3": "replicas = 2"}))
        cmd_run(cfg)
        series = read_metrics(tmp_path / "out" / "metrics.csv")
        assert set(series) == {"consensus", "accuracy"}
        accs = [float(v) for _, v in series["accuracy"]]
        assert all(0.0 <= a <= 1.0 for a in accs)

    def test_manifest_contents(self, tmp_path):
        cfg = load_config(make_cfg(tmp_path))
        cmd_run(cfg)
        with open(tmp_path / "out" / "manifest.json") as fh:
            man = json.load(fh)
        assert man["command"] == "run"
        assert man["version"] == __version__
        assert man["master_seed"] == 7
        assert man["config"]["network"]["h"] == 0.3
        assert man["replica_seeds"] == [derive_seed(7, "replica", r)
                                        for r in range(3)]
        for name, meta in man["files"].items():
            with open(tmp_path / "out" / name) as fh:
                assert meta["rows"] == len(fh.read().splitlines()) - 1
        assert man["wall_clock_s"] >= 0

    def test_plateau_file(self, tmp_path):
        cfg = load_config(make_cfg(tmp_path))
        cmd_run(cfg)
        with open(tmp_path / "out" / "plateau.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "algorithm,label,plateau"
        labels = {line.split(",")[1] for line in lines[1:]}
        assert labels == {"consensus", "w2_mean", "w2_agents"}
        assert all(line.startswith("GEN_EXTRA_SGLD,") for line in lines[1:])

    def test_no_temp_files_left_behind(self, tmp_path):
        cfg = load_config(make_cfg(tmp_path))
        cmd_run(cfg)
        names = os.listdir(tmp_path / "out")
        assert not [n for n in names if n.startswith(".tmp-")]


class TestDeterminism:
    def _run(self, tmp_path, out_name, extra):
        cfg = load_config(make_cfg(tmp_path, out_name=out_name, **extra))
        cmd_run(cfg)
        out = {}
        for name in ("trajectory.csv", "metrics.csv", "plateau.csv"):
            with open(tmp_path / out_name / name, "rb") as fh:
                out[name] = fh.read()
        return out

    def test_threads_do_not_change_bytes(self, tmp_path):
        a = self._run(tmp_path, "out1",
                      {"seed = 7": "seed = 7\nthreads = 1"})
        b = self._run(tmp_path, "out2",
                      {"seed = 7": "seed = 7\nthreads = 3"})
        assert a == b

    def test_rerun_is_byte_identical(self, tmp_path):
        a = self._run(tmp_path, "out1", {})
        b = self._run(tmp_path, "out2", {})
        assert a == b

    def test_seed_changes_trajectories(self, tmp_path):
        a = self._run(tmp_path, "out1", {})
        b = self._run(tmp_path, "out2", {"seed = 7": "seed = 8"})
        assert a["trajectory.csv"] != b["trajectory.csv"]


class TestCompare:
    def test_needs_two_algorithms(self, tmp_path):
        text = BASE + "\n[compare]\nalgorithms = DE_SGLD\n"
        cfg = load_config(make_cfg(tmp_path, text=text))
        with pytest.raises(ConfigError, match="at least 2"):
            cmd_compare(cfg)

    def test_identical_algorithm_twice_identical_series(self, tmp_path):
        text = BASE + "\n[compare]\nalgorithms = DE_SGLD DE_SGLD\n"
        cfg = load_config(make_cfg(tmp_path, text=text))
        assert cmd_compare(cfg) == EXIT_OK
        series = read_metrics(tmp_path / "out" / "metrics.csv")
        for label in ("consensus", "w2_mean", "w2_agents"):
            assert series[f"DE_SGLD:{label}"] == series[f"DE_SGLD.2:{label}"]

    def test_distinct_algorithms_distinct_seeds(self, tmp_path):
        text = BASE + "\n[compare]\nalgorithms = DE_SGLD GEN_EXTRA_SGLD\n"
        cfg = load_config(make_cfg(tmp_path, text=text))
        cmd_compare(cfg)
        with open(tmp_path / "out" / "manifest.json") as fh:
            man = json.load(fh)
        seeds = man["replica_seeds"]
        assert seeds["DE_SGLD"] == [derive_seed(7, "DE_SGLD", r)
                                    for r in range(3)]
        assert seeds["DE_SGLD"] != seeds["GEN_EXTRA_SGLD"]
        with open(tmp_path / "out" / "plateau.csv") as fh:
            lines = fh.read().splitlines()[1:]
        algos = {line.split(",")[0] for line in lines}
        assert algos == {"DE_SGLD", "GEN_EXTRA_SGLD"}

    def test_label_disambiguation(self):
        labels = _compare_labels(["A", "B", "A", "A"])
        assert labels == ["A", "B", "A.2", "A.3"]


class TestSweep:
    def test_single_point_matches_run(self, tmp_path):
        text = BASE + "\n[sweep]\nh_min = 0.3\nh_max = 0.3\npoints = 1\n"
        cfg = load_config(make_cfg(tmp_path, out_name="sweep", text=text))
        assert cmd_sweep_h(cfg) == EXIT_OK
        run_cfg = load_config(make_cfg(tmp_path, out_name="plain"))
        cmd_run(run_cfg)
        for name in ("trajectory.csv", "metrics.csv", "plateau.csv"):
            with open(tmp_path / "sweep" / "h_0.3" / name, "rb") as fh:
                swept = fh.read()
            with open(tmp_path / "plain" / name, "rb") as fh:
                assert swept == fh.read(), name

    def test_summary_marks_single_argmin(self, tmp_path):
        text = BASE + "\n[sweep]\nh_min = 0.1\nh_max = 0.5\npoints = 3\n"
        cfg = load_config(make_cfg(tmp_path, out_name="sweep", text=text,
                                   **{"steps = 40": "steps = 20"}))
        cmd_sweep_h(cfg)
        with open(tmp_path / "sweep" / "sweep_summary.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "h,label,plateau,is_argmin"
        marked = {line.split(",")[0] for line in lines[1:]
                  if line.endswith("true")}
        assert len(marked) == 1
        with open(tmp_path / "sweep" / "manifest.json") as fh:
            man = json.load(fh)
        assert man["h_grid"] == pytest.approx([0.1, 0.3, 0.5])
        assert {f"{man['best_h']:.17g}"} == marked


class TestTheoryCmd:
    def test_inadmissible_exit_names_binding_clause(self, tmp_path, capsys):
        cfg = load_config(make_cfg(tmp_path))
        assert cmd_theory(cfg) == EXIT_ASSUMPTION
        out = capsys.readouterr().out
        assert "inadmissible (h, eta)" in out
        assert "binding eta clause" in out

    def test_shrink_produces_files(self, tmp_path, capsys):
        text = BASE + "\n[theory]\nshrink = true\n"
        cfg = load_config(make_cfg(tmp_path, text=text,
                                   **{"n = 6": "n = 4"}))
        assert cmd_theory(cfg) == EXIT_OK
        assert "admissible pair" in capsys.readouterr().out
        out = tmp_path / "out"
        with open(out / "theory_constants.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "name,value"
        assert len(lines) == 1 + 22
        with open(out / "manifest.json") as fh:
            man = json.load(fh)
        assert 0 < man["h_used"] < 0.3
        assert 0 < man["eta_used"] <= 0.01
        assert man["K0"] == 0  # zero-init transients

    def test_bounds_match_direct_evaluation(self, tmp_path):
        text = BASE + "\n[theory]\nshrink = true\n"
        cfg = load_config(make_cfg(tmp_path, text=text,
                                   **{"n = 6": "n = 4"}))
        cmd_theory(cfg)
        bundle = build_task(cfg)
        ms = build_mixing(cfg)
        p, _ = shrink_to_admissible(bundle.task, ms, cfg.sampler.eta,
                                    sigma2=0.0)
        tc = compute_constants(p)
        from exlg.theory import bound_w2_agents, bound_w2_mean

        got = {}
        with open(tmp_path / "out" / "theory_bounds.csv") as fh:
            assert fh.readline().strip() == "k,label,value"
            for line in fh:
                k, label, value = line.strip().split(",")
                got[(int(k), label)] = float(value)
        ks = sorted({k for k, _ in got})
        assert ks == sorted(set(range(0, 41, 5)))
        for k in ks:
            assert got[(k, "bound_w2_mean")] == bound_w2_mean(p, tc, k)
            assert got[(k, "bound_w2_agents")] == bound_w2_agents(p, tc, k)
        mean_curve = [got[(k, "bound_w2_mean")] for k in ks]
        assert all(b <= a for a, b in zip(mean_curve, mean_curve[1:]))

    def test_sigma2_estimated_when_batch_set(self, tmp_path, capsys):
        text = BASE + "\n[theory]\nshrink = true\n"
        cfg = load_config(make_cfg(
            tmp_path, text=text,
            **{"n = 6": "n = 4", "steps = 40": "steps = 40\nbatch = 4"}))
        assert cmd_theory(cfg) == EXIT_OK
        assert "estimated gradient noise" in capsys.readouterr().out
        with open(tmp_path / "out" / "manifest.json") as fh:
            man = json.load(fh)
        assert man["sigma2"] > 0

    def test_explicit_sigma2_skips_estimation(self, tmp_path, capsys):
        text = BASE + "\n[theory]\nshrink = true\nsigma2 = 0.25\n"
        cfg = load_config(make_cfg(
            tmp_path, text=text,
            **{"n = 6": "n = 4", "steps = 40": "steps = 40\nbatch = 4"}))
        cmd_theory(cfg)
        assert "estimated" not in capsys.readouterr().out
        with open(tmp_path / "out" / "manifest.json") as fh:
            assert json.load(fh)["sigma2"] == 0.25


class TestGenData:
    def test_dataset_round_trip(self, tmp_path):
        path = make_cfg(tmp_path)
        assert main(["gen-data", "--config", path]) == EXIT_OK
        out = tmp_path / "out"
        with open(out / "dataset.csv") as fh:
            header = fh.readline().strip()
        assert header == "x_0,x_1,y"
        data = np.genfromtxt(out / "dataset.csv", delimiter=",",
                             skip_header=1)
        assert data.shape == (120, 3)
        # same stream a run would use: beta comes from the config here,
        # so the draws start at the features directly
        rng = np.random.default_rng(derive_seed(7, "data"))
        x, y = gen_linreg_data(120, np.array([1.0, -0.5]), 1.0, rng)
        np.testing.assert_array_equal(data[:, :2], x)
        np.testing.assert_array_equal(data[:, 2], y)
        with open(out / "manifest.json") as fh:
            assert json.load(fh)["beta_true"] == [1.0, -0.5]

    def test_rejects_csv_task(self, tmp_path):
        csv = tmp_path / "d.csv"
        csv.write_text("a,b,y\n1,2,0\n3,4,1\n")
        cfg = load_config(make_cfg(
            tmp_path,
            **{"kind = linreg":
               f"kind = logreg-csv\ncsv_path = {csv}\nlabel_col = y"}))
        with pytest.raises(ConfigError, match="synthetic"):
            cmd_gen_data(cfg)


class TestCliPlumbing:
    def test_divergence_exit_code(self, tmp_path, capsys):
        path = make_cfg(tmp_path, **{"eta = 0.01": "eta = 50.0",
                                     "steps = 40": "steps = 2000",
                                     "replicas = 3": "replicas = 1"})
        assert main(["run", "--config", path]) == EXIT_DIVERGENCE
        assert "replica 0" in capsys.readouterr().err

    def test_cli_overrides_reach_config(self, tmp_path):
        path = make_cfg(tmp_path)
        other = str(tmp_path / "other")
        assert main(["run", "--config", path, "--out", other,
                     "--seed", "21", "--replicas", "2"]) == EXIT_OK
        with open(os.path.join(other, "manifest.json")) as fh:
            man = json.load(fh)
        assert man["master_seed"] == 21
        assert len(man["replica_seeds"]) == 2

    def test_threads_resolution(self, tmp_path, monkeypatch):
        cfg = load_config(make_cfg(tmp_path))
        monkeypatch.delenv("EXLG_THREADS", raising=False)
        assert _resolve_threads(cfg) == 1
        monkeypatch.setenv("EXLG_THREADS", "3")
        assert _resolve_threads(cfg) == 3
        monkeypatch.setenv("EXLG_THREADS", "lots")
        assert _resolve_threads(cfg) == 1
        explicit = load_config(make_cfg(
            tmp_path, **{"seed = 7": "seed = 7\nthreads = 2"}))
        monkeypatch.setenv("EXLG_THREADS", "5")
        assert _resolve_threads(explicit) == 2

    def test_fmt_round_trip(self):
        assert _fmt(True) == "true"
        assert _fmt(False) == "false"
        assert _fmt(3) == "3"
        assert _fmt(np.int64(4)) == "4"
        for v in (0.1 + 0.2, 1.0 / 3.0, 1e-300, -2.5e17):
            assert float(_fmt(v)) == v

    def test_write_csv_counts_rows(self, tmp_path):
        path = str(tmp_path / "t.csv")
        n = write_csv(path, ["a", "b"], [(1, 2.5), (3, 4.0)])
        assert n == 2
        with open(path) as fh:
            assert fh.read() == "a,b\n1,2.5\n3,4\n"
