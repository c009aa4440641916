"""Experiment orchestration: data, networks, replicas, metrics, CSVs.

Each ``cmd_*`` function implements one CLI subcommand and returns a
process exit code (0 success, 2 config error, 3 assumption violation,
4 divergence; the CLI maps raised errors to the same codes).  Replicas
run as a parallel map over a thread pool; results are consumed in replica
order, so the emitted files are byte-identical whatever the thread count.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .metrics import MetricSeries, accuracy, consensus_error, plateau, w2_series
from .network import (
    MixingSet,
    build_mixing_set,
    make_topology,
    topology_from_file,
    validate_assumptions,
)
from .samplers import (
    ChainDivergenceError,
    SamplerConfig,
    derive_seed,
    run_chain,
)
from .tasks import (
    LinRegTask,
    LogRegTask,
    gen_linreg_data,
    gen_logreg_data,
    load_csv_dataset,
    partition_data,
)
from .theory import (
    compute_constants,
    problem_params_from,
    shrink_to_admissible,
    validate_stepsize,
    bound_w2_mean,
    bound_w2_agents,
)

logger = logging.getLogger("exlg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_DIVERGENCE = 4

_CENTRALIZED = ("ULA", "REFERENCE_CHAIN")


class AssumptionError(RuntimeError):
    """A hard mixing-assumption violation without the override flag."""


# ---------------------------------------------------------------------------
# construction helpers

@dataclasses.dataclass(frozen=True)
class TaskBundle:
    task: object
    beta_true: Optional[np.ndarray]
    holdout: Optional[tuple]  # (X, y) for classification accuracy


def build_task(cfg: ExperimentConfig) -> TaskBundle:
    """Generate or load the dataset and shard it across agents.

    All draws come from the stream seeded by hash(master, "data"), so the
    dataset is a pure function of the config; the holdout set uses its own
    stream and never perturbs the training data.
    """
    t = cfg.task
    n_agents = cfg.network.n
    rng = np.random.default_rng(derive_seed(cfg.run.seed, "data"))

    if t.kind == "logreg-csv":
        label = t.label_col
        if label is not None and label.lstrip("+-").isdigit():
            label = int(label)
        x, y, _names = load_csv_dataset(t.csv_path, label_column=label)
        n_hold = min(t.holdout, x.shape[0] // 5)
        perm = rng.permutation(x.shape[0])
        hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
        holdout = (x[hold_idx], y[hold_idx]) if n_hold else None
        x, y = x[train_idx], y[train_idx]
        beta_true = None
    else:
        if t.beta_true is not None:
            beta_true = np.asarray(t.beta_true, dtype=float)
        else:
            beta_true = rng.standard_normal(t.dim)
        if t.kind == "linreg":
            x, y = gen_linreg_data(t.n_points, beta_true, t.noise_std, rng)
            holdout = None
        else:
            x, y = gen_logreg_data(t.n_points, beta_true, rng)
            hold_rng = np.random.default_rng(
                derive_seed(cfg.run.seed, "holdout"))
            hx, hy = gen_logreg_data(t.holdout, beta_true, hold_rng)
            holdout = (hx, hy)

    shards = partition_data(x, y, n_agents, rng, per_agent=t.per_agent)
    xs = tuple(s[0] for s in shards)
    ys = tuple(s[1] for s in shards)
    if t.kind == "linreg":
        task = LinRegTask(xs=xs, ys=ys, prior_var=t.prior_var)
    else:
        task = LogRegTask(xs=xs, ys=ys, prior_var=t.prior_var)
    return TaskBundle(task=task, beta_true=beta_true, holdout=holdout)


def build_mixing(cfg: ExperimentConfig) -> MixingSet:
    """Topology + W + W~ from the [network] section.

    Static domain violations (bad h, bad delta, malformed adjacency file)
    surface as ConfigError; they are knowable before anything runs.
    """
    net = cfg.network
    try:
        if net.topology == "custom":
            top = topology_from_file(net.adjacency)
            if top.n != net.n:
                raise ValueError(
                    f"adjacency file has {top.n} nodes, config says {net.n}")
        else:
            top = make_topology(net.topology, net.n)
        delta = net.delta
        if delta is None:
            # seeded so the drawn delta is part of the reproducible config
            from .network import draw_delta

            delta = draw_delta(top, int(derive_seed(cfg.run.seed, "delta")
                                        % (2 ** 31)))
        return build_mixing_set(top, h=net.h, delta=delta,
                                de_sgld_mode=net.de_sgld_mode)
    except ValueError as e:
        raise ConfigError(f"network: {e}") from None


def check_assumptions(ms: MixingSet, cfg: ExperimentConfig):
    """Run the mixing checks; raise AssumptionError unless overridden."""
    report = validate_assumptions(ms)
    for line in report.lines():
        logger.info("%s", line)
    if not report.ok and not cfg.run.allow_assumption_violations:
        names = ", ".join(c.name for c in report.failed())
        raise AssumptionError(f"assumption checks failed: {names}")
    return report


# ---------------------------------------------------------------------------
# replica execution

def _replica_seeds(master: int, replicas: int, tag: Optional[str] = None):
    if tag is None:
        return [derive_seed(master, "replica", r) for r in range(replicas)]
    return [derive_seed(master, tag, r) for r in range(replicas)]


def run_replicas(task, ms: Optional[MixingSet], scfg: SamplerConfig,
                 seeds, threads: int, record_every: int):
    """Parallel map over replica chains; results come back replica-ordered.

    Returns (ks, xs_all) with xs_all of shape (n_rec, R, A, d) where A is
    the number of chain rows (agents, or 1 for centralized samplers).
    Divergence is re-raised tagged with the replica index.
    """

    def one(args):
        r, seed = args
        try:
            res = run_chain(task, dataclasses.replace(scfg, seed=seed),
                            mixing=ms, record_every=record_every)
        except ChainDivergenceError as e:
            raise ChainDivergenceError(f"replica {r}: {e}") from None
        return res

    jobs = list(enumerate(seeds))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    ks = results[0].ks
    xs_all = np.stack([res.xs for res in results], axis=1)
    return ks, xs_all


def series_for_run(cfg: ExperimentConfig, task, ks, xs_all,
                   holdout: Optional[tuple]):
    """The metric series a run emits, by task type and temperature.

    W2 series need a Gaussian target and an ensemble: linreg with
    replicas >= 2 at unit temperature.  Logistic runs report held-out
    accuracy of the agent average.  Zero-temperature runs report the
    worst-agent optimization error instead of distributional metrics.
    Consensus error is always included.
    """
    out = []
    n_rec, n_reps = xs_all.shape[0], xs_all.shape[1]
    cons = np.array([
        float(np.mean([consensus_error(xs_all[j, r])
                       for r in range(n_reps)]))
        for j in range(n_rec)
    ])
    out.append(MetricSeries(ks=tuple(ks), values=tuple(cons),
                            label="consensus"))

    if cfg.sampler.temperature == 0.0:
        xstar = task.minimizer()
        vals = []
        for j in range(n_rec):
            worst = [
                float(np.max(np.linalg.norm(xs_all[j, r] - xstar, axis=1)))
                for r in range(n_reps)
            ]
            vals.append(float(np.mean(worst)))
        out.append(MetricSeries(ks=tuple(ks), values=tuple(vals),
                                label="opt_error"))
        return out

    if cfg.task.kind == "linreg" and n_reps >= 2:
        target = task.target()
        means = xs_all.mean(axis=2)
        out.append(w2_series(means, ks, target, "w2_mean"))
        n_agents = xs_all.shape[2]
        per_agent = np.stack([
            w2_series(xs_all[:, :, a, :], ks, target, f"agent{a}").values
            for a in range(n_agents)
        ])
        out.append(MetricSeries(ks=tuple(ks),
                                values=tuple(per_agent.mean(axis=0)),
                                label="w2_agents"))

    if holdout is not None:
        hx, hy = holdout
        means = xs_all.mean(axis=2)
        acc = [
            float(np.mean([accuracy(means[j, r], hx, hy)
                           for r in range(n_reps)]))
            for j in range(n_rec)
        ]
        out.append(MetricSeries(ks=tuple(ks), values=tuple(acc),
                                label="accuracy"))
    return out


# ---------------------------------------------------------------------------
# output files

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header, rows) -> int:
    """Write header + rows atomically; floats at 17 significant digits.

    Returns the data row count (header excluded).
    """
    lines = [",".join(header)]
    n = 0
    for row in rows:
        lines.append(",".join(_fmt(c) for c in row))
        n += 1
    _atomic_write(path, "\n".join(lines) + "\n")
    return n


def trajectory_rows(ks, xs_all):
    n_rec, n_reps, n_agents, _d = xs_all.shape
    for r in range(n_reps):
        for j in range(n_rec):
            for a in range(n_agents):
                yield (r, ks[j], a, *xs_all[j, r, a])


def metric_rows(series_list):
    for s in series_list:
        for k, v in zip(s.ks, s.values):
            yield (k, s.label, v)


class ManifestWriter:
    """Collects run facts and writes the manifest atomically at the end."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.payload = {
            "command": command,
            "version": __version__,
            "master_seed": cfg.run.seed,
            "config": cfg.echo(),
            "files": {},
        }
        self._t0 = time.monotonic()

    def add_file(self, out_dir: str, name: str, rows: int):
        self.payload["files"][name] = {"rows": rows}

    def finish(self, out_dir: str, **extra):
        self.payload.update(extra)
        self.payload["wall_clock_s"] = round(time.monotonic() - self._t0, 3)
        _atomic_write(os.path.join(out_dir, "manifest.json"),
                      json.dumps(self.payload, indent=2, sort_keys=True,
                                 default=str) + "\n")


def _resolve_threads(cfg: ExperimentConfig) -> int:
    if cfg.run.threads is not None:
        return cfg.run.threads
    env = os.environ.get("EXLG_THREADS", "").strip()
    if env:
        try:
            n = int(env)
            if n >= 1:
                return n
        except ValueError:
            logger.warning("ignoring unparseable EXLG_THREADS=%r", env)
    return 1


def _sampler_config(cfg: ExperimentConfig, algorithm: Optional[str] = None,
                    eta: Optional[float] = None) -> SamplerConfig:
    s = cfg.sampler
    return SamplerConfig(
        algorithm=algorithm or s.algorithm,
        eta=s.eta if eta is None else eta,
        steps=s.steps, seed=0, batch=s.batch,
        temperature=s.temperature, b_mode=s.b_mode,
        b_scale=1.0 if s.b_scale is None else s.b_scale)


# ---------------------------------------------------------------------------
# commands

def cmd_validate(cfg: ExperimentConfig, echo=print) -> int:
    """Build the mixing set, print the assumption and stepsize reports.

    Exit 3 on hard assumption violations (unless overridden).  The
    stepsize report is informational here: practical (h, eta) pairs sit
    far outside the conservative theorem clauses, and refusing them
    would make every realistic experiment unrunnable.  The theory
    command is where clause failures block.
    """
    ms = build_mixing(cfg)
    report = validate_assumptions(ms)
    for line in report.lines():
        echo(line)
    bundle = build_task(cfg)
    try:
        p = problem_params_from(bundle.task, ms, cfg.sampler.eta,
                                b_mode=cfg.sampler.b_mode)
        cert = validate_stepsize(p)
        echo("stepsize clauses (informational):")
        for line in cert.lines():
            echo("  " + line)
    except ValueError as e:
        echo(f"stepsize report unavailable: {e}")
    if cfg.sampler.eta * bundle.task.L / 2.0 >= 1.0:
        echo(f"warning: eta*L/2 = "
             f"{cfg.sampler.eta * bundle.task.L / 2.0:.3g} >= 1; "
             "the discretization is unstable at this stepsize")
    if not report.ok:
        if cfg.run.allow_assumption_violations:
            echo("assumption violations overridden by config flag")
            return EXIT_OK
        names = ", ".join(c.name for c in report.failed())
        echo(f"FAILED: {names}")
        return EXIT_ASSUMPTION
    echo("OK")
    return EXIT_OK


def _prepare(cfg: ExperimentConfig):
    bundle = build_task(cfg)
    ms = None
    if cfg.sampler.algorithm not in _CENTRALIZED:
        ms = build_mixing(cfg)
        check_assumptions(ms, cfg)
    return bundle, ms


def cmd_run(cfg: ExperimentConfig) -> int:
    """Run R replicas, write trajectory/metric CSVs and the manifest."""
    out = cfg.run.out
    os.makedirs(out, exist_ok=True)
    manifest = ManifestWriter(cfg, "run")
    bundle, ms = _prepare(cfg)
    seeds = _replica_seeds(cfg.run.seed, cfg.run.replicas)
    ks, xs_all = run_replicas(bundle.task, ms, _sampler_config(cfg), seeds,
                              _resolve_threads(cfg), cfg.run.record_every)
    series = series_for_run(cfg, bundle.task, ks, xs_all, bundle.holdout)

    d = xs_all.shape[-1]
    coords = [f"coord_{j}" for j in range(d)]
    n = write_csv(os.path.join(out, "trajectory.csv"),
                  ["replica", "k", "agent", *coords],
                  trajectory_rows(ks, xs_all))
    manifest.add_file(out, "trajectory.csv", n)
    n = write_csv(os.path.join(out, "metrics.csv"),
                  ["k", "label", "value"], metric_rows(series))
    manifest.add_file(out, "metrics.csv", n)
    n = write_csv(os.path.join(out, "plateau.csv"),
                  ["algorithm", "label", "plateau"],
                  ((cfg.sampler.algorithm, s.label, plateau(s.values))
                   for s in series))
    manifest.add_file(out, "plateau.csv", n)
    manifest.finish(out, replica_seeds=[int(s) for s in seeds])
    return EXIT_OK


def _compare_labels(algorithms):
    seen: dict = {}
    labels = []
    for a in algorithms:
        seen[a] = seen.get(a, 0) + 1
        labels.append(a if seen[a] == 1 else f"{a}.{seen[a]}")
    return labels


def cmd_compare(cfg: ExperimentConfig) -> int:
    """Same data and network, one chain family per algorithm.

    Sub-seeds hash (master, algorithm name, r), so a twice-listed
    algorithm reproduces its own series exactly.
    """
    algos = cfg.compare.algorithms
    if len(algos) < 2:
        raise ConfigError("compare.algorithms: need at least 2 entries")
    out = cfg.run.out
    os.makedirs(out, exist_ok=True)
    manifest = ManifestWriter(cfg, "compare")
    bundle = build_task(cfg)
    ms = None
    if any(a not in _CENTRALIZED for a in algos):
        ms = build_mixing(cfg)
        check_assumptions(ms, cfg)

    labels = _compare_labels(algos)
    threads = _resolve_threads(cfg)
    all_series = []
    plateau_rows = []
    seed_map = {}
    for algo, label in zip(algos, labels):
        seeds = _replica_seeds(cfg.run.seed, cfg.run.replicas, tag=algo)
        seed_map[label] = [int(s) for s in seeds]
        use_ms = None if algo in _CENTRALIZED else ms
        ks, xs_all = run_replicas(bundle.task, use_ms,
                                  _sampler_config(cfg, algorithm=algo),
                                  seeds, threads, cfg.run.record_every)
        cfg_one = dataclasses.replace(
            cfg, sampler=dataclasses.replace(cfg.sampler, algorithm=algo))
        for s in series_for_run(cfg_one, bundle.task, ks, xs_all,
                                bundle.holdout):
            tagged = MetricSeries(ks=s.ks, values=s.values,
                                  label=f"{label}:{s.label}")
            all_series.append(tagged)
            plateau_rows.append((label, s.label, plateau(s.values)))

    n = write_csv(os.path.join(out, "metrics.csv"),
                  ["k", "label", "value"], metric_rows(all_series))
    manifest.add_file(out, "metrics.csv", n)
    n = write_csv(os.path.join(out, "plateau.csv"),
                  ["algorithm", "label", "plateau"], plateau_rows)
    manifest.add_file(out, "plateau.csv", n)
    manifest.finish(out, replica_seeds=seed_map)
    return EXIT_OK


_SWEEP_OBJECTIVE = ("w2_mean", "accuracy", "opt_error", "consensus")


def cmd_sweep_h(cfg: ExperimentConfig) -> int:
    """cmd_run once per h on the grid; summarize plateaus and mark the best.

    The objective is the plateau of the first available label in
    {w2_mean, accuracy, opt_error, consensus}; accuracy plateaus are
    negated so "argmin" uniformly means "best".
    """
    sw = cfg.sweep
    if sw.points == 1:
        grid = [sw.h_min]
    else:
        grid = list(np.linspace(sw.h_min, sw.h_max, sw.points))
    out = cfg.run.out
    os.makedirs(out, exist_ok=True)
    manifest = ManifestWriter(cfg, "sweep-h")

    rows = []
    objectives = []
    for h in grid:
        sub_out = os.path.join(out, f"h_{h:.6g}")
        sub = dataclasses.replace(
            cfg,
            network=dataclasses.replace(cfg.network, h=float(h)),
            run=dataclasses.replace(cfg.run, out=sub_out))
        cmd_run(sub)
        with open(os.path.join(sub_out, "plateau.csv")) as fh:
            lines = fh.read().splitlines()[1:]
        here = {}
        for line in lines:
            _algo, label, val = line.split(",")
            here[label] = float(val)
            rows.append((float(h), label, float(val)))
        for label in _SWEEP_OBJECTIVE:
            if label in here:
                obj = -here[label] if label == "accuracy" else here[label]
                objectives.append((obj, float(h), label))
                break

    best_h = min(objectives)[1] if objectives else None
    n = write_csv(os.path.join(out, "sweep_summary.csv"),
                  ["h", "label", "plateau", "is_argmin"],
                  ((h, label, val,
                    "true" if best_h is not None and h == best_h else "false")
                   for h, label, val in rows))
    manifest.add_file(out, "sweep_summary.csv", n)
    manifest.finish(out, h_grid=[float(h) for h in grid], best_h=best_h)
    return EXIT_OK


def cmd_theory(cfg: ExperimentConfig, echo=print) -> int:
    """Constants dump, admissibility report, and bound curves.

    At the configured (h, eta) the clauses must pass, or the command exits
    3 naming the binding clause; with [theory] shrink = true the pair is
    shrunk to admissibility first and both pairs are reported.
    """
    out = cfg.run.out
    os.makedirs(out, exist_ok=True)
    manifest = ManifestWriter(cfg, "theory")
    bundle = build_task(cfg)
    ms = build_mixing(cfg)
    check_assumptions(ms, cfg)

    sigma2 = cfg.theory.sigma2
    if sigma2 is None:
        sigma2 = 0.0
        if cfg.sampler.batch is not None:
            from .tasks import estimate_grad_noise

            rng = np.random.default_rng(
                derive_seed(cfg.run.seed, "noise-est"))
            sigma2 = estimate_grad_noise(
                bundle.task, bundle.task.minimizer(), cfg.sampler.batch,
                200, rng)
            echo(f"estimated gradient noise sigma^2 = {sigma2:.6g}")

    p = problem_params_from(bundle.task, ms, cfg.sampler.eta, sigma2=sigma2,
                            b_mode=cfg.sampler.b_mode,
                            w2_init=cfg.theory.w2_init)
    cert = validate_stepsize(p)
    for line in cert.lines():
        echo(line)
    used_ms = ms
    if not cert.ok:
        if not cfg.theory.shrink:
            bad = [c.name for c in cert.failed()]
            echo(f"inadmissible (h, eta); failing clauses: {', '.join(bad)}; "
                 f"binding eta clause: {cert.binding_eta}")
            return EXIT_ASSUMPTION
        echo(f"shrinking to admissible from (h={ms.h:.6g}, "
             f"eta={cfg.sampler.eta:.6g})")
        p, used_ms = shrink_to_admissible(
            bundle.task, ms, cfg.sampler.eta, sigma2=sigma2,
            b_mode=cfg.sampler.b_mode)
        echo(f"admissible pair: h={p.h:.9g}, eta={p.eta:.9g}")
        cert = validate_stepsize(p)
        for line in cert.lines():
            echo(line)

    tc = compute_constants(p)
    n = write_csv(os.path.join(out, "theory_constants.csv"),
                  ["name", "value"], tc.as_rows())
    manifest.add_file(out, "theory_constants.csv", n)

    ks = sorted(set(range(0, cfg.sampler.steps + 1, cfg.run.record_every))
                | {cfg.sampler.steps})
    rows = []
    for k in ks:
        if k < tc.K0:
            continue
        rows.append((k, "bound_w2_mean", bound_w2_mean(p, tc, k)))
    for k in ks:
        if k < tc.K0:
            continue
        rows.append((k, "bound_w2_agents", bound_w2_agents(p, tc, k)))
    n = write_csv(os.path.join(out, "theory_bounds.csv"),
                  ["k", "label", "value"], rows)
    manifest.add_file(out, "theory_bounds.csv", n)
    manifest.finish(out, h_used=p.h, eta_used=p.eta, sigma2=sigma2,
                    K0=tc.K0)
    return EXIT_OK


def cmd_gen_data(cfg: ExperimentConfig) -> int:
    """Write the configured synthetic dataset as a CSV with a header.

    Uses the same stream a run would (hash(master, "data")), so the file
    matches the data the chains consume before sharding.
    """
    t = cfg.task
    if t.kind == "logreg-csv":
        raise ConfigError("gen-data only applies to synthetic tasks")
    out = cfg.run.out
    os.makedirs(out, exist_ok=True)
    manifest = ManifestWriter(cfg, "gen-data")
    rng = np.random.default_rng(derive_seed(cfg.run.seed, "data"))
    if t.beta_true is not None:
        beta = np.asarray(t.beta_true, dtype=float)
    else:
        beta = rng.standard_normal(t.dim)
    if t.kind == "linreg":
        x, y = gen_linreg_data(t.n_points, beta, t.noise_std, rng)
    else:
        x, y = gen_logreg_data(t.n_points, beta, rng)
    header = [f"x_{j}" for j in range(t.dim)] + ["y"]
    n = write_csv(os.path.join(out, "dataset.csv"), header,
                  ((*row, yv) for row, yv in zip(x, y)))
    manifest.add_file(out, "dataset.csv", n)
    manifest.finish(out, beta_true=[float(b) for b in beta])
    return EXIT_OK
