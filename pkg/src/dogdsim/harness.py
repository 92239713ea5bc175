"""Experiment configuration, the end-to-end run pipeline, presets and sweeps.

Configs are flat ``key = value`` text with dotted keys::

    # fig1 with a larger ball
    topology.kind = random_geometric
    set.radius = 8
    algorithms = dogd, dda

Values are parsed as JSON when possible (numbers, ``true``, ``null``, lists),
comma-separated text becomes a list and anything else is a string.
"""

import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, write_csv
from .dda import dda_run
from .dogd import (MODES, RoundRecord, RunTrace, Z_RESETS, check_grad_bound, dogd_run,
                   make_gradient_oracle, make_schedule, ordered_mean)
from .feasible_set import from_dict as set_from_dict
from .metrics import (check_network_bound, distributed_regret, gap_series, metrics_rows,
                      rate_slope, reference_for, trace_rows, write_metrics_csv, write_trace_csv)
from .objectives import (FAMILIES, NOISE_KINDS, NoiseModel, ObjectiveSpec, gen_quadratic_streams,
                         gen_svm_streams, lipschitz_bound)
from .serial_opt import restarted_lazy_projection
from .topology import GRAPH_KINDS, build_graph, metropolis_weights, write_edges_csv, write_matrix_csv

ALGORITHMS = ("dogd", "dda", "serial_lazy")
REGRET_MODES = ("all", "final", "none")

DEFAULTS = {
    "name": "experiment",
    "n": 10,
    "d": 100,
    "T": 600,
    "sigma": 0.1,
    "topology.kind": "random_geometric",
    "topology.radius": None,
    "topology.degree": 4,
    "objective.family": "hinge_l2",
    "set.kind": "l2_ball",
    "set.radius": 5.0,
    "set.center": None,
    "set.lower": None,
    "set.upper": None,
    "lipschitz.L": None,
    "data.mean_scale": 1.0,
    "data.node_spread": 0.0,
    "data.noise": 1.0,
    "algorithms": ["dogd", "dda"],
    "mode": "online",
    "noise.kind": "none",
    "noise.half_width": 0.0,
    "noise.std": 0.0,
    "noise.clip": None,
    "noise.l_inflation": None,
    "noise.replicates": 1,
    "seeds.graph": 0,
    "seeds.data": 0,
    "seeds.noise": 0,
    "schedule.a1": 1.0,
    "schedule.T1": None,
    "schedule.b": 2,
    "schedule.c": 2,
    "schedule.partial_final_round": False,
    "schedule.z_reset": "project",
    "dda.A": None,
    "gap.horizon": "full",
    "gap.tol": None,
    "gap.slope_window": 6,
    "metrics.regret": "all",
    "output.dir": None,
    "output.trace": True,
    "output.subsample": 1,
    "output.streams": False,
    "reference.cache": True,
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed. Carries the stage name and the config echo."""

    def __init__(self, stage, cause, config_text=""):
        self.stage = stage
        self.cause = cause
        self.config_text = config_text
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


def parse_value(text):
    text = text.strip()
    if text == "":
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    low = text.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    if "," in text:
        return [parse_value(part) for part in text.split(",")]
    return text


def format_value(v):
    if isinstance(v, str):
        # quote strings that would otherwise read back as another type
        return v if parse_value(v) == v else json.dumps(v)
    if isinstance(v, float) and not math.isfinite(v):
        return json.dumps(str(v))
    return json.dumps(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated flat configuration. Unknown keys are rejected."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = sorted(set(self.values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(DEFAULTS)
        merged.update(self.values)
        if isinstance(merged["algorithms"], str):
            merged["algorithms"] = [merged["algorithms"]]
        object.__setattr__(self, "values", merged)
        self.validate()

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **updates):
        """Copy with dotted keys given as ``replace(**{"set.radius": 3})``."""
        vals = dict(self.values)
        vals.update(updates)
        return ExperimentConfig(vals)

    def validate(self):
        v = self.values
        for key in ("n", "d", "T"):
            if not isinstance(v[key], int) or v[key] < 1:
                raise ConfigError(f"{key} must be a positive integer, got {v[key]!r}")
        if not isinstance(v["sigma"], (int, float)) or not v["sigma"] > 0:
            raise ConfigError(f"sigma must be positive, got {v['sigma']!r}")
        choices = {"topology.kind": GRAPH_KINDS, "objective.family": FAMILIES, "mode": MODES,
                   "noise.kind": NOISE_KINDS, "schedule.z_reset": Z_RESETS,
                   "gap.horizon": ("full", "prefix"), "metrics.regret": REGRET_MODES,
                   "set.kind": ("l2_ball", "box", "unconstrained")}
        for key, allowed in choices.items():
            if v[key] not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {v[key]!r}")
        algs = v["algorithms"]
        if not algs or any(a not in ALGORITHMS for a in algs):
            raise ConfigError(f"algorithms must be a non-empty subset of {ALGORITHMS}, got {algs!r}")
        if len(set(algs)) != len(algs):
            raise ConfigError("algorithms are listed twice")
        if v["mode"] == "stochastic" and v["noise.kind"] == "none":
            raise ConfigError("stochastic mode needs noise.kind other than none")
        if v["set.kind"] == "unconstrained" and v["lipschitz.L"] is None:
            raise ConfigError("an unconstrained set needs an explicit lipschitz.L")
        if not isinstance(v["noise.replicates"], int) or v["noise.replicates"] < 1:
            raise ConfigError("noise.replicates must be a positive integer")
        if not isinstance(v["output.subsample"], int) or v["output.subsample"] < 1:
            raise ConfigError("output.subsample must be a positive integer")

    def to_text(self):
        lines = [f"{k} = {format_value(self.values[k])}" for k in DEFAULTS]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        vals = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in vals:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            vals[key] = parse_value(value)
        if isinstance(vals.get("noise.clip"), str):
            vals["noise.clip"] = float(vals["noise.clip"])
        return cls(vals)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config not found: {path}")
        return cls.from_text(path.read_text(encoding="utf-8"))


PRESETS = {
    "fig1": {
        "name": "fig1",
    },
    "single-node-sanity": {
        "name": "single-node-sanity",
        "n": 1,
        "d": 5,
        "T": 254,
        "sigma": 1.0,
        "topology.kind": "complete",
        "objective.family": "quadratic",
        "set.radius": 1.0,
        "data.mean_scale": 2.0,
        "algorithms": ["dogd", "serial_lazy"],
    },
    "stochastic": {
        "name": "stochastic",
        "mode": "stochastic",
        "noise.kind": "bounded_uniform",
        "noise.l_inflation": 1.5,
        "noise.replicates": 20,
        "metrics.regret": "final",
        "output.trace": False,
    },
    "rate-complete-graph": {
        "name": "rate-complete-graph",
        "n": 10,
        "d": 20,
        "T": 2046,
        "sigma": 1.0,
        "topology.kind": "complete",
        "objective.family": "quadratic",
        "set.radius": 5.0,
        "gap.horizon": "prefix",
        "output.subsample": 2,
    },
}


def preset(name, **updates):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    vals = dict(PRESETS[name])
    vals.update(updates)
    return ExperimentConfig(vals)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    graph: object
    consensus: object
    streams: object
    spec: object
    schedule: object
    noise: object
    traces: dict
    series: dict
    regrets: dict
    slopes: dict
    checks: dict
    replicate_gaps: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self):
        return all(ok for ok, _ in self.checks.values())

    def final_gap(self, alg):
        return float(self.series[alg].worst[-1])

    def summary_rows(self):
        rows = []
        for alg in self.traces:
            s = self.series[alg]
            reg = self.regrets[alg].get(int(s.steps[-1]))
            slope = self.slopes.get(alg)
            rows.append([alg, int(s.steps[-1]), float(s.worst[-1]), float(s.mean[-1]),
                         "" if reg is None else reg.regret_avg,
                         "" if slope is None else slope.slope])
        return rows


SUMMARY_HEADER = ["algorithm", "T", "final_worst_gap", "final_mean_gap", "regret_avg", "slope"]


def build_objective(cfg, streams):
    fs = set_from_dict({"kind": cfg["set.kind"], "radius": cfg["set.radius"],
                        "center": cfg["set.center"], "lower": cfg["set.lower"],
                        "upper": cfg["set.upper"], "dim": cfg["d"]}, dim=cfg["d"])
    spec = ObjectiveSpec(cfg["objective.family"], float(cfg["sigma"]), fs)
    L = cfg["lipschitz.L"]
    return spec.with_L(lipschitz_bound(spec, streams) if L is None else L)


def build_streams(cfg):
    n, T, d, seed = cfg["n"], cfg["T"], cfg["d"], cfg["seeds.data"]
    if cfg["objective.family"] == "hinge_l2":
        return gen_svm_streams(n, T, d, seed)
    return gen_quadratic_streams(n, T, d, seed, cfg["data.mean_scale"],
                                 cfg["data.node_spread"], cfg["data.noise"])


def build_noise(cfg, L, d, seed=None):
    seed = cfg["seeds.noise"] if seed is None else seed
    half_width = cfg["noise.half_width"]
    if cfg["noise.kind"] == "bounded_uniform" and cfg["noise.l_inflation"] is not None:
        # ||noise|| <= half_width sqrt(d) = (inflation - 1) L
        half_width = (cfg["noise.l_inflation"] - 1.0) * L / math.sqrt(d)
    clip = cfg["noise.clip"]
    if cfg["noise.kind"] == "gaussian_clipped" and clip is None:
        if cfg["noise.l_inflation"] is None:
            raise ConfigError("gaussian_clipped noise needs noise.clip or noise.l_inflation")
        clip = (cfg["noise.l_inflation"] - 1.0) * L
    return NoiseModel(cfg["noise.kind"], int(seed), float(half_width), float(cfg["noise.std"]),
                      float(np.inf if clip is None else clip))


def serial_run(spec, streams, schedule, noise=None, mode="online", L=None, z_reset="project"):
    """Restarted lazy projection driven by the node-averaged subgradient.

    All nodes share one iterate, so this is the centralised counterpart of
    the distributed engine; for a single node the two coincide exactly.
    """
    n, d = streams.n, streams.d
    oracle = make_gradient_oracle(spec, streams, mode, noise)
    seen = {}

    def step_oracle(step, w):
        grads, losses = oracle(step, np.tile(w, (n, 1)))
        check_grad_bound(grads, L)
        seen[step] = losses
        return ordered_mean(grads)

    w1 = spec.feasible.project(np.zeros(d))
    traces, averages = restarted_lazy_projection(step_oracle, spec.feasible, schedule, w1, z_reset)
    w_pre = np.concatenate([tr.w[:-1] for tr in traces])
    w_post = np.concatenate([tr.w[1:] for tr in traces])
    S = len(w_pre)
    zeros = np.zeros((S, n))
    rounds, rk, rt, start = [], [], [], 0
    for k, (tr, avg) in enumerate(zip(traces, averages), start=1):
        rounds.append(RoundRecord(k, tr.T, tr.a, start, start + tr.T, np.tile(avg, (n, 1)),
                                  float(np.linalg.norm(tr.w[-1]))))
        rk += [k] * tr.T
        rt += list(range(1, tr.T + 1))
        start += tr.T
    g = np.concatenate([tr.g for tr in traces])
    return RunTrace("serial_lazy", np.repeat(w_pre[:, None], n, axis=1),
                    np.repeat(w_post[:, None], n, axis=1),
                    np.stack([seen[s] for s in range(S)]), zeros, zeros.copy(), np.zeros(S),
                    np.linalg.norm(g, axis=1), np.array(rk), np.array(rt), rounds,
                    meta={"mode": mode, "z_reset": z_reset, "L": L, "traces": traces})


def _run_algorithm(alg, cfg, spec, streams, cm, schedule, noise):
    mode = cfg["mode"]
    L_run = noise.noisy_L(spec.L, streams.d) if mode == "stochastic" else spec.L
    if alg == "dogd":
        return dogd_run(spec, streams, cm, schedule, noise, mode, L_run, cfg["schedule.z_reset"])
    if alg == "dda":
        return dda_run(spec, streams, cm, cfg["T"], cfg["dda.A"], cm.slem, noise, mode, L_run)
    return serial_run(spec, streams, schedule, noise, mode, L_run, cfg["schedule.z_reset"])


def _checkpoints(alg, schedule, T):
    if alg == "dda":
        return sorted(set(schedule.round_ends) | {T})
    return None


def run_experiment(cfg, out_dir=None):
    """Graph, consensus matrix, streams, objective, reference, runs, metrics.

    Every stage is deterministic in the config seeds. Failures are raised as
    :class:`StageError` naming the stage. Outputs go to ``out_dir`` (or the
    config's ``output.dir``) and are written atomically.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise TypeError("run_experiment takes an ExperimentConfig")
    echo = cfg.to_text()
    out_dir = out_dir if out_dir is not None else cfg["output.dir"]
    out = None if out_dir is None else Path(out_dir)
    stage = "graph"
    try:
        graph = build_graph(cfg["topology.kind"], cfg["n"],
                            {"radius": cfg["topology.radius"], "degree": cfg["topology.degree"]},
                            seed=cfg["seeds.graph"])
        stage = "consensus"
        cm = metropolis_weights(graph)
        stage = "streams"
        streams = build_streams(cfg)
        stage = "objective"
        spec = build_objective(cfg, streams)
        schedule = make_schedule(cfg["sigma"], cfg["T"], cfg["schedule.b"], cfg["schedule.c"],
                                 cfg["schedule.a1"], cfg["schedule.T1"],
                                 cfg["schedule.partial_final_round"])
        noise = build_noise(cfg, spec.L, cfg["d"])
        cache = None if out is None or not cfg["reference.cache"] else out / "cache"
        gap_tol = cfg["gap.tol"]

        traces, series, regrets, slopes, checks = {}, {}, {}, {}, {}
        replicate_gaps = {}
        for alg in cfg["algorithms"]:
            stage = f"run:{alg}"
            trace = _run_algorithm(alg, cfg, spec, streams, cm, schedule, noise)
            traces[alg] = trace
            stage = f"metrics:{alg}"
            series[alg] = gap_series(trace, spec, streams, cfg["gap.horizon"],
                                     _checkpoints(alg, schedule, cfg["T"]), tol=gap_tol,
                                     cache_dir=cache)
            regrets[alg] = _regrets(cfg, trace, spec, streams, series[alg], cache)
            try:
                slopes[alg] = rate_slope(series[alg], cfg["gap.slope_window"])
            except ValueError:
                slopes[alg] = None
            checks.update(_run_checks(alg, trace, spec, cm))
            if cfg["noise.replicates"] > 1:
                stage = f"replicates:{alg}"
                replicate_gaps[alg] = _replicates(cfg, alg, spec, streams, cm, schedule, cache)

        if cfg["n"] == 1 and "dogd" in traces:
            stage = "reduction"
            ref_trace = traces.get("serial_lazy") or serial_run(
                spec, streams, schedule, noise, cfg["mode"], None, cfg["schedule.z_reset"])
            checks["reduction"] = _reduction_check(traces["dogd"], ref_trace)

        result = ExperimentResult(cfg, graph, cm, streams, spec, schedule, noise, traces, series,
                                  regrets, slopes, checks, replicate_gaps)
        if out is not None:
            stage = "write"
            _write_outputs(result, out, echo, cache)
        return result
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc, echo) from exc


def _regrets(cfg, trace, spec, streams, series, cache):
    want = cfg["metrics.regret"]
    if want == "none":
        return {}
    steps = [int(s) for s in series.steps]
    if want == "final":
        steps = steps[-1:]
    return {s: distributed_regret(trace, spec, streams, s, tol=cfg["gap.tol"], cache_dir=cache)
            for s in steps if s <= trace.n_steps}


def _run_checks(alg, trace, spec, cm):
    checks = {}
    worst = float(trace.consensus_residual.max())
    checks[f"{alg}:consensus"] = (worst <= 1e-9, f"max residual {worst:.3e}")
    W = trace.w_post.reshape(-1, trace.w_post.shape[-1])
    feas = bool(np.all(spec.feasible.contains(W, 1e-12)))
    if trace.rounds:
        hats = np.concatenate([r.w_hat for r in trace.rounds])
        feas = feas and bool(np.all(spec.feasible.contains(hats, 1e-12)))
    checks[f"{alg}:feasible"] = (feas, "all iterates in the set" if feas else "infeasible iterate")
    if alg == "dogd" and cm.n > 1:
        L = trace.meta["L"]
        nb = check_network_bound(trace, L, cm.slem)
        j = nb.worst_step
        checks[f"{alg}:network-bound"] = (
            nb.passed, f"worst step {j + 1}: error {nb.max_error[j]:.4g} vs bound {nb.bounds[j]:.4g}")
    return checks


def _reduction_check(dogd, serial):
    same = (np.array_equal(dogd.w_pre, serial.w_pre)
            and np.array_equal(dogd.w_post, serial.w_post)
            and len(dogd.rounds) == len(serial.rounds)
            and all(np.array_equal(a.w_hat, b.w_hat) for a, b in zip(dogd.rounds, serial.rounds)))
    return same, "bitwise equal" if same else "traces differ"


def _replicates(cfg, alg, spec, streams, cm, schedule, cache):
    """Final worst gaps for each noise seed ``seeds.noise + r``."""
    gaps = []
    base = cfg["seeds.noise"]
    for r in range(cfg["noise.replicates"]):
        noise = build_noise(cfg, spec.L, cfg["d"], seed=base + r)
        trace = _run_algorithm(alg, cfg, spec, streams, cm, schedule, noise)
        s = gap_series(trace, spec, streams, cfg["gap.horizon"],
                       _checkpoints(alg, schedule, cfg["T"]), tol=cfg["gap.tol"], cache_dir=cache)
        gaps.append(s.worst)
    return np.array(gaps)


def _write_outputs(result, out, echo, cache):
    cfg = result.config
    files = []

    def path(name):
        p = out / name
        files.append(p)
        return p

    atomic_write_text(path("config.cfg"), echo)
    write_edges_csv(result.graph, path("edges.csv"))
    write_matrix_csv(result.consensus, path("consensus.csv"))
    if cfg["output.streams"]:
        result.streams.to_csv(path("streams.csv"))
    full_ref = None
    for alg, trace in result.traces.items():
        s = result.series[alg]
        write_metrics_csv(path(f"gaps_{alg}.csv"), metrics_rows(trace, s, result.regrets[alg]))
        if cfg["output.trace"]:
            if full_ref is None:
                full_ref = reference_for(result.spec, result.streams, None, cfg["mode"],
                                         cfg["gap.tol"], cache)
            rows = trace_rows(trace, result.spec, result.streams, full_ref,
                              subsample=cfg["output.subsample"])
            write_trace_csv(path(f"trace_{alg}.csv"), rows)
        if alg in result.replicate_gaps:
            G = result.replicate_gaps[alg]
            rows = [[int(t), G[:, j].mean(), G[:, j].min(), G[:, j].max(), G.shape[0]]
                    for j, t in enumerate(s.steps)]
            write_csv(path(f"mean_gaps_{alg}.csv"),
                      ["T", "mean_worst_gap", "min_worst_gap", "max_worst_gap", "replicates"], rows)
    write_csv(path("summary.csv"), SUMMARY_HEADER, result.summary_rows())
    write_csv(path("checks.csv"), ["check", "status", "detail"],
              [[name, "PASS" if ok else "FAIL", detail]
               for name, (ok, detail) in result.checks.items()])
    result.files = files


SWEEP_HEADER = ["param", "value", "seed", "algorithm", "T", "final_worst_gap", "final_mean_gap",
                "regret_avg", "status", "error"]
SWEEP_AGG_HEADER = ["param", "value", "algorithm", "runs", "failed", "mean_final_gap",
                    "min_final_gap", "max_final_gap"]


def _sweep_cell(args):
    vals, param, value, seed = args
    base = ExperimentConfig(vals)
    try:
        cfg = base.replace(**{param: value, "seeds.data": seed, "output.dir": None,
                              "metrics.regret": "final"})
        res = run_experiment(cfg)
    except Exception as exc:
        return [[param, format_value(value), seed, "", "", "", "", "", "FAIL",
                 f"{type(exc).__name__}: {exc}"]]
    rows = []
    for alg, T, worst, mean, reg, _ in res.summary_rows():
        rows.append([param, format_value(value), seed, alg, T, worst, mean, reg, "OK", ""])
    return rows


def sweep(cfg, vary, seeds, out_dir=None, workers=1):
    """Cross product of ``vary = {param: values}`` with ``seeds``.

    Each cell is an independent run keyed by ``seeds.data``. A failing cell
    is recorded with its error and the sweep continues. Returns
    ``(rows, aggregate_rows)``; with ``out_dir`` both are also written as
    ``sweep.csv`` and ``sweep_agg.csv``.
    """
    if not vary:
        raise ConfigError("sweep needs a parameter to vary")
    if len(vary) != 1:
        raise ConfigError("sweep varies exactly one parameter")
    param, values = next(iter(vary.items()))
    if param not in DEFAULTS:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep values list is empty")
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    cells = [(dict(cfg.values), param, v, s) for v in values for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_cell, cells))
    else:
        parts = [_sweep_cell(c) for c in cells]
    rows = [row for part in parts for row in part]

    agg = []
    algs = list(dict.fromkeys(cfg["algorithms"]))
    for v in values:
        key = format_value(v)
        cell_rows = [r for r in rows if r[1] == key]
        failed = len({r[2] for r in cell_rows if r[8] == "FAIL"})
        for alg in algs:
            gaps = [r[5] for r in cell_rows if r[3] == alg and r[8] == "OK"]
            if gaps:
                agg.append([param, key, alg, len(gaps), failed, float(np.mean(gaps)),
                            float(np.min(gaps)), float(np.max(gaps))])
            else:
                agg.append([param, key, alg, 0, failed, "", "", ""])
    if out_dir is not None:
        out = Path(out_dir)
        atomic_write_text(out / "config.cfg", cfg.to_text())
        write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
        write_csv(out / "sweep_agg.csv", SWEEP_AGG_HEADER, agg)
    return rows, agg


def format_stage_error(err):
    lines = [f"error: {err}"]
    if err.config_text:
        lines.append("config:")
        lines.extend("  " + ln for ln in err.config_text.splitlines())
    tb = "".join(traceback.format_exception_only(type(err.cause), err.cause)).strip()
    lines.append(f"cause: {tb}")
    return "\n".join(lines)
