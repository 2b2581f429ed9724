"""Monte-Carlo experiment runner.

Each drop simulates the full network once: user positions, slow fading to
every base station, one shared block of transmitted symbols, and per-base-
station received blocks.  Every requested estimator then runs at every
base station (each station estimates the channels of all L*K users to its
own array), precoders are built from the own-cell blocks, and downlink
rates and subspace angles are evaluated for all users.

Per-drop random streams are keyed by (scenario seed, drop index), so
results are independent of worker count and completion order.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import estimators, evaluation, signalmodel
from .errors import ConfigurationError
from .numerics import OptimizerOptions
from .scenario import (CellLayout, PilotBook, Scenario, allocate_pilots,
                       build_layout, drop_users, slow_fading_matrix)

ALL_METHODS = ("ls", "train_map", "blind", "pasp", "semi_blind", "genie")


@dataclass
class ExperimentPlan:
    scenario: Scenario
    methods: tuple = ALL_METHODS
    drops: int = 10
    sweep: tuple | None = None          # optional T_ul values
    out_dir: str = "out"
    workers: int = 1
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)

    def __post_init__(self):
        if self.drops < 1:
            raise ConfigurationError("drops must be >= 1")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ConfigurationError(
                f"unknown methods {sorted(unknown)}; allowed: {ALL_METHODS}")
        if self.sweep is not None and any(t < 0 for t in self.sweep):
            raise ConfigurationError("sweep T_ul values must be >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


@dataclass
class DropData:
    """One network realization as seen by every base station."""

    G: np.ndarray           # (L, M, L*K) true channels
    betas: np.ndarray       # (L, L*K) slow fading per base station
    Y_ul: np.ndarray        # (L, M, T_ul)
    Y_tr: np.ndarray        # (L, M, T_tr)
    X: np.ndarray           # (T_ul, L*K) shared transmitted symbols
    pilots: PilotBook


def drop_rng(scenario: Scenario, drop_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=scenario.seed & (2 ** 64 - 1),
                                spawn_key=(drop_index,))
    return np.random.default_rng(ss)


def simulate_drop(scenario: Scenario, layout: CellLayout,
                  rng: np.random.Generator) -> DropData:
    """Draw one complete network realization."""
    L, K, M = scenario.L, scenario.K, scenario.M
    n = scenario.n_users
    positions = drop_users(layout, scenario, rng)
    betas = slow_fading_matrix(positions, layout, scenario, rng)
    pilots = allocate_pilots(scenario, rng)
    X = signalmodel.crandn(rng, scenario.T_ul, n)
    G = np.empty((L, M, n), dtype=complex)
    Y_ul = np.empty((L, M, scenario.T_ul), dtype=complex)
    Y_tr = np.empty((L, M, scenario.T_tr), dtype=complex)
    for b in range(L):
        ch = signalmodel.draw_channels(betas[b], M, rng)
        G[b] = ch.H
        Y_ul[b], _ = signalmodel.synth_uplink_data(
            ch, scenario.rho_ul, scenario.T_ul, rng, X=X)
        Y_tr[b] = signalmodel.synth_training(ch, scenario.rho_tr, pilots, rng)
    return DropData(G=G, betas=betas, Y_ul=Y_ul, Y_tr=Y_tr, X=X,
                    pilots=pilots)


def estimate_all_stations(method: str, data: DropData, scenario: Scenario,
                          opts: OptimizerOptions,
                          snapshot_iters=None):
    """Run one estimator at every base station.

    Returns (H_hats, extras) where H_hats has shape (L, M, L*K) and
    extras holds per-station EstimateSet objects for methods that carry
    traces or snapshots.
    """
    L = scenario.L
    H_hats = np.empty_like(data.G)
    extras = []
    for b in range(L):
        beta_b = data.betas[b]
        if method == "ls":
            H_hats[b] = estimators.ls_all_users(
                data.Y_tr[b], data.pilots, scenario.rho_tr)
            extras.append(None)
        elif method == "train_map":
            H_hats[b] = estimators.train_map_joint(
                data.Y_tr[b], data.pilots, beta_b, scenario.rho_tr)
            extras.append(None)
        elif method == "blind":
            est = estimators.blind_map_estimate(
                data.Y_ul[b], beta_b, scenario.rho_ul)
            H_hats[b] = est.H_hat
            extras.append(est)
        elif method == "pasp":
            ls_all = estimators.ls_all_users(
                data.Y_tr[b], data.pilots, scenario.rho_tr)
            est = estimators.pasp_estimate(
                data.Y_ul[b], ls_all, beta_b, data.pilots)
            H_hats[b] = est.H_hat
            extras.append(est)
        elif method == "semi_blind":
            ls_all = estimators.ls_all_users(
                data.Y_tr[b], data.pilots, scenario.rho_tr)
            init = estimators.pasp_estimate(
                data.Y_ul[b], ls_all, beta_b, data.pilots)
            est = estimators.semi_blind_estimate(
                init, data.Y_ul[b], data.Y_tr[b], data.pilots, beta_b,
                scenario.rho_ul, scenario.rho_tr, opts=opts,
                snapshot_iters=snapshot_iters)
            H_hats[b] = est.H_hat
            extras.append(est)
        elif method == "genie":
            H_hats[b] = estimators.genie_bound_estimate(
                data.Y_tr[b], data.Y_ul[b], data.X, data.pilots, beta_b,
                scenario.rho_tr, scenario.rho_ul)
            extras.append(None)
        else:
            raise ConfigurationError(f"unknown method {method!r}")
    return H_hats, extras


def evaluate_estimates(H_hats: np.ndarray, data: DropData,
                       scenario: Scenario):
    """Angles at the serving station plus MF and ZF rates for all users."""
    L, K = scenario.L, scenario.K
    n = scenario.n_users
    angles = np.empty(n)
    for u in range(n):
        j = u // K
        angles[u] = evaluation.subspace_angle(data.G[j][:, u],
                                              H_hats[j][:, u])
    W_mf = np.empty((L, scenario.M, K), dtype=complex)
    W_zf = np.empty((L, scenario.M, K), dtype=complex)
    for b in range(L):
        own = H_hats[b][:, b * K:(b + 1) * K]
        W_mf[b] = evaluation.mf_precoder(own)
        W_zf[b] = evaluation.zf_precoder(own)
    rate_mf = evaluation.downlink_rates(data.G, W_mf, scenario.rho_dl, K)
    rate_zf = evaluation.downlink_rates(data.G, W_zf, scenario.rho_dl, K)
    return angles, rate_mf, rate_zf


def run_drop(scenario: Scenario, drop_index: int, methods,
             opts: OptimizerOptions) -> dict:
    """Simulate one drop and evaluate all requested methods.

    Estimator failures are recorded per method; the drop continues.
    """
    rng = drop_rng(scenario, drop_index)
    layout = build_layout(scenario)
    data = simulate_drop(scenario, layout, rng)
    out = {}
    for method in methods:
        try:
            H_hats, _ = estimate_all_stations(method, data, scenario, opts)
            angles, rate_mf, rate_zf = evaluate_estimates(
                H_hats, data, scenario)
            out[method] = {"angles": angles, "rate_mf": rate_mf,
                           "rate_zf": rate_zf}
        except Exception as exc:   # noqa: BLE001 - recorded, not swallowed
            out[method] = {"failed": f"{type(exc).__name__}: {exc}"}
    return out


def _run_drop_star(args):
    return run_drop(*args)


def collect_metrics(plan: ExperimentPlan, scenario: Scenario | None = None):
    """Run all drops (optionally in parallel) and gather per-user records.

    Returns (records, failures) where records maps method -> dict with
    concatenated angle/rate arrays and failures maps method -> count.
    """
    sc = scenario if scenario is not None else plan.scenario
    jobs = [(sc, d, tuple(plan.methods), plan.optimizer)
            for d in range(plan.drops)]
    if plan.workers == 1:
        results = [run_drop(*j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=plan.workers) as pool:
            results = list(pool.map(_run_drop_star, jobs))
    records = {m: {"angles": [], "rate_mf": [], "rate_zf": []}
               for m in plan.methods}
    failures = {m: 0 for m in plan.methods}
    for res in results:                       # ordered by drop index
        for m in plan.methods:
            if "failed" in res[m]:
                failures[m] += 1
            else:
                for key in ("angles", "rate_mf", "rate_zf"):
                    records[m][key].append(res[m][key])
    for m in plan.methods:
        for key in ("angles", "rate_mf", "rate_zf"):
            vals = records[m][key]
            records[m][key] = (np.concatenate(vals) if vals
                               else np.empty(0))
    return records, failures


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return f"{float(v):.10g}"


def _write_series_csv(path, x_name: str, x: np.ndarray, columns: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([x_name] + list(columns))
        for i, xv in enumerate(x):
            w.writerow([_fmt(xv)] + [_fmt(columns[c][i]) for c in columns])


def _rate_grid(records) -> np.ndarray:
    top = 0.0
    for rec in records.values():
        for key in ("rate_mf", "rate_zf"):
            if rec[key].size:
                top = max(top, float(rec[key].max()))
    top = max(1.0, math.ceil(top * 1.05 * 10.0) / 10.0)
    return np.linspace(0.0, top, 201)


def write_outputs(records, failures, plan: ExperimentPlan,
                  sweep_rows=None) -> list:
    """Write the CSV tables; returns the list of paths written."""
    os.makedirs(plan.out_dir, exist_ok=True)
    paths = []
    methods = [m for m in plan.methods if records[m]["angles"].size]

    angle_grid = np.linspace(0.0, 90.0, 181)
    cols = {m: evaluation.empirical_cdf(records[m]["angles"], angle_grid)
            for m in methods}
    p = os.path.join(plan.out_dir, "angle_cdf.csv")
    _write_series_csv(p, "theta_deg", angle_grid, cols)
    paths.append(p)

    rgrid = _rate_grid(records)
    for key, fname in (("rate_mf", "rate_cdf_mf.csv"),
                       ("rate_zf", "rate_cdf_zf.csv")):
        cols = {m: evaluation.empirical_cdf(records[m][key], rgrid)
                for m in methods}
        p = os.path.join(plan.out_dir, fname)
        _write_series_csv(p, "rate_bits", rgrid, cols)
        paths.append(p)

    p = os.path.join(plan.out_dir, "summary.csv")
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "drops_ok", "drops_failed", "mean_angle_deg",
                    "mean_rate_mf", "mean_rate_zf", "p5_rate_mf",
                    "p5_rate_zf"])
        for m in plan.methods:
            rec = records[m]
            if rec["angles"].size == 0:
                w.writerow([m, 0, failures[m]] + ["nan"] * 5)
                continue
            w.writerow([
                m, plan.drops - failures[m], failures[m],
                _fmt(rec["angles"].mean()),
                _fmt(rec["rate_mf"].mean()),
                _fmt(rec["rate_zf"].mean()),
                _fmt(evaluation.percentile(rec["rate_mf"], 5.0)),
                _fmt(evaluation.percentile(rec["rate_zf"], 5.0)),
            ])
    paths.append(p)

    if sweep_rows:
        t_vals = np.array([row["T_ul"] for row in sweep_rows], dtype=float)
        for key in ("mf_mean", "mf_p5", "zf_mean", "zf_p5"):
            cols = {m: np.array([row[key][m] for row in sweep_rows])
                    for m in plan.methods}
            p = os.path.join(plan.out_dir, f"sweep_{key}.csv")
            _write_series_csv(p, "T_ul", t_vals, cols)
            paths.append(p)
    return paths


def run_experiment(plan: ExperimentPlan) -> list:
    """Execute the plan and write all CSV tables; returns paths written."""
    records, failures = collect_metrics(plan)
    sweep_rows = None
    if plan.sweep:
        sweep_rows = []
        for t in plan.sweep:
            sc = dataclasses.replace(plan.scenario, T_ul=int(t))
            rec_t, _ = collect_metrics(plan, scenario=sc)
            row = {"T_ul": t, "mf_mean": {}, "mf_p5": {}, "zf_mean": {},
                   "zf_p5": {}}
            for m in plan.methods:
                rmf, rzf = rec_t[m]["rate_mf"], rec_t[m]["rate_zf"]
                row["mf_mean"][m] = rmf.mean() if rmf.size else math.nan
                row["zf_mean"][m] = rzf.mean() if rzf.size else math.nan
                row["mf_p5"][m] = (evaluation.percentile(rmf, 5.0)
                                   if rmf.size else math.nan)
                row["zf_p5"][m] = (evaluation.percentile(rzf, 5.0)
                                   if rzf.size else math.nan)
            sweep_rows.append(row)
    return write_outputs(records, failures, plan, sweep_rows=sweep_rows)


# ---------------------------------------------------------------------------
# Convergence study
# ---------------------------------------------------------------------------

CONVERGE_INITS = ("pasp", "blind", "ls", "random")


def default_checkpoints(limit: int = 1280):
    c, out = 1, []
    while c <= limit:
        out.append(c)
        c *= 2
    return tuple(out)


@dataclass
class ConvergenceResult:
    iterations: tuple
    mean_rate_mf: dict        # init -> array over iterations
    traces: dict              # init -> list of objective traces


def _initial_estimate(init: str, data: DropData, b: int,
                      scenario: Scenario,
                      rng: np.random.Generator) -> np.ndarray:
    beta_b = data.betas[b]
    if init == "ls":
        return estimators.ls_all_users(data.Y_tr[b], data.pilots,
                                       scenario.rho_tr)
    if init == "blind":
        return estimators.blind_map_estimate(
            data.Y_ul[b], beta_b, scenario.rho_ul).H_hat
    if init == "pasp":
        ls_all = estimators.ls_all_users(data.Y_tr[b], data.pilots,
                                         scenario.rho_tr)
        return estimators.pasp_estimate(
            data.Y_ul[b], ls_all, beta_b, data.pilots).H_hat
    if init == "random":
        scale = math.sqrt(float(np.mean(beta_b)))
        return scale * signalmodel.crandn(
            rng, scenario.M, scenario.n_users)
    raise ConfigurationError(f"unknown initialization {init!r}")


def run_convergence_study(plan: ExperimentPlan,
                          checkpoints=None) -> ConvergenceResult:
    """Average MF user rate of the semi-blind estimator after growing
    iteration counts, for the four initializations."""
    if "semi_blind" not in plan.methods:
        raise ConfigurationError(
            "convergence study requires method semi_blind")
    sc = plan.scenario
    checkpoints = tuple(checkpoints or default_checkpoints())
    opts = dataclasses.replace(plan.optimizer, max_iters=checkpoints[-1])
    layout = build_layout(sc)
    sums = {init: np.zeros(len(checkpoints)) for init in CONVERGE_INITS}
    traces = {init: [] for init in CONVERGE_INITS}
    for d in range(plan.drops):
        rng = drop_rng(sc, d)
        data = simulate_drop(sc, layout, rng)
        for init in CONVERGE_INITS:
            snaps = [dict() for _ in range(sc.L)]
            for b in range(sc.L):
                H0 = _initial_estimate(init, data, b, sc, rng)
                est = estimators.semi_blind_estimate(
                    H0, data.Y_ul[b], data.Y_tr[b], data.pilots,
                    data.betas[b], sc.rho_ul, sc.rho_tr, opts=opts,
                    snapshot_iters=checkpoints)
                traces[init].append(est.trace)
                for c in checkpoints:
                    snaps[b][c] = est.snapshots.get(c, est.H_hat)
            for ci, c in enumerate(checkpoints):
                H_hats = np.stack([snaps[b][c] for b in range(sc.L)])
                _, rate_mf, _ = evaluate_estimates(H_hats, data, sc)
                sums[init][ci] += rate_mf.mean()
    mean_rate = {init: sums[init] / plan.drops for init in CONVERGE_INITS}
    return ConvergenceResult(iterations=checkpoints,
                             mean_rate_mf=mean_rate, traces=traces)


def write_convergence_csv(result: ConvergenceResult,
                          out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "converge.csv")
    _write_series_csv(path, "iterations",
                      np.array(result.iterations, dtype=float),
                      {init: result.mean_rate_mf[init]
                       for init in CONVERGE_INITS})
    return path
