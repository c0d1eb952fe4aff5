"""Experiment orchestration: sweeps, setup averaging, result files.

One experiment sweeps a single parameter and, for every sweep value,
averages the detection/SINR metrics over independent UE drops (setups).
Per setup, the pipeline is: scenario -> AP mode selection and UE
association -> frozen precoders -> communication SINR model -> sensing
quadratic forms -> CCP power allocation -> threshold calibration ->
detection trials.  Stages untouched by the swept parameter are reused
across sweep values, and all randomness flows through named streams so a
re-run reproduces results byte for byte.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assignment import build_plan
from .beamforming import build_precoders, draw_symbols, mrc_combiners
from .channel import ChannelModel, ChannelEstimateSet, build_two_way_channels
from .config import CcpConfig, DetectorConfig, ExperimentSpec, SystemConfig
from .detection import (SensingSetup, TrialEngine, aggregate_pairs,
                        compute_weights, thresholds_from_samples)
from .power import (build_power_problem, ccp_power_allocation,
                    equal_split_init)
from .rng import stream
from .sinr import (build_sensing_vectors, comm_sinr, estimate_comm_sinr_terms,
                   sensing_quadratic_forms, sensing_sinr)
from .beamforming import lp_mmse_norm_scales

_DB_FLOOR = 1e-12


def _db(x: float) -> float:
    return 10.0 * np.log10(max(float(x), _DB_FLOOR))


@dataclass
class SetupArtifacts:
    """Everything frozen for one UE drop at one sweep value."""
    scenario: object
    plan: object
    norm_scale: np.ndarray
    precoders: object
    combiners: object
    comm_model: object
    symbols: object
    forms: object
    problem: object
    ccp_state: object
    true_comm_sinr: np.ndarray
    true_sens_sinr: np.ndarray


def derive_drop_seed(master_seed: int, setup_index: int) -> int:
    """Drop seed shared by all sweep values of one setup (paired drops)."""
    return int(stream(master_seed, setup_index, "ue_drop").integers(0, 2 ** 62))


def build_comm_stage(cfg: SystemConfig, master_seed: int, setup_index: int):
    """Scenario, plan and all communication-side frozen quantities."""
    from .scenario import build_scenario

    scenario = build_scenario(cfg, derive_drop_seed(master_seed, setup_index))
    plan = build_plan(scenario)
    norm_scale = lp_mmse_norm_scales(
        scenario, plan, cfg.n_norm, stream(master_seed, setup_index, "norm"))
    ch = ChannelModel(scenario, aps=plan.tx_order)
    rng_pre = stream(master_seed, setup_index, "precoders")
    _, h_hat = ch.draw_estimates(rng_pre, n=1)
    estimates = ChannelEstimateSet(h_hat=h_hat[0], err_corr=ch.err_corr,
                                   aps=plan.tx_order)
    precoders = build_precoders(scenario, plan, estimates, norm_scale)
    combiners = mrc_combiners(scenario, plan)
    comm_model = estimate_comm_sinr_terms(
        scenario, plan, cfg.n_mc_sinr,
        stream(master_seed, setup_index, "comm_model"), norm_scale,
        precoders.w_sens)
    return scenario, plan, norm_scale, precoders, combiners, comm_model


def build_setup(cfg: SystemConfig, ccp_cfg: CcpConfig, master_seed: int,
                setup_index: int, comm_stage=None) -> SetupArtifacts:
    """Full pipeline through power allocation for one setup."""
    from .scenario import build_scenario

    if comm_stage is None:
        comm_stage = build_comm_stage(cfg, master_seed, setup_index)
        scenario = comm_stage[0]
    else:
        # reuse communication-side stages; rebuild the scenario so the
        # sensing gains reflect the current RCS variance
        scenario = build_scenario(cfg,
                                  derive_drop_seed(master_seed, setup_index))
    _, plan, norm_scale, precoders, combiners, comm_model = comm_stage

    symbols = draw_symbols(cfg, stream(master_seed, setup_index, "symbols"))
    two_way = build_two_way_channels(scenario)
    vectors = build_sensing_vectors(plan, two_way, precoders, combiners,
                                    symbols)
    forms = sensing_quadratic_forms(vectors)
    problem = build_power_problem(comm_model, forms, plan, cfg)
    init = equal_split_init(plan, cfg.P_tx)
    state = ccp_power_allocation(
        problem, ccp_cfg, init,
        reinit_rng=stream(master_seed, setup_index, "reinit"), plan=plan)
    true_comm = comm_sinr(comm_model, state.rho)
    true_sens = sensing_sinr(forms, state.rho, cfg.tau_s, cfg.sigma_n2)
    return SetupArtifacts(
        scenario=scenario, plan=plan, norm_scale=norm_scale,
        precoders=precoders, combiners=combiners, comm_model=comm_model,
        symbols=symbols, forms=forms, problem=problem, ccp_state=state,
        true_comm_sinr=true_comm, true_sens_sinr=true_sens)


def run_detection_stage(art: SetupArtifacts, det: DetectorConfig,
                        master_seed: int, setup_index: int,
                        pair_stats=None):
    """Calibrate thresholds and run detection trials for one setup.

    Returns (metrics dict, pair statistics) so a weighting-exponent sweep
    can re-score the same trials under different weights.
    """
    setup = SensingSetup.build(art.scenario, art.plan, art.precoders,
                               art.combiners)
    power = art.ccp_state.rho
    if pair_stats is None:
        engine = TrialEngine(setup, power, det)
        calib = engine.run(stream(master_seed, setup_index, "calibration"),
                           det.n_calib, views=("h0",))
        trials = engine.run(stream(master_seed, setup_index, "trials"),
                            det.n_trials, views=("h1", "h0"))
        pair_stats = (calib, trials)
    calib, trials = pair_stats
    weights = compute_weights(art.scenario, art.plan, art.combiners,
                              det.v_exponent)
    S = art.scenario.S
    thr = thresholds_from_samples(
        aggregate_pairs(calib.h0, calib.pairs, weights, S), det.p_fa)
    agg1 = aggregate_pairs(trials.h1, trials.pairs, weights, S)
    agg0 = aggregate_pairs(trials.h0, trials.pairs, weights, S)
    p_d = np.mean(agg1 >= thr[None, :], axis=0)
    p_fa = np.mean(agg0 >= thr[None, :], axis=0)
    metrics = {
        "p_d": p_d, "p_fa": p_fa, "thresholds": thr,
        "min_p_d": float(np.min(p_d)),
        "pis_converged_fraction": min(calib.pis_converged_fraction,
                                      trials.pis_converged_fraction),
    }
    return metrics, pair_stats


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    spec: dict
    config_hash: str
    rows: list[dict] = field(default_factory=list)        # one per sweep value
    setup_rows: list[dict] = field(default_factory=list)  # one per (value, setup)
    wall_times: dict = field(default_factory=dict)


# column orders are part of the output contract; keep stable
ROW_COLUMNS = ["sweep_param", "sweep_value", "min_detection_prob",
               "mean_min_comm_sinr_db", "mean_min_sensing_sinr_db",
               "ccp_converged_fraction", "config_hash"]
SETUP_COLUMNS = ["sweep_param", "sweep_value", "setup", "min_p_d",
                 "min_comm_sinr_db", "min_sensing_sinr_db", "gamma_c",
                 "gamma_s", "ccp_converged", "ccp_iterations", "slack_sum",
                 "per_ssa_p_d", "per_ssa_p_fa"]


def _setup_job(spec_dict: dict, setup_index: int) -> list[dict]:
    """All sweep values for one setup, with stage reuse between values."""
    from .config import spec_from_dict

    spec = spec_from_dict(spec_dict)
    param = spec.sweep_param
    reuse_comm = param in ("sigma_rcs2", "omega0", "v_exponent")
    reuse_power = param in ("v_exponent",)
    reuse_forms = param in ("omega0", "v_exponent")

    comm_stage = None
    art = None
    pair_stats = None
    out = []
    for value in spec.sweep_values:
        cfg, ccp_cfg, det_cfg = spec.config_for(value)
        t0 = time.perf_counter()
        if comm_stage is None or not reuse_comm:
            comm_stage = build_comm_stage(cfg, spec.master_seed, setup_index)
        if art is None or not (reuse_power or reuse_forms):
            art = build_setup(cfg, ccp_cfg, spec.master_seed, setup_index,
                              comm_stage=comm_stage)
        elif not reuse_power:   # omega sweep: refresh the CCP stage only
            art = build_setup(cfg, ccp_cfg, spec.master_seed, setup_index,
                              comm_stage=comm_stage)
        det_metrics, pair_stats = run_detection_stage(
            art, det_cfg, spec.master_seed, setup_index,
            pair_stats=pair_stats if reuse_power else None)
        state = art.ccp_state
        out.append({
            "sweep_value": value,
            "setup": setup_index,
            "min_p_d": det_metrics["min_p_d"],
            "per_ssa_p_d": [float(x) for x in det_metrics["p_d"]],
            "per_ssa_p_fa": [float(x) for x in det_metrics["p_fa"]],
            "min_comm_sinr_db": _db(np.min(art.true_comm_sinr)),
            "min_sensing_sinr_db": _db(np.min(art.true_sens_sinr)),
            "gamma_c": float(state.gamma_c),
            "gamma_s": float(state.gamma_s),
            "ccp_converged": bool(state.converged),
            "ccp_iterations": int(state.iteration),
            "slack_sum": float(state.slack_sum),
            "wall_time": time.perf_counter() - t0,
        })
    return out


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Execute the sweep over all setups and aggregate per sweep value."""
    spec_dict = spec.to_dict()
    jobs = list(range(spec.n_setups))
    if threads > 1 and spec.n_setups > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_setup = list(pool.map(_setup_job_star,
                                      [(spec_dict, i) for i in jobs]))
    else:
        per_setup = [_setup_job(spec_dict, i) for i in jobs]

    report = ExperimentReport(spec=spec_dict, config_hash=spec.config_hash())
    for vi, value in enumerate(spec.sweep_values):
        points = [per_setup[i][vi] for i in jobs]
        report.rows.append({
            "sweep_param": spec.sweep_param,
            "sweep_value": value,
            "min_detection_prob": float(np.mean([p["min_p_d"]
                                                 for p in points])),
            "mean_min_comm_sinr_db": float(np.mean([p["min_comm_sinr_db"]
                                                    for p in points])),
            "mean_min_sensing_sinr_db": float(
                np.mean([p["min_sensing_sinr_db"] for p in points])),
            "ccp_converged_fraction": float(np.mean([p["ccp_converged"]
                                                     for p in points])),
            "config_hash": spec.config_hash(),
        })
        report.wall_times[str(value)] = float(np.sum([p["wall_time"]
                                                      for p in points]))
        for p in points:
            row = dict(p)
            row["sweep_param"] = spec.sweep_param
            row.pop("wall_time")
            report.setup_rows.append(row)
    return report


def _setup_job_star(args):
    return _setup_job(*args)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ";".join(repr(float(x)) for x in value)
    return str(value)


def emit_results(report: ExperimentReport, outdir: str, name: str,
                 formats=("csv", "json"), plots: bool = True) -> list[str]:
    """Write the results CSV(s), the JSON manifest and optional figures.

    CSV content is a pure function of the report rows, so identical runs
    produce identical bytes; wall-clock timings live in the manifest only.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if "csv" in formats:
        path = out / f"{name}_results.csv"
        with open(path, "w", newline="") as f:
            f.write(",".join(ROW_COLUMNS) + "\n")
            for row in report.rows:
                f.write(",".join(_fmt(row[c]) for c in ROW_COLUMNS) + "\n")
        written.append(str(path))

        path = out / f"{name}_setups.csv"
        with open(path, "w", newline="") as f:
            f.write(",".join(SETUP_COLUMNS) + "\n")
            for row in report.setup_rows:
                f.write(",".join(_fmt(row[c]) for c in SETUP_COLUMNS) + "\n")
        written.append(str(path))

    if "json" in formats:
        path = out / f"{name}_manifest.json"
        manifest = {
            "config_hash": report.config_hash,
            "spec": report.spec,
            "versions": _versions(),
            "wall_times_s": report.wall_times,
            "rows": report.rows,
        }
        with open(path, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        written.append(str(path))

    if plots and report.rows:
        from .plots import render_experiment
        written.extend(render_experiment(report, str(out), name))
    return written


def _versions() -> dict:
    import cvxpy
    return {"cfisac": __version__, "numpy": np.__version__,
            "cvxpy": cvxpy.__version__}
