"""Channel-aware distributed detection.

Each RX-AP forms a local MAPRT statistic per assigned SSA under one of
two awareness levels: with full transmit-signal knowledge (FIS) the
statistic is the closed-form quadratic a^H C^{-1} a; with statistical
knowledge only (PIS) it is obtained by alternating MAP updates of the
reflectivities and of the unknown per-use transmit terms.  Local
statistics are combined in the cloud with SIR-based weights and compared
against thresholds calibrated to the target false-alarm probability.

Calibration and detection trials run through one vectorized engine: a
trial with every target present yields the detection view, and removing
each SSA's own reflection from the combined signal yields that SSA's
worst-case null view (all other targets still interfering).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .assignment import AssignmentPlan
from .beamforming import CombinerSet, PrecoderSet, TransmitFrame, \
    support_matrix
from .channel import RcsRealization, TwoWayChannelSet, crandn
from .config import DetectorConfig
from .power import PowerVector
from .scenario import Scenario, array_response

_CHUNK = 512    # trials per vectorized batch; fixed for reproducibility


# ---------------------------------------------------------------------------
# Weights and aggregation
# ---------------------------------------------------------------------------

def compute_weights(scenario: Scenario, plan: AssignmentPlan,
                    combiners: CombinerSet, v_exponent: float) -> np.ndarray:
    """Per-(SSA, RX-AP) aggregation weights, normalized per SSA.

    The raw weight of RX-AP r for SSA s is the ratio of its combined gain
    toward SSA s to the combined gain toward all other SSAs (an SIR);
    weights are raw**v normalized over the SSA's RX set.  v = 0 and the
    single-SSA case give exactly uniform weights.
    """
    S, L = scenario.S, scenario.L
    weights = np.zeros((S, L))
    for s in range(S):
        rx = sorted(plan.ssa_rx[s])
        if v_exponent == 0.0 or S == 1:
            for r in rx:
                weights[s, r] = 1.0 / len(rx)
            continue
        raw = np.zeros(len(rx))
        for i, r in enumerate(rx):
            v = combiners.get(s, r)
            num = scenario.ssa_gain[s, r] * abs(
                v.conj() @ array_response(scenario.ssa_azimuth[s, r],
                                          scenario.ssa_elevation[s, r],
                                          scenario.M)) ** 2
            den = 0.0
            for t in range(S):
                if t == s:
                    continue
                den += scenario.ssa_gain[t, r] * abs(
                    v.conj() @ array_response(scenario.ssa_azimuth[t, r],
                                              scenario.ssa_elevation[t, r],
                                              scenario.M)) ** 2
            raw[i] = num / max(den, 1e-300)
        powed = (raw / raw.max()) ** v_exponent
        powed /= powed.sum()
        for i, r in enumerate(rx):
            weights[s, r] = powed[i]
    return weights


def aggregate(local_stats: dict[tuple[int, int], float],
              weights: np.ndarray) -> np.ndarray:
    """Cloud fusion: T_s = sum_r w_{s,r} T_{s,r}."""
    S = weights.shape[0]
    out = np.zeros(S)
    for (s, r), t in local_stats.items():
        out[s] += weights[s, r] * t
    return out


# ---------------------------------------------------------------------------
# Reference (per-trial) reception and statistics
# ---------------------------------------------------------------------------

@dataclass
class ReceivedSensingBlock:
    """Combined receive signal per (SSA, RX-AP), with components."""
    y: dict[tuple[int, int], np.ndarray]
    desired: dict[tuple[int, int], np.ndarray]
    interference: dict[tuple[int, int], np.ndarray]
    noise: dict[tuple[int, int], np.ndarray]
    hypotheses: np.ndarray     # (S,) bool, True = target present


def simulate_reception(frame: TransmitFrame, two_way: TwoWayChannelSet,
                       rcs: RcsRealization, combiners: CombinerSet,
                       plan: AssignmentPlan, hypotheses,
                       rng: np.random.Generator,
                       sigma_n2: float) -> ReceivedSensingBlock:
    """Literal evaluation of the received scalar per pair and channel use."""
    hyp = np.asarray(hypotheses, dtype=bool)
    tau = frame.x.shape[-1]
    M = frame.x.shape[1]
    noise_raw = {r: np.sqrt(sigma_n2) * crandn(rng, (M, tau))
                 for r in plan.rx_order}
    y, des, intf, nz = {}, {}, {}, {}
    for s, r in plan.pairs():
        v = combiners.get(s, r)

        def reflection(t: int) -> np.ndarray:
            acc = np.zeros(tau, dtype=complex)
            for li, l in enumerate(plan.tx_order):
                acc += rcs.alpha[t, r, l] * (
                    v.conj() @ two_way.G[t, r, l] @ frame.x[li])
            return acc

        g = reflection(s) if hyp[s] else np.zeros(tau, dtype=complex)
        i_sum = np.zeros(tau, dtype=complex)
        for t in range(plan.S):
            if t != s and hyp[t]:
                i_sum += reflection(t)
        n = v.conj() @ noise_raw[r]
        y[(s, r)] = g + i_sum + n
        des[(s, r)], intf[(s, r)], nz[(s, r)] = g, i_sum, n
    return ReceivedSensingBlock(y=y, desired=des, interference=intf,
                                noise=nz, hypotheses=hyp)


def two_way_stack(two_way: TwoWayChannelSet, frame: TransmitFrame,
                  s: int, r: int, tx_order: list[int]) -> np.ndarray:
    """Per-use matrices with columns G_{s,r,l} x_l[m]: shape (tau, M, n_tx)."""
    gsel = two_way.G[s, r][tx_order]                 # (n_tx, M, M)
    cols = np.einsum("lmp,lpt->lmt", gsel, frame.x)  # (n_tx, M, tau)
    return np.transpose(cols, (2, 1, 0))


def fis_statistic(y_block: np.ndarray, g_stack: np.ndarray,
                  combiner: np.ndarray, rcs_corr: np.ndarray | None,
                  sigma_n2: float) -> float:
    """Fully-informed MAPRT statistic T = a^H C^{-1} a.

    a = sum_m G^H[m] v y[m];  C = sum_m G^H[m] v v^H G[m]
    + sigma_n2 (R_rcs)^{-1}.  Requires sigma_n2 > 0 so C is positive
    definite.
    """
    if sigma_n2 <= 0:
        raise ValueError("fis_statistic requires sigma_n2 > 0")
    gvec = np.einsum("tmn,m->tn", g_stack.conj(), combiner)   # (tau, n_tx)
    a = gvec.T @ y_block
    cmat = gvec.T @ gvec.conj()
    n = cmat.shape[0]
    rinv = np.eye(n) if rcs_corr is None else np.linalg.inv(rcs_corr)
    cmat = cmat + sigma_n2 * rinv
    return float(np.real(a.conj() @ np.linalg.solve(cmat, a)))


@dataclass
class PisResult:
    statistic: float
    converged: bool
    iterations: int
    objectives: list[float] = field(default_factory=list)


def pis_statistic(y_block: np.ndarray, prior_var: np.ndarray,
                  sigma_n2: float, combine_gain: float,
                  rcs_corr: np.ndarray | None = None,
                  prior_mean_c: np.ndarray | None = None,
                  max_iters: int = 10, tol: float = 1e-4) -> PisResult:
    """Partially-informed MAPRT statistic via alternating MAP updates.

    Model: y[m] = combine_gain * c[m]^T alpha + noise, with alpha ~
    CN(0, R_rcs) and independent priors c[m] ~ CN(prior_mean, diag(var)).
    Given alpha each c[m] has a closed-form MAP; given the c's, alpha is
    the fully-informed quadratic solve.  Returns the posterior log-ratio
    (data-independent constants dropped, scaled by sigma_n2 to match the
    fully-informed statistic's units): zero input gives exactly zero.
    """
    tau = y_block.shape[0]
    n = prior_var.shape[0]
    mu = np.zeros((tau, n), dtype=complex) if prior_mean_c is None \
        else prior_mean_c
    rinv = np.eye(n) if rcs_corr is None else np.linalg.inv(rcs_corr)
    d = np.asarray(prior_var, dtype=float)
    active = d > max(d.max(initial=0.0), 1e-300) * 1e-15
    dinv = np.zeros_like(d)
    dinv[active] = 1.0 / d[active]

    alpha = np.ones(n, dtype=complex)
    c = mu.copy()
    last = None
    objectives = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # MAP of each c[m] given alpha (linear-Gaussian update)
        q = combine_gain ** 2 * float(np.sum(np.abs(alpha) ** 2 * d)) \
            + sigma_n2
        resid = y_block - combine_gain * (mu @ alpha)
        c = mu + (d * (combine_gain * alpha.conj()))[None, :] \
            * (resid / q)[:, None]
        c[:, ~active] = mu[:, ~active]
        # MAP of alpha given the c's (fully-informed solve)
        g = combine_gain * c.conj()                      # (tau, n)
        avec = g.T @ y_block
        cmat = g.T @ g.conj() + sigma_n2 * rinv
        alpha = np.linalg.solve(cmat, avec)
        # posterior objective in statistic units
        fit = float(np.sum(np.abs(y_block) ** 2)
                    - np.sum(np.abs(y_block - combine_gain * (c @ alpha)) ** 2))
        pen_a = sigma_n2 * float(np.real(alpha.conj() @ rinv @ alpha))
        dev = c - mu
        pen_c = sigma_n2 * float(np.sum(np.abs(dev) ** 2 * dinv[None, :]))
        t_val = fit - pen_a - pen_c
        objectives.append(t_val)
        if last is not None and abs(t_val - last) <= tol * max(abs(t_val),
                                                               1e-12):
            converged = True
            last = t_val
            if tol > 0:
                break
        last = t_val
    return PisResult(statistic=float(last), converged=converged,
                     iterations=it, objectives=objectives)


# ---------------------------------------------------------------------------
# Vectorized trial engine
# ---------------------------------------------------------------------------

@dataclass
class SensingSetup:
    """Frozen per-setup quantities needed to simulate sensing trials."""

    plan: AssignmentPlan
    combiners: CombinerSet
    sigma_n2: float
    tau_s: int
    M: int
    pairs: list[tuple[int, int]]
    rx_order: list[int]
    kappa: np.ndarray        # (S, S, L): v_{s,r}^H a(t, r); kappa[s,s,r]=sqrt(M)
    sqrt_beta: np.ndarray    # (S, n_rx, n_tx)
    proj_w: np.ndarray       # (S, n_tx, K): a_tx(t,l)^T w_{k,l}
    proj_omega: np.ndarray   # (S, n_tx, S)
    v_rx: np.ndarray         # (S, L, M) combiners

    @classmethod
    def build(cls, scenario: Scenario, plan: AssignmentPlan,
              precoders: PrecoderSet,
              combiners: CombinerSet) -> "SensingSetup":
        S, L, M = scenario.S, scenario.L, scenario.M
        tx = plan.tx_order
        rx = plan.rx_order
        steer_tx = np.zeros((S, len(tx), M), dtype=complex)
        for t in range(S):
            for li, l in enumerate(tx):
                steer_tx[t, li] = scenario.steering_to_ssa(t, l)
        proj_w = np.einsum("tlm,klm->tlk", steer_tx, precoders.w_comm)
        proj_omega = np.einsum("tlm,ulm->tlu", steer_tx, precoders.w_sens)
        kappa = np.zeros((S, S, L), dtype=complex)
        for s, r in plan.pairs():
            v = combiners.get(s, r)
            for t in range(S):
                kappa[s, t, r] = v.conj() @ array_response(
                    scenario.ssa_azimuth[t, r],
                    scenario.ssa_elevation[t, r], M)
        sqrt_beta = np.sqrt(scenario.two_way_gains[:, rx][:, :, tx])
        return cls(plan=plan, combiners=combiners,
                   sigma_n2=scenario.config.sigma_n2,
                   tau_s=int(scenario.config.tau_s), M=M,
                   pairs=plan.pairs(), rx_order=rx, kappa=kappa,
                   sqrt_beta=sqrt_beta, proj_w=proj_w,
                   proj_omega=proj_omega, v_rx=combiners.v)


@dataclass
class PairStatistics:
    """Local statistics per trial and pair, for both hypothesis views.

    ``h1`` has every target present; ``h0`` removes, per pair's own SSA,
    its reflection while keeping all cross-target interference (the
    worst-case null configuration).
    """

    pairs: list[tuple[int, int]]
    h1: np.ndarray | None     # (n_trials, n_pairs)
    h0: np.ndarray | None
    pis_converged_fraction: float = 1.0


class TrialEngine:
    """Batched simulation of independent sensing trials.

    Symbols, reflectivities and noise are redrawn per trial; geometry,
    precoders and powers stay frozen.  Results are identical to the
    per-trial reference path fed with the same draws.
    """

    def __init__(self, setup: SensingSetup, power: PowerVector,
                 detector: DetectorConfig):
        self.setup = setup
        self.detector = detector
        plan = setup.plan
        amps = power.blocks()                      # (n_tx, K+S)
        sup = support_matrix(plan)
        if np.any(amps[~sup] != 0.0):
            raise ValueError("power vector inconsistent with the plan")
        proj = np.concatenate([setup.proj_w, setup.proj_omega], axis=2)
        self.e_hat = proj * amps[None, :, :]       # (S, n_tx, K+S)
        # prior variance of the per-use transmit term at each (pair, tx)
        energy = np.sum(np.abs(self.e_hat) ** 2, axis=2)   # (S, n_tx)
        self.prior_var = setup.sqrt_beta ** 2 * energy[:, None, :]
        self.n_tx = amps.shape[0]
        self.K_S = amps.shape[1]

    # -- one batch ----------------------------------------------------------

    def draw_batch(self, rng: np.random.Generator, n: int):
        setup = self.setup
        S = setup.kappa.shape[0]
        sym = crandn(rng, (n, self.K_S, setup.tau_s))
        alpha = crandn(rng, (n, S, len(setup.rx_order), self.n_tx))
        noise = np.sqrt(setup.sigma_n2) * crandn(
            rng, (n, len(setup.rx_order), setup.M, setup.tau_s))
        return sym, alpha, noise

    def statistics_from_draws(self, sym, alpha, noise,
                              views=("h1", "h0")) -> PairStatistics:
        setup = self.setup
        n = sym.shape[0]
        n_pairs = len(setup.pairs)
        proj = np.einsum("tlj,njm->ntlm", self.e_hat, sym)
        refl = np.einsum("ntrl,trl,ntlm->ntrm", alpha, setup.sqrt_beta, proj)
        out = {v: np.zeros((n, n_pairs)) for v in views}
        nonconv = 0
        total = 0
        for p, (s, r) in enumerate(setup.pairs):
            ri = setup.rx_order.index(r)
            v = setup.v_rx[s, r]
            vn = np.einsum("m,nmt->nt", v.conj(), noise[:, ri])
            y_full = np.einsum("t,ntm->nm", setup.kappa[s, :, r],
                               refl[:, :, ri]) + vn
            own = setup.kappa[s, s, r] * refl[:, s, ri]
            c_own = setup.sqrt_beta[s, ri][None, :, None] * proj[:, s]
            for view in views:
                y = y_full if view == "h1" else y_full - own
                if self.detector.mode == "fis":
                    out[view][:, p] = self._fis_batch(y, c_own)
                else:
                    t, conv = self._pis_batch(y, self.prior_var[s, ri])
                    out[view][:, p] = t
                    nonconv += int(np.sum(~conv))
                    total += n
        frac = 1.0 if total == 0 else 1.0 - nonconv / total
        return PairStatistics(pairs=setup.pairs,
                              h1=out.get("h1"), h0=out.get("h0"),
                              pis_converged_fraction=frac)

    def run(self, rng: np.random.Generator, n_trials: int,
            views=("h1", "h0")) -> PairStatistics:
        chunks = []
        remaining = n_trials
        while remaining > 0:
            n = min(_CHUNK, remaining)
            sym, alpha, noise = self.draw_batch(rng, n)
            chunks.append(self.statistics_from_draws(sym, alpha, noise,
                                                     views))
            remaining -= n
        h1 = np.vstack([c.h1 for c in chunks]) if "h1" in views else None
        h0 = np.vstack([c.h0 for c in chunks]) if "h0" in views else None
        conv = float(np.mean([c.pis_converged_fraction for c in chunks]))
        return PairStatistics(pairs=self.setup.pairs, h1=h1, h0=h0,
                              pis_converged_fraction=conv)

    # -- batched statistics --------------------------------------------------

    def _fis_batch(self, y: np.ndarray, c_own: np.ndarray) -> np.ndarray:
        """y: (n, tau); c_own: (n, n_tx, tau) transmit terms of the own SSA."""
        sigma2 = self.setup.sigma_n2
        gain = np.sqrt(self.setup.M)
        gvec = gain * c_own.conj()                        # (n, n_tx, tau)
        a = np.einsum("nlt,nt->nl", gvec, y)
        cmat = np.einsum("nlt,npt->nlp", gvec, gvec.conj())
        cmat = cmat + sigma2 * np.eye(self.n_tx)
        sol = np.linalg.solve(cmat, a[..., None])[..., 0]
        return np.real(np.einsum("nl,nl->n", a.conj(), sol))

    def _pis_batch(self, y: np.ndarray, prior_var: np.ndarray):
        """Alternating MAP, vectorized over trials; zero prior mean."""
        det = self.detector
        sigma2 = self.setup.sigma_n2
        gain = np.sqrt(self.setup.M)
        n, tau = y.shape
        d = prior_var
        active = d > max(d.max(initial=0.0), 1e-300) * 1e-15
        dinv = np.zeros_like(d)
        dinv[active] = 1.0 / d[active]
        ntx = d.shape[0]

        alpha = np.ones((n, ntx), dtype=complex)
        t_val = np.zeros(n)
        converged = np.zeros(n, dtype=bool)
        last = None
        eye = np.eye(ntx)
        for _ in range(det.pis_max_iters):
            q = gain ** 2 * np.sum(np.abs(alpha) ** 2 * d[None, :], axis=1) \
                + sigma2
            c = (d[None, :] * (gain * alpha.conj())) [:, None, :] \
                * (y / q[:, None])[:, :, None]            # (n, tau, ntx)
            c[:, :, ~active] = 0.0
            g = gain * c.conj()
            avec = np.einsum("ntl,nt->nl", g, y)
            cmat = np.einsum("ntl,ntp->nlp", g, g.conj()) + sigma2 * eye
            alpha = np.linalg.solve(cmat, avec[..., None])[..., 0]
            fit = np.sum(np.abs(y) ** 2, axis=1) - np.sum(
                np.abs(y - gain * np.einsum("ntl,nl->nt", c, alpha)) ** 2,
                axis=1)
            pen_a = sigma2 * np.sum(np.abs(alpha) ** 2, axis=1)
            pen_c = sigma2 * np.sum(np.abs(c) ** 2 * dinv[None, None, :],
                                    axis=(1, 2))
            t_new = fit - pen_a - pen_c
            if last is not None:
                converged |= (np.abs(t_new - last)
                              <= det.pis_tol * np.maximum(np.abs(t_new),
                                                          1e-12))
            last = t_new
            t_val = t_new
        return t_val, converged


# ---------------------------------------------------------------------------
# Calibration and detection probability
# ---------------------------------------------------------------------------

@dataclass
class DetectionReport:
    thresholds: np.ndarray       # (S,)
    p_fa: np.ndarray             # (S,) fresh-sample empirical false alarm
    p_d: np.ndarray              # (S,)
    min_p_d: float
    weights: np.ndarray          # (S, L)
    n_trials: int
    mode: str
    pis_converged_fraction: float = 1.0
    stats_h1: np.ndarray | None = None   # (n_trials, S) aggregated
    stats_h0: np.ndarray | None = None


def aggregate_pairs(stats: np.ndarray, pairs: list[tuple[int, int]],
                    weights: np.ndarray, S: int) -> np.ndarray:
    """(n_trials, n_pairs) local statistics -> (n_trials, S) fused."""
    out = np.zeros((stats.shape[0], S))
    for p, (s, r) in enumerate(pairs):
        out[:, s] += weights[s, r] * stats[:, p]
    return out


def thresholds_from_samples(agg: np.ndarray, p_fa: float) -> np.ndarray:
    """Empirical (1 - p_fa) quantile of the fused null statistics."""
    return np.quantile(agg, 1.0 - p_fa, axis=0)


def calibrate_threshold(setup: SensingSetup, power: PowerVector,
                        detector: DetectorConfig,
                        rng: np.random.Generator,
                        weights: np.ndarray) -> np.ndarray:
    """Per-SSA threshold from n_calib null trials (other targets active)."""
    engine = TrialEngine(setup, power, detector)
    stats = engine.run(rng, detector.n_calib, views=("h0",))
    agg = aggregate_pairs(stats.h0, stats.pairs, weights,
                          weights.shape[0])
    return thresholds_from_samples(agg, detector.p_fa)


def detection_probability(setup: SensingSetup, power: PowerVector,
                          detector: DetectorConfig,
                          thresholds: np.ndarray, n_trials: int,
                          rng: np.random.Generator,
                          weights: np.ndarray,
                          keep_stats: bool = False) -> DetectionReport:
    """Empirical detection probability from fresh trials with all targets
    present; the paired null views give a fresh false-alarm estimate."""
    engine = TrialEngine(setup, power, detector)
    stats = engine.run(rng, n_trials, views=("h1", "h0"))
    S = weights.shape[0]
    agg1 = aggregate_pairs(stats.h1, stats.pairs, weights, S)
    agg0 = aggregate_pairs(stats.h0, stats.pairs, weights, S)
    p_d = np.mean(agg1 >= thresholds[None, :], axis=0)
    p_fa = np.mean(agg0 >= thresholds[None, :], axis=0)
    return DetectionReport(
        thresholds=thresholds, p_fa=p_fa, p_d=p_d,
        min_p_d=float(np.min(p_d)), weights=weights, n_trials=n_trials,
        mode=detector.mode,
        pis_converged_fraction=stats.pis_converged_fraction,
        stats_h1=agg1 if keep_stats else None,
        stats_h0=agg0 if keep_stats else None)


def write_trial_csv(report: DetectionReport, path: str):
    """Optional per-trial dump for offline ROC analysis."""
    if report.stats_h1 is None or report.stats_h0 is None:
        raise ValueError("report was produced without keep_stats=True")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ssa", "trial", "statistic", "hypothesis"])
        n, S = report.stats_h1.shape
        for s in range(S):
            for i in range(n):
                w.writerow([s, i, repr(float(report.stats_h1[i, s])), 1])
            for i in range(n):
                w.writerow([s, i, repr(float(report.stats_h0[i, s])), 0])
