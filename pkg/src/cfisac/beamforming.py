"""Precoders, combiners, symbol blocks and transmit-signal assembly.

Communication precoding is local partial MMSE per TX-AP from its own
channel estimates, normalized so the precoder has unit average energy
over the estimate ensemble (the normalization expectation is estimated
once by Monte Carlo and then frozen).  Sensing transmit/receive beams are
conjugate (MRT/MRC) beams toward the SSA, unit-norm by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentPlan
from .channel import ChannelEstimateSet, ChannelModel, crandn
from .config import SystemConfig
from .power import PowerVector
from .scenario import Scenario, array_response


@dataclass
class PrecoderSet:
    """Unit-energy precoders, zero for unassigned pairs.

    ``w_comm[k, li]`` is the communication precoder of UE k at the li-th
    TX-AP (tx_order), ``w_sens[s, li]`` the sensing beam toward SSA s.
    ``norm_scale`` holds the ensemble divisors sqrt(E ||w_raw||^2).
    """

    w_comm: np.ndarray      # (K, n_tx, M)
    w_sens: np.ndarray      # (S, n_tx, M)
    norm_scale: np.ndarray  # (K, n_tx); 1 where unassigned
    tx_order: list[int]


@dataclass
class CombinerSet:
    """MRC combiners v[s, r] (global AP index), zero where r not in R_s."""
    v: np.ndarray           # (S, L, M)
    pairs: list[tuple[int, int]]

    def get(self, s: int, r: int) -> np.ndarray:
        return self.v[s, r]


@dataclass
class SymbolBlock:
    """Unit-variance complex Gaussian data and sensing symbols."""
    s_comm: np.ndarray      # (K, tau_s)
    r_sens: np.ndarray      # (S, tau_s)

    @property
    def tau_s(self) -> int:
        return self.s_comm.shape[1]

    def stacked(self) -> np.ndarray:
        """(K + S, tau_s): communication streams on top."""
        return np.vstack([self.s_comm, self.r_sens])


@dataclass
class TransmitFrame:
    """Per-AP transmit signal x[li, :, m] over one sensing block."""
    x: np.ndarray           # (n_tx, M, tau_s)
    tx_order: list[int]


# ---------------------------------------------------------------------------
# LP-MMSE communication precoding
# ---------------------------------------------------------------------------

def _raw_precoders(estimates: np.ndarray, err_corr: np.ndarray,
                   member: np.ndarray, p_ul: float,
                   sigma_n2: float) -> np.ndarray:
    """Unnormalized LP-MMSE vectors for batched estimates.

    estimates: (n, K, A, M); err_corr: (K, A, M, M); member: (K, A) bool.
    Returns (n, K, A, M), zero where member is False.
    """
    M = estimates.shape[-1]
    outer = np.einsum("nkam,nkap->nkamp", estimates, estimates.conj())
    outer = outer + err_corr[None]
    psi = p_ul * np.einsum("ka,nkamp->namp", member, outer)
    psi = psi + sigma_n2 * np.eye(M)
    w = p_ul * np.einsum("namq,nkaq->nkam", np.linalg.inv(psi), estimates)
    return w * member[None, :, :, None]


def _membership(plan: AssignmentPlan) -> np.ndarray:
    member = np.zeros((plan.K, plan.n_tx), dtype=bool)
    for li, l in enumerate(plan.tx_order):
        for k in plan.ap_ues.get(l, []):
            member[k, li] = True
    return member


def lp_mmse_norm_scales(scenario: Scenario, plan: AssignmentPlan,
                        n_norm: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo estimate of sqrt(E ||w_raw||^2) per (UE, TX-AP).

    The expectation runs over the channel-estimate ensemble; entries for
    unassigned pairs are 1 so division is always safe.
    """
    cfg = scenario.config
    model = ChannelModel(scenario, aps=plan.tx_order)
    member = _membership(plan)
    _, h_hat = model.draw_estimates(rng, n=n_norm)
    err = model.err_corr
    w = _raw_precoders(h_hat, err, member, cfg.p_ul, cfg.sigma_n2)
    energy = np.mean(np.sum(np.abs(w) ** 2, axis=-1), axis=0)   # (K, n_tx)
    scale = np.sqrt(energy)
    scale[~member] = 1.0
    return scale


def lp_mmse_precoders(estimates: ChannelEstimateSet, plan: AssignmentPlan,
                      scenario: Scenario,
                      norm_scale: np.ndarray) -> np.ndarray:
    """Normalized LP-MMSE precoders for one estimate realization."""
    cfg = scenario.config
    if list(estimates.aps) != plan.tx_order:
        raise ValueError("estimates must cover exactly the TX-APs in order")
    member = _membership(plan)
    w = _raw_precoders(estimates.h_hat[None], estimates.err_corr, member,
                       cfg.p_ul, cfg.sigma_n2)[0]
    return w / norm_scale[:, :, None]


def mrt_sensing_precoders(scenario: Scenario,
                          plan: AssignmentPlan) -> np.ndarray:
    """Conjugate beams toward each assigned SSA: conj(a) / sqrt(M)."""
    M = scenario.M
    w = np.zeros((plan.S, plan.n_tx, M), dtype=complex)
    for s in range(plan.S):
        for li, l in enumerate(plan.tx_order):
            if l in plan.ssa_tx[s]:
                a = scenario.steering_to_ssa(s, l)
                w[s, li] = a.conj() / np.sqrt(M)
    return w


def build_precoders(scenario: Scenario, plan: AssignmentPlan,
                    estimates: ChannelEstimateSet,
                    norm_scale: np.ndarray) -> PrecoderSet:
    return PrecoderSet(
        w_comm=lp_mmse_precoders(estimates, plan, scenario, norm_scale),
        w_sens=mrt_sensing_precoders(scenario, plan),
        norm_scale=norm_scale, tx_order=plan.tx_order)


def mrc_combiners(scenario: Scenario, plan: AssignmentPlan) -> CombinerSet:
    """Unit-norm receive beams toward each assigned SSA: a / sqrt(M)."""
    M = scenario.M
    v = np.zeros((plan.S, scenario.L, M), dtype=complex)
    pairs = plan.pairs()
    for s, r in pairs:
        v[s, r] = array_response(scenario.ssa_azimuth[s, r],
                                 scenario.ssa_elevation[s, r], M) / np.sqrt(M)
    return CombinerSet(v=v, pairs=pairs)


# ---------------------------------------------------------------------------
# Symbols and transmit frames
# ---------------------------------------------------------------------------

def draw_symbols(config: SystemConfig,
                 rng: np.random.Generator) -> SymbolBlock:
    """Independent CN(0,1) symbols for every stream and channel use."""
    tau = int(config.tau_s)
    return SymbolBlock(s_comm=crandn(rng, (config.K, tau)),
                       r_sens=crandn(rng, (config.S, tau)))


def assemble_transmit(plan: AssignmentPlan, precoders: PrecoderSet,
                      power: PowerVector,
                      symbols: SymbolBlock) -> TransmitFrame:
    """x_l[m] = sum_k sqrt(p_kl) w_kl s_k[m] + sum_s sqrt(q_sl) w_sl r_s[m]."""
    amps = power.blocks()                       # (n_tx, K + S)
    sup = support_matrix(plan)
    if np.any(amps[~sup] != 0.0):
        raise ValueError("nonzero power on an unassigned (stream, AP) pair")
    # (n_tx, M, K + S): per-AP matrix of amplitude-weighted beams
    beams = np.concatenate([
        np.transpose(precoders.w_comm, (1, 2, 0)),
        np.transpose(precoders.w_sens, (1, 2, 0))], axis=2)
    weighted = beams * amps[:, None, :]
    x = np.einsum("lmj,jt->lmt", weighted, symbols.stacked())
    return TransmitFrame(x=x, tx_order=plan.tx_order)


def support_matrix(plan: AssignmentPlan) -> np.ndarray:
    """(n_tx, K + S) mask of assigned (AP, stream) pairs."""
    K, S = plan.K, plan.S
    sup = np.zeros((plan.n_tx, K + S), dtype=bool)
    for li, l in enumerate(plan.tx_order):
        for k in plan.ap_ues.get(l, []):
            sup[li, k] = True
        for s in plan.ap_targets.get(l, []):
            sup[li, K + s] = True
    return sup
