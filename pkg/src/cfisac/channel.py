"""Small-scale channel realizations and pilot-based estimation.

Communication channels are spatially correlated Rician: a LOS component
with an unknown uniform phase plus a correlated Gaussian NLOS part.
Estimation is phase-unaware LMMSE from orthogonal pilots (tau_p = K, no
pilot contamination): the LOS term is folded into a zero-mean prior with
correlation h_bar h_bar^H + R_nlos.

Sensing channels are deterministic rank-one two-way matrices; the target
reflectivity is a Swerling-I complex Gaussian scalar per
(SSA, RX-AP, TX-AP) path, constant within a sensing block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, array_response


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / np.sqrt(2.0)


@dataclass
class CommChannelSet:
    """One realization of all UE channels: h[k, l] in C^M."""
    h: np.ndarray      # (K, L', M)
    psi: np.ndarray    # (K, L') LOS phases
    aps: list[int]     # global AP ids of the second axis


@dataclass
class ChannelEstimateSet:
    """LMMSE estimates and their (fixed) error correlation matrices."""
    h_hat: np.ndarray     # (K, L', M)
    err_corr: np.ndarray  # (K, L', M, M)
    aps: list[int]


@dataclass
class TwoWayChannelSet:
    """Rank-one TX -> SSA -> RX matrices, indexed [s, rx_ap, tx_ap]."""
    G: np.ndarray   # (S, L, L, M, M)


@dataclass
class RcsRealization:
    """Swerling-I reflectivities alpha[s, rx_ap, tx_ap] ~ CN(0, 1)."""
    alpha: np.ndarray          # (S, L, L)
    rcs_corr: np.ndarray | None = None   # per-(s, r) correlation; None = identity


class ChannelModel:
    """Per-link sampling and LMMSE machinery for a subset of APs.

    Precomputes, per (UE, AP): the factor of the NLOS correlation used for
    sampling, the LMMSE filter R (R + c I)^{-1} with c = sigma_n2 /
    (p_ul * tau_p), and the error correlation Z = R - filter @ R.
    """

    def __init__(self, scenario: Scenario, aps: list[int] | None = None):
        cfg = scenario.config
        self.scenario = scenario
        self.aps = list(range(cfg.L)) if aps is None else list(aps)
        self.K, self.M = cfg.K, cfg.M
        self.tau_p = cfg.K   # orthogonal pilots, one per UE
        self.noise_scale = cfg.sigma_n2 / (cfg.p_ul * self.tau_p)

        idx = np.asarray(self.aps)
        self.los_mean = scenario.los_mean[:, idx]          # (K, A, M)
        corr = scenario.nlos_corr[:, idx]                  # (K, A, M, M)

        w, v = np.linalg.eigh(corr)
        w = np.clip(w, 0.0, None)
        self.corr_factor = v * np.sqrt(w)[..., None, :]    # F with F F^H = corr

        hb = self.los_mean
        prior = np.einsum("kam,kap->kamp", hb, hb.conj()) + corr
        reg = prior + self.noise_scale * np.eye(self.M)
        self.filt = np.einsum("kamp,kapq->kamq", prior, np.linalg.inv(reg))
        z = prior - np.einsum("kamp,kapq->kamq", self.filt, prior)
        self.err_corr = 0.5 * (z + np.conj(np.swapaxes(z, -1, -2)))
        self.prior = prior

    # -- sampling -----------------------------------------------------------

    def draw_true(self, rng: np.random.Generator, n: int = 1):
        """n independent channel realizations: (n, K, A, M) plus phases."""
        shape = (n, self.K, len(self.aps))
        psi = rng.uniform(0.0, 2.0 * np.pi, size=shape)
        z = crandn(rng, shape + (self.M,))
        h_nlos = np.einsum("kamp,nkap->nkam", self.corr_factor, z)
        h = np.exp(1j * psi)[..., None] * self.los_mean[None] + h_nlos
        return h, psi

    def despread_pilots(self, h: np.ndarray, rng: np.random.Generator):
        """Pilot observation normalized to the channel's units:
        y = h + w with w ~ CN(0, sigma_n2 / (p_ul tau_p) I)."""
        return h + np.sqrt(self.noise_scale) * crandn(rng, h.shape)

    def estimate(self, y_proc: np.ndarray) -> np.ndarray:
        return np.einsum("kamq,...kaq->...kam", self.filt, y_proc)

    def draw_estimates(self, rng: np.random.Generator, n: int = 1):
        """Joint draw of true channels and their estimates."""
        h, _ = self.draw_true(rng, n)
        y = self.despread_pilots(h, rng)
        return h, self.estimate(y)


# ---------------------------------------------------------------------------
# Operations in terms of the scenario
# ---------------------------------------------------------------------------

def draw_comm_channels(scenario: Scenario,
                       rng: np.random.Generator) -> CommChannelSet:
    """One Rician realization for every (UE, AP) link."""
    model = ChannelModel(scenario)
    h, psi = model.draw_true(rng, n=1)
    return CommChannelSet(h=h[0], psi=psi[0], aps=model.aps)


def estimate_channels(channels: CommChannelSet, scenario: Scenario,
                      rng: np.random.Generator) -> ChannelEstimateSet:
    """Phase-unaware LMMSE estimates from one pilot transmission."""
    model = ChannelModel(scenario, aps=channels.aps)
    y = model.despread_pilots(channels.h, rng)
    return ChannelEstimateSet(h_hat=model.estimate(y),
                              err_corr=model.err_corr, aps=channels.aps)


def build_two_way_channels(scenario: Scenario) -> TwoWayChannelSet:
    """Deterministic G[s, r, l] = sqrt(beta_srl) a_rx(s,r) a_tx(s,l)^T."""
    S, L, M = scenario.S, scenario.L, scenario.M
    steer = np.zeros((S, L, M), dtype=complex)
    for s in range(S):
        for l in range(L):
            steer[s, l] = array_response(scenario.ssa_azimuth[s, l],
                                         scenario.ssa_elevation[s, l], M)
    amp = np.sqrt(scenario.two_way_gains)                  # (S, L, L)
    G = amp[..., None, None] * np.einsum("srm,slp->srlmp", steer, steer)
    return TwoWayChannelSet(G=G)


def draw_rcs(scenario: Scenario, rng: np.random.Generator) -> RcsRealization:
    """Independent CN(0,1) reflectivities for every (s, rx, tx) path."""
    S, L = scenario.S, scenario.L
    return RcsRealization(alpha=crandn(rng, (S, L, L)))
