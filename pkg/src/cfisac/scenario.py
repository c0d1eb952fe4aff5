"""Simulation world: AP grid, UE drops, sensing areas, large-scale statistics.

The scenario is immutable once built and fully determined by
(SystemConfig, ue_drop_seed): AP positions on a uniform grid, UEs dropped
uniformly at random, SSAs at fixed coordinates, and every large-scale link
quantity (path loss, LOS state, Rician factor, spatial correlation,
one-way sensing gains, radar two-way gains) derived from positions.

Path loss, LOS probability and Rician factors follow the 3GPP urban
microcell (UMi) model; see README for the constants.  Spatial correlation
of the NLOS component uses a Gaussian local-scattering model around the
nominal direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT, SystemConfig


# ---------------------------------------------------------------------------
# Elementary responses and gains
# ---------------------------------------------------------------------------

def array_response(azimuth: float, elevation: float, M: int) -> np.ndarray:
    """ULA response with lambda/2 spacing: entry m is
    exp(j*m*pi*sin(azimuth)*cos(elevation)); squared norm equals M."""
    m = np.arange(M)
    return np.exp(1j * np.pi * m * np.sin(azimuth) * np.cos(elevation))


def two_way_gain(d_tx: float, d_rx: float, sigma_rcs2: float,
                 carrier_freq: float) -> float:
    """Radar-equation gain of a TX -> target -> RX path:
    lambda^2 * sigma_rcs2 / ((4 pi)^3 * d_tx^2 * d_rx^2)."""
    if d_tx <= 0 or d_rx <= 0:
        raise ValueError("two_way_gain requires positive distances")
    lam = SPEED_OF_LIGHT / carrier_freq
    return lam ** 2 * sigma_rcs2 / ((4 * np.pi) ** 3 * d_tx ** 2 * d_rx ** 2)


def free_space_gain(d: float, carrier_freq: float) -> float:
    """One-way free-space gain (lambda / (4 pi d))^2."""
    if d <= 0:
        raise ValueError("free_space_gain requires positive distance")
    lam = SPEED_OF_LIGHT / carrier_freq
    return (lam / (4 * np.pi * d)) ** 2


# ---------------------------------------------------------------------------
# 3GPP UMi large-scale model
# ---------------------------------------------------------------------------

_MIN_DIST = 10.0  # m; UMi formulas are defined from 10 m, clamp below


def umi_los_probability(d_2d: float) -> float:
    """LOS probability: min(18/d, 1)(1 - e^{-d/36}) + e^{-d/36}."""
    d = max(float(d_2d), 1e-9)
    e = math.exp(-d / 36.0)
    return min(18.0 / d, 1.0) * (1.0 - e) + e


def umi_pathloss_los_db(d_3d: float, fc_hz: float,
                        h_bs: float = 10.0, h_ut: float = 1.5) -> float:
    """UMi LOS path loss with breakpoint at 4 h'_bs h'_ut fc / c."""
    fc_ghz = fc_hz / 1e9
    d = max(float(d_3d), _MIN_DIST)
    hb, hu = h_bs - 1.0, h_ut - 1.0
    d_bp = 4.0 * hb * hu * fc_hz / SPEED_OF_LIGHT
    if d < d_bp:
        return 22.0 * math.log10(d) + 28.0 + 20.0 * math.log10(fc_ghz)
    return (40.0 * math.log10(d) + 7.8 - 18.0 * math.log10(hb)
            - 18.0 * math.log10(hu) + 2.0 * math.log10(fc_ghz))


def umi_pathloss_nlos_db(d_3d: float, fc_hz: float) -> float:
    """UMi NLOS path loss: 36.7 log10(d) + 22.7 + 26 log10(fc_GHz)."""
    fc_ghz = fc_hz / 1e9
    d = max(float(d_3d), _MIN_DIST)
    return 36.7 * math.log10(d) + 22.7 + 26.0 * math.log10(fc_ghz)


def umi_rician_k(d_2d: float) -> float:
    """Rician K-factor (linear) for LOS links: K_dB = 13 - 0.03 d."""
    return 10.0 ** ((13.0 - 0.03 * float(d_2d)) / 10.0)


def local_scattering_corr(azimuth: float, elevation: float, M: int,
                          spread_rad: float) -> np.ndarray:
    """Normalized spatial correlation (unit diagonal, trace M) for a ULA
    under Gaussian azimuth scattering around the nominal direction.

    Uses the closed-form small-spread approximation; the result is
    projected onto the PSD cone and rescaled to keep trace exactly M.
    """
    m = np.arange(M)
    diff = m[:, None] - m[None, :]
    omega = np.sin(azimuth) * np.cos(elevation)
    slope = np.cos(azimuth) * np.cos(elevation)
    corr = (np.exp(1j * np.pi * diff * omega)
            * np.exp(-0.5 * (spread_rad * np.pi * diff * slope) ** 2))
    corr = 0.5 * (corr + corr.conj().T)
    w, v = np.linalg.eigh(corr)
    w = np.clip(w, 0.0, None)
    corr = (v * w) @ v.conj().T
    tr = np.real(np.trace(corr))
    if tr > 0:
        corr *= M / tr
    return corr


# ---------------------------------------------------------------------------
# Scenario container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Immutable world state. All arrays are indexed by global AP id.

    Communication links (K, L): ``beta_total`` is the trace-based total
    gain used for UE association, ``los_mean`` the LOS component
    (including path loss), ``nlos_corr`` the NLOS correlation matrix.
    Sensing links (S, L): one-way free-space gain and AP->SSA angles,
    shared by the transmit and receive roles of an AP.  ``two_way_gains``
    (S, L, L) is indexed [s, rx_ap, tx_ap].
    """

    config: SystemConfig
    ue_drop_seed: int
    ap_positions: np.ndarray     # (L, 3)
    ue_positions: np.ndarray     # (K, 3)
    ssa_positions: np.ndarray    # (S, 3)
    # communication links
    beta_total: np.ndarray       # (K, L) linear, = trace(R) incl. LOS part
    rician_k: np.ndarray         # (K, L) linear; 0 for NLOS links
    los_flag: np.ndarray         # (K, L) bool
    los_mean: np.ndarray         # (K, L, M) complex
    nlos_corr: np.ndarray        # (K, L, M, M) complex Hermitian PSD
    # sensing links
    ssa_gain: np.ndarray         # (S, L) one-way free-space gain
    ssa_azimuth: np.ndarray      # (S, L) AP -> SSA azimuth
    ssa_elevation: np.ndarray    # (S, L) AP -> SSA elevation
    two_way_gains: np.ndarray    # (S, L, L) [s, rx, tx]

    @property
    def L(self) -> int:
        return self.config.L

    @property
    def M(self) -> int:
        return self.config.M

    @property
    def K(self) -> int:
        return self.config.K

    @property
    def S(self) -> int:
        return self.config.S

    def prior_corr(self, k: int, l: int) -> np.ndarray:
        """Phase-unaware channel correlation h_bar h_bar^H + R_nlos."""
        hb = self.los_mean[k, l]
        return np.outer(hb, hb.conj()) + self.nlos_corr[k, l]

    def steering_to_ssa(self, s: int, l: int) -> np.ndarray:
        return array_response(self.ssa_azimuth[s, l],
                              self.ssa_elevation[s, l], self.M)


def _angles(src: np.ndarray, dst: np.ndarray) -> tuple[float, float]:
    """Azimuth/elevation of the ray src -> dst."""
    d = dst - src
    az = math.atan2(d[1], d[0])
    el = math.atan2(d[2], math.hypot(d[0], d[1]))
    return az, el


def ap_grid(L: int, area_side: float, height: float) -> np.ndarray:
    """Uniform sqrt(L) x sqrt(L) grid centered in the square area."""
    n = round(math.sqrt(L))
    if n * n != L:
        raise ValueError(f"AP grid layout requires a square count, got L={L}")
    spacing = area_side / n
    coords = (np.arange(n) + 0.5) * spacing
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    pos = np.column_stack([xx.ravel(), yy.ravel(),
                           np.full(L, float(height))])
    return pos


def build_scenario(config: SystemConfig, ue_drop_seed: int) -> Scenario:
    """Construct the world deterministically from (config, seed).

    The drop seed governs UE positions and the per-link LOS coin flips;
    everything else is a pure function of the geometry.
    """
    config.validate()
    L, M, K, S = config.L, config.M, config.K, config.S
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=int(ue_drop_seed), spawn_key=(0,)))

    aps = ap_grid(L, config.area_side, config.ap_height)
    ue_xy = rng.uniform(0.0, config.area_side, size=(K, 2))
    ues = np.column_stack([ue_xy, np.full(K, config.ue_height)])
    ssa_xy = np.asarray(config.resolved_ssa_positions(), dtype=float)
    ssas = np.column_stack([ssa_xy, np.full(S, config.ssa_height)])

    los_draws = rng.uniform(size=(K, L))

    spread = math.radians(config.azimuth_spread_deg)
    fc = config.carrier_freq

    beta_total = np.zeros((K, L))
    rician = np.zeros((K, L))
    los_flag = np.zeros((K, L), dtype=bool)
    los_mean = np.zeros((K, L, M), dtype=complex)
    nlos_corr = np.zeros((K, L, M, M), dtype=complex)

    for k in range(K):
        for l in range(L):
            d3 = float(np.linalg.norm(ues[k] - aps[l]))
            d2 = float(np.hypot(*(ues[k, :2] - aps[l, :2])))
            is_los = los_draws[k, l] < umi_los_probability(d2)
            if is_los:
                pl_db = umi_pathloss_los_db(d3, fc, config.ap_height,
                                            config.ue_height)
                kf = umi_rician_k(d2)
            else:
                pl_db = umi_pathloss_nlos_db(d3, fc)
                kf = 0.0
            beta_ant = 10.0 ** (-pl_db / 10.0)     # per-antenna gain
            az, el = _angles(aps[l], ues[k])
            a = array_response(az, el, M)
            los_power = beta_ant * kf / (kf + 1.0)
            nlos_power = beta_ant / (kf + 1.0)
            los_mean[k, l] = math.sqrt(los_power) * a
            corr = local_scattering_corr(az, el, M, spread)
            nlos_corr[k, l] = nlos_power * corr
            beta_total[k, l] = beta_ant * M
            rician[k, l] = kf
            los_flag[k, l] = is_los

    ssa_gain = np.zeros((S, L))
    ssa_az = np.zeros((S, L))
    ssa_el = np.zeros((S, L))
    dist_sl = np.zeros((S, L))
    for s in range(S):
        for l in range(L):
            d = float(np.linalg.norm(ssas[s] - aps[l]))
            dist_sl[s, l] = d
            ssa_gain[s, l] = free_space_gain(d, fc)
            ssa_az[s, l], ssa_el[s, l] = _angles(aps[l], ssas[s])

    two_way = np.zeros((S, L, L))
    for s in range(S):
        d = dist_sl[s]
        two_way[s] = (config.wavelength ** 2 * config.sigma_rcs2
                      / ((4 * np.pi) ** 3
                         * np.outer(d ** 2, d ** 2)))

    for arr in (aps, ues, ssas, beta_total, rician, los_flag, los_mean,
                nlos_corr, ssa_gain, ssa_az, ssa_el, two_way):
        arr.setflags(write=False)

    return Scenario(
        config=config, ue_drop_seed=int(ue_drop_seed),
        ap_positions=aps, ue_positions=ues, ssa_positions=ssas,
        beta_total=beta_total, rician_k=rician, los_flag=los_flag,
        los_mean=los_mean, nlos_corr=nlos_corr,
        ssa_gain=ssa_gain, ssa_azimuth=ssa_az, ssa_elevation=ssa_el,
        two_way_gains=two_way,
    )
