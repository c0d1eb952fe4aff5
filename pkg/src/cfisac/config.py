"""System, detector, optimizer and experiment configuration.

All configuration is plain dataclasses, loadable from a single JSON file
(see README for the schema).  Physical constants the underlying papers on
urban-microcell modeling leave open (carrier, bandwidth, noise figure,
antenna heights, angular spread) are explicit fields with defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

SPEED_OF_LIGHT = 299_792_458.0


def noise_power_w(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Thermal noise power in watts: -174 dBm/Hz + 10 log10(B) + NF."""
    dbm = -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class SystemConfig:
    """Static network parameters: geometry, radio constants, budgets."""

    L: int = 25                 # APs (must be a perfect square for the grid)
    M: int = 4                  # antennas per AP (horizontal ULA, lambda/2)
    K: int = 8                  # single-antenna UEs
    S: int = 4                  # sensing service areas
    T: int = 1                  # TX-APs per SSA
    R: int = 1                  # RX-APs per SSA
    area_side: float = 500.0    # m
    P_tx: float = 1.0           # W, per-AP max transmit power
    p_ul: float = 0.2           # W, uplink pilot power
    sigma_rcs2: float = 10 ** (-5 / 10)   # m^2 (linear), RCS variance
    tau_s: float = 20           # channel uses per sensing block
    beta_th_over_noise: float = 80000.0   # linear, UE association threshold / sigma_n2
    carrier_freq: float = 2e9   # Hz
    rng_seed: int = 0

    # Declared defaults (not fixed by the system model, see README):
    bandwidth: float = 20e6
    noise_figure_db: float = 7.0
    sigma_n2: Optional[float] = None      # W; derived from bandwidth/NF if None
    ap_height: float = 10.0
    ue_height: float = 1.5
    ssa_height: float = 1.5
    azimuth_spread_deg: float = 15.0      # local-scattering Gaussian spread
    ssa_positions: Optional[Sequence[Sequence[float]]] = None  # [[x, y], ...]
    n_norm: int = 200           # draws for precoder normalization expectation
    n_mc_sinr: int = 500        # draws for the communication SINR model

    def __post_init__(self):
        if self.sigma_n2 is None:
            self.sigma_n2 = noise_power_w(self.bandwidth, self.noise_figure_db)
        self.tau_s = int(self.tau_s)
        self.validate()

    def validate(self):
        if min(self.L, self.M, self.K, self.S, self.T, self.R) < 1:
            raise ValueError("counts L, M, K, S, T, R must be positive")
        if self.L < 2 * self.S:
            raise ValueError(
                f"need L >= 2*S so each SSA gets distinct first RX/TX APs "
                f"(L={self.L}, S={self.S})")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        for name in ("P_tx", "p_ul", "sigma_n2", "sigma_rcs2",
                     "beta_th_over_noise", "carrier_freq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_s < 1:
            raise ValueError("tau_s must be >= 1")

    @property
    def beta_th(self) -> float:
        """UE association threshold on the total (trace) channel gain."""
        return self.beta_th_over_noise * self.sigma_n2

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    def resolved_ssa_positions(self):
        """SSA (x, y) coordinates: explicit if given, else quarter-points
        of the area for S <= 4 and a centered ring beyond that."""
        if self.ssa_positions is not None:
            pos = [tuple(map(float, p)) for p in self.ssa_positions]
            if len(pos) != self.S:
                raise ValueError("ssa_positions length must equal S")
            return pos
        a = self.area_side
        quarters = [(a / 4, a / 4), (a / 4, 3 * a / 4),
                    (3 * a / 4, a / 4), (3 * a / 4, 3 * a / 4)]
        if self.S <= 4:
            return quarters[: self.S]
        ring = []
        for i in range(self.S):
            ang = 2 * math.pi * i / self.S
            ring.append((a / 2 + a / 4 * math.cos(ang),
                         a / 2 + a / 4 * math.sin(ang)))
        return ring


@dataclass
class DetectorConfig:
    """Detector mode and Monte Carlo budgets."""

    mode: str = "fis"           # "fis" | "pis"
    v_exponent: float = 0.25    # weighting exponent; 0 disables weighting
    p_fa: float = 0.03          # target false-alarm probability
    n_calib: int = 10_000       # null-hypothesis trials for calibration
    n_trials: int = 2_000       # detection trials
    pis_max_iters: int = 10
    pis_tol: float = 1e-4

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in ("fis", "pis"):
            raise ValueError("mode must be 'fis' or 'pis'")
        if not 0 < self.p_fa < 1:
            raise ValueError("p_fa must lie in (0, 1)")
        if self.v_exponent < 0:
            raise ValueError("v_exponent must be >= 0")


@dataclass
class CcpConfig:
    """Convex-concave power allocation controls."""

    omega0: float = 1.0         # sensing SINR weight
    omega1: float = 1.0         # communication SINR weight
    lambda_penalty: Optional[float] = None   # slack penalty; 100*max(w) if None
    eps1: float = 1e-3          # |delta gamma_s|
    eps2: float = 1e-3          # |delta gamma_c|
    eps3: float = 0.1           # ||delta rho||
    eps4: float = 1e-6          # total slack
    c_max: int = 150
    subproblem_tol: float = 1e-8
    max_retries: int = 3

    def __post_init__(self):
        if self.omega0 < 0 or self.omega1 < 0 or self.omega0 + self.omega1 <= 0:
            raise ValueError("objective weights must be nonnegative, not both zero")
        if self.lambda_penalty is None:
            self.lambda_penalty = 100.0 * max(self.omega0, self.omega1, 1.0)
        for name in ("eps1", "eps2", "eps3", "eps4", "subproblem_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


SWEEPABLE = ("sigma_rcs2", "omega0", "v_exponent", "R", "T", "S")


@dataclass
class ExperimentSpec:
    """One experiment: a parameter sweep averaged over UE drops."""

    base: SystemConfig = field(default_factory=SystemConfig)
    sweep_param: str = "sigma_rcs2"
    sweep_values: Sequence[float] = (10 ** (-15 / 10), 10 ** (-10 / 10),
                                     10 ** (-5 / 10), 1.0)
    n_setups: int = 20
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    ccp: CcpConfig = field(default_factory=CcpConfig)
    master_seed: int = 1
    output_dir: str = "results"
    name: str = "experiment"

    def __post_init__(self):
        if self.sweep_param not in SWEEPABLE:
            raise ValueError(
                f"sweep_param must be one of {SWEEPABLE}, got {self.sweep_param!r}")
        if self.n_setups < 1:
            raise ValueError("n_setups must be >= 1")
        if len(self.sweep_values) < 1:
            raise ValueError("sweep_values must be non-empty")

    def config_for(self, value) -> tuple[SystemConfig, CcpConfig, DetectorConfig]:
        """Apply one sweep value, returning fresh config objects."""
        sys_d = asdict(self.base)
        ccp_d = asdict(self.ccp)
        det_d = asdict(self.detector)
        if self.sweep_param in ("R", "T", "S"):
            sys_d[self.sweep_param] = int(value)
            if self.sweep_param == "S":
                sys_d["ssa_positions"] = None
        elif self.sweep_param == "sigma_rcs2":
            sys_d["sigma_rcs2"] = float(value)
        elif self.sweep_param == "omega0":
            ccp_d["omega0"] = float(value)
            ccp_d["lambda_penalty"] = None
        elif self.sweep_param == "v_exponent":
            det_d["v_exponent"] = float(value)
        return SystemConfig(**sys_d), CcpConfig(**ccp_d), DetectorConfig(**det_d)

    def to_dict(self) -> dict:
        return {
            "base": asdict(self.base),
            "sweep_param": self.sweep_param,
            "sweep_values": list(self.sweep_values),
            "n_setups": self.n_setups,
            "detector": asdict(self.detector),
            "ccp": asdict(self.ccp),
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "name": self.name,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_spec(path: str) -> ExperimentSpec:
    """Load an ExperimentSpec from a JSON file."""
    with open(path) as f:
        raw = json.load(f)
    return spec_from_dict(raw)


def spec_from_dict(raw: dict) -> ExperimentSpec:
    base = SystemConfig(**raw.get("base", {}))
    det = DetectorConfig(**raw.get("detector", {}))
    ccp = CcpConfig(**raw.get("ccp", {}))
    kwargs = {k: raw[k] for k in
              ("sweep_param", "sweep_values", "n_setups", "master_seed",
               "output_dir", "name") if k in raw}
    return ExperimentSpec(base=base, detector=det, ccp=ccp, **kwargs)
