"""Self-contained oracle and property battery (also used by the tests).

``run_validation`` exercises the load-bearing identities with synthetic
instances: the two sensing-SINR evaluation paths must agree to floating
point, weights and detector statistics must satisfy their exact
invariants, and the constraint linearizations must be tangent and
globally under-estimating.
"""

from __future__ import annotations

import numpy as np

from .assignment import AssignmentPlan
from .beamforming import CombinerSet, PrecoderSet, SymbolBlock
from .channel import TwoWayChannelSet, crandn
from .power import PowerVector, linearize_ratio, psd_project
from .scenario import array_response, two_way_gain


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def random_sensing_instance(rng: np.random.Generator, n_tx: int, K: int,
                            S: int, M: int, tau: int):
    """Synthetic plan/channels/beams/symbols/power of the given sizes.

    TX-APs are ids 0..n_tx-1 and each SSA gets one dedicated RX-AP after
    them.  Every SSA is served by all TX-APs; UEs get random non-empty
    serving sets.
    """
    L = n_tx + S
    plan = AssignmentPlan(
        L=L, K=K, S=S,
        tx_aps=set(range(n_tx)),
        rx_aps=set(range(n_tx, n_tx + S)),
        idle_aps=set(),
        serving_sets=[[] for _ in range(K)],
        ssa_tx=[list(range(n_tx)) for _ in range(S)],
        ssa_rx=[[n_tx + s] for s in range(S)])
    for k in range(K):
        size = int(rng.integers(1, n_tx + 1))
        plan.serving_sets[k] = sorted(
            rng.choice(n_tx, size=size, replace=False).tolist())
    plan._rebuild_reverse_maps()

    G = np.zeros((S, L, L, M, M), dtype=complex)
    for s in range(S):
        for r in range(L):
            for l in range(L):
                az_r, el_r = rng.uniform(-np.pi, np.pi, 2)
                az_l, el_l = rng.uniform(-np.pi, np.pi, 2)
                beta = 10.0 ** rng.uniform(-3, 0)
                a_r = array_response(az_r, el_r, M)
                a_l = array_response(az_l, el_l, M)
                G[s, r, l] = np.sqrt(beta) * np.outer(a_r, a_l)
    two_way = TwoWayChannelSet(G=G)

    w_comm = np.zeros((K, n_tx, M), dtype=complex)
    for k in range(K):
        for li in range(n_tx):
            if k in plan.ap_ues.get(li, []):
                w_comm[k, li] = _unit(crandn(rng, M))
    w_sens = np.zeros((S, n_tx, M), dtype=complex)
    for s in range(S):
        for li in range(n_tx):
            w_sens[s, li] = _unit(crandn(rng, M))
    precoders = PrecoderSet(w_comm=w_comm, w_sens=w_sens,
                            norm_scale=np.ones((K, n_tx)),
                            tx_order=list(range(n_tx)))

    v = np.zeros((S, L, M), dtype=complex)
    for s, r in plan.pairs():
        v[s, r] = _unit(crandn(rng, M))
    combiners = CombinerSet(v=v, pairs=plan.pairs())

    symbols = SymbolBlock(s_comm=crandn(rng, (K, tau)),
                          r_sens=crandn(rng, (S, tau)))

    vals = rng.uniform(0.0, 1.0, size=n_tx * (K + S))
    from .power import support_mask
    vals[~support_mask(plan)] = 0.0
    power = PowerVector(values=vals, K=K, S=S, tx_order=list(range(n_tx)))
    return plan, two_way, precoders, combiners, symbols, power


def check_sensing_oracle(n_instances: int = 20, seed: int = 7,
                         rtol: float = 1e-10) -> float:
    """Max relative error between the quadratic-form and direct paths."""
    from .sinr import (build_sensing_vectors, sensing_quadratic_forms,
                       sensing_sinr, sensing_sinr_direct)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n_tx = int(rng.integers(1, 4))
        K = int(rng.integers(1, 4))
        S = int(rng.integers(1, 4))
        M = int(rng.integers(1, 5))
        tau = int(rng.integers(1, 6))
        plan, two_way, pre, comb, sym, power = random_sensing_instance(
            rng, n_tx, K, S, M, tau)
        sigma_n2 = float(10.0 ** rng.uniform(-2, 0))
        vectors = build_sensing_vectors(plan, two_way, pre, comb, sym)
        forms = sensing_quadratic_forms(vectors)
        quad = sensing_sinr(forms, power, tau, sigma_n2)
        for p, (s, r) in enumerate(forms.pairs):
            direct = sensing_sinr_direct(plan, two_way, pre, comb, sym,
                                         power, s, r, sigma_n2)
            rel = abs(quad[p] - direct) / max(abs(direct), 1e-300)
            worst = max(worst, rel)
    if worst > rtol:
        raise AssertionError(f"oracle mismatch: rel error {worst:.3e}")
    return worst


def check_linearization(seed: int = 11, n_points: int = 100) -> None:
    """Tangency at the point, global under-estimation elsewhere."""
    rng = np.random.default_rng(seed)
    n = 6
    raw = rng.standard_normal((n, n))
    quad = psd_project(raw @ raw.T)
    x_c = rng.uniform(0.1, 1.0, n)
    g_c = float(rng.uniform(0.5, 5.0))
    lin = linearize_ratio(quad, x_c, g_c)
    true_at_point = float(x_c @ quad @ x_c) / g_c
    if abs(lin.evaluate(x_c, g_c) - true_at_point) > 1e-12 * max(
            1.0, abs(true_at_point)):
        raise AssertionError("linearization is not tangent at the point")
    for _ in range(n_points):
        x = rng.uniform(0.0, 2.0, n)
        g = float(rng.uniform(0.05, 10.0))
        true = float(x @ quad @ x) / g
        if lin.evaluate(x, g) > true + 1e-9 * max(1.0, abs(true)):
            raise AssertionError("linearization over-estimates the ratio")


def check_detector_invariants(seed: int = 13) -> None:
    from .detection import fis_statistic, pis_statistic

    rng = np.random.default_rng(seed)
    tau, M, n_tx = 6, 3, 2
    g_stack = crandn(rng, (tau, M, n_tx))
    v = _unit(crandn(rng, M))
    y = crandn(rng, tau)
    t0 = fis_statistic(np.zeros(tau, dtype=complex), g_stack, v, None, 0.5)
    if abs(t0) > 1e-15:
        raise AssertionError("FIS statistic nonzero on zero input")
    t1 = fis_statistic(y, g_stack, v, None, 0.5)
    if t1 < 0:
        raise AssertionError("FIS statistic negative")
    t_rot = fis_statistic(np.exp(1j * 0.83) * y, g_stack, v, None, 0.5)
    if abs(t_rot - t1) > 1e-10 * max(1.0, abs(t1)):
        raise AssertionError("FIS statistic not phase invariant")

    # collapsed transmit prior reduces the partially-informed statistic
    # to the fully-informed one
    c_true = crandn(rng, (tau, n_tx))
    gain = np.sqrt(M)
    yb = gain * (c_true @ crandn(rng, n_tx)) + 0.1 * crandn(rng, tau)
    res = pis_statistic(yb, prior_var=np.full(n_tx, 1e-12), sigma_n2=0.5,
                        combine_gain=gain, prior_mean_c=c_true,
                        max_iters=10, tol=0.0)
    # direct FIS with the same regressors: a = sum g y, C = sum g g^H + s2 I
    g = gain * c_true.conj()
    a = g.T @ yb
    cmat = g.T @ g.conj() + 0.5 * np.eye(n_tx)
    t_fis = float(np.real(a.conj() @ np.linalg.solve(cmat, a)))
    if abs(res.statistic - t_fis) > 1e-6 * max(1.0, abs(t_fis)):
        raise AssertionError("PIS does not collapse to FIS")
    diffs = np.diff(res.objectives)
    if np.any(diffs < -1e-9 * np.maximum(1.0, np.abs(res.objectives[1:]))):
        raise AssertionError("PIS inner loop not monotone")


def check_weights(seed: int = 17) -> None:
    from .config import SystemConfig
    from .scenario import build_scenario
    from .assignment import build_plan
    from .beamforming import mrc_combiners
    from .detection import compute_weights

    cfg = SystemConfig(L=16, K=4, S=4, R=2, T=1)
    scenario = build_scenario(cfg, seed)
    plan = build_plan(scenario)
    comb = mrc_combiners(scenario, plan)
    w = compute_weights(scenario, plan, comb, 0.25)
    for s in range(cfg.S):
        total = sum(w[s, r] for r in plan.ssa_rx[s])
        if abs(total - 1.0) > 1e-12:
            raise AssertionError("weights do not sum to one")
    w0 = compute_weights(scenario, plan, comb, 0.0)
    for s in range(cfg.S):
        for r in plan.ssa_rx[s]:
            if abs(w0[s, r] - 1.0 / len(plan.ssa_rx[s])) > 0:
                raise AssertionError("zero exponent weights not uniform")


def check_scenario_basics() -> None:
    a = array_response(0.0, 0.0, 4)
    if not np.allclose(a, np.ones(4)):
        raise AssertionError("array response at boresight is not all ones")
    if abs(np.linalg.norm(array_response(0.7, -0.2, 8)) ** 2 - 8) > 1e-9:
        raise AssertionError("array response norm is not M")
    g1 = two_way_gain(100.0, 100.0, 1.0, 2e9)
    g2 = two_way_gain(200.0, 100.0, 1.0, 2e9)
    if abs(g1 / g2 - 4.0) > 1e-9:
        raise AssertionError("two-way gain violates the inverse-square law")


CHECKS = [
    ("sensing quadratic-form oracle", check_sensing_oracle),
    ("constraint linearization", check_linearization),
    ("detector invariants", check_detector_invariants),
    ("aggregation weights", check_weights),
    ("scenario basics", check_scenario_basics),
]


def run_validation(verbose: bool = True) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
            if verbose:
                print(f"PASS {name}")
        except Exception as exc:
            ok = False
            if verbose:
                print(f"FAIL {name}: {exc}")
    return ok
