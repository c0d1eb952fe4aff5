"""Communication and sensing SINR models.

The communication SINR is a rational function of the amplitude vector
whose coefficient vector/matrices are expectations over channel and
estimate realizations, estimated here by Monte Carlo.  The sensing SINR
for one (SSA, RX-AP) pair and one symbol block is an exact ratio of
quadratic forms in the amplitudes; ``sensing_sinr_direct`` evaluates the
defining sums literally and serves as the oracle for the block-diagonal
matrix path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentPlan
from .beamforming import CombinerSet, PrecoderSet, SymbolBlock, _membership, \
    _raw_precoders
from .channel import ChannelModel, TwoWayChannelSet
from .power import PowerVector, psd_project
from .scenario import Scenario


# ---------------------------------------------------------------------------
# Communication SINR model
# ---------------------------------------------------------------------------

@dataclass
class CommSinrModel:
    """Expectation terms of the per-UE downlink SINR.

    SINR_k = (a[k] . rho_k)^2 /
             (sum_j rho_j^T B[k,j] rho_j + sum_s q_s^T C[k,s] q_s + sigma_n2)
    """

    a: np.ndarray            # (K, n_tx) real, nonnegative
    B: np.ndarray            # (K, K, n_tx, n_tx) real symmetric PSD
    C: np.ndarray            # (K, S, n_tx, n_tx) real symmetric PSD
    sigma_n2: float
    tx_order: list[int]
    n_mc: int

    @property
    def K(self) -> int:
        return self.a.shape[0]

    @property
    def S(self) -> int:
        return self.C.shape[1]

    def save(self, path: str):
        np.savez_compressed(path, a=self.a, B=self.B, C=self.C,
                            sigma_n2=self.sigma_n2,
                            tx_order=np.asarray(self.tx_order),
                            n_mc=self.n_mc)

    @classmethod
    def load(cls, path: str) -> "CommSinrModel":
        z = np.load(path)
        return cls(a=z["a"], B=z["B"], C=z["C"],
                   sigma_n2=float(z["sigma_n2"]),
                   tx_order=[int(x) for x in z["tx_order"]],
                   n_mc=int(z["n_mc"]))


def estimate_comm_sinr_terms(scenario: Scenario, plan: AssignmentPlan,
                             n_mc: int, rng: np.random.Generator,
                             norm_scale: np.ndarray,
                             w_sens: np.ndarray) -> CommSinrModel:
    """Sample means of the SINR expectation terms over n_mc draws.

    ``norm_scale`` is the frozen precoder normalization; ``w_sens`` the
    deterministic sensing beams (S, n_tx, M).  Diagonal signal entries are
    forced real nonnegative; all matrices are symmetrized and projected to
    the PSD cone (only B[k,k], which subtracts a rank-one term, can be
    meaningfully indefinite under sampling noise).
    """
    cfg = scenario.config
    model = ChannelModel(scenario, aps=plan.tx_order)
    member = _membership(plan)
    h, h_hat = model.draw_estimates(rng, n=n_mc)
    w = _raw_precoders(h_hat, model.err_corr, member, cfg.p_ul, cfg.sigma_n2)
    w = w / norm_scale[None, :, :, None]

    # y[n, k, j, l] = h_{k,l}^H w_{j,l}
    y = np.einsum("nklm,njlm->nkjl", h.conj(), w)
    a = np.maximum(np.real(np.mean(y[:, np.arange(plan.K),
                                     np.arange(plan.K)], axis=0)), 0.0)
    bmat = np.einsum("nkjl,nkjp->kjlp", y, y.conj()) / n_mc

    u = np.einsum("nklm,slm->nksl", h.conj(), w_sens)
    cmat = np.einsum("nksl,nksp->kslp", u, u.conj()) / n_mc

    K, S = plan.K, plan.S
    B = np.real(bmat)
    C = np.real(cmat)
    for k in range(K):
        B[k, k] -= np.outer(a[k], a[k])
        for j in range(K):
            B[k, j] = psd_project(B[k, j])
        for s in range(S):
            C[k, s] = psd_project(C[k, s])
    return CommSinrModel(a=a, B=B, C=C, sigma_n2=cfg.sigma_n2,
                         tx_order=plan.tx_order, n_mc=n_mc)


def comm_sinr(model: CommSinrModel, power: PowerVector) -> np.ndarray:
    """Per-UE SINR (linear) at the given amplitude vector."""
    K, S = model.K, model.S
    out = np.zeros(K)
    for k in range(K):
        sig = float(model.a[k] @ power.comm_slice(k)) ** 2
        den = model.sigma_n2
        for j in range(K):
            rj = power.comm_slice(j)
            den += float(rj @ model.B[k, j] @ rj)
        for s in range(S):
            qs = power.sens_slice(s)
            den += float(qs @ model.C[k, s] @ qs)
        out[k] = sig / den
    return out


# ---------------------------------------------------------------------------
# Sensing SINR: vector families, quadratic forms, and the direct oracle
# ---------------------------------------------------------------------------

@dataclass
class SensingVectors:
    """Per-(SSA, RX-AP) signal and interference response vectors.

    For pair p = (s, r): ``d[p][l, m, k]`` and ``e[p][l, m, t]`` are the
    responses of UE stream k / sensing stream t transmitted by TX-AP l and
    reflected off SSA s; ``f[p][i, l, m, k]`` and ``g[p][i, l, m, t]`` the
    responses reflected off the i-th other SSA.
    """

    pairs: list[tuple[int, int]]
    d: np.ndarray   # (n_pairs, n_tx, tau, K)
    e: np.ndarray   # (n_pairs, n_tx, tau, S)
    f: np.ndarray   # (n_pairs, S-1, n_tx, tau, K)
    g: np.ndarray   # (n_pairs, S-1, n_tx, tau, S)
    tau_s: int


@dataclass
class SensingQuadraticForms:
    """Block-diagonal quadratic forms of the sensing SINR.

    SINR_{s,r}(rho) = rho^T A rho / (rho^T B rho + tau_s sigma_n2) where A
    and B are block diagonal with one (K+S) x (K+S) block per TX-AP.
    """

    pairs: list[tuple[int, int]]
    A_blocks: np.ndarray    # (n_pairs, n_tx, K+S, K+S)
    Bm_blocks: np.ndarray   # (n_pairs, n_tx, K+S, K+S)
    tau_s: int

    def full(self, which: str, p: int) -> np.ndarray:
        blocks = self.A_blocks if which == "A" else self.Bm_blocks
        n_tx, bs = blocks.shape[1], blocks.shape[2]
        out = np.zeros((n_tx * bs, n_tx * bs))
        for li in range(n_tx):
            sl = slice(li * bs, (li + 1) * bs)
            out[sl, sl] = blocks[p, li]
        return out

    def save(self, path: str):
        np.savez_compressed(
            path, pairs=np.asarray(self.pairs, dtype=int).reshape(-1, 2),
            A_blocks=self.A_blocks, Bm_blocks=self.Bm_blocks,
            tau_s=self.tau_s)

    @classmethod
    def load(cls, path: str) -> "SensingQuadraticForms":
        z = np.load(path)
        return cls(pairs=[tuple(map(int, row)) for row in z["pairs"]],
                   A_blocks=z["A_blocks"], Bm_blocks=z["Bm_blocks"],
                   tau_s=int(z["tau_s"]))


def build_sensing_vectors(plan: AssignmentPlan, two_way: TwoWayChannelSet,
                          precoders: PrecoderSet, combiners: CombinerSet,
                          symbols: SymbolBlock) -> SensingVectors:
    """Evaluate the response vectors for every pair and channel use."""
    K, S = plan.K, plan.S
    tx = plan.tx_order
    n_tx = len(tx)
    tau = symbols.tau_s
    pairs = plan.pairs()
    sc = symbols.s_comm.T    # (tau, K)
    sr = symbols.r_sens.T    # (tau, S)

    d = np.zeros((len(pairs), n_tx, tau, K), dtype=complex)
    e = np.zeros((len(pairs), n_tx, tau, S), dtype=complex)
    f = np.zeros((len(pairs), S - 1, n_tx, tau, K), dtype=complex)
    g = np.zeros((len(pairs), S - 1, n_tx, tau, S), dtype=complex)

    for p, (s, r) in enumerate(pairs):
        v = combiners.get(s, r)
        gsel = two_way.G[:, r][:, tx]             # (S, n_tx, M, M)
        rows = np.einsum("m,tlmp->tlp", v.conj(), gsel)
        rw = np.einsum("tlp,klp->tlk", rows, precoders.w_comm)
        ro = np.einsum("tlp,ulp->tlu", rows, precoders.w_sens)
        d[p] = rw[s][:, None, :] * sc[None, :, :]
        e[p] = ro[s][:, None, :] * sr[None, :, :]
        others = [t for t in range(S) if t != s]
        for i, t in enumerate(others):
            f[p, i] = rw[t][:, None, :] * sc[None, :, :]
            g[p, i] = ro[t][:, None, :] * sr[None, :, :]
    return SensingVectors(pairs=pairs, d=d, e=e, f=f, g=g, tau_s=tau)


def sensing_quadratic_forms(vectors: SensingVectors) -> SensingQuadraticForms:
    """Sum the real parts of the stacked outer products over channel uses
    (and over interfering SSAs for the interference matrix)."""
    z = np.concatenate([vectors.d, vectors.e], axis=-1)   # (P, n_tx, tau, K+S)
    zi = np.concatenate([vectors.f, vectors.g], axis=-1)  # (P, S-1, n_tx, tau, .)
    A = np.real(np.einsum("pltj,pltq->pljq", z, z.conj()))
    Bm = np.real(np.einsum("pultj,pultq->pljq", zi, zi.conj()))
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    Bm = 0.5 * (Bm + np.swapaxes(Bm, -1, -2))
    return SensingQuadraticForms(pairs=vectors.pairs, A_blocks=A,
                                 Bm_blocks=Bm, tau_s=vectors.tau_s)


def sensing_sinr(forms: SensingQuadraticForms, power: PowerVector,
                 tau_s: float, sigma_n2: float) -> np.ndarray:
    """SINR per pair from the quadratic-form representation."""
    xb = power.blocks()
    num = np.einsum("lb,plbc,lc->p", xb, forms.A_blocks, xb)
    den = np.einsum("lb,plbc,lc->p", xb, forms.Bm_blocks, xb)
    return num / (den + tau_s * sigma_n2)


def sensing_sinr_direct(plan: AssignmentPlan, two_way: TwoWayChannelSet,
                        precoders: PrecoderSet, combiners: CombinerSet,
                        symbols: SymbolBlock, power: PowerVector,
                        s: int, r: int, sigma_n2: float) -> float:
    """Brute-force oracle: evaluate the defining sums of the sensing SINR
    term by term with explicit matrix products."""
    K, S = plan.K, plan.S
    tau = symbols.tau_s
    tx = plan.tx_order
    v = combiners.get(s, r)
    amps = power.blocks()

    def response(t: int, m: int, li: int) -> complex:
        l = tx[li]
        row = v.conj() @ two_way.G[t, r, l]
        acc = 0.0 + 0.0j
        for k in range(K):
            acc += (row @ precoders.w_comm[k, li]) * symbols.s_comm[k, m] \
                * amps[li, k]
        for u in range(S):
            acc += (row @ precoders.w_sens[u, li]) * symbols.r_sens[u, m] \
                * amps[li, K + u]
        return acc

    num = 0.0
    for m in range(tau):
        for li in range(len(tx)):
            num += abs(response(s, m, li)) ** 2
    den = 0.0
    for t in range(S):
        if t == s:
            continue
        for m in range(tau):
            for li in range(len(tx)):
                den += abs(response(t, m, li)) ** 2
    return num / (den + tau * sigma_n2)
