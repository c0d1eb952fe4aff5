"""Joint communication/sensing power allocation via convex-concave programming.

The optimization variable is the stacked amplitude vector rho of length
(K + S) * L_tx with one block per TX-AP: [sqrt(p_{1,l}) .. sqrt(p_{K,l}),
sqrt(q_{1,l}) .. sqrt(q_{S,l})].  Both SINR constraints have a convex
quadratic right-hand side and a (quadratic over linear) concave left-hand
side, which is linearized at the current iterate; slack variables keep
every subproblem feasible and are driven to zero by a fixed penalty.

Internally all constraints are expressed with the noise power normalized
to one, so the slack tolerance eps4 acts on O(1) quantities.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

_CLIP = 0.0  # eigenvalue floor when projecting estimated matrices to PSD


@dataclass
class PowerVector:
    """Amplitude coefficients with per-TX-AP block structure."""

    values: np.ndarray        # ((K + S) * n_tx,) nonnegative amplitudes
    K: int
    S: int
    tx_order: list[int]       # global AP ids, block order

    @property
    def n_tx(self) -> int:
        return len(self.tx_order)

    @property
    def block_size(self) -> int:
        return self.K + self.S

    def blocks(self) -> np.ndarray:
        """View as (n_tx, K + S): row l is [comm amps | sensing amps]."""
        return self.values.reshape(self.n_tx, self.block_size)

    def comm_slice(self, k: int) -> np.ndarray:
        """rho_k: amplitude toward UE k at every TX-AP (length n_tx)."""
        return self.blocks()[:, k]

    def sens_slice(self, s: int) -> np.ndarray:
        """q_s: amplitude toward SSA s at every TX-AP (length n_tx)."""
        return self.blocks()[:, self.K + s]

    def comm_indices(self, k: int) -> np.ndarray:
        return k + self.block_size * np.arange(self.n_tx)

    def sens_indices(self, s: int) -> np.ndarray:
        return self.K + s + self.block_size * np.arange(self.n_tx)

    def per_ap_power(self) -> np.ndarray:
        return np.sum(self.blocks() ** 2, axis=1)

    def validate(self, support: np.ndarray, P_tx: float, tol: float = 0.0):
        v = self.values
        if np.any(v < -tol):
            raise AssertionError("negative amplitude")
        if np.any(np.abs(v[~support]) > tol):
            raise AssertionError("power on an unassigned entry")
        if np.any(self.per_ap_power() > P_tx * (1 + 1e-9) + tol):
            raise AssertionError("per-AP power budget exceeded")


def support_mask(plan) -> np.ndarray:
    """Boolean mask over rho entries: True where the (UE/SSA, AP) pair is
    assigned, i.e. where the amplitude may be nonzero."""
    K, S = plan.K, plan.S
    tx = plan.tx_order
    mask = np.zeros(len(tx) * (K + S), dtype=bool)
    for li, l in enumerate(tx):
        base = li * (K + S)
        for k in plan.ap_ues.get(l, []):
            mask[base + k] = True
        for s in plan.ap_targets.get(l, []):
            mask[base + K + s] = True
    return mask


def equal_split_init(plan, P_tx: float) -> PowerVector:
    """Per TX-AP, split the budget equally (in power) over its assigned
    UEs and SSAs; amplitudes are the square roots."""
    K, S = plan.K, plan.S
    tx = plan.tx_order
    vals = np.zeros(len(tx) * (K + S))
    for li, l in enumerate(tx):
        ues = plan.ap_ues.get(l, [])
        targets = plan.ap_targets.get(l, [])
        n = len(ues) + len(targets)
        if n == 0:
            continue
        amp = math.sqrt(P_tx / n)
        base = li * (K + S)
        for k in ues:
            vals[base + k] = amp
        for s in targets:
            vals[base + K + s] = amp
    return PowerVector(values=vals, K=K, S=S, tx_order=list(tx))


def dirichlet_init(plan, P_tx: float, rng: np.random.Generator) -> PowerVector:
    """Random feasible split used by the reinitialize-and-retry path."""
    K, S = plan.K, plan.S
    tx = plan.tx_order
    vals = np.zeros(len(tx) * (K + S))
    for li, l in enumerate(tx):
        entries = ([li * (K + S) + k for k in plan.ap_ues.get(l, [])]
                   + [li * (K + S) + K + s for s in plan.ap_targets.get(l, [])])
        if not entries:
            continue
        weights = rng.dirichlet(np.ones(len(entries)))
        vals[entries] = np.sqrt(P_tx * weights)
    return PowerVector(values=vals, K=K, S=S, tx_order=list(tx))


# ---------------------------------------------------------------------------
# Standalone problem data
# ---------------------------------------------------------------------------

def psd_project(mat: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues to zero."""
    sym = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, _CLIP, None)
    return (v * w) @ v.T


def _psd_factor(mat: np.ndarray, rtol: float = 1e-14) -> np.ndarray:
    """F with F^T F = psd_project(mat); near-null rows are dropped."""
    sym = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    keep = w > rtol * max(w.max(initial=0.0), 1e-300)
    return (np.sqrt(w[keep])[:, None] * v.T[keep]) if keep.any() \
        else np.zeros((0, mat.shape[0]))


@dataclass
class PowerProblem:
    """Noise-normalized data of the max-min allocation problem.

    ``a`` (K, n_tx), ``B`` (K, K, n_tx, n_tx) and ``C`` (K, S, n_tx, n_tx)
    define the communication SINRs; ``A_blocks`` / ``Bm_blocks``
    (n_pairs, n_tx, K+S, K+S) hold the per-TX-AP diagonal blocks of the
    sensing quadratic forms.  All entries are scaled so the noise power
    is exactly one (comm) and tau_s (sensing).
    """

    K: int
    S: int
    tx_order: list[int]
    pairs: list[tuple[int, int]]
    a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    A_blocks: np.ndarray
    Bm_blocks: np.ndarray
    support: np.ndarray
    P_tx: float
    tau_s: float
    sigma_n2: float           # original units, for reporting only

    @property
    def n(self) -> int:
        return (self.K + self.S) * len(self.tx_order)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def full_form(self, which: str, p: int) -> np.ndarray:
        """Assemble the block-diagonal sensing matrix for pair index p."""
        blocks = self.A_blocks if which == "A" else self.Bm_blocks
        bs = self.K + self.S
        n = self.n
        out = np.zeros((n, n))
        for li in range(len(self.tx_order)):
            sl = slice(li * bs, (li + 1) * bs)
            out[sl, sl] = blocks[p, li]
        return out

    # -- evaluation of the true constraints (normalized units) -------------

    def comm_sinr(self, rho: PowerVector) -> np.ndarray:
        """True communication SINR per UE at the given amplitudes."""
        out = np.zeros(self.K)
        for k in range(self.K):
            sig = float(self.a[k] @ rho.comm_slice(k)) ** 2
            den = 1.0
            for j in range(self.K):
                rj = rho.comm_slice(j)
                den += float(rj @ self.B[k, j] @ rj)
            for s in range(self.S):
                qs = rho.sens_slice(s)
                den += float(qs @ self.C[k, s] @ qs)
            out[k] = sig / den
        return out

    def sens_sinr(self, rho: PowerVector) -> np.ndarray:
        """True sensing SINR per (SSA, RX-AP) pair."""
        out = np.zeros(self.n_pairs)
        x = rho.values
        bs = self.K + self.S
        xb = x.reshape(-1, bs)
        for p in range(self.n_pairs):
            num = np.einsum("lb,lbc,lc->", xb, self.A_blocks[p], xb)
            den = np.einsum("lb,lbc,lc->", xb, self.Bm_blocks[p], xb)
            out[p] = num / (den + self.tau_s)
        return out

    def save(self, path: str):
        np.savez_compressed(
            path, K=self.K, S=self.S, tx_order=np.asarray(self.tx_order),
            pairs=np.asarray(self.pairs, dtype=int).reshape(-1, 2),
            a=self.a, B=self.B, C=self.C,
            A_blocks=self.A_blocks, Bm_blocks=self.Bm_blocks,
            support=self.support, P_tx=self.P_tx, tau_s=self.tau_s,
            sigma_n2=self.sigma_n2)

    @classmethod
    def load(cls, path: str) -> "PowerProblem":
        z = np.load(path)
        return cls(K=int(z["K"]), S=int(z["S"]),
                   tx_order=[int(x) for x in z["tx_order"]],
                   pairs=[tuple(map(int, row)) for row in z["pairs"]],
                   a=z["a"], B=z["B"], C=z["C"],
                   A_blocks=z["A_blocks"], Bm_blocks=z["Bm_blocks"],
                   support=z["support"], P_tx=float(z["P_tx"]),
                   tau_s=float(z["tau_s"]), sigma_n2=float(z["sigma_n2"]))


def build_power_problem(model, forms, plan, config) -> PowerProblem:
    """Assemble noise-normalized problem data from the estimated
    communication SINR model and the sensing quadratic forms."""
    sigma2 = config.sigma_n2
    scale = 1.0 / sigma2
    K, S = plan.K, plan.S
    a = model.a * np.sqrt(scale)
    B = model.B * scale
    C = model.C * scale
    A_blocks = forms.A_blocks * scale
    Bm_blocks = forms.Bm_blocks * scale
    return PowerProblem(
        K=K, S=S, tx_order=plan.tx_order, pairs=forms.pairs,
        a=a, B=B, C=C, A_blocks=A_blocks, Bm_blocks=Bm_blocks,
        support=support_mask(plan), P_tx=config.P_tx,
        tau_s=float(config.tau_s), sigma_n2=sigma2)


# ---------------------------------------------------------------------------
# Linearized constraints
# ---------------------------------------------------------------------------

@dataclass
class LinearizedConstraint:
    """First-order surrogate of  (signal quad) / gamma  at a point.

    The surrogate  lin_vec @ x - lin_gamma * gamma  globally
    under-estimates the true ratio and is tight at the linearization point
    (x_c, gamma_c).  ``x`` is rho_k for communication constraints and the
    full rho for sensing constraints.
    """

    lin_vec: np.ndarray
    lin_gamma: float
    value_at_point: float

    def evaluate(self, x: np.ndarray, gamma: float) -> float:
        return float(self.lin_vec @ x) - self.lin_gamma * gamma


def linearize_ratio(quad: np.ndarray, x_c: np.ndarray,
                    gamma_c: float) -> LinearizedConstraint:
    if gamma_c <= 0:
        raise ValueError("linearization requires a positive SINR point")
    qx = quad @ x_c
    val = float(x_c @ qx)
    return LinearizedConstraint(
        lin_vec=2.0 * qx / gamma_c,
        lin_gamma=val / gamma_c ** 2,
        value_at_point=val / gamma_c)


def linearize_comm_constraint(problem: PowerProblem, k: int,
                              rho_c: PowerVector,
                              gamma_c: float) -> LinearizedConstraint:
    """Surrogate of |a_k^T rho_k|^2 / gamma_c at the current iterate."""
    ak = problem.a[k]
    return linearize_ratio(np.outer(ak, ak), rho_c.comm_slice(k), gamma_c)


def linearize_sensing_constraint(problem: PowerProblem, pair_index: int,
                                 rho_c: PowerVector,
                                 gamma_s: float) -> LinearizedConstraint:
    """Surrogate of rho^T A_{s,r} rho / gamma_s at the current iterate."""
    A = problem.full_form("A", pair_index)
    return linearize_ratio(A, rho_c.values, gamma_s)


# ---------------------------------------------------------------------------
# Convex subproblem and CCP loop
# ---------------------------------------------------------------------------

class CcpSolverError(RuntimeError):
    pass


@dataclass
class CcpState:
    rho: PowerVector
    gamma_s: float
    gamma_c: float
    slacks_xi: np.ndarray
    slacks_chi: np.ndarray
    iteration: int
    converged: bool
    objective: float
    trace: list[dict] = field(default_factory=list)

    @property
    def slack_sum(self) -> float:
        return float(np.sum(self.slacks_xi) + np.sum(self.slacks_chi))


class ConvexSubproblem:
    """Parameterized convex surrogate of the allocation problem.

    Built once per PowerProblem; each CCP iteration only updates the
    linearization parameters, so cvxpy re-solves without recompiling.
    Every SINR constraint is expressed in units of its own denominator at
    a reference point (the initial split), which keeps all rows O(1) for
    the interior-point solver; slack values are reported in the original
    noise-normalized units.
    """

    def __init__(self, problem: PowerProblem, omega0: float, omega1: float,
                 lam: float, solver_tol: float = 1e-8,
                 ref_point: PowerVector | None = None):
        import cvxpy as cp

        self._cp = cp
        self.problem = problem
        self.solver_tol = solver_tol
        n, K, S = problem.n, problem.K, problem.S
        n_pairs = problem.n_pairs
        bs = K + S
        n_tx = len(problem.tx_order)

        self.comm_scale, self.sens_scale = self._row_scales(ref_point)

        # gammas are SINR values, hence nonnegative; keeping that in the
        # subproblem stops the surrogate from wandering below zero when
        # one service is traded away entirely
        rho = cp.Variable(n, nonneg=True)
        gamma_c = cp.Variable(nonneg=True)
        xi = cp.Variable(K, nonneg=True)       # scaled units
        self.rho_var, self.gamma_c_var, self.xi_var = rho, gamma_c, xi

        self.comm_vec = [cp.Parameter(n_tx) for _ in range(K)]
        self.comm_gam = [cp.Parameter(nonneg=True) for _ in range(K)]

        cons = []
        ub = np.where(problem.support, math.sqrt(problem.P_tx), 0.0)
        cons.append(rho <= ub)
        for li in range(n_tx):
            cons.append(cp.sum_squares(rho[li * bs:(li + 1) * bs])
                        <= problem.P_tx)

        # Multiplicative trust region on the SINR variables, re-centered at
        # every iteration: it keeps each subproblem bounded (the surrogate
        # alone does not) and never binds near convergence.
        self.cap_c_param = cp.Parameter(nonneg=True)
        cons.append(gamma_c <= self.cap_c_param)

        comm_idx = [np.arange(n_tx) * bs + k for k in range(K)]
        sens_idx = [np.arange(n_tx) * bs + K + s for s in range(S)]
        for k in range(K):
            sk = self.comm_scale[k]
            terms = []
            for j in range(K):
                fac = _psd_factor(problem.B[k, j] / sk)
                if fac.size:
                    terms.append(cp.sum_squares(fac @ rho[comm_idx[j]]))
            for s in range(S):
                fac = _psd_factor(problem.C[k, s] / sk)
                if fac.size:
                    terms.append(cp.sum_squares(fac @ rho[sens_idx[s]]))
            lhs = self.comm_vec[k] @ rho[comm_idx[k]] \
                - self.comm_gam[k] * gamma_c + xi[k]
            cons.append(lhs >= sum(terms) + 1.0 / sk)

        if n_pairs > 0:
            gamma_s = cp.Variable(nonneg=True)
            chi = cp.Variable(n_pairs, nonneg=True)
            self.gamma_s_var, self.chi_var = gamma_s, chi
            self.cap_s_param = cp.Parameter(nonneg=True)
            cons.append(gamma_s <= self.cap_s_param)
            self.sens_vec = [cp.Parameter(n) for _ in range(n_pairs)]
            self.sens_gam = [cp.Parameter(nonneg=True) for _ in range(n_pairs)]
            for p in range(n_pairs):
                sp = self.sens_scale[p]
                terms = []
                for li in range(n_tx):
                    fac = _psd_factor(problem.Bm_blocks[p, li] / sp)
                    if fac.size:
                        terms.append(cp.sum_squares(
                            fac @ rho[li * bs:(li + 1) * bs]))
                lhs = self.sens_vec[p] @ rho - self.sens_gam[p] * gamma_s \
                    + chi[p]
                rhs_q = sum(terms) if terms else 0.0
                cons.append(lhs >= rhs_q + problem.tau_s / sp)
        else:
            self.gamma_s_var = None
            self.chi_var = None

        # Slack is charged in constraint-relative (scaled) units.  A
        # feasible start keeps every subproblem feasible with zero slack
        # (tangent surrogates), so slacks stay pinned at zero and only
        # open up as a rescue when a solve fails numerically; that rules
        # out slack-financed SINR inflation regardless of the penalty
        # level.
        self.slack_ub = cp.Parameter(nonneg=True, value=0.0)
        cons.append(xi <= self.slack_ub)
        if n_pairs > 0:
            cons.append(chi <= self.slack_ub)
        objective = -omega1 * gamma_c + lam * cp.sum(xi)
        if n_pairs > 0:
            objective = objective - omega0 * gamma_s + lam * cp.sum(chi)

        self.prob = cp.Problem(cp.Minimize(objective), cons)

    def _row_scales(self, ref_point: PowerVector | None):
        """Per-constraint magnitudes at the reference split.

        Scaling by max(denominator, signal/min-SINR) makes both sides of
        each constraint O(1) near the reference: under a shared min-SINR
        variable, strong links carry signal terms far above their own
        denominators, which would otherwise dominate the scaled rows.
        """
        pb = self.problem
        if ref_point is None:
            return np.ones(pb.K), np.full(pb.n_pairs, pb.tau_s)
        x = ref_point.blocks()
        den_c = np.zeros(pb.K)
        sig_c = np.zeros(pb.K)
        for k in range(pb.K):
            den = 1.0
            for j in range(pb.K):
                rj = ref_point.comm_slice(j)
                den += float(rj @ pb.B[k, j] @ rj)
            for s in range(pb.S):
                qs = ref_point.sens_slice(s)
                den += float(qs @ pb.C[k, s] @ qs)
            den_c[k] = den
            sig_c[k] = float(pb.a[k] @ ref_point.comm_slice(k)) ** 2
        gamma_ref_c = max(np.min(sig_c / den_c), 1e-12)
        comm = np.maximum(den_c, sig_c / gamma_ref_c)

        den_s = np.zeros(pb.n_pairs)
        sig_s = np.zeros(pb.n_pairs)
        for p in range(pb.n_pairs):
            den_s[p] = pb.tau_s + float(np.einsum(
                "lb,lbc,lc->", x, pb.Bm_blocks[p], x))
            sig_s[p] = float(np.einsum("lb,lbc,lc->", x, pb.A_blocks[p], x))
        if pb.n_pairs:
            gamma_ref_s = max(np.min(sig_s / den_s), 1e-12)
            sens = np.maximum(den_s, sig_s / gamma_ref_s)
        else:
            sens = den_s
        return comm, sens

    # Lower clamp for linearization points: the surrogate's slope scales
    # with 1/gamma^2, so a vanishing point would destroy conditioning.
    GAMMA_FLOOR = 1e-6

    def set_point(self, rho_c: PowerVector, gamma_s: float, gamma_c: float):
        if gamma_c < 0 or (self.gamma_s_var is not None and gamma_s < 0):
            raise ValueError("linearization point SINRs must be nonnegative")
        gamma_c = max(gamma_c, self.GAMMA_FLOOR)
        gamma_s = max(gamma_s, self.GAMMA_FLOOR)
        self.cap_c_param.value = 100.0 * max(gamma_c, 1.0)
        if self.gamma_s_var is not None:
            self.cap_s_param.value = 100.0 * max(gamma_s, 1.0)
        pb = self.problem
        # the gamma coefficient is floored so the surrogate keeps a strictly
        # positive slope in gamma even when the current iterate carries no
        # power for that service (flooring only deepens under-estimation)
        for k in range(pb.K):
            lin = linearize_comm_constraint(pb, k, rho_c, gamma_c)
            self.comm_vec[k].value = lin.lin_vec / self.comm_scale[k]
            self.comm_gam[k].value = max(
                lin.lin_gamma / self.comm_scale[k], 1e-12)
        if self.gamma_s_var is not None:
            for p in range(pb.n_pairs):
                lin = linearize_sensing_constraint(pb, p, rho_c, gamma_s)
                self.sens_vec[p].value = lin.lin_vec / self.sens_scale[p]
                self.sens_gam[p].value = max(
                    lin.lin_gamma / self.sens_scale[p], 1e-12)

    # Solvers tried in order until one returns a usable solution.  The
    # fallbacks only run when the leading interior-point solver stalls on
    # an ill-conditioned iterate.
    _SOLVER_CHAIN = (("CLARABEL", dict(max_iter=200)),
                     ("CVXOPT", dict()),
                     ("SCS", dict(eps=1e-9, max_iters=100_000)))

    def _try_chain(self) -> str:
        cp = self._cp
        status = None
        for name, opts in self._SOLVER_CHAIN:
            try:
                self.prob.solve(solver=getattr(cp, name), **opts)
                status = self.prob.status
            except (cp.error.SolverError, ZeroDivisionError,
                    ArithmeticError):
                status = "solver_error"
            if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                return status
        return status

    def solve(self) -> dict:
        cp = self._cp
        status = self._try_chain()
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            # restoration step: let the slacks open so the iteration can
            # recover from a numerically infeasible linearization
            self.slack_ub.value = 1e9
            try:
                status = self._try_chain()
            finally:
                self.slack_ub.value = 0.0
            if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                raise CcpSolverError(f"subproblem status {status}")
        pb = self.problem
        rho = np.clip(np.asarray(self.rho_var.value).ravel(), 0.0, None)
        rho[~pb.support] = 0.0
        # keep supported amplitudes strictly interior (power perturbation
        # ~1e-12): a slice at exactly zero has a flat tangent, which makes
        # the next linearized constraint infeasible without slack
        floor = 1e-6 * math.sqrt(pb.P_tx)
        rho[pb.support] = np.maximum(rho[pb.support], floor)
        # renormalize any budget overshoot from solver tolerance
        blocks = rho.reshape(len(pb.tx_order), pb.K + pb.S)
        power = np.sum(blocks ** 2, axis=1)
        over = power > pb.P_tx
        if np.any(over):
            blocks[over] *= np.sqrt(pb.P_tx / power[over, None])
        vec = PowerVector(values=blocks.ravel(), K=pb.K, S=pb.S,
                          tx_order=list(pb.tx_order))
        # slack variables sit at interior-point noise level even in clean
        # runs; genuine slack financing shows up orders of magnitude above
        # this threshold (violations comparable to the constraint scale)
        xi_t = np.clip(np.asarray(self.xi_var.value).ravel(), 0.0, None)
        xi_t[xi_t < 1e-5] = 0.0
        xi = xi_t * self.comm_scale
        if self.chi_var is not None:
            chi_t = np.clip(np.asarray(self.chi_var.value).ravel(), 0.0, None)
            chi_t[chi_t < 1e-5] = 0.0
            chi = chi_t * self.sens_scale
        else:
            chi = np.zeros(0)
        return {
            "rho": vec,
            "gamma_c": float(self.gamma_c_var.value),
            "gamma_s": (float(self.gamma_s_var.value)
                        if self.gamma_s_var is not None else 0.0),
            "xi": xi,
            "chi": chi,
            "objective": float(self.prob.value),
            "inaccurate": status == cp.OPTIMAL_INACCURATE,
        }


def solve_convex_subproblem(problem: PowerProblem, state: CcpState,
                            ccp_config) -> CcpState:
    """Solve one linearized subproblem around the given state."""
    sub = ConvexSubproblem(problem, ccp_config.omega0, ccp_config.omega1,
                           ccp_config.lambda_penalty,
                           ccp_config.subproblem_tol, ref_point=state.rho)
    sub.set_point(state.rho, state.gamma_s, state.gamma_c)
    res = sub.solve()
    return CcpState(rho=res["rho"], gamma_s=res["gamma_s"],
                    gamma_c=res["gamma_c"], slacks_xi=res["xi"],
                    slacks_chi=res["chi"], iteration=state.iteration + 1,
                    converged=False, objective=res["objective"])


def initial_state(problem: PowerProblem, init: PowerVector) -> CcpState:
    """State at an initial feasible split; SINRs are the true values."""
    comm = problem.comm_sinr(init)
    sens = problem.sens_sinr(init) if problem.n_pairs else np.array([1.0])
    return CcpState(rho=init, gamma_s=float(np.min(sens)),
                    gamma_c=float(np.min(comm)),
                    slacks_xi=np.zeros(problem.K),
                    slacks_chi=np.zeros(problem.n_pairs),
                    iteration=0, converged=False, objective=np.inf)


def ccp_power_allocation(problem: PowerProblem, ccp_config,
                         init: PowerVector | None = None,
                         reinit_rng: np.random.Generator | None = None,
                         plan=None) -> CcpState:
    """Run the CCP loop until the four convergence tolerances hold or the
    iteration cap is reached.  On subproblem infeasibility the power split
    is re-randomized, at most ``max_retries`` times."""
    attempts = 0
    while True:
        try:
            return _ccp_run(problem, ccp_config, init)
        except CcpSolverError:
            attempts += 1
            if attempts > ccp_config.max_retries or plan is None \
                    or reinit_rng is None:
                raise
            init = dirichlet_init(plan, problem.P_tx, reinit_rng)


def _ccp_run(problem: PowerProblem, ccp_config,
             init: PowerVector | None) -> CcpState:
    if init is None:
        raise ValueError("an initial PowerVector is required")
    sub = ConvexSubproblem(problem, ccp_config.omega0, ccp_config.omega1,
                           ccp_config.lambda_penalty,
                           ccp_config.subproblem_tol, ref_point=init)
    state = initial_state(problem, init)
    trace = []
    for _ in range(ccp_config.c_max):
        sub.set_point(state.rho, state.gamma_s, state.gamma_c)
        res = sub.solve()
        new = CcpState(rho=res["rho"], gamma_s=res["gamma_s"],
                       gamma_c=res["gamma_c"], slacks_xi=res["xi"],
                       slacks_chi=res["chi"], iteration=state.iteration + 1,
                       converged=False, objective=res["objective"])
        trace.append({"iteration": new.iteration, "gamma_s": new.gamma_s,
                      "gamma_c": new.gamma_c, "slack_sum": new.slack_sum,
                      "objective": new.objective})
        done = (abs(new.gamma_s - state.gamma_s) <= ccp_config.eps1
                and abs(new.gamma_c - state.gamma_c) <= ccp_config.eps2
                and float(np.linalg.norm(new.rho.values - state.rho.values))
                <= ccp_config.eps3
                and new.slack_sum <= ccp_config.eps4)
        state = new
        if done:
            state.converged = True
            break
    state.trace = trace
    return state


def write_trace_csv(state: CcpState, path: str):
    """Per-iteration convergence trace for offline plots."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["iteration", "gamma_s", "gamma_c",
                                          "slack_sum", "objective"])
        w.writeheader()
        for row in state.trace:
            w.writerow(row)
