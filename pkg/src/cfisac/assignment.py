"""Heuristic AP mode selection and user-centric UE association.

APs end up in exactly one of three modes: ISAC transmit, sensing receive,
or idle.  Per SSA, the strongest AP (one-way free-space gain) becomes its
first RX-AP, the next strongest its first TX-AP, further RX-APs come from
the remaining idle pool, and extra TX-APs may be shared across SSAs.
UEs are then associated to TX/idle APs by accumulating channel gain until
a threshold is met; idle APs recruited this way switch to transmit mode.

All selections iterate candidates in descending gain with ascending AP
index as the tie-break, so the plan is a deterministic function of the
scenario and (T, R, beta_th).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario


class InfeasibleAssignment(RuntimeError):
    pass


@dataclass
class AssignmentPlan:
    """Mode sets and serving sets produced by the selection heuristic."""

    L: int
    K: int
    S: int
    tx_aps: set[int] = field(default_factory=set)
    rx_aps: set[int] = field(default_factory=set)
    idle_aps: set[int] = field(default_factory=set)
    serving_sets: list[list[int]] = field(default_factory=list)   # per UE
    ssa_tx: list[list[int]] = field(default_factory=list)         # per SSA
    ssa_rx: list[list[int]] = field(default_factory=list)         # per SSA
    ap_ues: dict[int, list[int]] = field(default_factory=dict)    # per TX-AP
    ap_targets: dict[int, list[int]] = field(default_factory=dict)

    @property
    def tx_order(self) -> list[int]:
        """Canonical TX-AP ordering used for all power/matrix blocks."""
        return sorted(self.tx_aps)

    @property
    def rx_order(self) -> list[int]:
        return sorted(self.rx_aps)

    @property
    def n_tx(self) -> int:
        return len(self.tx_aps)

    def pairs(self) -> list[tuple[int, int]]:
        """All (ssa, rx_ap) pairs in deterministic order."""
        return [(s, r) for s in range(self.S) for r in sorted(self.ssa_rx[s])]

    def validate(self):
        """Raise if the partition or consistency invariants are broken."""
        all_aps = set(range(self.L))
        if self.tx_aps | self.rx_aps | self.idle_aps != all_aps:
            raise AssertionError("mode sets do not cover all APs")
        if (self.tx_aps & self.rx_aps or self.tx_aps & self.idle_aps
                or self.rx_aps & self.idle_aps):
            raise AssertionError("mode sets overlap")
        for k, mk in enumerate(self.serving_sets):
            if not mk:
                raise AssertionError(f"UE {k} has an empty serving set")
            for l in mk:
                if k not in self.ap_ues.get(l, []):
                    raise AssertionError("serving sets and ap_ues disagree")
        for l, ues in self.ap_ues.items():
            for k in ues:
                if l not in self.serving_sets[k]:
                    raise AssertionError("ap_ues and serving sets disagree")
        for s in range(self.S):
            for l in self.ssa_tx[s]:
                if s not in self.ap_targets.get(l, []):
                    raise AssertionError("ssa_tx and ap_targets disagree")
        for l, targets in self.ap_targets.items():
            for s in targets:
                if l not in self.ssa_tx[s]:
                    raise AssertionError("ap_targets and ssa_tx disagree")

    def to_json(self) -> str:
        return json.dumps({
            "L": self.L, "K": self.K, "S": self.S,
            "tx_aps": sorted(self.tx_aps),
            "rx_aps": sorted(self.rx_aps),
            "idle_aps": sorted(self.idle_aps),
            "serving_sets": [sorted(m) for m in self.serving_sets],
            "ssa_tx": [sorted(t) for t in self.ssa_tx],
            "ssa_rx": [sorted(r) for r in self.ssa_rx],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AssignmentPlan":
        d = json.loads(text)
        plan = cls(L=d["L"], K=d["K"], S=d["S"],
                   tx_aps=set(d["tx_aps"]), rx_aps=set(d["rx_aps"]),
                   idle_aps=set(d["idle_aps"]),
                   serving_sets=[list(m) for m in d["serving_sets"]],
                   ssa_tx=[list(t) for t in d["ssa_tx"]],
                   ssa_rx=[list(r) for r in d["ssa_rx"]])
        plan._rebuild_reverse_maps()
        return plan

    def _rebuild_reverse_maps(self):
        self.ap_ues = {l: [] for l in self.tx_aps}
        self.ap_targets = {l: [] for l in self.tx_aps}
        for k, mk in enumerate(self.serving_sets):
            for l in mk:
                self.ap_ues[l].append(k)
        for s, ts in enumerate(self.ssa_tx):
            for l in ts:
                self.ap_targets[l].append(s)


def _ranked(candidates, gains) -> list[int]:
    """Candidates sorted by descending gain, ties by ascending index."""
    return sorted(candidates, key=lambda l: (-gains[l], l))


def select_ap_modes(scenario: Scenario, T: int, R: int) -> AssignmentPlan:
    """Pick RX and TX APs for every SSA from the one-way SSA gains."""
    L, S = scenario.L, scenario.S
    gains = scenario.ssa_gain   # (S, L)
    plan = AssignmentPlan(L=L, K=scenario.K, S=S,
                          idle_aps=set(range(L)),
                          serving_sets=[[] for _ in range(scenario.K)],
                          ssa_tx=[[] for _ in range(S)],
                          ssa_rx=[[] for _ in range(S)])

    # First RX-AP per SSA: strongest not-yet-taken AP, SSAs in index order.
    for s in range(S):
        for l in _ranked(plan.idle_aps, gains[s]):
            if l not in plan.rx_aps:
                plan.ssa_rx[s].append(l)
                plan.rx_aps.add(l)
                break
        else:
            raise InfeasibleAssignment(f"no AP left for first RX of SSA {s}")
    plan.idle_aps -= plan.rx_aps

    # First TX-AP per SSA: next strongest, removed from the pool at once.
    for s in range(S):
        ranked = _ranked(plan.idle_aps, gains[s])
        if not ranked:
            raise InfeasibleAssignment(f"no AP left for first TX of SSA {s}")
        l = ranked[0]
        plan.ssa_tx[s].append(l)
        plan.tx_aps.add(l)
        plan.idle_aps.discard(l)

    # Additional RX-APs: each SSA takes its top (R-1) from the idle pool as
    # it stands at the start of this phase, so RX sets may overlap.
    if R > 1:
        pool = set(plan.idle_aps)
        for s in range(S):
            ranked = _ranked(pool, gains[s])
            if len(ranked) < R - 1:
                raise InfeasibleAssignment(
                    f"only {len(ranked)} idle APs for the {R - 1} extra "
                    f"RX-APs of SSA {s}")
            chosen = ranked[: R - 1]
            plan.ssa_rx[s].extend(chosen)
            plan.rx_aps.update(chosen)
        plan.idle_aps -= plan.rx_aps

    # Additional TX-APs: shared TX duty is allowed, so candidates are the
    # idle pool plus all existing TX-APs not already serving this SSA.
    if T > 1:
        for s in range(S):
            candidates = (plan.idle_aps | plan.tx_aps) - set(plan.ssa_tx[s])
            ranked = _ranked(candidates, gains[s])
            if len(ranked) < T - 1:
                raise InfeasibleAssignment(
                    f"only {len(ranked)} candidates for the {T - 1} extra "
                    f"TX-APs of SSA {s}")
            for l in ranked[: T - 1]:
                plan.ssa_tx[s].append(l)
                plan.tx_aps.add(l)
                plan.idle_aps.discard(l)

    plan.ap_ues = {l: [] for l in plan.tx_aps}
    plan.ap_targets = {l: [] for l in plan.tx_aps}
    for s in range(S):
        for l in plan.ssa_tx[s]:
            plan.ap_targets[l].append(s)
    return plan


def associate_ues(scenario: Scenario, plan: AssignmentPlan,
                  beta_th: float) -> AssignmentPlan:
    """Assign serving APs per UE by accumulating total channel gain.

    The strongest non-RX AP is always the master; further APs are appended
    in descending gain while the accumulated gain is below beta_th.  Idle
    APs recruited here become TX-APs.
    """
    beta = scenario.beta_total   # (K, L), trace-based total gain
    recruited: set[int] = set()
    for k in range(scenario.K):
        candidates = _ranked(plan.tx_aps | plan.idle_aps, beta[k])
        if not candidates:
            raise InfeasibleAssignment("no TX or idle AP available for UEs")
        master = candidates[0]
        mk = [master]
        total = beta[k, master]
        for l in candidates[1:]:
            if total >= beta_th:
                break
            mk.append(l)
            total += beta[k, l]
        plan.serving_sets[k] = mk
        recruited.update(mk)

    newly_tx = recruited & plan.idle_aps
    plan.tx_aps |= newly_tx
    plan.idle_aps -= newly_tx
    for l in newly_tx:
        plan.ap_targets.setdefault(l, [])

    plan.ap_ues = {l: [] for l in plan.tx_aps}
    for k, mk in enumerate(plan.serving_sets):
        for l in mk:
            plan.ap_ues[l].append(k)
    for l in plan.tx_aps:
        plan.ap_targets.setdefault(l, [])
    plan.validate()
    return plan


def build_plan(scenario: Scenario) -> AssignmentPlan:
    """Run both stages with the scenario's configured T, R and threshold."""
    cfg = scenario.config
    plan = select_ap_modes(scenario, cfg.T, cfg.R)
    return associate_ues(scenario, plan, cfg.beta_th)
