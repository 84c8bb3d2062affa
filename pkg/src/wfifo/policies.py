"""Online admission and scheduling rules driven by queue backlogs.

Two controller families share the engine interface:

* qfc: queue-level. Each queue picks one admission scale a_n by maximizing
  M * sum_k U(a_n * p_on_nk**beta) - Q_n * a_n over [0, r_max], then admits
  lam_nk = a_n * p_on_nk**beta. The scheduler grants the slot to the
  serviceable queue with the largest Q_n / sum_k p_on_nk**beta.
* maxweight: flow-level. Each flow admits by maximizing
  M * U(lam) - Q_nk * lam over [0, r_max] against its own backlog, and the
  scheduler grants the largest-backlog serviceable queue. It never looks at
  channel statistics, which is exactly the behavior the qfc design fixes.

For the logarithmic utility both maximizations have closed forms; a
golden-section fallback covers any other concave utility. Ties in either
scheduler resolve to the lowest queue index. A static policy replays fixed
admission rates and a fixed randomized grant table, e.g. a planner solution.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import NetworkConfig, SchedulingPolicy, state_bit
from .dfc import DfcSolution

GOLDEN_TOL = 1e-10
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    """Argmax of a unimodal f on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def qfc_flow_control(q_total: int | float, cfg: NetworkConfig, n: int) -> float:
    """Admission scale for queue n given its total backlog.

    Log utility closed form: every flow's log term has marginal weight 1/a
    whatever its channel, so a* = min(r_max, M * w * K_n / Q_n); an empty
    queue admits at the cap. Other utilities fall back to golden section.
    """
    if q_total < 0:
        raise ValueError("backlog must be >= 0")
    k_n = cfg.n_flows(n)
    if cfg.utility.kind == "log":
        if q_total == 0:
            return cfg.r_max
        return min(cfg.r_max, cfg.M * cfg.utility.weight * k_n / q_total)
    return _generic_scale(q_total, cfg, n)


def _generic_scale(q_total: float, cfg: NetworkConfig, n: int) -> float:
    beta = cfg.beta
    p_on = cfg.p_on_row(n)
    util = cfg.utility

    def objective(a: float) -> float:
        total = 0.0
        for p in p_on:
            # flows with p_on = 0 keep their marginal term in a; their
            # channel constant is dropped (it does not move the argmax)
            total += util.value(a) if p <= 0.0 else util.value(a * p**beta)
        return cfg.M * total - q_total * a

    return golden_section_max(objective, 1e-12, cfg.r_max)


def maxweight_flow_control(q_flow: int | float, cfg: NetworkConfig) -> float:
    """Per-flow admission against that flow's own backlog (channel-blind)."""
    if q_flow < 0:
        raise ValueError("backlog must be >= 0")
    if cfg.utility.kind == "log":
        if q_flow == 0:
            return cfg.r_max
        return min(cfg.r_max, cfg.M * cfg.utility.weight / q_flow)
    util = cfg.utility
    return golden_section_max(
        lambda lam: cfg.M * util.value(lam) - q_flow * lam, 1e-12, cfg.r_max
    )


def qfc_schedule(
    q_totals: list[int], serviceable: list[int], cfg: NetworkConfig
) -> Optional[int]:
    """Grant the slot to the serviceable queue maximizing Q_n / sum_k p_on**beta."""
    best, best_w = None, -1.0
    for n in serviceable:
        denom = math.fsum(p**cfg.beta for p in cfg.p_on_row(n))
        w = q_totals[n] / denom
        if w > best_w:
            best, best_w = n, w
    return best


def maxweight_schedule(q_totals: list[int], serviceable: list[int]) -> Optional[int]:
    """Grant the slot to the serviceable queue with the largest backlog."""
    best, best_w = None, -1.0
    for n in serviceable:
        if q_totals[n] > best_w:
            best, best_w = n, q_totals[n]
    return best


# ----- Engine-facing policy objects -----


class Policy:
    """Per-slot admission and scheduling decisions for the simulator.

    `admission` returns per-flow admitted rates for the current backlogs.
    `schedule` picks a queue among the serviceable ones (head-of-line
    channel ON) or None; `u` is a uniform draw from the scheduling stream
    for randomized rules.
    """

    name = "abstract"

    def admission(self, q_totals: list[int], q_flows: list[list[int]]) -> list[list[float]]:
        raise NotImplementedError

    def schedule(
        self, q_totals: list[int], serviceable: list[int], state_bits: int, u: float
    ) -> Optional[int]:
        raise NotImplementedError


class QfcPolicy(Policy):
    name = "qfc"

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self.r_max = cfg.r_max
        self.pon_beta = [
            [p**cfg.beta for p in cfg.p_on_row(n)] for n in range(cfg.n_queues)
        ]
        self.mk = [cfg.M * cfg.utility.weight * cfg.n_flows(n) for n in range(cfg.n_queues)]
        self.sched_w = []
        for n in range(cfg.n_queues):
            denom = math.fsum(self.pon_beta[n])
            # a queue whose flows are all permanently OFF is never serviceable,
            # so its weight is never consulted
            self.sched_w.append(1.0 / denom if denom > 0 else 0.0)
        self._closed_form = cfg.utility.kind == "log"

    def admission(self, q_totals, q_flows):
        out = []
        r_max = self.r_max
        for n, q in enumerate(q_totals):
            if self._closed_form:
                a = r_max if q == 0 else min(r_max, self.mk[n] / q)
            else:
                a = _generic_scale(q, self.cfg, n)
            out.append([a * pb for pb in self.pon_beta[n]])
        return out

    def schedule(self, q_totals, serviceable, state_bits, u):
        best, best_w = None, -1.0
        for n in serviceable:
            w = q_totals[n] * self.sched_w[n]
            if w > best_w:
                best, best_w = n, w
        return best


class MaxWeightPolicy(Policy):
    name = "maxweight"

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        self.r_max = cfg.r_max
        self.mw = cfg.M * cfg.utility.weight
        self._closed_form = cfg.utility.kind == "log"

    def admission(self, q_totals, q_flows):
        out = []
        r_max = self.r_max
        mw = self.mw
        if self._closed_form:
            for row in q_flows:
                out.append([r_max if q == 0 else min(r_max, mw / q) for q in row])
        else:
            for row in q_flows:
                out.append([maxweight_flow_control(q, self.cfg) for q in row])
        return out

    def schedule(self, q_totals, serviceable, state_bits, u):
        best, best_w = None, -1.0
        for n in serviceable:
            if q_totals[n] > best_w:
                best, best_w = n, q_totals[n]
        return best


class StaticPolicy(Policy):
    """Open-loop policy: constant admission rates, randomized grant table."""

    name = "static"

    def __init__(self, cfg: NetworkConfig, rates: list[list[float]], tau: np.ndarray):
        self.cfg = cfg
        table = SchedulingPolicy(np.asarray(tau, dtype=float))
        if table.n_queues != cfg.n_queues:
            raise ValueError("grant table sized for a different number of queues")
        if len(rates) != cfg.n_queues or any(
            len(r) != cfg.n_flows(n) for n, r in enumerate(rates)
        ):
            raise ValueError("rates must give one value per flow")
        for n, row in enumerate(rates):
            for k, lam in enumerate(row):
                if lam < 0:
                    raise ValueError(f"rates[{n}][{k}] must be >= 0")
        self.rates = [list(map(float, row)) for row in rates]
        self.tau = table.tau.tolist()

    def admission(self, q_totals, q_flows):
        return self.rates

    def schedule(self, q_totals, serviceable, state_bits, u):
        # walk the grant table's cumulative probabilities; a draw landing on
        # a non-serviceable queue (or past the total) idles the slot
        acc = 0.0
        for n, p in enumerate(self.tau[state_bits]):
            acc += p
            if u < acc:
                return n if n in serviceable else None
        return None


def static_dfc_policy(cfg: NetworkConfig, sol: DfcSolution) -> StaticPolicy:
    """Replay a planner solution as an open-loop simulation policy."""
    return StaticPolicy(cfg, [list(r) for r in sol.lambdas], sol.tau)


def serve_if_on_policy(cfg: NetworkConfig, rates: list[list[float]]) -> StaticPolicy:
    """Open-loop arrivals with the slot split evenly among serviceable queues."""
    table = SchedulingPolicy.uniform_over_on(cfg.n_queues)
    return StaticPolicy(cfg, rates, table.tau)


def build_policy(cfg: NetworkConfig, name: str) -> Policy:
    """Resolve a policy by its public name."""
    if name == "qfc":
        return QfcPolicy(cfg)
    if name == "maxweight":
        return MaxWeightPolicy(cfg)
    if name == "dfc-static":
        from .dfc import solve_dfc

        return static_dfc_policy(cfg, solve_dfc(cfg))
    if name == "static":
        missing = cfg.missing_lambda_fields()
        if missing:
            raise ValueError(
                "static policy needs arrival rates; missing: " + ", ".join(missing)
            )
        return serve_if_on_policy(cfg, cfg.lambdas())
    raise ValueError(f"unknown policy {name!r} (expected qfc, maxweight, dfc-static, static)")
