"""Gear-Shift dynamic programming over per-iteration operating conditions.

Paths are extended breadth-first one decoding iteration at a time.  Each path
carries its exact message pmf, but paths are compared on a logarithmic grid
of the projected error rate.  After every level, paths whose quantized error
rate did not decrease are dropped (rule 1) and dominated paths are dropped
(rule 2).
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .density_evolution import DEConfig, de_iteration, project, run_de
from .timing_circuit import OperatingCondition

log = logging.getLogger(__name__)

ENERGY = "energy"
EDP = "edp"
SCALAR = "scalar"


def quantize_pe(pe: float, per_decade: int = 1000) -> int:
    """Index ``k`` of the smallest grid value ``10**(-k/per_decade)`` that is ``>= pe``."""
    if not 0.0 < pe < 1.0:
        raise ValueError(f"p_e must lie in (0, 1), got {pe}")
    k = math.floor(-per_decade * math.log10(pe))
    # log10 rounding can put an exact grid value one step too high
    if 10.0 ** (-(k + 1) / per_decade) >= pe:
        k += 1
    return k


def grid_value(k: int, per_decade: int = 1000) -> float:
    return 10.0 ** (-k / per_decade)


@dataclass(frozen=True)
class Objective:
    kind: str = EDP
    p_res: float = 1e-8
    pe0: float = 0.09
    t_dec_max: float | None = None

    def __post_init__(self):
        if self.kind not in (ENERGY, EDP):
            raise ValueError(f"objective kind must be '{ENERGY}' or '{EDP}'")
        if not self.p_res > 0:
            raise ValueError("p_res must be positive")
        if self.kind == EDP and self.t_dec_max is not None:
            raise ValueError("the EDP objective takes no latency bound")


@dataclass(frozen=True)
class TrellisConfig:
    gammas: tuple
    per_decade: int = 1000
    switch_penalty: float = 0.0
    max_depth: int = 200
    frontier_cap: int = 100_000
    edp_pruning: str = "scalar"

    def __post_init__(self):
        if not self.gammas:
            raise ValueError("the operating-condition set is empty")
        if self.per_decade <= 0:
            raise ValueError("per_decade must be positive")
        if self.edp_pruning not in ("pareto", "scalar"):
            raise ValueError("edp_pruning must be 'pareto' or 'scalar'")
        object.__setattr__(self, "gammas", tuple(self.gammas))


class DESystem:
    """Iteration dynamics backed by density evolution and per-gamma deviation models."""

    def __init__(self, de_config: DEConfig, models: dict, pi0, cycles_per_iteration: float = 1.0):
        self.de_config = de_config
        self.models = models
        self.pi0 = pi0
        self.cycles_per_iteration = cycles_per_iteration
        self.calls = 0

    def initial(self):
        return self.pi0

    def project(self, state) -> float:
        return float(project(state))

    def step(self, state, gamma: OperatingCondition):
        model = self.models.get(gamma)
        if model is None:
            raise ValueError(f"no deviation model for {gamma.label}")
        self.calls += 1
        pe_in = float(project(state))
        nxt = de_iteration(state, self.pi0, self.de_config, model)
        return nxt, model.energy_at(pe_in), self.cycles_per_iteration * gamma.t_clk


@dataclass
class Path:
    gammas: tuple  # indices into the trellis gamma list
    state: object
    energy: float
    latency: float
    pe: float
    k: int
    switches: int = 0
    pe_trace: tuple = ()
    e_trace: tuple = ()

    @property
    def depth(self) -> int:
        return len(self.gammas)

    def cost(self, kind: str, kappa: float = 0.0) -> float:
        if kind == EDP:
            return self.energy * self.latency
        if kind == SCALAR:
            return self.energy + kappa * self.latency
        return self.energy

    def order_key(self, kind: str, kappa: float = 0.0):
        return (self.cost(kind, kappa), -self.k, self.switches, self.gammas)


def extend(path: Path, gi: int, system, config: TrellisConfig) -> Path:
    """One more iteration at ``config.gammas[gi]``."""
    gamma = config.gammas[gi]
    state, e, t = system.step(path.state, gamma)
    switched = bool(path.gammas) and path.gammas[-1] != gi
    if switched:
        e += config.switch_penalty
    pe = system.project(state)
    k = quantize_pe(pe, config.per_decade) if pe > 0 else 10**9
    return Path(
        path.gammas + (gi,),
        state,
        path.energy + e,
        path.latency + t,
        pe,
        k,
        path.switches + int(switched),
        path.pe_trace + (pe,),
        path.e_trace + (e,),
    )


def dominates(p: Path, other: Path, kind: str, kappa: float = 0.0, pareto: bool = False) -> bool:
    """Rule 2: ``p`` is no more expensive than ``other`` and ends at an error rate no higher.

    With ``pareto`` the EDP objective compares ``(E, T)`` componentwise instead
    of the product, which keeps every path that could still win after more
    iterations are appended.
    """
    if p.k < other.k:
        return False
    if kind == ENERGY or (kind == EDP and pareto):
        return p.energy <= other.energy and p.latency <= other.latency
    return p.cost(kind, kappa) <= other.cost(kind, kappa)


def _prune_scalar(paths, kind, kappa):
    # sweep from the lowest error rate up, keep a path only if it is cheaper
    # than every path already kept; at most one survivor per grid state
    paths = sorted(paths, key=lambda p: (-p.k, p.cost(kind, kappa), p.switches, p.gammas))
    kept, best = [], math.inf
    for p in paths:
        c = p.cost(kind, kappa)
        if c < best:
            kept.append(p)
            best = c
    return kept


def _prune_pareto(paths):
    paths = sorted(paths, key=lambda p: (-p.k, p.energy, p.latency, p.switches, p.gammas))
    kept = []
    ke = np.empty(0)
    kt = np.empty(0)
    for p in paths:
        # every kept path has an error rate no higher than p
        if ke.size and np.any((ke <= p.energy) & (kt <= p.latency)):
            continue
        kept.append(p)
        ke = np.append(ke, p.energy)
        kt = np.append(kt, p.latency)
    return kept


@dataclass
class SearchStats:
    de_calls: list = field(default_factory=list)
    frontier: list = field(default_factory=list)
    occupied_states: list = field(default_factory=list)
    rule1_prunes: int = 0
    dominance_prunes: int = 0
    bound_prunes: int = 0
    latency_prunes: int = 0
    # set when scalar pruning dead-ended and the search was repeated with Pareto pruning
    scalar_attempt: "SearchStats | None" = None
    # set when no trellis path survived and the best repeated condition was returned
    single_condition_fallback: bool = False


@dataclass
class OptimizeResult:
    feasible: bool
    gammas: list
    schedule: list
    energy: float
    latency: float
    cost: float
    pe_trace: list
    e_trace: list
    objective: Objective
    stats: SearchStats
    frontier: list = field(default_factory=list)
    kappa: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.schedule)

    def conditions(self) -> list:
        return [self.gammas[i] for i in self.schedule]


def optimize(system, config: TrellisConfig, objective: Objective, kappa: float | None = None) -> OptimizeResult:
    """Breadth-first DE-Gear-Shift search.

    ``kappa`` switches to the 1-D cost ``E + kappa * T``.  A path terminates
    as soon as its projected error rate is at most ``p_res``.  Because every
    cost only grows along an extension, frontier paths that already cost at
    least as much as the best terminated path are dropped.

    Scalar pruning keeps one path per quantized state.  Paths that share a
    state can still differ in pmf shape, so all survivors may stall even when
    some condition reaches ``p_res`` on its own.  In that case the search is
    repeated with Pareto pruning, and if that dead-ends as well the cheapest
    single-condition schedule is returned.
    """
    kind = SCALAR if kappa is not None else objective.kind
    kap = kappa or 0.0
    pi0 = system.initial()
    pe0 = system.project(pi0)
    root = Path((), pi0, 0.0, 0.0, pe0, quantize_pe(pe0, config.per_decade), pe_trace=(pe0,))
    frontier = [root]
    best: Path | None = None
    stats = SearchStats()

    def feasible_latency(p):
        return objective.t_dec_max is None or p.latency <= objective.t_dec_max + 1e-12

    for depth in range(config.max_depth):
        if not frontier:
            break
        calls_before = getattr(system, "calls", 0)
        children = []
        for p in frontier:
            for gi in range(len(config.gammas)):
                children.append(extend(p, gi, system, config))
        stats.de_calls.append(getattr(system, "calls", 0) - calls_before)
        stats.occupied_states.append(len({p.k for p in frontier}))
        nxt = []
        for c in children:
            if not feasible_latency(c):
                stats.latency_prunes += 1
                continue
            if c.pe <= objective.p_res:
                if best is None or c.order_key(kind, kap) < best.order_key(kind, kap):
                    best = c
                continue
            nxt.append(c)
        # rule 1: quantized error rate must strictly decrease
        survivors = []
        for c in nxt:
            prev_k = quantize_pe(c.pe_trace[-2], config.per_decade) if c.pe_trace[-2] > 0 else 10**9
            if c.k <= prev_k:
                stats.rule1_prunes += 1
            else:
                survivors.append(c)
        if best is not None:
            bound = best.cost(kind, kap)
            kept = [c for c in survivors if c.cost(kind, kap) < bound]
            stats.bound_prunes += len(survivors) - len(kept)
            survivors = kept
        pareto = kind == ENERGY or config.edp_pruning == "pareto"
        pruned = _prune_pareto(survivors) if pareto else _prune_scalar(survivors, kind, kap)
        stats.dominance_prunes += len(survivors) - len(pruned)
        if len(pruned) > config.frontier_cap:
            raise RuntimeError(f"frontier of {len(pruned)} paths exceeds the cap of {config.frontier_cap}")
        frontier = pruned
        stats.frontier.append(len(frontier))
        log.debug("level %d: %d paths, best=%s", depth + 1, len(frontier), None if best is None else best.cost(kind, kap))

    if best is None and kind != ENERGY and config.edp_pruning == "scalar":
        log.info("scalar pruning found no feasible path; repeating with Pareto pruning")
        res = optimize(system, replace(config, edp_pruning="pareto"), objective, kappa)
        res.stats.scalar_attempt = stats
        return res
    if best is None:
        best = _repeat_best(root, system, config, objective, kind, kap)
        stats.single_condition_fallback = best is not None
    if best is None:
        return OptimizeResult(False, list(config.gammas), [], math.inf, math.inf, math.inf, [], [], objective, stats, frontier, kappa)
    return OptimizeResult(
        True,
        list(config.gammas),
        list(best.gammas),
        best.energy,
        best.latency,
        best.cost(objective.kind),
        list(best.pe_trace),
        list(best.e_trace),
        objective,
        stats,
        [],
        kappa,
    )


def _repeat_best(root, system, config: TrellisConfig, objective: Objective, kind: str, kap: float):
    """Cheapest schedule that repeats one operating condition, or None."""
    best = None
    for gi in range(len(config.gammas)):
        p = root
        for _ in range(config.max_depth):
            p = extend(p, gi, system, config)
            if objective.t_dec_max is not None and p.latency > objective.t_dec_max + 1e-12:
                break
            if p.pe <= objective.p_res:
                if best is None or p.order_key(kind, kap) < best.order_key(kind, kap):
                    best = p
                break
    return best


def optimize_scalarized(system, config: TrellisConfig, objective: Objective, kappa: float) -> OptimizeResult:
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return optimize(system, config, objective, kappa=kappa)


def find_kappa(system, config: TrellisConfig, objective: Objective, target_latency: float, iterations: int = 40, kappa_max: float = 1e6) -> OptimizeResult:
    """Bisection on ``kappa`` for the least-energy 1-D solution within ``target_latency``."""
    res = optimize_scalarized(system, config, objective, 0.0)
    if res.feasible and res.latency <= target_latency + 1e-12:
        return res
    hi = 1.0
    best = None
    while hi <= kappa_max:
        r = optimize_scalarized(system, config, objective, hi)
        if r.feasible and r.latency <= target_latency + 1e-12:
            best = r
            break
        hi *= 2
    if best is None:
        return r
    lo = hi / 2 if hi > 1.0 else 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        r = optimize_scalarized(system, config, objective, mid)
        if r.feasible and r.latency <= target_latency + 1e-12:
            hi = mid
            if r.energy < best.energy or (r.energy == best.energy and r.latency < best.latency):
                best = r
        else:
            lo = mid
    return best


def exhaustive(system, config: TrellisConfig, objective: Objective, max_depth: int) -> OptimizeResult:
    """Brute-force oracle: every sequence up to ``max_depth``, stopping at ``p_res``.

    Reports whether the optimum has a non-monotone quantized error-rate trace.
    """
    n = len(config.gammas)
    pi0 = system.initial()
    pe0 = system.project(pi0)
    root = Path((), pi0, 0.0, 0.0, pe0, quantize_pe(pe0, config.per_decade), pe_trace=(pe0,))
    best = None
    stack = [root]
    while stack:
        p = stack.pop()
        for gi in range(n):
            c = extend(p, gi, system, config)
            if objective.t_dec_max is not None and c.latency > objective.t_dec_max + 1e-12:
                continue
            if c.pe <= objective.p_res:
                if best is None or c.order_key(objective.kind) < best.order_key(objective.kind):
                    best = c
            elif c.depth < max_depth:
                stack.append(c)
    stats = SearchStats()
    if best is None:
        return OptimizeResult(False, list(config.gammas), [], math.inf, math.inf, math.inf, [], [], objective, stats)
    ks = [quantize_pe(p, config.per_decade) for p in best.pe_trace if p > 0]
    stats.rule1_prunes = int(any(b <= a for a, b in zip(ks, ks[1:-1])))
    return OptimizeResult(True, list(config.gammas), list(best.gammas), best.energy, best.latency, best.cost(objective.kind), list(best.pe_trace), list(best.e_trace), objective, stats)


# -- baselines and reports -------------------------------------------------------


def single_gamma_runs(system: DESystem, gammas: Sequence[OperatingCondition], objective: Objective, max_iters: int = 200) -> list[dict]:
    """Cost of running each operating condition alone until ``p_res``."""
    rows = []
    for g in gammas:
        tr = run_de(system.pi0, system.de_config, system.models[g], max_iters=max_iters, p_res=objective.p_res, cycles_per_iteration=system.cycles_per_iteration)
        ok = tr.converged and (objective.t_dec_max is None or tr.total_latency <= objective.t_dec_max + 1e-12)
        e, t = tr.total_energy, tr.total_latency
        rows.append(
            {
                "gamma": g,
                "feasible": bool(ok),
                "iterations": tr.iterations,
                "energy": e,
                "latency": t,
                "edp": e * t,
                "violation_free": bool(system.models[g].meta.get("violation_free", system.models[g].is_identity)),
            }
        )
    return rows


def _cost(row, kind):
    return row["edp"] if kind == EDP else row["energy"]


def best_baseline(rows: list[dict], kind: str, v_nom: float | None = None) -> dict | None:
    """Cheapest feasible violation-free single condition (at ``v_nom`` when given)."""
    cand = [r for r in rows if r["feasible"] and r["violation_free"] and (v_nom is None or abs(r["gamma"].v_dd - v_nom) < 1e-9)]
    if not cand:
        return None
    return min(cand, key=lambda r: (_cost(r, kind), r["gamma"].v_dd, r["gamma"].t_clk))


def run_length(conditions: Sequence[OperatingCondition]) -> list[dict]:
    out = []
    for g, grp in itertools.groupby(conditions):
        out.append({"v_dd": g.v_dd, "t_clk": g.t_clk, "count": len(list(grp))})
    return out


def rle_notation(conditions: Sequence[OperatingCondition]) -> str:
    parts = [f"[{r['v_dd']:.2f} V, {r['t_clk']:.1f} ns]^{r['count']}" for r in run_length(conditions)]
    return "[" + ", ".join(parts) + "]"


def verify_schedule(system: DESystem, result: OptimizeResult) -> dict:
    """Re-run the schedule through plain DE and compare with the reported costs."""
    models = [system.models[g] for g in result.conditions()]
    tr = run_de(system.pi0, system.de_config, models, p_res=result.objective.p_res, cycles_per_iteration=system.cycles_per_iteration)
    lat_ok = result.objective.t_dec_max is None or tr.total_latency <= result.objective.t_dec_max + 1e-12
    return {
        "final_pe": float(tr.pe[-1]),
        "energy": tr.total_energy,
        "latency": tr.total_latency,
        "reaches_p_res": bool(tr.pe[-1] <= result.objective.p_res),
        "latency_ok": bool(lat_ok),
        "energy_error": abs(tr.total_energy - result.energy),
        "latency_error": abs(tr.total_latency - result.latency),
    }


def schedule_report(result: OptimizeResult, baselines: list[dict] | None = None, v_nom: float | None = None, **header) -> dict:
    obj = result.objective
    rep = {
        "objective": {"kind": obj.kind, "p_res": obj.p_res, "pe0": obj.pe0, "t_dec_max": obj.t_dec_max},
        "feasible": result.feasible,
        **header,
    }
    if result.feasible:
        conds = result.conditions()
        per_iter = []
        for t, g in enumerate(conds):
            per_iter.append({"iteration": t + 1, "v_dd": g.v_dd, "t_clk": g.t_clk, "p_e": result.pe_trace[t + 1], "energy": result.e_trace[t]})
        rep.update(
            {
                "schedule": rle_notation(conds),
                "runs": run_length(conds),
                "iterations": per_iter,
                "energy": result.energy,
                "latency": result.latency,
                "edp": result.energy * result.latency,
                "kappa": result.kappa,
            }
        )
    if baselines is not None:
        kind = obj.kind
        base = best_baseline(baselines, kind, v_nom)
        anyvf = best_baseline(baselines, kind)
        rep["baseline"] = None if base is None else _baseline_row(base, result, kind)
        rep["best_violation_free"] = None if anyvf is None else _baseline_row(anyvf, result, kind)
    rep["search"] = {
        "de_calls_per_level": result.stats.de_calls,
        "frontier_per_level": result.stats.frontier,
        "rule1_prunes": result.stats.rule1_prunes,
        "dominance_prunes": result.stats.dominance_prunes,
        "bound_prunes": result.stats.bound_prunes,
        "pareto_fallback": result.stats.scalar_attempt is not None,
        "single_condition_fallback": result.stats.single_condition_fallback,
    }
    return rep


def _baseline_row(row, result, kind):
    c = _cost(row, kind)
    ours = result.energy * result.latency if kind == EDP else result.energy
    return {
        "gamma": row["gamma"].label,
        "iterations": row["iterations"],
        "energy": row["energy"],
        "latency": row["latency"],
        "edp": row["edp"],
        "improvement": (c - ours) / c if result.feasible and c > 0 else None,
    }


def report_json(rep: dict) -> str:
    return json.dumps(rep, indent=2, sort_keys=True, default=str)
