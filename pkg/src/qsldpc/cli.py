"""Command-line entry point: characterize, curve, threshold, optimize, simulate, verify.

Every command reads one JSON config (see ``configs/`` and the README for the
schema), writes its artifacts below ``--out`` and is a pure function of the
config and the files it reads, so reruns produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from . import __version__
from .channel_code import (
    BiawgnChannel,
    CodewordSampler,
    QuantizedAlphabet,
    RegularEnsemble,
    build_regular_code,
    load_graph,
    pe_to_sigma,
    sample_channel_beliefs,
)
from .density_evolution import DEConfig, run_de, threshold_search
from .deviation import DeviationModel, characterize, check_weak_symmetry, default_pe_grid
from .gearshift import (
    DESystem,
    Objective,
    TrellisConfig,
    optimize,
    report_json,
    schedule_report,
    single_gamma_runs,
    verify_schedule,
)
from .oms_decoder import DecoderConfig, decode
from .timing_circuit import DEFAULT_PROFILE, DelayModel, OperatingCondition, load_profile, nominal_t_clk

log = logging.getLogger("qsldpc")

CONFIG_SCHEMA = 1
EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------


def _section(raw: dict, name: str, defaults: dict) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return {**defaults, **sec}


ENSEMBLE_DEFAULTS = {"d_v": 3, "d_c": 6, "alpha": 4.0, "offset": 1, "bit_width": 6, "acc_bits": None}
GAMMA_DEFAULTS = {"v_min": 0.70, "v_max": 1.0, "v_step": 0.05, "t_step": 0.1, "t_below_nominal": 0.2, "t_clk_nom": None, "points": None}
CHAR_DEFAULTS = {"pe_grid": None, "per_decade": 8, "pe_low": 1e-4, "trials_per_point": 20000, "streams": 64, "warmup_cycles": 100, "interleave": 3}
OBJ_DEFAULTS = {"kind": "edp", "p_res": 1e-8, "t_dec_max": None, "per_decade": 1000, "edp_pruning": "scalar", "max_depth": 200, "switch_penalty": 0.0, "cycles_per_iteration": 1.0}
CURVE_DEFAULTS = {"pe0": None, "gammas": None, "max_iters": 200, "p_res": 1e-8}
THRESH_DEFAULTS = {"p_res": 1e-6, "resolution": 1e-4, "max_iters": 500, "gammas": None}
SIM_DEFAULTS = {"n": 4092, "code_seed": 1, "code_file": None, "pe0": None, "frames": 100, "max_iterations": 20, "mode": "all-one", "schedule": None, "total_bits": 8, "faults_persist": False}
VERIFY_DEFAULTS = {"ws_tolerance": 0.05, "min_count": 100, "z": 4.0}


@dataclass
class RunConfig:
    ensemble: RegularEnsemble
    alphabet: QuantizedAlphabet
    alpha: float
    offset: int
    acc_bits: int | None
    profile: object
    profile_source: str | None
    seed: int
    pe0: float
    gamma_spec: dict
    char: dict
    objective: dict
    curve: dict
    threshold: dict
    simulate: dict
    verify: dict
    base_dir: Path = field(default_factory=Path)

    @property
    def de_config(self) -> DEConfig:
        return DEConfig(self.ensemble, self.alpha, self.offset, self.alphabet, self.acc_bits)

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def header(self) -> dict:
        return {
            "tool_version": __version__,
            "seed": self.seed,
            "profile": self.profile.name,
            "ensemble": [self.ensemble.d_v, self.ensemble.d_c],
            "alpha": self.alpha,
            "offset": self.offset,
            "bit_width": self.alphabet.bit_width,
        }


def parse_config(raw: dict, base_dir: Path = Path("."), seed: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("schema_version") != CONFIG_SCHEMA:
        raise ConfigError(f"schema_version must be {CONFIG_SCHEMA}")
    known = {"schema_version", "ensemble", "profile", "seed", "pe0", "gammas", "characterize", "objective", "curve", "threshold", "simulate", "verify", "description"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    ens = _section(raw, "ensemble", ENSEMBLE_DEFAULTS)
    try:
        ensemble = RegularEnsemble(int(ens["d_v"]), int(ens["d_c"]))
        alphabet = QuantizedAlphabet(int(ens["bit_width"]))
        Objective(**{k: raw.get("objective", {}).get(k, OBJ_DEFAULTS[k]) for k in ("kind", "p_res", "t_dec_max")})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    profile, src = DEFAULT_PROFILE, None
    if raw.get("profile"):
        src = raw["profile"]
        path = Path(src) if Path(src).is_absolute() else base_dir / src
        if not path.is_file():
            raise ConfigError(f"circuit profile not found: {path}")
        try:
            profile = load_profile(path)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad circuit profile {path}: {exc}") from exc
    pe0 = float(raw.get("pe0", 0.09))
    if not 0 < pe0 < 0.5:
        raise ConfigError("pe0 must lie in (0, 0.5)")
    cfg = RunConfig(
        ensemble=ensemble,
        alphabet=alphabet,
        alpha=float(ens["alpha"]),
        offset=int(ens["offset"]),
        acc_bits=ens["acc_bits"],
        profile=profile,
        profile_source=src,
        seed=int(raw.get("seed", 0) if seed is None else seed),
        pe0=pe0,
        gamma_spec=_section(raw, "gammas", GAMMA_DEFAULTS),
        char=_section(raw, "characterize", CHAR_DEFAULTS),
        objective=_section(raw, "objective", OBJ_DEFAULTS),
        curve=_section(raw, "curve", CURVE_DEFAULTS),
        threshold=_section(raw, "threshold", THRESH_DEFAULTS),
        simulate=_section(raw, "simulate", SIM_DEFAULTS),
        verify=_section(raw, "verify", VERIFY_DEFAULTS),
        base_dir=base_dir,
    )
    if cfg.simulate["mode"] not in ("all-one", "random"):
        raise ConfigError("simulate.mode must be 'all-one' or 'random'")
    for key in ("code_file", "schedule"):
        if cfg.simulate[key] and not cfg.resolve(cfg.simulate[key]).is_file():
            raise ConfigError(f"simulate.{key} not found: {cfg.resolve(cfg.simulate[key])}")
    return cfg


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw, path.parent, seed)


# -- operating conditions ----------------------------------------------------------


def t_nominal(cfg: RunConfig) -> float:
    t = cfg.gamma_spec["t_clk_nom"]
    return float(t) if t is not None else nominal_t_clk(cfg.profile, cfg.ensemble, cfg.alphabet)


def gamma_grid(cfg: RunConfig) -> list[OperatingCondition]:
    """Supply voltages on a fixed step; for each, clock periods on a 0.1 ns style grid from
    ``t_nom - t_below_nominal`` up to the first violation-free period at that voltage."""
    spec = cfg.gamma_spec
    t_nom = t_nominal(cfg)
    if spec["points"] is not None:
        try:
            return [OperatingCondition(float(v), float(t), t_nom) for v, t in spec["points"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad gammas.points: {exc}") from exc
    dm = DelayModel.build(cfg.profile, cfg.ensemble, cfg.alphabet, cfg.acc_bits)
    step = spec["t_step"]
    n_v = int(round((spec["v_max"] - spec["v_min"]) / spec["v_step"]))
    out = []
    for i in range(n_v + 1):
        v = round(spec["v_min"] + i * spec["v_step"], 4)
        if v <= cfg.profile.v_th:
            continue
        t_safe = math.ceil(dm.worst_case(v) / step - 1e-9) * step
        t = t_nom - spec["t_below_nominal"]
        k = 0
        while True:
            tk = round(t + k * step, 4)
            if tk > t_safe + 1e-9:
                break
            if tk > 0:
                out.append(OperatingCondition(v, tk, t_nom))
            k += 1
        if not out or out[-1].v_dd != v:
            out.append(OperatingCondition(v, round(t_safe, 4), t_nom))
    return out


def model_name(g: OperatingCondition) -> str:
    return f"model_v{g.v_dd:.2f}_t{g.t_clk:.2f}.json"


def gamma_seed(seed: int, g: OperatingCondition) -> int:
    ss = np.random.SeedSequence([seed, int(round(g.v_dd * 1e4)), int(round(g.t_clk * 1e4))])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def pe_grid(cfg: RunConfig) -> np.ndarray:
    c = cfg.char
    if c["pe_grid"] is not None:
        return np.asarray(c["pe_grid"], dtype=float)
    return default_pe_grid(cfg.pe0, c["per_decade"], c["pe_low"])


def characterize_one(cfg: RunConfig, g: OperatingCondition, workers: int) -> DeviationModel:
    c = cfg.char
    return characterize(
        g,
        pe_grid(cfg),
        c["trials_per_point"],
        cfg.ensemble,
        cfg.alphabet,
        cfg.profile,
        seed=gamma_seed(cfg.seed, g),
        alpha=cfg.alpha,
        offset=cfg.offset,
        streams=c["streams"],
        workers=workers,
        warmup_cycles=c["warmup_cycles"],
        interleave=c["interleave"],
    )


def load_models(cfg: RunConfig, out: Path, gammas, workers: int, create: bool = True) -> dict:
    mdir = out / "models"
    models = {}
    for g in gammas:
        path = mdir / model_name(g)
        if path.is_file():
            models[g] = DeviationModel.load(path)
        elif create:
            log.info("characterizing %s", g.label)
            mdir.mkdir(parents=True, exist_ok=True)
            models[g] = characterize_one(cfg, g, workers)
            models[g].save(path)
        else:
            raise ConfigError(f"missing model file {path}")
    return models


def _gamma_list(cfg: RunConfig, entries):
    t_nom = t_nominal(cfg)
    out = []
    for e in entries:
        if e is None or e == "reliable":
            out.append(None)
        else:
            out.append(OperatingCondition(float(e[0]), float(e[1]), t_nom))
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands ----------------------------------------------------------------------


def cmd_characterize(cfg: RunConfig, out: Path, workers: int) -> int:
    gammas = gamma_grid(cfg)
    (out / "models").mkdir(parents=True, exist_ok=True)
    rows = []
    total = 0
    for i, g in enumerate(gammas):
        log.info("[%d/%d] characterizing %s", i + 1, len(gammas), g.label)
        m = characterize_one(cfg, g, workers)
        m.save(out / "models" / model_name(g))
        events = int(sum(m.meta["deviation_events"]))
        total += events
        rows.append(
            {
                "gamma": g.to_dict(),
                "file": f"models/{model_name(g)}",
                "violation_free": m.meta["violation_free"],
                "identity": m.is_identity,
                "deviation_events": events,
                "trials": int(m.meta["trials_per_point"]) * len(m.pe_grid),
                "max_p_nz": max(1.0 - float(np.trace(m.counts[k].sum(axis=0))) / float(m.counts[k].sum()) for k in range(len(m.pe_grid))),
                "energy_min": float(m.energy.min()),
                "energy_max": float(m.energy.max()),
            }
        )
    summary = {**cfg.header(), "t_clk_nom": t_nominal(cfg), "pe_grid": pe_grid(cfg).tolist(), "models": rows, "deviation_events": total}
    _write(out / "characterize_summary.json", _dump(summary))
    print(f"characterized {len(gammas)} operating conditions, {total} deviation events")
    return EXIT_OK


def cmd_curve(cfg: RunConfig, out: Path, workers: int) -> int:
    c = cfg.curve
    pes = c["pe0"] if c["pe0"] is not None else [cfg.pe0]
    gammas = _gamma_list(cfg, c["gammas"] if c["gammas"] is not None else [None])
    models = load_models(cfg, out, [g for g in gammas if g is not None], workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pe0", "gamma", "iteration", "p_e", "energy", "cum_energy", "cum_latency", "status"])
    flagged = 0
    for pe0 in pes:
        pi0 = cfg.de_config.prior(float(pe0))
        for g in gammas:
            model = None if g is None else models[g]
            tr = run_de(pi0, cfg.de_config, model, max_iters=c["max_iters"], p_res=c["p_res"], cycles_per_iteration=cfg.objective["cycles_per_iteration"])
            status = "converged" if tr.converged else ("diverged" if tr.diverged else "max_iters")
            if not tr.converged:
                flagged += 1
                log.warning("no convergence at pe0=%g, %s", pe0, "reliable" if g is None else g.label)
            e_cum = t_cum = 0.0
            for t, pe in enumerate(tr.pe):
                e = tr.energy[t - 1] if t else 0.0
                e_cum += e
                t_cum += tr.latency[t - 1] if t else 0.0
                w.writerow([repr(float(pe0)), "reliable" if g is None else g.label, t, repr(float(pe)), repr(e), repr(e_cum), repr(t_cum), status])
    _write(out / "curve.csv", buf.getvalue())
    print(f"wrote {len(pes) * len(gammas)} curves, {flagged} non-convergent")
    return EXIT_OK


def cmd_threshold(cfg: RunConfig, out: Path, workers: int) -> int:
    c = cfg.threshold
    gammas = _gamma_list(cfg, c["gammas"] if c["gammas"] is not None else [None])
    models = load_models(cfg, out, [g for g in gammas if g is not None], workers)
    rows = []
    for g in gammas:
        th = threshold_search(cfg.de_config, None if g is None else models[g], p_res=c["p_res"], max_iters=c["max_iters"], resolution=c["resolution"])
        rows.append({"gamma": "reliable" if g is None else g.label, "threshold": th})
    rep = {**cfg.header(), "acc_bits": cfg.acc_bits, "p_res": c["p_res"], "resolution": c["resolution"], "thresholds": rows}
    _write(out / "threshold.json", _dump(rep))
    for r in rows:
        print(f"{r['gamma']}: threshold {r['threshold']:.4f}")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out: Path, workers: int) -> int:
    o = cfg.objective
    gammas = gamma_grid(cfg)
    models = load_models(cfg, out, gammas, workers)
    try:
        objective = Objective(o["kind"], o["p_res"], cfg.pe0, o["t_dec_max"])
        trellis = TrellisConfig(tuple(gammas), o["per_decade"], o["switch_penalty"], o["max_depth"], edp_pruning=o["edp_pruning"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    system = DESystem(cfg.de_config, models, cfg.de_config.prior(cfg.pe0), o["cycles_per_iteration"])
    result = optimize(system, trellis, objective)
    baselines = single_gamma_runs(system, gammas, objective)
    rep = schedule_report(result, baselines, v_nom=cfg.profile.v_nom, **cfg.header(), t_clk_nom=t_nominal(cfg))
    if result.feasible:
        rep["verification"] = verify_schedule(system, result)
    _write(out / "schedule.json", report_json(rep) + "\n")
    if not result.feasible:
        print("no feasible schedule for the objective")
        return EXIT_INFEASIBLE
    base = rep.get("baseline")
    cost = "EDP" if objective.kind == "edp" else "energy"
    print(f"schedule {rep['schedule']}: energy {result.energy:.4g}, latency {result.latency:.4g}, {cost} {result.cost:.4g}")
    if base:
        print(f"baseline {base['gamma']}: improvement {100 * base['improvement']:.1f}%")
    return EXIT_OK


def _schedule_models(cfg: RunConfig, out: Path, workers: int):
    path = cfg.simulate["schedule"]
    if not path:
        return None
    rep = json.loads(cfg.resolve(path).read_text())
    if not rep.get("feasible"):
        raise ConfigError("the schedule report holds no feasible schedule")
    t_nom = rep.get("t_clk_nom", t_nominal(cfg))
    conds = []
    for run in rep["runs"]:
        conds += [OperatingCondition(run["v_dd"], run["t_clk"], t_nom)] * run["count"]
    models = load_models(cfg, out, sorted(set(conds), key=lambda g: (g.v_dd, g.t_clk)), workers)
    return [models[g] for g in conds]


class ScheduleInjector:
    """Replaces VN-to-CN messages by draws from the deviation table of the scheduled
    operating condition, evaluated at the DE error rate entering that iteration."""

    def __init__(self, models, pe_in, codeword_signs, q, rng):
        self.tables = [m.table_at(p) for m, p in zip(models, pe_in)]
        self.cdfs = [np.cumsum(t, axis=1) for t in self.tables]
        self.x = codeword_signs
        self.q = q
        self.rng = rng

    def __call__(self, iteration, layer, vns, mu):
        if iteration > len(self.cdfs):
            return mu
        cdf = self.cdfs[iteration - 1]
        x = self.x[vns]
        rows = x * mu + self.q
        u = 1.0 - self.rng.random(mu.shape)
        idx = np.minimum((cdf[rows] < u[..., None]).sum(axis=-1), 2 * self.q)
        return x * (idx - self.q)


def _simulate_point(args):
    cfg, graph, sampler_state, models, k, pe0 = args
    s = cfg.simulate
    sampler = sampler_state
    dec = DecoderConfig(cfg.offset, s["max_iterations"], cfg.alphabet, tie_break_seed=cfg.seed, total_bits=s["total_bits"], faults_persist=bool(s["faults_persist"]))
    channel = BiawgnChannel(pe_to_sigma(pe0), cfg.alpha)
    pe_in = None
    if models is not None:
        tr = run_de(cfg.de_config.prior(pe0), cfg.de_config, models, cycles_per_iteration=1.0)
        pe_in = [float(p) for p in tr.pe[:-1]]
    bit_err = frame_err = 0
    for f in range(s["frames"]):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(k, f)))
        if sampler is None:
            x = np.ones(graph.n, dtype=np.int64)
        else:
            x = 1 - 2 * sampler.sample(rng).astype(np.int64)
        beliefs = sample_channel_beliefs(x, channel, cfg.alphabet, rng)
        inj = None if models is None else ScheduleInjector(models, pe_in, x, cfg.alphabet.q, rng)
        res = decode(beliefs, graph, dec, injector=inj, codeword=x)
        errs = int(np.count_nonzero(res.decisions != x))
        bit_err += errs
        frame_err += errs > 0
    return bit_err, frame_err


def _wilson(k: int, n: int):
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def cmd_simulate(cfg: RunConfig, out: Path, workers: int) -> int:
    s = cfg.simulate
    if s["code_file"]:
        graph = load_graph(cfg.resolve(s["code_file"]))
    else:
        graph = build_regular_code(s["n"], cfg.ensemble, s["code_seed"])
    sampler = CodewordSampler(graph) if s["mode"] == "random" else None
    models = _schedule_models(cfg, out, workers)
    pes = s["pe0"] if s["pe0"] is not None else [cfg.pe0]
    tasks = [(cfg, graph, sampler, models, k, float(p)) for k, p in enumerate(pes)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_point, tasks))
    else:
        results = [_simulate_point(t) for t in tasks]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pe0", "frames", "bits", "bit_errors", "ber", "ber_lo", "ber_hi", "frame_errors", "fer", "fer_lo", "fer_hi", "mode", "schedule"])
    nbits = graph.n * s["frames"]
    for p, (be, fe) in zip(pes, results):
        w.writerow([repr(float(p)), s["frames"], nbits, be, repr(be / nbits), *map(repr, _wilson(be, nbits)), fe, repr(fe / s["frames"]), *map(repr, _wilson(fe, s["frames"])), s["mode"], s["schedule"] or ""])
    _write(out / "simulate.csv", buf.getvalue())
    print(f"simulated {len(pes)} channel points, {s['frames']} frames each")
    return EXIT_OK


def verify_model(m: DeviationModel, cfg: RunConfig) -> dict:
    v = cfg.verify
    issues = []
    S = cfg.alphabet.size
    if m.tables.shape[1:] != (S, S):
        issues.append(f"table shape {m.tables.shape[1:]} does not match the {cfg.alphabet.bit_width}-bit alphabet")
    if not np.all(np.isfinite(m.tables)) or (m.tables < 0).any():
        issues.append("negative or non-finite table entries")
    row_err = float(np.abs(m.tables.sum(axis=2) - 1.0).max()) if m.tables.size else 0.0
    if row_err > 1e-9:
        issues.append(f"rows do not sum to one (max error {row_err:.3g})")
    if not np.all(np.isfinite(m.energy)) or (m.energy < 0).any():
        issues.append("negative or non-finite energies")
    ws = []
    if m.counts is not None:
        for g in range(len(m.pe_grid)):
            r = check_weak_symmetry(m.counts[g, 0], m.counts[g, 1], v["ws_tolerance"], v["min_count"], v["z"])
            ws.append(None if np.isnan(r.max_tv) else r.max_tv)
            if not r.passed:
                issues.append(f"weak symmetry violated at p_e={m.pe_grid[g]:.4g} (max TV {r.max_tv:.4f})")
    if m.meta.get("violation_free") and not m.is_identity:
        issues.append("violation-free operating condition with a non-identity table")
    return {"gamma": m.gamma.label, "passed": not issues, "issues": issues, "max_row_error": row_err, "ws_max_tv": ws}


def cmd_verify(cfg: RunConfig, out: Path, workers: int) -> int:
    files = sorted((out / "models").glob("model_*.json"))
    if not files:
        raise ConfigError(f"no model files under {out / 'models'}")
    rows = []
    for f in files:
        try:
            m = DeviationModel.load(f)
        except (ValueError, KeyError, TypeError) as exc:
            rows.append({"file": f.name, "passed": False, "issues": [f"unreadable: {exc}"]})
            continue
        rows.append({"file": f.name, **verify_model(m, cfg)})
    ok = all(r["passed"] for r in rows)
    _write(out / "verify.json", _dump({**cfg.header(), "passed": ok, "models": rows}))
    bad = [r["file"] for r in rows if not r["passed"]]
    print(f"verified {len(rows)} models: " + ("all passed" if ok else f"{len(bad)} failed ({', '.join(bad)})"))
    return EXIT_OK if ok else EXIT_INVALID


COMMANDS = {
    "characterize": cmd_characterize,
    "curve": cmd_curve,
    "threshold": cmd_threshold,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsldpc", description="Quasi-synchronous LDPC decoder analysis and schedule optimization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
