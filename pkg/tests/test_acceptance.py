"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line; the full list is repeated in the session
summary by ``conftest.py``.
"""

import itertools
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from qsldpc.channel_code import (
    BiawgnChannel,
    CodewordSampler,
    QuantizedAlphabet,
    RegularEnsemble,
    build_regular_code,
    channel_prior_pmf,
    one_d_normal_pmf,
    pe_to_sigma,
    pmf_error_probability,
    sigma_to_pe,
)
from qsldpc.cli import main, model_name
from qsldpc.density_evolution import (
    DEConfig,
    apply_offset,
    cn_min_distribution,
    mirror,
    project,
    run_de,
    threshold_search,
    vn_convolve,
)
from qsldpc.deviation import DeviationModel, characterize, nonzero_dev_prob
from qsldpc.gearshift import EDP, ENERGY, DESystem, Objective, TrellisConfig, exhaustive, optimize, verify_schedule
from qsldpc.oms_decoder import cn_update_rows, min12_naive, min12_tree
from qsldpc.timing_circuit import OperatingCondition, TestCircuit

from acceptance_log import criterion
from micro_bench import GAMMAS, micro_case
from reference import random_rational_pmf

ROOT = Path(__file__).resolve().parents[1]
A6 = QuantizedAlphabet(6)


def q_function(z):
    return 0.5 * math.erfc(z / math.sqrt(2))


# 1 -------------------------------------------------------------------------------


THRESHOLD_CASES = [
    ((3, 6), 4.0, 1, 0.12, 0.01),
    ((4, 8), 2.0, 1, 0.11, 0.01),
    ((3, 30), 4.0, 1, 0.019, 0.003),
    ((4, 40), 4.0, 2, 0.019, 0.003),
]


def test_01_thresholds():
    with criterion(1, "fault-free DE thresholds within tolerance, < 2 min each"):
        for (dv, dc), alpha, offset, target, tol in THRESHOLD_CASES:
            start = time.perf_counter()
            th = threshold_search(DEConfig(RegularEnsemble(dv, dc), alpha, offset))
            elapsed = time.perf_counter() - start
            print(f"  ({dv},{dc}) alpha={alpha} C={offset}: threshold {th:.4f} in {elapsed:.1f} s")
            assert abs(th - target) <= tol, (dv, dc, th)
            assert elapsed < 120


# 2 -------------------------------------------------------------------------------


def test_02_saturation_floor():
    with criterion(2, "(3,30) fault-free DE stalls between 1e-9 and 1e-7"):
        cfg = DEConfig(RegularEnsemble(3, 30), 4.0, 1)
        tr = run_de(cfg.prior(0.015), cfg, max_iters=500, p_res=0.0)
        floor = float(tr.pe[-1])
        print(f"  floor {floor:.3e} after {tr.iterations} iterations")
        assert tr.diverged and not tr.converged  # stopped for lack of progress
        assert 1e-9 <= floor <= 1e-7
        tail = np.asarray(tr.pe[-20:], dtype=float)
        assert tail.max() / tail.min() < 1 + 1e-6


# 3 -------------------------------------------------------------------------------


def test_03_channel_math():
    with criterion(3, "channel round trip <= 1e-10 and prior projection"):
        pes = np.linspace(0.01, 0.45, 2001)
        err = max(abs(sigma_to_pe(pe_to_sigma(float(p))) - p) for p in pes)
        assert err <= 1e-10, err
        for pe0, alpha in ((0.09, 4.0), (0.015, 4.0), (0.11, 2.0), (0.2, 1.0)):
            ch = BiawgnChannel(pe_to_sigma(pe0), alpha)
            pmf = channel_prior_pmf(ch, A6)
            s = ch.sigma
            half = 0.5 * s**2 / alpha
            zero_bin = q_function((1 - half) / s) - q_function((1 + half) / s)
            # Pr(belief < 0) + Pr(belief = 0) / 2, from the Gaussian directly
            expected = q_function((1 + half) / s) + 0.5 * zero_bin
            assert pmf_error_probability(pmf) == pytest.approx(expected, abs=1e-12)
            assert abs(pmf_error_probability(pmf) - pe0) <= 0.5 * zero_bin + 1e-15


# 4 -------------------------------------------------------------------------------


def test_04_min12_tree_equals_naive_scan():
    with criterion(4, "min1/min2 tree equals naive scan over 4-bit magnitudes"):
        rng = np.random.default_rng(4)
        for d_c in (3, 4, 5, 6):
            # project the exhaustive cost from a timed sample
            probe = rng.integers(0, 16, (2000, d_c)).tolist()
            start = time.perf_counter()
            for m in probe:
                min12_tree(m)
                min12_naive(m)
            projected = (time.perf_counter() - start) / len(probe) * 16**d_c
            if projected <= 60:
                cases = itertools.product(range(16), repeat=d_c)
                mode = "exhaustive"
            else:
                cases = rng.integers(0, 16, (10**6, d_c)).tolist()
                mode = "sampled 1e6"
            count = 0
            for m in cases:
                assert min12_tree(m) == min12_naive(m), m
                count += 1
            print(f"  d_c={d_c}: {mode}, {count} cases (projected exhaustive {projected:.0f} s)")


# 5 -------------------------------------------------------------------------------


def _lemma2_error(graph, x, prior_w, table, weakly_symmetric=True):
    """Exact layer-1 message error probability of a 2-layer toy decoder.

    Layer-0 messages (the channel beliefs) pass through the deviation channel,
    every outcome is enumerated, and the layer-1 messages go through the same
    channel analytically.  All weights are integers.
    """
    q = 3
    n = graph.n
    support = [v for v in range(-q, q + 1) if prior_w[v + q]]
    b = np.array(list(itertools.product(support, repeat=n)), dtype=np.int64)  # x-frame beliefs
    w_b = np.prod(np.asarray(prior_w, dtype=np.int64)[b + q], axis=1)
    y = b * x[None, :]

    # phi(mu | nu, x) as (outcome, weight) pairs, two per row
    def row(nu, xv):
        if xv == 1 or not weakly_symmetric:
            r = table[nu + q]
            out = [(u - q, r[u]) for u in range(2 * q + 1) if r[u]]
        else:
            r = table[-nu + q]
            out = [(-(u - q), r[u]) for u in range(2 * q + 1) if r[u]]
        out += [(0, 0)] * (2 - len(out))
        return out

    outcome = np.zeros((2, 2 * q + 1, 2), dtype=np.int64)
    weight = np.zeros((2, 2 * q + 1, 2), dtype=np.int64)
    for xi, xv in enumerate((1, -1)):
        for nu in range(-q, q + 1):
            for k, (u, w) in enumerate(row(nu, xv)):
                outcome[xi, nu + q, k] = u
                weight[xi, nu + q, k] = w
    xi_v = np.where(x == 1, 0, 1)

    pats = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    rows0 = graph.cn_neighbors[graph.layer_rows(0)]  # each VN exactly once
    total = 0
    for pat in pats:
        mu = outcome[xi_v[None, :], y + q, pat[None, :]]
        w = w_b * np.prod(weight[xi_v[None, :], y + q, pat[None, :]], axis=1)
        keep = w > 0
        if not keep.any():
            continue
        mu, w, yy = mu[keep], w[keep], y[keep]
        lam = np.zeros_like(yy)
        for r in rows0:
            lam[:, r] = cn_update_rows(mu[:, r], 1)
        nu1 = np.clip(yy + lam, -q, q)
        # layer-1 deviation, error counted as 2 for a wrong sign and 1 for zero
        err = np.zeros_like(nu1)
        for k in range(2):
            u = outcome[xi_v[None, :], nu1 + q, k]
            wk = weight[xi_v[None, :], nu1 + q, k]
            xu = u * x[None, :]
            err += wk * np.where(xu < 0, 2, np.where(xu == 0, 1, 0))
        total += int(np.dot(w, err.sum(axis=1)))
    norm = int(np.sum(prior_w)) ** n * 4**n * 4 * 2 * n
    return Fraction(total, norm)


def test_05_codeword_independence():
    with criterion(5, "message error probability independent of the codeword (exact)"):
        graph = build_regular_code(6, RegularEnsemble(2, 3), seed=1, avoid_4cycles=False)
        assert graph.num_layers == 2
        prior_w = [0, 1, 0, 2, 5, 0, 8]  # values -3..3, sums to 16
        rng = np.random.default_rng(5)
        table = np.zeros((7, 7), dtype=np.int64)
        for nu in range(7):
            other = int(rng.choice([u for u in range(7) if u != nu]))
            keep = int(rng.integers(1, 4))
            table[nu, nu] = keep
            table[nu, other] = 4 - keep
        assert not np.array_equal(table, table[::-1, ::-1])  # not symmetric by itself
        sampler = CodewordSampler(graph)
        ones = np.ones(graph.n, dtype=np.int64)
        ref = _lemma2_error(graph, ones, prior_w, table)
        words = [1 - 2 * sampler.sample(rng).astype(np.int64) for _ in range(5)]
        assert any((w == -1).any() for w in words)
        for w in words:
            assert _lemma2_error(graph, w, prior_w, table) == ref, w
        print(f"  error probability {ref} = {float(ref):.6f} for all-one and 5 random codewords")
        # control: a table that ignores the bit breaks the property
        nontrivial = next(w for w in words if (w == -1).any())
        assert _lemma2_error(graph, nontrivial, prior_w, table, weakly_symmetric=False) != _lemma2_error(graph, ones, prior_w, table, weakly_symmetric=False)


# 6 -------------------------------------------------------------------------------


def test_06_mirror_equivariance():
    with criterion(6, "pmf mirror equivariance of the DE steps (rational mode)"):
        rng = np.random.default_rng(6)
        for _ in range(10):
            a = random_rational_pmf(rng, 3)
            b = random_rational_pmf(rng, 3)
            for d_c in range(2, 7):
                out = cn_min_distribution(mirror(a), d_c)
                # an odd number of mirrored inputs flips the output sign
                expect = mirror(cn_min_distribution(a, d_c)) if (d_c - 1) % 2 else cn_min_distribution(a, d_c)
                assert list(out) == list(expect)
            for c in range(4):
                assert list(apply_offset(mirror(a), c)) == list(mirror(apply_offset(a, c)))
            for d_v in (2, 3, 4):
                for limit in (3, 7):
                    lhs = vn_convolve(mirror(a), mirror(b), d_v, 3, limit)
                    assert list(lhs) == list(mirror(vn_convolve(a, b, d_v, 3, limit)))


# 7 -------------------------------------------------------------------------------


def test_07_identity_reduction():
    with criterion(7, "violation-free condition gives identity tables and fault-free DE"):
        ens = RegularEnsemble(3, 6)
        g = OperatingCondition(1.0, 2.0, 2.0)
        grid = [1e-4, 1e-3, 1e-2, 0.05, 0.1]
        m = characterize(g, grid, 4000, ens, A6, seed=7, streams=16)
        assert m.meta["violation_free"] and m.is_identity
        assert m.meta["deviation_events"] == [0] * len(grid)
        assert all(nonzero_dev_prob(m, k, nu, x) == 0.0 for k in range(len(grid)) for nu in range(-31, 32) for x in (1, -1))
        cfg = DEConfig(ens, 4.0, 1)
        a = run_de(cfg.prior(0.09), cfg, None, max_iters=40, p_res=1e-8)
        b = run_de(cfg.prior(0.09), cfg, m, max_iters=40, p_res=1e-8)
        assert [float(v) for v in a.pe] == [float(v) for v in b.pe]


# 8 -------------------------------------------------------------------------------


def _mc_error_rate(circuit, gamma, pe, alpha, trees, seed, batch=64):
    """Independent Monte-Carlo of the test circuit: the error rate of faulty outputs."""
    rng = np.random.default_rng(seed)
    pmf = one_d_normal_pmf(pe, alpha, circuit.alphabet)
    q = circuit.q
    values = np.arange(-q, q + 1)
    per = trees // batch
    layers, k = circuit.layers, circuit.ensemble.d_c - 1
    state = None
    errors = 0.0
    counted = 0
    chunk = 250
    warm = 30
    sizes = [warm] + [min(chunk, per - s) for s in range(0, per, chunk)]
    for i, n in enumerate(sizes):
        shape = (batch, n, layers, k)
        mu = rng.choice(values, size=shape, p=pmf)
        lam = rng.choice(values, size=shape, p=pmf)
        x = rng.choice([-1, 1], size=shape)
        x_head = np.prod(x, axis=-1)[:, :, 0]  # bit that satisfies the first check
        for layer in range(1, layers):
            # make every check parity-consistent with the same head bit
            x[:, :, layer, -1] *= np.prod(x[:, :, layer], axis=-1) * x_head
        jit = rng.uniform(-1, 1, (batch, n, layers, circuit.jitter_bits))
        out, _, state = circuit.run(x * (mu + lam), x * lam, gamma, jit, state)
        if i == 0:
            continue  # warm-up trees fill the pipeline registers
        xo = x_head * out
        errors += np.count_nonzero(xo < 0) + 0.5 * np.count_nonzero(xo == 0)
        counted += xo.size
    assert counted == per * batch
    return errors / (per * batch)


def test_08_monte_carlo_matches_de():
    with criterion(8, "one faulty DE iteration matches circuit Monte-Carlo within 4 sigma"):
        ens = RegularEnsemble(3, 6)
        gamma = OperatingCondition(0.75, 2.0, 2.0)
        pe, alpha, trials = 0.05, 4.0, 10**6
        model = characterize(gamma, [pe], trials, ens, A6, seed=8, streams=64, alpha=alpha)
        assert not model.meta["violation_free"]
        pi = one_d_normal_pmf(pe, alpha, A6)
        cn = apply_offset(cn_min_distribution(pi, ens.d_c), 1)
        delta = np.zeros(A6.size)
        delta[A6.q] = 1.0
        ideal = vn_convolve(delta, cn, ens.d_v, A6.q)
        predicted = float(project(ideal @ model.table_at(pe)))
        circuit = TestCircuit(ens, A6, 1)
        empirical = _mc_error_rate(circuit, gamma, pe, alpha, trials, seed=88)
        sigma = math.sqrt(predicted * (1 - predicted) / trials)
        print(f"  DE {predicted:.5f}, Monte-Carlo {empirical:.5f}, ideal {float(project(ideal)):.5f}, sigma {sigma:.2e}")
        assert abs(predicted - float(project(ideal))) > 10 * sigma  # the deviations matter here
        assert abs(predicted - empirical) <= 4 * sigma


# 9 -------------------------------------------------------------------------------


def test_09_gearshift_matches_exhaustive():
    with criterion(9, "Gear-Shift equals exhaustive optimum; DE calls bounded per level"):
        for trial in range(8):
            for kind, tmax in ((EDP, None), (ENERGY, 5.0)):
                system, pe0, p_res = micro_case(trial)
                obj = Objective(kind, p_res, pe0, tmax)
                cfg = TrellisConfig(GAMMAS, max_depth=6)
                got = optimize(system, cfg, obj)
                for calls, occ in zip(got.stats.de_calls, got.stats.occupied_states):
                    assert calls <= len(GAMMAS) * occ
                ref = exhaustive(system, cfg, obj, 6)
                assert got.feasible == ref.feasible
                if ref.feasible:
                    assert got.schedule == ref.schedule, (trial, kind)
                    assert got.cost == pytest.approx(ref.cost, abs=1e-12)


# 10, 11 --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def demo_330(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo_3_30")
    cfg = str(ROOT / "configs" / "demo_3_30.json")
    codes = [main([cmd, "--config", cfg, "--out", str(out)]) for cmd in ("characterize", "optimize")]
    return out, cfg, codes


def _demo_system(out):
    rep = json.loads((out / "schedule.json").read_text())
    summary = json.loads((out / "characterize_summary.json").read_text())
    models = {}
    for row in summary["models"]:
        m = DeviationModel.load(out / row["file"])
        models[m.gamma] = m
    cfg = DEConfig(RegularEnsemble(3, 30), 4.0, 1)
    return rep, DESystem(cfg, models, cfg.prior(rep["objective"]["pe0"]))


def test_10_schedules_are_achievable(demo_330):
    with criterion(10, "every reported schedule reaches p_res within its latency bound"):
        out, _, codes = demo_330
        assert codes == [0, 0]
        checked = 0
        for trial in range(6):
            for kind, tmax in ((EDP, None), (ENERGY, 5.0)):
                system, pe0, p_res = micro_case(trial)
                res = optimize(system, TrellisConfig(GAMMAS, max_depth=6), Objective(kind, p_res, pe0, tmax))
                if res.feasible:
                    chk = verify_schedule(system, res)
                    assert chk["reaches_p_res"] and chk["latency_ok"]
                    checked += 1
        rep, system = _demo_system(out)
        conds = [OperatingCondition(r["v_dd"], r["t_clk"], rep["t_clk_nom"]) for r in rep["runs"] for _ in range(r["count"])]
        tr = run_de(system.pi0, system.de_config, [system.models[g] for g in conds])
        assert tr.pe[-1] <= rep["objective"]["p_res"]
        assert tr.total_energy == pytest.approx(rep["energy"], rel=1e-12)
        assert tr.total_latency == pytest.approx(rep["latency"], rel=1e-12)
        checked += 1
        # a latency-bounded energy schedule on the same models
        bound = rep["baseline"]["latency"]
        obj = Objective(ENERGY, rep["objective"]["p_res"], rep["objective"]["pe0"], bound)
        res = optimize(system, TrellisConfig(tuple(system.models)), obj)
        assert res.feasible
        chk = verify_schedule(system, res)
        assert chk["reaches_p_res"] and chk["latency_ok"] and res.latency <= bound + 1e-12
        checked += 1
        print(f"  {checked} schedules re-run through DE")


def test_11_quasi_synchronous_beats_nominal(demo_330):
    with criterion(11, "(3,30) schedule beats the nominal baseline EDP with the expected shape"):
        out, _, codes = demo_330
        assert codes == [0, 0]
        rep = json.loads((out / "schedule.json").read_text())
        base = rep["baseline"]
        print(f"  schedule {rep['schedule']}: EDP {rep['edp']:.1f} vs baseline {base['gamma']} EDP {base['edp']:.1f} ({100 * base['improvement']:.1f}% lower)")
        assert rep["feasible"] and rep["edp"] < base["edp"]
        runs = rep["runs"]
        first, last = runs[0], runs[-1]
        assert first["v_dd"] < 1.0  # early iterations run below the nominal supply
        assert last["v_dd"] > first["v_dd"] or last["t_clk"] < first["t_clk"]


# 12 ------------------------------------------------------------------------------


def test_12_cli_determinism(tmp_path):
    with criterion(12, "CLI outputs byte-identical across reruns and worker counts"):
        cfg = {
            "schema_version": 1,
            "seed": 12,
            "pe0": 0.06,
            "gammas": {"points": [[1.0, 2.0], [0.8, 2.3], [0.85, 1.9]]},
            "characterize": {"pe_grid": [1e-3, 1e-2, 0.1], "trials_per_point": 320, "streams": 8, "warmup_cycles": 10},
            "objective": {"p_res": 1e-6, "max_depth": 40},
            "curve": {"pe0": [0.06, 0.1], "gammas": ["reliable", [0.8, 2.3]]},
            "threshold": {"gammas": ["reliable", [0.8, 2.3]], "resolution": 1e-3},
            "simulate": {"n": 240, "pe0": [0.06, 0.09], "frames": 8, "max_iterations": 10, "mode": "random"},
        }
        runs = []
        for label, workers in (("a", 1), ("b", 1), ("c", 2)):
            out = tmp_path / label
            out.mkdir()
            (out / "cfg.json").write_text(json.dumps(cfg))
            for cmd in ("characterize", "curve", "threshold", "optimize", "verify"):
                assert main([cmd, "--config", str(out / "cfg.json"), "--out", str(out), "--workers", str(workers)]) == 0, cmd
            # simulate the optimized schedule; the path is relative to the config
            (out / "sim.json").write_text(json.dumps({**cfg, "simulate": {**cfg["simulate"], "schedule": "schedule.json"}}))
            assert main(["simulate", "--config", str(out / "sim.json"), "--out", str(out), "--workers", str(workers)]) == 0
            runs.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
        assert len(runs[0]) >= 11
        for other in runs[1:]:
            assert other.keys() == runs[0].keys()
            for name, data in runs[0].items():
                assert other[name] == data, name
        print(f"  {len(runs[0])} files identical over 3 runs (workers 1, 1, 2)")
