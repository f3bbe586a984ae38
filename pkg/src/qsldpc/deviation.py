"""Deviation models: conditional laws phi(mu | nu, x) of faulty tree outputs.

A model holds, for one operating condition, a grid of error-rate points with
one ``(2Q+1) x (2Q+1)`` row-stochastic table each (row ``nu``, column ``mu``,
stored for ``x = +1`` after folding the two codeword signs) and the mean
energy per tree evaluation at each point.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .channel_code import QuantizedAlphabet, RegularEnsemble, one_d_normal_pmf
from .timing_circuit import DEFAULT_PROFILE, CircuitProfile, OperatingCondition, TestCircuit

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHUNK_TREES = 256


def default_pe_grid(pe0: float = 0.0, per_decade: int = 8, low: float = 1e-4) -> np.ndarray:
    """Log grid from ``low`` up to ``max(0.1, 1.2 * pe0)``, ``per_decade`` points per decade."""
    high = max(0.1, 1.2 * pe0)
    k_hi = math.ceil(per_decade * math.log10(high / low) - 1e-9)
    grid = low * 10.0 ** (np.arange(k_hi + 1) / per_decade)
    grid[-1] = min(grid[-1], 0.49)
    return grid


@dataclass
class DeviationModel:
    gamma: OperatingCondition
    pe_grid: np.ndarray
    tables: np.ndarray  # (G, S, S)
    energy: np.ndarray  # (G,) pJ per tree evaluation
    counts: np.ndarray | None = None  # (G, 2, S, S) raw tallies, x = +1 then x = -1
    flagged: np.ndarray | None = None  # (G, S) rows filled with the identity
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pe_grid = np.asarray(self.pe_grid, dtype=float)
        self.tables = np.asarray(self.tables, dtype=float)
        self.energy = np.asarray(self.energy, dtype=float)
        if self.pe_grid.ndim != 1 or self.pe_grid.size == 0:
            raise ValueError("pe_grid must be a non-empty 1-D array")
        if np.any(np.diff(self.pe_grid) <= 0):
            raise ValueError("pe_grid must be strictly ascending")
        if self.tables.shape[0] != self.pe_grid.size or self.energy.shape != self.pe_grid.shape:
            raise ValueError("tables/energy do not match the grid")
        if self.flagged is None:
            self.flagged = np.zeros(self.tables.shape[:2], dtype=bool)
        self._warned = False

    @property
    def q(self) -> int:
        return (self.tables.shape[1] - 1) // 2

    @property
    def p_low(self) -> float:
        return float(self.pe_grid[0])

    @property
    def p_high(self) -> float:
        return float(self.pe_grid[-1])

    @cached_property
    def is_identity(self) -> bool:
        return bool(np.all(self.tables == np.eye(self.tables.shape[1])[None]))

    @classmethod
    def identity(cls, gamma: OperatingCondition, alphabet: QuantizedAlphabet, pe_grid=(0.5,), energy=0.0, **meta):
        grid = np.asarray(pe_grid, dtype=float)
        eye = np.eye(alphabet.size)
        tables = np.repeat(eye[None], grid.size, axis=0)
        return cls(gamma, grid, tables, np.broadcast_to(np.asarray(energy, dtype=float), grid.shape).copy(), meta=dict(meta))

    def _bracket(self, pe: float):
        if pe < 0:
            raise ValueError("p_e must be non-negative")
        g = self.pe_grid
        if pe <= g[0]:
            return 0, 0, 0.0
        if pe >= g[-1]:
            if pe > g[-1] and not self._warned:
                self._warned = True
                log.warning("p_e=%g above the characterized range (p_H=%g) of %s; clamping (reported once)", pe, g[-1], self.gamma.label)
            return g.size - 1, g.size - 1, 0.0
        hi = int(np.searchsorted(g, pe, side="left"))
        if g[hi] == pe:
            return hi, hi, 0.0
        lo = hi - 1
        return lo, hi, (pe - g[lo]) / (g[hi] - g[lo])

    def table_at(self, pe: float) -> np.ndarray:
        lo, hi, w = self._bracket(float(pe))
        if lo == hi:
            return self.tables[lo]
        t = (1 - w) * self.tables[lo] + w * self.tables[hi]
        return t / t.sum(axis=1, keepdims=True)

    def energy_at(self, pe: float) -> float:
        lo, hi, w = self._bracket(float(pe))
        if lo == hi:
            return float(self.energy[lo])
        return float((1 - w) * self.energy[lo] + w * self.energy[hi])

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "gamma": self.gamma.to_dict(),
            "meta": self.meta,
            "pe_grid": self.pe_grid.tolist(),
            "energy": self.energy.tolist(),
            "tables": self.tables.tolist(),
            "flagged": [np.flatnonzero(r).tolist() for r in self.flagged],
        }
        if self.counts is not None:
            idx = np.argwhere(self.counts)
            d["counts"] = {
                "shape": list(self.counts.shape),
                "entries": [[*map(int, i), int(self.counts[tuple(i)])] for i in idx],
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "DeviationModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported deviation model schema {d.get('schema_version')}")
        tables = np.asarray(d["tables"], dtype=float)
        flagged = np.zeros(tables.shape[:2], dtype=bool)
        for g, rows in enumerate(d.get("flagged", [])):
            flagged[g, rows] = True
        counts = None
        if "counts" in d:
            counts = np.zeros(d["counts"]["shape"], dtype=np.int64)
            for *i, c in d["counts"]["entries"]:
                counts[tuple(i)] = c
        return cls(OperatingCondition(**d["gamma"]), d["pe_grid"], tables, d["energy"], counts, flagged, d.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "DeviationModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DeviationModel":
        return cls.from_json(Path(path).read_text())

    def pnz_csv(self) -> str:
        """Non-zero deviation probability per grid point, belief and codeword bit."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p_e", "nu", "x", "p_nz"])
        for g, pe in enumerate(self.pe_grid):
            for x in (1, -1):
                for nu in range(-self.q, self.q + 1):
                    w.writerow([repr(float(pe)), nu, x, repr(nonzero_dev_prob(self, g, nu, x))])
        return buf.getvalue()


def lookup(model: DeviationModel, pe: float, nu: int) -> np.ndarray:
    if abs(nu) > model.q:
        raise ValueError(f"nu={nu} outside [-{model.q}, {model.q}]")
    return model.table_at(pe)[nu + model.q]


def energy_lookup(model: DeviationModel, pe: float) -> float:
    return model.energy_at(pe)


def nonzero_dev_prob(model: DeviationModel, grid_index: int, nu: int, x: int = 1) -> float:
    """Pr(mu != nu | nu, x) at a characterized grid point; uses weak symmetry for x = -1."""
    if abs(nu) > model.q:
        raise ValueError(f"nu={nu} outside [-{model.q}, {model.q}]")
    v = nu if x == 1 else -nu
    return float(1.0 - model.tables[grid_index, v + model.q, v + model.q])


# -- weak symmetry -------------------------------------------------------------


def fold_weak_symmetry(counts_plus, counts_minus):
    """Combine the two codeword signs: ``folded[nu][mu] ~ c+[nu][mu] + c-[-nu][-mu]``.

    Returns the row-normalized table and a mask of rows that had no data and
    were set to the identity.
    """
    c = np.asarray(counts_plus, dtype=float) + np.asarray(counts_minus, dtype=float)[::-1, ::-1]
    tot = c.sum(axis=1)
    empty = tot == 0
    table = np.where(empty[:, None], np.eye(c.shape[0]), c / np.where(empty, 1, tot)[:, None])
    return table, empty


@dataclass
class SymmetryReport:
    tv: np.ndarray  # per nu, NaN where a side has too few samples
    n_plus: np.ndarray
    n_minus: np.ndarray
    bound: np.ndarray
    tolerance: float

    @property
    def max_tv(self) -> float:
        v = self.tv[~np.isnan(self.tv)]
        return float(v.max()) if v.size else 0.0

    @property
    def mean_tv(self) -> float:
        v = self.tv[~np.isnan(self.tv)]
        return float(v.mean()) if v.size else 0.0

    @property
    def passed(self) -> bool:
        ok = np.isnan(self.tv) | (self.tv <= self.bound)
        return bool(ok.all())


def check_weak_symmetry(counts_plus, counts_minus, tolerance: float = 0.0, min_count: int = 100, z: float = 4.0) -> SymmetryReport:
    """Total-variation distance between phi(.|nu, +1) and the mirrored phi(-.|-nu, -1).

    A row passes when its TV is within ``tolerance`` plus a sampling allowance
    of ``z`` standard errors of the empirical TV for the observed counts.
    """
    cp = np.asarray(counts_plus, dtype=float)
    cm = np.asarray(counts_minus, dtype=float)[::-1, ::-1]
    n1, n2 = cp.sum(axis=1), cm.sum(axis=1)
    tv = np.full(cp.shape[0], np.nan)
    bound = np.full(cp.shape[0], np.inf)
    use = (n1 >= min_count) & (n2 >= min_count)
    p1 = cp[use] / n1[use, None]
    p2 = cm[use] / n2[use, None]
    tv[use] = 0.5 * np.abs(p1 - p2).sum(axis=1)
    pooled = 0.5 * (p1 + p2)
    se = np.sqrt(pooled * (1 - pooled) * (1 / n1[use, None] + 1 / n2[use, None])).sum(axis=1) * 0.5
    bound[use] = tolerance + z * se
    if tolerance >= 1:
        bound[:] = np.inf
    return SymmetryReport(tv, n1, n2, bound, tolerance)


# -- Monte-Carlo characterization ----------------------------------------------


@dataclass(frozen=True)
class CharacterizeJob:
    gamma: OperatingCondition
    ensemble: RegularEnsemble
    alphabet: QuantizedAlphabet
    profile: CircuitProfile
    alpha: float
    offset: int
    seed: int
    trees_per_stream: int
    warmup_cycles: int
    interleave: int


def _stream_inputs(rng, pmf_cdf, n, layers, d_c, q, jitter_bits):
    """Tree inputs for one stream: signed (tot, prev), head bits and jitter."""
    shape = (n, layers, d_c - 1)
    mu = np.searchsorted(pmf_cdf, rng.random(shape), side="right") - q
    lp = np.searchsorted(pmf_cdf, rng.random(shape), side="right") - q
    x_head = np.where(rng.random(n) < 0.5, -1, 1)
    x = np.where(rng.random(shape) < 0.5, -1, 1)
    # the last neighbour makes each check's product of bits equal the head bit
    x[..., -1] = x_head[:, None] * np.prod(x[..., :-1], axis=-1)
    jitter = rng.uniform(-1.0, 1.0, size=(n, layers, jitter_bits))
    return x * (mu + lp), x * lp, x_head, jitter


def _run_streams(job: CharacterizeJob, grid_index: int, pe: float, streams: list[int]):
    """Simulate a set of streams at one grid point.

    Returns the tallies, the exact (``fsum``) energy of each stream and the tree count.
    """
    circuit = TestCircuit(job.ensemble, job.alphabet, job.offset, job.profile)
    q = job.alphabet.q
    S = job.alphabet.size
    pmf = one_d_normal_pmf(pe, job.alpha, job.alphabet)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    layers, d_c = circuit.layers, job.ensemble.d_c
    rngs = [np.random.default_rng(np.random.SeedSequence(job.seed, spawn_key=(grid_index, s))) for s in streams]
    B = len(streams)
    state = circuit.new_state(B)
    warm = math.ceil(job.warmup_cycles / layers)
    total = warm + job.trees_per_stream
    counts = np.zeros((2, S, S), dtype=np.int64)
    energy = [[] for _ in streams]
    done = 0
    while done < total:
        n = min(CHUNK_TREES, total - done)
        parts = [_stream_inputs(r, cdf, n, layers, d_c, q, circuit.jitter_bits) for r in rngs]
        tot, prev, xh, jit = (np.stack(p) for p in zip(*parts))
        out, en, state = circuit.run(tot, prev, job.gamma, jit, state, job.interleave)
        ideal = circuit.ideal(tot.reshape(B * n, layers, d_c - 1), prev.reshape(B * n, layers, d_c - 1)).reshape(B, n)
        keep = np.arange(done, done + n) >= warm
        if keep.any():
            sel = (slice(None), keep)
            xi = np.where(xh[sel] == 1, 0, 1).ravel()
            flat = (xi * S + ideal[sel].ravel() + q) * S + out[sel].ravel() + q
            counts += np.bincount(flat, minlength=2 * S * S).reshape(2, S, S)
            for b in range(B):
                energy[b].append(math.fsum(en[b, keep]))
        done += n
    return counts, [math.fsum(e) for e in energy], B * job.trees_per_stream


def characterize(
    gamma: OperatingCondition,
    pe_grid,
    trials_per_point: int,
    ensemble: RegularEnsemble,
    alphabet: QuantizedAlphabet = QuantizedAlphabet(6),
    profile: CircuitProfile = DEFAULT_PROFILE,
    seed: int = 0,
    alpha: float = 4.0,
    offset: int = 1,
    streams: int = 64,
    workers: int = 1,
    warmup_cycles: int = 100,
    interleave: int = 3,
) -> DeviationModel:
    """Monte-Carlo characterization of the test circuit at ``gamma``.

    Each grid point is simulated by ``streams`` independent circuit instances
    with their own seed streams, so the result does not depend on ``workers``.
    The trial count is rounded up to a multiple of ``streams``.
    """
    grid = np.asarray(pe_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("pe_grid is empty")
    if trials_per_point <= 0 or streams <= 0:
        raise ValueError("trials_per_point and streams must be positive")
    if np.any((grid <= 0) | (grid >= 0.5)):
        raise ValueError("pe_grid values must lie in (0, 0.5)")
    per_stream = math.ceil(trials_per_point / streams)
    job = CharacterizeJob(gamma, ensemble, alphabet, profile, alpha, offset, seed, per_stream, warmup_cycles, interleave)
    shards = [list(range(streams))[w::workers] for w in range(max(1, workers))]
    shards = [s for s in shards if s]
    tasks = [(job, g, float(pe), s) for g, pe in enumerate(grid) for s in shards]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    S = alphabet.size
    counts = np.zeros((grid.size, 2, S, S), dtype=np.int64)
    stream_energy = np.zeros((grid.size, streams))
    trees = np.zeros(grid.size, dtype=np.int64)
    for (_, g, _, shard), (c, e, n) in zip(tasks, results):
        counts[g] += c
        stream_energy[g, shard] = e
        trees[g] += n
    # summing in stream order keeps the result independent of the sharding
    energy_sum = np.array([math.fsum(row) for row in stream_energy])
    tables = np.zeros((grid.size, S, S))
    flagged = np.zeros((grid.size, S), dtype=bool)
    for g in range(grid.size):
        tables[g], flagged[g] = fold_weak_symmetry(counts[g, 0], counts[g, 1])
    meta = {
        "ensemble": [ensemble.d_v, ensemble.d_c],
        "bit_width": alphabet.bit_width,
        "alpha": alpha,
        "offset": offset,
        "profile": profile.name,
        "seed": seed,
        "streams": streams,
        "trials_per_point": int(per_stream * streams),
        "warmup_cycles": warmup_cycles,
        "interleave": interleave,
        "violation_free": bool(TestCircuit(ensemble, alphabet, offset, profile).violation_free(gamma)),
        "deviation_events": [int(counts[g].sum() - np.trace(counts[g, 0]) - np.trace(counts[g, 1])) for g in range(grid.size)],
    }
    return DeviationModel(gamma, grid, tables, energy_sum / trees, counts, flagged, meta)


def _run_task(task):
    job, g, pe, streams = task
    return _run_streams(job, g, pe, streams)
