"""Bit-exact quantized offset min-sum decoder with a row-layered schedule."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel_code import QuantizedAlphabet, TannerGraph


@dataclass(frozen=True)
class DecoderConfig:
    offset: int = 1
    max_iterations: int = 20
    alphabet: QuantizedAlphabet = QuantizedAlphabet(6)
    tie_break_seed: int = 0
    total_bits: int = 8
    early_stop: bool = True
    faults_persist: bool = False  # store injected messages into the VN totals

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("offset must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.total_bits < self.alphabet.bit_width:
            raise ValueError("total_bits must be at least the message width")

    @property
    def total_limit(self) -> int:
        return 2 ** (self.total_bits - 1) - 1


def min12_naive(mags) -> tuple[int, int]:
    """Smallest and second smallest value (with multiplicity) by a linear scan."""
    if len(mags) < 2:
        raise ValueError("min12 needs at least two inputs")
    m1 = m2 = None
    for v in mags:
        if m1 is None or v < m1:
            m1, m2 = v, m1
        elif m2 is None or v < m2:
            m2 = v
    return m1, m2


def _sort2(a, b):
    return (a, b) if a <= b else (b, a)


def _merge4(p, r):
    a1, a2 = p
    b1, b2 = r
    if a1 <= b1:
        return a1, min(a2, b1)
    return b1, min(a1, b2)


def _merge3(p, c):
    # 4-input merge with the second input of one side removed
    a1, a2 = p
    if a1 <= c:
        return a1, min(a2, c)
    return c, a1


def min12_tree(mags) -> tuple[int, int]:
    """Sort/merge network: pairwise Sort blocks, a tree of Merge blocks, and a
    3-input Merge for the unpaired input when the count is odd."""
    if len(mags) < 2:
        raise ValueError("min12 needs at least two inputs")
    mags = list(mags)
    odd = mags.pop() if len(mags) % 2 else None
    level = [_sort2(mags[i], mags[i + 1]) for i in range(0, len(mags), 2)]
    while len(level) > 1:
        nxt = [_merge4(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    out = level[0]
    if odd is not None:
        out = _merge3(out, odd)
    return out


def sgn(x):
    return np.where(np.asarray(x) >= 0, 1, -1)


def cn_update_rows(mu: np.ndarray, offset: int) -> np.ndarray:
    """Vectorized CN update on an ``(rows, d_c)`` array of incoming messages."""
    mag = np.abs(mu)
    part = np.partition(mag, 1, axis=1)
    m1 = part[:, :1]
    m2 = part[:, 1:2]
    o1 = np.maximum(0, m1 - offset)
    o2 = np.maximum(0, m2 - offset)
    s = sgn(mu)
    s_total = np.prod(s, axis=1, keepdims=True)
    out = np.where(mag == m1, o2, o1)
    return s_total * s * out


def cn_update(incoming, offset: int) -> list[int]:
    """Messages a CN returns to each neighbour, per the offset min-sum rule."""
    mu = np.asarray(incoming, dtype=np.int64)[None, :]
    return [int(v) for v in cn_update_rows(mu, offset)[0]]


Injector = Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class DecodeResult:
    decisions: np.ndarray
    iterations: int
    syndrome_ok: bool
    message_errors: list[int] = field(default_factory=list)
    zero_messages: list[int] = field(default_factory=list)
    trace: list[tuple[int, int, int]] = field(default_factory=list)
    messages: list[np.ndarray] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "layer", "message_errors"])
        w.writerows(self.trace)
        return buf.getvalue()


def decode(
    beliefs,
    graph: TannerGraph,
    config: DecoderConfig,
    injector: Optional[Injector] = None,
    codeword=None,
    keep_messages: bool = False,
) -> DecodeResult:
    """Row-layered OMS decoding.

    ``injector(iteration, layer, vns, mu)`` may replace the freshly computed
    VN-to-CN messages ``mu`` (shape ``(m_l, d_c)``, VN indices ``vns``) before
    the CN update.  By default the replacement is only what the CN sees and the
    VN totals keep accumulating from the uncorrupted messages, so a deviation
    acts as a channel on the VN-to-CN edge; ``config.faults_persist`` stores
    the replaced messages into the totals instead.  ``codeword`` (+-1 entries, default all-ones) is the
    reference for the per-iteration message error counts.
    """
    lam0 = np.asarray(beliefs, dtype=np.int64)
    if lam0.shape != (graph.n,):
        raise ValueError(f"expected {graph.n} beliefs, got shape {lam0.shape}")
    q = config.alphabet.q
    tmax = config.total_limit
    x = np.ones(graph.n, dtype=np.int64) if codeword is None else np.asarray(codeword, dtype=np.int64)
    rng = np.random.default_rng(config.tie_break_seed)

    total = np.clip(lam0, -tmax, tmax)
    layers = [graph.cn_neighbors[graph.layer_rows(layer)] for layer in range(graph.num_layers)]
    lam = [np.zeros(nb.shape, dtype=np.int64) for nb in layers]
    decisions = np.where(total > 0, 1, -1)
    result = DecodeResult(decisions, 0, False)

    for t in range(1, config.max_iterations + 1):
        errors = zeros = 0
        for layer, nb in enumerate(layers):
            # the difference keeps the wide total range; only the CN input is clipped
            wide = total[nb] - lam[layer]
            own = np.clip(wide, -q, q)
            mu = own if injector is None else injector(t, layer, nb, own)
            xm = x[nb] * mu
            e_l = int(np.count_nonzero(xm < 0))
            errors += e_l
            zeros += int(np.count_nonzero(mu == 0))
            result.trace.append((t, layer, e_l))
            if keep_messages:
                result.messages.append(mu.copy())
            new = cn_update_rows(mu, config.offset)
            lam[layer] = new
            total[nb] = np.clip((mu if config.faults_persist else wide) + new, -tmax, tmax)
            ties = total == 0
            decisions = np.where(total > 0, 1, -1)
            if ties.any():
                decisions[ties] = rng.choice([-1, 1], size=int(ties.sum()))
        result.message_errors.append(errors)
        result.zero_messages.append(zeros)
        result.iterations = t
        result.syndrome_ok = not graph.syndrome((decisions < 0).astype(np.uint8)).any()
        if config.early_stop and result.syndrome_ok:
            break
    result.decisions = decisions
    return result


def flooding_messages(beliefs, graph: TannerGraph, offset: int, alphabet: QuantizedAlphabet, acc_limit: int | None = None) -> np.ndarray:
    """VN-to-CN messages after one flooding iteration started from the channel beliefs.

    Returns an ``(m, d_c)`` array aligned with ``graph.cn_neighbors``.  Each
    extrinsic message sums the other CN outputs (layer order) and then the
    prior, saturating after every add, as the DE recursion does.
    """
    q = alphabet.q
    limit = q if acc_limit is None else acc_limit
    prior = np.asarray(beliefs, dtype=np.int64)
    lam = cn_update_rows(prior[graph.cn_neighbors], offset)
    # CN-to-VN message arriving at each VN from each layer
    incoming = np.zeros((graph.num_layers, graph.n), dtype=np.int64)
    for layer in range(graph.num_layers):
        rows = graph.layer_rows(layer)
        incoming[layer, graph.cn_neighbors[rows]] = lam[rows]
    out = np.zeros_like(graph.cn_neighbors)
    for layer in range(graph.num_layers):
        rows = graph.layer_rows(layer)
        others = [k for k in range(graph.num_layers) if k != layer]
        acc = incoming[others[0]]
        for k in others[1:]:
            acc = np.clip(acc + incoming[k], -limit, limit)
        acc = np.clip(acc + prior, -limit, limit)
        out[rows] = np.clip(acc, -q, q)[graph.cn_neighbors[rows]]
    return out
