"""Regular code ensembles, layered Tanner graphs and the quantized BIAWGN channel."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, erfcinv, ndtr


class ConstructionError(RuntimeError):
    """Raised when a graph cannot be built within the retry budget."""


@dataclass(frozen=True)
class RegularEnsemble:
    d_v: int
    d_c: int

    def __post_init__(self):
        if not (self.d_c > self.d_v >= 2):
            raise ValueError(f"need d_c > d_v >= 2, got ({self.d_v},{self.d_c})")

    @property
    def design_rate(self) -> Fraction:
        return 1 - Fraction(self.d_v, self.d_c)


@dataclass(frozen=True)
class QuantizedAlphabet:
    """Symmetric integer message alphabet {-Q..Q} for a given bit width."""

    bit_width: int = 6

    def __post_init__(self):
        if self.bit_width < 2:
            raise ValueError("bit_width must be >= 2")

    @property
    def q(self) -> int:
        return 2 ** (self.bit_width - 1) - 1

    @property
    def size(self) -> int:
        return 2 * self.q + 1

    def values(self) -> np.ndarray:
        return np.arange(-self.q, self.q + 1)

    def clamp(self, v):
        return np.clip(v, -self.q, self.q)


@dataclass(frozen=True)
class BiawgnChannel:
    sigma: float
    alpha: float

    def __post_init__(self):
        if self.sigma <= 0 or self.alpha <= 0:
            raise ValueError("sigma and alpha must be positive")

    @property
    def rho(self) -> float:
        return self.alpha / self.sigma**2

    @property
    def pe(self) -> float:
        return sigma_to_pe(self.sigma)


def sigma_to_pe(sigma: float) -> float:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 0.5 * float(erfc(1.0 / np.sqrt(2.0 * sigma * sigma)))


def pe_to_sigma(pe: float) -> float:
    if not 0.0 < pe < 0.5:
        raise ValueError(f"p_e must lie in (0, 0.5), got {pe}")
    sigma = 1.0 / (np.sqrt(2.0) * float(erfcinv(2.0 * pe)))
    # one Newton step on sigma_to_pe cleans up erfcinv's last-digit error
    z = 1.0 / sigma
    dpe = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) * z * z
    return float(sigma - (sigma_to_pe(sigma) - pe) / dpe)


def channel_prior_pmf(channel: BiawgnChannel, alphabet: QuantizedAlphabet, x: int = 1) -> np.ndarray:
    """Pmf of the saturated channel belief round(alpha*y/sigma^2) given bit ``x``.

    Index ``k + Q`` holds the probability of belief ``k``.
    """
    q = alphabet.q
    mean = channel.rho
    sd = channel.alpha / channel.sigma
    edges = (np.arange(-q, q) + 0.5 - mean) / sd
    lo = np.concatenate(([-np.inf], edges))
    hi = np.concatenate((edges, [np.inf]))
    # upper-tail bins use survival differences to avoid cancellation
    pmf = np.where(lo >= 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    pmf = np.clip(pmf, 0.0, None)
    pmf /= pmf.sum()
    return pmf[::-1].copy() if x == -1 else pmf


def pmf_error_probability(pmf) -> float:
    q = (len(pmf) - 1) // 2
    return pmf[:q].sum() + pmf[q] / 2


def one_d_normal_pmf(pe: float, alpha: float, alphabet: QuantizedAlphabet) -> np.ndarray:
    """Quantized 1-D normal message law whose projected error rate equals ``pe``.

    The noise level is solved on the quantized pmf itself so that the returned
    law projects back onto ``pe`` exactly, rather than onto the continuous
    channel error rate.
    """
    if not 0.0 < pe < 0.5:
        raise ValueError(f"p_e must lie in (0, 0.5), got {pe}")

    def gap(log_sigma):
        ch = BiawgnChannel(float(np.exp(log_sigma)), alpha)
        return pmf_error_probability(channel_prior_pmf(ch, alphabet)) - pe

    lo, hi = np.log(0.01), np.log(100.0)
    while gap(lo) > 0:
        lo -= 1.0
    log_sigma = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14)
    return channel_prior_pmf(BiawgnChannel(float(np.exp(log_sigma)), alpha), alphabet)


def sample_channel_beliefs(codeword, channel: BiawgnChannel, alphabet: QuantizedAlphabet, seed) -> np.ndarray:
    x = np.asarray(codeword)
    if not np.all(np.abs(x) == 1):
        raise ValueError("codeword entries must be +1 or -1")
    rng = np.random.default_rng(seed)
    y = x + channel.sigma * rng.standard_normal(x.shape)
    mu = np.floor(channel.alpha * y / channel.sigma**2 + 0.5)
    return alphabet.clamp(mu).astype(np.int64)


@dataclass
class TannerGraph:
    """Regular Tanner graph split into ``d_v`` layers.

    ``vn_to_cn[l, i]`` is the CN adjacent to VN ``i`` in layer ``l``;
    ``cn_neighbors[j]`` lists the ``d_c`` VNs of CN ``j``.  CNs of layer ``l``
    occupy indices ``l*m_l .. (l+1)*m_l - 1``.
    """

    n: int
    d_v: int
    d_c: int
    vn_to_cn: np.ndarray
    cn_neighbors: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.n * self.d_v // self.d_c

    @property
    def num_layers(self) -> int:
        return self.d_v

    @property
    def rows_per_layer(self) -> int:
        return self.n // self.d_c

    def layer_rows(self, layer: int) -> np.ndarray:
        m_l = self.rows_per_layer
        return np.arange(layer * m_l, (layer + 1) * m_l)

    def parity_matrix(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        for j, nb in enumerate(self.cn_neighbors):
            h[j, nb] = 1
        return h

    def syndrome(self, bits) -> np.ndarray:
        """Parity of each check for hard decisions given as 0/1 bits."""
        return np.bitwise_xor.reduce(np.asarray(bits)[self.cn_neighbors], axis=1)

    def validate(self) -> None:
        h = self.parity_matrix()
        if not np.all(h.sum(axis=0) == self.d_v):
            raise ValueError("column weight differs from d_v")
        if not np.all(h.sum(axis=1) == self.d_c):
            raise ValueError("row weight differs from d_c")
        for layer in range(self.d_v):
            if not np.all(h[self.layer_rows(layer)].sum(axis=0) == 1):
                raise ValueError(f"layer {layer} does not cover every column exactly once")

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "d_v": self.d_v,
                "d_c": self.d_c,
                "seed": self.seed,
                "layers": self.vn_to_cn.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TannerGraph":
        d = json.loads(text)
        return _graph_from_layers(d["n"], d["d_v"], d["d_c"], np.asarray(d["layers"]), d.get("seed"))

    def to_alist(self) -> str:
        h = self.parity_matrix()
        lines = [
            f"{self.n} {self.m}",
            f"{self.d_v} {self.d_c}",
            " ".join([str(self.d_v)] * self.n),
            " ".join([str(self.d_c)] * self.m),
        ]
        for i in range(self.n):
            lines.append(" ".join(str(j + 1) for j in np.flatnonzero(h[:, i])))
        for j in range(self.m):
            lines.append(" ".join(str(i + 1) for i in np.flatnonzero(h[j])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_alist(cls, text: str) -> "TannerGraph":
        rows = [line.split() for line in text.strip().splitlines() if line.strip()]
        n, m = int(rows[0][0]), int(rows[0][1])
        d_v, d_c = int(rows[1][0]), int(rows[1][1])
        col_lists = [[int(t) - 1 for t in r] for r in rows[4 : 4 + n]]
        if m != n * d_v // d_c:
            raise ValueError("alist is not a regular layered graph")
        m_l = n // d_c
        vn_to_cn = np.zeros((d_v, n), dtype=np.int64)
        for i, cns in enumerate(col_lists):
            for j in cns:
                vn_to_cn[j // m_l, i] = j
        return _graph_from_layers(n, d_v, d_c, vn_to_cn, None)


def _graph_from_layers(n, d_v, d_c, vn_to_cn, seed) -> TannerGraph:
    m = n * d_v // d_c
    buckets = [[] for _ in range(m)]
    for layer in range(d_v):
        for i in range(n):
            buckets[vn_to_cn[layer, i]].append(i)
    g = TannerGraph(n, d_v, d_c, np.asarray(vn_to_cn, dtype=np.int64), np.asarray(buckets, dtype=np.int64), seed)
    g.validate()
    return g


def _layer_conflicts(groups, partners):
    """Positions (group, slot) whose VN already shares a CN with a group mate."""
    bad = []
    for g, members in enumerate(groups):
        for s, v in enumerate(members):
            p = partners[v]
            if any(u != v and u in p for u in members):
                bad.append((g, s))
    return bad


def build_regular_code(
    n: int,
    ensemble: RegularEnsemble,
    seed: int,
    avoid_4cycles: bool = True,
    max_retries: int = 200,
) -> TannerGraph:
    """Random layered regular graph: each layer partitions the columns into groups of ``d_c``.

    With ``avoid_4cycles`` a layer is repaired by random swaps until no two VNs
    share more than one CN; ``max_retries`` bounds the repair sweeps per layer.
    """
    d_v, d_c = ensemble.d_v, ensemble.d_c
    if n <= 0 or n % d_c:
        raise ValueError(f"n={n} must be a positive multiple of d_c={d_c}")
    rng = np.random.default_rng(seed)
    m_l = n // d_c
    partners = [set() for _ in range(n)]
    vn_to_cn = np.zeros((d_v, n), dtype=np.int64)
    for layer in range(d_v):
        groups = rng.permutation(n).reshape(m_l, d_c)
        if avoid_4cycles and layer > 0:
            for _ in range(max_retries):
                bad = _layer_conflicts(groups, partners)
                if not bad:
                    break
                for g, s in bad:
                    g2 = int(rng.integers(m_l))
                    s2 = int(rng.integers(d_c))
                    if g2 == g:
                        continue
                    v, u = groups[g, s], groups[g2, s2]
                    mates_g = [w for w in groups[g] if w != v]
                    mates_g2 = [w for w in groups[g2] if w != u]
                    if all(w not in partners[u] for w in mates_g) and all(w not in partners[v] for w in mates_g2):
                        groups[g, s], groups[g2, s2] = u, v
            else:
                if _layer_conflicts(groups, partners):
                    raise ConstructionError(f"could not remove 4-cycles from layer {layer} within {max_retries} sweeps")
        for g, members in enumerate(groups):
            vn_to_cn[layer, members] = layer * m_l + g
            for v in members:
                partners[v].update(int(u) for u in members)
    graph = _graph_from_layers(n, d_v, d_c, vn_to_cn, seed)
    return graph


def save_graph(graph: TannerGraph, path) -> None:
    path = Path(path)
    path.write_text(graph.to_alist() if path.suffix == ".alist" else graph.to_json())


def load_graph(path) -> TannerGraph:
    path = Path(path)
    text = path.read_text()
    return TannerGraph.from_alist(text) if path.suffix == ".alist" else TannerGraph.from_json(text)


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    packed = np.packbits(bits.astype(np.uint8), axis=1, bitorder="little")
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    return packed.view("<u8").copy()


class CodewordSampler:
    """Uniform sampling of codewords from the GF(2) null space of a graph's parity matrix."""

    def __init__(self, graph: TannerGraph):
        self.n = graph.n
        a = _pack_rows(graph.parity_matrix())
        row = 0
        pivots = []
        for col in range(self.n):
            if row == a.shape[0]:
                break
            w, b = col >> 6, np.uint64(col & 63)
            bit = ((a[:, w] >> b) & np.uint64(1)).astype(bool)
            cand = np.flatnonzero(bit[row:])
            if cand.size == 0:
                continue
            p = row + cand[0]
            if p != row:
                a[[row, p]] = a[[p, row]]
                bit[[row, p]] = bit[[p, row]]
            bit[row] = False
            a[bit] ^= a[row]
            pivots.append(col)
            row += 1
        self.rref = a[:row]
        self.pivots = np.asarray(pivots, dtype=np.int64)
        free = np.ones(self.n, dtype=bool)
        free[self.pivots] = False
        self.free = np.flatnonzero(free)

    @property
    def dimension(self) -> int:
        return int(self.free.size)

    def sample(self, rng) -> np.ndarray:
        """A uniformly random codeword as 0/1 bits."""
        rng = np.random.default_rng(rng)
        c = np.zeros(self.n, dtype=np.uint8)
        c[self.free] = rng.integers(0, 2, self.free.size, dtype=np.uint8)
        packed = _pack_rows(c[None])[0]
        par = np.bitwise_count(self.rref & packed[None]).sum(axis=1) & 1
        c[self.pivots] = par.astype(np.uint8)
        return c

    def all_codewords(self) -> np.ndarray:
        """Every codeword (only sensible for tiny codes)."""
        if self.dimension > 16:
            raise ValueError("code too large to enumerate")
        out = []
        for free_bits in range(2**self.dimension):
            c = np.zeros(self.n, dtype=np.uint8)
            c[self.free] = [(free_bits >> i) & 1 for i in range(self.dimension)]
            packed = _pack_rows(c[None])[0]
            par = np.bitwise_count(self.rref & packed[None]).sum(axis=1) & 1
            c[self.pivots] = par.astype(np.uint8)
            out.append(c)
        return np.array(out)
