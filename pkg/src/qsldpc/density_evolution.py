"""Quantized density evolution for offset min-sum with a deviation channel.

Pmfs are 1-D arrays of length ``2Q+1`` indexed by ``value + Q`` and describe
messages conditioned on a transmitted ``+1``.  Every function also accepts
object arrays of :class:`fractions.Fraction`, which gives an exact mode for
small oracle instances.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .channel_code import (
    BiawgnChannel,
    QuantizedAlphabet,
    RegularEnsemble,
    channel_prior_pmf,
    pe_to_sigma,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DEConfig:
    """Decoder parameters that DE needs.

    ``acc_bits`` is the width of the accumulator that sums CN outputs at a VN;
    ``None`` means the message width, which is what the test circuit's head
    register uses.  CN outputs are summed first and the prior is added last.
    """

    ensemble: RegularEnsemble
    alpha: float
    offset: int = 1
    alphabet: QuantizedAlphabet = QuantizedAlphabet(6)
    acc_bits: int | None = None

    @property
    def q(self) -> int:
        return self.alphabet.q

    @property
    def acc_limit(self) -> int:
        bits = self.acc_bits or self.alphabet.bit_width
        return 2 ** (bits - 1) - 1

    def prior(self, pe0: float) -> np.ndarray:
        return channel_prior_pmf(BiawgnChannel(pe_to_sigma(pe0), self.alpha), self.alphabet)


def to_exact(pmf, denominator: int | None = None) -> np.ndarray:
    """Convert a pmf to Fractions (optionally rounded to a fixed denominator)."""
    if denominator is None:
        vals = [Fraction(v) for v in pmf]
    else:
        vals = [Fraction(round(float(v) * denominator), denominator) for v in pmf]
        vals[len(vals) // 2] += 1 - sum(vals)
    return np.array(vals, dtype=object)


def mirror(pmf) -> np.ndarray:
    return pmf[::-1].copy()


def project(pmf) -> float:
    """Error probability Pr(mu < 0) + Pr(mu = 0)/2 of a message pmf."""
    q = (len(pmf) - 1) // 2
    return pmf[:q].sum() + pmf[q] / 2


def _normalize(pmf):
    if pmf.dtype == object:
        return pmf
    s = pmf.sum()
    return pmf / s


def cn_min_distribution(pmf, d_c: int) -> np.ndarray:
    """Distribution of sign-product times minimum magnitude over ``d_c - 1`` i.i.d. inputs.

    Zero counts as positive. Computed from tail products: for each magnitude
    ``k``, ``(P+(>=k) + P-(>=k))^n`` and ``(P+(>=k) - P-(>=k))^n`` give the
    probability that every input has magnitude at least ``k`` split by sign
    parity.
    """
    if d_c < 2:
        raise ValueError("d_c must be >= 2")
    n = d_c - 1
    q = (len(pmf) - 1) // 2
    pos = pmf[q:]  # magnitudes 0..Q, sign +
    neg = np.concatenate((pmf[:1] * 0, pmf[:q][::-1]))  # magnitudes 0..Q, sign -
    tail_pos = np.cumsum(pos[::-1])[::-1]
    tail_neg = np.cumsum(neg[::-1])[::-1]
    a = (tail_pos + tail_neg) ** n
    b = (tail_pos - tail_neg) ** n
    even = (a + b) / 2
    odd = (a - b) / 2
    zero = pmf[:1] * 0
    even = np.concatenate((even, zero))
    odd = np.concatenate((odd, zero))
    p_plus = even[:-1] - even[1:]
    p_minus = odd[:-1] - odd[1:]
    out = np.concatenate((p_minus[1:][::-1], [p_plus[0] + p_minus[0]], p_plus[1:]))
    return _normalize(out)


def apply_offset(pmf, offset: int) -> np.ndarray:
    """Magnitude map ``|v| -> max(0, |v| - C)`` keeping the sign."""
    if offset < 0:
        raise ValueError("offset must be non-negative")
    q = (len(pmf) - 1) // 2
    c = min(offset, q)
    out = pmf * 0
    out[q] = pmf[q - c : q + c + 1].sum()
    if c < q:
        out[q + 1 : 2 * q + 1 - c] = pmf[q + c + 1 :]
        out[c : q] = pmf[: q - c]
    return out


def _convolve(a, b):
    if a.dtype == object or b.dtype == object:
        out = np.array([Fraction(0)] * (len(a) + len(b) - 1), dtype=object)
        for i, av in enumerate(a):
            if av:
                out[i : i + len(b)] += av * b
        return out
    return np.convolve(a, b)


def saturating_add(a, b, limit: int) -> np.ndarray:
    """Pmf of ``clip(A + B, -limit, limit)`` for independent centred pmfs ``a`` and ``b``."""
    c = _convolve(a, b)
    half = (len(c) - 1) // 2
    if half <= limit:
        return c
    cut = half - limit
    out = c[cut : len(c) - cut].copy()
    out[0] = c[: cut + 1].sum()
    out[-1] = c[len(c) - cut - 1 :].sum()
    return out


def clamp_pmf(pmf, q: int) -> np.ndarray:
    half = (len(pmf) - 1) // 2
    if half <= q:
        if half == q:
            return pmf
        pad = pmf[:1] * 0
        return np.concatenate(([pad[0]] * (q - half), pmf, [pad[0]] * (q - half)))
    return saturating_add(pmf, np.array([pmf[0] * 0 + 1], dtype=pmf.dtype), q)


def vn_convolve(prior, cn_pmf, d_v: int, q: int, acc_limit: int | None = None) -> np.ndarray:
    """Ideal VN-to-CN message law: ``d_v - 1`` CN outputs then the prior, saturating each add."""
    limit = q if acc_limit is None else acc_limit
    acc = cn_pmf
    for _ in range(d_v - 2):
        acc = saturating_add(acc, cn_pmf, limit)
    acc = saturating_add(acc, prior, limit)
    return _normalize(clamp_pmf(acc, q))


def apply_deviation(pmf, model, pe_in: float) -> np.ndarray:
    """Push the ideal message law through the deviation channel at ``pe_in``."""
    table = model.table_at(pe_in)
    if pmf.dtype == object:
        return np.array([sum(pmf[v] * table[v, u] for v in range(len(pmf))) for u in range(len(pmf))], dtype=object)
    return _normalize(pmf @ table)


def de_iteration(pi, pi0, config: DEConfig, model=None) -> np.ndarray:
    cn = apply_offset(cn_min_distribution(pi, config.ensemble.d_c), config.offset)
    nu = vn_convolve(pi0, cn, config.ensemble.d_v, config.q, config.acc_limit)
    if model is None or getattr(model, "is_identity", False):
        return nu
    return apply_deviation(nu, model, float(project(pi)))


@dataclass
class DeTrace:
    pe: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    latency: list[float] = field(default_factory=list)
    gammas: list = field(default_factory=list)
    pmfs: list = field(default_factory=list)
    converged: bool = False
    diverged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.pe) - 1

    @property
    def total_energy(self) -> float:
        return float(sum(self.energy))

    @property
    def total_latency(self) -> float:
        return float(sum(self.latency))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "p_e", "energy", "v_dd", "t_clk"])
        for t, pe in enumerate(self.pe):
            if t == 0:
                w.writerow([0, repr(float(pe)), "", "", ""])
                continue
            g = self.gammas[t - 1]
            v, tc = (g.v_dd, g.t_clk) if g is not None else ("", "")
            w.writerow([t, repr(float(pe)), repr(self.energy[t - 1]), v, tc])
        return buf.getvalue()


def _step_costs(model, pe_in, cycles_per_iteration):
    if model is None:
        return 0.0, 0.0
    return model.energy_at(pe_in), cycles_per_iteration * model.gamma.t_clk


def run_de(
    pi0,
    config: DEConfig,
    schedule=None,
    max_iters: int = 500,
    p_res: float = 0.0,
    divergence_window: int = 50,
    cycles_per_iteration: float = 1.0,
    keep_pmfs: bool = False,
) -> DeTrace:
    """Iterate DE from ``pi0``.

    ``schedule`` is ``None`` (reliable decoder), a single deviation model used
    every iteration, or a sequence of models (``None`` entries are reliable)
    applied in order; a sequence runs exactly ``len(schedule)`` iterations.
    Energy is charged at the projected error rate entering each iteration.
    """
    fixed = isinstance(schedule, (list, tuple))
    n_iter = len(schedule) if fixed else max_iters
    trace = DeTrace(pe=[project(pi0)])
    if keep_pmfs:
        trace.pmfs.append(pi0)
    pi = pi0
    best = trace.pe[0]
    stall = 0
    for t in range(n_iter):
        model = schedule[t] if fixed else schedule
        pe_in = float(project(pi))
        e, lat = _step_costs(model, pe_in, cycles_per_iteration)
        pi = de_iteration(pi, pi0, config, model)
        pe = project(pi)
        trace.pe.append(pe)
        trace.energy.append(e)
        trace.latency.append(lat)
        trace.gammas.append(None if model is None else model.gamma)
        if keep_pmfs:
            trace.pmfs.append(pi)
        if fixed:
            continue
        if pe <= p_res:
            trace.converged = True
            break
        if pe < best * (1 - 1e-12):
            best = pe
            stall = 0
        else:
            stall += 1
            if stall >= divergence_window:
                trace.diverged = True
                break
    if fixed:
        trace.converged = trace.pe[-1] <= p_res
    return trace


def converges(pe0: float, config: DEConfig, model=None, p_res: float = 1e-6, max_iters: int = 500) -> bool:
    return run_de(config.prior(pe0), config, model, max_iters=max_iters, p_res=p_res).converged


def threshold_search(
    config: DEConfig,
    model=None,
    p_res: float = 1e-6,
    max_iters: int = 500,
    resolution: float = 1e-4,
    lo: float = 1e-3,
    hi: float = 0.3,
) -> float:
    """Largest channel error rate (to ``resolution``) from which DE reaches ``p_res``."""
    if not converges(lo, config, model, p_res, max_iters):
        return 0.0
    if converges(hi, config, model, p_res, max_iters):
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if converges(mid, config, model, p_res, max_iters):
            lo = mid
        else:
            hi = mid
    return lo


def threshold_report(config: DEConfig, threshold: float, **extra) -> str:
    return json.dumps(
        {
            "d_v": config.ensemble.d_v,
            "d_c": config.ensemble.d_c,
            "alpha": config.alpha,
            "offset": config.offset,
            "bit_width": config.alphabet.bit_width,
            "acc_bits": config.acc_bits,
            "threshold": threshold,
            **extra,
        },
        indent=2,
        sort_keys=True,
    )


def schedule_models(models: Sequence, counts: Sequence[int]) -> list:
    out = []
    for m, k in zip(models, counts):
        out.extend([m] * k)
    return out
