import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsldpc.channel_code import (
    BiawgnChannel,
    CodewordSampler,
    ConstructionError,
    QuantizedAlphabet,
    RegularEnsemble,
    TannerGraph,
    build_regular_code,
    channel_prior_pmf,
    load_graph,
    one_d_normal_pmf,
    pe_to_sigma,
    pmf_error_probability,
    sample_channel_beliefs,
    save_graph,
    sigma_to_pe,
)

A6 = QuantizedAlphabet(6)


def q_function(z):
    return 0.5 * math.erfc(z / math.sqrt(2))


def test_sigma_pe_known_value():
    # Q(1) for unit noise
    assert sigma_to_pe(1.0) == pytest.approx(0.15865525393145707, abs=1e-15)


@given(st.floats(0.01, 0.45))
def test_pe_sigma_round_trip(pe):
    assert abs(sigma_to_pe(pe_to_sigma(pe)) - pe) <= 1e-10


@pytest.mark.parametrize("bad", [0.0, 0.5, -0.1, 0.7])
def test_pe_to_sigma_domain(bad):
    with pytest.raises(ValueError):
        pe_to_sigma(bad)


def test_alphabet():
    a = QuantizedAlphabet(3)
    assert a.q == 3 and a.size == 7
    assert list(a.clamp(np.array([-9, 2, 9]))) == [-3, 2, 3]
    with pytest.raises(ValueError):
        QuantizedAlphabet(1)


@pytest.mark.parametrize("pe0,alpha", [(0.09, 4.0), (0.015, 4.0), (0.11, 2.0), (0.3, 1.0)])
def test_prior_projection_matches_q_function(pe0, alpha):
    ch = BiawgnChannel(pe_to_sigma(pe0), alpha)
    pmf = channel_prior_pmf(ch, A6)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-14)
    half = 0.5 * ch.sigma**2 / alpha  # belief 0 covers |y| < half
    expected = q_function((1 + half) / ch.sigma) + 0.5 * (q_function((1 - half) / ch.sigma) - q_function((1 + half) / ch.sigma))
    assert pmf_error_probability(pmf) == pytest.approx(expected, abs=1e-12)
    # quantization moves the error rate by at most half the zero bin
    zero_bin = q_function((1 - half) / ch.sigma) - q_function((1 + half) / ch.sigma)
    assert abs(pmf_error_probability(pmf) - pe0) <= 0.5 * zero_bin + 1e-15


def test_prior_mirror_for_negative_bit():
    ch = BiawgnChannel(pe_to_sigma(0.05), 4.0)
    assert np.array_equal(channel_prior_pmf(ch, A6, x=-1), channel_prior_pmf(ch, A6)[::-1])


def test_sampled_beliefs_follow_prior():
    ch = BiawgnChannel(pe_to_sigma(0.08), 4.0)
    a = QuantizedAlphabet(4)
    x = np.ones(200_000, dtype=np.int64)
    b = sample_channel_beliefs(x, ch, a, 5)
    emp = np.bincount(b + a.q, minlength=a.size) / b.size
    pmf = channel_prior_pmf(ch, a)
    sd = np.sqrt(pmf * (1 - pmf) / b.size)
    assert np.all(np.abs(emp - pmf) <= 5 * sd + 1e-12)
    with pytest.raises(ValueError):
        sample_channel_beliefs(np.array([1, 0, -1]), ch, a, 0)


@pytest.mark.parametrize("pe", [1e-4, 0.003, 0.05, 0.2])
def test_one_d_normal_projects_onto_pe(pe):
    pmf = one_d_normal_pmf(pe, 4.0, A6)
    assert pmf_error_probability(pmf) == pytest.approx(pe, rel=1e-9)
    assert np.all(pmf >= 0)


@pytest.mark.parametrize("n,dv,dc", [(4092, 3, 6), (3000, 3, 30), (6000, 4, 40), (400, 4, 8)])
def test_regular_code_structure(n, dv, dc):
    g = build_regular_code(n, RegularEnsemble(dv, dc), seed=2)
    g.validate()
    h = g.parity_matrix()
    assert h.shape == (n * dv // dc, n)
    assert np.all(h.sum(axis=0) == dv) and np.all(h.sum(axis=1) == dc)
    # each layer touches every VN exactly once
    for layer in range(g.num_layers):
        nb = g.cn_neighbors[g.layer_rows(layer)].ravel()
        assert np.array_equal(np.sort(nb), np.arange(n))
    # no 4-cycles: every VN pair meets in at most one CN
    pairs = set()
    for row in g.cn_neighbors:
        for a, b in itertools.combinations(sorted(int(v) for v in row), 2):
            assert (a, b) not in pairs
            pairs.add((a, b))


def test_construction_failure_reported():
    with pytest.raises(ConstructionError):
        build_regular_code(12, RegularEnsemble(3, 6), seed=0, max_retries=5)
    with pytest.raises(ValueError):
        build_regular_code(100, RegularEnsemble(3, 6), seed=0)


def test_graph_round_trips(tmp_path):
    g = build_regular_code(96, RegularEnsemble(3, 6), seed=4)
    for name in ("g.json", "g.alist"):
        save_graph(g, tmp_path / name)
        back = load_graph(tmp_path / name)
        assert np.array_equal(back.parity_matrix(), g.parity_matrix())
        assert back.num_layers == g.num_layers
    assert TannerGraph.from_json(g.to_json()).to_json() == g.to_json()


def test_codeword_sampler():
    g = build_regular_code(96, RegularEnsemble(3, 6), seed=7)
    s = CodewordSampler(g)
    h = g.parity_matrix().astype(np.int64)
    # rank over GF(2) via an independent elimination
    m = h.copy() % 2
    rank = 0
    for col in range(m.shape[1]):
        piv = [r for r in range(rank, m.shape[0]) if m[r, col]]
        if not piv:
            continue
        m[[rank, piv[0]]] = m[[piv[0], rank]]
        for r in range(m.shape[0]):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
    assert s.dimension == g.n - rank
    rng = np.random.default_rng(0)
    words = np.array([s.sample(rng) for _ in range(200)])
    assert not any(g.syndrome(w).any() for w in words)
    # free bits are fair coins
    assert abs(words[:, s.free].mean() - 0.5) < 0.05


def test_all_codewords_tiny_code():
    g = build_regular_code(6, RegularEnsemble(2, 3), seed=1, avoid_4cycles=False)
    s = CodewordSampler(g)
    words = s.all_codewords()
    assert len(words) == 2**s.dimension
    assert len({w.tobytes() for w in words}) == len(words)
    brute = [np.array(b, dtype=np.uint8) for b in np.ndindex(*(2,) * 6) if not g.syndrome(np.array(b, dtype=np.uint8)).any()]
    assert len(brute) == len(words)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_design_rate(seed):
    ens = RegularEnsemble(3, 6)
    g = build_regular_code(60, ens, seed=seed, avoid_4cycles=False)
    assert float(ens.design_rate) == pytest.approx(1 - g.m / g.n)
