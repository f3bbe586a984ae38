"""Behavioral model of the test circuit under timing violations.

The circuit evaluates one-iteration computation trees the way a row-layered
processing block would: an input register, a first logic stage (VNP fronts,
the min1/min2 network and the sign product), an internal pipeline register, a
second logic stage (offset/select and the head VNP back) and an output
register.  Each output bit settles after a delay that grows with the number
of input bits that toggled and shrinks with the supply voltage.  Bits that
settle after the clock edge keep the value they had before the transition
(stale capture).  All arrays are batched over independent circuit instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel_code import QuantizedAlphabet, RegularEnsemble


@dataclass(frozen=True)
class OperatingCondition:
    v_dd: float
    t_clk: float
    t_clk_nom: float

    def __post_init__(self):
        if min(self.v_dd, self.t_clk, self.t_clk_nom) <= 0:
            raise ValueError("operating condition values must be positive")

    @property
    def label(self) -> str:
        return f"{self.v_dd:.2f}V/{self.t_clk:.1f}ns"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CircuitProfile:
    """Delay and energy constants of the behavioral circuit.

    Delays are in ns at ``v_nom`` and scale with the alpha-power law
    ``v / (v - v_th)**a``.  Base depths are built per output bit from the
    logic structure: ``t_sub`` for a VNP-front subtraction, ``t_bit`` per carry
    position, ``t_abs`` for the magnitude conversion, ``t_level`` per level of
    the min1/min2 tree, ``t_m2`` for the extra mux on the second minimum,
    ``t_sign`` per level of the sign XOR tree, ``t_select`` for the stage-2
    compare/select/offset.  ``kappa_front``/``kappa_back`` are the delays added
    when every input bit of a stage toggles; the per-bit sensitivity is that
    value over the stage input width.  Energy: ``e_toggle`` pJ per register-bit toggle at
    ``v_nom`` (includes the logic it drives), static power ``p_stat_nom`` mW
    scaled by ``v * exp((v - v_nom) / v0)``.
    """

    name: str = "behavioral-alpha-power-v2"
    v_nom: float = 1.0
    v_th: float = 0.35
    a: float = 1.3
    t_sub: float = 0.15
    t_bit: float = 0.03
    t_abs: float = 0.10
    t_level: float = 0.15
    t_m2: float = 0.04
    t_sign: float = 0.16
    t_select: float = 0.35
    kappa_front: float = 1.0
    kappa_back: float = 0.40
    jitter: float = 0.05
    e_toggle: float = 0.05
    p_stat_nom: float = 0.3
    v0: float = 0.1
    notes: str = (
        "Stage split: VNP fronts + min1/min2 tree + sign product in stage 1, "
        "offset/select + head VNP back in stage 2. kappa_* is the delay added "
        "when every input bit of the stage toggles."
    )

    def delay_scale(self, v_dd: float) -> float:
        if v_dd <= self.v_th:
            raise ValueError("supply voltage must exceed the threshold voltage")
        law = lambda v: v / (v - self.v_th) ** self.a
        return law(v_dd) / law(self.v_nom)

    def static_power(self, v_dd: float) -> float:
        return self.p_stat_nom * (v_dd / self.v_nom) * math.exp((v_dd - self.v_nom) / self.v0)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CircuitProfile":
        return cls(**json.loads(text))


DEFAULT_PROFILE = CircuitProfile()


def load_profile(path) -> CircuitProfile:
    return CircuitProfile.from_json(Path(path).read_text())


def nominal_t_clk(profile: CircuitProfile, ensemble: RegularEnsemble, alphabet: QuantizedAlphabet) -> float:
    """Smallest clock period (0.1 ns steps) that is violation-free at ``v_nom``."""
    worst = DelayModel.build(profile, ensemble, alphabet).worst_case(profile.v_nom)
    return math.ceil(worst * 10 - 1e-9) / 10


@dataclass(frozen=True)
class DelayModel:
    """Per-output-bit base depths of both logic stages and the voltage law."""

    base_front: np.ndarray
    base_back: np.ndarray
    front_input_bits: int
    back_input_bits: int
    kappa_front: float
    kappa_back: float
    jitter: float
    profile: CircuitProfile

    @classmethod
    def build(cls, profile: CircuitProfile, ensemble: RegularEnsemble, alphabet: QuantizedAlphabet, acc_bits: int | None = None):
        w = alphabet.bit_width
        levels = math.ceil(math.log2(ensemble.d_c))
        sub_full = profile.t_sub + profile.t_bit * (w - 1)
        mu_head = profile.t_sub + profile.t_bit * np.arange(w)
        m1 = sub_full + profile.t_abs + profile.t_level * levels + profile.t_bit * np.arange(w - 1) / 2
        m2 = m1 + profile.t_m2
        s_tot = np.array([sub_full + profile.t_sign * levels])
        base_front = np.concatenate((mu_head, m1, m2, s_tot))
        acc = acc_bits or w
        base_back = profile.t_select + profile.t_bit * (np.arange(acc) + w)
        front_bits = ensemble.d_c * (2 * w + 2)
        back_bits = base_front.size
        return cls(
            base_front=base_front,
            base_back=base_back,
            front_input_bits=front_bits,
            back_input_bits=back_bits,
            kappa_front=profile.kappa_front / front_bits,
            kappa_back=profile.kappa_back / back_bits,
            jitter=profile.jitter,
            profile=profile,
        )

    def worst_case(self, v_dd: float) -> float:
        s = self.profile.delay_scale(v_dd)
        front = self.base_front.max() + self.kappa_front * self.front_input_bits + self.jitter
        back = self.base_back.max() + self.kappa_back * self.back_input_bits + self.jitter
        return float(max(front, back) * s)

    def violation_free(self, gamma: OperatingCondition) -> bool:
        return self.worst_case(gamma.v_dd) <= gamma.t_clk


@dataclass(frozen=True)
class ActivityRecord:
    toggles: np.ndarray  # (cycles, 3): input, internal, output register
    cycles: int

    @property
    def total(self) -> int:
        return int(self.toggles.sum())


def cycle_energy(toggles, gamma: OperatingCondition, profile: CircuitProfile):
    """Energy (pJ) of one cycle: dynamic energy from the toggles at the supply
    voltage (independent of the clock period) plus static power over ``t_clk``.

    The dynamic power is referenced to the nominal period, so the dynamic
    term is ``P_dyn * t_clk_nom`` with ``P_dyn = e_toggle * toggles * (v/v_nom)^2 / t_clk_nom``.
    """
    p_dyn = profile.e_toggle * np.asarray(toggles) * (gamma.v_dd / profile.v_nom) ** 2 / gamma.t_clk_nom
    return p_dyn * gamma.t_clk_nom + profile.static_power(gamma.v_dd) * gamma.t_clk


def _mask(width):
    return (1 << width) - 1


def _unsigned(v, width):
    return np.asarray(v, dtype=np.int64) & _mask(width)


def _signed(u, width):
    u = np.asarray(u, dtype=np.int64)
    return np.where(u >= 1 << (width - 1), u - (1 << width), u)


def _hamming(a, b):
    return np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1)


@dataclass
class StageState:
    """Previous input word and settled output of one logic stage."""

    prev_input: np.ndarray
    prev_settled: np.ndarray

    @classmethod
    def zeros(cls, batch, in_fields, out_fields):
        return cls(np.zeros((batch, in_fields), np.int64), np.zeros((batch, out_fields), np.int64))


def propagate(word, settled, state: StageState, widths, base, kappa, jitter_draw, gamma, profile):
    """Capture one stage's output at the clock edge.

    ``word`` is the stage input (unsigned fields, shape ``(B, k)``), ``settled``
    the ideal output fields (unsigned, ``(B, len(widths))``) and ``base`` the
    per-output-bit base depths, bit 0 of field 0 first.  A bit whose delay
    exceeds ``t_clk`` keeps its previous settled value.  Returns the captured
    fields, the new state and the number of input bits that toggled.
    """
    h = _hamming(word, state.prev_input)
    scale = profile.delay_scale(gamma.v_dd)
    slack = gamma.t_clk / scale - kappa * h
    late = (base[None, :] + jitter_draw) > slack[:, None]
    captured = settled.copy()
    pos = 0
    for f, w in enumerate(widths):
        bits = late[:, pos : pos + w]
        pos += w
        if not bits.any():
            continue
        mask = (bits.astype(np.int64) << np.arange(w)).sum(axis=1)
        captured[:, f] = (settled[:, f] & ~mask) | (state.prev_settled[:, f] & mask)
    return captured, StageState(word, settled), h


class TestCircuit:
    """One CN processor plus the VNP logic needed to evaluate computation trees.

    VNP 0 is the tree head; its belief total starts at 0 and is fed back from
    the output register after each layer.  The other ``d_c - 1`` VNPs receive
    ``(Lambda', lambda_prev)`` pairs from the test bench.
    """

    __test__ = False  # not a pytest class

    def __init__(self, ensemble: RegularEnsemble, alphabet: QuantizedAlphabet, offset: int, profile: CircuitProfile = DEFAULT_PROFILE, acc_bits: int | None = None):
        self.ensemble = ensemble
        self.alphabet = alphabet
        self.offset = offset
        self.profile = profile
        self.w = alphabet.bit_width
        self.q = alphabet.q
        self.acc_bits = acc_bits or self.w
        self.acc_limit = 2 ** (self.acc_bits - 1) - 1
        self.tot_bits = self.w + 2
        self.delays = DelayModel.build(profile, ensemble, alphabet, self.acc_bits)
        self.front_widths = (self.w, self.w - 1, self.w - 1, 1)
        self.back_widths = (self.acc_bits,)

    @property
    def layers(self) -> int:
        return self.ensemble.d_v - 1

    @property
    def jitter_bits(self) -> int:
        return self.delays.base_front.size + self.delays.base_back.size

    def violation_free(self, gamma: OperatingCondition) -> bool:
        return self.delays.violation_free(gamma)

    # -- combinational logic -------------------------------------------------

    def _front(self, tot, prev):
        """Stage 1: VNP fronts, min1/min2 tree and total sign, on signed inputs."""
        mu = np.clip(tot - prev, -self.q, self.q)
        mag = np.abs(mu)
        part = np.partition(mag, 1, axis=1)
        s_tot = (np.count_nonzero(mu < 0, axis=1) % 2).astype(np.int64)
        return np.stack((mu[:, 0], part[:, 0], part[:, 1], s_tot), axis=1)

    def _back(self, mu_head, m1, m2, s_tot):
        """Stage 2: head CN output (offset, select, sign) and the head VNP back."""
        mag = np.where(np.abs(mu_head) == m1, m2, m1)
        mag = np.maximum(0, mag - self.offset)
        sign_head = np.where(mu_head < 0, 1, 0)
        s = np.where((s_tot ^ sign_head) == 1, -1, 1)
        return np.clip(mu_head + s * mag, -self.acc_limit, self.acc_limit)

    def ideal(self, tot, prev) -> np.ndarray:
        """Fault-free tree output for inputs of shape ``(B, layers, d_c - 1)``."""
        head = np.zeros(tot.shape[0], dtype=np.int64)
        zero = np.zeros((tot.shape[0], 1), dtype=np.int64)
        for layer in range(self.layers):
            t = np.concatenate((head[:, None], tot[:, layer]), axis=1)
            p = np.concatenate((zero, prev[:, layer]), axis=1)
            f = self._front(t, p)
            head = self._back(f[:, 0], f[:, 1], f[:, 2], f[:, 3])
        return np.clip(head, -self.q, self.q)

    # -- clocked evaluation --------------------------------------------------

    def new_state(self, batch: int) -> dict:
        d_c = self.ensemble.d_c
        return {
            "input": np.zeros((batch, 2 * d_c), np.int64),
            "front": StageState.zeros(batch, 2 * d_c, 4),
            "back": StageState.zeros(batch, 4, 1),
            "output": np.zeros((batch, 1), np.int64),
        }

    def step(self, tot, prev, state: dict, gamma: OperatingCondition, jitter_draw):
        """One layer pass for a batch of trees: signed inputs ``tot``/``prev`` of
        shape ``(B, d_c)``.  Returns the captured (signed) head total and the
        register toggles ``(B, 3)``; ``state`` is updated in place."""
        w, tb = self.w, self.tot_bits
        in_word = np.concatenate((_unsigned(tot, tb), _unsigned(prev, w)), axis=1)
        t_in = _hamming(in_word, state["input"])
        state["input"] = in_word

        f = self._front(tot, prev)
        settled_f = np.stack([_unsigned(f[:, i], wd) for i, wd in enumerate(self.front_widths)], axis=1)
        nf = self.delays.base_front.size
        cap_f, state["front"], _ = propagate(
            in_word, settled_f, state["front"], self.front_widths, self.delays.base_front,
            self.delays.kappa_front, jitter_draw[:, :nf], gamma, self.profile,
        )
        mu_head = _signed(cap_f[:, 0], w)
        m1, m2, s_tot = cap_f[:, 1], cap_f[:, 2], cap_f[:, 3]
        back = _unsigned(self._back(mu_head, m1, m2, s_tot), self.acc_bits)[:, None]
        cap_b, state["back"], t_int = propagate(
            cap_f, back, state["back"], self.back_widths, self.delays.base_back,
            self.delays.kappa_back, jitter_draw[:, nf:], gamma, self.profile,
        )
        t_out = _hamming(cap_b, state["output"])
        state["output"] = cap_b
        toggles = np.stack((t_in, t_int, t_out), axis=1)
        return _signed(cap_b[:, 0], self.acc_bits), toggles

    def run(self, tot, prev, gamma: OperatingCondition, jitter, state: dict | None = None, interleave: int = 3):
        """Evaluate trees through the pipelined circuit.

        ``tot``/``prev``: signed non-head inputs of shape ``(B, T, layers, d_c - 1)``
        for ``B`` independent circuit instances each processing ``T`` trees;
        ``jitter``: uniform draws in [-1, 1] of shape ``(B, T, layers, jitter_bits)``.
        Trees are interleaved ``interleave`` at a time so each layer of a tree
        is issued after the previous layer of the same tree.  Returns the
        faulty outputs ``(B, T)``, per-tree energy ``(B, T)`` and the final state.
        """
        B, T = tot.shape[:2]
        if tot.shape[3] != self.ensemble.d_c - 1 or tot.shape[2] != self.layers:
            raise ValueError("tree input shape does not match the ensemble degrees")
        state = state or self.new_state(B)
        out = np.zeros((B, T), np.int64)
        energy = np.zeros((B, T))
        stat = self.profile.static_power(gamma.v_dd) * gamma.t_clk
        dyn = self.profile.e_toggle * (gamma.v_dd / self.profile.v_nom) ** 2
        zero = np.zeros((B, 1), np.int64)
        k = max(1, interleave)
        for start in range(0, T, k):
            block = range(start, min(T, start + k))
            head = {i: np.zeros(B, np.int64) for i in block}
            for layer in range(self.layers):
                for i in block:
                    t_full = np.concatenate((np.clip(head[i], -self.q, self.q)[:, None], tot[:, i, layer]), axis=1)
                    p_full = np.concatenate((zero, prev[:, i, layer]), axis=1)
                    j = jitter[:, i, layer] * self.delays.jitter
                    head[i], tg = self.step(t_full, p_full, state, gamma, j)
                    energy[:, i] += dyn * tg.sum(axis=1) + stat
            for i in block:
                out[:, i] = np.clip(head[i], -self.q, self.q)
        return out, energy, state


def eval_computation_tree(circuit: TestCircuit, tot, prev, gamma: OperatingCondition, state: dict | None = None, jitter=None):
    """Evaluate a single tree (inputs ``(layers, d_c - 1)``); returns ``(faulty, ideal, state)``."""
    tot = np.asarray(tot, dtype=np.int64)[None, None]
    prev = np.asarray(prev, dtype=np.int64)[None, None]
    if jitter is None:
        jitter = np.zeros((1, 1, circuit.layers, circuit.jitter_bits))
    out, _, state = circuit.run(tot, prev, gamma, jitter, state, interleave=1)
    return int(out[0, 0]), int(circuit.ideal(tot[:, 0], prev[:, 0])[0]), state
