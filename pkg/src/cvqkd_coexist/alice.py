"""Quantum transmitter: shaped QAM constellation, pilot framing, RRC pulses."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.signal import upfirdn

from .errors import InvalidOrder

DEFAULT_PILOT_SEED = 0x5EED


@dataclass(frozen=True)
class ConstellationSpec:
    """Square QAM grid with Maxwell-Boltzmann probabilities.

    ``points`` are unit-normalized (mean energy 1 under uniform use);
    transmitted amplitudes are ``scale * points``.
    """

    order: int
    points: np.ndarray
    probabilities: np.ndarray
    nu: float
    scale: float

    @property
    def amplitudes(self) -> np.ndarray:
        return self.scale * self.points

    @property
    def quadrature_variance(self) -> float:
        a = self.amplitudes
        return float(np.sum(self.probabilities * a.real ** 2))

    @property
    def entropy_bits(self) -> float:
        p = self.probabilities[self.probabilities > 0]
        return float(-np.sum(p * np.log2(p)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(self.probabilities)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        return self.amplitudes[np.minimum(idx, self.order - 1)]


def qam_grid(order: int) -> np.ndarray:
    m = int(round(np.sqrt(order)))
    if order < 4 or m * m != order:
        raise InvalidOrder(f"QAM order must be a perfect square >= 4, got {order}")
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    return grid / np.sqrt(np.mean(np.abs(grid) ** 2))


def mb_probabilities(points: np.ndarray, nu: float) -> np.ndarray:
    w = np.exp(-nu * np.abs(points) ** 2)
    return w / w.sum()


def build_constellation(order: int, nu: float, V_A: float) -> ConstellationSpec:
    """Maxwell-Boltzmann shaped ``order``-QAM with per-quadrature variance ``V_A``."""
    if nu < 0:
        raise ValueError("shaping rate nu must be >= 0")
    if not V_A > 0:
        raise ValueError("V_A must be > 0")
    points = qam_grid(order)
    probs = mb_probabilities(points, nu)
    unit_var = float(np.sum(probs * points.real ** 2))
    scale = float(np.sqrt(V_A / unit_var))
    return ConstellationSpec(order, points, probs, float(nu), scale)


def shaping_rate_for_entropy(order: int, entropy_bits: float) -> float:
    """Shaping rate giving the requested entropy (bits/symbol)."""
    points = qam_grid(order)
    h_max = np.log2(order)
    if not 0 < entropy_bits <= h_max:
        raise ValueError(f"entropy must be in (0, {h_max}]")
    if np.isclose(entropy_bits, h_max):
        return 0.0

    def excess(nu):
        p = mb_probabilities(points, nu)
        p = p[p > 0]
        return -np.sum(p * np.log2(p)) - entropy_bits

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    return float(brentq(excess, 0.0, hi, xtol=1e-14))


def qpsk_pilots(n: int, seed: int = DEFAULT_PILOT_SEED) -> np.ndarray:
    """Known pseudo-random QPSK sequence with unit per-quadrature variance."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(2, n))
    return (2 * bits[0] - 1) + 1j * (2 * bits[1] - 1).astype(float)


@dataclass(frozen=True)
class FrameSpec:
    symbol_rate: float = 250e6
    pilot_fraction: float = 0.5
    pilot_sequence: np.ndarray = field(default_factory=lambda: qpsk_pilots(4096), repr=False)
    frame_length: int = 100_000
    samples_per_symbol: int = 8
    rrc_rolloff: float = 0.2
    rrc_span: int = 64

    def __post_init__(self):
        if not 0 < self.pilot_fraction < 1:
            raise ValueError("pilot_fraction must lie in (0, 1)")
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")
        if not 0 < self.rrc_rolloff <= 1:
            raise ValueError("rrc_rolloff must lie in (0, 1]")

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol


def pilot_mask(n: int, pilot_fraction: float) -> np.ndarray:
    """Evenly spread pilots, starting with a pilot; 0.5 gives P,D,P,D,..."""
    i = np.arange(n + 1)
    # exact for dyadic fractions, stable to float noise otherwise
    cum = np.ceil(i * pilot_fraction - 1e-9).astype(np.int64)
    return np.diff(cum) > 0


@dataclass(frozen=True)
class SymbolFrame:
    tx_symbols: np.ndarray
    pilot_mask: np.ndarray
    spec: FrameSpec

    @property
    def pilots(self) -> np.ndarray:
        return self.tx_symbols[self.pilot_mask]

    @property
    def data(self) -> np.ndarray:
        return self.tx_symbols[~self.pilot_mask]

    @property
    def pilot_index(self) -> np.ndarray:
        return np.flatnonzero(self.pilot_mask)

    @property
    def data_index(self) -> np.ndarray:
        return np.flatnonzero(~self.pilot_mask)

    def __len__(self):
        return self.tx_symbols.size


def generate_frame(const: ConstellationSpec, spec: FrameSpec, n_symbols: int,
                   rng_seed: int) -> SymbolFrame:
    """Draw i.i.d. data symbols and interleave the cyclic pilot sequence.

    Pilots are scaled to the data's average power.
    """
    if n_symbols < 2:
        raise ValueError("need at least 2 symbols")
    rng = np.random.default_rng(rng_seed)
    mask = pilot_mask(n_symbols, spec.pilot_fraction)
    n_p = int(mask.sum())
    seq = np.asarray(spec.pilot_sequence)
    pilots = np.sqrt(const.quadrature_variance) * np.resize(seq, n_p)
    tx = np.empty(n_symbols, dtype=complex)
    tx[mask] = pilots
    tx[~mask] = const.sample(n_symbols - n_p, rng)
    return SymbolFrame(tx, mask, spec)


@lru_cache(maxsize=16)
def _rrc_cached(rolloff: float, sps: int, span: int) -> np.ndarray:
    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    b = rolloff
    h = np.empty_like(t)
    at0 = np.isclose(t, 0.0)
    sing = np.isclose(np.abs(t), 1.0 / (4 * b))
    reg = ~(at0 | sing)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2)
    )
    h[at0] = 1 - b + 4 * b / np.pi
    h[sing] = (b / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )
    h /= np.sqrt(np.sum(h ** 2))
    h.setflags(write=False)
    return h


def rrc_taps(rolloff: float, sps: int, span: int = 64) -> np.ndarray:
    """Root-raised-cosine taps normalized to unit energy (sum of squares = 1)."""
    return _rrc_cached(float(rolloff), int(sps), int(span))


def pulse_shape(frame: SymbolFrame) -> np.ndarray:
    """Upsample and RRC-filter the frame.

    The full convolution is kept: symbol ``k`` peaks at sample
    ``k * sps + (len(taps) - 1) // 2``.  With unit-energy taps a matched
    filter returns each symbol with unit gain.
    """
    s = frame.spec
    h = rrc_taps(s.rrc_rolloff, s.samples_per_symbol, s.rrc_span)
    return upfirdn(h, frame.tx_symbols, up=s.samples_per_symbol)


def pilot_waveform(frame: SymbolFrame) -> np.ndarray:
    """Pulse-shaped waveform of the pilots alone (data positions zeroed)."""
    tx = np.where(frame.pilot_mask, frame.tx_symbols, 0)
    s = frame.spec
    return upfirdn(rrc_taps(s.rrc_rolloff, s.samples_per_symbol, s.rrc_span), tx,
                   up=s.samples_per_symbol)
