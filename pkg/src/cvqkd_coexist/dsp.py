"""Bob's receiver: heterodyne detection and pilot-aided digital recovery.

Stage order used by the scenario runner::

    detect -> estimate_cfo / compensate_cfo -> matched_filter_downsample
           -> equalize -> phase_recover

All stages are pure functions of their inputs (plus an explicit seed for
``detect``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np
from scipy.signal import fftconvolve

from .alice import FrameSpec, SymbolFrame, pilot_waveform, rrc_taps
from .errors import AmbiguousPeak, Diverged, InsufficientSamples, TimingNotFound
from .snu import CalibrationSet, to_snu

logger = logging.getLogger(__name__)

MIN_CFO_PILOTS = 10_000


@dataclass(frozen=True)
class RxCapture:
    samples: np.ndarray  # raw units
    sample_rate: float
    cal: CalibrationSet


@dataclass(frozen=True)
class DspConfig:
    cfo_search_range: float = 50e6
    equalizer_taps: int = 21
    equalizer_step: float = 1e-3
    phase_pilot_window: int = 32
    n_fft: int = 2 ** 20

    def __post_init__(self):
        if self.equalizer_taps < 1 or self.equalizer_taps % 2 == 0:
            raise ValueError("equalizer_taps must be odd and >= 1")
        if self.equalizer_step < 0:
            raise ValueError("equalizer_step must be >= 0")
        if self.phase_pilot_window < 1:
            raise ValueError("phase_pilot_window must be >= 1")


@dataclass(frozen=True)
class RecoveredBlock:
    tx_data_symbols: np.ndarray
    rx_data_symbols: np.ndarray  # SNU
    block_length: int
    residual_cfo: float = 0.0
    mean_phase_error: float = 0.0

    def __post_init__(self):
        if self.tx_data_symbols.shape != self.rx_data_symbols.shape:
            raise ValueError("tx and rx symbol sequences differ in length")


def quantize(samples: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    """Uniform mid-rise ADC model applied per quadrature (optional hook)."""
    step = 2 * full_scale / 2 ** bits

    def q(v):
        return np.clip((np.floor(v / step) + 0.5) * step, -full_scale + step / 2, full_scale - step / 2)

    return q(samples.real) + 1j * q(samples.imag)


def detect(optical_waveform, cal: CalibrationSet, rng_seed: int,
           sample_rate: float = 2e9, excess_noise: float = 0.0,
           adc_bits: Optional[int] = None, adc_full_scale: Optional[float] = None) -> RxCapture:
    """Heterodyne detection with trusted efficiency and electronic noise.

    The input is the mean optical field (plus any classical noise already
    added) in SNU amplitude.  Each output quadrature is
    ``sqrt(eta/2) * field + vacuum + electronic``, where the vacuum term
    (variance 1) lumps the signal's own vacuum, the ``1 - eta`` loss vacuum
    and the vacuum entering the 3-dB split.  ``excess_noise`` adds untrusted
    receiver-referred noise (SNU, xi_B convention).
    """
    x = np.asarray(optical_waveform, dtype=complex)
    rng = np.random.default_rng(rng_seed)
    noise_var = 1.0 + cal.v_el + 0.5 * excess_noise
    sigma = np.sqrt(noise_var)
    y = np.sqrt(cal.eta / 2) * x + sigma * (
        rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
    )
    raw = np.sqrt(cal.shot_noise_variance) * y
    if adc_bits is not None:
        fs = adc_full_scale if adc_full_scale is not None else 6 * np.sqrt(cal.shot_noise_variance * noise_var)
        raw = quantize(raw, adc_bits, fs)
    return RxCapture(raw, sample_rate, cal)


def electronic_capture(cal: CalibrationSet, n: int, rng_seed: int) -> np.ndarray:
    """LO-off calibration capture: electronic noise only, raw units."""
    rng = np.random.default_rng(rng_seed)
    s = np.sqrt(cal.electronic_noise_variance)
    return s * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def _parabolic(a: float, b: float, c: float) -> float:
    den = a - 2 * b + c
    return 0.0 if den == 0 else 0.5 * (a - c) / den


def estimate_cfo(capture: RxCapture, frame: SymbolFrame, cfg: DspConfig = DspConfig()) -> float:
    """Carrier frequency offset from the pilot-correlation spectrum.

    The capture is multiplied by the conjugate of the known pilot-only
    waveform; the strongest line within ``cfg.cfo_search_range`` is refined
    by parabolic interpolation.
    """
    if frame.pilot_mask.sum() < MIN_CFO_PILOTS:
        raise InsufficientSamples(f"CFO estimation needs >= {MIN_CFO_PILOTS} pilots")
    ref = pilot_waveform(frame)
    y = capture.samples
    n = min(ref.size, y.size)
    z = y[:n] * np.conj(ref[:n])
    n_fft = max(cfg.n_fft, 1 << int(np.ceil(np.log2(n))))
    mag = np.abs(np.fft.fft(z, n_fft))
    freqs = np.fft.fftfreq(n_fft, 1.0 / capture.sample_rate)
    band = np.flatnonzero(np.abs(freqs) <= cfg.cfo_search_range)
    k = band[np.argmax(mag[band])]
    peak = mag[k]

    guard = 4 * int(np.ceil(n_fft / n)) + 2
    far = band[np.abs((band - k + n_fft // 2) % n_fft - n_fft // 2) > guard]
    if far.size and mag[far].max() ** 2 >= peak ** 2 * 10 ** (-0.1):
        raise AmbiguousPeak("two spectral peaks within 1 dB; offset outside search range?")

    delta = _parabolic(mag[(k - 1) % n_fft], peak, mag[(k + 1) % n_fft])
    return float((freqs[k] + delta * capture.sample_rate / n_fft))


def compensate_cfo(capture: RxCapture, cfo: float) -> RxCapture:
    if cfo == 0:
        return capture
    t = np.arange(capture.samples.size) / capture.sample_rate
    return replace(capture, samples=capture.samples * np.exp(-2j * np.pi * cfo * t))


def matched_filter_downsample(capture: RxCapture, frame: SymbolFrame) -> np.ndarray:
    """RRC matched filter and symbol-rate sampling, output in SNU.

    The sampling phase (8 candidates at 8 samples/symbol) is the one with
    the largest pilot correlation.  Its magnitude must exceed three times
    the mean correlation against decorrelated (lagged) pilot copies.
    """
    spec = frame.spec
    sps = spec.samples_per_symbol
    h = rrc_taps(spec.rrc_rolloff, sps, spec.rrc_span)
    y = fftconvolve(to_snu(capture.samples, capture.cal), h[::-1])
    d0 = h.size - 1
    n = len(frame)
    p_idx = frame.pilot_index
    pilots = frame.pilots
    y = np.concatenate([y, np.zeros(n * sps + d0 + sps)])

    offsets = np.arange(-(sps // 2) + 1, sps // 2 + 1)
    corr = np.empty(offsets.size)
    for i, j in enumerate(offsets):
        start = d0 + j
        if start < 0:
            corr[i] = 0.0
            continue
        sym = y[start + sps * p_idx]
        corr[i] = np.abs(np.vdot(pilots, sym))
    best = int(np.argmax(corr))
    start = d0 + offsets[best]
    symbols = y[start: start + sps * n: sps][:n]

    sp = symbols[p_idx]
    lags = (17, 31, 47, 61, 89, 107, 131)
    floor = np.mean([np.abs(np.vdot(np.roll(pilots, lag), sp)) for lag in lags])
    if not corr[best] > 3 * floor:
        raise TimingNotFound(
            f"pilot correlation {corr[best]:.3g} not above 3x decorrelated level {floor:.3g}"
        )
    return symbols


@numba.njit(cache=True)
def _lms_train(x, pilot_idx, pilots, taps, mu):
    half = taps // 2
    n = x.size
    w = np.zeros(taps, dtype=np.complex128)
    w[half] = 1.0
    err = np.empty(pilot_idx.size)
    for k in range(pilot_idx.size):
        m = pilot_idx[k]
        z = 0j
        for j in range(taps):
            i = m + half - j
            if 0 <= i < n:
                z += w[j] * x[i]
        e = pilots[k] - z
        err[k] = e.real * e.real + e.imag * e.imag
        if mu != 0.0:
            for j in range(taps):
                i = m + half - j
                if 0 <= i < n:
                    w[j] += mu * e * np.conj(x[i])
    return w, err


def lms_train(symbols, frame: SymbolFrame, cfg: DspConfig):
    """Pilot-directed LMS training.

    Returns the raw taps (center-tap convention) and the squared pilot
    error history.
    """
    x = np.ascontiguousarray(symbols, dtype=np.complex128)
    return _lms_train(x, frame.pilot_index.astype(np.int64),
                      np.ascontiguousarray(frame.pilots, dtype=np.complex128),
                      cfg.equalizer_taps, float(cfg.equalizer_step))


def equalize(symbols, frame: SymbolFrame, cfg: DspConfig, return_taps: bool = False):
    """Pilot-trained FIR equalizer applied to every symbol.

    Taps are rescaled to unit norm before use.  LMS also learns the channel
    gain; a unit-norm filter leaves white noise power, and thus the SNU
    calibration, unchanged, so gain is left to parameter estimation.
    """
    x = np.asarray(symbols, dtype=complex)
    w, _ = lms_train(x, frame, cfg)
    norm = np.linalg.norm(w)
    if not np.isfinite(norm) or norm == 0:
        raise Diverged("equalizer taps are not finite")
    w = w / norm
    out = np.convolve(x, w, mode="same")
    p_in = np.mean(np.abs(x) ** 2)
    if not np.mean(np.abs(out) ** 2) <= 10 * p_in:
        raise Diverged("equalizer output power exceeds 10x input power")
    return (out, w) if return_taps else out


def _moving_average(c: np.ndarray, window: int) -> np.ndarray:
    """Centered moving mean; windows shrink at the edges."""
    n = c.size
    window = min(window, n)
    cs = np.concatenate([[0], np.cumsum(c)])
    lo = np.clip(np.arange(n) - (window - 1) // 2, 0, n)
    hi = np.clip(np.arange(n) + window // 2 + 1, 0, n)
    return (cs[hi] - cs[lo]) / (hi - lo)


def phase_recover(symbols, frame: SymbolFrame, cfg: DspConfig) -> RecoveredBlock:
    """Pilot-based carrier phase recovery.

    Per-pilot products ``rx * conj(tx)`` are first de-rotated by a residual
    frequency estimate, averaged over ``phase_pilot_window`` pilots, turned
    into an unwrapped phase trace and linearly interpolated onto the data
    positions.  Averaging the complex products (rather than the noisy
    angles) keeps the estimate usable at quantum-level SNR.
    """
    y = np.asarray(symbols, dtype=complex)
    p_idx = frame.pilot_index
    d_idx = frame.data_index
    c = y[p_idx] * np.conj(frame.pilots)
    W = cfg.phase_pilot_window

    lag = int(max(1, min(W, c.size // 4)))
    span = p_idx[lag:] - p_idx[:-lag]
    r = np.vdot(c[:-lag], c[lag:])
    omega = float(np.angle(r) / np.mean(span)) if span.size else 0.0  # rad/symbol

    smoothed = _moving_average(c * np.exp(-1j * omega * p_idx), W)
    theta_p = np.unwrap(np.angle(smoothed))
    theta_d = np.interp(d_idx, p_idx, theta_p) + omega * d_idx
    theta_p = theta_p + omega * p_idx

    rx = y[d_idx] * np.exp(-1j * theta_d)
    resid = np.angle(np.vdot(frame.pilots, y[p_idx] * np.exp(-1j * theta_p)))
    return RecoveredBlock(
        tx_data_symbols=frame.data,
        rx_data_symbols=rx,
        block_length=len(frame),
        residual_cfo=omega * frame.spec.symbol_rate / (2 * np.pi),
        mean_phase_error=float(resid),
    )


def recover(capture: RxCapture, frame: SymbolFrame, cfg: DspConfig) -> RecoveredBlock:
    """Full receiver chain for one block."""
    cfo = estimate_cfo(capture, frame, cfg)
    cap = compensate_cfo(capture, cfo)
    symbols = matched_filter_downsample(cap, frame)
    symbols = equalize(symbols, frame, cfg)
    block = phase_recover(symbols, frame, cfg)
    logger.debug("block: cfo=%.1f Hz residual=%.1f Hz", cfo, block.residual_cfo)
    return block
