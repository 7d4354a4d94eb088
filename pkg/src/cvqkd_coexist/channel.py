"""Optical path between Alice and Bob.

Losses of fiber and free-space segments, noise leaking from co-propagating
classical WDM channels (amplifier ASE, optional spontaneous Raman), laser
phase noise and carrier frequency offset.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.constants import c as C_LIGHT, h as PLANCK
from scipy.integrate import trapezoid

from .errors import MissingCoefficient

QUANTUM_WAVELENGTH_NM = 1550.0


def nm_to_hz(wavelength_nm: float) -> float:
    return C_LIGHT / (wavelength_nm * 1e-9)


def bandwidth_nm_to_hz(bw_nm: float, center_nm: float) -> float:
    return C_LIGHT * bw_nm * 1e-9 / (center_nm * 1e-9) ** 2


def dbm_to_w(p_dbm: float) -> float:
    return 1e-3 * 10 ** (p_dbm / 10)


def db_to_lin(db: float) -> float:
    return 10 ** (db / 10)


@dataclass(frozen=True)
class WdmChannel:
    center_wavelength: float  # nm
    baud: float  # Hz
    power: float  # dBm


@dataclass(frozen=True)
class WdmPlan:
    channels: tuple
    grid_spacing: float = 50.0  # GHz

    @property
    def total_power_dbm(self) -> float:
        if not self.channels:
            return -np.inf
        return 10 * np.log10(sum(dbm_to_w(ch.power) for ch in self.channels) / 1e-3)

    @property
    def total_power_w(self) -> float:
        return sum(dbm_to_w(ch.power) for ch in self.channels)

    def check_clear_of(self, quantum_center_nm: float, quantum_bandwidth_hz: float) -> None:
        fq = nm_to_hz(quantum_center_nm)
        for ch in self.channels:
            gap = abs(nm_to_hz(ch.center_wavelength) - fq)
            if gap < 0.5 * (ch.baud + quantum_bandwidth_hz):
                raise ValueError(
                    f"classical channel at {ch.center_wavelength:.3f} nm overlaps the quantum band"
                )


def make_plan(nearest_nm: float, direction: int, total_power_dbm: float,
              n_channels: int = 15, baud: float = 45e9,
              grid_spacing_ghz: float = 50.0) -> WdmPlan:
    """Equal-power channels on a frequency grid.

    The first channel sits at ``nearest_nm``; the rest step away from the
    quantum carrier (``direction=+1`` towards longer wavelengths).
    """
    f0 = nm_to_hz(nearest_nm)
    step = -direction * grid_spacing_ghz * 1e9
    per_ch = total_power_dbm - 10 * np.log10(n_channels)
    chans = tuple(
        WdmChannel(C_LIGHT / (f0 + k * step) * 1e9, baud, per_ch) for k in range(n_channels)
    )
    return WdmPlan(chans, grid_spacing_ghz)


@dataclass(frozen=True)
class LinkSpec:
    fiber_length: float = 0.0  # km
    fiber_attenuation: float = 0.2  # dB/km
    fso_loss: float = 0.0  # dB
    extra_loss: float = 0.0  # dB

    def __post_init__(self):
        if min(self.fiber_length, self.fiber_attenuation, self.fso_loss, self.extra_loss) < 0:
            raise ValueError("link lengths and losses must be >= 0")

    @property
    def loss_db(self) -> float:
        return self.fiber_length * self.fiber_attenuation + self.fso_loss + self.extra_loss


def link_transmittance(link: LinkSpec) -> float:
    return 10 ** (-link.loss_db / 10)


@dataclass(frozen=True)
class BpfSpec:
    center_wavelength: float = QUANTUM_WAVELENGTH_NM  # nm
    bw_3db: float = 1.0  # nm
    order: float = 2.0
    insertion_loss: float = 0.0  # dB

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("super-Gaussian order must be >= 1")
        if self.bw_3db <= 0:
            raise ValueError("bandwidth must be > 0")

    @property
    def bw_hz(self) -> float:
        return bandwidth_nm_to_hz(self.bw_3db, self.center_wavelength)


def bpf_transfer(bpf: BpfSpec, frequency_offset_from_center) -> np.ndarray:
    """Amplitude response of a super-Gaussian band-pass filter.

    ``|H(f)|^2 = 10^(-IL/10) * exp(-ln2 * (2 f / B)^(2 order))``.
    """
    f = np.asarray(frequency_offset_from_center, dtype=float)
    power = db_to_lin(-bpf.insertion_loss) * np.exp(
        -np.log(2) * np.abs(2 * f / bpf.bw_hz) ** (2 * bpf.order)
    )
    return np.sqrt(power)


@dataclass(frozen=True)
class AseModel:
    """Residual amplifier noise reaching the quantum band.

    Around each classical channel the processor passes the amplifier ASE at
    ``psd_at_source`` (W/Hz at ``reference_power`` total launch, Gaussian
    pedestal whose FWHM is the channel baud rate).  Everywhere else it is
    suppressed by ``notch_suppression`` dB.  All levels scale linearly with
    the total classical launch power.
    """

    psd_at_source: float = 1e-22
    notch_suppression: float = 20.0  # dB
    reference_power: float = 0.0  # dBm total

    def __post_init__(self):
        if self.psd_at_source < 0 or self.notch_suppression < 0:
            raise ValueError("psd and notch suppression must be >= 0")


def ase_psd(ase: AseModel, plan: WdmPlan, freq_hz) -> np.ndarray:
    """ASE power spectral density (W/Hz) at absolute optical frequencies."""
    f = np.asarray(freq_hz, dtype=float)
    if not plan.channels:
        return np.zeros_like(f)
    scale = plan.total_power_w / dbm_to_w(ase.reference_power) * ase.psd_at_source
    mean_ch = plan.total_power_w / len(plan.channels)
    shape = np.full_like(f, db_to_lin(-ase.notch_suppression))
    for ch in plan.channels:
        sigma = ch.baud / (2 * np.sqrt(2 * np.log(2)))
        shape += (dbm_to_w(ch.power) / mean_ch) * np.exp(
            -0.5 * ((f - nm_to_hz(ch.center_wavelength)) / sigma) ** 2
        )
    return scale * shape


def _integration_grid(signal_bandwidth: float, plan: WdmPlan) -> np.ndarray:
    min_baud = min((ch.baud for ch in plan.channels), default=signal_bandwidth)
    step = min(signal_bandwidth / 64, min_baud / 24)
    n = int(np.ceil(signal_bandwidth / step)) | 1
    return np.linspace(-signal_bandwidth / 2, signal_bandwidth / 2, max(n, 65))


def ase_inband_power(ase: AseModel, plan: WdmPlan, bpf: Optional[BpfSpec],
                     quantum_center: float, signal_bandwidth: float) -> float:
    """ASE power (W) collected in a window of ``signal_bandwidth`` Hz.

    The window is centered on ``quantum_center`` (nm) and weighted by the
    band-pass filter power response; ``bpf=None`` means no filter.
    """
    if signal_bandwidth <= 0:
        raise ValueError("signal_bandwidth must be > 0")
    if not plan.channels or ase.psd_at_source == 0:
        return 0.0
    df = _integration_grid(signal_bandwidth, plan)
    fq = nm_to_hz(quantum_center)
    s = ase_psd(ase, plan, fq + df)
    if bpf is not None:
        s = s * bpf_transfer(bpf, fq + df - nm_to_hz(bpf.center_wavelength)) ** 2
    return float(trapezoid(s, df))


def noise_to_excess(P_inband: float, quantum_wavelength: float, symbol_rate: float) -> float:
    """Excess noise (SNU) of in-band noise power P: twice the photons per symbol."""
    if P_inband < 0:
        raise ValueError("noise power must be >= 0")
    return 2.0 * P_inband / (PLANCK * nm_to_hz(quantum_wavelength) * symbol_rate)


@dataclass(frozen=True)
class RamanTable:
    """Spontaneous Raman coefficient rho(delta_lambda) in 1/(km nm).

    ``delta_lambda`` is classical minus quantum wavelength (nm).  Values are
    linearly interpolated; requests outside the table raise.
    """

    delta_nm: np.ndarray
    rho: np.ndarray

    def __call__(self, delta_nm):
        d = np.atleast_1d(np.asarray(delta_nm, dtype=float))
        lo, hi = self.delta_nm[0], self.delta_nm[-1]
        bad = (d < lo) | (d > hi)
        if np.any(bad):
            raise MissingCoefficient(
                f"no Raman coefficient for offset {d[bad][0]:.3f} nm (table covers [{lo}, {hi}])"
            )
        return np.interp(d, self.delta_nm, self.rho)

    @classmethod
    def load(cls, path) -> "RamanTable":
        data = np.loadtxt(path, comments="#", ndmin=2)
        order = np.argsort(data[:, 0])
        return cls(data[order, 0], data[order, 1])


def default_raman_table() -> RamanTable:
    return RamanTable.load(Path(__file__).with_name("data") / "raman_default.txt")


def raman_power(plan: WdmPlan, link: LinkSpec, quantum_center: float,
                coefficients: RamanTable, reference_bandwidth_nm: float = 1.0) -> float:
    """Spontaneous Raman power (W) scattered into the quantum band.

    Not validated against measurements; off by default in scenarios.
    """
    if link.fiber_length == 0 or not plan.channels:
        return 0.0
    alpha = link.fiber_attenuation * np.log(10) / 10  # 1/km
    L = link.fiber_length
    l_eff = L if alpha == 0 else (1 - np.exp(-alpha * L)) / alpha
    deltas = np.array([ch.center_wavelength - quantum_center for ch in plan.channels])
    powers = np.array([dbm_to_w(ch.power) for ch in plan.channels])
    return float(np.sum(powers * coefficients(deltas)) * l_eff * reference_bandwidth_nm)


@dataclass(frozen=True)
class LaserSpec:
    combined_linewidth: float = 0.0  # Hz, Tx laser + LO
    frequency_offset: float = 0.0  # Hz

    def __post_init__(self):
        if self.combined_linewidth < 0:
            raise ValueError("linewidth must be >= 0")


def wiener_phase(n: int, linewidth: float, sample_rate: float,
                 rng: np.random.Generator) -> np.ndarray:
    if linewidth == 0:
        return np.zeros(n)
    step = np.sqrt(2 * np.pi * linewidth / sample_rate)
    return np.cumsum(step * rng.standard_normal(n))


def propagate(waveform, T: float, laser: LaserSpec, added_noise_psd: float,
              rng_seed: int, sample_rate: float = 2e9) -> np.ndarray:
    """Lossy channel with carrier offset, laser phase noise and additive noise.

    ``added_noise_psd`` is in SNU/Hz per quadrature at the channel output, so
    each sample receives per-quadrature variance ``added_noise_psd *
    sample_rate`` (the same variance a unit-energy matched filter reports
    per symbol).
    """
    if not 0 < T <= 1:
        raise ValueError(f"transmittance must lie in (0, 1], got {T}")
    x = np.asarray(waveform, dtype=complex)
    rng = np.random.default_rng(rng_seed)
    n = x.size
    out = np.sqrt(T) * x
    phase = wiener_phase(n, laser.combined_linewidth, sample_rate, rng)
    if laser.frequency_offset:
        phase = phase + 2 * np.pi * laser.frequency_offset * np.arange(n) / sample_rate
    if np.any(phase):
        out = out * np.exp(1j * phase)
    if added_noise_psd > 0:
        sigma = np.sqrt(added_noise_psd * sample_rate)
        out = out + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return out
