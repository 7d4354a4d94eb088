"""Shot-noise-unit calibration.

Convention used throughout the package: a vacuum state has quadrature
variance **1** (not 1/2).  Modulation variance, electronic noise and excess
noise are all expressed against that reference.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientSamples, NonPositiveShotNoise

MIN_CALIBRATION_SAMPLES = 10_000
DEFAULT_V_EL = 0.1


@dataclass(frozen=True)
class CalibrationSet:
    """Trusted receiver constants.

    ``shot_noise_variance`` and ``electronic_noise_variance`` are per
    quadrature in raw (ADC) units; ``v_el`` is their ratio in SNU.
    """

    shot_noise_variance: float
    electronic_noise_variance: float
    eta: float

    def __post_init__(self):
        if not self.shot_noise_variance > 0:
            raise NonPositiveShotNoise(f"shot-noise variance must be > 0, got {self.shot_noise_variance}")
        if self.electronic_noise_variance < 0:
            raise ValueError("electronic noise variance must be >= 0")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")

    @property
    def v_el(self) -> float:
        return self.electronic_noise_variance / self.shot_noise_variance

    @classmethod
    def from_snu(cls, shot_noise_variance: float, v_el: float, eta: float) -> "CalibrationSet":
        return cls(shot_noise_variance, v_el * shot_noise_variance, eta)


def quadrature_variance(samples) -> float:
    """Per-quadrature sample variance; complex input averages I and Q."""
    x = np.asarray(samples)
    if np.iscomplexobj(x):
        return 0.5 * (np.var(x.real, ddof=1) + np.var(x.imag, ddof=1))
    return float(np.var(x, ddof=1))


def _check_count(name, x):
    if x.size < MIN_CALIBRATION_SAMPLES:
        raise InsufficientSamples(
            f"{name} has {x.size} samples per quadrature, need >= {MIN_CALIBRATION_SAMPLES}"
        )


def calibrate(vacuum_capture, electronic_capture=None, eta: float = 1.0,
              v_el_default: float = DEFAULT_V_EL) -> CalibrationSet:
    """Build a :class:`CalibrationSet` from calibration-mode captures.

    ``vacuum_capture`` is taken with the LO on and the signal blocked;
    ``electronic_capture`` with the LO off.  When no electronic capture is
    available, ``v_el_default`` (SNU) is assumed.
    """
    vac = np.asarray(vacuum_capture)
    _check_count("vacuum capture", vac)
    var_vac = quadrature_variance(vac)
    if electronic_capture is None:
        shot = var_vac / (1.0 + v_el_default)
        return CalibrationSet(shot, v_el_default * shot, eta)

    el = np.asarray(electronic_capture)
    _check_count("electronic capture", el)
    var_el = quadrature_variance(el)
    shot = var_vac - var_el
    if shot <= 0:
        raise NonPositiveShotNoise(
            f"vacuum variance {var_vac:.6g} <= electronic variance {var_el:.6g}; "
            "captures swapped or detector model broken"
        )
    return CalibrationSet(shot, var_el, eta)


def to_snu(samples, cal: CalibrationSet) -> np.ndarray:
    """Scale raw quadratures so that the vacuum has unit variance."""
    return np.asarray(samples) / np.sqrt(cal.shot_noise_variance)


def from_snu(samples, cal: CalibrationSet) -> np.ndarray:
    return np.asarray(samples) * np.sqrt(cal.shot_noise_variance)


def vacuum_tolerance(n: int, k: float = 3.0) -> float:
    """k-sigma half-width for the sample variance of n unit-variance Gaussians."""
    return k * np.sqrt(2.0 / n)


def synthetic_captures(shot_noise_variance: float, v_el: float, n: int,
                       rng: Optional[np.random.Generator] = None):
    """Draw (vacuum, electronic) complex calibration captures with known truth."""
    rng = np.random.default_rng() if rng is None else rng
    el_var = v_el * shot_noise_variance
    vac_var = shot_noise_variance + el_var

    def draw(var):
        s = np.sqrt(var)
        return s * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

    return draw(vac_var), draw(el_var)
