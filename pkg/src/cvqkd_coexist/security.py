"""Parameter estimation and asymptotic key rate, trusted-detector model.

Gaussian-modulated coherent states with heterodyne detection and reverse
reconciliation; the receiver's efficiency ``eta`` and electronic noise
``v_el`` are trusted and excluded from Eve's purification.  Shaped
256-QAM at the configured modulation variance is treated as its Gaussian
equivalent.

Notation (SNU, vacuum = 1): ``V = V_A + 1``;
``chi_line = (1 - T)/T + xi_A``; ``chi_het = (2 - eta + 2 v_el)/eta``;
``chi_tot = chi_line + chi_het / T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .dsp import RecoveredBlock
from .errors import DomainError, InsufficientSamples, NegativeTransmittance, NumericalInstability
from .snu import CalibrationSet

MIN_BLOCK_SYMBOLS = 1_000
EIGEN_TOL = 1e-9
DOUBLE_ROOT_TOL = 1e-13


@dataclass(frozen=True)
class BlockEstimate:
    T_hat: float
    xi_B_hat: float
    n_symbols: int


@dataclass(frozen=True)
class ChannelEstimate:
    T_hat: float
    xi_A_hat: float
    xi_B_hat: float
    per_block: tuple
    n_symbols: int
    eta: float

    @property
    def xi_B_std(self) -> float:
        xs = [b.xi_B_hat for b in self.per_block]
        return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0

    @property
    def xi_B_se(self) -> float:
        return self.xi_B_std / np.sqrt(len(self.per_block))

    @property
    def T_se(self) -> float:
        ts = [b.T_hat for b in self.per_block]
        return float(np.std(ts, ddof=1) / np.sqrt(len(ts))) if len(ts) > 1 else 0.0

    @property
    def xi_A_se(self) -> float:
        """Delta-method standard error of xi_A = xi_B / (eta T)."""
        rel_t = self.T_se / self.T_hat
        return float(np.hypot(self.xi_B_se / (self.eta * self.T_hat), self.xi_A_hat * rel_t))


def block_statistics(block: RecoveredBlock, cal: CalibrationSet) -> BlockEstimate:
    """Transmittance and receiver-referred excess noise of one block."""
    x = np.asarray(block.tx_data_symbols)
    y = np.asarray(block.rx_data_symbols)
    n = x.size
    if n < MIN_BLOCK_SYMBOLS:
        raise InsufficientSamples(f"block has {n} data symbols, need >= {MIN_BLOCK_SYMBOLS}")
    t = float(np.real(np.vdot(x, y)) / np.real(np.vdot(x, x)))
    if t <= 0:
        raise NegativeTransmittance(f"signal gain estimate {t:.3g} <= 0; phase recovery failed?")
    resid = y - t * x
    v_res = float(np.real(np.vdot(resid, resid))) / (2 * n)
    xi_b = 2.0 * (v_res - 1.0 - cal.v_el)
    # the factor 2 undoes the heterodyne 3-dB split: y = sqrt(eta T / 2) x + ...
    T = 2.0 * t * t / cal.eta
    return BlockEstimate(T, xi_b, n)


def estimate_parameters(blocks: Iterable[Union[RecoveredBlock, BlockEstimate]], V_A: float,
                        cal: CalibrationSet) -> ChannelEstimate:
    """Aggregate per-block estimates (blocks may be pre-reduced)."""
    # V_A is accepted for interface symmetry; the estimator uses tx symbols directly
    per = tuple(b if isinstance(b, BlockEstimate) else block_statistics(b, cal) for b in blocks)
    if not per:
        raise InsufficientSamples("no blocks to estimate from")
    T = float(np.mean([b.T_hat for b in per]))
    xi_b = float(np.mean([b.xi_B_hat for b in per]))
    return ChannelEstimate(
        T_hat=T,
        xi_A_hat=xi_b / (cal.eta * T),
        xi_B_hat=xi_b,
        per_block=per,
        n_symbols=sum(b.n_symbols for b in per),
        eta=cal.eta,
    )


def _check_domain(V_A, T, xi_A, eta, v_el):
    if not V_A > 0:
        raise DomainError(f"V_A must be > 0, got {V_A}")
    if not 0 < T <= 1:
        raise DomainError(f"T must lie in (0, 1], got {T}")
    if not 0 < eta <= 1:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    if v_el < 0 or xi_A < 0:
        raise DomainError("v_el and xi_A must be >= 0")


def _chis(V_A, T, xi_A, eta, v_el):
    chi_line = (1 - T) / T + xi_A
    chi_het = (1 + (1 - eta) + 2 * v_el) / eta
    return chi_line, chi_het, chi_line + chi_het / T


def mutual_information(V_A: float, T: float, xi_A: float, eta: float, v_el: float) -> float:
    """Alice-Bob Shannon information (bits/symbol), heterodyne."""
    _check_domain(V_A, T, xi_A, eta, v_el)
    V = V_A + 1
    _, _, chi_tot = _chis(V_A, T, xi_A, eta, v_el)
    return float(np.log2((V + chi_tot) / (1 + chi_tot)))


def g_entropy(x) -> np.ndarray:
    """Von Neumann entropy of a thermal state with mean photon number x."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = (xp + 1) * np.log2(xp + 1) - xp * np.log2(xp)
    return out if out.ndim else float(out)


def _pair(a, b):
    """Roots (hi, lo) of x^4 - a x^2 + b with both roots >= 0."""
    disc = a * a - 4 * b
    if disc < -1e-9 * max(1.0, a * a):
        raise NumericalInstability(f"negative discriminant {disc:.3g}")
    if disc <= DOUBLE_ROOT_TOL * a * a:
        # within rounding of a double root, where the sqrt would amplify it
        r = float(b) ** 0.25
        return r, r
    root = np.sqrt(disc)
    return np.sqrt((a + root) / 2), np.sqrt(max((a - root) / 2, 0.0))


def _clamp(lams):
    out = []
    for lam in lams:
        if lam < 1 - EIGEN_TOL:
            raise NumericalInstability(f"symplectic eigenvalue {lam:.12g} < 1")
        out.append(max(lam, 1.0))
    return out


def symplectic_eigenvalues(V_A, T, xi_A, eta, v_el):
    """(lambda_1, lambda_2) of Eve's full state and (lambda_3, lambda_4) conditioned on Bob."""
    V = V_A + 1
    chi_line, chi_het, chi_tot = _chis(V_A, T, xi_A, eta, v_el)
    A = V ** 2 * (1 - 2 * T) + 2 * T + T ** 2 * (V + chi_line) ** 2
    B = T ** 2 * (V * chi_line + 1) ** 2
    l1, l2 = _pair(A, B)
    sqB = np.sqrt(B)
    norm = (T * (V + chi_tot)) ** 2
    A_het = (A * chi_het ** 2 + B + 1 + 2 * chi_het * (V * sqB + T * (V + chi_line))
             + 2 * T * (V ** 2 - 1)) / norm
    B_het = ((V + sqB * chi_het) / (T * (V + chi_tot))) ** 2
    l3, l4 = _pair(A_het, B_het)
    return tuple(_clamp((l1, l2, l3, l4)))


def holevo_bound(V_A: float, T: float, xi_A: float, eta: float, v_el: float) -> float:
    """Holevo information between Bob's heterodyne data and Eve (bits/symbol)."""
    _check_domain(V_A, T, xi_A, eta, v_el)
    l1, l2, l3, l4 = symplectic_eigenvalues(V_A, T, xi_A, eta, v_el)
    g = g_entropy(np.array([l1, l2, l3, l4]) / 2 - 0.5)
    return float(max(g[0] + g[1] - g[2] - g[3], 0.0))


@dataclass(frozen=True)
class SecurityParams:
    beta: float = 0.95
    fer: float = 0.0
    symbol_rate: float = 250e6
    pilot_fraction: float = 0.5

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if not 0 <= self.fer < 1:
            raise ValueError("fer must lie in [0, 1)")
        if self.symbol_rate <= 0 or not 0 <= self.pilot_fraction < 1:
            raise ValueError("invalid symbol rate or pilot fraction")


@dataclass(frozen=True)
class SkrReport:
    i_ab: float
    chi_be: float
    skr: float  # bits/s
    V_A: float
    T: float
    xi_A: float
    eta: float
    v_el: float
    params: SecurityParams


def secret_key_rate(V_A: float, T: float, xi_A: float, cal: CalibrationSet,
                    params: SecurityParams) -> SkrReport:
    """Asymptotic secret key rate; negative rates are clamped to zero."""
    i_ab = mutual_information(V_A, T, xi_A, cal.eta, cal.v_el)
    chi = holevo_bound(V_A, T, xi_A, cal.eta, cal.v_el)
    rate = ((1 - params.fer) * params.symbol_rate * (1 - params.pilot_fraction)
            * (params.beta * i_ab - chi))
    return SkrReport(i_ab, chi, max(0.0, rate), V_A, T, xi_A, cal.eta, cal.v_el, params)


def skr_from_estimate(est: ChannelEstimate, V_A: float, cal: CalibrationSet,
                      params: SecurityParams) -> SkrReport:
    """Key rate at the estimated operating point.

    A statistically negative excess-noise estimate is evaluated at zero.
    """
    T = min(est.T_hat, 1.0)
    return secret_key_rate(V_A, T, max(est.xi_A_hat, 0.0), cal, params)
