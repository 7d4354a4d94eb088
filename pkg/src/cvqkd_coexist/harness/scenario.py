"""Scenario execution: tx -> channel -> detection -> DSP -> estimation.

Two fidelities share one physical model:

``waveform``
    8 samples/symbol RRC waveforms through the full receiver chain.
``symbol``
    the same Gaussian statistics applied directly at symbol level, with
    the DSP assumed ideal.  Used where sub-percent precision on a
    1e-3 SNU excess noise needs 1e8+ symbols.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np

from .. import alice, channel, dsp, security, snu
from ..errors import CvqkdError
from .config import PLANS, ScenarioConfig

logger = logging.getLogger(__name__)

SIG_DIGITS = 9


def _round_sig(x: float) -> float:
    return float(f"{x:.{SIG_DIGITS}g}")


@dataclass(frozen=True)
class SweepRow:
    scenario: str
    total_launch_power: float  # dBm
    xi_B_mean: float
    xi_B_std: float
    T_hat: float
    skr: float  # bits/s

    def __post_init__(self):
        if self.xi_B_std < 0:
            raise ValueError("std must be >= 0")
        for name in ("total_launch_power", "xi_B_mean", "xi_B_std", "T_hat", "skr"):
            object.__setattr__(self, name, _round_sig(getattr(self, name)))


class ScenarioError(CvqkdError):
    """A module error annotated with the scenario it happened in."""

    def __init__(self, label: str, power: float, cause: Exception):
        super().__init__(f"[{label} @ {power:+.2f} dBm] {type(cause).__name__}: {cause}")
        self.cause = cause


class Scenario:
    """Derived physical objects for one configuration."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg

    @cached_property
    def constellation(self) -> alice.ConstellationSpec:
        c = self.cfg.constellation
        nu = c.nu if c.nu >= 0 else alice.shaping_rate_for_entropy(c.order, c.entropy_bits)
        return alice.build_constellation(c.order, nu, c.v_a)

    @cached_property
    def frame_spec(self) -> alice.FrameSpec:
        f = self.cfg.frame
        return alice.FrameSpec(
            symbol_rate=f.symbol_rate,
            pilot_fraction=f.pilot_fraction,
            frame_length=self.cfg.sim.block_length,
            samples_per_symbol=f.samples_per_symbol,
            rrc_rolloff=f.rrc_rolloff,
            rrc_span=f.rrc_span,
        )

    @cached_property
    def n_data(self) -> int:
        n = self.cfg.sim.block_length
        return int(n - alice.pilot_mask(n, self.cfg.frame.pilot_fraction).sum())

    @property
    def medium(self) -> str:
        return PLANS[self.cfg.scenario.plan][1]

    @cached_property
    def link(self) -> channel.LinkSpec:
        l = self.cfg.link
        if self.medium == "fso":
            return channel.LinkSpec(0.0, l.fiber_attenuation_db_km, l.fso_loss_db, l.extra_loss_db)
        return channel.LinkSpec(l.fiber_length_km, l.fiber_attenuation_db_km, 0.0, l.extra_loss_db)

    @property
    def T(self) -> float:
        return channel.link_transmittance(self.link)

    @property
    def eta(self) -> float:
        return self.cfg.rx.eta_bpf if self.cfg.scenario.bpf else self.cfg.rx.eta_no_bpf

    def plan(self, total_power_dbm: float) -> channel.WdmPlan:
        (lo, hi), _ = PLANS[self.cfg.scenario.plan]
        q = self.cfg.rx.quantum_nm
        nearest, direction = (lo, +1) if lo >= q else (hi, -1)
        w = self.cfg.wdm
        p = channel.make_plan(nearest, direction, total_power_dbm, w.n_channels, w.baud, w.grid_ghz)
        p.check_clear_of(q, self.cfg.frame.symbol_rate * (1 + self.cfg.frame.rrc_rolloff))
        return p

    @cached_property
    def bpf(self) -> Optional[channel.BpfSpec]:
        if not self.cfg.scenario.bpf:
            return None
        b = self.cfg.bpf
        return channel.BpfSpec(b.center_nm, b.bw_nm, b.order, b.insertion_loss_db)

    @cached_property
    def ase(self) -> channel.AseModel:
        a = self.cfg.ase
        return channel.AseModel(a.psd_at_source, a.notch_suppression_db, a.reference_power_dbm)

    @cached_property
    def raman_table(self) -> Optional[channel.RamanTable]:
        r = self.cfg.raman
        if not r.enabled:
            return None
        return channel.RamanTable.load(r.table) if r.table else channel.default_raman_table()

    @cached_property
    def true_cal(self) -> snu.CalibrationSet:
        rx = self.cfg.rx
        return snu.CalibrationSet.from_snu(rx.shot_noise_variance, rx.v_el, self.eta)

    def calibration(self, seed: int) -> snu.CalibrationSet:
        """Exact receiver constants, or an estimate from calibration captures."""
        n = self.cfg.rx.calibration_samples
        if n <= 0:
            return self.true_cal
        vac = dsp.detect(np.zeros(n), self.true_cal, rng_seed=seed).samples
        el = dsp.electronic_capture(self.true_cal, n, rng_seed=seed + 1)
        return snu.calibrate(vac, el, eta=self.eta)

    def channel_noise(self, total_power_dbm: float) -> float:
        """Classical-coexistence noise, per-quadrature SNU at Bob's input."""
        cfg = self.cfg
        plan = self.plan(total_power_dbm)
        q = cfg.rx.quantum_nm
        acceptance = channel.bandwidth_nm_to_hz(cfg.rx.acceptance_nm, q)
        p = self.T * channel.ase_inband_power(self.ase, plan, self.bpf, q, acceptance)
        if self.raman_table is not None:
            mode_nm = cfg.frame.symbol_rate * (q * 1e-9) ** 2 / channel.C_LIGHT * 1e9
            p += channel.raman_power(plan, self.link, q, self.raman_table, mode_nm)
        return channel.noise_to_excess(p, q, cfg.frame.symbol_rate)

    def expected_xi_b(self, total_power_dbm: float) -> float:
        """Mean-model receiver-referred excess noise (ideal DSP)."""
        return self.cfg.rx.xi_intrinsic + self.eta * self.channel_noise(total_power_dbm)

    def expected_skr(self, total_power_dbm: float) -> security.SkrReport:
        xi_a = self.expected_xi_b(total_power_dbm) / (self.eta * self.T)
        return security.secret_key_rate(self.cfg.constellation.v_a, self.T, xi_a,
                                        self.true_cal, self.security_params)

    @property
    def security_params(self) -> security.SecurityParams:
        return security.SecurityParams(self.cfg.security.beta, self.cfg.security.fer,
                                       self.cfg.frame.symbol_rate, self.cfg.frame.pilot_fraction)

    @property
    def dsp_config(self) -> dsp.DspConfig:
        d = self.cfg.dsp
        return dsp.DspConfig(d.cfo_search_range_hz, d.equalizer_taps, d.equalizer_step,
                             d.phase_pilot_window)

    @property
    def laser(self) -> channel.LaserSpec:
        return channel.LaserSpec(self.cfg.laser.linewidth_hz, self.cfg.laser.frequency_offset_hz)


def block_seeds(seed: int, block: int):
    """Independent (frame, channel, detector) seeds; equal across scenarios."""
    ss = np.random.SeedSequence([seed, block])
    return [int(c.generate_state(1)[0]) for c in ss.spawn(3)]


def simulate_block_waveform(sc: Scenario, cal: snu.CalibrationSet, noise: float,
                            seeds) -> dsp.RecoveredBlock:
    spec = sc.frame_spec
    frame = alice.generate_frame(sc.constellation, spec, sc.cfg.sim.block_length, seeds[0])
    wf = alice.pulse_shape(frame)
    fs = spec.sample_rate
    out = channel.propagate(wf, sc.T, sc.laser, noise / fs, seeds[1], sample_rate=fs)
    cap = dsp.detect(out, sc.true_cal, seeds[2], sample_rate=fs,
                     excess_noise=sc.cfg.rx.xi_intrinsic)
    cap = replace(cap, cal=cal)
    return dsp.recover(cap, frame, sc.dsp_config)


def simulate_block_symbol(sc: Scenario, noise: float, seeds) -> dsp.RecoveredBlock:
    n_data = sc.n_data
    x = sc.constellation.sample(n_data, np.random.default_rng(seeds[0]))
    rx = sc.cfg.rx
    eta = sc.eta
    var = 0.5 * eta * noise + 1.0 + rx.v_el + 0.5 * rx.xi_intrinsic
    z = np.random.default_rng(seeds[2]).standard_normal((2, n_data), dtype=np.float32)
    y = np.sqrt(eta * sc.T / 2) * x + np.sqrt(var) * (z[0] + 1j * z[1])
    return dsp.RecoveredBlock(x, y, sc.cfg.sim.block_length)


def run_scenario(cfg: ScenarioConfig, return_estimate: bool = False):
    """Run all blocks of one scenario and summarize them as a :class:`SweepRow`."""
    sc = Scenario(cfg)
    power = cfg.sim.total_launch_power_dbm
    try:
        noise = sc.channel_noise(power)
        cal = sc.calibration(cfg.sim.seed)
        stats = []
        for b in range(cfg.sim.blocks):
            seeds = block_seeds(cfg.sim.seed, b)
            if cfg.sim.fidelity == "symbol":
                block = simulate_block_symbol(sc, noise, seeds)
            else:
                block = simulate_block_waveform(sc, cal, noise, seeds)
            stats.append(security.block_statistics(block, cal))
        est = security.estimate_parameters(stats, cfg.constellation.v_a, cal)
        report = security.skr_from_estimate(est, cfg.constellation.v_a, cal, sc.security_params)
    except (CvqkdError, ValueError, ArithmeticError) as exc:
        raise ScenarioError(cfg.label, power, exc) from exc
    row = SweepRow(cfg.label, power, est.xi_B_hat, est.xi_B_std, est.T_hat, report.skr)
    logger.info("%s %+.2f dBm: xi_B=%.4g (sd %.2g) T=%.4f skr=%.3g",
                row.scenario, power, row.xi_B_mean, row.xi_B_std, row.T_hat, row.skr)
    return (row, est, report) if return_estimate else row


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("CVQKD_THREADS", "1")))
    except ValueError:
        return 1


def sweep_configs(cfg_template: ScenarioConfig, powers: Sequence[float]) -> List[ScenarioConfig]:
    if len(powers) == 0:
        raise ValueError("power list is empty")
    for p in powers:
        if not -30.0 <= p <= 15.0:
            raise ValueError(f"launch power {p} dBm outside [-30, 15]")
    base = cfg_template.sim.seed
    return [
        cfg_template.with_values({"sim.total_launch_power_dbm": p, "sim.seed": base + i})
        for i, p in enumerate(powers)
    ]


def sweep(cfg_template: ScenarioConfig, powers: Sequence[float],
          max_workers: Optional[int] = None) -> List[SweepRow]:
    """One row per power, in input order.  Seeds are ``base_seed + index``."""
    cfgs = sweep_configs(cfg_template, powers)
    workers = min(max_workers or _thread_cap(), len(cfgs))
    if workers <= 1:
        return [run_scenario(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_scenario, cfgs))
