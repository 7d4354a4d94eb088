"""Flat ``section.key = value`` configuration.

Example::

    scenario.plan = ONE_NM_UPPER
    link.fiber_length_km = 12.8
    sim.total_launch_power_dbm = 8.46

Unknown sections or keys are errors.  Every key has a default, so an empty
file describes the nominal fiber scenario with BPF.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping

from ..errors import ConfigError

# name -> (wavelength range nm, medium)
PLANS = {
    "FIVE_NM_FIBER": ((1555.0, 1561.0), "fiber"),
    "FIVE_NM_FSO": ((1555.0, 1561.0), "fso"),
    "ONE_NM_UPPER": ((1551.0, 1557.0), "fiber"),
    "ONE_NM_LOWER": ((1543.0, 1549.0), "fiber"),
}

FIDELITIES = ("waveform", "symbol")


@dataclass(frozen=True)
class ScenarioSection:
    plan: str = "FIVE_NM_FIBER"
    bpf: bool = True
    label: str = ""


@dataclass(frozen=True)
class ConstellationSection:
    order: int = 256
    entropy_bits: float = 6.0
    nu: float = -1.0  # < 0: derive from entropy_bits
    v_a: float = 8.0


@dataclass(frozen=True)
class FrameSection:
    symbol_rate: float = 250e6
    pilot_fraction: float = 0.5
    samples_per_symbol: int = 8
    rrc_rolloff: float = 0.2
    rrc_span: int = 64


@dataclass(frozen=True)
class LinkSection:
    fiber_length_km: float = 12.8
    fiber_attenuation_db_km: float = 0.2
    fso_loss_db: float = 3.85
    extra_loss_db: float = 0.0


@dataclass(frozen=True)
class WdmSection:
    n_channels: int = 15
    baud: float = 45e9
    grid_ghz: float = 50.0


@dataclass(frozen=True)
class BpfSection:
    center_nm: float = 1550.0
    bw_nm: float = 1.0
    order: float = 2.0
    # BPF loss is part of rx.eta_bpf
    insertion_loss_db: float = 0.0


@dataclass(frozen=True)
class AseSection:
    psd_at_source: float = 1e-22
    notch_suppression_db: float = 20.0
    reference_power_dbm: float = 0.0


@dataclass(frozen=True)
class RamanSection:
    enabled: bool = False
    table: str = ""


@dataclass(frozen=True)
class LaserSection:
    linewidth_hz: float = 0.0
    frequency_offset_hz: float = 2e6


@dataclass(frozen=True)
class RxSection:
    quantum_nm: float = 1550.0
    eta_bpf: float = 0.35
    eta_no_bpf: float = 0.67
    v_el: float = 0.1
    xi_intrinsic: float = 0.002
    shot_noise_variance: float = 0.01
    acceptance_nm: float = 8.0
    calibration_samples: int = 0


@dataclass(frozen=True)
class DspSection:
    cfo_search_range_hz: float = 50e6
    equalizer_taps: int = 21
    equalizer_step: float = 3e-7
    phase_pilot_window: int = 8192


@dataclass(frozen=True)
class SecuritySection:
    beta: float = 0.95
    fer: float = 0.0


@dataclass(frozen=True)
class SimSection:
    total_launch_power_dbm: float = 0.0
    blocks: int = 30
    block_length: int = 100_000
    seed: int = 1
    fidelity: str = "waveform"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    constellation: ConstellationSection = field(default_factory=ConstellationSection)
    frame: FrameSection = field(default_factory=FrameSection)
    link: LinkSection = field(default_factory=LinkSection)
    wdm: WdmSection = field(default_factory=WdmSection)
    bpf: BpfSection = field(default_factory=BpfSection)
    ase: AseSection = field(default_factory=AseSection)
    raman: RamanSection = field(default_factory=RamanSection)
    laser: LaserSection = field(default_factory=LaserSection)
    rx: RxSection = field(default_factory=RxSection)
    dsp: DspSection = field(default_factory=DspSection)
    security: SecuritySection = field(default_factory=SecuritySection)
    sim: SimSection = field(default_factory=SimSection)

    def __post_init__(self):
        validate(self)

    def get(self, key: str) -> Any:
        sec, name = _split(key)
        return getattr(getattr(self, sec), name)

    def with_values(self, values: Mapping[str, Any]) -> "ScenarioConfig":
        grouped: Dict[str, Dict[str, Any]] = {}
        for key, value in values.items():
            sec, name = _split(key)
            section = getattr(self, sec)
            grouped.setdefault(sec, {})[name] = _coerce(key, value, type(getattr(section, name)))
        kw = {sec: replace(getattr(self, sec), **vals) for sec, vals in grouped.items()}
        return replace(self, **kw)

    def to_flat(self) -> Dict[str, Any]:
        out = {}
        for f in fields(self):
            section = getattr(self, f.name)
            for sf in fields(section):
                out[f"{f.name}.{sf.name}"] = getattr(section, sf.name)
        return out

    @property
    def label(self) -> str:
        if self.scenario.label:
            return self.scenario.label
        return self.scenario.plan + ("" if self.scenario.bpf else "_NO_BPF")


def _split(key: str):
    sec, dot, name = key.partition(".")
    section_names = {f.name for f in fields(ScenarioConfig)}
    if not dot or sec not in section_names:
        raise ConfigError(f"unknown config section in key {key!r}")
    section_type = {f.name: f.default_factory for f in fields(ScenarioConfig)}[sec]
    if name not in {f.name for f in fields(section_type())}:
        raise ConfigError(f"unknown config key {key!r}")
    return sec, name


def _coerce(key: str, value: Any, typ: type) -> Any:
    try:
        if typ is bool:
            if isinstance(value, str):
                v = value.strip().lower()
                if v in ("true", "yes", "on", "1"):
                    return True
                if v in ("false", "no", "off", "0"):
                    return False
                raise ValueError(value)
            return bool(value)
        if typ is int:
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if typ is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {typ.__name__}") from None


def validate(cfg: ScenarioConfig) -> None:
    s = cfg.scenario
    if s.plan not in PLANS:
        raise ConfigError(f"scenario.plan must be one of {sorted(PLANS)}, got {s.plan!r}")
    if cfg.sim.fidelity not in FIDELITIES:
        raise ConfigError(f"sim.fidelity must be one of {FIDELITIES}")
    if cfg.sim.block_length < 1_000 or cfg.sim.blocks < 1:
        raise ConfigError("sim.block_length must be >= 1000 and sim.blocks >= 1")
    checks = [
        (cfg.constellation.v_a > 0, "constellation.v_a must be > 0"),
        (0 < cfg.rx.eta_bpf <= 1 and 0 < cfg.rx.eta_no_bpf <= 1, "rx.eta_* must lie in (0, 1]"),
        (cfg.rx.v_el >= 0 and cfg.rx.xi_intrinsic >= 0, "rx.v_el and rx.xi_intrinsic must be >= 0"),
        (cfg.rx.shot_noise_variance > 0, "rx.shot_noise_variance must be > 0"),
        (cfg.rx.acceptance_nm > 0, "rx.acceptance_nm must be > 0"),
        (cfg.wdm.n_channels >= 0, "wdm.n_channels must be >= 0"),
        (0 < cfg.security.beta <= 1 and 0 <= cfg.security.fer < 1, "security.beta/fer out of range"),
        (cfg.ase.psd_at_source >= 0 and cfg.ase.notch_suppression_db >= 0, "ase values must be >= 0"),
        (cfg.bpf.order >= 1 and cfg.bpf.bw_nm > 0, "bpf.order must be >= 1 and bpf.bw_nm > 0"),
        (cfg.dsp.equalizer_taps % 2 == 1, "dsp.equalizer_taps must be odd"),
        (cfg.frame.samples_per_symbol >= 2, "frame.samples_per_symbol must be >= 2"),
        (0 < cfg.frame.pilot_fraction < 1, "frame.pilot_fraction must lie in (0, 1)"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def parse_flat(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip().strip('"').strip("'")
    return out


def from_flat(values: Mapping[str, Any], base: ScenarioConfig = None) -> ScenarioConfig:
    base = ScenarioConfig() if base is None else base
    try:
        return base.with_values(values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_flat(parse_flat(text))


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key, value in cfg.to_flat().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
