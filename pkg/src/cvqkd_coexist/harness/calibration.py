"""Least-squares fit of the coexistence noise model to reference deltas.

Reference points are either excess-noise ratios between two scenarios
(``xi_ratio``) or absolute key rates (``skr``).  The fit runs on the
analytic mean model (ideal DSP), so it is deterministic and cheap; the
simulated sweeps then act as independent checks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from ..errors import ConfigError, CvqkdError, FitDiverged, Underdetermined
from .config import PLANS, ScenarioConfig, _coerce, parse_flat
from .scenario import Scenario

logger = logging.getLogger(__name__)

KINDS = ("xi_ratio", "skr")

# key -> (log-scaled?, lower, upper) in natural units
FIT_PARAMETERS: Dict[str, Tuple[bool, float, float]] = {
    "ase.psd_at_source": (True, 1e-30, 1e-12),
    "ase.notch_suppression_db": (False, 0.0, 80.0),
    "security.beta": (False, 0.5, 1.0),
    "rx.v_el": (False, 0.0, 1.0),
    "rx.xi_intrinsic": (True, 1e-6, 0.5),
    "bpf.order": (False, 1.0, 10.0),
}


@dataclass(frozen=True)
class ReferencePoint:
    name: str
    kind: str
    plan: str
    bpf: bool
    power_dbm: float
    target: float
    baseline_plan: str = ""
    baseline_bpf: bool = True
    baseline_power_dbm: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"{self.name}: kind must be one of {KINDS}, got {self.kind!r}")
        for plan in (self.plan,) + ((self.baseline_plan,) if self.kind == "xi_ratio" else ()):
            if plan not in PLANS:
                raise ConfigError(f"{self.name}: unknown plan {plan!r}")
        if not self.target > 0:
            raise ConfigError(f"{self.name}: target must be > 0")

    def model(self, cfg: ScenarioConfig) -> float:
        """Model prediction of this reference under ``cfg``."""
        sc = Scenario(cfg.with_values({"scenario.plan": self.plan, "scenario.bpf": self.bpf}))
        if self.kind == "skr":
            return sc.expected_skr(self.power_dbm).skr
        base = Scenario(cfg.with_values({"scenario.plan": self.baseline_plan,
                                         "scenario.bpf": self.baseline_bpf}))
        return sc.expected_xi_b(self.power_dbm) / base.expected_xi_b(self.baseline_power_dbm)


@dataclass(frozen=True)
class ReferenceSet:
    fit: Tuple[str, ...]
    refs: Tuple[ReferencePoint, ...]
    checks: Tuple[ReferencePoint, ...] = ()


@dataclass
class CalibrationReport:
    config: ScenarioConfig
    parameters: Dict[str, float]
    residuals: Dict[str, float]  # relative, (model - target) / target
    predictions: Dict[str, Tuple[float, float]] = field(default_factory=dict)  # name -> (model, target)
    cost: float = 0.0
    nfev: int = 0

    def format(self) -> str:
        lines = ["fitted parameters:"]
        lines += [f"  {k} = {v:.6g}" for k, v in self.parameters.items()]
        lines.append("fit residuals (relative):")
        lines += [f"  {k}: {v:+.3e}" for k, v in self.residuals.items()]
        if self.predictions:
            lines.append("held-out predictions (model / reference):")
            lines += [f"  {k}: {m:.6g} / {t:.6g}" for k, (m, t) in self.predictions.items()]
        return "\n".join(lines)


def _to_internal(key: str, value: float) -> float:
    return float(np.log10(value)) if FIT_PARAMETERS[key][0] else float(value)


def _to_natural(key: str, u: float) -> float:
    return float(10 ** u) if FIT_PARAMETERS[key][0] else float(u)


def _bounds(keys):
    lo = [_to_internal(k, FIT_PARAMETERS[k][1]) if FIT_PARAMETERS[k][1] > 0 or not FIT_PARAMETERS[k][0]
          else -np.inf for k in keys]
    hi = [_to_internal(k, FIT_PARAMETERS[k][2]) for k in keys]
    return lo, hi


def calibrate_to_paper(cfg: ScenarioConfig, refs: Sequence[ReferencePoint],
                       free: Sequence[str], checks: Sequence[ReferencePoint] = ()) -> CalibrationReport:
    """Fit the ``free`` config keys so the model reproduces ``refs``.

    Residuals are relative, so ratios and key rates weigh alike.  Held-out
    ``checks`` are evaluated at the fitted point but do not enter the fit.
    """
    free = tuple(free)
    unknown = [k for k in free if k not in FIT_PARAMETERS]
    if unknown:
        raise ConfigError(f"cannot fit {unknown}; choose from {sorted(FIT_PARAMETERS)}")
    if not free:
        raise Underdetermined("no free parameters")
    if len(refs) < len(free):
        raise Underdetermined(f"{len(refs)} reference point(s) for {len(free)} free parameter(s)")

    def cfg_at(u):
        return cfg.with_values({k: _to_natural(k, x) for k, x in zip(free, u)})

    def residuals(u):
        c = cfg_at(u)
        return np.array([(r.model(c) - r.target) / r.target for r in refs])

    lo, hi = _bounds(free)
    u0 = np.clip([_to_internal(k, cfg.get(k)) for k in free], lo, hi)
    try:
        sol = least_squares(residuals, u0, bounds=(lo, hi), method="trf",
                            x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
    except (CvqkdError, ValueError, ArithmeticError) as exc:
        raise FitDiverged(f"model evaluation failed during fit: {exc}") from exc
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)) or not np.all(np.isfinite(sol.fun)):
        raise FitDiverged(f"least-squares did not converge: {sol.message}")
    fitted = cfg_at(sol.x)
    report = CalibrationReport(
        config=fitted,
        parameters={k: fitted.get(k) for k in free},
        residuals={r.name: float(f) for r, f in zip(refs, sol.fun)},
        predictions={c.name: (c.model(fitted), c.target) for c in checks},
        cost=float(sol.cost),
        nfev=int(sol.nfev),
    )
    logger.info("calibration cost %.3g after %d evaluations", report.cost, report.nfev)
    return report


_REF_FIELDS = {"kind": str, "scenario": str, "bpf": bool, "power_dbm": float, "target": float,
               "baseline_scenario": str, "baseline_bpf": bool, "baseline_power_dbm": float}


def parse_references(text: str) -> ReferenceSet:
    """Parse a reference file.

    ``fit = key, key, ...`` lists the free parameters; ``ref.<name>.<field>``
    defines fit anchors and ``check.<name>.<field>`` held-out points.
    """
    flat = parse_flat(text)
    fit = tuple(s.strip() for s in flat.pop("fit", "").split(",") if s.strip())
    groups: Dict[Tuple[str, str], Dict[str, object]] = {}
    for key, value in flat.items():
        parts = key.split(".")
        if len(parts) != 3 or parts[0] not in ("ref", "check") or parts[2] not in _REF_FIELDS:
            raise ConfigError(f"unknown reference key {key!r}")
        role, name, fld = parts
        groups.setdefault((role, name), {})[fld] = _coerce(key, value, _REF_FIELDS[fld])
    out = {"ref": [], "check": []}
    for (role, name), f in groups.items():
        missing = {"kind", "scenario", "power_dbm", "target"} - f.keys()
        if missing:
            raise ConfigError(f"{role}.{name}: missing {sorted(missing)}")
        out[role].append(ReferencePoint(
            name=name, kind=f["kind"], plan=f["scenario"], bpf=f.get("bpf", True),
            power_dbm=f["power_dbm"], target=f["target"],
            baseline_plan=f.get("baseline_scenario", ""), baseline_bpf=f.get("baseline_bpf", True),
            baseline_power_dbm=f.get("baseline_power_dbm", f["power_dbm"]),
        ))
    return ReferenceSet(fit, tuple(out["ref"]), tuple(out["check"]))


def load_references(path) -> ReferenceSet:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read reference file {path}: {exc}") from exc
    return parse_references(text)
