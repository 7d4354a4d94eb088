"""Command-line entry point: ``cvqkd simulate`` and ``cvqkd calibrate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, CvqkdError, NumericalError
from .calibration import calibrate_to_paper, load_references
from .config import PLANS, dump_config, load_config
from .io import write_csv, write_svg
from .scenario import ScenarioError, sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

logger = logging.getLogger("cvqkd_coexist")


class UsageError(ConfigError):
    pass


def parse_power_sweep(text: str):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"--power-sweep expects a,b,step; got {text!r}") from None
    if len(parts) != 3:
        raise UsageError(f"--power-sweep expects a,b,step; got {text!r}")
    a, b, step = parts
    if step <= 0 or b < a:
        raise UsageError("--power-sweep needs step > 0 and b >= a")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    powers = [round(a + i * step, 10) for i in range(n)]
    if powers[-1] < b - 1e-9:
        powers.append(b)
    return powers


def _scenario_overrides(name: str):
    plan, bpf = (name[:-len("_NO_BPF")], False) if name.endswith("_NO_BPF") else (name, True)
    if plan not in PLANS:
        raise UsageError(f"unknown scenario {name!r}; choose from {sorted(PLANS)} (optionally + _NO_BPF)")
    return {"scenario.plan": plan, "scenario.bpf": bpf}


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    over = {}
    if args.scenario:
        over.update(_scenario_overrides(args.scenario))
    if args.seed is not None:
        over["sim.seed"] = args.seed
    cfg = cfg.with_values(over) if over else cfg
    powers = (parse_power_sweep(args.power_sweep) if args.power_sweep
              else [cfg.sim.total_launch_power_dbm])
    rows = sweep(cfg, powers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "sweep.csv")
    write_svg(rows, out / "sweep.svg")
    for r in rows:
        print(f"{r.scenario:>22s} {r.total_launch_power:+7.2f} dBm  xi_B={r.xi_B_mean:.5f}"
              f" (sd {r.xi_B_std:.5f})  T={r.T_hat:.4f}  SKR={r.skr / 1e6:.3f} Mbit/s")
    print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.svg'}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    refs = load_references(args.refs)
    report = calibrate_to_paper(cfg, refs.refs, refs.fit, refs.checks)
    print(report.format())
    if args.out:
        Path(args.out).write_text(dump_config(report.config))
        print(f"wrote fitted config to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvqkd", description="CV-QKD / classical WDM coexistence simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario or a launch-power sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--power-sweep", metavar="A,B,STEP")
    s.add_argument("--scenario", metavar="NAME")
    s.add_argument("--out", default="results")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="fit the noise model to reference points")
    c.add_argument("--config", required=True)
    c.add_argument("--refs", required=True)
    c.add_argument("--out", help="write the fitted config here")
    c.set_defaults(func=cmd_calibrate)
    return p


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, ScenarioError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, (NumericalError, CvqkdError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CvqkdError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
