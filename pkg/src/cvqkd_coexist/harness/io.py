"""Result and capture serialization: CSV, SVG charts, IQ binary files."""
from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Dict, List, Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..errors import ConfigError
from .scenario import SIG_DIGITS, SweepRow

CSV_COLUMNS = ("scenario", "power_dbm", "xi_b_mean", "xi_b_std", "t_hat", "skr_bps")
_ROW_FIELDS = ("total_launch_power", "xi_B_mean", "xi_B_std", "T_hat", "skr")

IQ_MAGIC = b"CVQK"
IQ_VERSION = 1
IQ_HEADER = struct.Struct("<4sIdQ8x")  # 32 bytes


def _fmt(x: float) -> str:
    return f"{x:.{SIG_DIGITS}g}"


def write_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.scenario] + [_fmt(getattr(r, f)) for f in _ROW_FIELDS])


def read_csv(path) -> List[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_COLUMNS:
            raise ConfigError(f"unexpected CSV header {header}")
        return [SweepRow(rec[0], *map(float, rec[1:])) for rec in reader if rec]


def write_iq(path, samples, sample_rate: float) -> None:
    x = np.asarray(samples, dtype=np.complex64).astype("<c8", copy=False)
    with open(path, "wb") as fh:
        fh.write(IQ_HEADER.pack(IQ_MAGIC, IQ_VERSION, float(sample_rate), x.size))
        fh.write(x.tobytes())


def read_iq(path):
    """Return ``(samples, sample_rate)`` from an IQ file."""
    data = Path(path).read_bytes()
    if len(data) < IQ_HEADER.size:
        raise ValueError("file too short for IQ header")
    magic, version, fs, count = IQ_HEADER.unpack_from(data)
    if magic != IQ_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != IQ_VERSION:
        raise ValueError(f"unsupported IQ version {version}")
    body = data[IQ_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError(f"header says {count} samples, body holds {len(body) / 8:g}")
    return np.frombuffer(body, dtype="<c8").astype(np.complex64), fs


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def render_svg(rows: Sequence[SweepRow], title: str = "Excess noise vs launch power",
               width: int = 640, height: int = 420) -> str:
    """Line chart of xi_B mean +/- std versus power, one series per scenario."""
    series: Dict[str, List[SweepRow]] = {}
    for r in rows:
        series.setdefault(r.scenario, []).append(r)
    ml, mr, mt, mb = 70, 160, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = [r.total_launch_power for r in rows] or [0.0]
    lows = [r.xi_B_mean - r.xi_B_std for r in rows] or [0.0]
    highs = [r.xi_B_mean + r.xi_B_std for r in rows] or [1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(lows), max(highs)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1e-3, y1 + 1e-3
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">total launch power (dBm)</text>',
        f'<text transform="translate(16 {mt + ph / 2:.1f}) rotate(-90)" text-anchor="middle">'
        f'excess noise xi_B (SNU)</text>',
    ]
    for v in np.linspace(x0, x1, 6):
        out.append(f'<text x="{X(v):.1f}" y="{mt + ph + 15}" text-anchor="middle">{v:.1f}</text>')
    for v in np.linspace(y0, y1, 6):
        out.append(f'<text x="{ml - 5}" y="{Y(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts, key=lambda r: r.total_launch_power)
        path = " ".join(f"{X(r.total_launch_power):.2f},{Y(r.xi_B_mean):.2f}" for r in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for r in pts:
            cx = X(r.total_launch_power)
            lo, hi = Y(r.xi_B_mean - r.xi_B_std), Y(r.xi_B_mean + r.xi_B_std)
            out.append(f'<line x1="{cx:.2f}" y1="{lo:.2f}" x2="{cx:.2f}" y2="{hi:.2f}" stroke="{color}"/>')
            for yy in (lo, hi):
                out.append(f'<line x1="{cx - 3:.2f}" y1="{yy:.2f}" x2="{cx + 3:.2f}" y2="{yy:.2f}" '
                           f'stroke="{color}"/>')
            out.append(f'<circle cx="{cx:.2f}" cy="{Y(r.xi_B_mean):.2f}" r="2.5" fill="{color}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(rows: Sequence[SweepRow], path, **kw) -> None:
    Path(path).write_text(render_svg(rows, **kw))
