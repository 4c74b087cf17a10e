"""Output files: CSV tables, plain-text summaries and small SVG line plots."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape

from .config import ExperimentConfig


def prepare_output(directory) -> Path:
    """Create ``directory`` and prove it is writable, before any work starts."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if not d.is_dir():
        raise NotADirectoryError(f"{d} is not a directory")
    fd, probe = tempfile.mkstemp(prefix=".probe-", dir=d)
    os.close(fd)
    os.unlink(probe)
    return d


def artifact_name(cfg: ExperimentConfig, kind: str, ext: str) -> str:
    return f"{cfg.command}_seed{cfg.seed}_{cfg.digest()}_{kind}.{ext}"


def fmt(v) -> str:
    """Shortest round-trip text for floats; ``str`` for everything else."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(header, rows))
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")
    return path


class Report:
    """Collects the files of one command run under a common name stem."""

    def __init__(self, cfg: ExperimentConfig, directory=None):
        self.cfg = cfg
        self.dir = prepare_output(directory if directory is not None else cfg.output_dir)
        self.files: list[Path] = []

    def path(self, kind: str, ext: str) -> Path:
        return self.dir / artifact_name(self.cfg, kind, ext)

    def csv(self, kind: str, header, rows) -> Path:
        p = write_csv(self.path(kind, "csv"), header, rows)
        self.files.append(p)
        return p

    def text(self, kind: str, text: str, ext: str = "txt") -> Path:
        p = write_text(self.path(kind, ext), text)
        self.files.append(p)
        return p

    def svg(self, kind: str, svg: str) -> Path:
        return self.text(kind, svg, ext="svg")

    def config(self) -> Path:
        return self.text("config", self.cfg.canonical(), ext="cfg")


# ------------------------------------------------------------------------ SVG

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot(series: dict, title: str, xlabel: str, ylabel: str, *, logx: bool = False,
              logy: bool = False, xticklabels=None, width: int = 560, height: int = 360) -> str:
    """Minimal deterministic SVG: one polyline with markers per series.

    ``series`` maps a name to ``(xs, ys)``. With ``xticklabels`` the x values
    are taken as positions and labelled with the given strings.
    """
    ml, mr, mt, mb = 64, 140, 36, 48
    pw, ph = width - ml - mr, height - mt - mb

    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    pts = [(tx(x), ty(y)) for xs, ys in series.values() for x, y in zip(xs, ys)
           if math.isfinite(y) and (not logy or y > 0)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if xticklabels is not None:
        xt = [(tx(x), lab) for x, lab in xticklabels]
    else:
        xt = [(v, f"{10 ** v:.3g}" if logx else f"{v:.3g}") for v in _ticks(x0, x1)]
    for v, lab in xt:
        out.append(f'<line x1="{px(v):.1f}" y1="{mt + ph}" x2="{px(v):.1f}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(v):.1f}" y="{mt + ph + 16}" text-anchor="middle">{escape(lab)}</text>')
    for v in _ticks(y0, y1):
        lab = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<line x1="{ml - 4}" y1="{py(v):.1f}" x2="{ml}" y2="{py(v):.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        colour = _COLOURS[i % len(_COLOURS)]
        coords = [(px(tx(x)), py(ty(y))) for x, y in zip(xs, ys)
                  if math.isfinite(y) and (not logy or y > 0)]
        if coords:
            path = " ".join(f"{a:.1f},{b:.1f}" for a, b in coords)
            out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
            out.extend(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2.5" fill="{colour}"/>' for a, b in coords)
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 32}" y="{ly}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
