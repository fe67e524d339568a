"""Byte-deterministic CSV records and single-polyline SVG charts."""

import csv
import math
from pathlib import Path


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def emit_csv(records, path, fieldnames=None):
    """Write dict records with a header row, CRLF line endings (RFC 4180)."""
    records = list(records)
    if fieldnames is None:
        fieldnames = list(records[0]) if records else []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(fieldnames)
        for rec in records:
            writer.writerow([format_value(rec.get(k)) for k in fieldnames])
    return path


WIDTH, HEIGHT, PAD = 480, 320, 56


def _span(vals):
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = abs(lo) * 0.05 or 0.5
        lo, hi = lo - pad, hi + pad
    return lo, hi


def emit_svg_chart(series, path, title="", xlabel="x", ylabel="y"):
    """One polyline through the (x, y) points of `series`, with labelled axes."""
    pts = [(float(x), float(y)) for x, y in series]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 16}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {HEIGHT // 2})">{_esc(ylabel)}</text>',
    ]
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    if pts:
        x0, x1 = _span([p[0] for p in pts])
        y0, y1 = _span([p[1] for p in pts])
        inner_w, inner_h = WIDTH - 2 * PAD, HEIGHT - 2 * PAD

        def sx(x):
            return PAD + (x - x0) / (x1 - x0) * inner_w

        def sy(y):
            return HEIGHT - PAD - (y - y0) / (y1 - y0) * inner_h

        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{coords}"/>')
        for label, x, y in ((f"{x0:.4g}", PAD, HEIGHT - PAD + 16), (f"{x1:.4g}", WIDTH - PAD, HEIGHT - PAD + 16)):
            out.append(f'<text x="{x}" y="{y}" text-anchor="middle" font-size="10">{label}</text>')
        for label, y in ((f"{y0:.4g}", HEIGHT - PAD), (f"{y1:.4g}", PAD)):
            out.append(f'<text x="{PAD - 6}" y="{y}" text-anchor="end" font-size="10">{label}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    return path


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
