"""Dependency-free SVG scatter for 2-D state ensembles."""
from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def svg_scatter(series: dict, width: int = 480, height: int = 480, pad: int = 40, radius: float = 1.6) -> str:
    """Render ``{label: (n, 2) array}`` as overlaid scatter plots."""
    pts = np.concatenate([np.asarray(v, dtype=float).reshape(-1, 2) for v in series.values()])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)

    def px(p):
        x = pad + (p[0] - lo[0]) / span[0] * (width - 2 * pad)
        y = height - pad - (p[1] - lo[1]) / span[1] * (height - 2 * pad)
        return x, y

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="#888"/>',
           f'<text x="{pad}" y="{height - 8}" font-size="11">y1 [{lo[0]:.3g}, {hi[0]:.3g}]</text>',
           f'<text x="8" y="{pad - 8}" font-size="11">y2 [{lo[1]:.3g}, {hi[1]:.3g}]</text>']
    for k, (label, arr) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<text x="{width - pad - 120}" y="{pad + 14 * (k + 1)}" font-size="11" fill="{color}">{label}</text>')
        for p in np.asarray(arr, dtype=float).reshape(-1, 2):
            x, y = px(p)
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{color}" fill-opacity="0.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
