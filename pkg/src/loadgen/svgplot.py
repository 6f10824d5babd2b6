"""Hand-rolled SVG line charts with byte-deterministic output.

No plotting framework: identical inputs must produce identical files so runs
can be compared by hash. Coordinates are formatted with fixed precision.
"""

from __future__ import annotations

import numpy as np

WIDTH = 720
HEIGHT = 360
MARGIN = 45
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(v: float) -> str:
    return format(float(v), ".3f")


def _scale(values, lo, hi, out_lo, out_hi):
    values = np.asarray(values, dtype=np.float64)
    if hi - lo <= 0.0:
        return np.full(values.shape, (out_lo + out_hi) / 2.0)
    return out_lo + (values - lo) / (hi - lo) * (out_hi - out_lo)


def line_chart(series, title: str = "", x_label: str = "", y_label: str = "") -> str:
    """Render labeled series as one SVG document.

    `series` is a list of (label, y-values); x is the sample index. Returns
    the SVG text.
    """
    if not series:
        raise ValueError("line_chart needs at least one series")
    all_y = np.concatenate([np.asarray(ys, dtype=np.float64) for _, ys in series])
    if all_y.size == 0:
        raise ValueError("line_chart needs nonempty series")
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if y_hi == y_lo:
        y_lo -= 1.0
        y_hi += 1.0
    x_hi = max(len(ys) - 1 for _, ys in series)
    x_hi = max(x_hi, 1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="#999" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH // 2}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{WIDTH // 2}" y="{HEIGHT - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{HEIGHT // 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11" '
            f'transform="rotate(-90 14 {HEIGHT // 2})">{y_label}</text>'
        )
    # axis extent labels
    parts.append(
        f'<text x="{MARGIN - 4}" y="{MARGIN + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{_fmt(y_hi)}</text>'
    )
    parts.append(
        f'<text x="{MARGIN - 4}" y="{HEIGHT - MARGIN + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{_fmt(y_lo)}</text>'
    )

    for i, (label, ys) in enumerate(series):
        ys = np.asarray(ys, dtype=np.float64)
        color = PALETTE[i % len(PALETTE)]
        xs = _scale(np.arange(ys.size), 0, x_hi, MARGIN, WIDTH - MARGIN)
        ys_px = _scale(ys, y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys_px))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 + 14 * i}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def loss_curve_svg(gen_losses, disc_losses, title: str) -> str:
    return line_chart(
        [("generator", gen_losses), ("discriminator", disc_losses)],
        title=title,
        x_label="epoch",
        y_label="loss",
    )


def overlay_svg(real, generated, title: str) -> str:
    return line_chart(
        [("real", real), ("generated", generated)],
        title=title,
        x_label="sample",
        y_label="power (W)",
    )
