"""Minimal SVG line-and-band plots of CERF estimates (no plotting library)."""

from __future__ import annotations

from html import escape

import numpy as np

from .errors import ValidationError

WIDTH, HEIGHT = 720, 480
MARGIN = dict(left=70, right=160, top=30, bottom=55)

# colours follow the usual three-model comparison: benchmark green,
# naive orange, NC-corrected blue
STYLE = {
    "BNP-NC": "#1f5fbf",
    "YX": "#e07b00",
    "YXU": "#2a9d3a",
}
FALLBACK = ("#6a3d9a", "#b15928", "#008b8b", "#8b008b")
TRUTH_COLOUR = "#d62728"


def _ticks(lo, hi, n=6):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw),
               default=10 * mag)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + step * 1e-9, step))


def _fmt(v):
    return f"{v:.4g}"


def render(estimates, truth=None, title="", xlabel="exposure",
           ylabel="E[Y(x)]"):
    """Return an SVG document as a string.

    ``estimates`` are :class:`CerfEstimate` objects sharing one grid;
    ``truth`` is an optional ``(x, y)`` pair drawn as a solid red line.
    """
    if not estimates:
        raise ValidationError("nothing to plot")
    xs = [e.grid for e in estimates]
    ys = [e.median for e in estimates]
    for e in estimates:
        for lo, hi in e.bands.values():
            ys += [lo, hi]
    if truth is not None:
        xs.append(np.asarray(truth[0]))
        ys.append(np.asarray(truth[1]))
    xall = np.concatenate(xs)
    yall = np.concatenate(ys)
    yall = yall[np.isfinite(yall)]
    x0, x1 = float(xall.min()), float(xall.max())
    y0, y1 = float(yall.min()), float(yall.max())
    pad_x = 0.05 * (x1 - x0 or 1.0)
    pad_y = 0.05 * (y1 - y0 or 1.0)
    x0, x1, y0, y1 = x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y
    L, R = MARGIN["left"], WIDTH - MARGIN["right"]
    T, B = MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def sx(v):
        return L + (np.asarray(v) - x0) / (x1 - x0) * (R - L)

    def sy(v):
        return B - (np.asarray(v) - y0) / (y1 - y0) * (B - T)

    def path(x, y):
        pts = [f"{a:.2f},{b:.2f}" for a, b in zip(sx(x), sy(y))
               if np.isfinite(b)]
        return "M" + " L".join(pts)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" '
           'font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<defs><clipPath id="plot"><rect x="{L}" y="{T}" '
           f'width="{R - L}" height="{B - T}"/></clipPath></defs>']
    # axes
    out.append(f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" '
               'fill="none" stroke="#444"/>')
    for t in _ticks(x0, x1):
        px = float(sx(t))
        out.append(f'<line x1="{px:.2f}" y1="{B}" x2="{px:.2f}" y2="{B + 5}" '
                   'stroke="#444"/>')
        out.append(f'<text x="{px:.2f}" y="{B + 18}" text-anchor="middle">'
                   f'{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        py = float(sy(t))
        out.append(f'<line x1="{L - 5}" y1="{py:.2f}" x2="{L}" y2="{py:.2f}" '
                   'stroke="#444"/>')
        out.append(f'<text x="{L - 8}" y="{py + 4:.2f}" text-anchor="end">'
                   f'{_fmt(t)}</text>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(T + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(T + B) / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{(L + R) / 2}" y="{T - 10}" '
                   f'text-anchor="middle" font-size="14">{escape(title)}</text>')

    legend = []
    out.append('<g clip-path="url(#plot)">')
    for i, e in enumerate(estimates):
        colour = STYLE.get(e.label, FALLBACK[i % len(FALLBACK)])
        levels = sorted(e.bands, reverse=True)
        for j, lv in enumerate(levels):
            lo, hi = e.bands[lv]
            poly = path(np.r_[e.grid, e.grid[::-1]], np.r_[hi, lo[::-1]])
            opacity = 0.12 + 0.5 * j / max(len(levels), 1)
            out.append(f'<path d="{poly} Z" fill="{colour}" '
                       f'fill-opacity="{opacity:.2f}" stroke="none"/>')
        out.append(f'<path d="{path(e.grid, e.median)}" fill="none" '
                   f'stroke="{colour}" stroke-width="2" '
                   'stroke-dasharray="6,3"/>')
        legend.append((e.label, colour, "6,3"))
    if truth is not None:
        out.append(f'<path d="{path(truth[0], truth[1])}" fill="none" '
                   f'stroke="{TRUTH_COLOUR}" stroke-width="2"/>')
        legend.append(("truth", TRUTH_COLOUR, None))
    out.append("</g>")
    for i, (label, colour, dash) in enumerate(legend):
        ly = T + 16 + 20 * i
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{R + 15}" y1="{ly}" x2="{R + 45}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"{extra}/>')
        out.append(f'<text x="{R + 52}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def align(estimates, interpolate=False):
    """Put every estimate on the first one's grid.

    Grids that differ are an error unless ``interpolate`` is set, in which
    case medians and bands are linearly interpolated.
    """
    from .data import CerfEstimate

    ref = estimates[0].grid
    out = [estimates[0]]
    for e in estimates[1:]:
        if e.grid.shape == ref.shape and np.allclose(e.grid, ref):
            out.append(e)
            continue
        if not interpolate:
            raise ValidationError(
                f"{e.label}: grid differs from {estimates[0].label}; "
                "pass --interpolate to resample")
        if e.grid.max() < ref.min() or e.grid.min() > ref.max():
            raise ValidationError(f"{e.label}: grid does not overlap")

        def f(v):
            return np.interp(ref, e.grid, v, left=np.nan, right=np.nan)

        out.append(CerfEstimate(
            grid=ref, draws=np.empty((0, ref.size)), median=f(e.median),
            bands={lv: (f(lo), f(hi)) for lv, (lo, hi) in e.bands.items()},
            label=e.label, meta=e.meta))
    return out
