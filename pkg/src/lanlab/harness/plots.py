"""Minimal SVG figures: histogram with a density overlay, QQ plot, line plot."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy import stats

WIDTH, HEIGHT = 480, 360
MARGIN = 50


class _Canvas:
    def __init__(self, xlim, ylim, title, xlabel, ylabel, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        self.x0, self.x1 = (np.log10(v) if logx else v for v in xlim)
        self.y0, self.y1 = (np.log10(v) if logy else v for v in ylim)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'font-family="sans-serif" font-size="11">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="12" y="{HEIGHT / 2}" text-anchor="middle" '
            f'transform="rotate(-90 12 {HEIGHT / 2})">{escape(ylabel)}</text>',
            f'<rect x="{MARGIN}" y="{MARGIN / 2}" width="{WIDTH - 1.5 * MARGIN}" '
            f'height="{HEIGHT - 1.5 * MARGIN}" fill="none" stroke="black"/>',
        ]
        for frac in (0.0, 0.5, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            px, _ = self.map(10**xv if logx else xv, 10**self.y0 if logy else self.y0)
            _, py = self.map(10**self.x0 if logx else self.x0, 10**yv if logy else yv)
            self.parts.append(f'<text x="{px:.1f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">'
                              f'{_tick(xv, logx)}</text>')
            self.parts.append(f'<text x="{MARGIN - 4}" y="{py + 4:.1f}" text-anchor="end">'
                              f'{_tick(yv, logy)}</text>')

    def map(self, x, y):
        x = np.log10(x) if self.logx else x
        y = np.log10(y) if self.logy else y
        px = MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 1.5 * MARGIN)
        py = HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 1.5 * MARGIN)
        return px, py

    def polyline(self, xs, ys, color="black", dash=None):
        pts = " ".join("%.2f,%.2f" % self.map(x, y) for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>')

    def points(self, xs, ys, color="black"):
        for x, y in zip(xs, ys):
            px, py = self.map(x, y)
            self.parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2" fill="{color}"/>')

    def rect(self, x0, x1, y, color="#9ab"):
        pa, pb = self.map(x0, y)
        pc, pd = self.map(x1, 10**self.y0 if self.logy else self.y0)
        self.parts.append(f'<rect x="{pa:.2f}" y="{pb:.2f}" width="{pc - pa:.2f}" height="{pd - pb:.2f}" '
                          f'fill="{color}" stroke="white" stroke-width="0.5"/>')

    def legend(self, entries):
        for i, (label, color) in enumerate(entries):
            y = MARGIN / 2 + 14 + 14 * i
            self.parts.append(f'<line x1="{WIDTH - MARGIN - 70}" y1="{y - 4}" x2="{WIDTH - MARGIN - 55}" '
                              f'y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
            self.parts.append(f'<text x="{WIDTH - MARGIN - 50}" y="{y}">{escape(label)}</text>')

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.parts + ["</svg>"]) + "\n", encoding="utf-8")
        return path


def _tick(v, log):
    return f"1e{v:.0f}" if log and float(v).is_integer() else (f"{10**v:.3g}" if log else f"{v:.3g}")


def histogram(path, values, title="", xlabel="", bins=30, overlay_normal=True):
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins, density=True)
    lo, hi = min(edges[0], -3.5), max(edges[-1], 3.5)
    xs = np.linspace(lo, hi, 200)
    top = max(counts.max(), stats.norm.pdf(0) if overlay_normal else 0) * 1.1
    c = _Canvas((lo, hi), (0, top), title, xlabel, "density")
    for a, b, h in zip(edges[:-1], edges[1:], counts):
        c.rect(a, b, h)
    if overlay_normal:
        c.polyline(xs, stats.norm.pdf(xs), color="crimson")
        c.legend([("N(0, 1)", "crimson")])
    return c.save(path)


def qq_plot(path, values, title="", xlabel="standard normal quantile"):
    v = np.sort(np.asarray(values, dtype=float))
    q = stats.norm.ppf((np.arange(1, len(v) + 1) - 0.5) / len(v))
    lo, hi = min(q.min(), v.min()), max(q.max(), v.max())
    c = _Canvas((lo, hi), (lo, hi), title, xlabel, "sample quantile")
    c.polyline([lo, hi], [lo, hi], color="crimson", dash="4,3")
    c.points(q, v)
    return c.save(path)


def line_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """``series``: mapping label -> (xs, ys)."""
    palette = ["#1f5fa8", "crimson", "#2a8a3e", "#a86b1f", "#6b1fa8"]
    xs_all = np.concatenate([np.asarray(s[0], dtype=float) for s in series.values()])
    ys_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series.values()])
    ok = np.isfinite(ys_all) & (ys_all > 0 if logy else True)
    ys_all = ys_all[ok]
    ylo, yhi = (ys_all.min(), ys_all.max()) if ys_all.size else (0.0, 1.0)
    if not logy:
        pad = 0.05 * (yhi - ylo or 1.0)
        ylo, yhi = ylo - pad, yhi + pad
    c = _Canvas((xs_all.min(), xs_all.max()), (ylo, yhi), title, xlabel, ylabel, logx, logy)
    legend = []
    for (label, (xs, ys)), color in zip(series.items(), palette * 4):
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        keep = np.isfinite(ys) & (ys > 0 if logy else True)
        c.polyline(xs[keep], ys[keep], color=color)
        c.points(xs[keep], ys[keep], color=color)
        legend.append((label, color))
    c.legend(legend)
    return c.save(path)
