"""Hand-written SVG figures.

Output depends only on the data: coordinates are printed with two decimals
and element order is fixed, so the same inputs give byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .series import format_timestamp

WIDTH = 800
PANEL_HEIGHT = 180
MARGIN = dict(left=70, right=20, top=30, bottom=30)


def _f(v) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick(v) -> str:
    return f"{v:.4g}"


class _Panel:
    def __init__(self, top, title, xlim, ylim):
        self.top = top
        self.title = title
        self.x0, self.x1 = xlim
        lo, hi = ylim
        if not np.isfinite(lo) or not np.isfinite(hi):
            lo, hi = 0.0, 1.0
        if hi <= lo:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        self.y0, self.y1 = lo - pad, hi + pad
        self.items = []
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.bottom = top + PANEL_HEIGHT - MARGIN["bottom"]
        self.inner_top = top + MARGIN["top"]

    def px(self, x):
        span = (self.x1 - self.x0) or 1.0
        return self.left + (np.asarray(x, float) - self.x0) / span * (self.right - self.left)

    def py(self, y):
        return self.bottom - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (self.bottom - self.inner_top)

    def polyline(self, x, y, color, width=1.0, dash=None):
        """Line through finite points; NaNs break it into segments."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = np.isfinite(y)
        start = None
        for i in range(len(y) + 1):
            if i < len(y) and ok[i]:
                if start is None:
                    start = i
                continue
            if start is not None:
                seg = slice(start, i)
                pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.px(x[seg]), self.py(y[seg])))
                extra = f' stroke-dasharray="{dash}"' if dash else ""
                self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                                  f'stroke-width="{width}"{extra}/>')
                start = None

    def points(self, x, y, color, r=2.0):
        for a, b in zip(self.px(x), self.py(y)):
            self.items.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{r}" fill="{color}"/>')

    def hline(self, y, color, dash=None):
        self.polyline([self.x0, self.x1], [y, y], color, dash=dash)

    def stems(self, x, y, color):
        base = self.py(0.0)
        for a, b in zip(self.px(x), self.py(y)):
            self.items.append(f'<line x1="{_f(a)}" y1="{_f(base)}" x2="{_f(a)}" y2="{_f(b)}" '
                              f'stroke="{color}" stroke-width="2"/>')

    def render(self, xlabels=None):
        out = [f'<text x="{self.left}" y="{self.top + 18}" font-size="13" font-family="sans-serif">'
               f'{escape(self.title)}</text>',
               f'<rect x="{self.left}" y="{self.inner_top}" width="{self.right - self.left}" '
               f'height="{self.bottom - self.inner_top}" fill="none" stroke="#888"/>']
        for v in np.linspace(self.y0, self.y1, 5)[1:-1]:
            y = _f(self.py(v))
            out.append(f'<line x1="{self.left - 4}" y1="{y}" x2="{self.left}" y2="{y}" stroke="#888"/>')
            out.append(f'<text x="{self.left - 6}" y="{y}" font-size="10" text-anchor="end" '
                       f'font-family="sans-serif">{_tick(v)}</text>')
        if xlabels:
            for x, label in xlabels:
                out.append(f'<text x="{_f(self.px(x))}" y="{self.bottom + 14}" font-size="10" '
                           f'text-anchor="middle" font-family="sans-serif">{escape(label)}</text>')
        return out + self.items


def _document(panels, xlabels=None, height=None):
    height = height or PANEL_HEIGHT * len(panels)
    body = []
    for p in panels:
        body += p.render(xlabels)
    return "\n".join([f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
                      f'viewBox="0 0 {WIDTH} {height}">',
                      f'<rect width="{WIDTH}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _time_labels(times, count=5):
    n = len(times)
    if n == 0:
        return []
    pos = np.unique(np.linspace(0, n - 1, min(count, n)).round().astype(int))
    return [(int(i), format_timestamp(times[i])[:10]) for i in pos]


def _limits(*arrays):
    vals = np.concatenate([np.asarray(a, float).ravel() for a in arrays])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    return float(vals.min()), float(vals.max())


def save(text, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def imputation_overlay(original, imputed, title=None) -> str:
    """Observed values in black, filled values in red."""
    n = len(imputed)
    x = np.arange(n)
    obs = np.where(original.present, original.values, np.nan)
    filled = ~original.present
    p = _Panel(0, title or f"{imputed.name}: observed (black) and imputed (red)", (0, max(n - 1, 1)),
               _limits(imputed.values))
    fill_line = np.where(filled | np.roll(filled, 1) | np.roll(filled, -1), imputed.values, np.nan)
    p.polyline(x, fill_line, "red")
    p.polyline(x, obs, "black")
    if filled.any():
        p.points(x[filled], imputed.values[filled], "red", r=1.5)
    return _document([p], _time_labels(imputed.times))


def stl_figure(res, title="STL decomposition") -> str:
    n = len(res.observed)
    x = np.arange(n)
    parts = [("observed", res.observed.values), ("seasonal", res.seasonal.values),
             ("trend", res.trend.values), ("remainder", res.remainder.values)]
    panels = []
    for k, (label, y) in enumerate(parts):
        p = _Panel(k * PANEL_HEIGHT, f"{title}: {label}" if k == 0 else label,
                   (0, max(n - 1, 1)), _limits(y))
        if label == "remainder":
            p.stems(x, y, "#444")
        else:
            p.polyline(x, y, "black")
        panels.append(p)
    return _document(panels, _time_labels(res.observed.times))


def ccf_figure(res, title="Cross-correlation") -> str:
    lags = np.asarray(res.lags, float)
    r = np.asarray(res.correlations, float)
    b = res.confidence_bound
    p = _Panel(0, title, (lags.min() - 0.5, lags.max() + 0.5), _limits(r, [b, -b, 0.0]))
    p.hline(0.0, "#888")
    p.hline(b, "blue", dash="4,3")
    p.hline(-b, "blue", dash="4,3")
    p.stems(lags, r, "black")
    ticks = [(float(l), str(int(l))) for l in np.unique(np.linspace(lags.min(), lags.max(), 9).round())]
    return _document([p], ticks)


def var_fit_figure(fit, column) -> str:
    """Actual (black) against fitted (blue), with the residuals underneath."""
    j = fit.names.index(column)
    actual = fit.Y[:, j]
    fitted = fit.fitted[:, j]
    resid = fit.residuals[:, j]
    n = actual.size
    x = np.arange(n)
    top = _Panel(0, f"{column}: actual (black) and fitted (blue)", (0, max(n - 1, 1)),
                 _limits(actual, fitted))
    top.polyline(x, actual, "black")
    top.polyline(x, fitted, "blue")
    bottom = _Panel(PANEL_HEIGHT, f"{column}: residuals", (0, max(n - 1, 1)), _limits(resid, [0.0]))
    bottom.hline(0.0, "#888")
    bottom.polyline(x, resid, "black")
    times = fit.index[-n:] if fit.index is not None else None
    return _document([top, bottom], _time_labels(times) if times is not None else None)


def forecast_figure(history, fc, names, tail=60) -> str:
    """Recent history with h-step forecasts and +/- 1.96 SE bands, one panel per series."""
    panels = []
    for k, name in enumerate(names):
        j = fc.names.index(name)
        hist = np.asarray(history[name], float)[-tail:]
        m = hist.size
        mean = fc.mean[:, j]
        se = np.sqrt(fc.variance[:, j])
        xf = np.arange(m, m + fc.horizon)
        p = _Panel(k * PANEL_HEIGHT, f"Forecast of {name}", (0, m + fc.horizon - 1),
                   _limits(hist, mean + 1.96 * se, mean - 1.96 * se))
        p.polyline(np.arange(m), hist, "black")
        p.polyline(np.concatenate([[m - 1], xf]), np.concatenate([[hist[-1]], mean]), "blue")
        p.polyline(xf, mean + 1.96 * se, "blue", dash="4,3")
        p.polyline(xf, mean - 1.96 * se, "blue", dash="4,3")
        panels.append(p)
    return _document(panels)


def importance_figure(ranked, top=20, title="Variable importance (gain)") -> str:
    """Horizontal bars of gain share, largest at the top."""
    rows = list(ranked)[:top]
    total = sum(r[1] for r in ranked) or 1.0
    bar_h, left, right = 16, 160, WIDTH - 40
    height = 50 + bar_h * max(len(rows), 1) + 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}">',
           f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
           f'<text x="{left}" y="24" font-size="13" font-family="sans-serif">{escape(title)}</text>']
    peak = max((r[1] / total for r in rows), default=1.0) or 1.0
    for i, (name, gain, _) in enumerate(rows):
        y = 40 + i * bar_h
        share = gain / total
        w = share / peak * (right - left)
        out.append(f'<text x="{left - 6}" y="{y + bar_h - 4}" font-size="11" text-anchor="end" '
                   f'font-family="sans-serif">{escape(name)}</text>')
        out.append(f'<rect x="{left}" y="{y + 2}" width="{_f(w)}" height="{bar_h - 4}" fill="steelblue"/>')
        out.append(f'<text x="{_f(left + w + 4)}" y="{y + bar_h - 4}" font-size="10" '
                   f'font-family="sans-serif">{share:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
