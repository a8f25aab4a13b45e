"""Minimal SVG line and bar charts written as plain text (800x500 viewBox)."""
import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 80, 30, 50, 70
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def nice_ticks(lo, hi, count=5):
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    if ticks[-1] < hi:
        ticks.append(round(ticks[-1] + step, 12))
    return ticks


def _fmt(v):
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xticks, yticks, xlabels=None):
        self.x0, self.x1 = xticks[0], xticks[-1]
        self.y0, self.y1 = yticks[0], yticks[-1]
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
            f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>',
        ]
        pl, pr, pt, pb = LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM
        self.parts.append(f'<line x1="{pl}" y1="{pb}" x2="{pr}" y2="{pb}" stroke="black"/>')
        self.parts.append(f'<line x1="{pl}" y1="{pt}" x2="{pl}" y2="{pb}" stroke="black"/>')
        if xlabels is None:
            xlabels = [(t, _fmt(t)) for t in xticks]
        for t, label in xlabels:
            x = self.px(t)
            self.parts.append(f'<line x1="{x:.2f}" y1="{pb}" x2="{x:.2f}" y2="{pb + 5}" stroke="black"/>')
            self.parts.append(f'<text x="{x:.2f}" y="{pb + 20}" text-anchor="middle">{escape(str(label))}</text>')
        for t in yticks:
            y = self.py(t)
            self.parts.append(f'<line x1="{pl - 5}" y1="{y:.2f}" x2="{pl}" y2="{y:.2f}" stroke="black"/>')
            self.parts.append(f'<line x1="{pl}" y1="{y:.2f}" x2="{pr}" y2="{y:.2f}" stroke="#dddddd"/>')
            self.parts.append(f'<text x="{pl - 8}" y="{y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        self.parts.append(f'<text x="{(pl + pr) / 2}" y="{HEIGHT - 20}" text-anchor="middle">{escape(xlabel)}</text>')
        self.parts.append(f'<text x="20" y="{(pt + pb) / 2}" text-anchor="middle" '
                          f'transform="rotate(-90 20 {(pt + pb) / 2})">{escape(ylabel)}</text>')

    def px(self, x):
        span = self.x1 - self.x0 or 1.0
        return LEFT + (x - self.x0) / span * (WIDTH - LEFT - RIGHT)

    def py(self, y):
        span = self.y1 - self.y0 or 1.0
        return HEIGHT - BOTTOM - (y - self.y0) / span * (HEIGHT - TOP - BOTTOM)

    def legend(self, names):
        for k, name in enumerate(names):
            y = TOP + 10 + 18 * k
            color = COLORS[k % len(COLORS)]
            self.parts.append(f'<rect x="{WIDTH - RIGHT - 150}" y="{y - 9}" width="12" height="12" fill="{color}"/>')
            self.parts.append(f'<text x="{WIDTH - RIGHT - 132}" y="{y + 1}">{escape(name)}</text>')

    def text(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def line_plot(path, series, title="", xlabel="", ylabel=""):
    """``series`` maps a legend name to ``(xs, ys)``; non-finite points are skipped."""
    xs_all = _finite([x for xs, _ in series.values() for x in xs])
    ys_all = _finite([y for _, ys in series.values() for y in ys])
    xticks = nice_ticks(min(xs_all, default=0.0), max(xs_all, default=1.0))
    yticks = nice_ticks(min(ys_all, default=0.0), max(ys_all, default=1.0))
    cv = _Canvas(title, xlabel, ylabel, xticks, yticks)
    for k, (name, (xs, ys)) in enumerate(series.items()):
        pts = [(cv.px(x), cv.py(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if not pts:
            continue
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        cv.parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            cv.parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
    cv.legend(list(series))
    _write(path, cv.text())


def bar_plot(path, labels, groups, title="", xlabel="", ylabel=""):
    """Grouped bars: ``groups`` maps a legend name to one value per label."""
    vals = _finite([v for vs in groups.values() for v in vs])
    yticks = nice_ticks(min(0.0, min(vals, default=0.0)), max(vals, default=1.0))
    n = len(labels)
    cv = _Canvas(title, xlabel, ylabel, [-0.5, n - 0.5], yticks, list(enumerate(labels)))
    width = 0.8 / max(len(groups), 1)
    base = cv.py(0.0)
    for k, (name, values) in enumerate(groups.items()):
        color = COLORS[k % len(COLORS)]
        for i, v in enumerate(values):
            if v is None or not math.isfinite(v):
                continue
            left = cv.px(i - 0.4 + k * width)
            right = cv.px(i - 0.4 + (k + 1) * width)
            top = cv.py(v)
            y, h = min(top, base), abs(base - top)
            cv.parts.append(f'<rect x="{left:.2f}" y="{y:.2f}" width="{right - left:.2f}" '
                            f'height="{h:.2f}" fill="{color}"/>')
    cv.legend(list(groups))
    _write(path, cv.text())


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
