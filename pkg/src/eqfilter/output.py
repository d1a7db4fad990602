"""CSV and SVG writers for run logs and Monte Carlo aggregates."""

import math
import os

import numpy as np

LOG_FLOOR = 1e-12

# (colour, dash pattern) per filter and experiment
STYLES = {
    "second-order": {
        "lkf": ("#d62728", None),
        "ekf": ("#1f77b4", "6,4"),
        "eqf-nocurv": ("#2ca02c", "2,3"),
        "eqf": ("#000000", "8,3,2,3"),
    },
    "sphere": {
        "eqf": ("#d62728", None),
        "ekf": ("#1f77b4", "6,4"),
    },
}

METRIC_LABELS = {
    "bearing_error": "bearing error [rad]",
    "position_error": "position error [m]",
    "velocity_error": "velocity error [m/s]",
    "energy": "filter energy",
}


def _fmt(x):
    return format(float(x), ".17g")


def csv_columns(filters, metrics):
    return ["t"] + [f"{f}_{m}" for f in filters for m in metrics]


def write_series_csv(path, t, series, filters, metrics):
    """Write ``t`` and ``series[filter][metric]`` columns as CSV.

    Floats use 17 significant digits and rows end with LF, so output is a
    deterministic function of the data.
    """
    cols = csv_columns(filters, metrics)
    data = [np.asarray(t)] + [np.asarray(series[f][m]) for f in filters for m in metrics]
    lines = [",".join(cols)]
    for k in range(len(t)):
        lines.append(",".join(_fmt(col[k]) for col in data))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv(log, path):
    cfg = log.config
    write_series_csv(path, log.t, log.metrics, cfg.filters, cfg.metrics)


def write_aggregate_csv(agg, path):
    """Per-step medians over seeds with the same columns as a single run."""
    cfg = agg.config
    med = {f: {m: agg.series[f][m][1] for m in cfg.metrics} for f in cfg.filters}
    write_series_csv(path, agg.t, med, cfg.filters, cfg.metrics)


def write_summary_csv(agg, path):
    """Quartiles of the per-seed time averages for every filter, metric and window."""
    cfg = agg.config
    lines = ["filter,metric,window,q25,median,q75"]
    for f in cfg.filters:
        for m in cfg.metrics:
            for w, q in agg.summary[f][m].items():
                lines.append(",".join([f, m, w] + [_fmt(x) for x in q]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _log10_clamped(values):
    v = np.asarray(values, dtype=float)
    v = np.where(np.isfinite(v) & (v > LOG_FLOOR), v, LOG_FLOOR)
    return np.log10(v)


def _c(x):
    return f"{x:.6f}"


def render_svg(t, series, filters, metrics, experiment, title=""):
    """Return an SVG document with one log10 panel per metric."""
    width, panel_h = 720.0, 220.0
    left, right, top, gap = 80.0, 150.0, 40.0, 50.0
    plot_w = width - left - right
    height = top + len(metrics) * (panel_h + gap)
    styles = STYLES.get(experiment, {})
    t = np.asarray(t, dtype=float)
    t0, t1 = float(t[0]), float(t[-1])
    if t1 <= t0:
        t1 = t0 + 1.0

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_c(width)}" '
        f'height="{_c(height)}" viewBox="0 0 {_c(width)} {_c(height)}">',
        f'<rect x="0" y="0" width="{_c(width)}" height="{_c(height)}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{_c(left)}" y="20.000000" font-family="sans-serif" '
                   f'font-size="14">{title}</text>')

    for i, metric in enumerate(metrics):
        y_top = top + i * (panel_h + gap)
        logs = {f: _log10_clamped(series[f][metric]) for f in filters}
        lo = math.floor(min(float(v.min()) for v in logs.values()))
        hi = math.ceil(max(float(v.max()) for v in logs.values()))
        if hi <= lo:
            lo, hi = lo - 1, hi + 1

        def sx(x):
            return left + (x - t0) / (t1 - t0) * plot_w

        def sy(y):
            return y_top + (hi - y) / (hi - lo) * panel_h

        out.append(f'<g class="panel" id="panel-{metric}">')
        out.append(f'<rect x="{_c(left)}" y="{_c(y_top)}" width="{_c(plot_w)}" '
                   f'height="{_c(panel_h)}" fill="none" stroke="#000000" stroke-width="1"/>')
        step = max(1, int(math.ceil((hi - lo) / 8)))
        for d in range(lo, hi + 1, step):
            yy = sy(d)
            out.append(f'<line x1="{_c(left)}" y1="{_c(yy)}" x2="{_c(left + plot_w)}" y2="{_c(yy)}" '
                       f'stroke="#dddddd" stroke-width="0.5"/>')
            out.append(f'<text x="{_c(left - 6)}" y="{_c(yy + 4)}" text-anchor="end" '
                       f'font-family="sans-serif" font-size="10">1e{d}</text>')
        for k in range(6):
            xv = t0 + (t1 - t0) * k / 5
            out.append(f'<text x="{_c(sx(xv))}" y="{_c(y_top + panel_h + 14)}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="10">{xv:g}</text>')
        out.append(f'<text x="{_c(left)}" y="{_c(y_top - 6)}" font-family="sans-serif" '
                   f'font-size="12">log10 {METRIC_LABELS.get(metric, metric)}</text>')
        for f in filters:
            colour, dash = styles.get(f, ("#7f7f7f", None))
            pts = " ".join(f"{_c(sx(x))},{_c(sy(y))}" for x, y in zip(t, logs[f]))
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<polyline class="series" data-filter="{f}" fill="none" stroke="{colour}" '
                       f'stroke-width="1.2"{dash_attr} points="{pts}"/>')
        out.append("</g>")

    # legend
    lx = left + plot_w + 15
    for j, f in enumerate(filters):
        colour, dash = styles.get(f, ("#7f7f7f", None))
        ly = top + 15 + 18 * j
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{_c(lx)}" y1="{_c(ly)}" x2="{_c(lx + 30)}" y2="{_c(ly)}" '
                   f'stroke="{colour}" stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{_c(lx + 36)}" y="{_c(ly + 4)}" font-family="sans-serif" '
                   f'font-size="11">{f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit_plot(source, path):
    """Plot a :class:`RunLog` or a Monte Carlo aggregate (medians) as SVG."""
    cfg = source.config
    if hasattr(source, "series"):
        series = {f: {m: source.series[f][m][1] for m in cfg.metrics} for f in cfg.filters}
        title = f"{cfg.experiment}: median over {len(source.seeds)} seeds"
    else:
        series = source.metrics
        title = f"{cfg.experiment}: seed {cfg.seed}"
    write_svg(path, render_svg(source.t, series, cfg.filters, cfg.metrics, cfg.experiment, title))


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
