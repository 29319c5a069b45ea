"""Render the four figure families and emit deterministic sidecar summaries.

Families and the CSV schemas they consume:

* ``g_curve``    -- sweep over iterations: columns (axis_value,
  strategy_or_baseline, metric, value) with metric ``g``. One line per
  strategy; the sidecar records per-series endpoints and whether each of the
  two power-balancing strategies decreases monotonically.
* ``trajectory`` -- per-round training traces: columns (t,
  participants_count, sigma_q2_realized, loss_current, loss_weighted,
  eps_cumulative). Loss on a log axis, cumulative epsilon on a twin axis.
* ``disparity``  -- sweep over a system parameter: same long format as
  g_curve with metrics ``t_span_disparity`` and ``utility_disparity``,
  rendered as grouped bars.
* ``portion``    -- mixed-strategy sweep: metric ``g_at_ref_tau`` versus the
  noise portion, with the pure-strategy rows echoed for endpoint comparison.

Sidecar summaries are JSON with sorted keys and a trailing newline; given the
same CSV bytes the summary bytes are identical (no timestamps, no floats
beyond the CSV's own values and exact integer counts).
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

FAMILIES = ("g_curve", "trajectory", "disparity", "portion")

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


class FigureDataError(Exception):
    """The input CSV is empty or lacks a required column."""


@dataclass
class FigureSpec:
    family: str
    inputs: list
    output: Path
    summary: Path
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise FigureDataError(f"unknown figure family {self.family!r}")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)
        self.summary = Path(self.summary)


def _read_rows(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FigureDataError(f"{path}: missing column(s) {missing}")
        rows = list(reader)
    if not rows:
        raise FigureDataError(f"{path}: no data rows")
    return rows


def _series(rows, metric):
    """Group (axis_value, value) pairs by strategy label for one metric."""
    out = {}
    for row in rows:
        if row["metric"] != metric:
            continue
        out.setdefault(row["strategy_or_baseline"], []).append(
            (row["axis_value"], float(row["value"]))
        )
    return out


def _monotone_decreasing(values):
    return bool(all(b < a for a, b in zip(values, values[1:])))


def _render_g_curve(spec):
    rows = _read_rows(spec.inputs[0], ["axis_value", "strategy_or_baseline", "metric", "value"])
    series = _series(rows, "g")
    if not series:
        raise FigureDataError(f"{spec.inputs[0]}: no rows with metric 'g'")
    fig, ax = plt.subplots()
    summary = {}
    for label in sorted(series):
        xs = [float(x) for x, _ in series[label]]
        ys = [y for _, y in series[label]]
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
        summary[label] = {
            "points": len(ys),
            "first": ys[0],
            "last": ys[-1],
            "min": min(ys),
            "max": max(ys),
            "monotone_decreasing": _monotone_decreasing(ys),
        }
    ax.set_xlabel(spec.xlabel or "global iterations")
    ax.set_ylabel(spec.ylabel or "utility")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    return fig, {"family": "g_curve", "series": summary}


def _render_trajectory(spec):
    fig, ax = plt.subplots()
    ax2 = ax.twinx()
    summary = {}
    required = ["t", "loss_weighted", "eps_cumulative"]
    for path in spec.inputs:
        rows = _read_rows(path, required)
        ts = [int(r["t"]) for r in rows]
        loss = [float(r["loss_weighted"]) for r in rows]
        eps = [float(r["eps_cumulative"]) for r in rows]
        label = path.stem
        ax.plot(ts, loss, label=f"{label} loss")
        ax2.plot(ts, eps, linestyle="--", label=f"{label} eps")
        summary[label] = {
            "rounds": len(ts),
            "final_loss_weighted": loss[-1],
            "final_eps_cumulative": eps[-1],
            "eps_nondecreasing": bool(all(b >= a for a, b in zip(eps, eps[1:]))),
        }
    ax.set_xlabel(spec.xlabel or "round")
    ax.set_ylabel(spec.ylabel or "weighted suboptimality")
    ax.set_yscale("log")
    ax2.set_ylabel("cumulative epsilon")
    ax.legend(fontsize=8, loc="upper right")
    return fig, {"family": "trajectory", "series": summary}


def _render_disparity(spec):
    rows = _read_rows(spec.inputs[0], ["axis_value", "strategy_or_baseline", "metric", "value"])
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 4.0))
    summary = {}
    for ax, metric in zip(axes, ("t_span_disparity", "utility_disparity")):
        series = _series(rows, metric)
        pairs = series.get("disparity", [])
        if not pairs:
            raise FigureDataError(f"{spec.inputs[0]}: no rows with metric {metric!r}")
        xs = [x for x, _ in pairs]
        ys = [y for _, y in pairs]
        ax.bar(range(len(ys)), ys, tick_label=xs)
        ax.set_xlabel(spec.xlabel or "axis value")
        ax.set_title(metric)
        summary[metric] = {
            "axis_values": xs,
            "values": ys,
            "all_nonnegative": bool(all(v >= 0 for v in ys)),
            "nonincreasing": bool(all(b <= a for a, b in zip(ys, ys[1:]))),
            "nondecreasing": bool(all(b >= a for a, b in zip(ys, ys[1:]))),
        }
    return fig, {"family": "disparity", "series": summary}


def _render_portion(spec):
    rows = _read_rows(spec.inputs[0], ["axis_value", "strategy_or_baseline", "metric", "value"])
    series = _series(rows, "g_at_ref_tau")
    mixed = [p for p in series.get("mixed", [])]
    if not mixed:
        raise FigureDataError(f"{spec.inputs[0]}: no mixed-strategy rows")
    xs = [float(x) for x, _ in mixed]
    ys = [y for _, y in mixed]
    fig, ax = plt.subplots()
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel(spec.xlabel or "noise portion")
    ax.set_ylabel(spec.ylabel or "utility")
    summary = {
        "portions": xs,
        "values": ys,
        "first": ys[0],
        "last": ys[-1],
    }
    # echo the pure-strategy rows so endpoint equality is visible in the sidecar
    for label in ("idle", "noisy"):
        if label in series:
            summary[f"pure_{label}"] = series[label][0][1]
    if "idle" in series and "noisy" in series:
        summary["endpoints_match_pure"] = bool(
            ys[0] == series["idle"][0][1] and ys[-1] == series["noisy"][0][1]
        )
    return fig, {"family": "portion", "series": summary}


_RENDERERS = {
    "g_curve": _render_g_curve,
    "trajectory": _render_trajectory,
    "disparity": _render_disparity,
    "portion": _render_portion,
}


def render(spec):
    """Render one figure plus its sidecar summary; returns the summary dict."""
    with plt.rc_context(_STYLE):
        fig, summary = _RENDERERS[spec.family](spec)
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output)
        plt.close(fig)
    spec.summary.parent.mkdir(parents=True, exist_ok=True)
    with open(spec.summary, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary
