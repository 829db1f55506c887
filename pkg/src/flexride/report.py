"""Figure rendering for benchmark sweeps and simulation output.

Consumes the delimited files the CLI writes (bench CSV, per-scenario
simulation CSV) and renders summary figures next to them.  Kept strictly
downstream of the CSV boundary so the solver itself never needs a display.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

plt.rcParams.update(
    {
        "figure.figsize": (6.4, 4.0),
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "savefig.dpi": 150,
        "savefig.bbox": "tight",
    }
)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def render_bench_figures(bench_csv: Path, out_dir: Path) -> list[Path]:
    """Render bound/CPU/label comparisons from a bench sweep CSV."""
    rows = _read_csv(bench_csv)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if not rows:
        return written

    instances = sorted({r["instance"] for r in rows})
    variants = sorted({(r["mode"], r["dominance"]) for r in rows})

    def series(metric: str, mode: str, rule: str) -> list[float]:
        out = []
        for inst in instances:
            vals = [
                float(r[metric])
                for r in rows
                if r["instance"] == inst and r["mode"] == mode and r["dominance"] == rule and r[metric]
            ]
            out.append(vals[0] if vals else float("nan"))
        return out

    for metric, label, fname in (
        ("labels", "labels explored", "labels_explored.png"),
        ("cpu_seconds", "CPU seconds", "cpu_seconds.png"),
        ("bound", "objective bound", "bounds.png"),
    ):
        fig, ax = plt.subplots()
        width = 0.8 / max(len(variants), 1)
        for k, (mode, rule) in enumerate(variants):
            xs = [i + k * width for i in range(len(instances))]
            ax.bar(xs, series(metric, mode, rule), width=width, label=f"{mode}/{rule}")
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(instances))])
        ax.set_xticklabels(instances, rotation=30, ha="right")
        ax.set_ylabel(label)
        ax.legend(fontsize=7)
        path = out_dir / fname
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    lr_rows = [r for r in rows if r.get("label_reduction_percent")]
    if lr_rows:
        fig, ax = plt.subplots()
        xs = range(len(lr_rows))
        ax.bar(list(xs), [float(r["label_reduction_percent"]) for r in lr_rows])
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"{r['instance']}/{r['mode']}" for r in lr_rows], rotation=30, ha="right")
        ax.set_ylabel("label reduction %")
        ax.axhline(0.0, color="black", linewidth=0.8)
        path = out_dir / "label_reduction.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def render_simulation_figures(scenario_csv: Path, out_dir: Path) -> list[Path]:
    """Render the served/lost and time breakdown of a simulation CSV."""
    rows = _read_csv(scenario_csv)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if not rows:
        return written

    sids = [int(r["scenario_id"]) for r in rows]
    served = [int(r["served"]) for r in rows]
    lost = [int(r["lost"]) for r in rows]

    fig, ax = plt.subplots()
    ax.bar(sids, served, label="served")
    ax.bar(sids, lost, bottom=served, label="lost")
    ax.set_xlabel("scenario")
    ax.set_ylabel("requests")
    ax.legend(fontsize=7)
    path = out_dir / "service_outcomes.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots()
    ax.plot(sids, [float(r["T"]) for r in rows], label="travel time")
    ax.plot(sids, [float(r["TT"]) for r in rows], label="total time")
    ax.set_xlabel("scenario")
    ax.set_ylabel("time units")
    ax.legend(fontsize=7)
    path = out_dir / "time_breakdown.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    return written
