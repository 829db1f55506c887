"""Command-line interface: solve, bench, simulate, oracle, report."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import click

from flexride import oracle as oracle_mod
from flexride import report as report_mod
from flexride import simulator as simulator_mod
from flexride.instance import ConfigError, ParseError, parse_instance, parse_uncertainty_sidecar
from flexride.search import Route, SolveConfig, SolveReport, solve_bcp

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_LIMIT = 2


def _load_instance(path: str):
    text = Path(path).read_text()
    return parse_instance(text, name=Path(path).stem)


def _echo_err(message: str) -> None:
    click.echo(f"error: {message}", err=True)


_COMMON = [
    click.option("--mode", type=click.Choice(["c", "tf", "r", "tfr"]), default="c"),
    click.option("--flex-ratio", type=float, default=None, help="fraction of flexible service nodes"),
    click.option("--psi", type=float, default=0.01, help="capacity violation probability"),
    click.option("--capacity", type=float, default=None, help="override vehicle capacity"),
    click.option("--seed", type=int, default=0),
    click.option("--uncertainty", type=click.Path(exists=True), default=None,
                 help="sidecar file: one line per pickup 'id mean lo hi'"),
]


def _with_common(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


def _solve_config(mode, flex_ratio, psi, capacity, seed, dominance="standard", time_limit=3600.0):
    if flex_ratio is None:
        flex_ratio = 0.5 if mode in ("tf", "tfr") else 0.0
    return SolveConfig(
        mode=mode,
        flex_ratio=flex_ratio,
        psi=psi,
        capacity_override=capacity,
        rng_seed=seed,
        dominance=dominance,
        time_limit=time_limit,
    )


def _report_csv(report: SolveReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["instance", "mode", "psi", "flex_ratio", "objective", "optimal", "feasible",
         "gap", "vehicles_used", "labels_explored", "cuts_added", "nodes_explored", "wall_seconds"]
    )
    writer.writerow(
        [report.instance, report.mode, report.psi, report.flex_ratio,
         "" if math.isinf(report.objective) else f"{report.objective:.6f}",
         int(report.optimal), int(report.feasible), f"{report.gap:.9f}",
         report.vehicles_used, report.labels_explored, report.cuts_added,
         report.nodes_explored, f"{report.wall_seconds:.3f}"]
    )
    return buf.getvalue()


@click.group()
def main() -> None:
    """Exact dial-a-ride solver with soft time windows and robust capacity."""


@main.command("solve")
@click.option("--instance", "instance_path", required=True, type=click.Path())
@_with_common
@click.option("--dominance", type=click.Choice(["standard", "probabilistic"]), default="standard")
@click.option("--time-limit", type=float, default=3600.0)
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json")
def cmd_solve(instance_path, mode, flex_ratio, psi, capacity, seed, uncertainty,
              dominance, time_limit, out, fmt):
    """Solve one instance; exit 0 when optimal, 2 on limit, 1 on error."""
    try:
        inst = _load_instance(instance_path)
        cfg = _solve_config(mode, flex_ratio, psi, capacity, seed, dominance, time_limit)
        extra = parse_uncertainty_sidecar(Path(uncertainty).read_text(), inst) if uncertainty else None
        report = solve_bcp(inst, cfg, uncertain=extra)
    except (OSError, ParseError, ConfigError, ValueError) as exc:
        _echo_err(str(exc))
        sys.exit(EXIT_ERROR)

    payload = report.to_json() if fmt == "json" else _report_csv(report)
    if out:
        Path(out).write_text(payload)
    else:
        click.echo(payload, nl=False)
    sys.exit(EXIT_OK if report.optimal else EXIT_LIMIT)


@main.command("bench")
@click.option("--suite", required=True, type=click.Path(exists=True),
              help="JSON suite: {instances: [...], modes: [...], psi, flex_ratio, capacity{mode: value}}")
@click.option("--time-limit", type=float, default=600.0)
@click.option("--out", type=click.Path(), default=None)
@click.option("--figures", "figures_dir", type=click.Path(), default=None,
              help="also render comparison figures into this directory")
def cmd_bench(suite, time_limit, out, figures_dir):
    """Sweep instances x modes x both dominance rules; emit a CSV table."""
    spec = json.loads(Path(suite).read_text())
    runs = _expand_suite(spec)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["instance", "mode", "dominance", "status", "bound", "cpu_seconds",
                     "labels", "label_reduction_percent"])
    for run in runs:
        labels_by_rule = {}
        rows = []
        for rule in ("standard", "probabilistic"):
            try:
                inst = _load_instance(run["instance"])
                cfg = SolveConfig(
                    mode=run["mode"], flex_ratio=run["flex_ratio"], psi=run["psi"],
                    capacity_override=run["capacity"], rng_seed=run["seed"],
                    dominance=rule, time_limit=time_limit,
                )
                t0 = time.monotonic()
                report = solve_bcp(inst, cfg)
                cpu = time.monotonic() - t0
                status = "optimal" if report.optimal else "limit"
                bound = "" if math.isinf(report.objective) else f"{report.objective:.2f}"
                labels_by_rule[rule] = report.labels_explored
                rows.append([Path(run["instance"]).stem, run["mode"], rule, status,
                             bound, f"{cpu:.2f}", report.labels_explored, ""])
            except Exception as exc:  # per-row failure: record and continue
                rows.append([Path(run["instance"]).stem, run["mode"], rule,
                             f"error: {exc}", "", "", "", ""])
        if len(labels_by_rule) == 2 and labels_by_rule["standard"]:
            lr = 100.0 * (labels_by_rule["standard"] - labels_by_rule["probabilistic"]) \
                / labels_by_rule["standard"]
            rows[1][7] = f"{lr:.2f}"
        for row in rows:
            writer.writerow(row)

    payload = buf.getvalue()
    if out:
        Path(out).write_text(payload)
    else:
        click.echo(payload, nl=False)
    if figures_dir and out:
        report_mod.render_bench_figures(Path(out), Path(figures_dir))


def _expand_suite(spec: dict) -> list[dict]:
    if "runs" in spec:
        entries = spec["runs"]
    else:
        entries = [
            {"instance": inst, "mode": mode}
            for inst in spec.get("instances", [])
            for mode in spec.get("modes", ["c"])
        ]
    runs = []
    for e in entries:
        mode = e.get("mode", "c")
        cap = e.get("capacity", spec.get("capacity"))
        if isinstance(cap, dict):
            cap = cap.get(mode)
        flex_default = spec.get("flex_ratio", 0.5) if mode in ("tf", "tfr") else 0.0
        runs.append(
            {
                "instance": e["instance"],
                "mode": mode,
                "flex_ratio": e.get("flex_ratio", flex_default),
                "psi": e.get("psi", spec.get("psi", 0.01)),
                "capacity": cap,
                "seed": e.get("seed", spec.get("seed", 0)),
            }
        )
    return runs


@main.command("simulate")
@click.option("--instance", "instance_path", required=True, type=click.Path())
@_with_common
@click.option("--plan", type=click.Path(exists=True), default=None,
              help="solve report JSON; omitted: solve first with the given flags")
@click.option("--scenarios", type=int, default=simulator_mod.DEFAULT_SCENARIOS)
@click.option("--samples", type=int, default=None,
              help="run the conservativeness audit with this many draws per trip")
@click.option("--out", type=click.Path(), default=None, help="per-scenario CSV path")
@click.option("--summary", "summary_path", type=click.Path(), default=None)
@click.option("--figures", "figures_dir", type=click.Path(), default=None)
def cmd_simulate(instance_path, mode, flex_ratio, psi, capacity, seed, uncertainty,
                 plan, scenarios, samples, out, summary_path, figures_dir):
    """Monte-Carlo service-rate evaluation of a plan."""
    try:
        inst = _load_instance(instance_path)
        cfg = _solve_config(mode, flex_ratio, psi, capacity, seed)
        from flexride.instance import apply_mode

        applied = apply_mode(inst, cfg.mode_config())
        if plan:
            report = _report_from_json(Path(plan).read_text())
        else:
            report = solve_bcp(inst, cfg)
        summary = simulator_mod.simulate(report, applied, scenarios=scenarios, seed=seed)
    except (OSError, ParseError, ConfigError, ValueError, KeyError) as exc:
        _echo_err(str(exc))
        sys.exit(EXIT_ERROR)

    csv_text = summary.to_csv()
    if out:
        Path(out).write_text(csv_text)
    else:
        click.echo(csv_text, nl=False)
    if summary_path:
        Path(summary_path).write_text(summary.to_json())
    else:
        click.echo(summary.to_json(), nl=False)

    if samples:
        trips = _routes_as_trips(applied, report)
        audit = simulator_mod.hoeffding_audit(applied, cfg.psi, trips, samples=samples, seed=seed)
        click.echo(json.dumps(audit, indent=2, sort_keys=True))
        if any(not row["within_bound"] for row in audit):
            sys.exit(EXIT_ERROR)
    if figures_dir and out:
        report_mod.render_simulation_figures(Path(out), Path(figures_dir))
    sys.exit(EXIT_OK)


def _routes_as_trips(inst, report: SolveReport):
    from flexride.pricing import Trip
    from flexride.simulator import worst_onboard_gamma

    trips = []
    for route in report.routes:
        covered = 0
        for v in route.sequence:
            r = inst.request_of(v)
            if r is not None and inst.is_pickup(v):
                covered |= 1 << r
        trip = Trip(tuple(route.sequence), 0.0, covered, True, 0.0)
        gamma = worst_onboard_gamma(inst, trip, report.psi)
        trips.append(Trip(tuple(route.sequence), 0.0, covered, True, gamma))
    return trips


def _report_from_json(text: str) -> SolveReport:
    data = json.loads(text)
    return SolveReport(
        instance=data["instance"],
        mode=data["mode"],
        psi=data["psi"],
        flex_ratio=data["flex_ratio"],
        objective=math.inf if data["objective"] is None else data["objective"],
        optimal=data["optimal"],
        feasible=data["feasible"],
        gap=data["gap"],
        vehicles_used=data["vehicles_used"],
        routes=[Route(r["sequence"], r["times"], r["delays"]) for r in data["routes"]],
        unserved=data["unserved"],
        labels_explored=data["labels_explored"],
        cuts_added=data["cuts_added"],
        nodes_explored=data["nodes_explored"],
        wall_seconds=data["wall_seconds"],
        dominance=data["dominance"],
        seed=data["seed"],
    )


@main.command("oracle")
@click.option("--instance", "instance_path", required=True, type=click.Path())
@_with_common
@click.option("--out", type=click.Path(), default=None)
def cmd_oracle(instance_path, mode, flex_ratio, psi, capacity, seed, uncertainty, out):
    """Brute-force exact solve (tiny instances only)."""
    try:
        inst = _load_instance(instance_path)
        cfg = _solve_config(mode, flex_ratio, psi, capacity, seed)
        extra = parse_uncertainty_sidecar(Path(uncertainty).read_text(), inst) if uncertainty else None
        result = oracle_mod.solve_exact(inst, cfg, uncertain=extra)
    except oracle_mod.OracleSizeError as exc:
        _echo_err(str(exc))
        sys.exit(EXIT_ERROR)
    except (OSError, ParseError, ConfigError, ValueError) as exc:
        _echo_err(str(exc))
        sys.exit(EXIT_ERROR)

    payload = json.dumps(
        {
            "objective": None if math.isinf(result.objective) else round(result.objective, 9),
            "feasible": result.feasible,
            "routes": result.routes,
            "unserved": result.unserved,
        },
        sort_keys=True,
        indent=2,
    ) + "\n"
    if out:
        Path(out).write_text(payload)
    else:
        click.echo(payload, nl=False)
    sys.exit(EXIT_OK)


@main.command("report")
@click.option("--bench", "bench_csv", type=click.Path(exists=True), default=None)
@click.option("--simulation", "sim_csv", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path())
def cmd_report(bench_csv, sim_csv, out_dir):
    """Render figures from previously written CSV output."""
    if not bench_csv and not sim_csv:
        _echo_err("nothing to render: pass --bench and/or --simulation")
        sys.exit(EXIT_ERROR)
    written = []
    if bench_csv:
        written += report_mod.render_bench_figures(Path(bench_csv), Path(out_dir))
    if sim_csv:
        written += report_mod.render_simulation_figures(Path(sim_csv), Path(out_dir))
    for path in written:
        click.echo(str(path))
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
