"""Command line entry point.

Exit codes: 0 success, 1 domain error (invalid spec, bad window, ...),
2 usage error (unknown flags, missing arguments).  All randomized behavior
takes an explicit seed; all reports are written atomically and carry a
``schema_version`` field.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from pathlib import Path

import click

from . import bench as bench_mod
from . import metrics as metrics_mod
from .connectivity import build_connectivity
from .engine import SpikeRecord, read_spike_file, run_simulation, write_spike_file
from .model import load_network_spec, validate
from .placement import (TopologyModel, distant_plan, first_l3_sharing_index,
                        format_places, sequential_plan)

_SCHEMES = {"sequential": sequential_plan, "distant": distant_plan}


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_spec(path: str, seed_override: int | None = None):
    try:
        spec = load_network_spec(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    if seed_override is not None:
        from dataclasses import replace
        spec = replace(spec, seed=seed_override)
    violations = validate(spec)
    if violations:
        raise click.ClickException("invalid network spec:\n  "
                                   + "\n  ".join(violations))
    return spec


@click.group()
def main() -> None:
    """Spiking-network simulation and strong-scaling benchmark harness."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="Network spec document (JSON).")
@click.option("--n-vp", default=1, show_default=True,
              help="Number of virtual processes (worker threads).")
@click.option("--seed", default=None, type=int, help="Override the spec's seed.")
@click.option("--out-dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--record/--no-record", default=True, show_default=True,
              help="Record spike events.")
def simulate(spec_path: str, n_vp: int, seed: int | None, out_dir: str,
             record: bool) -> None:
    """Run one simulation; writes spikes, timers, and an RTF report."""
    spec = _load_spec(spec_path, seed)
    out = Path(out_dir)
    try:
        table = build_connectivity(spec, n_vp=n_vp)
        result = run_simulation(spec, table, n_vp=n_vp, record_spikes=record)
        report = metrics_mod.make_rtf_report(result.timers,
                                             spec.grid.t_model / 1000.0)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc

    out.mkdir(parents=True, exist_ok=True)
    if record:
        write_spike_file(result.record, out / "spikes.tsv")
    timers = result.timers.to_dict()
    timers.update({"schema_version": 1, "n_vp": n_vp,
                   "spikes": result.spikes_emitted,
                   "syn_events": result.synaptic_events_delivered,
                   "pinned": result.pinned})
    _atomic_write(out / "timers.json", json.dumps(timers, indent=2) + "\n")
    _atomic_write(out / "rtf.json", json.dumps(report.to_dict(), indent=2) + "\n")
    click.echo(f"rtf {report.rtf:.6g}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Benchmark config (JSON).")
@click.option("--threads", default=None,
              help="Override thread counts, e.g. '1,2,4'.")
@click.option("--scheme", default=None,
              type=click.Choice(sorted(_SCHEMES)), help="Override scheme.")
@click.option("--model-time", default=None, type=float,
              help="Override model time in seconds.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Override the output CSV path.")
def sweep(config_path: str, threads: str | None, scheme: str | None,
          model_time: float | None, out_path: str | None) -> None:
    """Run a strong-scaling sweep and write the scaling table CSV."""
    try:
        cfg = bench_mod.load_benchmark_config(config_path)
        if threads is not None:
            cfg.threads = [int(tok) for tok in threads.split(",") if tok]
        if scheme is not None:
            cfg.scheme = scheme
        if model_time is not None:
            cfg.t_model_s = model_time
        if out_path is not None:
            cfg.output = out_path
        rows = bench_mod.run_sweep(cfg)
    except (OSError, ValueError, KeyError) as exc:
        raise click.ClickException(str(exc)) from exc
    table = bench_mod.emit_scaling_table(rows)
    if cfg.output:
        _atomic_write(Path(cfg.output), table)
        click.echo(f"wrote {len(rows)} rows to {cfg.output}")
    else:
        click.echo(table, nl=False)
    failures = [r for r in rows if r.error]
    for r in failures:
        click.echo(f"run n_threads={r.n_threads} rep={r.rep} failed: {r.error}",
                   err=True)


@main.command()
@click.option("--scheme", required=True, type=click.Choice(sorted(_SCHEMES)))
@click.option("--n-threads", required=True, type=int)
@click.option("--sockets", default=2, show_default=True)
@click.option("--chiplets", default=8, show_default=True,
              help="Chiplets per socket.")
@click.option("--ccx", default=2, show_default=True, help="CCX per chiplet.")
@click.option("--cores-per-ccx", default=4, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Emit a JSON array.")
def placement(scheme: str, n_threads: int, sockets: int, chiplets: int,
              ccx: int, cores_per_ccx: int, as_json: bool) -> None:
    """Print a thread-placement plan as a pinning string or JSON array."""
    try:
        topo = TopologyModel(sockets=sockets, chiplets_per_socket=chiplets,
                             ccx_per_chiplet=ccx, cores_per_ccx=cores_per_ccx)
        plan = _SCHEMES[scheme](topo, n_threads)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    if as_json:
        click.echo(json.dumps({
            "schema_version": 1,
            "scheme": plan.scheme,
            "cores": list(plan.cores),
            "first_l3_sharing_index": first_l3_sharing_index(plan, topo),
        }, indent=2))
    else:
        click.echo(format_places(plan))


@main.command()
@click.option("--power", "power_path", required=True,
              type=click.Path(exists=True), help="Power log CSV (1 Hz).")
@click.option("--t0", default=None, type=float,
              help="Window start (epoch s); default: trace start.")
@click.option("--t1", default=None, type=float,
              help="Window end (epoch s); default: trace end.")
@click.option("--baseline", default=0.0, show_default=True,
              help="Baseline power to subtract, W.")
@click.option("--events", default=None, type=int,
              help="Synaptic event count for the energy quotient.")
@click.option("--run-dir", default=None, type=click.Path(exists=True),
              help="Read the event count from DIR/timers.json instead.")
@click.option("--shift", default=1.0, show_default=True,
              help="Alignment shift of the power readings, s.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Write the report JSON here as well.")
def energy(power_path: str, t0: float | None, t1: float | None, baseline: float,
           events: int | None, run_dir: str | None, shift: float,
           out_path: str | None) -> None:
    """Integrate a power log into an energy-per-synaptic-event report."""
    if (events is None) == (run_dir is None):
        raise click.UsageError("provide exactly one of --events / --run-dir")
    if run_dir is not None:
        timers = json.loads((Path(run_dir) / "timers.json").read_text())
        events = timers["syn_events"]
    try:
        trace = metrics_mod.align_power(
            metrics_mod.load_power_csv(Path(power_path)), shift)
        window = (trace.start_time if t0 is None else t0,
                  trace.end_time if t1 is None else t1)
        e_total = metrics_mod.integrate_energy(trace, window, baseline=0.0)
        e_net = metrics_mod.integrate_energy(trace, window, baseline=baseline)
        report = metrics_mod.EnergyReport(
            e_total=e_total, e_baseline_subtracted=e_net,
            synaptic_events=events,
            e_per_event=metrics_mod.energy_per_synaptic_event(e_net, events))
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    text = json.dumps(report.to_dict(), indent=2)
    if out_path:
        _atomic_write(Path(out_path), text + "\n")
    click.echo(text)


@main.command()
@click.option("--spikes", "spikes_path", required=True,
              type=click.Path(exists=True), help="Spike file (step<TAB>neuron).")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--fraction", default=0.6, show_default=True,
              help="Raster neuron fraction per population.")
@click.option("--window-ms", default=200.0, show_default=True,
              help="Raster window length from the start of the measured window.")
@click.option("--seed", default=0, show_default=True,
              help="Seed for the raster neuron selection.")
@click.option("--out-dir", required=True, type=click.Path())
def stats(spikes_path: str, spec_path: str, fraction: float, window_ms: float,
          seed: int, out_dir: str) -> None:
    """Firing rates, ISI irregularity, and raster plot data from a record."""
    spec = _load_spec(spec_path)
    steps, neurons = read_spike_file(spikes_path)
    record = SpikeRecord(steps=steps, neurons=neurons, grid=spec.grid,
                         populations=tuple(
                             (p.name, off, p.size) for p, off in
                             zip(spec.populations,
                                 spec.population_offsets().values())))
    try:
        rates = metrics_mod.population_rates(record, spec)
        cvs = metrics_mod.cv_isi(record)
        w0 = spec.grid.t_transient
        w1 = min(w0 + window_ms, w0 + spec.grid.t_model)
        rows = metrics_mod.raster_export(record, spec, fraction=fraction,
                                         window_ms=(w0, w1), seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    out = Path(out_dir)
    stats_doc = {
        "schema_version": 1,
        "rates_spikes_per_s": rates.rates,
        "empty_populations": rates.empty_populations,
        "cv_isi": {str(k): v for k, v in sorted(cvs.items())},
    }
    _atomic_write(out / "stats.json", json.dumps(stats_doc, indent=2) + "\n")
    _atomic_write(out / "raster.csv", metrics_mod.raster_to_csv(rows))
    click.echo(f"wrote stats.json and raster.csv to {out}")


if __name__ == "__main__":
    sys.exit(main())
