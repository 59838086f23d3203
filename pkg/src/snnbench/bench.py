"""Strong-scaling sweep driver.

Keeps the task fixed and varies the worker count and placement scheme.
Connectivity is built once per sweep and shared read-only (instantiation is
excluded from measurement); runs execute strictly one after another so
timings do not interfere.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .connectivity import build_connectivity
from .engine import run_simulation
from .metrics import phase_fractions, rtf
from .model import NetworkSpec, load_network_spec, validate
from .placement import (DEFAULT_TOPOLOGY, TopologyModel, distant_plan,
                        sequential_plan)

__all__ = [
    "BenchmarkConfig",
    "ScalingRow",
    "CSV_COLUMNS",
    "load_benchmark_config",
    "run_sweep",
    "emit_scaling_table",
    "parse_scaling_table",
]

CSV_COLUMNS = ["n_threads", "scheme", "rep", "t_wall_s", "rtf", "f_update",
               "f_deliver", "f_communicate", "f_other", "spikes",
               "syn_events", "pinned"]

_SCHEMES = {"sequential": sequential_plan, "distant": distant_plan}


@dataclass
class BenchmarkConfig:
    spec_path: str
    threads: list[int]
    scheme: str = "sequential"
    topology: TopologyModel = DEFAULT_TOPOLOGY
    t_model_s: float | None = None      # override of the spec's model time
    t_transient_s: float | None = None
    repetitions: int = 1
    output: str | None = None

    def check(self) -> None:
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; "
                             f"expected one of {sorted(_SCHEMES)}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.threads:
            raise ValueError("thread counts list is empty")
        for n in self.threads:
            if n < 1:
                raise ValueError(f"thread count must be >= 1, got {n}")
            if n > self.topology.total_cores:
                raise ValueError(f"thread count {n} exceeds topology's "
                                 f"{self.topology.total_cores} cores")


@dataclass
class ScalingRow:
    n_threads: int
    scheme: str
    rep: int
    t_wall_s: float
    rtf: float
    f_update: float
    f_deliver: float
    f_communicate: float
    f_other: float
    spikes: int
    syn_events: int
    pinned: bool
    error: str = ""  # nonempty when the run failed; not serialized to CSV


def load_benchmark_config(path: str | Path) -> BenchmarkConfig:
    doc = json.loads(Path(path).read_text())
    known = {"spec", "threads", "scheme", "topology", "t_model_s",
             "t_transient_s", "repetitions", "output"}
    unknown = doc.keys() - known
    if unknown:
        raise ValueError(f"benchmark config: unknown key(s) {sorted(unknown)}")
    topo = DEFAULT_TOPOLOGY
    if "topology" in doc:
        topo = TopologyModel(
            sockets=doc["topology"]["sockets"],
            chiplets_per_socket=doc["topology"]["chiplets"],
            ccx_per_chiplet=doc["topology"]["ccx"],
            cores_per_ccx=doc["topology"]["cores_per_ccx"],
        )
    return BenchmarkConfig(
        spec_path=doc["spec"],
        threads=list(doc["threads"]),
        scheme=doc.get("scheme", "sequential"),
        topology=topo,
        t_model_s=doc.get("t_model_s"),
        t_transient_s=doc.get("t_transient_s"),
        repetitions=doc.get("repetitions", 1),
        output=doc.get("output"),
    )


def _apply_time_overrides(spec: NetworkSpec, cfg: BenchmarkConfig) -> NetworkSpec:
    g = spec.grid
    changes = {}
    if cfg.t_model_s is not None:
        changes["t_model"] = cfg.t_model_s * 1000.0
    if cfg.t_transient_s is not None:
        changes["t_transient"] = cfg.t_transient_s * 1000.0
    if not changes:
        return spec
    from dataclasses import replace
    return replace(spec, grid=replace(g, **changes))


def run_sweep(cfg: BenchmarkConfig) -> list[ScalingRow]:
    """Run every (thread count, repetition) serially; failures are recorded
    in the row and the sweep continues."""
    cfg.check()
    spec = load_network_spec(Path(cfg.spec_path).read_text())
    spec = _apply_time_overrides(spec, cfg)
    violations = validate(spec)
    if violations:
        raise ValueError("invalid network spec: " + "; ".join(violations))

    # built once; realized entries are identical for every worker count
    table = build_connectivity(spec, n_vp=cfg.threads[0])
    make_plan = _SCHEMES[cfg.scheme]
    t_model_s = spec.grid.t_model / 1000.0

    rows: list[ScalingRow] = []
    for n in cfg.threads:
        plan = make_plan(cfg.topology, n)
        for rep in range(cfg.repetitions):
            try:
                result = run_simulation(spec, table, n_vp=n, plan=plan)
                fu, fd, fc, fo = phase_fractions(result.timers)
                rows.append(ScalingRow(
                    n_threads=n, scheme=cfg.scheme, rep=rep,
                    t_wall_s=result.timers.t_total,
                    rtf=rtf(result.timers.t_total, t_model_s),
                    f_update=fu, f_deliver=fd, f_communicate=fc, f_other=fo,
                    spikes=result.spikes_emitted,
                    syn_events=result.synaptic_events_delivered,
                    pinned=result.pinned,
                ))
            except Exception as exc:
                rows.append(ScalingRow(
                    n_threads=n, scheme=cfg.scheme, rep=rep,
                    t_wall_s=0.0, rtf=0.0, f_update=0.0, f_deliver=0.0,
                    f_communicate=0.0, f_other=0.0, spikes=0, syn_events=0,
                    pinned=False, error=str(exc)))
    return rows


def emit_scaling_table(rows: list[ScalingRow]) -> str:
    """CSV document with one line per row, fixed column set."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r.n_threads, r.scheme, r.rep,
            repr(r.t_wall_s), repr(r.rtf),
            repr(r.f_update), repr(r.f_deliver), repr(r.f_communicate),
            repr(r.f_other), r.spikes, r.syn_events,
            "true" if r.pinned else "false",
        ])
    return buf.getvalue()


def parse_scaling_table(text: str) -> list[ScalingRow]:
    """Inverse of :func:`emit_scaling_table`."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected scaling table header: {header}")
    rows = []
    for rec in reader:
        rows.append(ScalingRow(
            n_threads=int(rec[0]), scheme=rec[1], rep=int(rec[2]),
            t_wall_s=float(rec[3]), rtf=float(rec[4]), f_update=float(rec[5]),
            f_deliver=float(rec[6]), f_communicate=float(rec[7]),
            f_other=float(rec[8]), spikes=int(rec[9]), syn_events=int(rec[10]),
            pinned=rec[11] == "true"))
    return rows
