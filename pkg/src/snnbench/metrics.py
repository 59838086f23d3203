"""Performance and activity metrics.

Realtime factor and phase fractions summarize a run's wall-clock profile;
power traces from a PDU log (CSV ``epoch_seconds,watts`` at 1 Hz) are
integrated into energy per synaptic event; spike records yield firing
rates, inter-spike-interval irregularity, and raster plot data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import PhaseTimers, SpikeRecord
from .model import NetworkSpec

__all__ = [
    "PowerTrace",
    "RtfReport",
    "EnergyReport",
    "RateStats",
    "rtf",
    "load_power_csv",
    "align_power",
    "integrate_energy",
    "energy_per_synaptic_event",
    "phase_fractions",
    "make_rtf_report",
    "population_rates",
    "cv_isi",
    "raster_export",
    "raster_to_csv",
]

_CADENCE_EPS = 1e-6  # tolerance on the 1 Hz sample spacing, s


@dataclass(frozen=True)
class PowerTrace:
    start_time: float       # wall-clock reference of the first sample, s
    samples: np.ndarray     # wattage readings at 1 Hz
    accuracy: float = 0.05  # fractional device accuracy

    @property
    def end_time(self) -> float:
        return self.start_time + self.samples.size


@dataclass(frozen=True)
class RtfReport:
    t_wall: float
    t_model: float
    rtf: float
    f_update: float
    f_deliver: float
    f_communicate: float
    f_other: float

    def to_dict(self) -> dict:
        return {"schema_version": 1, "t_wall_s": self.t_wall,
                "t_model_s": self.t_model, "rtf": self.rtf,
                "f_update": self.f_update, "f_deliver": self.f_deliver,
                "f_communicate": self.f_communicate, "f_other": self.f_other}


@dataclass(frozen=True)
class EnergyReport:
    e_total: float                # J, integrated without baseline subtraction
    e_baseline_subtracted: float  # J
    synaptic_events: int
    e_per_event: float            # J

    def to_dict(self) -> dict:
        return {"schema_version": 1, "e_total_j": self.e_total,
                "e_baseline_subtracted_j": self.e_baseline_subtracted,
                "synaptic_events": self.synaptic_events,
                "e_per_event_j": self.e_per_event}


@dataclass
class RateStats:
    rates: dict[str, float]              # spikes/s per population
    empty_populations: list[str] = field(default_factory=list)


def rtf(t_wall: float, t_model: float) -> float:
    """Realtime factor: wall-clock time over model time; < 1 is sub-realtime."""
    if t_model <= 0:
        raise ValueError(f"t_model must be > 0, got {t_model}")
    return t_wall / t_model


def phase_fractions(timers: PhaseTimers) -> tuple[float, float, float, float]:
    """(f_update, f_deliver, f_communicate, f_other); sums to 1."""
    if timers.t_total <= 0:
        raise ValueError(f"t_total must be > 0, got {timers.t_total}")
    fu = timers.t_update / timers.t_total
    fd = timers.t_deliver / timers.t_total
    fc = timers.t_communicate / timers.t_total
    return fu, fd, fc, 1.0 - (fu + fd + fc)


def make_rtf_report(timers: PhaseTimers, t_model_s: float) -> RtfReport:
    fu, fd, fc, fo = phase_fractions(timers)
    return RtfReport(t_wall=timers.t_total, t_model=t_model_s,
                     rtf=rtf(timers.t_total, t_model_s),
                     f_update=fu, f_deliver=fd, f_communicate=fc, f_other=fo)


# ---------------------------------------------------------------------------
# power / energy


def load_power_csv(source: str | Path) -> PowerTrace:
    """Parse a PDU log: one ``epoch_seconds,watts`` line per second."""
    if isinstance(source, Path) or "\n" not in str(source):
        text = Path(source).read_text()
    else:
        text = source
    times, watts = [], []
    for row in csv.reader(io.StringIO(text)):
        if not row or row[0].lstrip().startswith("#"):
            continue
        if row[0].strip().lower() in ("epoch_seconds", "time", "t"):
            continue  # header
        times.append(float(row[0]))
        watts.append(float(row[1]))
    if not times:
        raise ValueError("power log contains no samples")
    t = np.asarray(times)
    w = np.asarray(watts)
    if t.size > 1 and np.any(np.abs(np.diff(t) - 1.0) > _CADENCE_EPS):
        raise ValueError("power log cadence is not 1 sample/s")
    if np.any(w < 0):
        raise ValueError("power log contains negative wattage")
    return PowerTrace(start_time=float(t[0]), samples=w)


def align_power(trace: PowerTrace, shift: float = 1.0) -> PowerTrace:
    """Attribute readings ``shift`` seconds earlier (device reporting delay).

    The device timestamps each reading late, so aligning to wall-clock time
    moves the trace start back; sample values are unchanged.
    """
    if abs(shift - round(shift)) > _CADENCE_EPS:
        raise ValueError(f"shift must be an integer number of samples, got {shift}")
    return PowerTrace(start_time=trace.start_time - shift,
                      samples=trace.samples, accuracy=trace.accuracy)


def integrate_energy(trace: PowerTrace, window: tuple[float, float],
                     baseline: float = 0.0) -> float:
    """Rectangular-rule energy over ``window`` in J, baseline subtracted.

    Sample i covers [start + i, start + i + 1); partial overlap at the
    window edges is weighted proportionally.  Baseline-subtracted samples
    clamp at zero (the device accuracy can dip readings below an externally
    supplied baseline).
    """
    t0, t1 = window
    if baseline < 0:
        raise ValueError(f"baseline must be >= 0, got {baseline}")
    if t1 < t0:
        raise ValueError(f"window end {t1} before start {t0}")
    if t0 == t1:
        return 0.0
    if t0 < trace.start_time - _CADENCE_EPS or t1 > trace.end_time + _CADENCE_EPS:
        raise ValueError(f"window [{t0}, {t1}] outside trace extent "
                         f"[{trace.start_time}, {trace.end_time}]")
    total = 0.0
    for i, sample in enumerate(trace.samples):
        lo = trace.start_time + i
        overlap = min(t1, lo + 1.0) - max(t0, lo)
        if overlap > 0:
            total += max(sample - baseline, 0.0) * overlap
    return total


def energy_per_synaptic_event(energy: float, synaptic_events: int) -> float:
    """J per delivered synaptic event (spikes weighted by emitter fan-out)."""
    if synaptic_events <= 0:
        raise ValueError(f"synaptic_events must be > 0, got {synaptic_events}")
    return energy / synaptic_events


# ---------------------------------------------------------------------------
# activity statistics


def _window_seconds(record: SpikeRecord) -> float:
    return record.grid.t_model / 1000.0


def population_rates(record: SpikeRecord, spec: NetworkSpec) -> RateStats:
    """Mean firing rate per population over the record's measured window."""
    window_s = _window_seconds(record)
    if window_s <= 0:
        raise ValueError("record has an empty measurement window")
    rates: dict[str, float] = {}
    empty: list[str] = []
    offsets = spec.population_offsets()
    for pop in spec.populations:
        if pop.size == 0:
            empty.append(pop.name)
            continue
        first = offsets[pop.name]
        n_spikes = int(np.count_nonzero(
            (record.neurons >= first) & (record.neurons < first + pop.size)))
        rates[pop.name] = n_spikes / (pop.size * window_s)
    return RateStats(rates=rates, empty_populations=empty)


def cv_isi(record: SpikeRecord) -> dict[int, float]:
    """Coefficient of variation of inter-spike intervals per neuron.

    Uses the n-1 sample standard deviation; neurons with fewer than two
    intervals (three spikes) are omitted.
    """
    out: dict[int, float] = {}
    if record.n_events == 0:
        return out
    order = np.lexsort((record.steps, record.neurons))
    neurons = record.neurons[order]
    steps = record.steps[order]
    bounds = np.flatnonzero(np.diff(neurons)) + 1
    for chunk_n, chunk_s in zip(np.split(neurons, bounds), np.split(steps, bounds)):
        if chunk_s.size < 3:
            continue
        isi = np.diff(chunk_s) * record.grid.h
        out[int(chunk_n[0])] = float(np.std(isi, ddof=1) / np.mean(isi))
    return out


def raster_export(record: SpikeRecord, spec: NetworkSpec, fraction: float = 0.6,
                  window_ms: tuple[float, float] | None = None,
                  seed: int = 0) -> list[tuple[float, int, str]]:
    """Raster rows (time ms, row index, population label).

    Selects floor(fraction * size) neurons per population with a seeded RNG
    and restricts events to ``window_ms`` (default: the first 200 ms of the
    measured window).  Rows are grouped vertically by population in spec
    order and sorted by (time, row); identical seeds give identical output.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    g = record.grid
    t_lo = g.t_transient
    t_hi = g.t_transient + g.t_model
    if window_ms is None:
        window_ms = (t_lo, min(t_lo + 200.0, t_hi))
    w0, w1 = window_ms
    if w0 < t_lo - 1e-9 or w1 > t_hi + 1e-9:
        raise ValueError(f"window [{w0}, {w1}] ms outside record window "
                         f"[{t_lo}, {t_hi}] ms")
    rng = np.random.default_rng(seed)
    offsets = spec.population_offsets()
    row_of: dict[int, int] = {}
    pop_of: dict[int, str] = {}
    row_base = 0
    for pop in spec.populations:
        k = int(np.floor(fraction * pop.size))
        chosen = np.sort(rng.choice(pop.size, size=k, replace=False))
        for r, local in enumerate(chosen):
            gid = offsets[pop.name] + int(local)
            row_of[gid] = row_base + r
            pop_of[gid] = pop.name
        row_base += k

    rows: list[tuple[float, int, str]] = []
    times = record.steps * g.h
    in_window = (times >= w0) & (times < w1)
    for t, neuron in zip(times[in_window], record.neurons[in_window]):
        gid = int(neuron)
        if gid in row_of:
            rows.append((float(t), row_of[gid], pop_of[gid]))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def raster_to_csv(rows: list[tuple[float, int, str]]) -> str:
    out = ["t_ms,row,population"]
    out.extend(f"{t:.10g},{row},{pop}" for t, row, pop in rows)
    return "\n".join(out) + "\n"
