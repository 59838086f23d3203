"""Barrier-synchronized parallel simulation loop.

Neurons are partitioned round-robin over virtual processes (one worker
thread each).  Time advances in communication intervals of the smallest
network delay; within an interval each worker delivers the spikes exchanged
at the end of the previous interval into the ring buffers of its own
neurons, then updates its neurons, then all workers synchronize and the
per-worker spike lists are merged into a canonically ordered global
register.  Dynamics are bit-identical for every worker count: connectivity
and external-input randomness are counter-based, and the register is sorted
by (step, neuron) before delivery so floating-point accumulation order does
not depend on the partition.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from time import perf_counter

import numpy as np
from numba import njit

from .connectivity import TargetTable
from .crng import U64
from .dynamics import counter_poisson
from .model import NetworkSpec, SimulationGrid, compute_propagators, validate
from .placement import PlacementPlan

__all__ = [
    "MAX_VP",
    "VirtualProcessPartition",
    "SpikeRecord",
    "PhaseTimers",
    "SimResult",
    "partition_neurons",
    "run_simulation",
    "merge_records",
    "write_spike_file",
    "read_spike_file",
]

MAX_VP = 4096


@dataclass(frozen=True)
class VirtualProcessPartition:
    n_neurons: int
    n_vp: int

    def vp_of(self, neuron: int) -> int:
        return neuron % self.n_vp

    def neurons_of(self, vp: int) -> np.ndarray:
        return np.arange(vp, self.n_neurons, self.n_vp, dtype=np.int64)


def partition_neurons(n_neurons: int, n_vp: int) -> VirtualProcessPartition:
    """Round-robin assignment: neuron id -> id mod n_vp."""
    if n_vp < 1:
        raise ValueError(f"n_vp must be >= 1, got {n_vp}")
    return VirtualProcessPartition(n_neurons=n_neurons, n_vp=n_vp)


@dataclass
class SpikeRecord:
    """Time-stamped spike events, globally sorted by (step, neuron)."""

    steps: np.ndarray     # int64 step indices (absolute, transient included)
    neurons: np.ndarray   # int64 global neuron ids
    grid: SimulationGrid
    populations: tuple[tuple[str, int, int], ...]  # (name, first_id, size)

    @property
    def n_events(self) -> int:
        return self.steps.size


@dataclass
class PhaseTimers:
    t_update: float       # wall-clock s, maximum over workers
    t_deliver: float
    t_communicate: float
    t_total: float        # wall-clock s of the measured simulation phase

    @property
    def t_other(self) -> float:
        return self.t_total - (self.t_update + self.t_deliver + self.t_communicate)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_other"] = self.t_other
        return d


@dataclass
class SimResult:
    record: SpikeRecord
    timers: PhaseTimers
    spikes_emitted: int
    synaptic_events_delivered: int
    pinned: bool


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _update_interval(own, pop_idx, v, i_ex, i_in, refr, rb_ex, rb_in, ring_len,
                     p_vv, p_ee, p_ii, p_ve, p_vi, p_const, p_dc,
                     v_th, v_reset, refr_steps, ext_lam, ext_w, ext_dc,
                     seed, start_step, n_steps, out_steps, out_neurons):
    n_sp = 0
    for t in range(n_steps):
        step = start_step + t
        slot = step % ring_len
        for idx in range(own.size):
            j = own[idx]
            p = pop_idx[j]
            refractory = refr[j] > 0
            if refractory:
                refr[j] -= 1
                new_v = v_reset[p]
            else:
                new_v = (p_vv[p] * v[j] + p_ve[p] * i_ex[j]
                         + p_vi[p] * i_in[j] + p_dc[p] * ext_dc[p]
                         + p_const[p])
            ext = 0.0
            if ext_lam[p] > 0.0:
                k = counter_poisson(seed, j, step, ext_lam[p])
                ext = ext_w[p] * k
            i_ex[j] = p_ee[p] * i_ex[j] + rb_ex[j, slot] + ext
            i_in[j] = p_ii[p] * i_in[j] + rb_in[j, slot]
            rb_ex[j, slot] = 0.0
            rb_in[j, slot] = 0.0
            if not refractory and new_v >= v_th[p]:
                new_v = v_reset[p]
                refr[j] = refr_steps[p]
                out_steps[n_sp] = step
                out_neurons[n_sp] = j
                n_sp += 1
            v[j] = new_v
    return n_sp


@njit(cache=True, nogil=True)
def _deliver(sp_steps, sp_neurons, offsets, targets, weights, delay_steps,
             is_ex, vp, n_vp, rb_ex, rb_in, ring_len, count_from_step):
    """Write one register's spikes into locally owned ring buffers.

    Returns the number of synaptic events landed on this worker's neurons,
    counting only spikes emitted at or after ``count_from_step``.
    """
    count = 0
    for i in range(sp_neurons.size):
        src = sp_neurons[i]
        s = sp_steps[i]
        measured = s >= count_from_step
        for e in range(offsets[src], offsets[src + 1]):
            tgt = targets[e]
            if tgt % n_vp == vp:
                slot = (s + delay_steps[e]) % ring_len
                if is_ex[e]:
                    rb_ex[tgt, slot] += weights[e]
                else:
                    rb_in[tgt, slot] += weights[e]
                if measured:
                    count += 1
    return count


# ---------------------------------------------------------------------------
# run orchestration


class _Shared:
    """State exchanged between workers across barriers."""

    def __init__(self, n_vp: int):
        empty = np.empty(0, dtype=np.int64)
        self.register = (empty, empty)        # merged (steps, neurons)
        self.slots: list = [None] * n_vp      # per-vp spike lists of the interval
        self.t_start = 0.0
        self.t_end = 0.0
        self.errors: list[BaseException] = []


def _intervals(total_steps: int, d: int, boundary: int) -> list[tuple[int, int]]:
    """Chunk [0, total_steps) into communication intervals of length <= d,
    with a forced cut at ``boundary`` (the transient/measured border)."""
    out = []
    start = 0
    while start < total_steps:
        end = min(start + d, total_steps)
        if start < boundary < end:
            end = boundary
        out.append((start, end - start))
        start = end
    return out


def _merge_sorted(parts: list[tuple[np.ndarray, np.ndarray]]):
    steps = np.concatenate([p[0] for p in parts])
    neurons = np.concatenate([p[1] for p in parts])
    order = np.lexsort((neurons, steps))
    return steps[order], neurons[order]


_warmed = False


def _warm_kernels() -> None:
    """Trigger numba compilation outside the timed region."""
    global _warmed
    if _warmed:
        return
    one_i64 = np.zeros(1, dtype=np.int64)
    one_f64 = np.zeros(1, dtype=np.float64)
    one_i32 = np.zeros(1, dtype=np.int32)
    rb = np.zeros((1, 2), dtype=np.float64)
    _update_interval(one_i64, one_i64, one_f64.copy(), one_f64.copy(),
                     one_f64.copy(), one_i32.copy(), rb.copy(), rb.copy(), 2,
                     one_f64, one_f64, one_f64, one_f64, one_f64, one_f64,
                     one_f64, np.ones(1), one_f64, one_i32, one_f64, one_f64,
                     one_f64, U64(0), 0, 1,
                     np.empty(1, dtype=np.int64), np.empty(1, dtype=np.int64))
    _deliver(one_i64[:0], one_i64[:0], np.zeros(2, dtype=np.int64), one_i64,
             one_f64, one_i32 + 1, np.zeros(1, dtype=np.bool_), 0, 1,
             rb.copy(), rb.copy(), 2, 0)
    _warmed = True


def run_simulation(spec: NetworkSpec, table: TargetTable, n_vp: int,
                   record_spikes: bool = True,
                   plan: PlacementPlan | None = None) -> SimResult:
    """Simulate the transient followed by the measured model window.

    Only the model window is timed and recorded.  Per-phase times are
    measured on every worker between barriers and reduced by maximum.
    """
    if not 1 <= n_vp <= MAX_VP:
        raise ValueError(f"n_vp must be in [1, {MAX_VP}], got {n_vp}")
    violations = validate(spec)
    if violations:
        raise ValueError("invalid network spec: " + "; ".join(violations))
    if table.n_neurons != spec.n_neurons:
        raise ValueError("table was not built from this spec")

    g = spec.grid
    n = spec.n_neurons
    d = g.min_delay_steps
    ring_len = g.min_delay_steps + g.max_delay_steps
    transient_steps = g.transient_steps
    total_steps = transient_steps + g.model_steps
    intervals = _intervals(total_steps, d, transient_steps)
    first_measured = next((k for k, (s, _) in enumerate(intervals)
                           if s >= transient_steps), len(intervals))

    # per-population parameter vectors, indexed by pop_idx[neuron]
    n_pops = len(spec.populations)
    p_vv = np.empty(n_pops)
    p_ee = np.empty(n_pops)
    p_ii = np.empty(n_pops)
    p_ve = np.empty(n_pops)
    p_vi = np.empty(n_pops)
    p_const = np.empty(n_pops)
    p_dc = np.empty(n_pops)
    v_th = np.empty(n_pops)
    v_reset = np.empty(n_pops)
    refr_steps = np.empty(n_pops, dtype=np.int32)
    ext_lam = np.empty(n_pops)
    ext_w = np.empty(n_pops)
    ext_dc = np.empty(n_pops)
    e_l = np.empty(n_pops)
    for i, pop in enumerate(spec.populations):
        prop = compute_propagators(pop.params, g.h)
        p_vv[i], p_ee[i], p_ii[i] = prop.p_vv, prop.p_ee, prop.p_ii
        p_ve[i], p_vi[i], p_const[i] = prop.p_ve, prop.p_vi, prop.p_const
        p_dc[i] = prop.p_dc(pop.params)
        v_th[i], v_reset[i] = pop.params.V_th, pop.params.V_reset
        refr_steps[i] = int(np.ceil(pop.params.t_ref / g.h - 1e-9))
        ext_lam[i] = pop.ext_rate * pop.ext_indegree * g.h / 1000.0
        ext_w[i] = pop.ext_weight
        ext_dc[i] = pop.ext_dc
        e_l[i] = pop.params.E_L
    pop_idx = np.repeat(np.arange(n_pops, dtype=np.int64),
                        [p.size for p in spec.populations])

    v = e_l[pop_idx] if n else np.empty(0)
    i_ex = np.zeros(n)
    i_in = np.zeros(n)
    refr = np.zeros(n, dtype=np.int32)
    rb_ex = np.zeros((n, ring_len))
    rb_in = np.zeros((n, ring_len))

    part = partition_neurons(n, n_vp)
    own_ids = [part.neurons_of(vp) for vp in range(n_vp)]
    seed = U64(spec.seed)

    pin_cores = None
    pinned = False
    if plan is not None:
        if len(plan.cores) < n_vp:
            raise ValueError(f"placement plan has {len(plan.cores)} cores "
                             f"for {n_vp} workers")
        cores = plan.cores[:n_vp]
        try:
            available = os.sched_getaffinity(0)
        except AttributeError:  # non-Linux platform
            available = set()
        if set(cores) <= available:
            pin_cores = cores
            pinned = True

    _warm_kernels()

    shared = _Shared(n_vp)
    barrier = threading.Barrier(n_vp)
    timers = [(0.0, 0.0, 0.0)] * n_vp
    delivered = [0] * n_vp
    emitted = [0] * n_vp
    rec_parts: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(n_vp)]

    def worker(vp: int) -> None:
        try:
            if pin_cores is not None:
                os.sched_setaffinity(0, {pin_cores[vp]})
            own = own_ids[vp]
            buf_len = max(1, own.size * d)
            out_steps = np.empty(buf_len, dtype=np.int64)
            out_neurons = np.empty(buf_len, dtype=np.int64)
            t_upd = t_del = t_com = 0.0
            started = False

            def start_measuring():
                nonlocal t_upd, t_del, t_com
                barrier.wait()
                t_upd = t_del = t_com = 0.0
                if vp == 0:
                    shared.t_start = perf_counter()
                barrier.wait()

            for k, (start, length) in enumerate(intervals):
                if not started and k == first_measured:
                    start_measuring()
                    started = True
                reg_steps, reg_neurons = shared.register

                t0 = perf_counter()
                if reg_steps.size:
                    delivered[vp] += _deliver(
                        reg_steps, reg_neurons, table.offsets, table.targets,
                        table.weights, table.delay_steps, table.is_ex,
                        vp, n_vp, rb_ex, rb_in, ring_len, transient_steps)
                t_del += perf_counter() - t0
                barrier.wait()

                t0 = perf_counter()
                n_sp = _update_interval(
                    own, pop_idx, v, i_ex, i_in, refr, rb_ex, rb_in, ring_len,
                    p_vv, p_ee, p_ii, p_ve, p_vi, p_const, p_dc,
                    v_th, v_reset, refr_steps, ext_lam, ext_w, ext_dc,
                    seed, start, length, out_steps, out_neurons)
                mine = (out_steps[:n_sp].copy(), out_neurons[:n_sp].copy())
                shared.slots[vp] = mine
                if start >= transient_steps:
                    emitted[vp] += n_sp
                    if record_spikes and n_sp:
                        rec_parts[vp].append(mine)
                t_upd += perf_counter() - t0
                barrier.wait()

                t0 = perf_counter()
                if vp == 0:
                    shared.register = _merge_sorted(shared.slots)
                barrier.wait()
                t_com += perf_counter() - t0

            if not started:
                start_measuring()

            # drain: deliver the final interval's spikes so every emitted
            # spike lands on its targets before counters are read
            reg_steps, reg_neurons = shared.register
            t0 = perf_counter()
            if reg_steps.size:
                delivered[vp] += _deliver(
                    reg_steps, reg_neurons, table.offsets, table.targets,
                    table.weights, table.delay_steps, table.is_ex,
                    vp, n_vp, rb_ex, rb_in, ring_len, transient_steps)
            t_del += perf_counter() - t0
            barrier.wait()
            if vp == 0:
                shared.t_end = perf_counter()
            timers[vp] = (t_upd, t_del, t_com)
        except BaseException as exc:  # surface worker failures to the caller
            shared.errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=worker, args=(vp,), name=f"vp{vp}")
               for vp in range(n_vp)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if shared.errors:
        raise shared.errors[0]

    populations = tuple((p.name, off, p.size) for p, off in
                        zip(spec.populations,
                            spec.population_offsets().values()))
    all_parts = [p for parts in rec_parts for p in parts]
    if all_parts:
        steps, neurons = _merge_sorted(all_parts)
    else:
        steps = np.empty(0, dtype=np.int64)
        neurons = np.empty(0, dtype=np.int64)
    record = SpikeRecord(steps=steps, neurons=neurons, grid=g,
                         populations=populations)

    per_phase = np.array(timers)
    phase_max = per_phase.max(axis=0) if n_vp else np.zeros(3)
    t_total = shared.t_end - shared.t_start
    result_timers = PhaseTimers(t_update=float(phase_max[0]),
                                t_deliver=float(phase_max[1]),
                                t_communicate=float(phase_max[2]),
                                t_total=t_total)

    return SimResult(
        record=record,
        timers=result_timers,
        spikes_emitted=int(sum(emitted)),
        synaptic_events_delivered=int(sum(delivered)),
        pinned=pinned,
    )


def merge_records(records: list[SpikeRecord]) -> SpikeRecord:
    """Merge per-worker records into one sorted by (step, neuron)."""
    if not records:
        raise ValueError("no records to merge")
    steps = np.concatenate([r.steps for r in records])
    neurons = np.concatenate([r.neurons for r in records])
    order = np.lexsort((neurons, steps))
    return SpikeRecord(steps=steps[order], neurons=neurons[order],
                       grid=records[0].grid, populations=records[0].populations)


# ---------------------------------------------------------------------------
# spike record I/O: text events plus a JSON sidecar with the interpretation


def write_spike_file(record: SpikeRecord, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w") as f:
        for step, neuron in zip(record.steps, record.neurons):
            f.write(f"{step}\t{neuron}\n")
    meta = {
        "schema_version": 1,
        "grid": asdict(record.grid),
        "populations": [{"name": name, "first_id": first, "size": size}
                        for name, first, size in record.populations],
        "n_events": record.n_events,
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as f:
        json.dump(meta, f, indent=2)


def read_spike_file(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a spike file back as (steps, neurons) arrays."""
    data = np.loadtxt(path, dtype=np.int64, delimiter="\t", ndmin=2)
    if data.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return data[:, 0], data[:, 1]
