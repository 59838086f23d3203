"""Reproducible construction of the synapse table.

Every connection rule is realized with exactly ``total_synapses`` entries by
drawing (source, target, weight, delay) tuples from a counter-based Philox
stream keyed by (network seed, rule index).  The realized table is therefore
identical for every virtual-process count and thread layout; the requested
``n_vp`` only chooses the within-source entry order (grouped by target
ownership) so each worker's deliver pass touches contiguous runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import NetworkSpec

__all__ = [
    "TargetTable",
    "DegreeSummary",
    "build_connectivity",
    "degrees",
    "dump_table",
    "load_table",
]

_MAGIC = b"SNNTBL01"
_FORMAT_VERSION = 1


@dataclass
class TargetTable:
    """Adjacency grouped by source neuron (CSR-style).

    Entries for source ``s`` live in slice ``offsets[s]:offsets[s+1]`` of
    the flat arrays.  ``is_ex`` selects the synaptic channel of the target.
    """

    n_neurons: int
    offsets: np.ndarray      # int64, length n_neurons + 1
    targets: np.ndarray      # int64
    weights: np.ndarray      # float64, pA (negative for inhibitory entries)
    delay_steps: np.ndarray  # int32, >= 1
    is_ex: np.ndarray        # bool

    @property
    def n_entries(self) -> int:
        return self.targets.size

    def out_degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def canonical_order(self) -> np.ndarray:
        """Permutation to the layout-independent (source, target, ...) order."""
        sources = np.repeat(np.arange(self.n_neurons, dtype=np.int64),
                            self.out_degree())
        return np.lexsort((self.delay_steps, self.weights, self.targets, sources))


@dataclass
class DegreeSummary:
    in_degree: np.ndarray   # int64 per neuron
    out_degree: np.ndarray  # int64 per neuron


def _rule_stream(seed: int, rule_index: int) -> np.random.Generator:
    # 128-bit Philox key: network seed in the high word, rule in the low one
    return np.random.Generator(np.random.Philox(key=(seed << 64) | rule_index))


def build_connectivity(spec: NetworkSpec, n_vp: int = 1) -> TargetTable:
    """Realize all connection rules; exact totals, multapses/autapses allowed."""
    if n_vp < 1:
        raise ValueError(f"n_vp must be >= 1, got {n_vp}")
    n = spec.n_neurons
    if n >= np.iinfo(np.int64).max // 2:
        raise OverflowError("neuron count overflows the id space")
    offsets_by_name = spec.population_offsets()
    sizes_by_name = {p.name: p.size for p in spec.populations}
    g = spec.grid
    lo, hi = g.min_delay_steps, g.max_delay_steps

    src_parts, tgt_parts, w_parts, d_parts, ex_parts = [], [], [], [], []
    for i, rule in enumerate(spec.connections):
        m = rule.total_synapses
        if m == 0:
            continue
        rng = _rule_stream(spec.seed, i)
        n_src = sizes_by_name[rule.source]
        n_tgt = sizes_by_name[rule.target]
        if n_src == 0 or n_tgt == 0:
            raise ValueError(f"rule {i} ({rule.source}->{rule.target}) requests "
                             f"{m} synapses on an empty population")
        src = rng.integers(0, n_src, m, dtype=np.int64) + offsets_by_name[rule.source]
        tgt = rng.integers(0, n_tgt, m, dtype=np.int64) + offsets_by_name[rule.target]
        w = rng.normal(rule.weight_mean, rule.weight_sd, m)
        # magnitudes whose sign contradicts the rule are redrawn
        while True:
            bad = np.flatnonzero(w < 0)
            if bad.size == 0:
                break
            w[bad] = rng.normal(rule.weight_mean, rule.weight_sd, bad.size)
        d = np.rint(rng.normal(rule.delay_mean, rule.delay_sd, m) / g.h)
        d = np.clip(d, lo, hi).astype(np.int32)
        src_parts.append(src)
        tgt_parts.append(tgt)
        w_parts.append(rule.sign * w)
        d_parts.append(d)
        ex_parts.append(np.full(m, rule.sign > 0, dtype=np.bool_))

    if src_parts:
        sources = np.concatenate(src_parts)
        targets = np.concatenate(tgt_parts)
        weights = np.concatenate(w_parts)
        delay_steps = np.concatenate(d_parts)
        is_ex = np.concatenate(ex_parts)
    else:
        sources = np.empty(0, dtype=np.int64)
        targets = np.empty(0, dtype=np.int64)
        weights = np.empty(0, dtype=np.float64)
        delay_steps = np.empty(0, dtype=np.int32)
        is_ex = np.empty(0, dtype=np.bool_)

    # group by source; within a source, order by (owning vp, target id) so a
    # worker's deliver pass walks contiguous runs of its own targets
    order = np.lexsort((targets, targets % n_vp, sources))
    counts = np.bincount(sources, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return TargetTable(
        n_neurons=n,
        offsets=offsets,
        targets=targets[order],
        weights=weights[order],
        delay_steps=delay_steps[order],
        is_ex=is_ex[order],
    )


def degrees(table: TargetTable) -> DegreeSummary:
    """Exact per-neuron in/out degrees; both sum to the entry count."""
    return DegreeSummary(
        in_degree=np.bincount(table.targets, minlength=table.n_neurons)
                    .astype(np.int64),
        out_degree=table.out_degree().astype(np.int64),
    )


# ---------------------------------------------------------------------------
# binary dump/load (documented in docs/table-format.md)


def dump_table(table: TargetTable, path: str | Path) -> None:
    """Write the table in the versioned little-endian binary format."""
    header = _MAGIC + struct.pack("<IQQ", _FORMAT_VERSION,
                                  table.n_neurons, table.n_entries)
    with open(path, "wb") as f:
        f.write(header)
        f.write(table.offsets.astype("<i8").tobytes())
        f.write(table.targets.astype("<i8").tobytes())
        f.write(table.weights.astype("<f8").tobytes())
        f.write(table.delay_steps.astype("<i4").tobytes())
        f.write(table.is_ex.astype("<u1").tobytes())


def load_table(path: str | Path) -> TargetTable:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a synapse table file")
        version, n_neurons, n_entries = struct.unpack("<IQQ", f.read(20))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported table format version {version}")

        def read(dtype, count):
            arr = np.fromfile(f, dtype=dtype, count=count)
            if arr.size != count:
                raise ValueError(f"{path}: truncated table file")
            return arr

        offsets = read("<i8", n_neurons + 1).astype(np.int64)
        targets = read("<i8", n_entries).astype(np.int64)
        weights = read("<f8", n_entries).astype(np.float64)
        delay_steps = read("<i4", n_entries).astype(np.int32)
        is_ex = read("<u1", n_entries).astype(np.bool_)
    return TargetTable(n_neurons=int(n_neurons), offsets=offsets, targets=targets,
                       weights=weights, delay_steps=delay_steps, is_ex=is_ex)
