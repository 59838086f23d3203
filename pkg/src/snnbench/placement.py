"""Hardware topology model and thread-placement plans.

Physical core ids follow the kernel/lstopo numbering: cores are counted
consecutively within a chiplet, chiplets consecutively within a socket, so
core k of chiplet n has id n * cores_per_chiplet + k and socket 0's cores
all precede socket 1's.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

__all__ = [
    "TopologyModel",
    "PlacementPlan",
    "DEFAULT_TOPOLOGY",
    "core_id",
    "sequential_plan",
    "distant_plan",
    "first_l3_sharing_index",
    "format_places",
]


@dataclass(frozen=True)
class TopologyModel:
    sockets: int
    chiplets_per_socket: int
    ccx_per_chiplet: int
    cores_per_ccx: int

    def __post_init__(self) -> None:
        for name in ("sockets", "chiplets_per_socket", "ccx_per_chiplet",
                     "cores_per_ccx"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def cores_per_chiplet(self) -> int:
        return self.ccx_per_chiplet * self.cores_per_ccx

    @property
    def n_chiplets(self) -> int:
        return self.sockets * self.chiplets_per_socket

    @property
    def total_cores(self) -> int:
        return self.n_chiplets * self.cores_per_chiplet

    def ccx_of(self, core: int) -> int:
        return core // self.cores_per_ccx


# dual-socket 64-core-per-socket node: 8 chiplets of 2 CCX x 4 cores each
DEFAULT_TOPOLOGY = TopologyModel(sockets=2, chiplets_per_socket=8,
                                 ccx_per_chiplet=2, cores_per_ccx=4)


@dataclass(frozen=True)
class PlacementPlan:
    cores: tuple[int, ...]
    scheme: Literal["sequential", "distant"]


def core_id(topo: TopologyModel, chiplet: int, core: int) -> int:
    """Physical id of core ``core`` on chiplet ``chiplet``."""
    if not 0 <= chiplet < topo.n_chiplets:
        raise ValueError(f"chiplet {chiplet} out of range [0, {topo.n_chiplets})")
    if not 0 <= core < topo.cores_per_chiplet:
        raise ValueError(f"core {core} out of range [0, {topo.cores_per_chiplet})")
    return chiplet * topo.cores_per_chiplet + core


def _check_n_threads(topo: TopologyModel, n_threads: int) -> None:
    if n_threads < 0:
        raise ValueError(f"n_threads must be >= 0, got {n_threads}")
    if n_threads > topo.total_cores:
        raise ValueError(f"n_threads {n_threads} exceeds total cores "
                         f"{topo.total_cores}")


def sequential_plan(topo: TopologyModel, n_threads: int) -> PlacementPlan:
    """Threads on physically consecutive cores, socket 0 filled first."""
    _check_n_threads(topo, n_threads)
    return PlacementPlan(cores=tuple(range(n_threads)), scheme="sequential")


def _bit_reversal(n: int) -> list[int]:
    """Bit-reversal permutation of 0..n-1 for n a power of two."""
    bits = n.bit_length() - 1
    if 1 << bits != n:
        raise ValueError(f"cores per chiplet must be a power of two, got {n}")
    return [int(format(i, f"0{bits}b")[::-1], 2) if bits else 0 for i in range(n)]


def distant_plan(topo: TopologyModel, n_threads: int) -> PlacementPlan:
    """Threads spread round-robin over chiplets, maximizing L3 distance.

    Filling proceeds in rounds: round r uses core index order[r] on chiplets
    0, 1, ..., n_chiplets - 1, where the round order is the bit-reversal
    permutation of the per-chiplet core indices ([0, 4, 2, 6, 1, 5, 3, 7]
    for 8-core chiplets).  Consecutive rounds therefore land on distinct
    CCXs as long as possible.
    """
    _check_n_threads(topo, n_threads)
    order = _bit_reversal(topo.cores_per_chiplet)
    cores = []
    for t in range(n_threads):
        chiplet = t % topo.n_chiplets
        rnd = t // topo.n_chiplets
        cores.append(core_id(topo, chiplet, order[rnd]))
    return PlacementPlan(cores=tuple(cores), scheme="distant")


def first_l3_sharing_index(plan: PlacementPlan,
                           topo: TopologyModel) -> Optional[int]:
    """Smallest plan position whose core shares a CCX (L3) with an earlier
    one, or None if no two planned cores share."""
    seen: set[int] = set()
    for i, core in enumerate(plan.cores):
        ccx = topo.ccx_of(core)
        if ccx in seen:
            return i
        seen.add(ccx)
    return None


def format_places(plan: PlacementPlan) -> str:
    """OMP_PLACES-style pinning string: comma-joined {id} tokens."""
    return ",".join(f"{{{c}}}" for c in plan.cores)
