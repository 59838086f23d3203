"""Network description: populations, connection rules, grid, propagators.

A network is described declaratively by a JSON document (see
``docs/network-spec.md`` and ``models/microcircuit.json``).  All times are in
ms, rates in spikes/s, currents/weights in pA, potentials in mV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

__all__ = [
    "SpecError",
    "SimulationGrid",
    "NeuronParams",
    "PopulationSpec",
    "ConnectionRule",
    "NetworkSpec",
    "Propagators",
    "load_network_spec",
    "serialize_network_spec",
    "validate",
    "compute_propagators",
]

# tolerance for "integer multiple of h" checks on times given in ms
_GRID_EPS = 1e-9


class SpecError(ValueError):
    """Raised when a network document cannot be parsed or fails the schema."""


def _is_multiple(value: float, h: float) -> bool:
    n = round(value / h)
    return abs(value - n * h) <= _GRID_EPS * max(1.0, abs(value))


@dataclass(frozen=True)
class SimulationGrid:
    h: float                # time step, ms
    t_model: float          # measured model time, ms
    t_transient: float      # discarded initial model time, ms
    min_delay: float        # smallest network delay, ms
    max_delay: float        # largest network delay, ms

    @property
    def min_delay_steps(self) -> int:
        return round(self.min_delay / self.h)

    @property
    def max_delay_steps(self) -> int:
        return round(self.max_delay / self.h)

    @property
    def transient_steps(self) -> int:
        return round(self.t_transient / self.h)

    @property
    def model_steps(self) -> int:
        return round(self.t_model / self.h)


@dataclass(frozen=True)
class NeuronParams:
    tau_m: float       # membrane time constant, ms
    C_m: float         # membrane capacitance, pF
    E_L: float         # resting potential, mV
    V_th: float        # spike threshold, mV
    V_reset: float     # reset potential, mV
    t_ref: float       # absolute refractory period, ms
    tau_syn_ex: float  # excitatory synaptic current time constant, ms
    tau_syn_in: float  # inhibitory synaptic current time constant, ms


@dataclass(frozen=True)
class PopulationSpec:
    name: str
    size: int
    params: NeuronParams
    ext_rate: float = 0.0      # external Poisson rate per source, spikes/s
    ext_indegree: int = 0      # independent external sources per neuron
    ext_weight: float = 0.0    # external synaptic weight, pA
    ext_dc: float = 0.0        # constant current drive, pA


@dataclass(frozen=True)
class ConnectionRule:
    source: str
    target: str
    total_synapses: int
    weight_mean: float   # magnitude, pA; sign applied via `sign`
    weight_sd: float
    delay_mean: float    # ms
    delay_sd: float
    sign: int            # +1 excitatory, -1 inhibitory


@dataclass(frozen=True)
class NetworkSpec:
    grid: SimulationGrid
    populations: tuple[PopulationSpec, ...]
    connections: tuple[ConnectionRule, ...]
    seed: int

    @property
    def n_neurons(self) -> int:
        return sum(p.size for p in self.populations)

    def population_offsets(self) -> dict[str, int]:
        """Global id of the first neuron of each population."""
        offsets = {}
        start = 0
        for p in self.populations:
            offsets[p.name] = start
            start += p.size
        return offsets


@dataclass(frozen=True)
class Propagators:
    """One-step factors of the exact subthreshold solution.

    The update v' = p_vv*v + p_ve*i_ex + p_vi*i_in + p_const, followed by
    i_x' = p_xx*i_x + input, reproduces the closed-form solution of the
    linear membrane/synapse system at grid points.
    """

    p_vv: float     # membrane decay per step
    p_ee: float     # excitatory current decay per step
    p_ii: float     # inhibitory current decay per step
    p_ve: float     # excitatory current -> voltage coupling, mV/pA
    p_vi: float     # inhibitory current -> voltage coupling, mV/pA
    p_const: float  # resting potential contribution, mV

    def p_dc(self, params: NeuronParams) -> float:
        """Coupling for a current held constant through the step, mV/pA."""
        return params.tau_m / params.C_m * (1.0 - self.p_vv)


# ---------------------------------------------------------------------------
# document parsing


_GRID_KEYS = {"h", "t_model", "t_transient", "min_delay", "max_delay"}
_PARAM_KEYS = {"tau_m", "C_m", "E_L", "V_th", "V_reset", "t_ref",
               "tau_syn_ex", "tau_syn_in"}
_POP_REQUIRED = {"name", "size", "params"}
_POP_OPTIONAL = {"ext_rate", "ext_indegree", "ext_weight", "ext_dc"}
_CONN_KEYS = {"source", "target", "total_synapses", "weight_mean",
              "weight_sd", "delay_mean", "delay_sd", "sign"}
_TOP_KEYS = {"grid", "populations", "connections", "seed"}


def _require_keys(obj: dict, required: set, optional: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise SpecError(f"{where}: missing key(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise SpecError(f"{where}: unknown key(s) {sorted(unknown)}")


def _number(obj: dict, key: str, where: str) -> float:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SpecError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _integer(obj: dict, key: str, where: str) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def load_network_spec(document: str) -> NetworkSpec:
    """Parse a network document; unknown keys are rejected.

    Raises :class:`SpecError` with field (and for syntax errors, line)
    diagnostics.  Structural problems are errors here; value-range problems
    are reported by :func:`validate`.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SpecError(f"parse error at line {exc.lineno}, column {exc.colno}: "
                        f"{exc.msg}") from exc

    _require_keys(doc, _TOP_KEYS, set(), "document")
    _require_keys(doc["grid"], _GRID_KEYS, set(), "grid")
    grid = SimulationGrid(**{k: _number(doc["grid"], k, "grid") for k in _GRID_KEYS})

    if not isinstance(doc["populations"], list):
        raise SpecError("populations: expected a list")
    populations = []
    for i, pop in enumerate(doc["populations"]):
        where = f"populations[{i}]"
        _require_keys(pop, _POP_REQUIRED, _POP_OPTIONAL, where)
        _require_keys(pop["params"], _PARAM_KEYS, set(), f"{where}.params")
        params = NeuronParams(**{k: _number(pop["params"], k, f"{where}.params")
                                 for k in _PARAM_KEYS})
        if not isinstance(pop["name"], str):
            raise SpecError(f"{where}.name: expected a string")
        populations.append(PopulationSpec(
            name=pop["name"],
            size=_integer(pop, "size", where),
            params=params,
            ext_rate=_number(pop, "ext_rate", where) if "ext_rate" in pop else 0.0,
            ext_indegree=_integer(pop, "ext_indegree", where) if "ext_indegree" in pop else 0,
            ext_weight=_number(pop, "ext_weight", where) if "ext_weight" in pop else 0.0,
            ext_dc=_number(pop, "ext_dc", where) if "ext_dc" in pop else 0.0,
        ))

    names = {p.name for p in populations}
    if not isinstance(doc["connections"], list):
        raise SpecError("connections: expected a list")
    connections = []
    for i, conn in enumerate(doc["connections"]):
        where = f"connections[{i}]"
        _require_keys(conn, _CONN_KEYS, set(), where)
        for endpoint in ("source", "target"):
            if conn[endpoint] not in names:
                raise SpecError(f"{where}.{endpoint}: unknown population "
                                f"{conn[endpoint]!r}")
        sign = _integer(conn, "sign", where)
        if sign not in (1, -1):
            raise SpecError(f"{where}.sign: must be 1 or -1, got {sign}")
        connections.append(ConnectionRule(
            source=conn["source"],
            target=conn["target"],
            total_synapses=_integer(conn, "total_synapses", where),
            weight_mean=_number(conn, "weight_mean", where),
            weight_sd=_number(conn, "weight_sd", where),
            delay_mean=_number(conn, "delay_mean", where),
            delay_sd=_number(conn, "delay_sd", where),
            sign=sign,
        ))

    seed = _integer(doc, "seed", "document")
    if seed < 0:
        raise SpecError("document.seed: must be non-negative")

    return NetworkSpec(grid=grid, populations=tuple(populations),
                       connections=tuple(connections), seed=seed)


def serialize_network_spec(spec: NetworkSpec) -> str:
    """Canonical JSON document; inverse of :func:`load_network_spec`."""
    doc = {
        "grid": asdict(spec.grid),
        "populations": [asdict(p) for p in spec.populations],
        "connections": [asdict(c) for c in spec.connections],
        "seed": spec.seed,
    }
    return json.dumps(doc, indent=2, sort_keys=False)


# ---------------------------------------------------------------------------
# validation


def validate(spec: NetworkSpec) -> list[str]:
    """Check all value invariants; returns an empty list iff the spec is ok."""
    v: list[str] = []
    g = spec.grid
    if g.h <= 0:
        v.append(f"grid.h must be > 0, got {g.h}")
        return v  # everything below divides by h
    if g.t_model < 0:
        v.append(f"grid.t_model must be >= 0, got {g.t_model}")
    if g.t_transient < 0:
        v.append(f"grid.t_transient must be >= 0, got {g.t_transient}")
    if g.min_delay < g.h - _GRID_EPS:
        v.append(f"grid.min_delay ({g.min_delay}) below grid step ({g.h})")
    if not _is_multiple(g.min_delay, g.h):
        v.append(f"grid.min_delay ({g.min_delay}) not a multiple of h ({g.h})")
    if g.max_delay < g.min_delay - _GRID_EPS:
        v.append(f"grid.max_delay ({g.max_delay}) below min_delay ({g.min_delay})")
    if not _is_multiple(g.max_delay, g.h):
        v.append(f"grid.max_delay ({g.max_delay}) not a multiple of h ({g.h})")

    seen = set()
    for p in spec.populations:
        w = f"population {p.name!r}"
        if p.name in seen:
            v.append(f"{w}: duplicate population name")
        seen.add(p.name)
        if p.size < 0:
            v.append(f"{w}: size must be >= 0, got {p.size}")
        if p.ext_rate < 0:
            v.append(f"{w}: ext_rate must be >= 0, got {p.ext_rate}")
        if p.ext_indegree < 0:
            v.append(f"{w}: ext_indegree must be >= 0, got {p.ext_indegree}")
        q = p.params
        for attr in ("tau_m", "tau_syn_ex", "tau_syn_in", "C_m"):
            if getattr(q, attr) <= 0:
                v.append(f"{w}: params.{attr} must be > 0, got {getattr(q, attr)}")
        if q.V_reset >= q.V_th:
            v.append(f"{w}: V_reset ({q.V_reset}) must be below V_th ({q.V_th})")
        if q.t_ref < 0:
            v.append(f"{w}: t_ref must be >= 0, got {q.t_ref}")
        elif not _is_multiple(q.t_ref, g.h):
            v.append(f"{w}: t_ref ({q.t_ref}) not a multiple of h ({g.h})")

    for i, c in enumerate(spec.connections):
        w = f"connection {c.source!r}->{c.target!r} (rule {i})"
        if c.total_synapses < 0:
            v.append(f"{w}: total_synapses must be >= 0")
        if c.weight_mean < 0:
            v.append(f"{w}: weight_mean is a magnitude and must be >= 0 "
                     f"(sign is carried by the rule), got {c.weight_mean}")
        if c.weight_sd < 0:
            v.append(f"{w}: weight_sd must be >= 0, got {c.weight_sd}")
        if c.delay_sd < 0:
            v.append(f"{w}: delay_sd must be >= 0, got {c.delay_sd}")
        if c.delay_mean < g.h - _GRID_EPS:
            v.append(f"{w}: delay below grid step "
                     f"(delay_mean {c.delay_mean} < h {g.h})")
        if c.delay_mean < g.min_delay - _GRID_EPS or c.delay_mean > g.max_delay + _GRID_EPS:
            v.append(f"{w}: delay_mean {c.delay_mean} outside grid delay range "
                     f"[{g.min_delay}, {g.max_delay}]")
    return v


# ---------------------------------------------------------------------------
# exact integration propagators

# relative tau gap below which the degenerate (tau_syn == tau_m) limit is used
_TAU_DEGENERATE_RTOL = 1e-7


def _coupling(tau_m: float, tau_syn: float, C_m: float, h: float) -> float:
    """Current->voltage coupling of the exact one-step solution."""
    if abs(tau_m - tau_syn) <= _TAU_DEGENERATE_RTOL * tau_m:
        # analytic limit of the generic expression; the generic form divides
        # by tau_m - tau_syn and cancels catastrophically here
        return h * math.exp(-h / tau_m) / C_m
    return (tau_m * tau_syn / (C_m * (tau_m - tau_syn))
            * (math.exp(-h / tau_m) - math.exp(-h / tau_syn)))


def compute_propagators(params: NeuronParams, h: float) -> Propagators:
    """Exact one-step propagators of the subthreshold dynamics.

    Solves dV/dt = -(V - E_L)/tau_m + (I_ex + I_in)/C_m with exponentially
    decaying synaptic currents dI_x/dt = -I_x/tau_syn_x over one step h.
    """
    if h <= 0:
        raise ValueError(f"h must be > 0, got {h}")
    p_vv = math.exp(-h / params.tau_m)
    return Propagators(
        p_vv=p_vv,
        p_ee=math.exp(-h / params.tau_syn_ex),
        p_ii=math.exp(-h / params.tau_syn_in),
        p_ve=_coupling(params.tau_m, params.tau_syn_ex, params.C_m, h),
        p_vi=_coupling(params.tau_m, params.tau_syn_in, params.C_m, h),
        p_const=params.E_L * (1.0 - p_vv),
    )
