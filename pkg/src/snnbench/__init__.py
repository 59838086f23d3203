"""Multithreaded spiking-network simulator and strong-scaling benchmark harness."""

from .model import (NetworkSpec, NeuronParams, PopulationSpec, ConnectionRule,
                    SimulationGrid, Propagators, SpecError,
                    load_network_spec, serialize_network_spec, validate,
                    compute_propagators)
from .connectivity import TargetTable, build_connectivity, degrees
from .engine import (SpikeRecord, PhaseTimers, SimResult, partition_neurons,
                     run_simulation, merge_records)
from .placement import (TopologyModel, PlacementPlan, DEFAULT_TOPOLOGY,
                        core_id, sequential_plan, distant_plan,
                        first_l3_sharing_index, format_places)
from .metrics import (PowerTrace, RtfReport, EnergyReport, rtf, align_power,
                      integrate_energy, energy_per_synaptic_event,
                      phase_fractions, population_rates, cv_isi, raster_export)
from .bench import BenchmarkConfig, ScalingRow, run_sweep, emit_scaling_table

__version__ = "0.1.0"
