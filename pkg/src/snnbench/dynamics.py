"""Per-step neuron state update and external Poisson input.

Update order within a step is fixed so that independent implementations can
be compared spike-for-spike:

1. propagate membrane and read the synaptic currents of the previous step,
2. decay currents and add this step's input (ring buffer + external),
3. closed threshold test (v_m >= V_th), reset, start refractory hold.

Refractory neurons hold v_m at V_reset but their synaptic currents keep
evolving and accumulating input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .crng import TAG_EXTERNAL_INPUT, U64, hash3, mix64, to_unit
from .model import NeuronParams, Propagators

__all__ = [
    "NeuronStateArrays",
    "make_states",
    "step_population",
    "poisson_external_input",
    "refractory_steps",
]

# inversion sampling is exact but O(lambda); switch to the normal
# approximation above this rate
_POISSON_INVERSION_MAX = 10.0


@dataclass
class NeuronStateArrays:
    v_m: np.ndarray        # membrane potential, mV (float64)
    i_ex: np.ndarray       # excitatory synaptic current, pA (float64)
    i_in: np.ndarray       # inhibitory synaptic current, pA (float64)
    refr_left: np.ndarray  # remaining refractory steps (int32)

    @property
    def size(self) -> int:
        return self.v_m.size


def make_states(n: int, params: NeuronParams) -> NeuronStateArrays:
    """Fresh state arrays at rest."""
    return NeuronStateArrays(
        v_m=np.full(n, params.E_L, dtype=np.float64),
        i_ex=np.zeros(n, dtype=np.float64),
        i_in=np.zeros(n, dtype=np.float64),
        refr_left=np.zeros(n, dtype=np.int32),
    )


def refractory_steps(params: NeuronParams, h: float) -> int:
    return math.ceil(params.t_ref / h - 1e-9)


def step_population(
    states: NeuronStateArrays,
    prop: Propagators,
    params: NeuronParams,
    h: float,
    input_ex: np.ndarray,
    input_in: np.ndarray,
    input_dc: np.ndarray | float = 0.0,
) -> np.ndarray:
    """Advance all neurons by one step; returns indices of spiking neurons.

    ``input_ex``/``input_in`` are this step's current increments (pA) into
    the synaptic channels; ``input_dc`` is a current held constant through
    the step, entering through its own exact coupling factor.
    """
    v, i_ex, i_in, refr = states.v_m, states.i_ex, states.i_in, states.refr_left
    p_dc = prop.p_dc(params)

    new_v = prop.p_vv * v + prop.p_ve * i_ex + prop.p_vi * i_in \
        + p_dc * input_dc + prop.p_const
    refractory = refr > 0
    new_v[refractory] = params.V_reset
    refr[refractory] -= 1

    i_ex *= prop.p_ee
    i_ex += input_ex
    i_in *= prop.p_ii
    i_in += input_in

    spiking = np.flatnonzero(~refractory & (new_v >= params.V_th))
    new_v[spiking] = params.V_reset
    refr[spiking] = refractory_steps(params, h)
    states.v_m = new_v
    return spiking


# ---------------------------------------------------------------------------
# Poisson input


@njit(cache=True, inline="always")
def poisson_from_uniforms(lam, u1, u2):
    """Poisson count from two uniforms: CDF inversion for small rates,
    rounded normal approximation for large ones."""
    if lam <= 0.0:
        return 0
    if lam < _POISSON_INVERSION_MAX:
        p = math.exp(-lam)
        cdf = p
        k = 0
        while u1 > cdf and k < 500:
            k += 1
            p *= lam / k
            cdf += p
        return k
    # Box-Muller normal from both uniforms
    r = math.sqrt(-2.0 * math.log(1.0 - u1))
    z = r * math.cos(2.0 * math.pi * u2)
    k = int(round(lam + math.sqrt(lam) * z))
    return k if k > 0 else 0


@njit(cache=True, inline="always")
def counter_poisson(seed, neuron, step, lam):
    """Poisson count keyed by (seed, neuron, step); thread-layout invariant."""
    h1 = hash3(U64(seed) ^ TAG_EXTERNAL_INPUT, neuron, step)
    h2 = mix64(h1 ^ TAG_EXTERNAL_INPUT)
    return poisson_from_uniforms(lam, to_unit(h1), to_unit(h2))


def poisson_external_input(rate: float, indegree: int, weight: float,
                           h: float, rng: np.random.Generator) -> float:
    """One step's external current increment: weight x Poisson count.

    The count is Poisson(rate * indegree * h / 1000); drawing consumes the
    stream deterministically (two uniforms per call).
    """
    if rate < 0 or indegree < 0:
        raise ValueError("rate and indegree must be non-negative")
    lam = rate * indegree * h / 1000.0
    u1, u2 = rng.random(2)
    return weight * poisson_from_uniforms(lam, u1, u2)
