import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snnbench.model import (NeuronParams, SpecError, compute_propagators,
                            load_network_spec, serialize_network_spec, validate)

from conftest import DEFAULT_PARAMS, make_conn, make_doc, make_pop, to_text

PARAMS = NeuronParams(**DEFAULT_PARAMS)


# ---------------------------------------------------------------------------
# load_network_spec


def test_load_minimal_empty_network():
    doc = make_doc(populations=[make_pop("A", 0)])
    spec = load_network_spec(to_text(doc))
    assert spec.n_neurons == 0
    assert spec.connections == ()
    assert validate(spec) == []


def test_load_unknown_population_named_in_error():
    doc = make_doc(populations=[make_pop("A", 10)],
                   connections=[make_conn("A", "L9E", 5)])
    with pytest.raises(SpecError, match="L9E"):
        load_network_spec(to_text(doc))


def test_load_unknown_key_rejected():
    doc = make_doc(populations=[make_pop("A", 1)])
    doc["populations"][0]["frobnicate"] = 3
    with pytest.raises(SpecError, match="frobnicate"):
        load_network_spec(to_text(doc))


def test_load_missing_key_named():
    doc = make_doc(populations=[make_pop("A", 1)])
    del doc["grid"]["h"]
    with pytest.raises(SpecError, match="'h'"):
        load_network_spec(to_text(doc))


def test_load_parse_error_reports_line():
    with pytest.raises(SpecError, match="line 2"):
        load_network_spec('{\n"grid": oops\n}')


def test_load_microcircuit(microcircuit_spec):
    spec = microcircuit_spec
    assert len(spec.populations) == 8
    assert 70_000 <= spec.n_neurons <= 90_000  # "about 80,000 neurons"
    total = sum(c.total_synapses for c in spec.connections)
    assert 2.5e8 <= total <= 3.5e8  # "300 million synapses"


def test_roundtrip_microcircuit(microcircuit_spec):
    again = load_network_spec(serialize_network_spec(microcircuit_spec))
    assert again == microcircuit_spec


# ---------------------------------------------------------------------------
# validate


def test_validate_delay_below_grid_step():
    doc = make_doc(populations=[make_pop("A", 10)],
                   connections=[make_conn("A", "A", 5, delay=0.05)])
    spec = load_network_spec(to_text(doc))
    assert any("delay below grid step" in v for v in validate(spec))


def test_validate_reset_above_threshold():
    params = dict(DEFAULT_PARAMS, V_reset=-40.0)
    doc = make_doc(populations=[make_pop("A", 10, params)])
    spec = load_network_spec(to_text(doc))
    assert any("V_reset" in v for v in validate(spec))


def test_validate_microcircuit_ok(microcircuit_spec):
    assert validate(microcircuit_spec) == []


def test_validate_misaligned_delays_and_tref():
    doc = make_doc(grid={"h": 0.1, "t_model": 10.0, "t_transient": 0.0,
                         "min_delay": 0.15, "max_delay": 2.0},
                   populations=[make_pop("A", 1, dict(DEFAULT_PARAMS, t_ref=0.25))])
    spec = load_network_spec(to_text(doc))
    msgs = validate(spec)
    assert any("min_delay" in m and "multiple" in m for m in msgs)
    assert any("t_ref" in m for m in msgs)


def test_validate_duplicate_population():
    doc = make_doc(populations=[make_pop("A", 1), make_pop("A", 2)])
    spec = load_network_spec(to_text(doc))
    assert any("duplicate" in m for m in validate(spec))


# ---------------------------------------------------------------------------
# compute_propagators


def test_p_vv_matches_exp():
    prop = compute_propagators(PARAMS, 0.1)
    # independent high-precision value of exp(-0.01)
    assert prop.p_vv == pytest.approx(0.990049833749168, rel=1e-15)


def test_h_to_zero_limit():
    prop = compute_propagators(PARAMS, 1e-12)
    assert prop.p_vv == pytest.approx(1.0, abs=1e-9)
    assert prop.p_ee == pytest.approx(1.0, abs=1e-9)
    assert prop.p_ve == pytest.approx(0.0, abs=1e-9)
    assert prop.p_const == pytest.approx(0.0, abs=1e-6)


def test_degenerate_tau_matches_perturbed_generic():
    h = 0.1
    exact = compute_propagators(
        NeuronParams(**dict(DEFAULT_PARAMS, tau_syn_ex=10.0)), h)
    for eps in (1e-6, -1e-6):
        near = compute_propagators(
            NeuronParams(**dict(DEFAULT_PARAMS, tau_syn_ex=10.0 * (1 + eps))), h)
        assert near.p_ve == pytest.approx(exact.p_ve, rel=1e-6)


def test_invalid_h_rejected():
    with pytest.raises(ValueError):
        compute_propagators(PARAMS, 0.0)


@given(h1=st.floats(1e-3, 5.0), h2=st.floats(1e-3, 5.0))
def test_p_vv_semigroup(h1, h2):
    a = compute_propagators(PARAMS, h1).p_vv
    b = compute_propagators(PARAMS, h2).p_vv
    c = compute_propagators(PARAMS, h1 + h2).p_vv
    assert a * b == pytest.approx(c, rel=1e-14)


def _rk4_free_trajectory(params, v0, iex0, iin0, h, n_steps, substeps=100,
                         i_dc=0.0):
    """Independent RK4 oracle of the subthreshold ODE, sampled at grid points."""
    def deriv(v, iex, iin):
        return (-(v - params.E_L) / params.tau_m + (iex + iin + i_dc) / params.C_m,
                -iex / params.tau_syn_ex,
                -iin / params.tau_syn_in)

    dt = h / substeps
    v, iex, iin = v0, iex0, iin0
    out = [(v, iex, iin)]
    for _ in range(n_steps):
        for _ in range(substeps):
            a1, b1, c1 = deriv(v, iex, iin)
            a2, b2, c2 = deriv(v + 0.5 * dt * a1, iex + 0.5 * dt * b1,
                               iin + 0.5 * dt * c1)
            a3, b3, c3 = deriv(v + 0.5 * dt * a2, iex + 0.5 * dt * b2,
                               iin + 0.5 * dt * c2)
            a4, b4, c4 = deriv(v + dt * a3, iex + dt * b3, iin + dt * c3)
            v += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            iex += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            iin += dt / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        out.append((v, iex, iin))
    return np.array(out)


def test_propagator_iteration_matches_rk4_oracle():
    h = 0.1
    n_steps = 1000  # 100 ms
    prop = compute_propagators(PARAMS, h)
    v, iex, iin = -60.0, 300.0, -150.0
    oracle = _rk4_free_trajectory(PARAMS, v, iex, iin, h, n_steps)
    for k in range(1, n_steps + 1):
        v = prop.p_vv * v + prop.p_ve * iex + prop.p_vi * iin + prop.p_const
        iex *= prop.p_ee
        iin *= prop.p_ii
        assert abs(v - oracle[k, 0]) <= 1e-6 * max(1.0, abs(oracle[k, 0]))
    assert iex == pytest.approx(oracle[n_steps, 1], rel=1e-6)
