import numpy as np
import pytest

from snnbench.connectivity import (build_connectivity, degrees, dump_table,
                                   load_table)
from snnbench.model import load_network_spec

from conftest import make_conn, make_doc, make_pop, to_text


def _spec(populations, connections, seed=9):
    return load_network_spec(to_text(make_doc(populations=populations,
                                              connections=connections,
                                              seed=seed)))


def test_zero_synapse_rule_realizes_nothing():
    spec = _spec([make_pop("A", 10)], [make_conn("A", "A", 0)])
    table = build_connectivity(spec)
    assert table.n_entries == 0
    d = degrees(table)
    assert d.in_degree.sum() == d.out_degree.sum() == 0


def test_single_source_forced_out_degree():
    spec = _spec([make_pop("S", 1), make_pop("T", 10)],
                 [make_conn("S", "T", 10)])
    table = build_connectivity(spec)
    d = degrees(table)
    assert d.out_degree[0] == 10
    assert d.in_degree[0] == 0  # S receives nothing
    assert d.in_degree.sum() == 10


def test_exact_totals_and_signs():
    spec = _spec([make_pop("E", 50), make_pop("I", 20)],
                 [make_conn("E", "I", 1234),
                  make_conn("I", "E", 567, sign=-1)])
    table = build_connectivity(spec)
    assert table.n_entries == 1234 + 567
    assert np.all(table.weights[table.is_ex] >= 0)
    assert np.all(table.weights[~table.is_ex] <= 0)
    assert np.count_nonzero(table.is_ex) == 1234


def test_delays_within_grid_bounds():
    spec = _spec([make_pop("A", 100)],
                 [make_conn("A", "A", 5000, delay=1.0, delay_sd=2.0)])
    table = build_connectivity(spec)
    g = spec.grid
    assert table.delay_steps.min() >= g.min_delay_steps
    assert table.delay_steps.max() <= g.max_delay_steps


def test_placement_independence():
    spec = _spec([make_pop("E", 200), make_pop("I", 50)],
                 [make_conn("E", "E", 3000), make_conn("E", "I", 800),
                  make_conn("I", "E", 900, sign=-1)])
    tables = [build_connectivity(spec, n_vp=k) for k in (1, 2, 3, 8)]
    ref = tables[0]
    ref_order = ref.canonical_order()
    for other in tables[1:]:
        order = other.canonical_order()
        np.testing.assert_array_equal(ref.offsets, other.offsets)
        np.testing.assert_array_equal(ref.targets[ref_order],
                                      other.targets[order])
        np.testing.assert_array_equal(ref.weights[ref_order],
                                      other.weights[order])
        np.testing.assert_array_equal(ref.delay_steps[ref_order],
                                      other.delay_steps[order])


def test_within_source_grouped_by_owning_vp():
    spec = _spec([make_pop("A", 100)], [make_conn("A", "A", 5000)])
    n_vp = 4
    table = build_connectivity(spec, n_vp=n_vp)
    for s in range(100):
        tgt = table.targets[table.offsets[s]:table.offsets[s + 1]]
        vps = tgt % n_vp
        assert np.all(np.diff(vps) >= 0)  # contiguous runs per owner


def test_in_degree_binomial_statistics():
    # 1000 x 1000 pair with 100,000 synapses: in-degree ~ Binomial(1e5, 1e-3)
    spec = _spec([make_pop("S", 1000), make_pop("T", 1000)],
                 [make_conn("S", "T", 100_000)])
    table = build_connectivity(spec)
    d = degrees(table)
    in_deg = d.in_degree[1000:]  # targets
    assert in_deg.sum() == 100_000
    mean = 100_000 * 1e-3
    sigma = np.sqrt(100_000 * 1e-3 * (1 - 1e-3))
    within4 = np.abs(in_deg - mean) <= 4 * sigma
    assert within4.mean() >= 0.99


def test_reproducible_across_builds():
    spec = _spec([make_pop("A", 50)], [make_conn("A", "A", 2000)])
    t1 = build_connectivity(spec, n_vp=2)
    t2 = build_connectivity(spec, n_vp=2)
    np.testing.assert_array_equal(t1.targets, t2.targets)
    np.testing.assert_array_equal(t1.weights, t2.weights)


def test_degree_sums_match_entry_count():
    spec = _spec([make_pop("E", 30), make_pop("I", 10)],
                 [make_conn("E", "I", 500), make_conn("I", "I", 200, sign=-1)])
    table = build_connectivity(spec)
    d = degrees(table)
    assert d.in_degree.sum() == d.out_degree.sum() == table.n_entries == 700


def test_empty_population_with_synapses_rejected():
    spec = _spec([make_pop("A", 0), make_pop("B", 10)],
                 [make_conn("A", "B", 5)])
    with pytest.raises(ValueError, match="empty population"):
        build_connectivity(spec)


def test_dump_load_roundtrip(tmp_path):
    spec = _spec([make_pop("E", 40), make_pop("I", 10)],
                 [make_conn("E", "I", 300), make_conn("I", "E", 100, sign=-1)])
    table = build_connectivity(spec, n_vp=3)
    path = tmp_path / "table.bin"
    dump_table(table, path)
    again = load_table(path)
    assert again.n_neurons == table.n_neurons
    np.testing.assert_array_equal(again.offsets, table.offsets)
    np.testing.assert_array_equal(again.targets, table.targets)
    np.testing.assert_array_equal(again.weights, table.weights)
    np.testing.assert_array_equal(again.delay_steps, table.delay_steps)
    np.testing.assert_array_equal(again.is_ex, table.is_ex)


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a table")
    with pytest.raises(ValueError, match="not a synapse table"):
        load_table(path)
