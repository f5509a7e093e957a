import json

import numpy as np
import numpy.testing as npt
import pytest

from stochmap import benchmark as bench
from stochmap.ctmc import build_equal_rates, build_tridiagonal
from stochmap.simulate import simulate_history
from stochmap.tree import simulate_yule_tree


def _scenario(**overrides):
    sc = {"id": "t", "seed": 5, "states": [3], "tips": [6],
          "methods": ["mcmc", "exp"], "sweeps": 250, "thin": 1}
    sc.update(overrides)
    return bench.validate_scenario(sc)


# ---------------------------------------------------- scenario files

def test_validate_fills_defaults():
    sc = bench.validate_scenario({"id": 7, "seed": 5, "states": [4]})
    assert sc["id"] == "7"
    assert sc["model"] == "equal"
    assert sc["tips"] == [50]
    assert sc["expected_transitions"] == [2.0]
    assert sc["omega_multipliers"] == [2.0]
    assert sc["methods"] == ["mcmc", "exp"]
    assert sc["draws"] == sc["sweeps"] == 2000
    assert sc["burn_in"] == 0.1
    assert sc["target_ess"] == 10_000


@pytest.mark.parametrize("bad", [
    {"seed": 1, "states": [4]},                        # missing id
    {"id": "x", "states": [4]},                        # missing seed
    {"id": "x", "seed": 1},                            # missing states
    {"id": "x", "seed": 1, "states": [4], "nope": 1},  # unknown field
    {"id": "x", "seed": 1, "states": [4], "methods": ["emc"]},
    {"id": "x", "seed": 1, "states": [4], "model": "jc"},
    {"id": "x", "seed": 1, "states": [60], "model": "gy94"},
    {"id": "x", "seed": 1, "states": [1]},
    {"id": "x", "seed": 1, "states": [4], "tips": []},
    {"id": "x", "seed": 1, "states": [4], "expected_transitions": [0]},
    {"id": "x", "seed": 1, "states": [4], "omega_multipliers": [1.0]},
    {"id": "x", "seed": 1, "states": [4], "burn_in": 1.0},
    {"id": "x", "seed": 1, "states": [4], "sweeps": 0},
    {"id": "x", "seed": 1, "states": [4], "target_ess": 0},
])
def test_validate_rejects_malformed(bad):
    with pytest.raises(ValueError):
        bench.validate_scenario(bad)


def test_load_scenario_file_object_and_list(tmp_path):
    single = tmp_path / "one.json"
    single.write_text(json.dumps({"id": "a", "seed": 1, "states": [3]}))
    assert len(bench.load_scenario_file(single)) == 1

    many = tmp_path / "two.json"
    many.write_text(json.dumps([
        {"id": "a", "seed": 1, "states": [3]},
        {"id": "b", "seed": 2, "states": [4], "model": "tridiag"},
    ]))
    scs = bench.load_scenario_file(many)
    assert [sc["id"] for sc in scs] == ["a", "b"]

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError):
        bench.load_scenario_file(bad)
    bad.write_text('"just a string"')
    with pytest.raises(ValueError):
        bench.load_scenario_file(bad)


def test_scenario_cells_order_and_seeds():
    sc = _scenario(states=[3, 5], tips=[6, 10],
                   omega_multipliers=[1.5, 3.0])
    cells = bench.scenario_cells(sc)
    assert len(cells) == 2 * 2 * 1 * 2 * 2
    # methods vary fastest, states slowest
    assert [c["method"] for c in cells[:2]] == ["mcmc", "exp"]
    assert cells[0]["states"] == 3 and cells[-1]["states"] == 5
    assert cells[0]["omega_multiplier"] == 1.5
    keys = [c["seed"].spawn_key for c in cells]
    assert len(set(keys)) == len(cells)


# ------------------------------------------------- pattern coercion

def test_with_pattern_round_trip():
    rm = build_tridiagonal(5)
    dense = bench.with_pattern(rm, want_sparse=False)
    assert dense.pattern is None
    npt.assert_array_equal(dense.q, rm.q)
    npt.assert_array_equal(dense.pi, rm.pi)
    again = bench.with_pattern(dense, want_sparse=True)
    assert again.pattern is not None
    assert again.pattern.shape == (2 * 4, 2)  # nonzero structure only

    eq = build_equal_rates(4)
    sparse = bench.with_pattern(eq, want_sparse=True)
    assert sparse.pattern.shape == (12, 2)  # all off-diagonal positions
    assert bench.with_pattern(eq, want_sparse=False) is eq


# ------------------------------------------------------ timed runs

def test_timed_sampling_run_all_methods():
    rng = np.random.default_rng(1)
    tree = simulate_yule_tree(6, 1.0, rng)
    rm = build_equal_rates(3)
    hist, y = simulate_history(tree, rm, rng)
    for method in bench.METHODS:
        seq, seconds = bench.timed_sampling_run(
            method, tree, rm, y, 120, np.random.default_rng(2),
            warm_history=hist)
        assert len(seq) == 120
        assert seconds > 0
    with pytest.raises(ValueError):
        bench.timed_sampling_run("nuts", tree, rm, y, 10,
                                 np.random.default_rng(0))


def test_run_cell_and_determinism():
    sc = _scenario()
    cells = bench.scenario_cells(sc)
    row = bench.run_cell(sc, cells[0])
    assert row.scenario_id == "t"
    assert row.method == "mcmc"
    assert row.states == 3 and row.tips == 6
    assert row.min_ess > 0
    assert row.normalized_seconds > 0
    again = bench.run_cell(sc, cells[0])
    assert again.min_ess == row.min_ess  # sample-derived columns reproduce


def test_isolated_cell_matches_full_run():
    sc = _scenario()
    rows = bench.run_scenarios([sc])
    assert len(rows) == 2
    cells = bench.scenario_cells(sc)
    alone = bench.run_cell(sc, cells[1])
    assert alone.method == rows[1].method == "exp"
    assert alone.min_ess == rows[1].min_ess


def test_write_benchmark_csv(tmp_path):
    sc = _scenario(methods=["exp"])
    rows = bench.run_scenarios([sc])
    out = tmp_path / "bench.csv"
    bench.write_benchmark_csv(rows, out)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == ("scenario_id,method,states,tips,"
                        "expected_transitions,omega_multiplier,"
                        "raw_seconds,min_ess,normalized_seconds")
    assert len(lines) == 2
    fields = lines[1].split(",")
    assert fields[:2] == ["t", "exp"]
    assert float(fields[7]) == rows[0].min_ess


def test_median_seconds_per_iteration():
    rng = np.random.default_rng(4)
    tree = simulate_yule_tree(5, 1.0, rng)
    rm = build_equal_rates(3)
    hist, y = simulate_history(tree, rm, rng)
    t_mcmc = bench.median_seconds_per_iteration(
        "mcmc", tree, rm, y, n=50, repeats=3, seed=8, warm_history=hist)
    t_exp = bench.median_seconds_per_iteration(
        "exp", tree, rm, y, n=50, repeats=3, seed=8)
    assert t_mcmc > 0 and t_exp > 0


def test_fit_loglog_slope_recovers_exponent():
    sizes = np.array([10, 20, 40, 80])
    npt.assert_allclose(bench.fit_loglog_slope(sizes, 3e-8 * sizes**2.0),
                        2.0, atol=1e-12)
    npt.assert_allclose(bench.fit_loglog_slope(sizes, 5.0 * sizes**3.0),
                        3.0, atol=1e-12)
