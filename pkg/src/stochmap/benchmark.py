"""Timed sampling runs over scenario grids, normalized by effective samples.

A scenario file is a JSON object (or list of objects) of the form

    {
      "id": "state-sweep",              required, names the scenario
      "seed": 20260815,                 required, root of all cell seeds
      "model": "equal",                 equal | tridiag | gy94
      "states": [4, 8, 16],             required; gy94 only allows [61]
      "tips": [50],
      "expected_transitions": [2],
      "omega_multipliers": [2.0],
      "methods": ["mcmc", "exp"],       subset of mcmc, mcmc-sparse,
                                        exp, exp-once
      "sweeps": 2000,                   MCMC sweeps per cell
      "draws": null,                    EXP draws per cell (default: sweeps)
      "thin": 1,
      "burn_in": 0.1,                   fraction of retained MCMC samples
                                        dropped before ESS estimation
                                        (exp draws are independent, so
                                        the fraction is ignored there)
      "target_ess": 10000,
      "kappa": 2.0, "omega": 0.5        gy94 parameters
    }

Grid cells are the cross product states x tips x expected_transitions x
omega_multipliers x methods, enumerated in that nesting order; cell i is
seeded with the i-th child of SeedSequence(seed), so any cell can be rerun
in isolation and cells can run concurrently.  Each cell simulates a Yule
tree and one full history under the scaled model, takes the tip states of
that history as data, warm-starts the sampler from it, and times the
sampling call alone (after an untimed single-draw warm-up so compilation
never lands in the measurement).  Timing is wall-clock and should be run
on an otherwise idle worker.

The output CSV schema is fixed:

    scenario_id, method, states, tips, expected_transitions,
    omega_multiplier, raw_seconds, min_ess, normalized_seconds

where min_ess is the smallest effective sample size over the monitored
statistics (post burn-in) and normalized_seconds rescales raw_seconds to
the cost of target_ess effective samples.  Rerunning with the same seeds
reproduces every sample-derived column exactly; only the timing columns
vary.
"""

import itertools
import json
from time import perf_counter

import numpy as np

from .ctmc import (RateMatrix, build_equal_rates, build_gy94,
                   build_tridiagonal, infer_pattern,
                   scale_to_expected_transitions, uniformize)
from .diagnostics import EssReport, ess, monitored_statistics
from .expsampler import run_exp_sampler
from .history import as_augmented
from .mcmc import ChainState, initialize_chain, run_chain
from .simulate import simulate_history
from .tree import simulate_yule_tree

METHODS = ("mcmc", "mcmc-sparse", "exp", "exp-once")

CSV_HEADER = ("scenario_id,method,states,tips,expected_transitions,"
              "omega_multiplier,raw_seconds,min_ess,normalized_seconds")

_DEFAULTS = {
    "model": "equal",
    "tips": [50],
    "expected_transitions": [2],
    "omega_multipliers": [2.0],
    "methods": ["mcmc", "exp"],
    "sweeps": 2000,
    "draws": None,
    "thin": 1,
    "burn_in": 0.1,
    "target_ess": 10_000,
    "kappa": 2.0,
    "omega": 0.5,
}


class BenchmarkRow:
    """One benchmark result; maps one-to-one onto a CSV line."""

    def __init__(self, scenario_id, method, states, tips,
                 expected_transitions, omega_multiplier, raw_seconds,
                 min_ess, normalized_seconds):
        self.scenario_id = scenario_id
        self.method = method
        self.states = int(states)
        self.tips = int(tips)
        self.expected_transitions = float(expected_transitions)
        self.omega_multiplier = float(omega_multiplier)
        self.raw_seconds = float(raw_seconds)
        self.min_ess = float(min_ess)
        self.normalized_seconds = float(normalized_seconds)

    def as_csv_line(self):
        return "%s,%s,%d,%d,%r,%r,%r,%r,%r" % (
            self.scenario_id, self.method, self.states, self.tips,
            self.expected_transitions, self.omega_multiplier,
            self.raw_seconds, self.min_ess, self.normalized_seconds)

    def __repr__(self):
        return "BenchmarkRow(%s)" % self.as_csv_line()


def load_scenario_file(path):
    """Parse and validate a scenario file; returns a list of scenarios."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError("scenario file is not valid JSON: %s" % exc)
    if isinstance(raw, dict):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise ValueError("scenario file must hold an object or a list")
    return [validate_scenario(sc) for sc in raw]


def validate_scenario(sc):
    """Fill defaults and reject malformed or unknown scenario fields."""
    if not isinstance(sc, dict):
        raise ValueError("each scenario must be a JSON object")
    known = {"id", "seed", "states"} | set(_DEFAULTS)
    extra = set(sc) - known
    if extra:
        raise ValueError("unknown scenario fields: %s" % sorted(extra))
    for key in ("id", "seed", "states"):
        if key not in sc:
            raise ValueError("scenario is missing required field %r" % key)
    out = dict(_DEFAULTS)
    out.update(sc)
    out["id"] = str(out["id"])
    out["seed"] = int(out["seed"])
    out["states"] = [int(v) for v in _as_list(out["states"], "states")]
    out["tips"] = [int(v) for v in _as_list(out["tips"], "tips")]
    out["expected_transitions"] = [
        float(v) for v in _as_list(out["expected_transitions"],
                                   "expected_transitions")]
    out["omega_multipliers"] = [
        float(v) for v in _as_list(out["omega_multipliers"],
                                   "omega_multipliers")]
    out["methods"] = [str(v) for v in _as_list(out["methods"], "methods")]
    for m in out["methods"]:
        if m not in METHODS:
            raise ValueError("unknown method %r (expected one of %s)"
                             % (m, list(METHODS)))
    if out["model"] not in ("equal", "tridiag", "gy94"):
        raise ValueError("unknown model %r" % out["model"])
    if out["model"] == "gy94" and out["states"] != [61]:
        raise ValueError("gy94 scenarios must set states to [61]")
    for key in ("states", "tips"):
        if any(v < 2 for v in out[key]):
            raise ValueError("%s entries must be >= 2" % key)
    if any(v <= 0 for v in out["expected_transitions"]):
        raise ValueError("expected_transitions entries must be > 0")
    if any(v <= 1 for v in out["omega_multipliers"]):
        raise ValueError("omega_multipliers entries must exceed 1")
    out["sweeps"] = int(out["sweeps"])
    out["draws"] = out["sweeps"] if out["draws"] is None else int(out["draws"])
    out["thin"] = int(out["thin"])
    if out["sweeps"] < 1 or out["draws"] < 1 or out["thin"] < 1:
        raise ValueError("sweeps, draws, and thin must be >= 1")
    out["burn_in"] = float(out["burn_in"])
    if not 0.0 <= out["burn_in"] < 1.0:
        raise ValueError("burn_in must lie in [0, 1)")
    out["target_ess"] = int(out["target_ess"])
    if out["target_ess"] < 1:
        raise ValueError("target_ess must be >= 1")
    return out


def _as_list(v, name):
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ValueError("%s must be a nonempty list" % name)
    return v


def scenario_cells(scenario):
    """The scenario's grid cells in deterministic order, seeds attached."""
    grid = list(itertools.product(
        scenario["states"], scenario["tips"],
        scenario["expected_transitions"], scenario["omega_multipliers"],
        scenario["methods"]))
    seeds = np.random.SeedSequence(scenario["seed"]).spawn(len(grid))
    cells = []
    for (s, tips, et, om, method), seed in zip(grid, seeds):
        cells.append({"states": s, "tips": tips, "expected_transitions": et,
                      "omega_multiplier": om, "method": method,
                      "seed": seed})
    return cells


def _build_model(scenario, s):
    if scenario["model"] == "equal":
        return build_equal_rates(s)
    if scenario["model"] == "tridiag":
        return build_tridiagonal(s)
    return build_gy94(scenario["kappa"], scenario["omega"],
                      np.full(61, 1.0 / 61))


def with_pattern(rate_matrix, want_sparse):
    """The same chain, stored for the dense or the CSR kernels.

    Sparse methods on a pattern-free matrix get the pattern of its
    nonzero entries (the complete off-diagonal set when nothing is
    numerically zero); dense methods on a patterned matrix get the
    pattern stripped.  The root distribution is carried over unchanged
    so both variants target the identical posterior.
    """
    if want_sparse:
        return infer_pattern(rate_matrix)
    if rate_matrix.pattern is not None:
        return RateMatrix(rate_matrix.q.copy(), pi=rate_matrix.pi.copy())
    return rate_matrix


def timed_sampling_run(method, tree, rate_matrix, y, n, rng,
                       thin=1, omega_multiplier=2.0, warm_history=None,
                       restrict_to=None):
    """One sampler run with the sampling call alone under the clock.

    An untimed single-sweep/single-draw warm-up precedes the measured
    call so just-in-time compilation never lands in the measurement; the
    warm-up consumes generator draws, so reruns with the same seed still
    reproduce the measured samples exactly.  Returns
    (SummarySequence, seconds).
    """
    if method not in METHODS:
        raise ValueError("unknown method %r" % method)
    if method in ("mcmc", "mcmc-sparse"):
        rm = with_pattern(rate_matrix, method == "mcmc-sparse")
        kernel = uniformize(rm, omega_multiplier)
        if warm_history is None:
            chain = initialize_chain(tree, kernel, y, rng)
        else:
            chain = ChainState(as_augmented(warm_history), tree, kernel,
                               y, rng)
        run_chain(chain, 1)  # warm-up
        t0 = perf_counter()
        seq = run_chain(chain, n, thin=thin, restrict_to=restrict_to)
        return seq, perf_counter() - t0
    regime = "per_iteration" if method == "exp" else "once"
    run_exp_sampler(tree, rate_matrix, y, 1, rng, regime=regime,
                    omega_multiplier=omega_multiplier)  # warm-up
    t0 = perf_counter()
    seq = run_exp_sampler(tree, rate_matrix, y, n, rng, regime=regime,
                          omega_multiplier=omega_multiplier,
                          restrict_to=restrict_to)
    return seq, perf_counter() - t0


def run_cell(scenario, cell):
    """Simulate, sample, and time one grid cell; returns a BenchmarkRow."""
    rng = np.random.default_rng(cell["seed"])
    tree = simulate_yule_tree(cell["tips"], 1.0, rng)
    rm = _build_model(scenario, cell["states"])
    rm = scale_to_expected_transitions(rm, tree,
                                       cell["expected_transitions"])
    history, y = simulate_history(tree, rm, rng)
    method = cell["method"]
    n = scenario["sweeps"] if method.startswith("mcmc") else scenario["draws"]
    thin = scenario["thin"] if method.startswith("mcmc") else 1
    seq, seconds = timed_sampling_run(
        method, tree, rm, y, n, rng, thin=thin,
        omega_multiplier=cell["omega_multiplier"], warm_history=history)
    stats = monitored_statistics(seq, y)
    # burn-in guards against MCMC transients; exp draws are independent
    skip = (int(np.ceil(scenario["burn_in"] * len(seq)))
            if method.startswith("mcmc") else 0)
    values = {name: ess(series[skip:]) for name, series in stats.items()}
    report = EssReport(values, n=len(seq) - skip, raw_seconds=seconds,
                       target=scenario["target_ess"])
    return BenchmarkRow(scenario["id"], method, cell["states"],
                        cell["tips"], cell["expected_transitions"],
                        cell["omega_multiplier"], seconds, report.min_ess,
                        report.normalized_seconds)


def run_scenarios(scenarios, progress=None):
    """All rows of all scenarios, in deterministic grid order."""
    rows = []
    for sc in scenarios:
        for cell in scenario_cells(sc):
            row = run_cell(sc, cell)
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


def write_benchmark_csv(rows, path):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv_line() + "\n")


def median_seconds_per_iteration(method, tree, rate_matrix, y, n, repeats,
                                 seed, omega_multiplier=2.0,
                                 warm_history=None):
    """Median over repeats of (sampling seconds / n); for scaling studies.

    MCMC runs emit a single summary at the end (thin = n) so the
    measurement is the sweep cost itself, not the per-sample summary
    emission.  Each repeat restarts from the warm history with fresh
    generator draws.
    """
    return interleaved_seconds_per_iteration(
        method, [(tree, rate_matrix, y, warm_history)], n, repeats, seed,
        omega_multiplier=omega_multiplier)[0]


def interleaved_seconds_per_iteration(method, instances, n, repeats, seed,
                                      omega_multiplier=2.0):
    """Per-iteration medians for several instances, repeats interleaved.

    instances is a sequence of (tree, rate_matrix, y, warm_history) tuples
    (warm_history may be None).  Each repeat cycle times every instance
    once before the next cycle starts, so slow drift in machine speed
    biases all instances alike instead of whichever one ran last; the
    median over cycles is returned per instance.  MCMC runs emit a single
    summary at the end (thin = n) so the measurement is the sweep cost
    itself, not the per-sample summary emission.
    """
    rng = np.random.default_rng(seed)
    thin = n if method.startswith("mcmc") else 1
    times = np.empty((repeats, len(instances)))
    for rep in range(repeats):
        for col, (tree, rate_matrix, y, warm_history) in enumerate(instances):
            _, seconds = timed_sampling_run(
                method, tree, rate_matrix, y, n, rng, thin=thin,
                omega_multiplier=omega_multiplier,
                warm_history=warm_history)
            times[rep, col] = seconds / n
    return [float(t) for t in np.median(times, axis=0)]


def fit_loglog_slope(sizes, seconds):
    """Least-squares slope of log(seconds) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=np.float64))
    t = np.log(np.asarray(seconds, dtype=np.float64))
    return float(np.polyfit(x, t, 1)[0])
