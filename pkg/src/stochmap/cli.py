"""Command line: simulate data sets, run samplers, benchmark grids.

Three subcommands, designed to chain through files::

    stochmap simulate --tips 50 --states 4 --expected-transitions 2 \\
        --seed 1 --out-dir data/
    stochmap sample --tree data/tree.nwk --tip-data data/tips.csv \\
        --rates data/rates.txt --method mcmc --sweeps 100000 --thin 10 \\
        --seed 2 --out-dir run/
    stochmap benchmark --scenario scenario.json --out results.csv

simulate writes four files into --out-dir: tree.nwk (Newick),
tips.csv (tip label, state index), history.json (the simulated full
history), and rates.txt (the resolved rate matrix, square text format).
sample writes samples.csv (one row per retained sample: dwell, counts,
log-density) and ess.json (an EssReport with raw and ESS-normalized
seconds).  benchmark writes one CSV row per scenario grid cell; the
scenario JSON schema is documented in the benchmark module.
"""

import argparse
import os
import sys

import numpy as np

from . import benchmark as bench
from .ctmc import (build_equal_rates, build_gy94, build_tridiagonal,
                   load_rate_file, scale_to_expected_transitions,
                   write_rate_file)
from .diagnostics import EssReport, ess, monitored_statistics
from .history import (read_history_file, read_tip_data, write_history_file,
                      write_summary_csv, write_tip_data)
from .simulate import simulate_history
from .tree import read_newick_file, simulate_yule_tree, write_newick_file


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochmap",
        description="Posterior sampling of substitution histories on trees.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser(
        "simulate",
        help="simulate a tree, a substitution history, and tip data")
    sim.add_argument("--tips", type=int, required=True,
                     help="number of tips of the simulated Yule tree")
    sim.add_argument("--states", type=int,
                     help="state count (equal/tridiag models only)")
    sim.add_argument("--model", default="equal",
                     choices=["equal", "tridiag", "gy94", "file"])
    sim.add_argument("--expected-transitions", type=float, default=None,
                     help="rescale the rate matrix so the expected "
                          "substitution count on the tree equals this")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--birth-rate", type=float, default=1.0)
    sim.add_argument("--kappa", type=float, default=2.0,
                     help="gy94 transition/transversion ratio")
    sim.add_argument("--omega", type=float, default=0.5,
                     help="gy94 nonsynonymous/synonymous ratio")
    sim.add_argument("--pi-file",
                     help="gy94 codon frequencies, 61 numbers "
                          "(default: uniform)")
    sim.add_argument("--rate-file",
                     help="rate matrix file for --model file")
    sim.set_defaults(func=cmd_simulate)

    sam = sub.add_parser(
        "sample",
        help="sample substitution histories given tree, tips, and rates")
    sam.add_argument("--tree", required=True, help="Newick file")
    sam.add_argument("--tip-data", required=True,
                     help="CSV of (tip label, state index)")
    sam.add_argument("--rates", required=True, help="rate matrix file")
    sam.add_argument("--method", required=True, choices=list(bench.METHODS))
    sam.add_argument("--omega-multiplier", type=float, default=2.0,
                     help="uniformization rate as a multiple of the "
                          "largest exit rate; must exceed 1")
    sam.add_argument("--sweeps", type=int,
                     help="MCMC sweeps (mcmc methods)")
    sam.add_argument("--draws", type=int,
                     help="independent draws (exp methods)")
    sam.add_argument("--thin", type=int, default=1,
                     help="keep every thin-th MCMC sweep")
    sam.add_argument("--seed", type=int, required=True)
    sam.add_argument("--warm-start", default="false",
                     choices=["true", "false"],
                     help="start the chain from the history in --history "
                          "instead of a cold deterministic start")
    sam.add_argument("--history",
                     help="history JSON for --warm-start true")
    sam.add_argument("--burn-in", type=float, default=0.1,
                     help="fraction of retained MCMC samples excluded "
                          "from ESS estimation (ignored for exp methods)")
    sam.add_argument("--target-ess", type=int, default=10_000,
                     help="effective-sample target for time normalization")
    sam.add_argument("--out-dir", required=True)
    sam.set_defaults(func=cmd_sample)

    ben = sub.add_parser(
        "benchmark", help="run a scenario grid and write timing CSV")
    ben.add_argument("--scenario", required=True,
                     help="scenario JSON file (see the benchmark module "
                          "docstring for the schema)")
    ben.add_argument("--out", required=True, help="output CSV path")
    ben.set_defaults(func=cmd_benchmark)
    return parser


def cmd_simulate(args):
    if args.model in ("gy94", "file") and args.states is not None:
        raise ValueError("--states cannot be combined with --model %s"
                         % args.model)
    if args.model in ("equal", "tridiag") and args.states is None:
        raise ValueError("--model %s requires --states" % args.model)
    if args.model == "file" and not args.rate_file:
        raise ValueError("--model file requires --rate-file")
    if args.tips < 2:
        raise ValueError("--tips must be >= 2")

    rng = np.random.default_rng(args.seed)
    tree = simulate_yule_tree(args.tips, args.birth_rate, rng)
    if args.model == "equal":
        rm = build_equal_rates(args.states)
    elif args.model == "tridiag":
        rm = build_tridiagonal(args.states)
    elif args.model == "gy94":
        if args.pi_file:
            freqs = np.loadtxt(args.pi_file, dtype=np.float64).ravel()
        else:
            freqs = np.full(61, 1.0 / 61)
        rm = build_gy94(args.kappa, args.omega, freqs)
    else:
        rm = load_rate_file(args.rate_file)
    if args.expected_transitions is not None:
        rm = scale_to_expected_transitions(rm, tree,
                                           args.expected_transitions)
    history, y = simulate_history(tree, rm, rng)

    os.makedirs(args.out_dir, exist_ok=True)
    paths = {name: os.path.join(args.out_dir, name)
             for name in ("tree.nwk", "tips.csv", "history.json",
                          "rates.txt")}
    write_newick_file(tree, paths["tree.nwk"])
    write_tip_data(y, tree, paths["tips.csv"])
    write_history_file(history, paths["history.json"])
    write_rate_file(rm, paths["rates.txt"])
    for path in paths.values():
        print(path)
    return 0


def cmd_sample(args):
    is_mcmc = args.method.startswith("mcmc")
    if is_mcmc:
        if args.sweeps is None or args.draws is not None:
            raise ValueError("MCMC methods take --sweeps, not --draws")
        if not args.omega_multiplier > 1.0:
            raise ValueError("--omega-multiplier must exceed 1")
        n = args.sweeps
    else:
        if args.draws is None or args.sweeps is not None:
            raise ValueError("exp methods take --draws, not --sweeps")
        if args.thin != 1:
            raise ValueError("exp draws are independent; --thin must be 1")
        if args.warm_start == "true":
            raise ValueError("--warm-start applies to MCMC methods only")
        n = args.draws
    if args.warm_start == "true" and not args.history:
        raise ValueError("--warm-start true requires --history")
    if not 0.0 <= args.burn_in < 1.0:
        raise ValueError("--burn-in must lie in [0, 1)")

    tree = read_newick_file(args.tree)
    y = read_tip_data(args.tip_data, tree)
    rm = load_rate_file(args.rates)
    rng = np.random.default_rng(args.seed)
    warm = (read_history_file(args.history)
            if args.warm_start == "true" else None)
    seq, seconds = bench.timed_sampling_run(
        args.method, tree, rm, y, n, rng, thin=args.thin,
        omega_multiplier=args.omega_multiplier, warm_history=warm)

    os.makedirs(args.out_dir, exist_ok=True)
    samples_path = os.path.join(args.out_dir, "samples.csv")
    report_path = os.path.join(args.out_dir, "ess.json")
    write_summary_csv(seq, samples_path)

    stats = monitored_statistics(seq, y)
    skip = int(np.ceil(args.burn_in * len(seq))) if is_mcmc else 0
    values = {name: ess(series[skip:]) for name, series in stats.items()}
    report = EssReport(values, n=len(seq) - skip, raw_seconds=seconds,
                       target=args.target_ess)
    with open(report_path, "w") as fh:
        fh.write(report.to_json() + "\n")

    print(samples_path)
    print(report_path)
    print("retained %d samples in %.3fs; min ESS %.1f; "
          "%.3fs per %d effective samples"
          % (len(seq), seconds, report.min_ess,
             report.normalized_seconds, args.target_ess))
    return 0


def cmd_benchmark(args):
    scenarios = bench.load_scenario_file(args.scenario)

    def progress(row):
        print(row.as_csv_line(), file=sys.stderr)

    rows = bench.run_scenarios(scenarios, progress=progress)
    bench.write_benchmark_csv(rows, args.out)
    print(args.out)
    print("%d rows" % len(rows))
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
