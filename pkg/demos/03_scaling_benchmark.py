"""
Scaling of the samplers with state-space size
=============================================

Time one MCMC sweep and one exponentiation-based draw across a grid of
state counts, fit log-log slopes, and repeat with the CSR kernels on a
banded model where sparsity pays off.  Repeat cycles are interleaved
across sizes so slow drift in machine speed cancels in the slopes.
"""

import numpy as np

from stochmap import (build_equal_rates, build_tridiagonal,
                      fit_loglog_slope, interleaved_seconds_per_iteration,
                      scale_to_expected_transitions, simulate_history,
                      simulate_yule_tree)


def make_instance(build, s, seed):
    rng = np.random.default_rng(seed)
    tree = simulate_yule_tree(20, 1.0, rng)
    rm = scale_to_expected_transitions(build(s), tree, 2.0)
    history, y = simulate_history(tree, rm, rng)
    return tree, rm, y, history

# ------------------------------------------------------- dense scaling
# Equal-rates models of growing size on a fixed 20-tip tree.  The MCMC
# sweep is built from matrix-vector products against the uniformized
# kernel (at worst quadratic in the state count), while every
# exponentiation draw rebuilds all per-branch transition matrices with
# two dense matrix products each (cubic).
sizes = [10, 20, 40, 60]
grid = [make_instance(build_equal_rates, s, 40 + s) for s in sizes]
t_mcmc = interleaved_seconds_per_iteration(
    "mcmc", grid, n=200, repeats=3, seed=1)
t_exp = interleaved_seconds_per_iteration(
    "exp", [(tr, rm, y, None) for tr, rm, y, _ in grid],
    n=400, repeats=3, seed=2)

print("dense model, 20 tips")
print("%8s %16s %16s" % ("states", "mcmc us/sweep", "exp us/draw"))
for s, tm, te in zip(sizes, t_mcmc, t_exp):
    print("%8d %16.1f %16.1f" % (s, tm * 1e6, te * 1e6))
print("%8s %16.2f %16.2f" % ("slope", fit_loglog_slope(sizes, t_mcmc),
                             fit_loglog_slope(sizes, t_exp)))

# ------------------------------------------------------ sparse scaling
# A tridiagonal (birth-death-like) model keeps only 2s - 2 allowed
# transitions, so the CSR kernels touch O(s) entries per product where
# the dense kernels touch s^2.  Dense storage of the same chain is timed
# alongside for contrast; both samplers target the identical posterior.
sparse_sizes = [50, 100, 200, 300]
sparse_grid = [make_instance(build_tridiagonal, s, 70 + s)
               for s in sparse_sizes]
t_dense = interleaved_seconds_per_iteration(
    "mcmc", sparse_grid, n=200, repeats=3, seed=3)
t_csr = interleaved_seconds_per_iteration(
    "mcmc-sparse", sparse_grid, n=200, repeats=3, seed=3)

print("\nbanded model, 20 tips")
print("%8s %16s %16s" % ("states", "dense us/sweep", "csr us/sweep"))
for s, td, tc in zip(sparse_sizes, t_dense, t_csr):
    print("%8d %16.1f %16.1f" % (s, td * 1e6, tc * 1e6))
print("%8s %16.2f %16.2f" % ("slope",
                             fit_loglog_slope(sparse_sizes, t_dense),
                             fit_loglog_slope(sparse_sizes, t_csr)))
