"""
Trees, rate matrices, and forward simulation
============================================

Parse a Newick tree, build a substitution model, simulate a complete
substitution history along the tree, and inspect its summary statistics.
"""

import numpy as np

from stochmap import (build_equal_rates, parse_newick,
                      scale_to_expected_transitions, simulate_history,
                      simulate_yule_tree, summarize, total_tree_length)

# ---------------------------------------------------------------- parsing
# A rooted binary tree in Newick notation.  Tips are numbered 0..n-1 in
# the order they appear; internal nodes follow, with the root last.
tree = parse_newick("((A:0.4,B:0.6):0.3,(C:0.5,D:0.2):0.7);")
print("tips           :", tree.tip_labels)
print("branches       :", tree.n_branches)
print("total length   : %.2f" % total_tree_length(tree))
print("postorder      :", [int(v) for v in tree.postorder])

# ------------------------------------------------------------- the model
# Equal exchange rates among 4 states, scaled so that about two
# substitutions are expected over the whole tree.
rm = scale_to_expected_transitions(build_equal_rates(4), tree, 2.0)
print("\nrate matrix (scaled):")
print(np.array_str(rm.q, precision=3))
print("stationary distribution:", rm.pi)

# --------------------------------------------------------- a random tree
# Yule (pure-birth) trees give variable branch lengths for experiments.
rng = np.random.default_rng(7)
big = simulate_yule_tree(20, 1.0, rng)
print("\nYule tree: %d tips, length %.2f" % (big.n_tips,
                                             total_tree_length(big)))

# ------------------------------------------------------------ simulation
# Gillespie simulation from a stationary root draw.  The history records
# the state sequence and holding times along every branch; y holds the
# resulting tip states (the "observed data" for the samplers).
history, y = simulate_history(tree, rm, rng)
print("\nroot state     :", history.root_state)
print("tip states     :", dict(zip(tree.tip_labels, map(int, y))))
for j in range(tree.n_branches):
    lab = history.labels[j]
    tim = history.times[j]
    seg = ", ".join("%d for %.3f" % (a, t) for a, t in zip(lab, tim))
    print("branch %d path  : %s" % (j, seg))

# ------------------------------------------------------------- summaries
# Sufficient statistics: dwell time per state, ordered transition counts,
# and the joint log-density log p(S, T) of the history under the model.
summ = summarize(history, rm)
print("\ndwell times    :", np.round(summ.dwell, 3))
print("jump counts    :\n", summ.counts)
print("log p(S, T)    : %.4f" % summ.log_density)
