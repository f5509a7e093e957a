"""Forward simulation of trait histories and construction of start states."""

import numpy as np

from .history import AugmentedHistory, SubstitutionHistory


def _categorical(probs, rng):
    return int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum()))


def simulate_history(tree, rate_matrix, rng):
    """Evolve a trait down the tree under (q, pi) by the Gillespie algorithm.

    The root state is drawn from the rate matrix's root distribution; along
    each branch the chain holds in state k for an Exp(|q_kk|) time and then
    jumps to h != k with probability q_kh / |q_kk|.  A state with zero exit
    rate holds to the end of the branch.

    Returns
    -------
    (SubstitutionHistory, tip states int array)
    """
    q = rate_matrix.q
    exit_rate = -q.diagonal()
    node_state = np.empty(tree.n_nodes, dtype=np.int64)
    node_state[tree.root] = _categorical(rate_matrix.pi, rng)

    labels = [None] * tree.n_branches
    times = [None] * tree.n_branches
    for j in tree.preorder[1:]:
        state = node_state[tree.parent[j]]
        remaining = tree.branch_length[j]
        lab, tim = [state], []
        while True:
            rate = exit_rate[state]
            wait = rng.exponential(1.0 / rate) if rate > 0 else np.inf
            if wait >= remaining:
                tim.append(remaining)
                break
            tim.append(wait)
            remaining -= wait
            row = q[state].copy()
            row[state] = 0.0
            state = _categorical(row, rng)
            lab.append(state)
        labels[j], times[j] = lab, tim
        node_state[j] = state
    history = SubstitutionHistory(labels, times, node_state[tree.root])
    return history, node_state[: tree.n_tips].copy()


def initialize_history(tree, y, rng):
    """Cheap valid starting history consistent with the observed tips.

    The root (and every internal node) is assigned the state of tip 0;
    each tip branch whose observed state differs gets a single transition
    at the branch midpoint.  Deterministic given y; the rng argument is
    accepted for signature uniformity with simulate_history.
    """
    del rng
    root_state = int(y[0])
    labels = [None] * tree.n_branches
    times = [None] * tree.n_branches
    for j in range(tree.n_branches):
        beta = tree.branch_length[j]
        if j < tree.n_tips and y[j] != root_state:
            labels[j] = [root_state, int(y[j])]
            times[j] = [beta / 2, beta / 2]
        else:
            labels[j] = [root_state]
            times[j] = [beta]
    return AugmentedHistory(labels, times, root_state)
