"""Two-kernel MCMC over augmented substitution histories.

Targets p(V, W | y) on a fixed tree: kernel 1 redraws all state labels V
conditional on the jump-time grid W (Felsenstein pass up, state sampling
down, branch interiors via cached kernel powers), kernel 2 redraws the
virtual jumps conditional on the real substitution history.  Neither
kernel forms a matrix power or exponential, so per-sweep cost is O(s^2)
dense and O(nnz) sparse for a fixed number of jumps.

The compiled single-run loop in _kernels and the step-by-step functions
here consume the RNG stream in exactly the same order, so n calls to
sweep() and one run_chain(..., n) from the same seed produce identical
chains.
"""

import numpy as np

from . import _kernels
from .history import AugmentedHistory, SummarySequence, pack_history, \
    resolve_restriction, unpack_history
from .simulate import initialize_history


class PartialLikelihoods:
    """Per-node conditional probabilities of the tip data, rescaled.

    values[j, k] is proportional to the probability of the observed tip
    states below node j given node j in state k; every internal row is
    rescaled to max 1 and log_scale[j] accumulates that node's log factor.
    Row j of the true matrix is values[j] * exp(sum of log_scale over the
    subtree rooted at j).
    """

    def __init__(self, values, log_scale):
        self.values = values
        self.log_scale = log_scale
        for a in (values, log_scale):
            a.setflags(write=False)

    def __repr__(self):
        return "PartialLikelihoods(n_nodes=%d, s=%d)" % self.values.shape


class ChainState:
    """One MCMC chain: current augmented history plus its fixed context.

    The tree, kernel, and tip data are shared immutable inputs; history,
    sweep_count, and the generator state mutate as the chain advances.
    """

    def __init__(self, history, tree, kernel, y, rng):
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (tree.n_tips,):
            raise ValueError("y must assign one state to each tip")
        if np.any(y < 0) or np.any(y >= kernel.s):
            raise ValueError("tip states out of range")
        history.validate(tree, n_states=kernel.s, tip_data=y)
        self.history = history
        self.tree = tree
        self.kernel = kernel
        self.y = y
        self.rng = rng
        self.sweep_count = 0

    def __repr__(self):
        return "ChainState(n_tips=%d, s=%d, sweeps=%d)" % (
            self.tree.n_tips, self.kernel.s, self.sweep_count)


def initialize_chain(tree, kernel, y, rng):
    """Deterministic cold start: a minimal tip-consistent history."""
    hist = initialize_history(tree, np.asarray(y, dtype=np.int64), rng)
    return ChainState(hist, tree, kernel, y, rng)


def _jump_counts(history):
    return np.array([history.n_jumps(j) for j in range(history.n_branches)],
                    dtype=np.int64)


def compute_partial_likelihoods(tree, kernel, jump_counts, y):
    """Tip-to-root pass with branch transition matrices B^{m_i}.

    Each child message is m_i successive kernel mat-vec applications to
    the child's row (never forming B^{m_i}).  Rows are rescaled to max 1
    with per-node log factors, so 100-tip trees do not underflow.
    """
    jump_counts = np.asarray(jump_counts, dtype=np.int64)
    if jump_counts.shape != (tree.n_branches,):
        raise ValueError("need one jump count per branch")
    if np.any(jump_counts < 0):
        raise ValueError("jump counts must be nonnegative")
    y = np.asarray(y, dtype=np.int64)
    s = kernel.s
    L = np.empty((tree.n_nodes, s))
    log_scale = np.empty(tree.n_nodes)
    _kernels._partials(tree.parent, tree.children, tree.postorder,
                       tree.n_tips, y, jump_counts, kernel.use_sparse,
                       kernel.b, kernel.bp, kernel.bj, kernel.bv,
                       L, log_scale, np.empty(s), np.empty(s))
    return PartialLikelihoods(L, log_scale)


def sample_root_state(partials, pi, rng):
    """Draw the root state from its conditional pi_k l_{root,k}."""
    w = np.asarray(pi, dtype=np.float64) * partials.values[-1]
    return int(_kernels._categorical(rng, w, w.shape[0]))


def sample_internal_nodes(tree, kernel, jump_counts, partials, root_state,
                          y, rng):
    """Root-to-tip draw of all node states given the jump counts.

    For a node with parent state h, the weights are row h of B^{m_i}
    (obtained as m_i transposed-kernel mat-vec applications to the
    indicator of h) times the node's partial-likelihood row.  Returns the
    full node-state vector; tips are pinned to the data.
    """
    jump_counts = np.asarray(jump_counts, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    s = kernel.s
    node_state = np.empty(tree.n_nodes, np.int64)
    node_state[tree.root] = root_state
    _kernels._sample_internal_nodes(
        tree.parent, tree.children, tree.preorder, tree.n_tips, y,
        jump_counts, kernel.use_sparse,
        kernel.bt, kernel.btp, kernel.btj, kernel.btv,
        partials.values, node_state, np.empty(s), np.empty(s), np.empty(s),
        rng)
    return node_state


def resample_virtual_jumps(history, kernel, rng):
    """Redraw the virtual jumps of a history, keeping (S, T) fixed.

    Any existing self transitions are merged away first, so the input may
    be plain or augmented.  Each maximal constant-state segment in state a
    with length t receives Poisson((omega + q_aa) t) uniformly placed
    virtual jumps.
    """
    qdiag = np.diag(kernel.rate_matrix.q)
    if np.any(kernel.omega + qdiag < 0):
        raise ValueError("omega does not dominate all exit rates")
    labels, times, offsets = pack_history(history)
    lab, tim, off = _kernels._resample_virtual(
        labels, times, offsets, history.root_state, kernel.omega,
        qdiag.copy(), rng)
    return unpack_history(lab, tim, off, history.root_state, augmented=True)


def sweep(chain):
    """One full update: kernel 1 (labels given times) then kernel 2.

    Kernel 1 leaves the per-branch time grids untouched; kernel 2 leaves
    the real substitution history untouched.  Mutates and returns chain.
    """
    tree, kernel, y, rng = chain.tree, chain.kernel, chain.y, chain.rng
    hist = chain.history
    m = _jump_counts(hist)
    partials = compute_partial_likelihoods(tree, kernel, m, y)
    root_state = sample_root_state(partials, kernel.rate_matrix.pi, rng)
    node_state = sample_internal_nodes(tree, kernel, m, partials,
                                       root_state, y, rng)
    labels = []
    for j in range(tree.n_branches):
        labels.append(sample_branch_segments(
            kernel, int(node_state[tree.parent[j]]), int(node_state[j]),
            int(m[j]), rng))
    relabeled = AugmentedHistory(labels, [t.copy() for t in hist.times],
                                 int(node_state[tree.root]))
    chain.history = resample_virtual_jumps(relabeled, kernel, rng)
    chain.sweep_count += 1
    return chain


def sample_branch_segments(kernel, parent_state, child_state, m, rng):
    """Labels of one branch's m-jump path given its endpoint states.

    Interior states d = 1..m-1 are drawn sequentially with weights
    b[prev, k] * (B^{m-d} e_child)[k]; the vectors B^j e_child for
    j = 1..m-1 are built once by successive mat-vecs, so the whole branch
    costs O(m s^2) dense or O(m nnz) sparse.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    s = kernel.s
    labels = np.empty(m + 1, np.int64)
    ecache = np.empty((max(m, 1), s))
    _kernels._fill_branch_labels(
        labels, 0, m, parent_state, child_state, kernel.use_sparse,
        kernel.b, kernel.bp, kernel.bj, kernel.bv, ecache, np.empty(s), rng)
    return labels


def run_chain(chain, n_sweeps, thin=1, restrict_to=None, sink=None):
    """Advance the chain n_sweeps sweeps, emitting summaries every thin.

    Summaries restrict dwell times and transition counts to restrict_to
    (default: the states observed in the tip data) but always carry the
    full-history log density.  Returns a sequence of HistorySummary; the
    chain is mutated in place.  Deterministic given the chain's generator
    state.
    """
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be >= 1")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    tree, kernel = chain.tree, chain.kernel
    s = kernel.s
    states, obs_map = resolve_restriction(restrict_to, chain.y, s)
    r = len(states)
    n_keep = n_sweeps // thin
    dwell = np.empty((n_keep, r))
    counts = np.empty((n_keep, r, r), np.int64)
    logp = np.empty(n_keep)
    labels, times, offsets = pack_history(chain.history)
    lab, tim, off, root_state = _kernels._mcmc_run(
        tree.parent, tree.children, tree.postorder, tree.preorder,
        tree.n_tips, kernel.rate_matrix.q, kernel.rate_matrix.pi,
        kernel.omega, kernel.use_sparse,
        kernel.b, kernel.bp, kernel.bj, kernel.bv,
        kernel.bt, kernel.btp, kernel.btj, kernel.btv,
        chain.y, obs_map, labels, times, offsets, chain.history.root_state,
        n_sweeps, thin, chain.rng, dwell, counts, logp)
    chain.history = unpack_history(lab, tim, off, int(root_state),
                                   augmented=True)
    chain.sweep_count += n_sweeps
    out = SummarySequence(states, dwell, counts, logp)
    if sink is not None:
        for item in out:
            sink(item)
    return out


