"""Substitution histories on a tree and their sufficient statistics.

A history stores, for every branch, the sequence of visited state labels
and the time spent in each before the next jump.  Plain histories forbid
self transitions; augmented histories allow them (a repeated adjacent
label marks a virtual jump of the uniformized chain, so virtual-jump
positions are derived rather than stored).  Branch arrays are indexed by
the branch's child node id; the root carries its own state.
"""

import csv
import json

import numpy as np


class _History:
    """Shared storage: per-branch label/time arrays plus the root state."""

    allow_self_transitions = None  # overridden

    def __init__(self, labels, times, root_state):
        if len(labels) != len(times):
            raise ValueError("labels and times must cover the same branches")
        self.labels = []
        self.times = []
        for lab, tim in zip(labels, times):
            lab = np.asarray(lab, dtype=np.int64)
            tim = np.asarray(tim, dtype=np.float64)
            if lab.ndim != 1 or lab.shape != tim.shape or lab.size == 0:
                raise ValueError(
                    "each branch needs matching, nonempty label/time arrays")
            self.labels.append(lab)
            self.times.append(tim)
        self.root_state = int(root_state)

    @property
    def n_branches(self):
        return len(self.labels)

    def n_jumps(self, branch):
        """Number of jumps (real plus any virtual) on a branch."""
        return self.labels[branch].size - 1

    def total_jumps(self):
        return sum(lab.size - 1 for lab in self.labels)

    def node_states(self, tree):
        """State at every node: final state of its branch; root as stored."""
        states = np.empty(tree.n_nodes, dtype=np.int64)
        for j in range(tree.n_nodes - 1):
            states[j] = self.labels[j][-1]
        states[tree.root] = self.root_state
        return states

    def dwell_times(self, n_states):
        """Total time spent in each state across all branches."""
        all_labels = np.concatenate(self.labels)
        if all_labels.size and all_labels.max() >= n_states:
            raise ValueError("state index out of range")
        return np.bincount(all_labels, weights=np.concatenate(self.times),
                           minlength=n_states)

    def validate(self, tree, n_states=None, tip_data=None, tol=1e-9):
        """Check structural invariants against the tree; raises ValueError.

        Verifies branch coverage, per-branch time sums against branch
        lengths, start-state continuity across nodes, the self-transition
        rule of the concrete class, state-index bounds when n_states is
        given, and tip-branch final states when tip_data is given.
        """
        if self.n_branches != tree.n_branches:
            raise ValueError("history covers %d branches, tree has %d"
                             % (self.n_branches, tree.n_branches))
        states = self.node_states(tree)
        for j in range(tree.n_branches):
            lab, tim = self.labels[j], self.times[j]
            if np.any(tim < 0):
                raise ValueError("negative segment time on branch %d" % j)
            if abs(tim.sum() - tree.branch_length[j]) > tol:
                raise ValueError(
                    "branch %d times sum to %r, branch length %r"
                    % (j, tim.sum(), tree.branch_length[j]))
            if not self.allow_self_transitions and lab.size > 1:
                if np.any(lab[1:] == lab[:-1]):
                    raise ValueError("self transition on branch %d" % j)
            if n_states is not None:
                if lab.min() < 0 or lab.max() >= n_states:
                    raise ValueError("state index out of range on branch %d" % j)
            if lab[0] != states[tree.parent[j]]:
                raise ValueError(
                    "branch %d starts in state %d but its parent node is in "
                    "state %d" % (j, lab[0], states[tree.parent[j]]))
        if tip_data is not None:
            for tip in range(tree.n_tips):
                if self.labels[tip][-1] != tip_data[tip]:
                    raise ValueError(
                        "tip %d ends in state %d, observed %d"
                        % (tip, self.labels[tip][-1], tip_data[tip]))
        if n_states is not None and not 0 <= self.root_state < n_states:
            raise ValueError("root state out of range")

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        return (
            self.root_state == other.root_state
            and len(self.labels) == len(other.labels)
            and all(np.array_equal(a, b)
                    for a, b in zip(self.labels, other.labels))
            and all(np.array_equal(a, b)
                    for a, b in zip(self.times, other.times))
        )

    def __repr__(self):
        return "%s(n_branches=%d, jumps=%d)" % (
            type(self).__name__, self.n_branches, self.total_jumps())


class SubstitutionHistory(_History):
    """History whose consecutive labels always differ (real jumps only)."""

    allow_self_transitions = False


class AugmentedHistory(_History):
    """History that may contain virtual jumps (repeated adjacent labels)."""

    allow_self_transitions = True

    def virtual_jump_positions(self, branch):
        """Indices d with v_{d-1} == v_d on the branch."""
        lab = self.labels[branch]
        return np.flatnonzero(lab[1:] == lab[:-1]) + 1

    def total_virtual_jumps(self):
        return int(sum(self.virtual_jump_positions(j).size
                       for j in range(self.n_branches)))


def as_augmented(history):
    """View a plain history as an augmented one (no virtual jumps yet)."""
    return AugmentedHistory(history.labels, history.times, history.root_state)


def drop_virtual_jumps(history):
    """Merge adjacent equal-state segments, summing their times.

    Returns a SubstitutionHistory; branch time sums are preserved (each
    output segment is the left-to-right sum of the segments it merges).
    Idempotent, and dwell times are unchanged.
    """
    labels_out, times_out = [], []
    for lab, tim in zip(history.labels, history.times):
        keep_lab = [lab[0]]
        keep_tim = [tim[0]]
        for d in range(1, lab.size):
            if lab[d] == keep_lab[-1]:
                keep_tim[-1] += tim[d]
            else:
                keep_lab.append(lab[d])
                keep_tim.append(tim[d])
        labels_out.append(keep_lab)
        times_out.append(keep_tim)
    return SubstitutionHistory(labels_out, times_out, history.root_state)


class HistorySummary:
    """Sufficient statistics of one history: dwell, counts, log-density.

    states : int array — the state indices the rows of dwell/counts refer
    to (all states, or the restriction set in its given order).
    dwell : float array — time spent in each listed state over the tree.
    counts : int matrix — counts[a, b] is the number of jumps from
    states[a] to states[b] (ordered pairs).
    log_density : float — log p of the history under (q, pi), see
    summarize.
    """

    def __init__(self, states, dwell, counts, log_density):
        self.states = np.asarray(states, dtype=np.int64)
        self.dwell = np.asarray(dwell, dtype=np.float64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.log_density = float(log_density)
        for a in (self.states, self.dwell, self.counts):
            a.setflags(write=False)

    def __repr__(self):
        return "HistorySummary(states=%s, jumps=%d)" % (
            list(self.states), int(self.counts.sum()))


def summarize(history, rate_matrix, restrict_to=None):
    """Sufficient statistics and joint log-density of a history.

    log p = log pi(root state) + sum over segments of q_aa * t
    + sum over real jumps of log q_ab.  Virtual jumps (repeated labels)
    are not counted as jumps and contribute no log-rate term, so the
    density is that of the plain history embedded in an augmented one.

    restrict_to limits the returned dwell vector and count matrix to the
    given states (in the given order); the log-density always covers the
    full history.
    """
    q = rate_matrix.q
    s = rate_matrix.s
    dwell = np.zeros(s)
    counts = np.zeros((s, s), dtype=np.int64)
    logp = np.log(rate_matrix.pi[history.root_state])
    for lab, tim in zip(history.labels, history.times):
        if lab.min() < 0 or lab.max() >= s:
            raise ValueError("state index out of range")
        dwell += np.bincount(lab, weights=tim, minlength=s)
        logp += float(np.sum(q[lab, lab] * tim))
        jumps = lab[1:] != lab[:-1]
        frm, to = lab[:-1][jumps], lab[1:][jumps]
        np.add.at(counts, (frm, to), 1)
        if frm.size:
            logp += float(np.sum(np.log(q[frm, to])))
    if restrict_to is None:
        states = np.arange(s)
    else:
        states = np.asarray(list(restrict_to), dtype=np.int64)
        dwell = dwell[states]
        counts = counts[np.ix_(states, states)]
    return HistorySummary(states, dwell, counts, logp)


def resolve_restriction(restrict_to, y, s):
    """Resolve a restriction request to (states tuple, state -> slot map).

    None means the states observed in the tip data y, in ascending order.
    The map sends each of the s states to its slot or to -1 if excluded.
    """
    if restrict_to is None:
        states = [int(v) for v in np.unique(y)]
    else:
        states = [int(v) for v in restrict_to]
        if len(set(states)) != len(states):
            raise ValueError("restrict_to contains duplicates")
    obs_map = np.full(s, -1, np.int64)
    for i, v in enumerate(states):
        if not 0 <= v < s:
            raise ValueError("state %d out of range" % v)
        obs_map[v] = i
    return tuple(states), obs_map


class SummarySequence:
    """Array-backed immutable sequence of HistorySummary emissions.

    Samplers emit dwell/count/log-density rows directly into shared
    arrays; element access materializes individual HistorySummary values.
    """

    def __init__(self, states, dwell, counts, log_density):
        self.states = states
        self.dwell = dwell
        self.counts = counts
        self.log_density = log_density
        for a in (dwell, counts, log_density):
            a.setflags(write=False)

    def __len__(self):
        return self.dwell.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            # array-style slicing: a view-backed subsequence, not a copy
            return SummarySequence(self.states, self.dwell[i],
                                   self.counts[i], self.log_density[i])
        return HistorySummary(self.states, self.dwell[i].copy(),
                              self.counts[i].copy(),
                              float(self.log_density[i]))

    def __repr__(self):
        return "SummarySequence(n=%d, states=%s)" % (len(self), self.states)


# ------------------------------------------------------------------ file IO


def history_to_json(history):
    """Serialize a history to a JSON string (exact float round-trip)."""
    kind = ("augmented" if isinstance(history, AugmentedHistory)
            else "substitution")
    doc = {
        "kind": kind,
        "root_state": history.root_state,
        "branches": [
            {"labels": lab.tolist(), "times": [t.hex() for t in tim]}
            for lab, tim in zip(history.labels, history.times)
        ],
    }
    return json.dumps(doc)


def history_from_json(text):
    doc = json.loads(text)
    labels = [b["labels"] for b in doc["branches"]]
    times = [[float.fromhex(t) for t in b["times"]] for b in doc["branches"]]
    cls = AugmentedHistory if doc["kind"] == "augmented" else SubstitutionHistory
    return cls(labels, times, doc["root_state"])


def write_history_file(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(history_to_json(history) + "\n")


def read_history_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return history_from_json(fh.read())


def write_summary_csv(summaries, path):
    """One row per summary: dwell columns, count columns, log-density.

    All summaries must share the same state list (same restriction).
    """
    summaries = list(summaries)
    if not summaries:
        raise ValueError("no summaries to write")
    states = summaries[0].states
    for sm in summaries:
        if not np.array_equal(sm.states, states):
            raise ValueError("summaries restrict to different state sets")
    header = (["dwell_%d" % k for k in states]
              + ["count_%d_%d" % (a, b) for a in states for b in states]
              + ["log_density"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sm in summaries:
            writer.writerow(
                [repr(float(x)) for x in sm.dwell]
                + [int(c) for c in sm.counts.ravel()]
                + [repr(sm.log_density)])


# -------------------------------------------------- tip data and packing


def read_tip_data(path, tree):
    """Two-column CSV (tip label, state index) -> int array over tips."""
    y = np.full(tree.n_tips, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            label, state = row[0].strip(), int(row[1])
            y[tree.tip_index(label)] = state
    if np.any(y < 0):
        missing = [tree.tip_labels[i] for i in np.flatnonzero(y < 0)]
        raise ValueError("no state for tips: %s" % ", ".join(missing))
    return y


def write_tip_data(y, tree, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for tip in range(tree.n_tips):
            writer.writerow([tree.tip_labels[tip], int(y[tip])])


def pack_history(history):
    """Flatten to (labels, times, offsets) ragged arrays for compiled code.

    Branch j's segments live in labels[offsets[j]:offsets[j+1]] and the
    matching times slice.
    """
    sizes = np.array([lab.size for lab in history.labels], dtype=np.int64)
    offsets = np.zeros(sizes.size + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    labels = (np.concatenate(history.labels) if sizes.size
              else np.empty(0, dtype=np.int64))
    times = (np.concatenate(history.times) if sizes.size
             else np.empty(0, dtype=np.float64))
    return labels, times, offsets


def unpack_history(labels, times, offsets, root_state, augmented=True):
    """Inverse of pack_history."""
    labs, tims = [], []
    for j in range(offsets.size - 1):
        labs.append(labels[offsets[j]:offsets[j + 1]].copy())
        tims.append(times[offsets[j]:offsets[j + 1]].copy())
    cls = AugmentedHistory if augmented else SubstitutionHistory
    return cls(labs, tims, root_state)
