"""Rooted binary phylogenies with branch lengths.

Trees are stored in flat arrays for fast traversal.  Node identifiers are
dense integers 0..2n-2: the n tips occupy the prefix 0..n-1 (numbered in
order of first appearance), internal nodes are numbered n..2n-2 in the
order they are completed by a postorder traversal, so every internal node
has a larger id than both of its children and the root is always 2n-2.
The branch above node j is identified with j itself; the root carries no
branch.
"""

import sys
import warnings

import numpy as np


class NewickError(ValueError):
    """Malformed Newick input; carries the character offset of the problem."""

    def __init__(self, message, position):
        super().__init__("%s (at character %d)" % (message, position))
        self.position = position


class Phylogeny:
    """Immutable rooted binary tree with strictly positive branch lengths.

    Parameters
    ----------
    parent : int array, shape (2n-1,)
        parent[j] is the parent node of j; parent[root] = -1.
    children : int array, shape (2n-1, 2)
        Child node ids for internal nodes; (-1, -1) for tips.
    branch_length : float array, shape (2n-1,)
        Length of the branch above each node; the root entry is 0.
    tip_labels : sequence of str, length n
        Labels for tips 0..n-1.
    """

    def __init__(self, parent, children, branch_length, tip_labels):
        parent = np.asarray(parent, dtype=np.int64)
        children = np.asarray(children, dtype=np.int64)
        branch_length = np.asarray(branch_length, dtype=np.float64)
        tip_labels = list(tip_labels)

        n_tips = len(tip_labels)
        n_nodes = 2 * n_tips - 1
        if parent.shape != (n_nodes,) or children.shape != (n_nodes, 2):
            raise ValueError("array shapes inconsistent with %d tips" % n_tips)
        if branch_length.shape != (n_nodes,):
            raise ValueError("branch_length has wrong shape")

        root = n_nodes - 1
        if parent[root] != -1:
            raise ValueError("node %d must be the root (parent -1)" % root)
        if np.any(parent[:root] < 0) or np.any(parent[:root] >= n_nodes):
            raise ValueError("non-root nodes must have a valid parent")
        for j in range(n_tips):
            if children[j, 0] != -1 or children[j, 1] != -1:
                raise ValueError("tip node %d must not have children" % j)
        for j in range(n_tips, n_nodes):
            c0, c1 = children[j]
            if c0 < 0 or c1 < 0:
                raise ValueError("internal node %d must have 2 children" % j)
            if c0 >= j or c1 >= j:
                raise ValueError(
                    "children of node %d must have smaller ids (postorder numbering)" % j
                )
            if parent[c0] != j or parent[c1] != j:
                raise ValueError("parent/children arrays disagree at node %d" % j)
        if np.any(branch_length[:root] <= 0):
            raise ValueError("branch lengths must be strictly positive")
        if not np.all(np.isfinite(branch_length)):
            raise ValueError("branch lengths must be finite")
        if len(set(tip_labels)) != n_tips:
            raise ValueError("tip labels must be unique")

        self.n_tips = n_tips
        self.n_nodes = n_nodes
        self.root = root
        self.parent = parent
        self.children = children
        self.branch_length = branch_length
        self.tip_labels = tip_labels
        self.postorder = self._postorder()
        self.preorder = self.postorder[::-1].copy()
        for a in (self.parent, self.children, self.branch_length,
                  self.postorder, self.preorder):
            a.setflags(write=False)

    def _postorder(self):
        # Iterative DFS; children pushed right-first so the left child is
        # visited first.  Every node appears after both of its children.
        order = np.empty(self.n_nodes, dtype=np.int64)
        stack = [(self.root, False)]
        k = 0
        while stack:
            node, done = stack.pop()
            if done or self.children[node, 0] == -1:
                order[k] = node
                k += 1
            else:
                stack.append((node, True))
                stack.append((self.children[node, 1], False))
                stack.append((self.children[node, 0], False))
        return order

    @property
    def n_branches(self):
        return self.n_nodes - 1

    def tip_index(self, label):
        return self.tip_labels.index(label)

    def __eq__(self, other):
        if not isinstance(other, Phylogeny):
            return NotImplemented
        return (
            self.tip_labels == other.tip_labels
            and np.array_equal(self.parent, other.parent)
            and np.array_equal(self.children, other.children)
            and np.array_equal(self.branch_length, other.branch_length)
        )

    def __repr__(self):
        return "Phylogeny(n_tips=%d, total_length=%g)" % (
            self.n_tips, total_tree_length(self))


def total_tree_length(tree):
    """Sum of all branch lengths of the tree."""
    return float(tree.branch_length.sum())


def parse_newick(text):
    """Parse a rooted, strictly bifurcating Newick string into a Phylogeny.

    Every non-root edge must carry a strictly positive branch length.  A
    length on the root edge is ignored with a warning.  Tip ids are assigned
    in order of appearance; internal ids in postorder completion order.

    Raises
    ------
    NewickError
        On malformed syntax, polytomies, unlabeled or duplicate tips, and
        missing or non-positive branch lengths; the error message carries
        the character offset.
    """
    s = text.strip()
    if not s.endswith(";"):
        raise NewickError("Newick string must end with ';'", len(text) - 1)
    s = s[:-1]

    pos = 0

    def skip_ws():
        nonlocal pos
        while pos < len(s) and s[pos].isspace():
            pos += 1

    def read_label():
        nonlocal pos
        start = pos
        while pos < len(s) and s[pos] not in "(),:;":
            pos += 1
        return s[start:pos].strip()

    def read_length():
        # returns None when no ':' is present
        nonlocal pos
        skip_ws()
        if pos >= len(s) or s[pos] != ":":
            return None
        pos += 1
        start = pos
        while pos < len(s) and s[pos] not in "(),:;":
            pos += 1
        token = s[start:pos].strip()
        try:
            return float(token)
        except ValueError:
            raise NewickError("invalid branch length %r" % token, start) from None

    # Parsed tips/internals; children recorded per internal with tmp ids.
    # Tips: (label,); internals: (child_a, child_b) as ("t"/"i", index).
    tip_labels = []
    internal_children = []

    def parse_clade():
        nonlocal pos
        skip_ws()
        if pos < len(s) and s[pos] == "(":
            open_pos = pos
            pos += 1
            first = parse_clade()
            skip_ws()
            if pos >= len(s) or s[pos] != ",":
                raise NewickError("expected ',' in clade", pos)
            pos += 1
            second = parse_clade()
            skip_ws()
            if pos < len(s) and s[pos] == ",":
                raise NewickError("polytomy: clades must be bifurcating", pos)
            if pos >= len(s) or s[pos] != ")":
                raise NewickError("unbalanced '(' in clade", open_pos)
            pos += 1
            read_label()  # optional internal label, discarded
            internal_children.append((first, second))
            ref = ("i", len(internal_children) - 1)
        else:
            label_pos = pos
            label = read_label()
            if not label:
                raise NewickError("tip without a label", label_pos)
            if label in tip_labels:
                raise NewickError("duplicate tip label %r" % label, label_pos)
            tip_labels.append(label)
            ref = ("t", len(tip_labels) - 1)
        length_pos = pos
        length = read_length()
        return ref, length, length_pos

    root_ref, root_length, _ = parse_clade()
    skip_ws()
    if pos != len(s):
        raise NewickError("trailing characters after tree", pos)
    if root_ref[0] == "t":
        raise NewickError("a tree needs at least two tips", 0)
    if root_length is not None:
        warnings.warn("root edge length %g ignored" % root_length)

    n_tips = len(tip_labels)
    n_nodes = 2 * n_tips - 1
    parent = np.full(n_nodes, -1, dtype=np.int64)
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    blen = np.zeros(n_nodes, dtype=np.float64)

    # Internal tmp index -> final id in postorder completion order.  The
    # recursive parser already appended internals in completion order.
    def final_id(ref):
        kind, idx = ref
        return idx if kind == "t" else n_tips + idx

    for idx, pair in enumerate(internal_children):
        me = n_tips + idx
        for slot, (child_ref, length, length_pos) in enumerate(pair):
            cid = final_id(child_ref)
            children[me, slot] = cid
            parent[cid] = me
            if length is None:
                raise NewickError("missing branch length", length_pos)
            if length <= 0:
                raise NewickError("non-positive branch length %g" % length,
                                  length_pos)
            blen[cid] = length

    return Phylogeny(parent, children, blen, tip_labels)


def serialize_newick(tree):
    """Serialize a Phylogeny to a Newick string (full float precision)."""

    def clade(node):
        if tree.children[node, 0] == -1:
            body = tree.tip_labels[node]
        else:
            body = "(%s,%s)" % (clade(tree.children[node, 0]),
                                clade(tree.children[node, 1]))
        if node == tree.root:
            return body
        return "%s:%s" % (body, repr(float(tree.branch_length[node])))

    return clade(tree.root) + ";"


def read_newick_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_newick(fh.read())


def write_newick_file(tree, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_newick(tree) + "\n")


def simulate_yule_tree(n_tips, birth_rate, rng):
    """Simulate a pure-birth (Yule) tree with the given number of tips.

    Starting from two lineages at the root, each lineage splits
    independently at rate birth_rate; once n_tips lineages exist the tree
    is cut at an additional Exp(n_tips * birth_rate) waiting time, so the
    result is ultrametric.  Reproducible given the rng state.
    """
    if n_tips < 2:
        raise ValueError("n_tips must be >= 2")
    if not birth_rate > 0:
        raise ValueError("birth_rate must be > 0")

    # Node records built root-first: (parent_record, birth_time).
    # Active lineages reference the record of the internal node above them.
    records = [(-1, 0.0)]  # root
    active = [0, 0]
    t = 0.0
    while len(active) < n_tips:
        k = len(active)
        t += rng.exponential(1.0 / (birth_rate * k))
        i = int(rng.integers(k))
        records.append((active[i], t))
        new = len(records) - 1
        active[i] = new
        active.append(new)
    t_end = t + rng.exponential(1.0 / (birth_rate * n_tips))

    n_nodes = 2 * n_tips - 1
    parent = np.full(n_nodes, -1, dtype=np.int64)
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    blen = np.zeros(n_nodes, dtype=np.float64)

    # Assign ids: tips 0..n-1 in record order, internals by postorder
    # completion via DFS from the root record.
    rec_children = [[] for _ in records]
    for rec, (par, _) in enumerate(records):
        if par >= 0:
            rec_children[par].append(rec)
    for rec, lineage_count in ((a, active.count(a)) for a in set(active)):
        rec_children[rec].extend([None] * lineage_count)  # None marks a tip

    tip_count = 0
    internal_count = 0

    def assign(rec):
        # returns (final id, birth time of the node record)
        nonlocal tip_count, internal_count
        kids = []
        for child in rec_children[rec]:
            if child is None:
                cid = tip_count
                tip_count += 1
                kids.append((cid, t_end))
            else:
                kids.append(assign(child))
        my_time = records[rec][1]
        me = n_tips + internal_count
        internal_count += 1
        for slot, (cid, ctime) in enumerate(kids):
            children[me, slot] = cid
            parent[cid] = me
            blen[cid] = ctime - my_time
        return me, my_time

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * n_tips + 100))
    try:
        assign(0)
    finally:
        sys.setrecursionlimit(old)

    labels = ["t%d" % (i + 1) for i in range(n_tips)]
    return Phylogeny(parent, children, blen, labels)
