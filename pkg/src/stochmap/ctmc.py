"""Rate matrices for continuous-time Markov chains on discrete traits.

Provides the standard model builders (equal rates, tridiagonal birth-death,
GY94 codon model, empirical matrices from file), stationary distributions,
cached matrix exponentials, and uniformized jump kernels B = I + Q/omega
used by the samplers.
"""

import numpy as np
import scipy.linalg
import scipy.sparse

from .codons import AMINO_ACID, CODON_INDEX, SENSE_CODONS, codon_difference, is_transition
from .tree import total_tree_length


class RateMatrix:
    """Immutable CTMC rate matrix with a root distribution.

    Parameters
    ----------
    q : (s, s) array
        Off-diagonal entries must be >= 0.  Only the off-diagonal entries
        are read: diagonals are always set to minus the off-diagonal row
        sums, so row sums vanish to machine precision.
    pi : (s,) array, optional
        Root/initial state distribution.  Defaults to the stationary
        distribution of q (requires irreducibility).
    pattern : (k, 2) int array, optional
        Structurally nonzero off-diagonal positions.  When present it must
        cover every nonzero off-diagonal entry, and downstream kernels use
        compressed-sparse-row storage.
    """

    def __init__(self, q, pi=None, pattern=None):
        q = np.array(q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("q must be a square matrix")
        s = q.shape[0]
        if s < 1:
            raise ValueError("q must have at least one state")

        np.fill_diagonal(q, 0.0)
        if np.any(q < 0):
            raise ValueError("off-diagonal rates must be nonnegative")

        if pattern is not None:
            pattern = np.asarray(pattern, dtype=np.int64).reshape(-1, 2)
            covered = set(map(tuple, pattern))
            for a, b in np.argwhere(q != 0):
                if (a, b) not in covered:
                    raise ValueError(
                        "sparsity pattern misses nonzero entry (%d, %d)" % (a, b))

        np.fill_diagonal(q, -q.sum(axis=1))

        self.s = s
        self.q = q
        self.pattern = pattern
        self._stationary = None
        self._sym_eig = None
        self._sym_eig_ready = False

        if pi is None:
            pi = self.stationary_distribution()
        else:
            pi = np.array(pi, dtype=np.float64)
            if pi.shape != (s,):
                raise ValueError("pi must have length %d" % s)
            if np.any(pi < 0):
                raise ValueError("pi entries must be nonnegative")
            total = pi.sum()
            if abs(total - 1.0) > 1e-8:
                raise ValueError("pi must sum to 1")
            pi = pi / total
        self.pi = pi

        self.q.setflags(write=False)
        self.pi.setflags(write=False)
        if self.pattern is not None:
            self.pattern.setflags(write=False)

    def stationary_distribution(self):
        """Unique distribution with pi @ q = 0; raises if q is reducible."""
        if self._stationary is None:
            ns = scipy.linalg.null_space(self.q.T)
            if ns.shape[1] != 1:
                raise ValueError(
                    "rate matrix is reducible (null space dimension %d)"
                    % ns.shape[1])
            v = ns[:, 0]
            v = v / v.sum()
            if np.any(v < -1e-10):
                raise ValueError("stationary solve produced negative entries")
            v = np.clip(v, 0.0, None)
            v /= v.sum()
            v.setflags(write=False)
            self._stationary = v
        return self._stationary

    def is_reversible(self, tol=1e-10):
        """Detailed balance pi_a * q_ab == pi_b * q_ba within tolerance."""
        try:
            pi = self.stationary_distribution()
        except ValueError:
            return False
        flux = pi[:, None] * self.q
        scale = max(1.0, float(np.abs(flux).max()))
        return bool(np.abs(flux - flux.T).max() <= tol * scale)

    def symmetric_eigensystem(self):
        """Cached factors (lam, v, w) with exp(q t) = (v * exp(lam t)) @ w.

        Uses the symmetric similarity transform available for matrices
        reversible with respect to their stationary distribution; returns
        None when the matrix is not reversible or the solver fails, in
        which case callers fall back to scaling-and-squaring.
        """
        if not self._sym_eig_ready:
            self._sym_eig_ready = True
            self._sym_eig = None
            if self.is_reversible():
                pi = self.stationary_distribution()
                if np.all(pi > 0):
                    d = np.sqrt(pi)
                    sym = (d[:, None] * self.q) / d[None, :]
                    sym = 0.5 * (sym + sym.T)
                    try:
                        lam, u = scipy.linalg.eigh(sym)
                    except scipy.linalg.LinAlgError:
                        lam = None
                    if lam is not None:
                        v = u / d[:, None]
                        w = u.T * d[None, :]
                        for a in (lam, v, w):
                            a.setflags(write=False)
                        self._sym_eig = (lam, v, w)
        return self._sym_eig

    def __repr__(self):
        kind = "sparse" if self.pattern is not None else "dense"
        return "RateMatrix(s=%d, %s)" % (self.s, kind)


class UniformizedKernel:
    """Row-stochastic jump kernel B = I + Q/omega of a uniformized CTMC.

    omega strictly dominates every exit rate, so all diagonal entries of B
    are strictly positive.  When the source matrix carries a sparsity
    pattern, B (and its transpose) are also stored in CSR form with the
    pattern's structural zeros kept explicit.
    """

    def __init__(self, omega, b, rate_matrix):
        self.omega = float(omega)
        self.b = b
        self.bt = np.ascontiguousarray(b.T)
        self.rate_matrix = rate_matrix
        self.s = b.shape[0]
        self.use_sparse = rate_matrix.pattern is not None
        if self.use_sparse:
            s = self.s
            pat = rate_matrix.pattern
            rows = np.r_[pat[:, 0], np.arange(s)]
            cols = np.r_[pat[:, 1], np.arange(s)]
            data = b[rows, cols]
            self.b_csr = scipy.sparse.csr_matrix(
                (data, (rows, cols)), shape=(s, s))
            self.bt_csr = scipy.sparse.csr_matrix(
                (data, (cols, rows)), shape=(s, s))
            # int64 copies of the CSR arrays for the compiled kernels
            self.bp = self.b_csr.indptr.astype(np.int64)
            self.bj = self.b_csr.indices.astype(np.int64)
            self.bv = self.b_csr.data
            self.btp = self.bt_csr.indptr.astype(np.int64)
            self.btj = self.bt_csr.indices.astype(np.int64)
            self.btv = self.bt_csr.data
        else:
            self.b_csr = None
            self.bt_csr = None
            self.bp = np.zeros(0, np.int64)
            self.bj = np.zeros(0, np.int64)
            self.bv = np.zeros(0, np.float64)
            self.btp = np.zeros(0, np.int64)
            self.btj = np.zeros(0, np.int64)
            self.btv = np.zeros(0, np.float64)
        self.b.setflags(write=False)
        self.bt.setflags(write=False)

    def __repr__(self):
        return "UniformizedKernel(s=%d, omega=%g, sparse=%s)" % (
            self.s, self.omega, self.use_sparse)


def uniformize(rate_matrix, multiplier=2.0):
    """Build the uniformized kernel with omega = multiplier * max exit rate.

    multiplier must exceed 1 so that omega strictly dominates the largest
    rate of leaving any state and B keeps a strictly positive diagonal.
    For the all-zero rate matrix (no exits at all) omega falls back to
    multiplier * 1.0, giving B = I.
    """
    if not multiplier > 1.0:
        raise ValueError("multiplier must be > 1")
    max_exit = float(-rate_matrix.q.diagonal().min())
    omega = multiplier * (max_exit if max_exit > 0 else 1.0)
    b = np.eye(rate_matrix.s) + rate_matrix.q / omega
    return UniformizedKernel(omega, b, rate_matrix)


def matrix_exponential(rate_matrix, t):
    """Transition probabilities P(t) = exp(q t).

    Reversible matrices use a cached symmetric eigendecomposition (computed
    once per RateMatrix and reused across all t); otherwise, or if the
    eigensolver fails, scaling-and-squaring is used.  Tiny negative entries
    from round-off are clamped to zero.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return np.eye(rate_matrix.s)
    factors = rate_matrix.symmetric_eigensystem()
    if factors is not None:
        lam, v, w = factors
        p = (v * np.exp(lam * t)) @ w
    else:
        p = scipy.linalg.expm(rate_matrix.q * t)
    np.clip(p, 0.0, None, out=p)
    return p


def kernel_power_times_vector(kernel, m, v):
    """B^m v via m successive matrix-vector products (never forms B^m).

    Cost is O(m s^2) dense or O(m nnz) with CSR storage; m = 0 returns a
    copy of v.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (kernel.s,):
        raise ValueError("v must have length %d" % kernel.s)
    x = v.copy()
    mat = kernel.b_csr if kernel.use_sparse else kernel.b
    for _ in range(m):
        x = mat @ x
    return x


def build_equal_rates(s, rate=1.0):
    """All off-diagonal rates equal; uniform root distribution."""
    if s < 2:
        raise ValueError("s must be >= 2")
    if not rate > 0:
        raise ValueError("rate must be > 0")
    q = np.full((s, s), rate)
    np.fill_diagonal(q, -(s - 1) * rate)
    return RateMatrix(q, pi=np.full(s, 1.0 / s))


def build_tridiagonal(s, up_rate=1.0, down_rate=1.0):
    """Nearest-neighbor (birth-death) chain on an ordered state ladder.

    Only q_{k,k+1} = up_rate and q_{k,k-1} = down_rate are nonzero; the
    sparsity pattern is recorded so downstream kernels can use CSR storage.
    """
    if s < 2:
        raise ValueError("s must be >= 2")
    if not (up_rate > 0 and down_rate > 0):
        raise ValueError("rates must be > 0")
    q = np.zeros((s, s))
    idx = np.arange(s - 1)
    q[idx, idx + 1] = up_rate
    q[idx + 1, idx] = down_rate
    np.fill_diagonal(q, -q.sum(axis=1))
    pattern = np.r_[np.c_[idx, idx + 1], np.c_[idx + 1, idx]]
    # detailed balance: pi_{k+1}/pi_k = up/down
    pi = (up_rate / down_rate) ** np.arange(s)
    pi /= pi.sum()
    return RateMatrix(q, pi=pi, pattern=pattern)


def build_gy94(kappa, omega, codon_freqs):
    """Goldman-Yang codon model on the 61 sense codons.

    Off-diagonal rate from codon a to codon b:

    ==========================  ================
    single-nucleotide change    rate
    ==========================  ================
    synonymous transversion     pi_b
    synonymous transition       kappa * pi_b
    nonsynonymous transversion  omega * pi_b
    nonsynonymous transition    omega * kappa * pi_b
    >= 2 positions differ       0
    ==========================  ================

    The matrix is reversible with respect to codon_freqs, and each codon
    has at most 9 structural neighbors (3 positions x 3 alternatives).
    """
    if not (kappa > 0 and omega > 0):
        raise ValueError("kappa and omega must be > 0")
    codon_freqs = np.asarray(codon_freqs, dtype=np.float64)
    if codon_freqs.shape != (len(SENSE_CODONS),):
        raise ValueError("codon_freqs must have length %d" % len(SENSE_CODONS))
    if np.any(codon_freqs < 0):
        raise ValueError("codon_freqs must be nonnegative")
    if abs(codon_freqs.sum() - 1.0) > 1e-8:
        raise ValueError("codon_freqs must sum to 1")

    n = len(SENSE_CODONS)
    q = np.zeros((n, n))
    pattern = []
    for a, ca in enumerate(SENSE_CODONS):
        for b, cb in enumerate(SENSE_CODONS):
            if a == b:
                continue
            diff = codon_difference(ca, cb)
            if len(diff) != 1:
                continue
            pos = diff[0]
            rate = codon_freqs[b]
            if is_transition(ca[pos], cb[pos]):
                rate *= kappa
            if AMINO_ACID[ca] != AMINO_ACID[cb]:
                rate *= omega
            q[a, b] = rate
            pattern.append((a, b))
    np.fill_diagonal(q, -q.sum(axis=1))
    return RateMatrix(q, pi=codon_freqs, pattern=np.array(pattern))


def full_pattern(s):
    """Every off-diagonal position as an explicit sparsity pattern.

    Attaching this to a dense matrix routes it through the CSR kernels,
    which is useful for measuring sparse-storage overhead on a matrix
    with no structural zeros.
    """
    a, b = np.nonzero(~np.eye(s, dtype=bool))
    return np.column_stack([a, b])


def infer_pattern(rate_matrix):
    """The same chain with its nonzero off-diagonal structure recorded.

    Rate-matrix text files carry no sparsity pattern; this recovers one
    from the numeric zeros so a loaded matrix can use the CSR kernels.
    Returns the input unchanged if a pattern is already attached.
    """
    if rate_matrix.pattern is not None:
        return rate_matrix
    q = rate_matrix.q.copy()
    np.fill_diagonal(q, 0.0)
    return RateMatrix(rate_matrix.q.copy(), pi=rate_matrix.pi.copy(),
                      pattern=np.argwhere(q != 0.0))


def expected_transitions(rate_matrix, tree):
    """Expected substitution count: tree length times the stationary rate."""
    pi = rate_matrix.stationary_distribution()
    return total_tree_length(tree) * float(pi @ (-rate_matrix.q.diagonal()))


def scale_to_expected_transitions(rate_matrix, tree, target):
    """Rescale q so the expected transition count on the tree equals target.

    The scaling constant is target / (tree length * sum_k pi_k |q_kk|) with
    pi the stationary distribution, which scaling leaves unchanged.
    """
    if not target > 0:
        raise ValueError("target must be > 0")
    current = expected_transitions(rate_matrix, tree)
    if current <= 0:
        raise ValueError("rate matrix has no transitions to scale")
    c = target / current
    return RateMatrix(rate_matrix.q * c, pi=rate_matrix.pi,
                      pattern=rate_matrix.pattern)


def load_rate_file(path):
    """Read a rate matrix from a text file.

    Two formats are auto-detected by token count:

    * square: an integer s on the first line, then s rows of s entries;
      diagonals are reset so rows sum to zero, and the root distribution is
      the stationary distribution.
    * lower-triangle exchangeabilities: s(s-1)/2 entries (row i of the
      triangle listing r_{i0}..r_{i,i-1}) followed by s state frequencies;
      rates are q_ab = r_ab * pi_b.  Used by common empirical amino-acid
      model files.
    """
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if not tokens:
        raise ValueError("empty rate file")

    # square format: leading integer s followed by exactly s*s entries
    try:
        s = int(tokens[0])
    except ValueError:
        s = -1
    if s >= 2 and len(tokens) == 1 + s * s:
        q = np.array(tokens[1:], dtype=np.float64).reshape(s, s)
        return RateMatrix(q)

    # lower-triangle format: s(s-1)/2 exchangeabilities + s frequencies
    total = len(tokens)
    s = int(round((np.sqrt(1 + 8 * total) - 1) / 2))
    if s * (s + 1) // 2 != total or s < 2:
        raise ValueError(
            "rate file does not match the square or lower-triangle format "
            "(%d tokens)" % total)
    values = np.array(tokens, dtype=np.float64)
    n_ex = s * (s - 1) // 2
    ex, freqs = values[:n_ex], values[n_ex:]
    if np.any(ex < 0):
        raise ValueError("exchangeabilities must be nonnegative")
    r = np.zeros((s, s))
    k = 0
    for i in range(1, s):
        for j in range(i):
            r[i, j] = r[j, i] = ex[k]
            k += 1
    freqs = freqs / freqs.sum()
    q = r * freqs[None, :]
    np.fill_diagonal(q, -q.sum(axis=1))
    return RateMatrix(q, pi=freqs)


def write_rate_file(rate_matrix, path):
    """Write a rate matrix in the square text format (round-trips exactly)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%d\n" % rate_matrix.s)
        for row in rate_matrix.q:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
