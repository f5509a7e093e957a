"""Compiled numerical core shared by the samplers.

Everything here is numba-jitted and operates on flat arrays: trees as
parent/children/traversal arrays, histories as ragged (labels, times,
offsets) triples indexed by branch, kernels as dense matrices plus
optional CSR arrays (int64 indptr/indices).  All randomness is generated
from rng.random() alone, so draw streams are pinned by this module and
reproducible across platforms for a given seeded Generator.
"""

import numpy as np
from numba import njit

# ------------------------------------------------------------- primitives


@njit(cache=True, inline="always")
def _poisson(rng, lam):
    # exponential-spacings counter: exact for any lam >= 0, no underflow
    if lam <= 0.0:
        return 0
    n = 0
    acc = -np.log(rng.random())
    while acc < lam:
        n += 1
        acc -= np.log(rng.random())
    return n


@njit(cache=True, inline="always")
def _categorical(rng, w, n):
    total = 0.0
    for k in range(n):
        total += w[k]
    if not total > 0.0:
        raise RuntimeError("zero normalizer in categorical draw")
    u = rng.random() * total
    acc = 0.0
    for k in range(n):
        acc += w[k]
        if u < acc:
            return k
    for k in range(n - 1, -1, -1):  # round-off guard
        if w[k] > 0.0:
            return k
    return 0


@njit(cache=True, inline="always")
def _matvec_dense(a, x, out):
    s = x.shape[0]
    for i in range(s):
        acc = 0.0
        for j in range(s):
            acc += a[i, j] * x[j]
        out[i] = acc


@njit(cache=True, inline="always")
def _matvec_csr(indptr, indices, data, x, out):
    s = x.shape[0]
    for i in range(s):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


@njit(cache=True)
def _apply_power(use_sparse, a, ap, aj, av, m, x, tmp):
    # x <- A^m x in place (tmp is scratch)
    s = x.shape[0]
    for _ in range(m):
        if use_sparse:
            _matvec_csr(ap, aj, av, x, tmp)
        else:
            _matvec_dense(a, x, tmp)
        for k in range(s):
            x[k] = tmp[k]


# ------------------------------------------------- MCMC kernel 1 pieces


@njit(cache=True)
def _partials(parent, children, postorder, n_tips, y, m_arr,
              use_sparse, b, bp, bj, bv, L, logscale, xbuf, tbuf):
    """Tip-to-root pass; child messages are B^m applied to child vectors.

    Rows are rescaled to max 1 with per-node log factors in logscale.
    """
    n_nodes = parent.shape[0]
    s = L.shape[1]
    for t in range(n_tips):
        for k in range(s):
            L[t, k] = 0.0
        L[t, y[t]] = 1.0
        logscale[t] = 0.0
    for idx in range(n_nodes):
        node = postorder[idx]
        if node < n_tips:
            continue
        for k in range(s):
            L[node, k] = 1.0
        for ci in range(2):
            c = children[node, ci]
            for k in range(s):
                xbuf[k] = L[c, k]
            _apply_power(use_sparse, b, bp, bj, bv, m_arr[c], xbuf, tbuf)
            for k in range(s):
                L[node, k] *= xbuf[k]
        mx = 0.0
        for k in range(s):
            if L[node, k] > mx:
                mx = L[node, k]
        if not mx > 0.0:
            raise RuntimeError("partial likelihoods vanished at a node")
        for k in range(s):
            L[node, k] /= mx  # true division: the max entry is exactly 1
        logscale[node] = np.log(mx)


@njit(cache=True)
def _sample_internal_nodes(parent, children, preorder, n_tips, y, m_arr,
                           use_sparse, bt, btp, btj, btv,
                           L, node_state, rbuf, tbuf, wbuf, rng):
    """Root-to-tip pass filling node_state; node_state[root] must be set.

    Needs the row of B^m belonging to the parent state, obtained as m
    transposed-kernel applications to the parent-state indicator.
    """
    n_nodes = parent.shape[0]
    s = L.shape[1]
    root = n_nodes - 1
    for idx in range(n_nodes):
        node = preorder[idx]
        if node == root:
            continue
        if node < n_tips:
            node_state[node] = y[node]
            continue
        h = node_state[parent[node]]
        for k in range(s):
            rbuf[k] = 0.0
        rbuf[h] = 1.0
        _apply_power(use_sparse, bt, btp, btj, btv, m_arr[node], rbuf, tbuf)
        for k in range(s):
            wbuf[k] = rbuf[k] * L[node, k]
        node_state[node] = _categorical(rng, wbuf, s)


@njit(cache=True)
def _fill_branch_labels(labels, o0, m, h, bend,
                        use_sparse, b, bp, bj, bv, ecache, wbuf, rng):
    """Sample the m-jump label path on one branch given endpoint states.

    Writes labels[o0..o0+m].  ecache must have at least m rows; row j is
    filled with B^j applied to the child-state indicator, so interior
    segment d is drawn with weights b[prev, k] * ecache[m-d, k].
    """
    s = wbuf.shape[0]
    labels[o0] = h
    labels[o0 + m] = bend
    if m == 0:
        if h != bend:
            raise RuntimeError("zero-jump branch with differing endpoints")
        return
    if m == 1:
        return
    for k in range(s):
        ecache[0, k] = 0.0
    ecache[0, bend] = 1.0
    for j in range(1, m):
        if use_sparse:
            _matvec_csr(bp, bj, bv, ecache[j - 1], ecache[j])
        else:
            _matvec_dense(b, ecache[j - 1], ecache[j])
    for d in range(1, m):
        prev = labels[o0 + d - 1]
        if use_sparse:
            total = 0.0
            for p in range(bp[prev], bp[prev + 1]):
                total += bv[p] * ecache[m - d, bj[p]]
            if not total > 0.0:
                raise RuntimeError("zero normalizer in branch segment draw")
            u = rng.random() * total
            acc = 0.0
            chosen = -1
            for p in range(bp[prev], bp[prev + 1]):
                acc += bv[p] * ecache[m - d, bj[p]]
                if u < acc:
                    chosen = bj[p]
                    break
            if chosen < 0:
                for p in range(bp[prev + 1] - 1, bp[prev] - 1, -1):
                    if bv[p] * ecache[m - d, bj[p]] > 0.0:
                        chosen = bj[p]
                        break
            labels[o0 + d] = chosen
        else:
            for k in range(s):
                wbuf[k] = b[prev, k] * ecache[m - d, k]
            labels[o0 + d] = _categorical(rng, wbuf, s)


# ------------------------------------------------------- MCMC kernel 2


@njit(cache=True)
def _resample_virtual(labels, times, offsets, root_state, omega, qdiag, rng):
    """Merge self transitions, then re-draw them segment by segment.

    For each maximal constant-state segment (state a, length t) the number
    of virtual jumps is Poisson((omega + q_aa) t), placed uniformly.
    Standalone allocating version of the run loop's kernel 2; returns new
    (labels, times, offsets).
    """
    nb = offsets.shape[0] - 1
    k_in = offsets[nb]
    comp_lab = np.empty(k_in, np.int64)
    comp_tim = np.empty(k_in, np.float64)
    comp_off = np.empty(nb + 1, np.int64)
    ci = 0
    comp_off[0] = 0
    for j in range(nb):
        cur = labels[offsets[j]]
        tsum = times[offsets[j]]
        for p in range(offsets[j] + 1, offsets[j + 1]):
            if labels[p] == cur:
                tsum += times[p]
            else:
                comp_lab[ci] = cur
                comp_tim[ci] = tsum
                ci += 1
                cur = labels[p]
                tsum = times[p]
        comp_lab[ci] = cur
        comp_tim[ci] = tsum
        ci += 1
        comp_off[j + 1] = ci
    mu_buf = np.empty(ci, np.int64)
    total = ci
    for p in range(ci):
        rate = omega + qdiag[comp_lab[p]]
        mu_buf[p] = _poisson(rng, rate * comp_tim[p])
        total += mu_buf[p]
    out_lab = np.empty(total, np.int64)
    out_tim = np.empty(total, np.float64)
    out_off = np.empty(nb + 1, np.int64)
    out_off[0] = 0
    w = 0
    for j in range(nb):
        for p in range(comp_off[j], comp_off[j + 1]):
            a = comp_lab[p]
            t = comp_tim[p]
            mu = mu_buf[p]
            if mu == 0:
                out_lab[w] = a
                out_tim[w] = t
                w += 1
            else:
                cuts = np.empty(mu, np.float64)
                for i in range(mu):
                    cuts[i] = rng.random() * t
                cuts.sort()
                prev_u = 0.0
                for i in range(mu):
                    out_lab[w] = a
                    out_tim[w] = cuts[i] - prev_u
                    prev_u = cuts[i]
                    w += 1
                out_lab[w] = a
                out_tim[w] = t - prev_u
                w += 1
        out_off[j + 1] = w
    return out_lab, out_tim, out_off


# ------------------------------------------------------------- summaries


@njit(cache=True)
def _emit_summary(labels, times, offsets, root_state, q, logpi,
                  obs_map, dwell_row, counts_row):
    """Restricted dwell/count statistics plus the full joint log-density.

    Works on augmented or plain layouts: repeated adjacent labels add no
    jump.  dwell_row/counts_row must be zeroed by the caller; returns
    log p = log pi(root) + sum q_aa t + sum over real jumps log q_ab.
    """
    nb = offsets.shape[0] - 1
    logp = logpi[root_state]
    for j in range(nb):
        for o in range(offsets[j], offsets[j + 1]):
            a = labels[o]
            t = times[o]
            logp += q[a, a] * t
            oa = obs_map[a]
            if oa >= 0:
                dwell_row[oa] += t
            if o > offsets[j]:
                p = labels[o - 1]
                if p != a:
                    logp += np.log(q[p, a])
                    op = obs_map[p]
                    if op >= 0 and oa >= 0:
                        counts_row[op, oa] += 1
    return logp


# ---------------------------------------------------------- MCMC driver


@njit(cache=True)
def _mcmc_run(parent, children, postorder, preorder, n_tips,
              q, pi, omega, use_sparse,
              b, bp, bj, bv, bt, btp, btj, btv,
              y, obs_map,
              labels_in, times_in, offsets_in, root_in,
              n_sweeps, thin, rng,
              dwell_out, counts_out, logp_out):
    """Run the two-kernel chain; emit restricted summaries every thin sweeps.

    Returns the final (labels, times, offsets, root_state).
    """
    n_nodes = parent.shape[0]
    nb = n_nodes - 1
    root_node = n_nodes - 1
    s = q.shape[0]

    qdiag = np.empty(s)
    logpi = np.empty(s)
    for k in range(s):
        qdiag[k] = q[k, k]
        logpi[k] = np.log(pi[k]) if pi[k] > 0.0 else -np.inf

    # working history buffers (grown on demand)
    k_cur = offsets_in[nb]
    cap = 2 * k_cur + 256
    lab = np.empty(cap, np.int64)
    tim = np.empty(cap, np.float64)
    for i in range(k_cur):
        lab[i] = labels_in[i]
        tim[i] = times_in[i]
    off = offsets_in.copy()
    root_state = root_in

    # kernel-2 staging buffers
    ccap = cap
    comp_lab = np.empty(ccap, np.int64)
    comp_tim = np.empty(ccap, np.float64)
    comp_off = np.empty(nb + 1, np.int64)
    mu_buf = np.empty(ccap, np.int64)
    ucap = 64
    ubuf = np.empty(ucap, np.float64)

    # scratch
    L = np.empty((n_nodes, s))
    logscale = np.empty(n_nodes)
    node_state = np.empty(n_nodes, np.int64)
    m_arr = np.empty(nb, np.int64)
    xbuf = np.empty(s)
    tbuf = np.empty(s)
    wbuf = np.empty(s)
    rbuf = np.empty(s)
    ecap = 8
    ecache = np.empty((ecap, s))

    n_keep = dwell_out.shape[0]
    emit_idx = 0

    for sweep in range(n_sweeps):
        # ---------------- kernel 1: new labels V given the time grid W
        mx_m = 0
        for j in range(nb):
            m = off[j + 1] - off[j] - 1
            m_arr[j] = m
            if m > mx_m:
                mx_m = m
        _partials(parent, children, postorder, n_tips, y, m_arr,
                  use_sparse, b, bp, bj, bv, L, logscale, xbuf, tbuf)
        for k in range(s):
            wbuf[k] = pi[k] * L[root_node, k]
        node_state[root_node] = _categorical(rng, wbuf, s)
        _sample_internal_nodes(parent, children, preorder, n_tips, y, m_arr,
                               use_sparse, bt, btp, btj, btv,
                               L, node_state, rbuf, tbuf, wbuf, rng)
        if mx_m > ecap:
            while ecap < mx_m:
                ecap *= 2
            ecache = np.empty((ecap, s))
        for j in range(nb):
            _fill_branch_labels(lab, off[j], m_arr[j], node_state[parent[j]],
                                node_state[j], use_sparse, b, bp, bj, bv,
                                ecache, wbuf, rng)
        root_state = node_state[root_node]

        # ---------------- kernel 2: drop virtual jumps, redraw them
        if off[nb] > ccap:
            while ccap < off[nb]:
                ccap *= 2
            comp_lab = np.empty(ccap, np.int64)
            comp_tim = np.empty(ccap, np.float64)
            mu_buf = np.empty(ccap, np.int64)
        ci = 0
        comp_off[0] = 0
        for j in range(nb):
            cur = lab[off[j]]
            tsum = tim[off[j]]
            for p in range(off[j] + 1, off[j + 1]):
                if lab[p] == cur:
                    tsum += tim[p]
                else:
                    comp_lab[ci] = cur
                    comp_tim[ci] = tsum
                    ci += 1
                    cur = lab[p]
                    tsum = tim[p]
            comp_lab[ci] = cur
            comp_tim[ci] = tsum
            ci += 1
            comp_off[j + 1] = ci
        total = ci
        for p in range(ci):
            rate = omega + qdiag[comp_lab[p]]
            mu_buf[p] = _poisson(rng, rate * comp_tim[p])
            total += mu_buf[p]
        if total > cap:
            while cap < total:
                cap *= 2
            lab = np.empty(cap, np.int64)
            tim = np.empty(cap, np.float64)
        w = 0
        for j in range(nb):
            for p in range(comp_off[j], comp_off[j + 1]):
                a = comp_lab[p]
                t = comp_tim[p]
                mu = mu_buf[p]
                if mu == 0:
                    lab[w] = a
                    tim[w] = t
                    w += 1
                else:
                    if mu > ucap:
                        while ucap < mu:
                            ucap *= 2
                        ubuf = np.empty(ucap, np.float64)
                    cuts = ubuf[:mu]
                    for i in range(mu):
                        cuts[i] = rng.random() * t
                    cuts.sort()
                    prev_u = 0.0
                    for i in range(mu):
                        lab[w] = a
                        tim[w] = cuts[i] - prev_u
                        prev_u = cuts[i]
                        w += 1
                    lab[w] = a
                    tim[w] = t - prev_u
                    w += 1
            off[j + 1] = w

        # ---------------- emission
        if (sweep + 1) % thin == 0 and emit_idx < n_keep:
            r = dwell_out.shape[1]
            for i in range(r):
                dwell_out[emit_idx, i] = 0.0
                for i2 in range(r):
                    counts_out[emit_idx, i, i2] = 0
            logp_out[emit_idx] = _emit_summary(
                lab, tim, off, root_state, q, logpi, obs_map,
                dwell_out[emit_idx], counts_out[emit_idx])
            emit_idx += 1

    k_cur = off[nb]
    return lab[:k_cur].copy(), tim[:k_cur].copy(), off.copy(), root_state


# ----------------------------------------------------------- EXP sampler


@njit(cache=True)
def _exp_rebuild_p3(lam, veig, weig, blen, p3, ebuf, cbuf):
    """Branch transition matrices from cached symmetric-eigen factors.

    p3[i, k, branch] = P(beta_branch)[i, k]; layout keeps the branch axis
    contiguous, and the accumulation runs over rank-one panels
    cbuf[k, ib] = weig[j, k] * ebuf[j, ib] so the inner updates sweep
    s * n_branches contiguous doubles at a time.  Cost is two dense
    products' worth of multiply-adds per call (O(s^3) for a fixed branch
    count); tiny negative round-off entries clamp to 0.
    """
    s = lam.shape[0]
    nb = blen.shape[0]
    w = s * nb
    flat = p3.reshape(s, w)
    for j in range(s):
        for ib in range(nb):
            ebuf[j, ib] = np.exp(lam[j] * blen[ib])
    for j in range(s):
        for k in range(s):
            wjk = weig[j, k]
            base = k * nb
            for ib in range(nb):
                cbuf[base + ib] = wjk * ebuf[j, ib]
        if j == 0:
            for i in range(s):
                vij = veig[i, 0]
                row = flat[i]
                for x in range(w):
                    row[x] = vij * cbuf[x]
        else:
            for i in range(s):
                vij = veig[i, j]
                row = flat[i]
                for x in range(w):
                    row[x] += vij * cbuf[x]
    for i in range(s):
        row = flat[i]
        for x in range(w):
            if row[x] < 0.0:
                row[x] = 0.0


@njit(cache=True)
def _exp_partials(parent, children, postorder, n_tips, y, p3,
                  L, logscale, xbuf):
    """Tip-to-root pass with branch transition matrices in place of B^m."""
    n_nodes = parent.shape[0]
    s = L.shape[1]
    for t in range(n_tips):
        for k in range(s):
            L[t, k] = 0.0
        L[t, y[t]] = 1.0
        logscale[t] = 0.0
    for idx in range(n_nodes):
        node = postorder[idx]
        if node < n_tips:
            continue
        for k in range(s):
            L[node, k] = 1.0
        for ci in range(2):
            c = children[node, ci]
            if c < n_tips:
                # tip partials are indicators, so the product collapses
                # to one column of the branch transition matrix
                yc = y[c]
                for h in range(s):
                    xbuf[h] = p3[h, yc, c]
            else:
                for h in range(s):
                    acc = 0.0
                    for k in range(s):
                        acc += p3[h, k, c] * L[c, k]
                    xbuf[h] = acc
            for k in range(s):
                L[node, k] *= xbuf[k]
        mx = 0.0
        for k in range(s):
            if L[node, k] > mx:
                mx = L[node, k]
        if not mx > 0.0:
            raise RuntimeError("partial likelihoods vanished at a node")
        for k in range(s):
            L[node, k] /= mx  # true division: the max entry is exactly 1
        logscale[node] = np.log(mx)


@njit(cache=True)
def _exp_sample_nodes(parent, children, preorder, n_tips, y, p3,
                      L, node_state, wbuf, rng):
    """Root-to-tip draw of node states using rows of P(beta_branch)."""
    n_nodes = parent.shape[0]
    s = L.shape[1]
    root = n_nodes - 1
    for idx in range(n_nodes):
        node = preorder[idx]
        if node == root:
            continue
        if node < n_tips:
            node_state[node] = y[node]
            continue
        h = node_state[parent[node]]
        for k in range(s):
            wbuf[k] = p3[h, k, node] * L[node, k]
        node_state[node] = _categorical(rng, wbuf, s)


@njit(cache=True)
def _propose_jump_count_tail(a, bend, u, acc0, lam_p, pois0,
                             use_sparse, bt, btp, btj, btv,
                             rbuf, tbuf, rng):
    """Continue the jump-count inverse-CDF scan past the m = 0 term.

    u is the (already drawn) target mass, acc0 the mass accumulated at
    m = 0, pois0 = exp(-lam_p).  Poisson weights are tracked in log space
    so large lam_p cannot underflow the recursion.  If round-off
    disagreement between the normalizer and the series leaves residual
    mass once the Poisson tail falls below 1e-12, that residual is
    assigned to the current m (relative bias ~1e-12).
    """
    s = rbuf.shape[0]
    log_pois = -lam_p
    cum = pois0
    acc = acc0
    for k in range(s):
        rbuf[k] = 0.0
    rbuf[a] = 1.0
    m = 0
    while True:
        m += 1
        log_pois += np.log(lam_p / m)
        pois = np.exp(log_pois)
        cum += pois
        if use_sparse:
            _matvec_csr(btp, btj, btv, rbuf, tbuf)
        else:
            _matvec_dense(bt, rbuf, tbuf)
        for k in range(s):
            rbuf[k] = tbuf[k]
        acc += pois * rbuf[bend]
        if acc > u:
            return m
        # with a positive diagonal, reachability is settled within s steps;
        # a still-zero entry means z was round-off noise, not real mass
        if rbuf[bend] == 0.0 and m >= s:
            raise RuntimeError("endpoint pair unreachable under the kernel")
        # round-off can leave the series total a hair below z; once the
        # Poisson tail is negligible, assign the residual to the current m
        # (but only to an m whose own path probability is positive)
        if m > lam_p and 1.0 - cum < 1e-12 and rbuf[bend] > 0.0:
            return m


@njit(cache=True)
def _propose_jump_count(a, bend, beta, z, omega,
                        use_sparse, bt, btp, btj, btv, rbuf, tbuf, rng):
    """Draw m from Pr(m | a -> bend, beta) ∝ Pois(m; omega beta) (B^m)_ab.

    Inverse-CDF with early stopping, normalized by the exponential's value
    z = P_ab(beta): expected cost is O(E[m] + 1) kernel applications.
    """
    if not z > 0.0:
        raise RuntimeError("endpoint pair has zero transition probability")
    lam_p = omega * beta
    pois0 = np.exp(-lam_p)
    u = rng.random() * z
    acc = pois0 if a == bend else 0.0
    if acc > u:
        return 0
    return _propose_jump_count_tail(a, bend, u, acc, lam_p, pois0,
                                    use_sparse, bt, btp, btj, btv,
                                    rbuf, tbuf, rng)


@njit(cache=True)
def _exp_run(parent, children, blen, postorder, preorder, n_tips,
             q, pi, omega, use_sparse,
             b, bp, bj, bv, bt, btp, btj, btv,
             have_eig, lam, veig, weig, p3, rebuild_each,
             y, obs_map, n_draws, rng,
             dwell_out, counts_out, logp_out):
    """Independent history draws by pruning + endpoint-conditioned paths.

    With rebuild_each (and eigen factors available) the branch transition
    matrices and partial likelihoods are recomputed for every draw;
    otherwise both are computed once up front.  Emits one restricted
    summary row per draw; returns the last history.
    """
    n_nodes = parent.shape[0]
    nb = n_nodes - 1
    root_node = n_nodes - 1
    s = q.shape[0]

    qdiag = np.empty(s)
    logpi = np.empty(s)
    for k in range(s):
        qdiag[k] = q[k, k]
        logpi[k] = np.log(pi[k]) if pi[k] > 0.0 else -np.inf

    # per-branch Poisson(omega * beta) zero-count weights are draw
    # independent, so hoist them out of the sampling loop
    lam_ps = np.empty(nb)
    pois0s = np.empty(nb)
    for j in range(nb):
        lam_ps[j] = omega * blen[j]
        pois0s[j] = np.exp(-lam_ps[j])

    L = np.empty((n_nodes, s))
    logscale = np.empty(n_nodes)
    node_state = np.empty(n_nodes, np.int64)
    xbuf = np.empty(s)
    wbuf = np.empty(s)
    rbuf = np.empty(s)
    tbuf = np.empty(s)
    ebuf = np.empty((s, nb))
    cbuf = np.empty(s * nb)
    ecap = 8
    ecache = np.empty((ecap, s))
    ucap = 64
    ubuf = np.empty(ucap, np.float64)
    cap = 4 * nb + 256
    lab = np.empty(cap, np.int64)
    tim = np.empty(cap, np.float64)
    off = np.empty(nb + 1, np.int64)
    m_of = np.empty(nb, np.int64)
    root_state = 0

    if not rebuild_each:
        _exp_partials(parent, children, postorder, n_tips, y, p3,
                      L, logscale, xbuf)

    n_keep = dwell_out.shape[0]
    for draw in range(n_draws):
        if rebuild_each:
            if have_eig:
                _exp_rebuild_p3(lam, veig, weig, blen, p3, ebuf, cbuf)
            _exp_partials(parent, children, postorder, n_tips, y, p3,
                          L, logscale, xbuf)
        for k in range(s):
            wbuf[k] = pi[k] * L[root_node, k]
        node_state[root_node] = _categorical(rng, wbuf, s)
        _exp_sample_nodes(parent, children, preorder, n_tips, y, p3,
                          L, node_state, wbuf, rng)
        root_state = node_state[root_node]

        # endpoint-conditioned jump counts, then total size, then paths
        total = 0
        mx_m = 0
        for j in range(nb):
            a = node_state[parent[j]]
            bend = node_state[j]
            z = p3[a, bend, j]
            if not z > 0.0:
                raise RuntimeError(
                    "endpoint pair has zero transition probability")
            u = rng.random() * z
            if a == bend and pois0s[j] > u:
                m = 0  # the usual case on short branches
            else:
                acc0 = pois0s[j] if a == bend else 0.0
                m = _propose_jump_count_tail(
                    a, bend, u, acc0, lam_ps[j], pois0s[j],
                    use_sparse, bt, btp, btj, btv, rbuf, tbuf, rng)
            m_of[j] = m
            total += m + 1
            if m > mx_m:
                mx_m = m
        if total > cap:
            while cap < total:
                cap *= 2
            lab = np.empty(cap, np.int64)
            tim = np.empty(cap, np.float64)
        if mx_m > ecap:
            while ecap < mx_m:
                ecap *= 2
            ecache = np.empty((ecap, s))
        if mx_m > ucap:
            while ucap < mx_m:
                ucap *= 2
            ubuf = np.empty(ucap, np.float64)
        off[0] = 0
        w = 0
        for j in range(nb):
            m = m_of[j]
            if m == 0:
                # single segment; the proposal only returns 0 when the
                # endpoints agree
                lab[w] = node_state[j]
                tim[w] = blen[j]
                w += 1
                off[j + 1] = w
                continue
            _fill_branch_labels(lab, w, m, node_state[parent[j]],
                                node_state[j], use_sparse, b, bp, bj, bv,
                                ecache, wbuf, rng)
            cuts = ubuf[:m]
            for i in range(m):
                cuts[i] = rng.random() * blen[j]
            cuts.sort()
            prev_u = 0.0
            for i in range(m):
                tim[w + i] = cuts[i] - prev_u
                prev_u = cuts[i]
            tim[w + m] = blen[j] - prev_u
            w += m + 1
            off[j + 1] = w

        if draw < n_keep:
            r = dwell_out.shape[1]
            for i in range(r):
                dwell_out[draw, i] = 0.0
                for i2 in range(r):
                    counts_out[draw, i, i2] = 0
            logp_out[draw] = _emit_summary(
                lab, tim, off, root_state, q, logpi, obs_map,
                dwell_out[draw], counts_out[draw])

    k_cur = off[nb]
    return lab[:k_cur].copy(), tim[:k_cur].copy(), off.copy(), root_state
