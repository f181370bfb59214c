"""Compiled inner loops for the edge-update and hard-core dynamics.

All kernels operate in place on the uint64 bit-row adjacency produced by
graph.Graph and reproduce deterministically from an explicit 32-bit seed.
Pure-Python reference implementations of the same updates live in glauber.py
and hardcore.py; tests check the two paths against the same exact oracles.
"""

import numpy as np
from numba import njit

U1 = np.uint64(1)
M1 = np.uint64(0x5555555555555555)
M2 = np.uint64(0x3333333333333333)
M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
H01 = np.uint64(0x0101010101010101)


@njit(cache=True, inline="always")
def _popcount64(x):
    x = x - ((x >> U1) & M1)
    x = (x & M2) + ((x >> np.uint64(2)) & M2)
    x = (x + (x >> np.uint64(4))) & M4
    return (x * H01) >> np.uint64(56)


@njit(cache=True, inline="always")
def _common_count(bits, i, j):
    c = np.uint64(0)
    for w in range(bits.shape[1]):
        c += _popcount64(bits[i, w] & bits[j, w])
    return int(c)


@njit(cache=True, inline="always")
def _has_edge(bits, i, j):
    return (bits[i, j // 64] >> np.uint64(j % 64)) & U1 != np.uint64(0)


@njit(cache=True, inline="always")
def _set_edge(bits, degree, i, j):
    bits[i, j // 64] |= U1 << np.uint64(j % 64)
    bits[j, i // 64] |= U1 << np.uint64(i % 64)
    degree[i] += 1
    degree[j] += 1


@njit(cache=True, inline="always")
def _clear_edge(bits, degree, i, j):
    bits[i, j // 64] &= ~(U1 << np.uint64(j % 64))
    bits[j, i // 64] &= ~(U1 << np.uint64(i % 64))
    degree[i] -= 1
    degree[j] -= 1


@njit(cache=True)
def tf_glauber_run(bits, degree, edge_i, edge_j, p, steps, seed):
    """Conditioned-measure heat bath: the chosen pair ends up present iff
    U < p and no triangle would close. Returns blocked-add count."""
    np.random.seed(seed)
    n_pairs = edge_i.shape[0]
    blocked = 0
    for _ in range(steps):
        k = np.random.randint(0, n_pairs)
        i = edge_i[k]
        j = edge_j[k]
        present = _has_edge(bits, i, j)
        if np.random.random() < p:
            if _common_count(bits, i, j) == 0:
                if not present:
                    _set_edge(bits, degree, i, j)
            else:
                blocked += 1
                if present:
                    _clear_edge(bits, degree, i, j)
        else:
            if present:
                _clear_edge(bits, degree, i, j)
    return blocked


@njit(cache=True)
def tf_glauber_run_record(bits, degree, edge_i, edge_j, side, p, steps, seed,
                          every, rec_edges, rec_cut):
    """Run while recording edge count and cut size (w.r.t. side) every
    `every` steps. rec_* must have length steps // every."""
    np.random.seed(seed)
    n_pairs = edge_i.shape[0]
    n = degree.shape[0]
    edges = 0
    cut = 0
    for a in range(n):
        for b in range(a + 1, n):
            if _has_edge(bits, a, b):
                edges += 1
                if side[a] != side[b]:
                    cut += 1
    r = 0
    for t in range(steps):
        k = np.random.randint(0, n_pairs)
        i = edge_i[k]
        j = edge_j[k]
        present = _has_edge(bits, i, j)
        want = False
        if np.random.random() < p:
            want = _common_count(bits, i, j) == 0
        if want and not present:
            _set_edge(bits, degree, i, j)
            edges += 1
            if side[i] != side[j]:
                cut += 1
        elif not want and present:
            _clear_edge(bits, degree, i, j)
            edges -= 1
            if side[i] != side[j]:
                cut -= 1
        if (t + 1) % every == 0:
            rec_edges[r] = edges
            rec_cut[r] = cut
            r += 1
    return r


@njit(cache=True)
def tf_monotone_coupled_run(bits_x, deg_x, bits_y, deg_y, edge_i, edge_j,
                            p, steps, seed):
    """Same (pair, uniform) updates: y is unconditioned G(n,p) dynamics, x
    skips triangle-closing additions. Returns number of containment
    violations (x edge absent from y), which should stay 0 when initially
    x subseteq y."""
    np.random.seed(seed)
    n_pairs = edge_i.shape[0]
    violations = 0
    for _ in range(steps):
        k = np.random.randint(0, n_pairs)
        i = edge_i[k]
        j = edge_j[k]
        u = np.random.random()
        if u < p:
            if not _has_edge(bits_y, i, j):
                _set_edge(bits_y, deg_y, i, j)
            if _common_count(bits_x, i, j) == 0:
                if not _has_edge(bits_x, i, j):
                    _set_edge(bits_x, deg_x, i, j)
            else:
                if _has_edge(bits_x, i, j):
                    _clear_edge(bits_x, deg_x, i, j)
        else:
            if _has_edge(bits_y, i, j):
                _clear_edge(bits_y, deg_y, i, j)
            if _has_edge(bits_x, i, j):
                _clear_edge(bits_x, deg_x, i, j)
        if _has_edge(bits_x, i, j) and not _has_edge(bits_y, i, j):
            violations += 1
    return violations


@njit(cache=True)
def tf_pair_coupled_until(bits_x, deg_x, bits_y, deg_y, edge_i, edge_j,
                          p, max_steps, seed, dist0):
    """Two conditioned chains under the same-update coupling; returns the
    first step at which they agree, or -1. dist0 is the initial Hamming
    distance between edge sets."""
    np.random.seed(seed)
    n_pairs = edge_i.shape[0]
    dist = dist0
    if dist == 0:
        return 0
    for t in range(max_steps):
        k = np.random.randint(0, n_pairs)
        i = edge_i[k]
        j = edge_j[k]
        u = np.random.random()
        px = _has_edge(bits_x, i, j)
        py = _has_edge(bits_y, i, j)
        wx = u < p and _common_count(bits_x, i, j) == 0
        wy = u < p and _common_count(bits_y, i, j) == 0
        if wx and not px:
            _set_edge(bits_x, deg_x, i, j)
        elif not wx and px:
            _clear_edge(bits_x, deg_x, i, j)
        if wy and not py:
            _set_edge(bits_y, deg_y, i, j)
        elif not wy and py:
            _clear_edge(bits_y, deg_y, i, j)
        if px != py:
            if wx == wy:
                dist -= 1
        else:
            if wx != wy:
                dist += 1
        if dist == 0:
            return t + 1
    return -1


@njit(cache=True)
def tf_glauber_trajectory_masks(bits, degree, edge_i, edge_j, p, steps, seed,
                                every, out_masks):
    """Run the conditioned chain writing the edge-set bitmask (pair-index
    order) every `every` steps. Needs C(n,2) <= 62. out_masks must have
    length steps // every."""
    np.random.seed(seed)
    n = degree.shape[0]
    n_pairs = edge_i.shape[0]
    mask = np.int64(0)
    for k in range(n_pairs):
        if _has_edge(bits, edge_i[k], edge_j[k]):
            mask |= np.int64(1) << np.int64(k)
    r = 0
    for t in range(steps):
        k = np.random.randint(0, n_pairs)
        i = edge_i[k]
        j = edge_j[k]
        present = _has_edge(bits, i, j)
        want = False
        if np.random.random() < p:
            want = _common_count(bits, i, j) == 0
        if want and not present:
            _set_edge(bits, degree, i, j)
            mask |= np.int64(1) << np.int64(k)
        elif not want and present:
            _clear_edge(bits, degree, i, j)
            mask &= ~(np.int64(1) << np.int64(k))
        if (t + 1) % every == 0:
            out_masks[r] = mask
            r += 1
    return r


@njit(cache=True)
def tab_chain_run(p_hat, succ_on, succ_off, steps, seed, s0):
    """Heat-bath chain over an explicitly tabulated state space: pick a
    uniform coordinate k, move to succ_on[s,k] with probability p_hat[s,k],
    else succ_off[s,k]. Returns the final state index."""
    np.random.seed(seed)
    n_pairs = p_hat.shape[1]
    s = s0
    for _ in range(steps):
        k = np.random.randint(0, n_pairs)
        if np.random.random() < p_hat[s, k]:
            s = succ_on[s, k]
        else:
            s = succ_off[s, k]
    return s


@njit(cache=True)
def tab_chain_thinned(p_hat, succ_on, succ_off, n_samples, gap, seed, s0, out):
    """Tabulated chain recording the state index every `gap` updates."""
    np.random.seed(seed)
    n_pairs = p_hat.shape[1]
    s = s0
    for r in range(n_samples):
        for _ in range(gap):
            k = np.random.randint(0, n_pairs)
            if np.random.random() < p_hat[s, k]:
                s = succ_on[s, k]
            else:
                s = succ_off[s, k]
        out[r] = s
    return s


@njit(cache=True)
def hc_glauber_run(bits, occ_words, lam, steps, seed):
    """Hard-core heat bath on an explicit host: chosen vertex ends occupied
    iff U < lam/(1+lam) and no neighbor is occupied. occ_words is the
    occupancy bitmask (length = bits.shape[1]). Returns occupied count."""
    np.random.seed(seed)
    n = bits.shape[0]
    W = bits.shape[1]
    p_occ = lam / (1.0 + lam)
    count = 0
    for w in range(W):
        count += int(_popcount64(occ_words[w]))
    for _ in range(steps):
        v = np.random.randint(0, n)
        u = np.random.random()
        vw = v // 64
        vb = np.uint64(v % 64)
        occupied = (occ_words[vw] >> vb) & U1 != np.uint64(0)
        want = False
        if u < p_occ:
            blocked = False
            for w in range(W):
                if bits[v, w] & occ_words[w] != np.uint64(0):
                    blocked = True
                    break
            want = not blocked
        if want and not occupied:
            occ_words[vw] |= U1 << vb
            count += 1
        elif not want and occupied:
            occ_words[vw] &= ~(U1 << vb)
            count -= 1
    return count


@njit(cache=True)
def hc_glauber_sweep_occupancies(bits, occ_words, lam, n_samples, gap, seed, out):
    """Thinned occupancy counts from one hard-core chain: advance `gap`
    updates between samples, writing occupied counts into out[:n_samples]."""
    np.random.seed(seed)
    n = bits.shape[0]
    W = bits.shape[1]
    p_occ = lam / (1.0 + lam)
    count = 0
    for w in range(W):
        count += int(_popcount64(occ_words[w]))
    for s in range(n_samples):
        for _ in range(gap):
            v = np.random.randint(0, n)
            u = np.random.random()
            vw = v // 64
            vb = np.uint64(v % 64)
            occupied = (occ_words[vw] >> vb) & U1 != np.uint64(0)
            want = False
            if u < p_occ:
                blocked = False
                for w in range(W):
                    if bits[v, w] & occ_words[w] != np.uint64(0):
                        blocked = True
                        break
                want = not blocked
            if want and not occupied:
                occ_words[vw] |= U1 << vb
                count += 1
            elif not want and occupied:
                occ_words[vw] &= ~(U1 << vb)
                count -= 1
        out[s] = count
    return count


@njit(cache=True)
def hc_glauber_sweep_chi(bits, occ_words, lam, n_samples, gap, seed,
                         add_i, add_j):
    """Thinned hard-core chain on a host, counting samples whose occupancy
    stays independent after adding the edges (add_i[t], add_j[t]). Returns
    the number of such samples out of n_samples."""
    np.random.seed(seed)
    n = bits.shape[0]
    W = bits.shape[1]
    p_occ = lam / (1.0 + lam)
    hits = 0
    for _ in range(n_samples):
        for _ in range(gap):
            v = np.random.randint(0, n)
            u = np.random.random()
            vw = v // 64
            vb = np.uint64(v % 64)
            occupied = (occ_words[vw] >> vb) & U1 != np.uint64(0)
            want = False
            if u < p_occ:
                blocked = False
                for w in range(W):
                    if bits[v, w] & occ_words[w] != np.uint64(0):
                        blocked = True
                        break
                want = not blocked
            if want and not occupied:
                occ_words[vw] |= U1 << vb
            elif not want and occupied:
                occ_words[vw] &= ~(U1 << vb)
        ok = True
        for t in range(add_i.shape[0]):
            a = add_i[t]
            b = add_j[t]
            a_occ = (occ_words[a // 64] >> np.uint64(a % 64)) & U1
            b_occ = (occ_words[b // 64] >> np.uint64(b % 64)) & U1
            if a_occ & b_occ != np.uint64(0):
                ok = False
                break
        if ok:
            hits += 1
    return hits
