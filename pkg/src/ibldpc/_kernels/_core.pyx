# cython: language_level=3
"""Compiled decoder kernels.

Same calling convention and semantics as :mod:`ibldpc._kernels.purepy`;
integer decoders are bit-identical, belief propagation matches to the
floating-point reproducibility of the identical operation order.
"""

import numpy as np

cimport cython
from libc.math cimport atanh, floor, tanh

BACKEND = "compiled"

DEF MAX_DEG = 512  # per-node scratch; LDPC node degrees are far smaller

cdef double _TANH_CLIP = 1.0 - 1e-12
cdef double _LLR_CLIP = 50.0


@cython.boundscheck(False)
@cython.wraparound(False)
cdef bint _syndrome_ok(const int[::1] cn_ptr, const int[::1] edge_vn,
                       const unsigned char[::1] bits) noexcept nogil:
    cdef int c, ei, parity
    cdef int m = cn_ptr.shape[0] - 1
    for c in range(m):
        parity = 0
        for ei in range(cn_ptr[c], cn_ptr[c + 1]):
            parity ^= bits[edge_vn[ei]]
        if parity:
            return False
    return True


def syndrome(cn_ptr, edge_vn, bits):
    cdef const int[::1] cp = np.ascontiguousarray(cn_ptr, dtype=np.int32)
    cdef const int[::1] ev = np.ascontiguousarray(edge_vn, dtype=np.int32)
    cdef const unsigned char[::1] b = np.ascontiguousarray(bits, dtype=np.uint8)
    return bool(_syndrome_ok(cp, ev, b))


# ---------------------------------------------------------------------------
# lookup-table decoder
# ---------------------------------------------------------------------------

@cython.boundscheck(False)
@cython.wraparound(False)
def decode_ib(const int[::1] vn_ptr, const int[::1] vn_edges,
              const int[::1] cn_ptr, const int[::1] cn_edges,
              const int[::1] edge_vn, const unsigned char[::1] transmitted,
              const unsigned char[:, ::1] v2c_act,
              const unsigned char[:, ::1] c2v_act,
              const unsigned char[:, ::1] vn_first,
              const unsigned char[:, ::1] vn_first_punct,
              const unsigned char[:, :, ::1] vn_stages,
              const unsigned char[:, :, ::1] vn_out_align,
              const unsigned char[:, :, ::1] decision,
              const unsigned char[:, :, ::1] cn_stages,
              const unsigned char[:, :, ::1] cn_out_align,
              const unsigned char[::1] chan_idx, int max_iters, bint early_stop):
    cdef int n = vn_ptr.shape[0] - 1
    cdef int m = cn_ptr.shape[0] - 1
    cdef int e = edge_vn.shape[0]
    msg_v_arr = np.zeros(e, dtype=np.uint8)
    msg_c_arr = np.zeros(e, dtype=np.uint8)
    bits_arr = np.zeros(n, dtype=np.uint8)
    first_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] msg_v = msg_v_arr
    cdef unsigned char[::1] msg_c = msg_c_arr
    cdef unsigned char[::1] bits = bits_arr
    cdef unsigned char[::1] first_bits = first_arr

    cdef int it, ti, c, v, ei, j, q, lo, hi, na, p, cnt, h_app, hh, combined
    cdef int g, cv, t_app, pos
    cdef int first_iter = 0
    cdef bint have_first = False, tx
    cdef bint tie = False  # table decisions cannot tie
    cdef int active[MAX_DEG]
    cdef int vals[MAX_DEG]
    cdef int states[MAX_DEG]
    cdef int incoming[MAX_DEG]

    for ei in range(e):
        if v2c_act[0, ei]:
            msg_v[ei] = chan_idx[edge_vn[ei]]

    for it in range(1, max_iters + 1):
        ti = it - 1
        # ---- check updates ----
        for c in range(m):
            lo = cn_ptr[c]
            hi = cn_ptr[c + 1]
            na = 0
            for ei in range(lo, hi):
                if v2c_act[it - 1, ei]:
                    active[na] = ei
                    vals[na] = msg_v[ei]
                    na += 1
            if na == 0:
                continue
            states[1] = vals[0]
            for j in range(2, na):
                states[j] = cn_stages[ti, j - 2, states[j - 1] * 16 + vals[j - 1]]
            for ei in range(lo, hi):
                if not c2v_act[ti, ei]:
                    continue
                p = -1
                for pos in range(na):
                    if active[pos] == ei:
                        p = pos
                        break
                if p < 0:
                    combined = na
                    if na > 1:
                        g = cn_stages[ti, na - 2, states[na - 1] * 16 + vals[na - 1]]
                    else:
                        g = vals[0]
                elif p == 0:
                    combined = na - 1
                    g = vals[1]
                    cnt = 1
                    for q in range(2, na):
                        g = cn_stages[ti, cnt - 1, g * 16 + vals[q]]
                        cnt += 1
                else:
                    combined = na - 1
                    g = states[p]
                    cnt = p
                    for q in range(p + 1, na):
                        g = cn_stages[ti, cnt - 1, g * 16 + vals[q]]
                        cnt += 1
                msg_c[ei] = cn_out_align[ti, combined, g]
        # ---- variable updates and decisions ----
        for v in range(n):
            lo = vn_ptr[v]
            hi = vn_ptr[v + 1]
            h_app = 0
            for j in range(lo, hi):
                ei = vn_edges[j]
                if c2v_act[ti, ei]:
                    incoming[h_app] = ei
                    vals[h_app] = msg_c[ei]
                    h_app += 1
            tx = transmitted[v]
            cv = chan_idx[v] if tx else 0
            if h_app >= 1:
                if tx:
                    states[1] = vn_first[ti, cv * 16 + vals[0]]
                else:
                    states[1] = vn_first_punct[ti, vals[0]]
            for j in range(2, h_app + 1):
                states[j] = vn_stages[ti, j - 2, states[j - 1] * 16 + vals[j - 1]]
            if tx:
                t_app = cv if h_app == 0 else states[h_app]
                bits[v] = decision[ti, h_app, t_app]
            else:
                bits[v] = 0 if h_app == 0 else decision[ti, h_app, states[h_app]]
            for j in range(lo, hi):
                ei = vn_edges[j]
                if not v2c_act[it, ei]:
                    continue
                p = -1
                for pos in range(h_app):
                    if incoming[pos] == ei:
                        p = pos
                        break
                if p < 0:
                    hh = h_app
                    if hh == 0:
                        msg_v[ei] = vn_out_align[ti, 0, cv]
                    else:
                        msg_v[ei] = vn_out_align[ti, hh, states[hh]]
                else:
                    hh = h_app - 1
                    if hh == 0:
                        if not tx:
                            continue
                        msg_v[ei] = vn_out_align[ti, 0, cv]
                    else:
                        if p == 0:
                            if tx:
                                g = vn_first[ti, cv * 16 + vals[1]]
                            else:
                                g = vn_first_punct[ti, vals[1]]
                            cnt = 1
                            q = 2
                        else:
                            g = states[p]
                            cnt = p
                            q = p + 1
                        while q < h_app:
                            g = vn_stages[ti, cnt - 1, g * 16 + vals[q]]
                            cnt += 1
                            q += 1
                        msg_v[ei] = vn_out_align[ti, hh, g]
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if not have_first:
                first_arr[:] = bits_arr
                first_iter = it
                have_first = True
            if early_stop:
                return bits_arr, it, True, it < max_iters, not tie
    if have_first:
        return first_arr, first_iter, True, first_iter < max_iters, not tie
    return bits_arr, max_iters, False, False, not tie


# ---------------------------------------------------------------------------
# sum-product
# ---------------------------------------------------------------------------

@cython.boundscheck(False)
@cython.wraparound(False)
def decode_bp(const int[::1] vn_ptr, const int[::1] vn_edges,
              const int[::1] cn_ptr, const int[::1] cn_edges,
              const int[::1] edge_vn, llrs, int max_iters, bint early_stop):
    cdef int n = vn_ptr.shape[0] - 1
    cdef int m = cn_ptr.shape[0] - 1
    cdef int e = edge_vn.shape[0]
    lch_arr = np.clip(np.asarray(llrs, dtype=np.float64), -_LLR_CLIP, _LLR_CLIP)
    cdef double[::1] lch = lch_arr
    msg_v_arr = lch_arr[np.asarray(edge_vn)].copy()
    msg_c_arr = np.zeros(e, dtype=np.float64)
    bits_arr = np.zeros(n, dtype=np.uint8)
    first_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] msg_v = msg_v_arr
    cdef double[::1] msg_c = msg_c_arr
    cdef unsigned char[::1] bits = bits_arr

    cdef int it, c, v, j, lo, hi, d, first_iter = 0
    cdef bint have_first = False
    cdef bint tie = False
    cdef double total, p
    cdef double t[MAX_DEG]
    cdef double pre[MAX_DEG]
    cdef double suf[MAX_DEG]

    for it in range(1, max_iters + 1):
        for c in range(m):
            lo = cn_ptr[c]
            hi = cn_ptr[c + 1]
            d = hi - lo
            for j in range(d):
                t[j] = tanh(0.5 * msg_v[lo + j])
            pre[0] = 1.0
            for j in range(d):
                pre[j + 1] = pre[j] * t[j]
            suf[d] = 1.0
            for j in range(d - 1, -1, -1):
                suf[j] = suf[j + 1] * t[j]
            for j in range(d):
                p = pre[j] * suf[j + 1]
                if p > _TANH_CLIP:
                    p = _TANH_CLIP
                elif p < -_TANH_CLIP:
                    p = -_TANH_CLIP
                msg_c[lo + j] = 2.0 * atanh(p)
        for v in range(n):
            lo = vn_ptr[v]
            hi = vn_ptr[v + 1]
            total = lch[v]
            for j in range(lo, hi):
                total += msg_c[vn_edges[j]]
            if total == 0.0:
                tie = True
            bits[v] = 1 if total < 0.0 else 0
            for j in range(lo, hi):
                msg_v[vn_edges[j]] = total - msg_c[vn_edges[j]]
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if not have_first:
                first_arr[:] = bits_arr
                first_iter = it
                have_first = True
            if early_stop:
                return bits_arr, it, True, it < max_iters, not tie
    if have_first:
        return first_arr, first_iter, True, first_iter < max_iters, not tie
    return bits_arr, max_iters, False, False, not tie


# ---------------------------------------------------------------------------
# offset min-sum
# ---------------------------------------------------------------------------

@cython.boundscheck(False)
@cython.wraparound(False)
def decode_oms(const int[::1] vn_ptr, const int[::1] vn_edges,
               const int[::1] cn_ptr, const int[::1] cn_edges,
               const int[::1] edge_vn, chan, int max_iters,
               long offset, long msg_max, long acc_max, bint early_stop):
    cdef int n = vn_ptr.shape[0] - 1
    cdef int m = cn_ptr.shape[0] - 1
    cdef int e = edge_vn.shape[0]
    ch_arr = np.clip(np.asarray(chan, dtype=np.int64), -msg_max, msg_max)
    cdef long[::1] ch = ch_arr
    msg_v_arr = ch_arr[np.asarray(edge_vn)].copy()
    msg_c_arr = np.zeros(e, dtype=np.int64)
    bits_arr = np.zeros(n, dtype=np.uint8)
    first_arr = np.zeros(n, dtype=np.uint8)
    cdef long[::1] msg_v = msg_v_arr
    cdef long[::1] msg_c = msg_c_arr
    cdef unsigned char[::1] bits = bits_arr

    cdef int it, c, v, ei, j, lo, hi, arg1, first_iter = 0
    cdef bint have_first = False
    cdef bint tie = False
    cdef long val, a, min1, min2, sign_prod, s, mag, total, tt

    for it in range(1, max_iters + 1):
        for c in range(m):
            lo = cn_ptr[c]
            hi = cn_ptr[c + 1]
            min1 = 1 << 30
            min2 = 1 << 30
            arg1 = -1
            sign_prod = 1
            for ei in range(lo, hi):
                val = msg_v[ei]
                if val < 0:
                    sign_prod = -sign_prod
                a = -val if val < 0 else val
                if a < min1:
                    min2 = min1
                    min1 = a
                    arg1 = ei
                elif a < min2:
                    min2 = a
            for ei in range(lo, hi):
                val = msg_v[ei]
                s = -1 if val < 0 else 1
                mag = min2 if ei == arg1 else min1
                mag = mag - offset
                if mag < 0:
                    mag = 0
                msg_c[ei] = sign_prod * s * mag
        for v in range(n):
            lo = vn_ptr[v]
            hi = vn_ptr[v + 1]
            total = ch[v]
            for j in range(lo, hi):
                total += msg_c[vn_edges[j]]
            if total > acc_max:
                total = acc_max
            elif total < -acc_max:
                total = -acc_max
            if total == 0:
                tie = True
            bits[v] = 1 if total < 0 else 0
            for j in range(lo, hi):
                ei = vn_edges[j]
                tt = total - msg_c[ei]
                if tt > msg_max:
                    tt = msg_max
                elif tt < -msg_max:
                    tt = -msg_max
                msg_v[ei] = tt
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if not have_first:
                first_arr[:] = bits_arr
                first_iter = it
                have_first = True
            if early_stop:
                return bits_arr, it, True, it < max_iters, not tie
    if have_first:
        return first_arr, first_iter, True, first_iter < max_iters, not tie
    return bits_arr, max_iters, False, False, not tie


# ---------------------------------------------------------------------------
# layered normalized min-sum
# ---------------------------------------------------------------------------

@cython.boundscheck(False)
@cython.wraparound(False)
def decode_nmsa(const int[::1] vn_ptr, const int[::1] vn_edges,
                const int[::1] cn_ptr, const int[::1] cn_edges,
                const int[::1] edge_vn, chan, int max_iters,
                double norm, long msg_max, bint early_stop):
    cdef int n = vn_ptr.shape[0] - 1
    cdef int m = cn_ptr.shape[0] - 1
    cdef int e = edge_vn.shape[0]
    total_arr = np.clip(np.asarray(chan, dtype=np.int64), -msg_max, msg_max).copy()
    msg_c_arr = np.zeros(e, dtype=np.int64)
    bits_arr = np.zeros(n, dtype=np.uint8)
    first_arr = np.zeros(n, dtype=np.uint8)
    cdef long[::1] total = total_arr
    cdef long[::1] msg_c = msg_c_arr
    cdef unsigned char[::1] bits = bits_arr

    cdef int it, c, v, ei, j, d, lo, hi, arg1, first_iter = 0
    cdef bint have_first = False
    cdef bint tie = False
    cdef long t, a, min1, min2, sign_prod, s, mag, m1, m2, new_c
    cdef long v2c[MAX_DEG]

    for it in range(1, max_iters + 1):
        for c in range(m):
            lo = cn_ptr[c]
            hi = cn_ptr[c + 1]
            d = hi - lo
            min1 = 1 << 30
            min2 = 1 << 30
            arg1 = -1
            sign_prod = 1
            for j in range(d):
                ei = lo + j
                t = total[edge_vn[ei]] - msg_c[ei]
                if t > msg_max:
                    t = msg_max
                elif t < -msg_max:
                    t = -msg_max
                v2c[j] = t
                if t < 0:
                    sign_prod = -sign_prod
                a = -t if t < 0 else t
                if a < min1:
                    min2 = min1
                    min1 = a
                    arg1 = j
                elif a < min2:
                    min2 = a
            m1 = <long>floor(norm * min1 + 0.5)
            m2 = <long>floor(norm * min2 + 0.5)
            for j in range(d):
                ei = lo + j
                s = -1 if v2c[j] < 0 else 1
                mag = m2 if j == arg1 else m1
                new_c = sign_prod * s * mag
                t = v2c[j] + new_c
                if t > msg_max:
                    t = msg_max
                elif t < -msg_max:
                    t = -msg_max
                msg_c[ei] = new_c
                total[edge_vn[ei]] = t
        for v in range(n):
            if total[v] == 0:
                tie = True
            bits[v] = 1 if total[v] < 0 else 0
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if not have_first:
                first_arr[:] = bits_arr
                first_iter = it
                have_first = True
            if early_stop:
                return bits_arr, it, True, it < max_iters, not tie
    if have_first:
        return first_arr, first_iter, True, first_iter < max_iters, not tie
    return bits_arr, max_iters, False, False, not tie
