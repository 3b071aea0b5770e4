"""Pure-Python decoder kernels.

Reference implementations of the four message-passing decoders, used as the
fallback when the compiled extension is unavailable.  Semantics match the
compiled kernels exactly: integer decoders are bit-identical, the belief
propagation decoder agrees to floating-point reproducibility of the same
operation order.

All kernels share one calling convention built around a flattened Tanner
graph: edges are sorted by (check, variable); ``vn_ptr``/``vn_edges`` group
edge ids by variable, checks are contiguous ranges ``cn_ptr``.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_TANH_CLIP = 1.0 - 1e-12
_LLR_CLIP = 50.0


def _syndrome_ok(cn_ptr, edge_vn, bits) -> bool:
    for c in range(len(cn_ptr) - 1):
        parity = 0
        for ei in range(cn_ptr[c], cn_ptr[c + 1]):
            parity ^= bits[edge_vn[ei]]
        if parity:
            return False
    return True


def syndrome(cn_ptr, edge_vn, bits) -> bool:
    return _syndrome_ok(cn_ptr, edge_vn, np.asarray(bits, dtype=np.uint8))


# ---------------------------------------------------------------------------
# lookup-table decoder
# ---------------------------------------------------------------------------

def decode_ib(vn_ptr, vn_edges, cn_ptr, cn_edges, edge_vn, transmitted,
              v2c_act, c2v_act, vn_first, vn_first_punct, vn_stages,
              vn_out_align, decision, cn_stages, cn_out_align,
              chan_idx, max_iters, early_stop):
    """Flooding lookup-table decoding; messages are uint8 cluster indices.

    ``v2c_act``/``c2v_act`` are the per-iteration informative-edge masks from
    the offline schedule; inactive inputs are skipped, exactly as the tables
    were designed.  Returns (bits, iterations_used, syndrome_ok, early).
    """
    n = len(vn_ptr) - 1
    m = len(cn_ptr) - 1
    e = len(edge_vn)
    msg_v = np.zeros(e, dtype=np.uint8)
    msg_c = np.zeros(e, dtype=np.uint8)
    bits = np.zeros(n, dtype=np.uint8)
    for ei in range(e):
        if v2c_act[0, ei]:
            msg_v[ei] = chan_idx[edge_vn[ei]]

    first_bits = None
    first_iter = 0
    tie = False  # table decisions cannot tie
    for it in range(1, max_iters + 1):
        ti = it - 1
        # ---- check updates ----
        for c in range(m):
            lo, hi = cn_ptr[c], cn_ptr[c + 1]
            active = [ei for ei in range(lo, hi) if v2c_act[it - 1, ei]]
            if not active:
                continue
            vals = [int(msg_v[ei]) for ei in active]
            na = len(vals)
            # forward chain states: states[j] = combination of vals[0..j-1];
            # the full-depth state is only needed for edges outside the
            # active set, where na is already one short of the check degree
            states = [0] * (na + 1)
            states[1] = vals[0]
            for j in range(2, na):
                states[j] = int(cn_stages[ti, j - 2, states[j - 1] * 16 + vals[j - 1]])
            for ei in range(lo, hi):
                if not c2v_act[ti, ei]:
                    continue
                p = active.index(ei) if ei in active else -1
                if p < 0:
                    combined = na
                    g = states[na - 1] if na > 1 else vals[0]
                    if na > 1:
                        g = int(cn_stages[ti, na - 2, g * 16 + vals[na - 1]])
                elif p == 0:
                    combined = na - 1
                    g = vals[1]
                    cnt = 1
                    for q in range(2, na):
                        g = int(cn_stages[ti, cnt - 1, g * 16 + vals[q]])
                        cnt += 1
                else:
                    combined = na - 1
                    g = states[p]
                    cnt = p
                    for q in range(p + 1, na):
                        g = int(cn_stages[ti, cnt - 1, g * 16 + vals[q]])
                        cnt += 1
                msg_c[ei] = cn_out_align[ti, combined, g]
        # ---- variable updates and decisions ----
        for v in range(n):
            lo, hi = vn_ptr[v], vn_ptr[v + 1]
            incoming = [int(vn_edges[j]) for j in range(lo, hi)
                        if c2v_act[ti, vn_edges[j]]]
            vals = [int(msg_c[ei]) for ei in incoming]
            h_app = len(vals)
            tx = bool(transmitted[v])
            cv = int(chan_idx[v]) if tx else 0
            states = [0] * (h_app + 1)
            if h_app >= 1:
                states[1] = int(vn_first[ti, cv * 16 + vals[0]]) if tx \
                    else int(vn_first_punct[ti, vals[0]])
            for j in range(2, h_app + 1):
                states[j] = int(vn_stages[ti, j - 2, states[j - 1] * 16 + vals[j - 1]])
            if tx:
                bits[v] = decision[ti, h_app, cv if h_app == 0 else states[h_app]]
            else:
                bits[v] = 0 if h_app == 0 else decision[ti, h_app, states[h_app]]
            for j in range(lo, hi):
                ei = int(vn_edges[j])
                if not v2c_act[it, ei]:
                    continue
                p = incoming.index(ei) if ei in incoming else -1
                if p < 0:
                    hh = h_app
                    if hh == 0:
                        out = vn_out_align[ti, 0, cv]  # schedule: tx only
                    else:
                        out = vn_out_align[ti, hh, states[hh]]
                else:
                    hh = h_app - 1
                    if hh == 0:
                        if not tx:
                            continue  # schedule marks such edges inactive
                        out = vn_out_align[ti, 0, cv]
                    else:
                        if p == 0:
                            g = int(vn_first[ti, cv * 16 + vals[1]]) if tx \
                                else int(vn_first_punct[ti, vals[1]])
                            cnt = 1
                            qstart = 2
                        else:
                            g = states[p]
                            cnt = p
                            qstart = p + 1
                        for q in range(qstart, h_app):
                            g = int(vn_stages[ti, cnt - 1, g * 16 + vals[q]])
                            cnt += 1
                        out = vn_out_align[ti, hh, g]
                msg_v[ei] = out
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if first_bits is None:
                first_bits = bits.copy()
                first_iter = it
            if early_stop:
                return bits, it, True, it < max_iters, not tie
    if first_bits is not None:
        return first_bits, first_iter, True, first_iter < max_iters, not tie
    return bits, max_iters, False, False, not tie


# ---------------------------------------------------------------------------
# sum-product (flooding, tanh rule)
# ---------------------------------------------------------------------------

def decode_bp(vn_ptr, vn_edges, cn_ptr, cn_edges, edge_vn, llrs, max_iters,
              early_stop):
    n = len(vn_ptr) - 1
    m = len(cn_ptr) - 1
    e = len(edge_vn)
    lch = np.clip(np.asarray(llrs, dtype=np.float64), -_LLR_CLIP, _LLR_CLIP)
    msg_v = lch[edge_vn].copy()
    msg_c = np.zeros(e, dtype=np.float64)
    bits = np.zeros(n, dtype=np.uint8)
    first_bits = None
    first_iter = 0
    tie = False
    for it in range(1, max_iters + 1):
        for c in range(m):
            lo, hi = cn_ptr[c], cn_ptr[c + 1]
            d = hi - lo
            t = [math.tanh(0.5 * msg_v[ei]) for ei in range(lo, hi)]
            pre = [1.0] * (d + 1)
            for j in range(d):
                pre[j + 1] = pre[j] * t[j]
            suf = [1.0] * (d + 1)
            for j in range(d - 1, -1, -1):
                suf[j] = suf[j + 1] * t[j]
            for j in range(d):
                p = pre[j] * suf[j + 1]
                p = max(-_TANH_CLIP, min(_TANH_CLIP, p))
                msg_c[lo + j] = 2.0 * math.atanh(p)
        for v in range(n):
            lo, hi = vn_ptr[v], vn_ptr[v + 1]
            total = lch[v]
            for j in range(lo, hi):
                total += msg_c[vn_edges[j]]
            if total == 0.0:
                tie = True
            bits[v] = 1 if total < 0.0 else 0
            for j in range(lo, hi):
                ei = vn_edges[j]
                msg_v[ei] = total - msg_c[ei]
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if first_bits is None:
                first_bits = bits.copy()
                first_iter = it
            if early_stop:
                return bits, it, True, it < max_iters, not tie
    if first_bits is not None:
        return first_bits, first_iter, True, first_iter < max_iters, not tie
    return bits, max_iters, False, False, not tie


# ---------------------------------------------------------------------------
# offset min-sum (flooding, saturating integers)
# ---------------------------------------------------------------------------

def decode_oms(vn_ptr, vn_edges, cn_ptr, cn_edges, edge_vn, chan, max_iters,
               offset, msg_max, acc_max, early_stop):
    n = len(vn_ptr) - 1
    m = len(cn_ptr) - 1
    e = len(edge_vn)
    ch = np.clip(np.asarray(chan, dtype=np.int64), -msg_max, msg_max)
    msg_v = ch[edge_vn].copy()
    msg_c = np.zeros(e, dtype=np.int64)
    bits = np.zeros(n, dtype=np.uint8)
    first_bits = None
    first_iter = 0
    tie = False
    for it in range(1, max_iters + 1):
        for c in range(m):
            lo, hi = cn_ptr[c], cn_ptr[c + 1]
            min1, min2, arg1 = 1 << 30, 1 << 30, -1
            sign_prod = 1
            for ei in range(lo, hi):
                v = msg_v[ei]
                if v < 0:
                    sign_prod = -sign_prod
                a = -v if v < 0 else v
                if a < min1:
                    min2 = min1
                    min1 = a
                    arg1 = ei
                elif a < min2:
                    min2 = a
            for ei in range(lo, hi):
                v = msg_v[ei]
                s = -1 if v < 0 else 1
                mag = min2 if ei == arg1 else min1
                mag = mag - offset
                if mag < 0:
                    mag = 0
                msg_c[ei] = sign_prod * s * mag
        for v in range(n):
            lo, hi = vn_ptr[v], vn_ptr[v + 1]
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
                t = total - msg_c[ei]
                if t > msg_max:
                    t = msg_max
                elif t < -msg_max:
                    t = -msg_max
                msg_v[ei] = t
        if _syndrome_ok(cn_ptr, edge_vn, bits):
            if first_bits is None:
                first_bits = bits.copy()
                first_iter = it
            if early_stop:
                return bits, it, True, it < max_iters, not tie
    if first_bits is not None:
        return first_bits, first_iter, True, first_iter < max_iters, not tie
    return bits, max_iters, False, False, not tie


# ---------------------------------------------------------------------------
# layered normalized min-sum (row-sequential sweeps, saturating integers)
# ---------------------------------------------------------------------------

def decode_nmsa(vn_ptr, vn_edges, cn_ptr, cn_edges, edge_vn, chan, max_iters,
                norm, msg_max, early_stop):
    n = len(vn_ptr) - 1
    m = len(cn_ptr) - 1
    e = len(edge_vn)
    total = np.clip(np.asarray(chan, dtype=np.int64), -msg_max, msg_max).copy()
    msg_c = np.zeros(e, dtype=np.int64)
    bits = np.zeros(n, dtype=np.uint8)
    dmax = int(np.max(np.diff(cn_ptr))) if m else 1
    v2c = np.zeros(max(dmax, 1), dtype=np.int64)
    first_bits = None
    first_iter = 0
    tie = False
    for it in range(1, max_iters + 1):
        for c in range(m):
            lo, hi = cn_ptr[c], cn_ptr[c + 1]
            d = hi - lo
            min1, min2, arg1 = 1 << 30, 1 << 30, -1
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
            m1 = int(math.floor(norm * min1 + 0.5))
            m2 = int(math.floor(norm * min2 + 0.5))
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
            if first_bits is None:
                first_bits = bits.copy()
                first_iter = it
            if early_stop:
                return bits, it, True, it < max_iters, not tie
    if first_bits is not None:
        return first_bits, first_iter, True, first_iter < max_iters, not tie
    return bits, max_iters, False, False, not tie
