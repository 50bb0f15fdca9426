"""Compiled inner loops: count tables, mixing, binary range coding.

Everything here works on flat numpy arrays so numba can compile it. The
Python-facing wrappers live in ``context_models``, ``rangecoder`` and
``builtin_codec``.

Model description rows (``mi``) have the columns below. Count tables of
all models share one flat ``uint16`` array; ``COFF`` is a model's element
offset into it.
"""

import math

import numpy as np
from numba import njit

ORDER, KIND, MAXSUB, HASHED, TBITS, COFF = range(6)
KIND_FCM, KIND_STCM = 0, 1

COUNT_LIMIT = 65535
PROB_BITS = 24
PROB_ONE = 1 << PROB_BITS
TOP = np.uint64(1 << 24)
LN2 = math.log(2.0)

_U8 = np.uint64(8)
_U24 = np.uint64(24)
_U32 = np.uint64(32)
_UFF = np.uint64(0xFF)
_LOW24 = np.uint64(0x00FFFFFF)
_LOW32 = np.uint64(0xFFFFFFFF)
_HIGH8 = np.uint64(0xFF000000)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_U2 = np.uint64(2)
_U27 = np.uint64(27)
_U30 = np.uint64(30)
_U31 = np.uint64(31)
_U64 = np.uint64(64)
_U1 = np.uint64(1)
_U0 = np.uint64(0)


@njit(cache=True, inline="always")
def mix64(x):
    x = (x + _GOLD) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = (x ^ (x >> _U30)) * _M1
    x = (x ^ (x >> _U27)) * _M2
    return x ^ (x >> _U31)


@njit(cache=True)
def fnv1a64_kernel(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h


# ---------------------------------------------------------------- counts


@njit(cache=True, inline="always")
def _hash_slot(m, ctx, mi):
    x = mix64(ctx)
    slot = np.int64(x >> np.uint64(64 - mi[m, TBITS]))
    return mi[m, COFF] + slot * 8, (x & _LOW32) | _U1


@njit(cache=True, inline="always")
def _stored_fp(base, counts):
    return np.uint64(counts[base + 4]) | (np.uint64(counts[base + 5]) << np.uint64(16))


@njit(cache=True, inline="always")
def lookup(m, ctx, mi, counts):
    """Element offset of the four counters of ``ctx`` in model ``m``, or -1 when absent.

    Exact tables use four counters per context. Hashed tables use eight
    uint16 per slot: four counters, then the 32-bit fingerprint.
    """
    if mi[m, HASHED] == 0:
        return mi[m, COFF] + np.int64(ctx) * 4
    # one 32-bit compare; a two-part test here defeats the optimizer
    base, fp = _hash_slot(m, ctx, mi)
    if _stored_fp(base, counts) == fp:
        return base
    return -1


@njit(cache=True, inline="always")
def update_count(m, ctx, s, mi, counts):
    if mi[m, HASHED] == 0:
        base = mi[m, COFF] + np.int64(ctx) * 4
    else:
        base, fp = _hash_slot(m, ctx, mi)
        if _stored_fp(base, counts) != fp:
            # replace on collision
            counts[base + 4] = np.uint16(fp & np.uint64(0xFFFF))
            counts[base + 5] = np.uint16(fp >> np.uint64(16))
            for t in range(4):
                counts[base + t] = 0
    c = np.int64(counts[base + s]) + 1
    if c >= COUNT_LIMIT:
        for t in range(4):
            counts[base + t] = np.uint16(np.int64(counts[base + t]) >> 1)
        c = np.int64(counts[base + s]) + 1
    counts[base + s] = np.uint16(c)


@njit(cache=True)
def train_kernel(seq, offs, mi, masks, counts):
    """One left-to-right counting pass per sequence; contexts reset between sequences."""
    M = mi.shape[0]
    for r in range(offs.shape[0] - 1):
        h = np.uint64(0)
        filled = 0
        for j in range(offs[r], offs[r + 1]):
            s = np.int64(seq[j])
            for m in range(M):
                if filled >= mi[m, ORDER]:
                    update_count(m, h & masks[m], s, mi, counts)
            h = (h << _U2) | np.uint64(s)
            filled += 1


# ---------------------------------------------------------------- prediction
#
# Per-symbol work is split in two fused passes over the models so the
# mixed distribution stays in registers: ``_predict`` fills ``pr`` (four
# entries per model) and returns the floored mixture, ``_advance`` updates
# the log-weights ``u`` and the tolerant contexts once the symbol is known.
# Weights are exp(u - umax) normalised by their sum.


@njit(cache=True, inline="always")
def _predict(h, ph, misses, filled, u, umax, mi, masks, alphas, falphas, counts, pr, argm, floor):
    M = mi.shape[0]
    q0 = 0.0
    q1 = 0.0
    q2 = 0.0
    q3 = 0.0
    wt = 0.0
    for m in range(M):
        wm = math.exp(u[m] - umax)
        wt += wm
        argm[m] = -1
        p0 = 0.25
        p1 = 0.25
        p2 = 0.25
        p3 = 0.25
        if filled >= mi[m, ORDER]:
            a = alphas[m]
            if mi[m, KIND] == KIND_STCM:
                ctx = ph[m] & masks[m]
                if misses[m] > 0:
                    a = falphas[m]
            else:
                ctx = h & masks[m]
            base = lookup(m, ctx, mi, counts)
            if base >= 0:
                c0 = np.float64(counts[base])
                c1 = np.float64(counts[base + 1])
                c2 = np.float64(counts[base + 2])
                c3 = np.float64(counts[base + 3])
                tot = c0 + c1 + c2 + c3
                if tot > 0.0:
                    den = tot + 4.0 * a
                    p0 = (c0 + a) / den
                    p1 = (c1 + a) / den
                    p2 = (c2 + a) / den
                    p3 = (c3 + a) / den
                    best = 0
                    bc = c0
                    if c1 > bc:
                        best = 1
                        bc = c1
                    if c2 > bc:
                        best = 2
                        bc = c2
                    if c3 > bc:
                        best = 3
                    argm[m] = best
        k = 4 * m
        pr[k] = p0
        pr[k + 1] = p1
        pr[k + 2] = p2
        pr[k + 3] = p3
        q0 += wm * p0
        q1 += wm * p1
        q2 += wm * p2
        q3 += wm * p3
    q0 /= wt
    q1 /= wt
    q2 /= wt
    q3 /= wt
    return _floor4(q0, q1, q2, q3, floor)


@njit(cache=True, inline="always")
def _floor4(q0, q1, q2, q3, floor):
    """Lift entries below ``floor``; the most probable symbol pays for it."""
    best = 0
    qb = q0
    if q1 > qb:
        best = 1
        qb = q1
    if q2 > qb:
        best = 2
        qb = q2
    if q3 > qb:
        best = 3
    deficit = 0.0
    if (best != 0) & (q0 < floor):
        deficit += floor - q0
        q0 = floor
    if (best != 1) & (q1 < floor):
        deficit += floor - q1
        q1 = floor
    if (best != 2) & (q2 < floor):
        deficit += floor - q2
        q2 = floor
    if (best != 3) & (q3 < floor):
        deficit += floor - q3
        q3 = floor
    if best == 0:
        q0 -= deficit
    elif best == 1:
        q1 -= deficit
    elif best == 2:
        q2 -= deficit
    else:
        q3 -= deficit
    return q0, q1, q2, q3


@njit(cache=True, inline="always")
def _advance(s, h, ph, misses, filled, u, mi, pr, argm, gamma):
    """Returns (new history, new max log-weight)."""
    M = mi.shape[0]
    us = np.uint64(s)
    hn = (h << _U2) | us
    umax = -1e300
    for m in range(M):
        um = gamma * (u[m] + math.log(pr[4 * m + s]))
        u[m] = um
        if um > umax:
            umax = um
        if mi[m, KIND] == KIND_STCM:
            if (filled < mi[m, ORDER]) | (argm[m] < 0):
                # warming up or unseen context: resync to the true history
                ph[m] = hn
                misses[m] = 0
            elif argm[m] == s:
                ph[m] = (ph[m] << _U2) | us
                misses[m] = 0
            else:
                misses[m] += 1
                if misses[m] > mi[m, MAXSUB]:
                    ph[m] = hn
                    misses[m] = 0
                else:
                    ph[m] = (ph[m] << _U2) | np.uint64(argm[m])
    return hn, umax


@njit(cache=True, inline="always")
def _pick(s, q0, q1, q2, q3):
    if s == 0:
        return q0
    if s == 1:
        return q1
    if s == 2:
        return q2
    return q3


@njit(cache=True, inline="always")
def _reset_state(w0, u, ph, misses):
    umax = -1e300
    for m in range(u.shape[0]):
        u[m] = math.log(w0[m])
        if u[m] > umax:
            umax = u[m]
        ph[m] = 0
        misses[m] = 0
    return umax


@njit(cache=True)
def estimate_kernel(seq, offs, which, limits, mi, masks, alphas, falphas, counts, w0, gamma, floor, out):
    """Frozen code lengths (bits) of sequences ``which``; stops early past ``limits``."""
    M = mi.shape[0]
    pr = np.empty(4 * M)
    argm = np.empty(M, np.int64)
    u = np.empty(M)
    ph = np.empty(M, np.uint64)
    misses = np.empty(M, np.int64)
    for qi in range(which.shape[0]):
        r = which[qi]
        limit = limits[qi]
        umax = _reset_state(w0, u, ph, misses)
        h = np.uint64(0)
        filled = 0
        bits = 0.0
        for j in range(offs[r], offs[r + 1]):
            s = np.int64(seq[j])
            q0, q1, q2, q3 = _predict(h, ph, misses, filled, u, umax, mi, masks, alphas,
                                      falphas, counts, pr, argm, floor)
            bits -= math.log2(_pick(s, q0, q1, q2, q3))
            h, umax = _advance(s, h, ph, misses, filled, u, mi, pr, argm, gamma)
            filled += 1
            if bits > limit:
                break
        out[qi] = bits


@njit(cache=True)
def point_probability(ctx_syms, mi, masks, alphas, falphas, counts, w0, floor, q):
    """Mixed distribution after an explicit context (no tolerant-context state)."""
    M = mi.shape[0]
    pr = np.empty(4 * M)
    argm = np.empty(M, np.int64)
    u = np.empty(M)
    ph = np.empty(M, np.uint64)
    misses = np.zeros(M, np.int64)
    umax = _reset_state(w0, u, ph, misses)
    h = np.uint64(0)
    for j in range(ctx_syms.shape[0]):
        h = (h << _U2) | np.uint64(ctx_syms[j])
    for m in range(M):
        ph[m] = h
    q[0], q[1], q[2], q[3] = _predict(h, ph, misses, ctx_syms.shape[0], u, umax, mi, masks,
                                      alphas, falphas, counts, pr, argm, floor)


# ---------------------------------------------------------------- range coder
#
# Binary range coder with carry propagation (LZMA layout): 32-bit range,
# 33-bit low, one cached byte plus a run of pending 0xFF bytes. Coder
# state lives in local variables of each kernel; the bit step itself is
# written out at every call site because numba does not keep a returned
# state tuple in registers. Only the rare byte flush is a helper.
#
#   encode:  bound = (rng * p0) >> 24; bit 0 keeps [low, low+bound),
#            bit 1 takes the rest; renormalise while rng < 2**24.
#   decode:  mirror image on ``code``.


@njit(cache=True)
def _grow(buf, need):
    size = buf.shape[0] * 2 + 1024
    while size < need:
        size *= 2
    nb = np.empty(size, np.uint8)
    nb[: buf.shape[0]] = buf
    return nb


@njit(cache=True)
def _reserve(buf, need):
    if need > buf.shape[0]:
        return _grow(buf, need)
    return buf


# Worst-case output bytes per coded decision (24-bit probabilities), used
# to reserve room once per chunk: reassigning the buffer inside a hot loop
# costs numba a reference-count round trip per iteration.
BYTES_PER_DECISION = 3
CHUNK = 4096


@njit(cache=True, inline="always")
def _shift_low(low, cache, csz, pos, buf):
    """Emit the settled top byte of ``low``; returns (low, cache, csz, pos)."""
    if ((low & _LOW32) < _HIGH8) | ((low >> _U32) != _U0):
        carry = low >> _U32
        temp = cache
        while csz > 0:
            buf[pos] = np.uint8((temp + carry) & _UFF)
            pos += 1
            temp = _UFF
            csz -= 1
        cache = (low >> _U24) & _UFF
    return (low & _LOW24) << _U8, cache, csz + 1, pos


@njit(cache=True)
def _finish(low, cache, csz, pos, buf):
    if pos + csz + 16 > buf.shape[0]:
        buf = _grow(buf, pos + csz + 16)
    for _ in range(5):
        low, cache, csz, pos = _shift_low(low, cache, csz, pos, buf)
    return buf[:pos].copy()


@njit(cache=True, inline="always")
def quantize(p0):
    q = np.int64(p0 * PROB_ONE + 0.5)
    if q < 1:
        q = 1
    elif q > PROB_ONE - 1:
        q = PROB_ONE - 1
    return np.uint64(q)


@njit(cache=True, inline="always")
def _byte_at(data, pos):
    if pos < data.shape[0]:
        return np.uint64(data[pos])
    return _U0


@njit(cache=True, inline="always")
def _dec_start(data):
    code = _U0
    for i in range(5):
        code = (code << _U8) | _byte_at(data, i)
    return code & _LOW32


@njit(cache=True, inline="always")
def _dna_p0(hi, q0, q1, q2, q3, k):
    """P(bit == 0) of decision ``k`` (0: high bit, 1: low bit under ``hi``)."""
    if k == 0:
        return q0 + q1
    if hi == 0:
        return q0 / (q0 + q1)
    return q2 / (q2 + q3)


@njit(cache=True)
def encode_quad_stream(probs, syms):
    """Code 4-ary symbols under explicit distributions via two binary decisions."""
    low = _U0
    rng = _LOW32
    cache = _U0
    csz = 1
    pos = 0
    n = syms.shape[0]
    buf = np.empty(n // 2 + 1024, np.uint8)
    for start in range(0, n, CHUNK):
        buf = _reserve(buf, pos + csz + 2 * BYTES_PER_DECISION * CHUNK)
        for i in range(start, min(start + CHUNK, n)):
            s = np.int64(syms[i])
            hi = s >> 1
            for k in range(2):
                p0 = quantize(_dna_p0(hi, probs[i, 0], probs[i, 1], probs[i, 2], probs[i, 3], k))
                bit = hi if k == 0 else s & 1
                bound = (rng * p0) >> _U24
                if bit == 0:
                    rng = bound
                else:
                    low += bound
                    rng -= bound
                while rng < TOP:
                    rng <<= _U8
                    low, cache, csz, pos = _shift_low(low, cache, csz, pos, buf)
    return _finish(low, cache, csz, pos, buf)


@njit(cache=True)
def decode_quad_stream(data, probs):
    n = probs.shape[0]
    out = np.empty(n, np.uint8)
    rng = _LOW32
    code = _dec_start(data)
    pos = 5
    for i in range(n):
        hi = 0
        lo = 0
        for k in range(2):
            p0 = quantize(_dna_p0(hi, probs[i, 0], probs[i, 1], probs[i, 2], probs[i, 3], k))
            bound = (rng * p0) >> _U24
            if code < bound:
                rng = bound
                bit = 0
            else:
                code -= bound
                rng -= bound
                bit = 1
            while rng < TOP:
                rng <<= _U8
                code = ((code << _U8) | _byte_at(data, pos)) & _LOW32
                pos += 1
            if k == 0:
                hi = bit
            else:
                lo = bit
        out[i] = hi * 2 + lo
    return out, pos


# ---------------------------------------------------------------- adaptive DNA coding


@njit(cache=True, inline="always")
def _dna_adapt(s, h, filled, mi, masks, counts):
    M = mi.shape[0]
    for m in range(M):
        if filled >= mi[m, ORDER]:
            update_count(m, h & masks[m], s, mi, counts)


@njit(cache=True)
def dna_encode_kernel(syms, mi, masks, alphas, falphas, counts, w0, gamma, floor):
    """Adaptive ensemble coding of a 2-bit symbol stream; returns (bytes, model bits)."""
    M = mi.shape[0]
    pr = np.empty(4 * M)
    argm = np.empty(M, np.int64)
    u = np.empty(M)
    ph = np.empty(M, np.uint64)
    misses = np.empty(M, np.int64)
    umax = _reset_state(w0, u, ph, misses)
    low = _U0
    rng = _LOW32
    cache = _U0
    csz = 1
    pos = 0
    n = syms.shape[0]
    buf = np.empty(n // 3 + 1024, np.uint8)
    h = np.uint64(0)
    filled = 0
    bits = 0.0
    for start in range(0, n, CHUNK):
        buf = _reserve(buf, pos + csz + 2 * BYTES_PER_DECISION * CHUNK)
        for j in range(start, min(start + CHUNK, n)):
            s = np.int64(syms[j])
            q0, q1, q2, q3 = _predict(h, ph, misses, filled, u, umax, mi, masks, alphas,
                                      falphas, counts, pr, argm, floor)
            bits -= math.log2(_pick(s, q0, q1, q2, q3))
            hi = s >> 1
            for k in range(2):
                p0 = quantize(_dna_p0(hi, q0, q1, q2, q3, k))
                bit = hi if k == 0 else s & 1
                bound = (rng * p0) >> _U24
                if bit == 0:
                    rng = bound
                else:
                    low += bound
                    rng -= bound
                while rng < TOP:
                    rng <<= _U8
                    low, cache, csz, pos = _shift_low(low, cache, csz, pos, buf)
            _dna_adapt(s, h, filled, mi, masks, counts)
            h, umax = _advance(s, h, ph, misses, filled, u, mi, pr, argm, gamma)
            filled += 1
    return _finish(low, cache, csz, pos, buf), bits


@njit(cache=True)
def dna_decode_kernel(data, n, mi, masks, alphas, falphas, counts, w0, gamma, floor):
    M = mi.shape[0]
    pr = np.empty(4 * M)
    argm = np.empty(M, np.int64)
    u = np.empty(M)
    ph = np.empty(M, np.uint64)
    misses = np.empty(M, np.int64)
    umax = _reset_state(w0, u, ph, misses)
    out = np.empty(n, np.uint8)
    rng = _LOW32
    code = _dec_start(data)
    pos = 5
    h = np.uint64(0)
    filled = 0
    for j in range(n):
        q0, q1, q2, q3 = _predict(h, ph, misses, filled, u, umax, mi, masks, alphas,
                                  falphas, counts, pr, argm, floor)
        hi = 0
        lo = 0
        for k in range(2):
            p0 = quantize(_dna_p0(hi, q0, q1, q2, q3, k))
            bound = (rng * p0) >> _U24
            if code < bound:
                rng = bound
                bit = 0
            else:
                code -= bound
                rng -= bound
                bit = 1
            while rng < TOP:
                rng <<= _U8
                code = ((code << _U8) | _byte_at(data, pos)) & _LOW32
                pos += 1
            if k == 0:
                hi = bit
            else:
                lo = bit
        s = hi * 2 + lo
        out[j] = s
        _dna_adapt(s, h, filled, mi, masks, counts)
        h, umax = _advance(s, h, ph, misses, filled, u, mi, pr, argm, gamma)
        filled += 1
    return out, pos


# ---------------------------------------------------------------- archive DNA model
#
# The archive's sequence coder is a single hashed FCM with a compact slot:
# two uint32 words, four 8-bit counters and a 32-bit fingerprint, so 2**18
# slots fit in 2 MiB. A counter about to pass 255 halves all four.
# Unknown contexts (fingerprint mismatch) predict uniformly and take over
# the slot on update.

_FF32 = np.uint32(0xFF)
_HALF_MASK = np.uint32(0x7F7F7F7F)


@njit(cache=True, inline="always")
def _arc_slot(h, mask, shift):
    x = mix64(h & mask)
    return np.int64(x >> shift) * 2, np.uint32((x & _LOW32) | _U1)


@njit(cache=True, inline="always")
def _arc_probs(w, alpha, floor):
    c0 = np.float64(w & _FF32)
    c1 = np.float64((w >> np.uint32(8)) & _FF32)
    c2 = np.float64((w >> np.uint32(16)) & _FF32)
    c3 = np.float64(w >> np.uint32(24))
    tot = c0 + c1 + c2 + c3
    if tot > 0.0:
        den = tot + 4.0 * alpha
        return _floor4((c0 + alpha) / den, (c1 + alpha) / den, (c2 + alpha) / den,
                       (c3 + alpha) / den, floor)
    return _floor4(0.25, 0.25, 0.25, 0.25, floor)


@njit(cache=True, inline="always")
def _arc_bump(w, s):
    sh = np.uint32(8 * s)
    if ((w >> sh) & _FF32) == _FF32:
        w = (w >> np.uint32(1)) & _HALF_MASK
    return w + (np.uint32(1) << sh)


@njit(cache=True, inline="always")
def _arc_setup(order, bits):
    mask = (_U1 << np.uint64(2 * order)) - _U1 if order < 32 else ~_U0
    return np.zeros(2 << bits, np.uint32), mask, np.uint64(64 - bits)


@njit(cache=True)
def arc_encode_kernel(syms, order, bits, alpha, floor):
    """Returns (bytes, model code length in bits)."""
    tab, mask, shift = _arc_setup(order, bits)
    low = _U0
    rng = _LOW32
    cache = _U0
    csz = 1
    pos = 0
    n = syms.shape[0]
    buf = np.empty(n // 3 + 1024, np.uint8)
    h = np.uint64(0)
    bits_total = 0.0
    for start in range(0, n, CHUNK):
        buf = _reserve(buf, pos + csz + 2 * BYTES_PER_DECISION * CHUNK)
        for j in range(start, min(start + CHUNK, n)):
            s = np.int64(syms[j])
            b, fp = _arc_slot(h, mask, shift)
            w = tab[b]
            if tab[b + 1] != fp:
                w = np.uint32(0)
            q0, q1, q2, q3 = _arc_probs(w, alpha, floor)
            bits_total -= math.log2(_pick(s, q0, q1, q2, q3))
            hi = s >> 1
            for k in range(2):
                p0 = quantize(_dna_p0(hi, q0, q1, q2, q3, k))
                bit = hi if k == 0 else s & 1
                bound = (rng * p0) >> _U24
                if bit == 0:
                    rng = bound
                else:
                    low += bound
                    rng -= bound
                while rng < TOP:
                    rng <<= _U8
                    low, cache, csz, pos = _shift_low(low, cache, csz, pos, buf)
            tab[b] = _arc_bump(w, s)
            tab[b + 1] = fp
            h = (h << _U2) | np.uint64(s)
    return _finish(low, cache, csz, pos, buf), bits_total


@njit(cache=True)
def arc_decode_kernel(data, n, order, bits, alpha, floor):
    tab, mask, shift = _arc_setup(order, bits)
    out = np.empty(n, np.uint8)
    rng = _LOW32
    code = _dec_start(data)
    pos = 5
    h = np.uint64(0)
    for j in range(n):
        b, fp = _arc_slot(h, mask, shift)
        w = tab[b]
        if tab[b + 1] != fp:
            w = np.uint32(0)
        q0, q1, q2, q3 = _arc_probs(w, alpha, floor)
        hi = 0
        lo = 0
        for k in range(2):
            p0 = quantize(_dna_p0(hi, q0, q1, q2, q3, k))
            bound = (rng * p0) >> _U24
            if code < bound:
                rng = bound
                bit = 0
            else:
                code -= bound
                rng -= bound
                bit = 1
            while rng < TOP:
                rng <<= _U8
                code = ((code << _U8) | _byte_at(data, pos)) & _LOW32
                pos += 1
            if k == 0:
                hi = bit
            else:
                lo = bit
        s = hi * 2 + lo
        out[j] = s
        tab[b] = _arc_bump(w, s)
        tab[b + 1] = fp
        h = (h << _U2) | np.uint64(s)
    return out, pos


# ---------------------------------------------------------------- byte-level context models
#
# Symbols are coded MSB first through a binary tree; each tree node under
# a context owns a pair of adaptive counts, interleaved in ``nn``.


BYTE_LIMIT = 255

# 2**24 / (n + 0.8): turns the estimate (n0 + 0.4) / (n + 0.8) into one
# multiply
_RECIP = PROB_ONE / (np.arange(BYTE_LIMIT + 2) + 0.8)


@njit(cache=True, inline="always")
def _bit_q(nn, idx):
    """Quantised P(bit == 0) of a tree node."""
    n0 = nn[2 * idx]
    q = np.int64((n0 + 0.4) * _RECIP[n0 + nn[2 * idx + 1]] + 0.5)
    if q < 1:
        q = 1
    elif q > PROB_ONE - 1:
        q = PROB_ONE - 1
    return np.uint64(q)


@njit(cache=True, inline="always")
def _bit_update(nn, qq, idx, bit, limit):
    nn[2 * idx + bit] += 1
    if nn[2 * idx] + nn[2 * idx + 1] > limit:
        nn[2 * idx] = (nn[2 * idx] + 1) >> 1
        nn[2 * idx + 1] = (nn[2 * idx + 1] + 1) >> 1
    # cached so the next visit is a single load
    qq[idx] = _bit_q(nn, idx)


_Q_HALF = 1 << 23


MAX_BYTE_CTX_BITS = 14


def byte_ctx_bits(n):
    """Context hash width for an ``n``-byte stream: small streams get small tables."""
    return int(min(MAX_BYTE_CTX_BITS, max(4, int(n).bit_length() - 6)))


@njit(cache=True, inline="always")
def _byte_ctx(c1, c2, c3, cbits):
    x = mix64(np.uint64(c1 | (c2 << 8) | (c3 << 16)))
    return np.int64(x >> np.uint64(64 - cbits)) << 8


@njit(cache=True)
def bytes_encode_kernel(data, cbits):
    """Order-3 byte context model; contexts are hashed into 2**cbits buckets."""
    nn = np.zeros(2 << (cbits + 8), np.int32)
    qq = np.full(1 << (cbits + 8), _Q_HALF, np.uint32)
    low = _U0
    rng = _LOW32
    cache = _U0
    csz = 1
    pos = 0
    buf = np.empty(data.shape[0] // 2 + 1024, np.uint8)
    c1 = 0
    c2 = 0
    c3 = 0
    n = data.shape[0]
    for start in range(0, n, CHUNK):
        buf = _reserve(buf, pos + csz + 8 * BYTES_PER_DECISION * CHUNK)
        for i in range(start, min(start + CHUNK, n)):
            byte = np.int64(data[i])
            base = _byte_ctx(c1, c2, c3, cbits)
            node = 1
            for k in range(7, -1, -1):
                bit = (byte >> k) & 1
                idx = base + node
                bound = (rng * np.uint64(qq[idx])) >> _U24
                if bit == 0:
                    rng = bound
                else:
                    low += bound
                    rng -= bound
                while rng < TOP:
                    rng <<= _U8
                    low, cache, csz, pos = _shift_low(low, cache, csz, pos, buf)
                _bit_update(nn, qq, idx, bit, BYTE_LIMIT)
                node = node * 2 + bit
            c3 = c2
            c2 = c1
            c1 = byte
    return _finish(low, cache, csz, pos, buf)


@njit(cache=True)
def bytes_decode_kernel(data, n, cbits):
    nn = np.zeros(2 << (cbits + 8), np.int32)
    qq = np.full(1 << (cbits + 8), _Q_HALF, np.uint32)
    out = np.empty(n, np.uint8)
    rng = _LOW32
    code = _dec_start(data)
    pos = 5
    c1 = 0
    c2 = 0
    c3 = 0
    for i in range(n):
        base = _byte_ctx(c1, c2, c3, cbits)
        node = 1
        for k in range(8):
            idx = base + node
            bound = (rng * np.uint64(qq[idx])) >> _U24
            if code < bound:
                rng = bound
                bit = 0
            else:
                code -= bound
                rng -= bound
                bit = 1
            while rng < TOP:
                rng <<= _U8
                code = ((code << _U8) | _byte_at(data, pos)) & _LOW32
                pos += 1
            _bit_update(nn, qq, idx, bit, BYTE_LIMIT)
            node = node * 2 + bit
        byte = node - 256
        out[i] = byte
        c3 = c2
        c2 = c1
        c1 = byte
    return out, pos


# Qualities use a multi-symbol coder: one step per symbol instead of seven
# binary decisions, with an adaptive frequency table per order-2 context.
# Context (A, A) is the start of a read. Keeping the tables sorted by
# frequency was tried and lost: the swaps cost more than the linear search
# over the (short) quality alphabet.

QF_STEP = 16
QF_LIMIT = 1 << 16

# A symbol never seen in a context keeps frequency 1 (halving maps 1 to 1),
# so with ``lo[ctx]`` the smallest symbol seen there, the cumulative count
# below ``lo`` is just ``lo`` and both searches start at ``lo``.

# context modes: 0 is (previous, second previous) symbol, 1 is (previous
# symbol, position bucket of 8 bases); the encoder keeps the smaller output
QMODE_ORDER2 = 0
QMODE_POSITION = 1
QPOS_BUCKETS = 32
QPOS_SHIFT = 3


@njit(cache=True, inline="always")
def _qf_rows(A, mode):
    return (A + 1) * (A + 1 if mode == QMODE_ORDER2 else QPOS_BUCKETS)


@njit(cache=True, inline="always")
def _qf_ctx(c1, c2, p, A, mode):
    if mode == QMODE_ORDER2:
        return c1 * (A + 1) + c2
    return c1 * QPOS_BUCKETS + min(p >> QPOS_SHIFT, QPOS_BUCKETS - 1)


@njit(cache=True, inline="always")
def _qf_update(ctx, v, freq, tot, A):
    freq[ctx, v] += QF_STEP
    tot[ctx] += QF_STEP
    if tot[ctx] > QF_LIMIT:
        t = 0
        for k in range(A):
            freq[ctx, k] = (freq[ctx, k] + 1) >> 1
            t += freq[ctx, k]
        tot[ctx] = t


@njit(cache=True)
def qual_encode_kernel(qual, offs, A, mode):
    """Order-2 frequency model over quality symbols (byte - 33 < A)."""
    freq = np.ones((_qf_rows(A, mode), A), np.int32)
    tot = np.full(_qf_rows(A, mode), A, np.int64)
    lo = np.full(_qf_rows(A, mode), A, np.int64)
    low = _U0
    rng = _LOW32
    cache = _U0
    csz = 1
    pos = 0
    buf = np.empty(qual.shape[0] // 2 + 1024, np.uint8)
    for r in range(offs.shape[0] - 1):
        c1 = A
        c2 = A
        buf = _reserve(buf, pos + csz + 4 * (offs[r + 1] - offs[r]) + 16)
        for i in range(offs[r], offs[r + 1]):
            v = np.int64(qual[i]) - 33
            ctx = _qf_ctx(c1, c2, i - offs[r], A, mode)
            start = lo[ctx]
            if v <= start:
                cum = v
                lo[ctx] = v
            else:
                cum = start
                for t in range(start, v):
                    cum += freq[ctx, t]
            step = np.uint64(np.uint32(rng) // np.uint32(tot[ctx]))
            low += step * np.uint64(cum)
            rng = step * np.uint64(freq[ctx, v])
            while rng < TOP:
                rng <<= _U8
                low, cache, csz, pos = _shift_low(low, cache, csz, pos, buf)
            _qf_update(ctx, v, freq, tot, A)
            c2 = c1
            c1 = v
    return _finish(low, cache, csz, pos, buf)


@njit(cache=True)
def qual_decode_kernel(data, offs, A, mode):
    n = offs[offs.shape[0] - 1]
    freq = np.ones((_qf_rows(A, mode), A), np.int32)
    tot = np.full(_qf_rows(A, mode), A, np.int64)
    lo = np.full(_qf_rows(A, mode), A, np.int64)
    out = np.empty(n, np.uint8)
    rng = _LOW32
    code = _dec_start(data)
    pos = 5
    for r in range(offs.shape[0] - 1):
        c1 = A
        c2 = A
        for i in range(offs[r], offs[r + 1]):
            ctx = _qf_ctx(c1, c2, i - offs[r], A, mode)
            T = tot[ctx]
            # 32-bit divisions: rng, code < 2**32 and much cheaper than 64-bit
            step = np.uint64(np.uint32(rng) // np.uint32(T))
            target = np.int64(np.uint32(code) // np.uint32(step))
            if target >= T:
                # only reachable on a corrupt stream
                target = T - 1
            start = lo[ctx]
            if target < start:
                v = target
                cum = target
                lo[ctx] = v
            else:
                v = start
                cum = start
                while cum + freq[ctx, v] <= target:
                    cum += freq[ctx, v]
                    v += 1
            code -= step * np.uint64(cum)
            rng = step * np.uint64(freq[ctx, v])
            while rng < TOP:
                rng <<= _U8
                code = ((code << _U8) | _byte_at(data, pos)) & _LOW32
                pos += 1
            out[i] = v + 33
            _qf_update(ctx, v, freq, tot, A)
            c2 = c1
            c1 = v
    return out, pos


# ---------------------------------------------------------------- header ops
#
# Mirrors builtin_codec.decode_header_ops. Errors come back as a negative
# status so the caller can raise with a message.

HDR_OK = 0
HDR_TRUNCATED = -1
HDR_PAST_PREV = -2
HDR_BAD_OP = -3
HDR_BAD_SEP = -4
HDR_TRAILING = -5
HDR_BAD_DELTA = -6


@njit(cache=True)
def _grow_tokens(a, b, need):
    if need <= a.shape[0]:
        return a, b
    na = np.zeros(max(need, 2 * a.shape[0]), np.int64)
    nb = np.zeros(na.shape[0], np.int64)
    na[: a.shape[0]] = a
    nb[: b.shape[0]] = b
    return na, nb


@njit(cache=True)
def _varint_at(ops, pos):
    val = 0
    shift = 0
    while True:
        if pos >= ops.shape[0] or shift > 63:
            return -1, pos
        b = np.int64(ops[pos])
        pos += 1
        val |= (b & 0x7F) << shift
        if b < 0x80:
            return val, pos
        shift += 7


@njit(cache=True)
def header_decode_kernel(ops, n):
    """Returns (status, text, line_offs, sep_kind, sep_text, sep_offs)."""
    text = np.empty(max(ops.shape[0] * 2, 64), np.uint8)
    line_offs = np.zeros(n + 1, np.int64)
    sep_kind = np.zeros(n, np.uint8)
    sep_text = np.empty(16, np.uint8)
    sep_offs = np.zeros(n + 1, np.int64)
    ps = np.zeros(64, np.int64)
    pl = np.zeros(64, np.int64)
    cs = np.zeros(64, np.int64)
    cl = np.zeros(64, np.int64)
    digits = np.empty(24, np.uint8)
    npv = 0
    pos = 0
    w = 0
    sw = 0
    m = ops.shape[0]
    for h in range(n):
        nt = 0
        while True:
            if pos >= m:
                return HDR_TRUNCATED, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
            op = ops[pos]
            pos += 1
            if op == 3:
                break
            cs, cl = _grow_tokens(cs, cl, nt + 1)
            if op == 0 or op == 1:
                if nt >= npv:
                    return HDR_PAST_PREV, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
                if op == 0:
                    ln = pl[nt]
                    text = _reserve(text, w + ln)
                    src = ps[nt]
                    for j in range(ln):
                        text[w + j] = text[src + j]
                else:
                    if pos >= m:
                        return HDR_TRUNCATED, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
                    d = np.int64(ops[pos])
                    pos += 1
                    plen = pl[nt]
                    if plen > 18 or plen == 0:
                        return HDR_BAD_DELTA, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
                    v = 0
                    for j in range(plen):
                        c = np.int64(text[ps[nt] + j]) - 48
                        if c < 0 or c > 9:
                            return HDR_BAD_DELTA, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
                        v = v * 10 + c
                    v += d
                    nd = 0
                    while v > 0 or nd == 0:
                        digits[nd] = 48 + v % 10
                        v //= 10
                        nd += 1
                    ln = max(nd, plen)
                    text = _reserve(text, w + ln)
                    for j in range(ln - nd):
                        text[w + j] = 48
                    for j in range(nd):
                        text[w + ln - 1 - j] = digits[j]
                cs[nt] = w
                cl[nt] = ln
                w += ln
            elif op == 2:
                ln, pos = _varint_at(ops, pos)
                if ln < 0 or pos + ln > m:
                    return HDR_TRUNCATED, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
                text = _reserve(text, w + ln)
                text[w:w + ln] = ops[pos:pos + ln]
                pos += ln
                cs[nt] = w
                cl[nt] = ln
                w += ln
            else:
                return HDR_BAD_OP, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
            nt += 1
        line_offs[h + 1] = w
        if pos >= m:
            return HDR_TRUNCATED, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
        kind = ops[pos]
        pos += 1
        if kind > 2:
            return HDR_BAD_SEP, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
        sep_kind[h] = kind
        if kind == 2:
            ln, pos = _varint_at(ops, pos)
            if ln < 0 or pos + ln > m:
                return HDR_TRUNCATED, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
            sep_text = _reserve(sep_text, sw + ln)
            sep_text[sw:sw + ln] = ops[pos:pos + ln]
            pos += ln
            sw += ln
        sep_offs[h + 1] = sw
        ps, pl = _grow_tokens(ps, pl, nt)
        for j in range(nt):
            ps[j] = cs[j]
            pl[j] = cl[j]
        npv = nt
    if pos != m:
        return HDR_TRAILING, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs
    return HDR_OK, text[:w], line_offs, sep_kind, sep_text[:sw], sep_offs


@njit(cache=True)
def varint_decode_kernel(data, n):
    """First ``n`` LEB128 varints of ``data``; position -1 flags a truncated stream."""
    out = np.empty(n, np.int64)
    pos = 0
    for i in range(n):
        v, pos = _varint_at(data, pos)
        if v < 0:
            return out, -1
        out[i] = v
    return out, pos


@njit(cache=True)
def unpack_fixed_kernel(payload, n, width):
    """``n`` unsigned ``width``-bit fields packed LSB first."""
    out = np.empty(n, np.int64)
    acc = 0
    have = 0
    pos = 0
    mask = (1 << width) - 1
    for i in range(n):
        while have < width:
            acc |= np.int64(payload[pos]) << have
            pos += 1
            have += 8
        out[i] = acc & mask
        acc >>= width
        have -= width
    return out
