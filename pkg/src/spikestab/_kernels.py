"""Compiled per-pixel kernels.

The stability state machine below is the same for batch and streaming use:
``_advance`` consumes one pixel's bits for a span of frames and either
fills per-frame output or records closed segments as events, depending on
which of ``out`` / ``ev`` is non-empty.

Per-pixel state is an int64 row (see the ``S_*`` offsets) plus one float
carry. A run is identified by the frame of the spike that opened it; it
explains frames ``(open_spike, last_spike]``.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit, prange

# numba probes an outdated system TBB before falling back to OpenMP/workqueue
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

S_LAST = 0  # frame of the latest spike, -1 before the first
S_OPEN = 1  # frame of the spike that opened the current run
S_LO = 2  # accepted first-level pair, 0 when unset
S_HI = 3
S_SUM = 4  # sum of intervals in the current run
S_CNT = 5  # number of intervals in the current run
S_IDX = 6  # index of the next interval inside the current second-level run
S_VA = 7  # second-level slot A: interval value, last index, pair
S_LA = 8
S_A1 = 9
S_A2 = 10
S_VB = 11  # slot B
S_LB = 12
S_B1 = 13
S_B2 = 14
N_STATE = 15


def new_state(n_pixels: int) -> tuple[np.ndarray, np.ndarray]:
    st = np.zeros((n_pixels, N_STATE), dtype=np.int64)
    st[:, S_LAST] = -1
    st[:, S_OPEN] = -1
    st[:, S_LA] = -1
    st[:, S_LB] = -1
    return st, np.zeros(n_pixels, dtype=np.float64)


@njit(cache=True, inline="always")
def _pair_accept(lo, hi, v):
    # lazy zero-order rule; returns (accepted, lo, hi)
    if lo == 0:
        return True, v, v
    if lo == hi:
        if v == lo:
            return True, lo, hi
        if v == lo - 1:
            return True, v, hi
        if v == lo + 1:
            return True, lo, v
        return False, lo, hi
    if v == lo or v == hi:
        return True, lo, hi
    return False, lo, hi


@njit(cache=True)
def _advance(row, offset, st, cf, ssr, out, ev, ev_base):
    """Feed ``row`` (frames ``offset ..``) to one pixel; returns events written."""
    last = st[S_LAST]
    opened = st[S_OPEN]
    lo = st[S_LO]
    hi = st[S_HI]
    total = st[S_SUM]
    cnt = st[S_CNT]
    idx = st[S_IDX]
    va = st[S_VA]
    la = st[S_LA]
    a1 = st[S_A1]
    a2 = st[S_A2]
    vb = st[S_VB]
    lb = st[S_LB]
    b1 = st[S_B1]
    b2 = st[S_B2]
    carry = cf[0]
    fill = out.shape[0] > 0
    n_ev = 0

    for k in range(row.shape[0]):
        if row[k] == 0:
            continue
        n = offset + k
        if last < 0:
            opened = n
            last = n
            continue
        t = n - last

        ok, nlo, nhi = _pair_accept(lo, hi, t)
        fsr_break = not ok
        ssr_break = False
        s2 = 0
        slot = 0
        if ok:
            lo = nlo
            hi = nhi
            if ssr:
                if va == t:
                    slot = 1
                    if la >= 0:
                        s2 = idx - la
                        ok2, na, nb = _pair_accept(a1, a2, s2)
                        if ok2:
                            a1 = na
                            a2 = nb
                        else:
                            ssr_break = True
                elif vb == t:
                    slot = 2
                    if lb >= 0:
                        s2 = idx - lb
                        ok2, na, nb = _pair_accept(b1, b2, s2)
                        if ok2:
                            b1 = na
                            b2 = nb
                        else:
                            ssr_break = True

        if fsr_break or ssr_break:
            value = 255.0 * cnt / total
            if fill:
                for j in range(opened + 1, last + 1):
                    out[j] = value
            else:
                ev[ev_base + n_ev, 0] = opened + 1
                ev[ev_base + n_ev, 1] = last + 1
                ev[ev_base + n_ev, 2] = value
                n_ev += 1
            carry = value
            opened = last
            total = 0
            cnt = 0
            if fsr_break:
                lo = t
                hi = t
            idx = 0
            va = 0
            la = -1
            a1 = 0
            a2 = 0
            vb = 0
            lb = -1
            b1 = 0
            b2 = 0
            slot = 0

        if ssr:
            if slot == 0:
                # value not yet seen in this second-level run
                if va == 0:
                    va = t
                    slot = 1
                elif vb == 0:
                    vb = t
                    slot = 2
            if slot == 1:
                la = idx
            elif slot == 2:
                lb = idx
            idx += 1

        total += t
        cnt += 1
        last = n

    st[S_LAST] = last
    st[S_OPEN] = opened
    st[S_LO] = lo
    st[S_HI] = hi
    st[S_SUM] = total
    st[S_CNT] = cnt
    st[S_IDX] = idx
    st[S_VA] = va
    st[S_LA] = la
    st[S_A1] = a1
    st[S_A2] = a2
    st[S_VB] = vb
    st[S_LB] = lb
    st[S_B1] = b1
    st[S_B2] = b2
    cf[0] = carry
    return n_ev


@njit(cache=True)
def _close(st, cf, out, ev, ev_base):
    """Close the open run, if it has intervals; returns events written."""
    cnt = st[S_CNT]
    if cnt == 0:
        return 0
    value = 255.0 * cnt / st[S_SUM]
    opened = st[S_OPEN]
    last = st[S_LAST]
    if out.shape[0] > 0:
        for j in range(opened + 1, last + 1):
            out[j] = value
        n_ev = 0
    else:
        ev[ev_base, 0] = opened + 1
        ev[ev_base, 1] = last + 1
        ev[ev_base, 2] = value
        n_ev = 1
    cf[0] = value
    st[S_OPEN] = last
    st[S_SUM] = 0
    st[S_CNT] = 0
    return n_ev


@njit(cache=True, parallel=True)
def stability_frames(bits, ssr, out):
    """Batch FSR/SSR: ``bits`` (P, T) -> per-frame intensities in ``out`` (P, T).

    ``out`` must arrive zeroed; frames before the first run stay 0 and
    frames after the last run take the carried intensity.
    """
    n_pix, n_frames = bits.shape
    no_ev = np.zeros((0, 3))
    for i in prange(n_pix):
        st = np.empty(N_STATE, dtype=np.int64)
        for j in range(N_STATE):
            st[j] = 0
        st[S_LAST] = -1
        st[S_OPEN] = -1
        st[S_LA] = -1
        st[S_LB] = -1
        cf = np.zeros(1)
        row_out = out[i]
        _advance(bits[i], 0, st, cf, ssr, row_out, no_ev, 0)
        _close(st, cf, row_out, no_ev, 0)
        last = st[S_LAST]
        if last >= 0:
            value = cf[0]
            for j in range(last + 1, n_frames):
                row_out[j] = value


@njit(cache=True, parallel=True)
def stability_events(bits, offset, st, cf, ssr, ev, counts):
    """Streaming FSR/SSR over one block ``bits`` (P, B) starting at frame ``offset``.

    Pixel ``i`` writes its closed runs to ``ev[i * (B + 1):]`` as rows of
    ``(start, end, intensity)`` and their number to ``counts[i]``.
    """
    n_pix, n_frames = bits.shape
    no_out = np.zeros(0)
    stride = n_frames + 1
    for i in prange(n_pix):
        counts[i] = _advance(bits[i], offset, st[i], cf[i : i + 1], ssr, no_out, ev, i * stride)


@njit(cache=True, parallel=True)
def flush_events(st, cf, ev, counts):
    n_pix = st.shape[0]
    no_out = np.zeros(0)
    for i in prange(n_pix):
        counts[i] = _close(st[i], cf[i : i + 1], no_out, ev, i)


@njit(cache=True, parallel=True)
def tfi_frames(bits, out):
    n_pix, n_frames = bits.shape
    for i in prange(n_pix):
        last = -1
        value = 0.0
        for n in range(n_frames):
            if bits[i, n]:
                if last >= 0:
                    value = 255.0 / (n - last)
                last = n
            out[i, n] = value


@njit(cache=True, parallel=True)
def tfp_frames(bits, window, out):
    n_pix, n_frames = bits.shape
    for i in prange(n_pix):
        count = 0
        for n in range(n_frames):
            count += bits[i, n]
            if n >= window:
                count -= bits[i, n - window]
            out[i, n] = 255.0 * count / min(window, n + 1)
