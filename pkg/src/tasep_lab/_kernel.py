"""Compiled event loop.

All state lives in flat arrays owned by :class:`tasep_lab.engine.Simulation`
so a run can be paused at any time, inspected, resized and resumed.

Bulk clocks are only kept in the event heap while their site is occupied in
at least one member; rings of an empty site are no-ops, so a dormant clock
simply discards its arrivals when it is woken up again. This leaves every
trajectory unchanged while making the cost proportional to the number of
particles rather than to the window length.
"""
import numba
import numpy as np

from .harris import RANK_SHIFT, StreamKind, exponential_at, stream_key, uniform_at

HOLE = np.int32(np.iinfo(np.int32).max)

KIND_OCC = 0
KIND_MULTI = 1
KIND_TWIN = 2

BULK = int(StreamKind.BULK)
BOUNDARY = int(StreamKind.BOUNDARY)
CLASS_ENTRY = int(StreamKind.CLASS_ENTRY)
BULK_RANK0 = np.int64(BULK << RANK_SHIFT)

# integer scalars
IP_M = 0
IP_L = 1  # fixed window length, 0 in lazy mode
IP_CAP = 2
IP_R = 3
IP_C = 4
IP_NHEAP = 5
IP_EXIT_N = 6
IP_FRONT = 7
IP_TRACK_FRONT = 8
IP_TAG_M = 9
IP_TAG_POS = 10
IP_TAG_XFAR = 11
IP_TAG_XMID = 12
IP_TAG_STATE = 13
IP_TWIN = 14
IP_TWIN_REF = 15
IP_TWIN_CUT = 16
IP_ORDER_CHECK = 17
IP_ORDER_VIOL = 18
IP_ORDER_SITE = 19
IP_ORDER_MEMBER = 20
IP_PROJ_VIOL = 21
IP_PROJ_SITE = 22
IP_LOG_SITES = 23
IP_LOG_N = 24
IP_DLOG_N = 25
IP_PATH_N = 26
IP_TAG_MAX = 27
IP_CLOSED_END = 28
IP_EVENTS = 29
IP_DENSITY = 30
IP_KMAX = 31
IP_PATH_ON = 32
IP_SEED = 33
IP_EXIT_KEY = 34
N_IP = 40

# float scalars
FP_T = 0
FP_EXIT_P = 1
FP_TAG_DEATH = 2
FP_TAG_REACH = 3
FP_TAG_MID = 4
FP_PATH_NEXT = 5
FP_PATH_DT = 6
FP_ORDER_T = 7
FP_PROJ_T = 8
N_FP = 12

# per-member counters
C_ENTRIES = 0
C_EXITS = 1
C_REMOVALS = 2
C_APPLIED = 3
N_CNT = 4

# tag states
TAG_ALIVE = 0
TAG_DIED = 1
TAG_REACHED = 2
TAG_UNCERTAIN = 3
TAG_EXITED = 4

# return codes
ST_DONE = 0
ST_GROW = 1
ST_STOPPED = 2
ST_OVERFLOW = 3
ST_BUFFER = 4

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)
_U64 = np.uint64


@numba.njit(inline="always", cache=True)
def _less(t1, r1, t2, r2):
    return t1 < t2 or (t1 == t2 and r1 < r2)


@numba.njit(cache=True)
def heap_push(ht, hr, hs, n, t, r, s):
    i = n
    while i > 0:
        p = (i - 1) >> 1
        if _less(t, r, ht[p], hr[p]):
            ht[i] = ht[p]
            hr[i] = hr[p]
            hs[i] = hs[p]
            i = p
        else:
            break
    ht[i] = t
    hr[i] = r
    hs[i] = s
    return n + 1


@numba.njit(cache=True)
def heap_sift_root(ht, hr, hs, n, t, r, s):
    """Place (t, r, s) at the root of a heap of size n and restore order."""
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and _less(ht[c + 1], hr[c + 1], ht[c], hr[c]):
            c += 1
        if _less(ht[c], hr[c], t, r):
            ht[i] = ht[c]
            hr[i] = hr[c]
            hs[i] = hs[c]
            i = c
        else:
            break
    ht[i] = t
    hr[i] = r
    hs[i] = s


@numba.njit(cache=True)
def fnv_event(h, tag, index, tbits):
    h = (h ^ _U64(tag)) * FNV_PRIME
    v = _U64(index)
    for k in range(8):
        h = (h ^ ((v >> _U64(8 * k)) & _U64(0xFF))) * FNV_PRIME
    for k in range(8):
        h = (h ^ ((tbits >> _U64(8 * k)) & _U64(0xFF))) * FNV_PRIME
    return h


@numba.njit(inline="always", cache=True)
def _kahan(acc, m, k, v):
    y = v - acc[m, k, 1]
    s = acc[m, k, 0] + y
    acc[m, k, 1] = (s - acc[m, k, 0]) - y
    acc[m, k, 0] = s


@numba.njit(cache=True)
def wake_site(x, t, seed, bkey, bn, bnext, bstate, ht, hr, hs, nheap):
    """Put the clock of site x back in the heap with its first arrival after t."""
    st = bstate[x]
    if st == 1:
        return nheap
    if st == 0:
        bkey[x] = stream_key(_U64(seed), _U64(BULK), _U64(x))
        bnext[x] = exponential_at(bkey[x], _U64(0), 1.0)
        bn[x] = 1
    while bnext[x] <= t:
        bnext[x] += exponential_at(bkey[x], _U64(bn[x]), 1.0)
        bn[x] += 1
    bstate[x] = 1
    return heap_push(ht, hr, hs, nheap, bnext[x], BULK_RANK0 | np.int64(x), np.int64(x))


@numba.njit(cache=True)
def _occ_changed(m, x, occupied, t, occ, track_density, site_acc, site_last):
    if occupied:
        occ[x] += 1
    else:
        occ[x] -= 1
    if track_density:
        if not occupied:
            site_acc[m, x] += t - site_last[m, x]
        site_last[m, x] = t


@numba.njit(cache=True, nogil=True)
def advance(
    t_end,
    ip,
    fp,
    kinds,
    Ks,
    labels,
    birth,
    occ,
    bkey,
    bn,
    bnext,
    bstate,
    ch_rate,
    ch_rank,
    ch_kind,
    ch_class,
    ch_key,
    ch_mkey,
    ch_n,
    ch_mn,
    ch_next,
    thr,
    tgt,
    mthr,
    ht,
    hr,
    hs,
    cnt,
    ccount,
    acc,
    chpat,
    digest,
    site_acc,
    site_last,
    log_t,
    log_i,
    dlog_f,
    dlog_i,
    path,
):
    M = ip[IP_M]
    L = ip[IP_L]
    cap = ip[IP_CAP]
    R = ip[IP_R]
    P = 1 << R
    kmax = ip[IP_KMAX]
    seed = ip[IP_SEED]
    nheap = ip[IP_NHEAP]
    t = fp[FP_T]
    track_density = ip[IP_DENSITY] != 0
    track_front = ip[IP_TRACK_FRONT] != 0
    order_check = ip[IP_ORDER_CHECK] != 0
    twin = ip[IP_TWIN]
    twin_ref = ip[IP_TWIN_REF]
    twin_cut = ip[IP_TWIN_CUT]
    tag_m = ip[IP_TAG_M]
    log_sites = ip[IP_LOG_SITES]
    exit_key = _U64(ip[IP_EXIT_KEY])
    exit_p = fp[FP_EXIT_P]
    k_site2 = P
    k_tilde = P + kmax + 2
    fbuf = np.empty(1, np.float64)
    ubuf = fbuf.view(np.uint64)
    touched = np.empty(max(R, 2) + 1, np.int64)
    status = ST_DONE

    while nheap > 0:
        tau = ht[0]
        if tau > t_end:
            break
        if ip[IP_LOG_N] >= log_t.shape[0] or ip[IP_DLOG_N] + M > dlog_f.shape[0]:
            status = ST_BUFFER
            break
        if ip[IP_PATH_ON] != 0:
            full = False
            while fp[FP_PATH_NEXT] <= tau:
                if ip[IP_PATH_N] >= path.shape[0]:
                    full = True
                    break
                path[ip[IP_PATH_N], 0] = fp[FP_PATH_NEXT]
                path[ip[IP_PATH_N], 1] = ip[IP_TAG_POS]
                ip[IP_PATH_N] += 1
                fp[FP_PATH_NEXT] += fp[FP_PATH_DT]
            if full:
                status = ST_BUFFER
                break

        # time integrals over [t, tau)
        dt = tau - t
        if dt > 0.0:
            for m in range(M):
                p = 0
                for i in range(R):
                    if labels[m, i + 1] != HOLE:
                        p |= 1 << i
                _kahan(acc, m, p, dt)
                l2 = labels[m, 2]
                if l2 == HOLE or l2 > kmax:
                    _kahan(acc, m, k_site2 + kmax + 1, dt)
                else:
                    _kahan(acc, m, k_site2 + l2, dt)
                if l2 == 1 and labels[m, 1] != 1:
                    _kahan(acc, m, k_tilde, dt)
        t = tau
        fbuf[0] = tau
        tbits = ubuf[0]
        ip[IP_EVENTS] += 1
        stop = False
        wake_a = 0
        wake_b = 0
        ntouch = 0
        s = hs[0]

        if s > 0:
            # ---- bulk clock of site x
            x = s
            touched[0] = x
            touched[1] = x + 1
            ntouch = 2
            if track_front and occ[x] > 0 and x + 1 >= ip[IP_FRONT]:
                ip[IP_FRONT] = x
            at_end = L > 0 and x == L
            if at_end and occ[x] > 0:
                ntouch = 1
                if ip[IP_CLOSED_END] != 0:
                    status = ST_OVERFLOW
                    break
                u = uniform_at(exit_key, _U64(ip[IP_EXIT_N]))
                ip[IP_EXIT_N] += 1
                if u < exit_p:
                    for m in range(M):
                        if labels[m, x] != HOLE:
                            labels[m, x] = HOLE
                            _occ_changed(m, x, False, tau, occ, track_density, site_acc, site_last)
                            cnt[m, C_EXITS] += 1
                            cnt[m, C_APPLIED] += 1
                            digest[m] = fnv_event(digest[m], BULK, x, tbits)
                            if m == 0 and x <= log_sites:
                                log_t[ip[IP_LOG_N]] = tau
                                log_i[ip[IP_LOG_N], 0] = BULK
                                log_i[ip[IP_LOG_N], 1] = x
                                ip[IP_LOG_N] += 1
                            if m == tag_m and ip[IP_TAG_POS] == x:
                                ip[IP_TAG_STATE] = TAG_EXITED
                                ip[IP_TAG_POS] = 0
                                stop = True
            elif not at_end:
                for m in range(M):
                    a = labels[m, x]
                    if a == HOLE:
                        continue
                    b = labels[m, x + 1]
                    if b <= a:
                        continue
                    labels[m, x] = b
                    labels[m, x + 1] = a
                    bt = birth[m, x]
                    birth[m, x] = birth[m, x + 1]
                    birth[m, x + 1] = bt
                    if b == HOLE:
                        _occ_changed(m, x, False, tau, occ, track_density, site_acc, site_last)
                        _occ_changed(m, x + 1, True, tau, occ, track_density, site_acc, site_last)
                        wake_a = x + 1
                        if L == 0 and x + 1 >= cap:
                            status = ST_GROW
                    cnt[m, C_APPLIED] += 1
                    digest[m] = fnv_event(digest[m], BULK, x, tbits)
                    if m == 0 and x <= log_sites:
                        log_t[ip[IP_LOG_N]] = tau
                        log_i[ip[IP_LOG_N], 0] = BULK
                        log_i[ip[IP_LOG_N], 1] = x
                        ip[IP_LOG_N] += 1
                    if m == tag_m:
                        pos = ip[IP_TAG_POS]
                        if pos == x:
                            pos = x + 1
                            ip[IP_TAG_POS] = pos
                            if pos > ip[IP_TAG_MAX]:
                                ip[IP_TAG_MAX] = pos
                            if pos >= ip[IP_TAG_XMID] and fp[FP_TAG_MID] < 0.0:
                                fp[FP_TAG_MID] = tau
                            if pos >= ip[IP_TAG_XFAR]:
                                ip[IP_TAG_STATE] = TAG_REACHED
                                fp[FP_TAG_REACH] = tau
                                stop = True
                        elif pos == x + 1:
                            ip[IP_TAG_POS] = x
            # reschedule
            nxt = tau + exponential_at(bkey[x], _U64(bn[x]), 1.0)
            bn[x] += 1
            if occ[x] > 0:
                heap_sift_root(ht, hr, hs, nheap, nxt, BULK_RANK0 | np.int64(x), np.int64(x))
            else:
                nheap -= 1
                if nheap > 0:
                    heap_sift_root(ht, hr, hs, nheap, ht[nheap], hr[nheap], hs[nheap])
                bstate[x] = 2
                bnext[x] = nxt
        else:
            # ---- boundary / class-entry channel
            c = -s - 1
            u = uniform_at(ch_mkey[c], _U64(ch_mn[c]))
            ch_mn[c] += 1
            kind_c = ch_kind[c]
            stream_index = ch_rank[c] & ((1 << RANK_SHIFT) - 1)
            ntouch = max(R, 2)
            for i in range(ntouch):
                touched[i] = i + 1
            ref2 = HOLE
            if twin >= 0:
                ref2 = labels[twin_ref, 2]
            for m in range(M):
                km = kinds[m]
                p = 0
                for i in range(R):
                    if labels[m, i + 1] != HOLE:
                        p |= 1 << i
                chpat[m, c, p] += 1
                changed = False
                if km == KIND_OCC:
                    if u < thr[m, c, p]:
                        q = tgt[m, c, p]
                        if q != p:
                            changed = True
                            for i in range(R):
                                old = (p >> i) & 1
                                new = (q >> i) & 1
                                if old == 0 and new == 1:
                                    labels[m, i + 1] = 1
                                    birth[m, i + 1] = tau
                                    _occ_changed(m, i + 1, True, tau, occ, track_density, site_acc, site_last)
                                    cnt[m, C_ENTRIES] += 1
                                    ccount[m, 0, 1] += 1
                                    if i == 0:
                                        wake_a = 1
                                    elif i == 1:
                                        wake_b = 2
                                elif old == 1 and new == 0:
                                    labels[m, i + 1] = HOLE
                                    _occ_changed(m, i + 1, False, tau, occ, track_density, site_acc, site_last)
                                    cnt[m, C_REMOVALS] += 1
                elif km == KIND_MULTI:
                    if u < mthr[m, c]:
                        j = ch_class[c]
                        K = Ks[m]
                        l1 = labels[m, 1]
                        l2 = labels[m, 2]
                        fire = False
                        if j == 1:
                            fire = l1 != 1
                        elif j < K:
                            fire = l1 >= j + 1 and l2 == j - 1
                        elif j == K:
                            fire = l1 == HOLE and (l2 == K - 1 or l2 == K)
                        if fire:
                            changed = True
                            if l1 == HOLE:
                                _occ_changed(m, 1, True, tau, occ, track_density, site_acc, site_last)
                                cnt[m, C_ENTRIES] += 1
                                wake_a = 1
                            else:
                                ccount[m, 1, l1] += 1
                                n_d = ip[IP_DLOG_N]
                                dlog_f[n_d, 0] = birth[m, 1]
                                dlog_f[n_d, 1] = tau
                                dlog_i[n_d, 0] = m
                                dlog_i[n_d, 1] = l1
                                ip[IP_DLOG_N] = n_d + 1
                                if m == tag_m and ip[IP_TAG_POS] == 1:
                                    ip[IP_TAG_STATE] = TAG_DIED
                                    ip[IP_TAG_POS] = 0
                                    fp[FP_TAG_DEATH] = tau
                                    stop = True
                            labels[m, 1] = j
                            birth[m, 1] = tau
                            ccount[m, 0, j] += 1
                else:
                    # occupancy twin driven by the class streams of member twin_ref
                    if u < mthr[m, c]:
                        j = ch_class[c]
                        K = Ks[twin_ref]
                        o1 = labels[m, 1] != HOLE
                        o2 = labels[m, 2] != HOLE
                        fire = False
                        if j == 1:
                            fire = not o1
                        else:
                            selected = (j <= K - 1 and ref2 == j - 1) or (
                                j == K and (ref2 == K - 1 or ref2 == K)
                            )
                            fire = selected and (not o1) and o2
                        if fire:
                            changed = True
                            labels[m, 1] = 1
                            birth[m, 1] = tau
                            _occ_changed(m, 1, True, tau, occ, track_density, site_acc, site_last)
                            cnt[m, C_ENTRIES] += 1
                            ccount[m, 0, 1] += 1
                            wake_a = 1
                if changed:
                    cnt[m, C_APPLIED] += 1
                    digest[m] = fnv_event(digest[m], kind_c, stream_index, tbits)
                    if m == 0 and log_sites > 0:
                        log_t[ip[IP_LOG_N]] = tau
                        log_i[ip[IP_LOG_N], 0] = kind_c
                        log_i[ip[IP_LOG_N], 1] = stream_index
                        ip[IP_LOG_N] += 1
            nxt = tau + exponential_at(ch_key[c], _U64(ch_n[c]), ch_rate[c])
            ch_n[c] += 1
            ch_next[c] = nxt
            heap_sift_root(ht, hr, hs, nheap, nxt, ch_rank[c], np.int64(s))
            if R > 2:
                for i in range(3, R + 1):
                    if occ[i] > 0 and bstate[i] != 1:
                        nheap = wake_site(i, tau, seed, bkey, bn, bnext, bstate, ht, hr, hs, nheap)

        if wake_a > 0 and occ[wake_a] > 0 and bstate[wake_a] != 1:
            nheap = wake_site(wake_a, tau, seed, bkey, bn, bnext, bstate, ht, hr, hs, nheap)
        if wake_b > 0 and occ[wake_b] > 0 and bstate[wake_b] != 1:
            nheap = wake_site(wake_b, tau, seed, bkey, bn, bnext, bstate, ht, hr, hs, nheap)

        # pathwise checks on the sites touched by this event
        if order_check:
            for m in range(M - 1):
                for k in range(ntouch):
                    y = touched[k]
                    if y > cap:
                        continue
                    if labels[m, y] != HOLE and labels[m + 1, y] == HOLE:
                        if ip[IP_ORDER_VIOL] == 0:
                            fp[FP_ORDER_T] = tau
                            ip[IP_ORDER_SITE] = y
                            ip[IP_ORDER_MEMBER] = m
                        ip[IP_ORDER_VIOL] += 1
        if twin >= 0:
            for k in range(ntouch):
                y = touched[k]
                if y > cap:
                    continue
                a_occ = labels[twin, y] != HOLE
                b_occ = labels[twin_ref, y] <= twin_cut
                if a_occ != b_occ:
                    if ip[IP_PROJ_VIOL] == 0:
                        fp[FP_PROJ_T] = tau
                        ip[IP_PROJ_SITE] = y
                    ip[IP_PROJ_VIOL] += 1
        if track_front and tag_m >= 0 and ip[IP_TAG_STATE] == TAG_ALIVE:
            if ip[IP_TAG_POS] >= ip[IP_FRONT]:
                ip[IP_TAG_STATE] = TAG_UNCERTAIN
                stop = True
        if stop:
            status = ST_STOPPED
            break
        if status != ST_DONE:
            break

    if status == ST_DONE and t < t_end:
        dt = t_end - t
        for m in range(M):
            p = 0
            for i in range(R):
                if labels[m, i + 1] != HOLE:
                    p |= 1 << i
            _kahan(acc, m, p, dt)
            l2 = labels[m, 2]
            if l2 == HOLE or l2 > kmax:
                _kahan(acc, m, k_site2 + kmax + 1, dt)
            else:
                _kahan(acc, m, k_site2 + l2, dt)
            if l2 == 1 and labels[m, 1] != 1:
                _kahan(acc, m, k_tilde, dt)
        t = t_end
    fp[FP_T] = t
    ip[IP_NHEAP] = nheap
    return status


@numba.njit(cache=True)
def prime_clocks(t0, ip, occ, bkey, bn, bnext, bstate, ch_rate, ch_rank, ch_key, ch_n, ch_next, ht, hr, hs):
    """Schedule every channel and every occupied site from time t0."""
    nheap = ip[IP_NHEAP]
    seed = ip[IP_SEED]
    C = ip[IP_C]
    for c in range(C):
        if ch_rate[c] > 0.0 and ch_n[c] == 0:
            ch_next[c] = t0 + exponential_at(ch_key[c], _U64(0), ch_rate[c])
            ch_n[c] = 1
            nheap = heap_push(ht, hr, hs, nheap, ch_next[c], ch_rank[c], np.int64(-c - 1))
    cap = ip[IP_CAP]
    for x in range(1, cap + 1):
        if occ[x] > 0 and bstate[x] != 1:
            nheap = wake_site(x, t0, seed, bkey, bn, bnext, bstate, ht, hr, hs, nheap)
    ip[IP_NHEAP] = nheap
