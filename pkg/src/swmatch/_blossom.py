# O(n^3) maximum-weight general matching (primal-dual with blossoms).
# Vertices are 1-based; index 0 means "none". Labels hold doubled duals so all
# arithmetic stays integral.

import numpy as np
from numba import njit

INF = np.int64(1) << np.int64(62)


@njit(cache=True, nogil=True)
def _dist(lab, gu, gv, gw, a, b):
    return lab[gu[a, b]] + lab[gv[a, b]] - 2 * gw[a, b]


@njit(cache=True, nogil=True)
def _update_slack(u, x, lab, gu, gv, gw, slack):
    if slack[x] == 0 or _dist(lab, gu, gv, gw, u, x) < _dist(lab, gu, gv, gw, slack[x], x):
        slack[x] = u


@njit(cache=True, nogil=True)
def _set_slack(x, n, lab, gu, gv, gw, slack, st, S):
    slack[x] = 0
    for u in range(1, n + 1):
        if gw[u, x] > 0 and st[u] != x and S[st[u]] == 0:
            _update_slack(u, x, lab, gu, gv, gw, slack)


@njit(cache=True, nogil=True)
def _q_push(x, n, flower, flen, q, inq, qs):
    if x <= n:
        if inq[x] == 0:
            inq[x] = 1
            cap = q.shape[0]
            q[(qs[0] + qs[1]) % cap] = x
            qs[1] += 1
    else:
        for i in range(flen[x]):
            _q_push(flower[x, i], n, flower, flen, q, inq, qs)


@njit(cache=True, nogil=True)
def _set_st(x, b, n, st, flower, flen):
    st[x] = b
    if x > n:
        for i in range(flen[x]):
            _set_st(flower[x, i], b, n, st, flower, flen)


@njit(cache=True, nogil=True)
def _get_pr(b, xr, flower, flen):
    pr = 0
    while flower[b, pr] != xr:
        pr += 1
    if pr % 2 == 1:
        i, j = 1, flen[b] - 1
        while i < j:
            t = flower[b, i]
            flower[b, i] = flower[b, j]
            flower[b, j] = t
            i += 1
            j -= 1
        return flen[b] - pr
    return pr


@njit(cache=True, nogil=True)
def _set_match(u, v, n, match, gu, gv, flower, flen, flower_from, tmp):
    match[u] = gv[u, v]
    if u > n:
        xr = flower_from[u, gu[u, v]]
        pr = _get_pr(u, xr, flower, flen)
        for i in range(pr):
            _set_match(flower[u, i], flower[u, i ^ 1], n, match, gu, gv, flower, flen, flower_from, tmp)
        _set_match(xr, v, n, match, gu, gv, flower, flen, flower_from, tmp)
        size = flen[u]
        for i in range(size):
            tmp[i] = flower[u, (i + pr) % size]
        for i in range(size):
            flower[u, i] = tmp[i]


@njit(cache=True, nogil=True)
def _augment(u, v, n, match, st, pa, gu, gv, flower, flen, flower_from, tmp):
    while True:
        xnv = st[match[u]]
        _set_match(u, v, n, match, gu, gv, flower, flen, flower_from, tmp)
        if xnv == 0:
            return
        _set_match(xnv, st[pa[xnv]], n, match, gu, gv, flower, flen, flower_from, tmp)
        u = st[pa[xnv]]
        v = xnv


@njit(cache=True, nogil=True)
def _get_lca(u, v, match, st, pa, vis, sc):
    sc[2] += 1
    t = sc[2]
    while u != 0 or v != 0:
        if u != 0:
            if vis[u] == t:
                return u
            vis[u] = t
            u = st[match[u]]
            if u != 0:
                u = st[pa[u]]
        u, v = v, u
    return 0


@njit(cache=True, nogil=True)
def _add_blossom(u, lca, v, n, sc, lab, S, match, st, pa, slack, gu, gv, gw, flower, flen, flower_from, q, inq, qs):
    b = n + 1
    while b <= sc[1] and st[b] != 0:
        b += 1
    if b > sc[1]:
        sc[1] += 1
    nx = sc[1]
    lab[b] = 0
    S[b] = 0
    match[b] = match[lca]
    flen[b] = 0
    flower[b, flen[b]] = lca
    flen[b] += 1
    x = u
    while x != lca:
        y = st[match[x]]
        flower[b, flen[b]] = x
        flower[b, flen[b] + 1] = y
        flen[b] += 2
        _q_push(y, n, flower, flen, q, inq, qs)
        x = st[pa[y]]
    i, j = 1, flen[b] - 1
    while i < j:
        t = flower[b, i]
        flower[b, i] = flower[b, j]
        flower[b, j] = t
        i += 1
        j -= 1
    x = v
    while x != lca:
        y = st[match[x]]
        flower[b, flen[b]] = x
        flower[b, flen[b] + 1] = y
        flen[b] += 2
        _q_push(y, n, flower, flen, q, inq, qs)
        x = st[pa[y]]
    _set_st(b, b, n, st, flower, flen)
    for x in range(1, nx + 1):
        gw[b, x] = 0
        gw[x, b] = 0
    for x in range(1, n + 1):
        flower_from[b, x] = 0
    for i in range(flen[b]):
        xs = flower[b, i]
        for x in range(1, nx + 1):
            if gw[b, x] == 0 or _dist(lab, gu, gv, gw, xs, x) < _dist(lab, gu, gv, gw, b, x):
                gu[b, x] = gu[xs, x]
                gv[b, x] = gv[xs, x]
                gw[b, x] = gw[xs, x]
                gu[x, b] = gu[x, xs]
                gv[x, b] = gv[x, xs]
                gw[x, b] = gw[x, xs]
        for x in range(1, n + 1):
            if flower_from[xs, x] != 0:
                flower_from[b, x] = xs
    _set_slack(b, n, lab, gu, gv, gw, slack, st, S)


@njit(cache=True, nogil=True)
def _expand_blossom(b, n, lab, S, st, pa, slack, gu, gv, gw, flower, flen, flower_from, q, inq, qs):
    for i in range(flen[b]):
        _set_st(flower[b, i], flower[b, i], n, st, flower, flen)
    xr = flower_from[b, gu[b, pa[b]]]
    pr = _get_pr(b, xr, flower, flen)
    for i in range(0, pr, 2):
        xs = flower[b, i]
        xns = flower[b, i + 1]
        pa[xs] = gu[xns, xs]
        S[xs] = 1
        S[xns] = 0
        slack[xs] = 0
        _set_slack(xns, n, lab, gu, gv, gw, slack, st, S)
        _q_push(xns, n, flower, flen, q, inq, qs)
    S[xr] = 1
    pa[xr] = pa[b]
    for i in range(pr + 1, flen[b]):
        xs = flower[b, i]
        S[xs] = -1
        _set_slack(xs, n, lab, gu, gv, gw, slack, st, S)
    st[b] = 0


@njit(cache=True, nogil=True)
def _on_found_edge(eu, ev, n, sc, lab, S, match, st, pa, slack, vis, gu, gv, gw, flower, flen, flower_from, q, inq, qs, tmp):
    u = st[eu]
    v = st[ev]
    if S[v] == -1:
        pa[v] = eu
        S[v] = 1
        nu = st[match[v]]
        slack[v] = 0
        slack[nu] = 0
        S[nu] = 0
        _q_push(nu, n, flower, flen, q, inq, qs)
    elif S[v] == 0:
        lca = _get_lca(u, v, match, st, pa, vis, sc)
        if lca == 0:
            _augment(u, v, n, match, st, pa, gu, gv, flower, flen, flower_from, tmp)
            _augment(v, u, n, match, st, pa, gu, gv, flower, flen, flower_from, tmp)
            return True
        _add_blossom(u, lca, v, n, sc, lab, S, match, st, pa, slack, gu, gv, gw, flower, flen, flower_from, q, inq, qs)
    return False


@njit(cache=True, nogil=True)
def _phase(n, sc, lab, S, match, st, pa, slack, vis, gu, gv, gw, flower, flen, flower_from, q, inq, qs, tmp):
    nx = sc[1]
    for x in range(1, nx + 1):
        S[x] = -1
        slack[x] = 0
    qs[0] = 0
    qs[1] = 0
    inq[:] = 0
    for x in range(1, nx + 1):
        if st[x] == x and match[x] == 0:
            pa[x] = 0
            S[x] = 0
            _q_push(x, n, flower, flen, q, inq, qs)
    if qs[1] == 0:
        return False
    cap = q.shape[0]
    while True:
        while qs[1] > 0:
            u = q[qs[0]]
            qs[0] = (qs[0] + 1) % cap
            qs[1] -= 1
            inq[u] = 0
            if S[st[u]] == 1:
                continue
            for v in range(1, n + 1):
                if gw[u, v] > 0 and st[u] != st[v]:
                    if _dist(lab, gu, gv, gw, u, v) == 0:
                        if _on_found_edge(gu[u, v], gv[u, v], n, sc, lab, S, match, st, pa, slack, vis,
                                          gu, gv, gw, flower, flen, flower_from, q, inq, qs, tmp):
                            return True
                    else:
                        _update_slack(u, st[v], lab, gu, gv, gw, slack)
        nx = sc[1]
        d = INF
        for b in range(n + 1, nx + 1):
            if st[b] == b and S[b] == 1:
                d = min(d, lab[b] // 2)
        for x in range(1, nx + 1):
            if st[x] == x and slack[x] != 0:
                if S[x] == -1:
                    d = min(d, _dist(lab, gu, gv, gw, slack[x], x))
                elif S[x] == 0:
                    d = min(d, _dist(lab, gu, gv, gw, slack[x], x) // 2)
        for u in range(1, n + 1):
            if S[st[u]] == 0:
                if lab[u] <= d:
                    return False
                lab[u] -= d
            elif S[st[u]] == 1:
                lab[u] += d
        for b in range(n + 1, nx + 1):
            if st[b] == b:
                if S[st[b]] == 0:
                    lab[b] += d * 2
                elif S[st[b]] == 1:
                    lab[b] -= d * 2
        qs[0] = 0
        qs[1] = 0
        inq[:] = 0
        for x in range(1, nx + 1):
            if st[x] == x and slack[x] != 0 and st[slack[x]] != x and _dist(lab, gu, gv, gw, slack[x], x) == 0:
                if _on_found_edge(gu[slack[x], x], gv[slack[x], x], n, sc, lab, S, match, st, pa, slack, vis,
                                  gu, gv, gw, flower, flen, flower_from, q, inq, qs, tmp):
                    return True
        for b in range(n + 1, nx + 1):
            if st[b] == b and S[b] == 1 and lab[b] == 0:
                _expand_blossom(b, n, lab, S, st, pa, slack, gu, gv, gw, flower, flen, flower_from, q, inq, qs)


@njit(cache=True, nogil=True)
def max_weight_matching(w):
    """Maximum-weight matching of the graph with symmetric weight matrix ``w`` (0-based, 0 = no edge).

    Returns ``mate`` with ``mate[i] = j`` or ``-1``.
    """
    n = w.shape[0]
    size = 2 * n + 2
    gu = np.zeros((size, size), dtype=np.int64)
    gv = np.zeros((size, size), dtype=np.int64)
    gw = np.zeros((size, size), dtype=np.int64)
    for a in range(size):
        for b in range(size):
            gu[a, b] = a
            gv[a, b] = b
    w_max = np.int64(0)
    for a in range(n):
        for b in range(n):
            gw[a + 1, b + 1] = w[a, b]
            if w[a, b] > w_max:
                w_max = w[a, b]
    lab = np.zeros(size, dtype=np.int64)
    S = np.zeros(size, dtype=np.int64)
    match = np.zeros(size, dtype=np.int64)
    st = np.zeros(size, dtype=np.int64)
    pa = np.zeros(size, dtype=np.int64)
    slack = np.zeros(size, dtype=np.int64)
    vis = np.zeros(size, dtype=np.int64)
    flower = np.zeros((size, size), dtype=np.int64)
    flen = np.zeros(size, dtype=np.int64)
    flower_from = np.zeros((size, n + 1), dtype=np.int64)
    q = np.zeros(size, dtype=np.int64)
    inq = np.zeros(size, dtype=np.int64)
    qs = np.zeros(2, dtype=np.int64)
    tmp = np.zeros(size, dtype=np.int64)
    sc = np.zeros(3, dtype=np.int64)
    sc[1] = n
    for u in range(n + 1):
        st[u] = u
    for u in range(1, n + 1):
        flower_from[u, u] = u
        lab[u] = w_max
    while _phase(n, sc, lab, S, match, st, pa, slack, vis, gu, gv, gw, flower, flen, flower_from, q, inq, qs, tmp):
        pass
    mate = np.full(n, -1, dtype=np.int64)
    for u in range(1, n + 1):
        if match[u] != 0:
            mate[u - 1] = match[u] - 1
    return mate
