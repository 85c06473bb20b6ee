"""Numba kernels for the fast-marching solvers.

Hot-loop machinery shared by the public ``fastmarch`` module: an array
binary heap keyed ``(distance, node)`` so equal distances resolve to the
lowest linear node index, obtuse-superbase (Selling) stencil construction,
the Hopf-Lax simplex minimizer in Gram form, and the three propagation
engines (static 2D, static radius-lifted 3D, dynamic 2D with on-the-fly
metric assembly).

All state lives in flat arrays; node ``(x, y)`` has linear index
``y*W + x`` and lifted node ``(x, y, r)`` has ``(r*H + y)*W + x``.

Labels: 0 = Far, 1 = Front, 2 = Accepted.
"""

import numpy as np
from numba import njit

FAR = 0
FRONT = 1
ACCEPTED = 2

INF = np.inf


# ---------------------------------------------------------------------------
# binary heap over (key, node) with deterministic tie-break on node index
# ---------------------------------------------------------------------------

@njit(cache=True)
def _heap_less(hk, hn, i, j):
    return hk[i] < hk[j] or (hk[i] == hk[j] and hn[i] < hn[j])


@njit(cache=True)
def _heap_push(hk, hn, size, key, node):
    i = size
    hk[i] = key
    hn[i] = node
    while i > 0:
        p = (i - 1) >> 1
        if _heap_less(hk, hn, i, p):
            hk[i], hk[p] = hk[p], hk[i]
            hn[i], hn[p] = hn[p], hn[i]
            i = p
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(hk, hn, size):
    key = hk[0]
    node = hn[0]
    size -= 1
    if size > 0:
        hk[0] = hk[size]
        hn[0] = hn[size]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < size and _heap_less(hk, hn, l, m):
                m = l
            if r < size and _heap_less(hk, hn, r, m):
                m = r
            if m == i:
                break
            hk[i], hk[m] = hk[m], hk[i]
            hn[i], hn[m] = hn[m], hn[i]
            i = m
    return key, node, size


# ---------------------------------------------------------------------------
# Selling reduction: acute stencils for 2x2 SPD tensors
# ---------------------------------------------------------------------------

@njit(cache=True)
def _selling2(m11, m12, m22):
    """Obtuse superbase of Z^2 under the inner product M.

    Returns ``(v1x, v1y, v2x, v2y, p12, ok)`` where ``(v1, v2, -v1-v2)``
    is the reduced superbase, ``p12 = <v1, M v2>`` and ``ok`` is False if
    the reduction failed to converge in 64 iterations (non-SPD input).
    """
    v1x, v1y = 1.0, 0.0
    v2x, v2y = 0.0, 1.0
    v0x, v0y = -1.0, -1.0
    ok = False
    for _ in range(64):
        e1 = m11 * v1x * v1x + 2.0 * m12 * v1x * v1y + m22 * v1y * v1y
        e2 = m11 * v2x * v2x + 2.0 * m12 * v2x * v2y + m22 * v2y * v2y
        e0 = m11 * v0x * v0x + 2.0 * m12 * v0x * v0y + m22 * v0y * v0y
        p12 = v1x * (m11 * v2x + m12 * v2y) + v1y * (m12 * v2x + m22 * v2y)
        p01 = v0x * (m11 * v1x + m12 * v1y) + v0y * (m12 * v1x + m22 * v1y)
        p02 = v0x * (m11 * v2x + m12 * v2y) + v0y * (m12 * v2x + m22 * v2y)
        if p12 > 1e-12 * np.sqrt(e1 * e2):
            # flip v1; third vector becomes v1 - v2
            v0x, v0y = v1x - v2x, v1y - v2y
            v1x, v1y = -v1x, -v1y
        elif p01 > 1e-12 * np.sqrt(e0 * e1):
            v2x, v2y = v0x - v1x, v0y - v1y
            v0x, v0y = -v0x, -v0y
        elif p02 > 1e-12 * np.sqrt(e0 * e2):
            v1x, v1y = v0x - v2x, v0y - v2y
            v0x, v0y = -v0x, -v0y
        else:
            ok = True
            break
    if not ok:
        return 1.0, 0.0, 0.0, 1.0, 0.0, False
    # consistent orientation: det(v1, v2) > 0.  Swapping (rather than
    # negating) keeps the superbase obtuse.
    if v1x * v2y - v1y * v2x < 0.0:
        v1x, v1y, v2x, v2y = v2x, v2y, v1x, v1y
    p12 = v1x * (m11 * v2x + m12 * v2y) + v1y * (m12 * v2x + m22 * v2y)
    return v1x, v1y, v2x, v2y, p12, True


MAX_STENCIL = 16


@njit(cache=True)
def _stencil_cycle(m11, m12, m22, ex, ey):
    """Fill ``ex/ey`` with the stencil vertex cycle; returns count or -1.

    Vertices are emitted in angular order; consecutive pairs (cyclically)
    are the update simplexes and are mutually acute under M.  A vanishing
    cross product ``<v1, M v2> == 0`` drops the diagonal offset of the
    superbase fan.  The fan is then refined adaptively: any adjacent pair
    subtending more than 45 degrees in the M-geometry gains their vector
    sum as a new vertex (which stays acute against both parents), until
    every gap closes or the vertex budget is hit.  Anisotropic tensors
    thereby grow offsets elongated along their cheap direction.
    """
    if m11 <= 0.0 or m11 * m22 - m12 * m12 <= 0.0:
        return -1
    v1x, v1y, v2x, v2y, p12, ok = _selling2(m11, m12, m22)
    if not ok:
        return -1
    e1 = m11 * v1x * v1x + 2.0 * m12 * v1x * v1y + m22 * v1y * v1y
    e2 = m11 * v2x * v2x + 2.0 * m12 * v2x * v2y + m22 * v2y * v2y
    if -1e-12 * np.sqrt(e1 * e2) <= p12 <= 0.0:
        m = 4
        ex[0], ey[0] = v1x, v1y
        ex[1], ey[1] = v2x, v2y
        ex[2], ey[2] = -v1x, -v1y
        ex[3], ey[3] = -v2x, -v2y
    else:
        m = 6
        ex[0], ey[0] = v1x, v1y
        ex[1], ey[1] = v1x + v2x, v1y + v2y
        ex[2], ey[2] = v2x, v2y
        ex[3], ey[3] = -v1x, -v1y
        ex[4], ey[4] = -v1x - v2x, -v1y - v2y
        ex[5], ey[5] = -v2x, -v2y
    i = 0
    scanned = 0
    while scanned < m and m < MAX_STENCIL:
        j = i + 1
        if j == m:
            j = 0
        ax, ay = ex[i], ey[i]
        bx_, by_ = ex[j], ey[j]
        dot = ax * (m11 * bx_ + m12 * by_) + ay * (m12 * bx_ + m22 * by_)
        na = m11 * ax * ax + 2.0 * m12 * ax * ay + m22 * ay * ay
        nb = m11 * bx_ * bx_ + 2.0 * m12 * bx_ * by_ + m22 * by_ * by_
        if dot < 0.0 or dot * dot < 0.5 * na * nb:
            for k in range(m, i + 1, -1):
                ex[k] = ex[k - 1]
                ey[k] = ey[k - 1]
            ex[i + 1] = ax + bx_
            ey[i + 1] = ay + by_
            m += 1
            scanned = 0
        else:
            i += 1
            if i == m:
                i = 0
            scanned += 1
    return m


# ---------------------------------------------------------------------------
# Hopf-Lax simplex minimizer in Gram form
#
# minimize  sqrt(b^T G b) + b^T u  over the unit simplex, where
# G[i, j] = <z_i, M z_j> for vertex offsets z_i.  The stationary value is
# the larger root kappa of  (kappa 1 - u)^T G^-1 (kappa 1 - u) = 1.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _hl1(g11, u1):
    return u1 + np.sqrt(g11)


@njit(cache=True)
def _hl2(g11, g12, g22, u1, u2):
    """Interior stationary value over a 2-vertex segment, or inf."""
    det = g11 * g22 - g12 * g12
    if det <= 1e-300:
        return INF, 0.0, 0.0
    i11 = g22 / det
    i12 = -g12 / det
    i22 = g11 / det
    s1 = i11 + 2.0 * i12 + i22
    su = (i11 + i12) * u1 + (i12 + i22) * u2
    ugu = i11 * u1 * u1 + 2.0 * i12 * u1 * u2 + i22 * u2 * u2
    if s1 <= 0.0:
        return INF, 0.0, 0.0
    disc = su * su - s1 * (ugu - 1.0)
    if disc < 0.0:
        return INF, 0.0, 0.0
    kappa = (su + np.sqrt(disc)) / s1
    denom = kappa * s1 - su
    if denom <= 0.0:
        return INF, 0.0, 0.0
    n = 1.0 / denom
    b1 = n * (i11 * (kappa - u1) + i12 * (kappa - u2))
    b2 = n * (i12 * (kappa - u1) + i22 * (kappa - u2))
    if b1 < -1e-12 or b2 < -1e-12:
        return INF, 0.0, 0.0
    return kappa, b1, b2


@njit(cache=True)
def _hl3(g11, g12, g13, g22, g23, g33, u1, u2, u3):
    """Interior stationary value over a 3-vertex simplex, or inf."""
    c11 = g22 * g33 - g23 * g23
    c12 = g13 * g23 - g12 * g33
    c13 = g12 * g23 - g13 * g22
    det = g11 * c11 + g12 * c12 + g13 * c13
    if det <= 1e-300:
        return INF, 0.0, 0.0, 0.0
    c22 = g11 * g33 - g13 * g13
    c23 = g12 * g13 - g11 * g23
    c33 = g11 * g22 - g12 * g12
    i11 = c11 / det
    i12 = c12 / det
    i13 = c13 / det
    i22 = c22 / det
    i23 = c23 / det
    i33 = c33 / det
    r1 = i11 + i12 + i13
    r2 = i12 + i22 + i23
    r3 = i13 + i23 + i33
    s1 = r1 + r2 + r3
    su = r1 * u1 + r2 * u2 + r3 * u3
    ugu = (
        i11 * u1 * u1
        + i22 * u2 * u2
        + i33 * u3 * u3
        + 2.0 * (i12 * u1 * u2 + i13 * u1 * u3 + i23 * u2 * u3)
    )
    if s1 <= 0.0:
        return INF, 0.0, 0.0, 0.0
    disc = su * su - s1 * (ugu - 1.0)
    if disc < 0.0:
        return INF, 0.0, 0.0, 0.0
    kappa = (su + np.sqrt(disc)) / s1
    denom = kappa * s1 - su
    if denom <= 0.0:
        return INF, 0.0, 0.0, 0.0
    n = 1.0 / denom
    b1 = n * (i11 * (kappa - u1) + i12 * (kappa - u2) + i13 * (kappa - u3))
    b2 = n * (i12 * (kappa - u1) + i22 * (kappa - u2) + i23 * (kappa - u3))
    b3 = n * (i13 * (kappa - u1) + i23 * (kappa - u2) + i33 * (kappa - u3))
    if b1 < -1e-12 or b2 < -1e-12 or b3 < -1e-12:
        return INF, 0.0, 0.0, 0.0
    return kappa, b1, b2, b3


@njit(cache=True)
def _segment_best(g11, g12, g22, u1, u2):
    """Minimum over a closed segment: interior stationary point or vertex.

    Returns ``(value, pick)`` with pick 0/1 = vertex index of the largest
    barycentric weight (ties: smaller value vertex, then lower index).
    """
    best = INF
    pick = -1
    if np.isfinite(u1) and np.isfinite(u2):
        val, b1, b2 = _hl2(g11, g12, g22, u1, u2)
        if val < best:
            best = val
            if b1 > b2 or (b1 == b2 and u1 <= u2):
                pick = 0
            else:
                pick = 1
    if np.isfinite(u1):
        val = _hl1(g11, u1)
        if val < best:
            best = val
            pick = 0
    if np.isfinite(u2):
        val = _hl1(g22, u2)
        if val < best:
            best = val
            pick = 1
    return best, pick


@njit(cache=True)
def _triangle_best(g11, g12, g13, g22, g23, g33, u1, u2, u3):
    """Minimum over a closed triangle; returns ``(value, pick in 0..2)``."""
    best = INF
    pick = -1
    if np.isfinite(u1) and np.isfinite(u2) and np.isfinite(u3):
        val, b1, b2, b3 = _hl3(g11, g12, g13, g22, g23, g33, u1, u2, u3)
        if val < best:
            best = val
            bb = b1
            pick = 0
            if b2 > bb or (b2 == bb and u2 < u1):
                bb = b2
                pick = 1
            if b3 > bb or (b3 == bb and pick == 0 and u3 < u1) or (
                b3 == bb and pick == 1 and u3 < u2
            ):
                pick = 2
    val, p = _segment_best(g11, g12, g22, u1, u2)
    if val < best:
        best = val
        pick = p
    val, p = _segment_best(g11, g13, g33, u1, u3)
    if val < best:
        best = val
        pick = 0 if p == 0 else 2
    val, p = _segment_best(g22, g23, g33, u2, u3)
    if val < best:
        best = val
        pick = 1 if p == 0 else 2
    return best, pick


@njit(cache=True)
def _update_2d(x, y, W, H, m11, m12, m22, ex, ey, m, U, rdx, rdy, restrict):
    """Hopf-Lax candidate at node ``(x, y)`` over a stencil vertex cycle.

    ``restrict`` limits evaluation to simplexes containing the offset
    ``(rdx, rdy)`` (valid when the metric is static).  Returns
    ``(candidate, ancestor_node)``.
    """
    best = INF
    anc = np.int64(-1)
    for i in range(m):
        j = i + 1
        if j == m:
            j = 0
        e1x = ex[i]
        e1y = ey[i]
        e2x = ex[j]
        e2y = ey[j]
        if restrict and not (
            (e1x == rdx and e1y == rdy) or (e2x == rdx and e2y == rdy)
        ):
            continue
        x1 = x + np.int64(e1x)
        y1 = y + np.int64(e1y)
        x2 = x + np.int64(e2x)
        y2 = y + np.int64(e2y)
        u1 = INF
        u2 = INF
        n1 = np.int64(-1)
        n2 = np.int64(-1)
        if 0 <= x1 < W and 0 <= y1 < H:
            n1 = y1 * W + x1
            u1 = U[n1]
        if 0 <= x2 < W and 0 <= y2 < H:
            n2 = y2 * W + x2
            u2 = U[n2]
        if u1 == INF and u2 == INF:
            continue
        g11 = m11 * e1x * e1x + 2.0 * m12 * e1x * e1y + m22 * e1y * e1y
        g22 = m11 * e2x * e2x + 2.0 * m12 * e2x * e2y + m22 * e2y * e2y
        g12 = e1x * (m11 * e2x + m12 * e2y) + e1y * (m12 * e2x + m22 * e2y)
        val, pick = _segment_best(g11, g12, g22, u1, u2)
        if val < best:
            best = val
            anc = n1 if pick == 0 else n2
    return best, anc


# ---------------------------------------------------------------------------
# static 2D solver
# ---------------------------------------------------------------------------

@njit(cache=True)
def build_stencils_2d(tens, W, H, mask):
    """Per-node stencil cycles for a static tensor field.

    Returns ``(st, sm)``: vertex offsets int16 (N, 6, 2) and counts
    (N,); count 0 marks masked nodes, -1 a failed reduction.
    """
    N = W * H
    st = np.zeros((N, MAX_STENCIL, 2), dtype=np.int16)
    sm = np.zeros(N, dtype=np.int8)
    ex = np.empty(MAX_STENCIL)
    ey = np.empty(MAX_STENCIL)
    for n in range(N):
        if not mask[n]:
            continue
        m = _stencil_cycle(tens[n, 0], tens[n, 1], tens[n, 2], ex, ey)
        sm[n] = m
        if m < 0:
            return st, sm
        for i in range(m):
            st[n, i, 0] = np.int16(ex[i])
            st[n, i, 1] = np.int16(ey[i])
    return st, sm


@njit(cache=True)
def _reverse_adjacency(st, sm, W, H):
    """CSR reverse adjacency: for node v, the nodes whose stencil hits v."""
    N = W * H
    counts = np.zeros(N + 1, dtype=np.int64)
    for n in range(N):
        x = n % W
        y = n // W
        for i in range(sm[n]):
            vx = x + st[n, i, 0]
            vy = y + st[n, i, 1]
            if 0 <= vx < W and 0 <= vy < H:
                counts[vy * W + vx + 1] += 1
    ptr = np.cumsum(counts)
    idx = np.empty(ptr[N], dtype=np.int64)
    fill = ptr[:N].copy()
    for n in range(N):
        x = n % W
        y = n // W
        for i in range(sm[n]):
            vx = x + st[n, i, 0]
            vy = y + st[n, i, 1]
            if 0 <= vx < W and 0 <= vy < H:
                v = vy * W + vx
                idx[fill[v]] = n
                fill[v] += 1
    return ptr, idx


@njit(cache=True)
def fm_static_2d(tens, W, H, mask, sources, stops):
    """Fast marching over a static 2D tensor field.

    Returns ``(U, V, anc, order, n_acc, status)``; status 0 = stop set
    fully accepted (or exhausted with no stop set), 1 = a stop node was
    unreachable, 2 = stencil construction failed (non-SPD tensor).
    """
    N = W * H
    U = np.full(N, INF)
    V = np.zeros(N, dtype=np.uint8)
    anc = np.full(N, -1, dtype=np.int64)
    order = np.empty(N, dtype=np.int64)
    n_acc = 0

    st, sm = build_stencils_2d(tens, W, H, mask)
    for n in range(N):
        if mask[n] and sm[n] < 0:
            return U, V, anc, order, 0, 2
    ptr, idx = _reverse_adjacency(st, sm, W, H)

    cap = 4 * N + 64
    hk = np.empty(cap)
    hn = np.empty(cap, dtype=np.int64)
    hs = 0
    for i in range(len(sources)):
        s = sources[i]
        U[s] = 0.0
        V[s] = FRONT
        hs = _heap_push(hk, hn, hs, 0.0, s)

    n_stop = len(stops)
    stop_left = 0
    for i in range(n_stop):
        if V[stops[i]] != ACCEPTED:
            stop_left += 1

    ex = np.empty(MAX_STENCIL)
    ey = np.empty(MAX_STENCIL)
    while hs > 0:
        key, node, hs = _heap_pop(hk, hn, hs)
        if V[node] == ACCEPTED or key != U[node]:
            continue
        V[node] = ACCEPTED
        order[n_acc] = node
        n_acc += 1
        if n_stop > 0:
            for i in range(n_stop):
                if stops[i] == node:
                    stop_left -= 1
            if stop_left == 0:
                return U, V, anc, order, n_acc, 0
        xm = node % W
        ym = node // W
        for k in range(ptr[node], ptr[node + 1]):
            z = idx[k]
            if V[z] == ACCEPTED or not mask[z]:
                continue
            x = z % W
            y = z // W
            m = sm[z]
            for i in range(m):
                ex[i] = st[z, i, 0]
                ey[i] = st[z, i, 1]
            val, a = _update_2d(
                x, y, W, H,
                tens[z, 0], tens[z, 1], tens[z, 2],
                ex, ey, m, U, xm - x, ym - y, True,
            )
            if val < U[z]:
                U[z] = val
                anc[z] = a
                V[z] = FRONT
                if hs >= cap:
                    nk = np.empty(cap * 2)
                    nn = np.empty(cap * 2, dtype=np.int64)
                    nk[:hs] = hk[:hs]
                    nn[:hs] = hn[:hs]
                    hk = nk
                    hn = nn
                    cap *= 2
                hs = _heap_push(hk, hn, hs, val, z)
    status = 0 if stop_left == 0 or n_stop == 0 else 1
    return U, V, anc, order, n_acc, status


# ---------------------------------------------------------------------------
# static radius-lifted 3D solver (block-diagonal tensors)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _update_3d(
    x, y, r, W, H, NR, m11, m12, m22, pr, ex, ey, m, U, rdx, rdy, rdr, restrict
):
    """Hopf-Lax candidate at lifted node ``(x, y, r)``.

    The stencil is the spatial vertex cycle combined with the two radial
    apexes; simplexes are the triangles (spatial edge, apex).  The block
    structure zeroes the spatial-radial Gram cross terms.
    """
    best = INF
    anc = np.int64(-1)
    layer = W * H
    base = r * layer
    u_up = INF
    u_dn = INF
    n_up = np.int64(-1)
    n_dn = np.int64(-1)
    if r + 1 < NR:
        n_up = base + layer + y * W + x
        u_up = U[n_up]
    if r - 1 >= 0:
        n_dn = base - layer + y * W + x
        u_dn = U[n_dn]
    for i in range(m):
        j = i + 1
        if j == m:
            j = 0
        e1x = ex[i]
        e1y = ey[i]
        e2x = ex[j]
        e2y = ey[j]
        spatial_hit = (e1x == rdx and e1y == rdy) or (e2x == rdx and e2y == rdy)
        x1 = x + np.int64(e1x)
        y1 = y + np.int64(e1y)
        x2 = x + np.int64(e2x)
        y2 = y + np.int64(e2y)
        u1 = INF
        u2 = INF
        n1 = np.int64(-1)
        n2 = np.int64(-1)
        if 0 <= x1 < W and 0 <= y1 < H:
            n1 = base + y1 * W + x1
            u1 = U[n1]
        if 0 <= x2 < W and 0 <= y2 < H:
            n2 = base + y2 * W + x2
            u2 = U[n2]
        g11 = m11 * e1x * e1x + 2.0 * m12 * e1x * e1y + m22 * e1y * e1y
        g22 = m11 * e2x * e2x + 2.0 * m12 * e2x * e2y + m22 * e2y * e2y
        g12 = e1x * (m11 * e2x + m12 * e2y) + e1y * (m12 * e2x + m22 * e2y)
        for s in range(2):
            dr = 1 if s == 0 else -1
            if restrict and not (spatial_hit or (rdx == 0 and rdy == 0 and rdr == dr)):
                continue
            u3 = u_up if dr == 1 else u_dn
            n3 = n_up if dr == 1 else n_dn
            if u1 == INF and u2 == INF and u3 == INF:
                continue
            val, pick = _triangle_best(g11, g12, 0.0, g22, 0.0, pr, u1, u2, u3)
            if val < best:
                best = val
                if pick == 0:
                    anc = n1
                elif pick == 1:
                    anc = n2
                else:
                    anc = n3
    return best, anc


@njit(cache=True)
def fm_static_3d(spatial, radial, W, H, NR, mask, sources, stops):
    """Fast marching over a radius-lifted block-diagonal tensor field.

    ``spatial`` is (N, 3) per lifted node, ``radial`` (N,), ``mask`` (N,)
    boolean (already broadcast over r).  Same returns as 2D.
    """
    N = W * H * NR
    U = np.full(N, INF)
    V = np.zeros(N, dtype=np.uint8)
    anc = np.full(N, -1, dtype=np.int64)
    order = np.empty(N, dtype=np.int64)
    n_acc = 0

    st = np.zeros((N, MAX_STENCIL, 2), dtype=np.int16)
    sm = np.zeros(N, dtype=np.int8)
    ex = np.empty(MAX_STENCIL)
    ey = np.empty(MAX_STENCIL)
    for n in range(N):
        if not mask[n]:
            continue
        m = _stencil_cycle(spatial[n, 0], spatial[n, 1], spatial[n, 2], ex, ey)
        if m < 0:
            return U, V, anc, order, 0, 2
        sm[n] = m
        for i in range(m):
            st[n, i, 0] = np.int16(ex[i])
            st[n, i, 1] = np.int16(ey[i])

    # reverse adjacency over the lifted grid (spatial edges + radial links)
    layer = W * H
    counts = np.zeros(N + 1, dtype=np.int64)
    for n in range(N):
        if not mask[n]:
            continue
        x = n % W
        y = (n // W) % H
        r = n // layer
        for i in range(sm[n]):
            vx = x + st[n, i, 0]
            vy = y + st[n, i, 1]
            if 0 <= vx < W and 0 <= vy < H:
                counts[r * layer + vy * W + vx + 1] += 1
        if r + 1 < NR:
            counts[n + layer + 1] += 1
        if r - 1 >= 0:
            counts[n - layer + 1] += 1
    ptr = np.cumsum(counts)
    idx = np.empty(ptr[N], dtype=np.int64)
    fill = ptr[:N].copy()
    for n in range(N):
        if not mask[n]:
            continue
        x = n % W
        y = (n // W) % H
        r = n // layer
        for i in range(sm[n]):
            vx = x + st[n, i, 0]
            vy = y + st[n, i, 1]
            if 0 <= vx < W and 0 <= vy < H:
                v = r * layer + vy * W + vx
                idx[fill[v]] = n
                fill[v] += 1
        if r + 1 < NR:
            idx[fill[n + layer]] = n
            fill[n + layer] += 1
        if r - 1 >= 0:
            idx[fill[n - layer]] = n
            fill[n - layer] += 1

    cap = 4 * N + 64
    hk = np.empty(cap)
    hn = np.empty(cap, dtype=np.int64)
    hs = 0
    for i in range(len(sources)):
        s = sources[i]
        U[s] = 0.0
        V[s] = FRONT
        hs = _heap_push(hk, hn, hs, 0.0, s)

    n_stop = len(stops)
    stop_left = n_stop

    while hs > 0:
        key, node, hs = _heap_pop(hk, hn, hs)
        if V[node] == ACCEPTED or key != U[node]:
            continue
        V[node] = ACCEPTED
        order[n_acc] = node
        n_acc += 1
        if n_stop > 0:
            for i in range(n_stop):
                if stops[i] == node:
                    stop_left -= 1
            if stop_left == 0:
                return U, V, anc, order, n_acc, 0
        xm = node % W
        ym = (node // W) % H
        rm = node // layer
        for k in range(ptr[node], ptr[node + 1]):
            z = idx[k]
            if V[z] == ACCEPTED or not mask[z]:
                continue
            x = z % W
            y = (z // W) % H
            r = z // layer
            m = sm[z]
            for i in range(m):
                ex[i] = st[z, i, 0]
                ey[i] = st[z, i, 1]
            val, a = _update_3d(
                x, y, r, W, H, NR,
                spatial[z, 0], spatial[z, 1], spatial[z, 2], radial[z],
                ex, ey, m, U, xm - x, ym - y, rm - r, True,
            )
            if val < U[z]:
                U[z] = val
                anc[z] = a
                V[z] = FRONT
                if hs >= cap:
                    nk = np.empty(cap * 2)
                    nn = np.empty(cap * 2, dtype=np.int64)
                    nk[:hs] = hk[:hs]
                    nn[:hs] = hn[:hs]
                    hk = nk
                    hn = nn
                    cap *= 2
                hs = _heap_push(hk, hn, hs, val, z)
    status = 0 if stop_left == 0 or n_stop == 0 else 1
    return U, V, anc, order, n_acc, status


# ---------------------------------------------------------------------------
# dynamic 2D solver: metric assembled on the fly from orientation features
# ---------------------------------------------------------------------------

@njit(cache=True)
def _chain_walk(anc, node, steps):
    """Follow ancestor links ``steps`` times; stops early at a source."""
    cur = node
    for _ in range(steps):
        nxt = anc[cur]
        if nxt < 0:
            break
        cur = nxt
    return cur


@njit(cache=True)
def select_orientation(peaks_row, psi_row, mu_a, score_a, n_theta):
    """Pick the orientation bin at a node given the reference orientation.

    Among candidate bins, keep those maximizing ``|<g(theta), g(mu_a)>|``
    (computed as an exact integer angular distance to the reference axis),
    then the one whose score is closest to ``score_a``; remaining ties
    resolve to the smallest bin.  Returns ``(bin, found)``; ``found`` is
    False when there are no candidates.
    """
    half = n_theta // 2
    quarter_plus = half  # sentinel above any achievable rank
    best_rank = quarter_plus
    best_diff = INF
    best_k = -1
    for k in range(n_theta):
        if not peaks_row[k]:
            continue
        d = (k - mu_a) % n_theta
        m = d % half
        rank = m if m <= half - m else half - m
        if rank < best_rank:
            best_rank = rank
            best_diff = abs(psi_row[k] - score_a)
            best_k = k
        elif rank == best_rank:
            diff = abs(psi_row[k] - score_a)
            if diff < best_diff:
                best_diff = diff
                best_k = k
    if best_k < 0:
        return 0, False
    return best_k, True


@njit(cache=True)
def _rev_register(rev_head, pool_next, pool_node, pool_n, vertex, node):
    """Register ``node`` in the reverse list of ``vertex`` (deduplicated)."""
    p = rev_head[vertex]
    while p >= 0:
        if pool_node[p] == node:
            return pool_n
        p = pool_next[p]
    if pool_n >= pool_node.shape[0]:
        raise RuntimeError("reverse-adjacency pool exhausted")
    pool_node[pool_n] = node
    pool_next[pool_n] = rev_head[vertex]
    rev_head[vertex] = pool_n
    return pool_n + 1


@njit(cache=True)
def dyn_init(W, H, s, mu_s, tbase, gx, gy, xi_aniso):
    """Allocate and initialize the dynamic solver state arrays.

    The source gets its tensor assembled immediately (unit penalty, its
    own argmax orientation) so every touched node carries an SPD tensor.
    """
    N = W * H
    U = np.full(N, INF)
    V = np.zeros(N, dtype=np.uint8)
    anc = np.full(N, -1, dtype=np.int64)
    mu = np.full(N, -1, dtype=np.int32)
    fb = np.zeros(N, dtype=np.uint8)
    tcoh = np.zeros((N, 3))
    order = np.empty(N, dtype=np.int64)
    st = np.zeros((N, MAX_STENCIL, 2), dtype=np.int16)
    sm = np.zeros(N, dtype=np.int8)
    rev_head = np.full(N, -1, dtype=np.int64)
    pool_cap = 48 * N + 64
    pool_next = np.empty(pool_cap, dtype=np.int64)
    pool_node = np.empty(pool_cap, dtype=np.int64)
    stamp = np.full(N, -1, dtype=np.int64)
    cap = 16 * N + 64
    hk = np.empty(cap)
    hn = np.empty(cap, dtype=np.int64)
    U[s] = 0.0
    V[s] = FRONT
    mu[s] = mu_s
    ppx = -gy[mu_s]
    ppy = gx[mu_s]
    tcoh[s, 0] = tbase[s, 0] + xi_aniso * ppx * ppx
    tcoh[s, 1] = tbase[s, 1] + xi_aniso * ppx * ppy
    tcoh[s, 2] = tbase[s, 2] + xi_aniso * ppy * ppy
    hs = _heap_push(hk, hn, 0, 0.0, s)
    counters = np.zeros(4, dtype=np.int64)  # heap size, n_acc, pool_n, iter
    counters[0] = hs
    return (
        U, V, anc, mu, fb, tcoh, order, st, sm,
        rev_head, pool_next, pool_node, stamp, hk, hn, counters,
    )


@njit(cache=True)
def dyn_step(
    W, H, tbase, psi2, peaks2, gx, gy, chi1, chi2, lam, xi_aniso,
    U, V, anc, mu, fb, tcoh, order, st, sm,
    rev_head, pool_next, pool_node, stamp, hk, hn, counters,
):
    """One acceptance iteration of the dynamic front.

    Pops the smallest Front node, accepts it, resolves the two reference
    points by truncated discrete backtracking, then reassembles the metric
    and re-evaluates the Hopf-Lax operator at every non-Accepted neighbor
    (structural 8-ring plus registered stencil dependents).

    Returns the accepted node or -1 when the heap is exhausted.
    """
    hs = counters[0]
    node = np.int64(-1)
    key = 0.0
    while hs > 0:
        key, node, hs = _heap_pop(hk, hn, hs)
        if V[node] != ACCEPTED and key == U[node]:
            break
        node = np.int64(-1)
    counters[0] = hs
    if node < 0:
        return np.int64(-1)
    V[node] = ACCEPTED
    order[counters[1]] = node
    counters[1] += 1
    counters[3] += 1
    it = counters[3]

    a = _chain_walk(anc, node, chi1)
    b = _chain_walk(anc, node, chi2)
    mu_a = mu[a]
    mu_b = mu[b]
    score_a = psi2[a, mu_a]
    score_b = psi2[b, mu_b]

    xm = node % W
    ym = node // W

    # trigger set: 8-ring plus nodes whose current stencil contains x_min
    ntrig = 0
    trig = np.empty(1024, dtype=np.int64)
    for dy in range(-1, 2):
        for dx in range(-1, 2):
            if dx == 0 and dy == 0:
                continue
            x = xm + dx
            y = ym + dy
            if 0 <= x < W and 0 <= y < H:
                z = y * W + x
                if V[z] != ACCEPTED and stamp[z] != it:
                    stamp[z] = it
                    trig[ntrig] = z
                    ntrig += 1
    p = rev_head[node]
    while p >= 0:
        z = pool_node[p]
        if V[z] != ACCEPTED and stamp[z] != it:
            stamp[z] = it
            if ntrig >= 1024:
                raise RuntimeError("trigger buffer exhausted")
            trig[ntrig] = z
            ntrig += 1
        p = pool_next[p]

    ex = np.empty(MAX_STENCIL)
    ey = np.empty(MAX_STENCIL)
    for t in range(ntrig):
        z = trig[t]
        x = z % W
        y = z // W

        mu_z, found = select_orientation(peaks2[z], psi2[z], mu_a, score_a, len(gx))
        if not found:
            mu_z = mu_a
            fb[z] = 1
        mu[z] = mu_z
        phi = np.exp(lam * abs(psi2[z, mu_z] - score_b))
        ppx = -gy[mu_z]
        ppy = gx[mu_z]
        m11 = phi * (tbase[z, 0] + xi_aniso * ppx * ppx)
        m12 = phi * (tbase[z, 1] + xi_aniso * ppx * ppy)
        m22 = phi * (tbase[z, 2] + xi_aniso * ppy * ppy)
        tcoh[z, 0] = m11
        tcoh[z, 1] = m12
        tcoh[z, 2] = m22

        m = _stencil_cycle(m11, m12, m22, ex, ey)
        if m < 0:
            raise RuntimeError("stencil reduction failed on dynamic tensor")
        sm[z] = m
        for i in range(m):
            st[z, i, 0] = np.int16(ex[i])
            st[z, i, 1] = np.int16(ey[i])
            vx = x + np.int64(ex[i])
            vy = y + np.int64(ey[i])
            if 0 <= vx < W and 0 <= vy < H:
                counters[2] = _rev_register(
                    rev_head, pool_next, pool_node, counters[2], vy * W + vx, z
                )

        val, a_node = _update_2d(
            x, y, W, H, m11, m12, m22, ex, ey, m, U, 0, 0, False
        )
        # causal floor: a re-priced arrival cannot predate the frontier
        # level that produced the metric pricing it (keeps acceptance
        # monotone while stale coherence walls still melt)
        if val < key:
            val = key
        if val < U[z]:
            U[z] = val
            anc[z] = a_node
            V[z] = FRONT
            hs = counters[0]
            if hs >= hk.shape[0]:
                raise RuntimeError("heap capacity exhausted")
            counters[0] = _heap_push(hk, hn, hs, val, z)
        elif V[z] == FAR:
            V[z] = FRONT
    return node


@njit(cache=True)
def dyn_run(
    W, H, tbase, psi2, peaks2, gx, gy, chi1, chi2, lam, xi_aniso, s, mu_s, q
):
    """Single-front dynamic propagation until ``q`` is accepted."""
    state = dyn_init(W, H, s, mu_s, tbase, gx, gy, xi_aniso)
    (U, V, anc, mu, fb, tcoh, order, st, sm,
     rev_head, pool_next, pool_node, stamp, hk, hn, counters) = state
    status = 1
    while True:
        node = dyn_step(
            W, H, tbase, psi2, peaks2, gx, gy, chi1, chi2, lam, xi_aniso,
            U, V, anc, mu, fb, tcoh, order, st, sm,
            rev_head, pool_next, pool_node, stamp, hk, hn, counters,
        )
        if node < 0:
            break
        if node == q:
            status = 0
            break
    return U, V, anc, mu, fb, tcoh, order, counters[1], status


@njit(cache=True)
def _heap_peek_valid(hk, hn, counters, U, V):
    """Discard stale heap tops; returns the next valid key (inf if none)."""
    hs = counters[0]
    while hs > 0:
        if V[hn[0]] != ACCEPTED and hk[0] == U[hn[0]]:
            counters[0] = hs
            return hk[0]
        _, _, hs = _heap_pop(hk, hn, hs)
    counters[0] = hs
    return INF


@njit(cache=True)
def dyn_run_partial(
    W, H, tbase, psi2, peaks2, gx, gy, chi1, chi2, lam, xi_aniso,
    s, mu_s, q, mu_q,
):
    """Two dynamic fronts from ``s`` and ``q`` advancing in lockstep.

    Each iteration steps the instance whose next valid Front value is
    globally smallest (ties: the ``s`` instance).  Halts at the first node
    accepted by one instance that the other has already accepted.

    Returns ``(saddle, state_s, state_q)``; saddle is -1 if the fronts
    exhausted without meeting.
    """
    ss = dyn_init(W, H, s, mu_s, tbase, gx, gy, xi_aniso)
    sq = dyn_init(W, H, q, mu_q, tbase, gx, gy, xi_aniso)
    (U1, V1, anc1, mu1, fb1, tc1, o1, st1, sm1,
     rh1, pn1, pl1, stp1, hk1, hn1, c1) = ss
    (U2, V2, anc2, mu2, fb2, tc2, o2, st2, sm2,
     rh2, pn2, pl2, stp2, hk2, hn2, c2) = sq
    saddle = np.int64(-1)
    while True:
        k1 = _heap_peek_valid(hk1, hn1, c1, U1, V1)
        k2 = _heap_peek_valid(hk2, hn2, c2, U2, V2)
        if k1 == INF and k2 == INF:
            break
        if k1 <= k2:
            node = dyn_step(
                W, H, tbase, psi2, peaks2, gx, gy, chi1, chi2, lam, xi_aniso,
                U1, V1, anc1, mu1, fb1, tc1, o1, st1, sm1,
                rh1, pn1, pl1, stp1, hk1, hn1, c1,
            )
            if node >= 0 and V2[node] == ACCEPTED:
                saddle = node
                break
        else:
            node = dyn_step(
                W, H, tbase, psi2, peaks2, gx, gy, chi1, chi2, lam, xi_aniso,
                U2, V2, anc2, mu2, fb2, tc2, o2, st2, sm2,
                rh2, pn2, pl2, stp2, hk2, hn2, c2,
            )
            if node >= 0 and V1[node] == ACCEPTED:
                saddle = node
                break
    return saddle, ss, sq
