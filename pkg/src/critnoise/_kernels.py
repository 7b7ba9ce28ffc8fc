"""Numba kernels over CSR adjacency ``(indptr, indices)``."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@nb.njit(cache=True)
def union_find_labels(n, ei, ej):
    """Component id per vertex, ids assigned in order of smallest vertex."""
    parent = np.arange(n)
    for k in range(ei.shape[0]):
        a = _find(parent, ei[k])
        b = _find(parent, ej[k])
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    label = np.empty(n, dtype=np.int64)
    root_id = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for v in range(n):
        r = _find(parent, v)
        if root_id[r] < 0:
            root_id[r] = nxt
            nxt += 1
        label[v] = root_id[r]
    return label, nxt


@nb.njit(cache=True)
def component_distance_sums(indptr, indices, order, offsets, comp_ids):
    """Ordered-pair distance sum and diameter of the selected components."""
    n = indptr.shape[0] - 1
    k = comp_ids.shape[0]
    z = np.zeros(k, dtype=np.int64)
    diam = np.zeros(k, dtype=np.int64)
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for t in range(k):
        c = comp_ids[t]
        s = offsets[c]
        e = offsets[c + 1]
        if e - s == 1:
            continue
        tot = 0
        mx = 0
        for a in range(s, e):
            src = order[a]
            dist[src] = 0
            queue[0] = src
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                du = dist[u] + 1
                for q in range(indptr[u], indptr[u + 1]):
                    w = indices[q]
                    if dist[w] < 0:
                        dist[w] = du
                        tot += du
                        if du > mx:
                            mx = du
                        queue[tail] = w
                        tail += 1
            for q in range(tail):
                dist[queue[q]] = -1
        z[t] = tot
        diam[t] = mx
    return z, diam


@nb.njit(cache=True)
def level_sizes_many(indptr, indices, roots, k_max):
    n = indptr.shape[0] - 1
    out = np.zeros((roots.shape[0], k_max + 1), dtype=np.int64)
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for r in range(roots.shape[0]):
        src = roots[r]
        dist[src] = 0
        queue[0] = src
        head = 0
        tail = 1
        out[r, 0] = 1
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[u] + 1
            if du > k_max:
                continue
            for q in range(indptr[u], indptr[u + 1]):
                w = indices[q]
                if dist[w] < 0:
                    dist[w] = du
                    out[r, du] += 1
                    queue[tail] = w
                    tail += 1
        for q in range(tail):
            dist[queue[q]] = -1
    return out


@nb.njit(cache=True)
def multi_source_bfs(indptr, indices, sources):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tail = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for q in range(indptr[u], indptr[u + 1]):
            w = indices[q]
            if dist[w] < 0:
                dist[w] = du
                queue[tail] = w
                tail += 1
    return dist


@nb.njit(cache=True)
def pairwise_distances(indptr, indices, verts):
    """Distance matrix among ``verts`` (``-1`` where disconnected)."""
    n = indptr.shape[0] - 1
    m = verts.shape[0]
    pos = np.full(n, -1, dtype=np.int64)
    for a in range(m):
        pos[verts[a]] = a
    out = np.full((m, m), -1, dtype=np.int64)
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for a in range(m):
        src = verts[a]
        dist[src] = 0
        queue[0] = src
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            if pos[u] >= 0:
                out[a, pos[u]] = dist[u]
            du = dist[u] + 1
            for q in range(indptr[u], indptr[u + 1]):
                w = indices[q]
                if dist[w] < 0:
                    dist[w] = du
                    queue[tail] = w
                    tail += 1
        for q in range(tail):
            dist[queue[q]] = -1
    return out


@nb.njit(cache=True)
def _bfs_into(indptr, indices, src, dist, queue):
    dist[src] = 0
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for q in range(indptr[u], indptr[u + 1]):
            w = indices[q]
            if dist[w] < 0:
                dist[w] = du
                queue[tail] = w
                tail += 1
    return tail


@nb.njit(cache=True)
def distances_preserved(p0, i0, p1, i1, in_k, attach):
    """True iff G1-distances equal G0-distances on the G0-component ``in_k``.

    Any shortening in G1 must use an excursion that leaves the component's
    G0 edges at an attachment vertex ``a`` and first returns at ``b``.  For
    each attachment we compare the shortest such excursion with the G0
    distance; the component is isometric in G1 iff none is shorter.
    """
    n = p0.shape[0] - 1
    d0 = np.full(n, -1, dtype=np.int64)
    dout = np.full(n, -1, dtype=np.int64)
    mark = np.zeros(n, dtype=np.bool_)
    q0 = np.empty(n, dtype=np.int64)
    q1 = np.empty(n, dtype=np.int64)
    for a in attach:
        t0 = _bfs_into(p0, i0, a, d0, q0)
        for q in range(p0[a], p0[a + 1]):
            mark[i0[q]] = True
        dout[a] = 0
        tail = 0
        for q in range(p1[a], p1[a + 1]):
            w = i1[q]
            if in_k[w] and mark[w]:
                continue  # a G0 edge inside the component
            if dout[w] < 0:
                dout[w] = 1
                q1[tail] = w
                tail += 1
        head = 0
        ok = True
        while head < tail:
            u = q1[head]
            head += 1
            if in_k[u]:
                if dout[u] < d0[u]:
                    ok = False
                    break
                continue
            du = dout[u] + 1
            for q in range(p1[u], p1[u + 1]):
                w = i1[q]
                if dout[w] < 0:
                    dout[w] = du
                    q1[tail] = w
                    tail += 1
        for q in range(p0[a], p0[a + 1]):
            mark[i0[q]] = False
        for q in range(tail):
            dout[q1[q]] = -1
        dout[a] = -1
        for q in range(t0):
            d0[q0[q]] = -1
        if not ok:
            return False
    return True
