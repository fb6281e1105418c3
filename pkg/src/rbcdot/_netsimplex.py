"""Bounded network simplex for transportation problems (numba kernel).

Node layout: rows ``0..nr-1``, columns ``nr..nr+nc-1``, artificial root
``nr+nc``. Real arcs run row -> column with capacity +inf. Each non-root node
``k`` owns an artificial arc ``A + k`` (root -> k) with capacity 0, used only
to complete the initial spanning tree; such arcs never enter the basis.

Potentials follow ``pi[head] = pi[tail] + cost`` on tree arcs, so the reduced
cost of an arc is ``cost + pi[tail] - pi[head]``.
"""
import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_INEXACT = 1
STATUS_PIVOT_LIMIT = 2

_INF = np.inf


@njit(cache=True)
def _find(uf, x):
    while uf[x] != x:
        uf[x] = uf[uf[x]]
        x = uf[x]
    return x


@njit(cache=True)
def _rebuild(N, root, tarc, tail, head, cost, parent, parc, depth, pi,
             deg, adj_ptr, adj, queue):
    # CSR adjacency of the current tree, then BFS from the root.
    for v in range(N):
        deg[v] = 0
    for k in range(N - 1):
        a = tarc[k]
        deg[tail[a]] += 1
        deg[head[a]] += 1
    adj_ptr[0] = 0
    for v in range(N):
        adj_ptr[v + 1] = adj_ptr[v] + deg[v]
        deg[v] = adj_ptr[v]
    for k in range(N - 1):
        a = tarc[k]
        adj[deg[tail[a]]] = a
        deg[tail[a]] += 1
        adj[deg[head[a]]] = a
        deg[head[a]] += 1
    parent[root] = -1
    parc[root] = -1
    depth[root] = 0
    pi[root] = 0.0
    queue[0] = root
    qh = 0
    qt = 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for p in range(adj_ptr[u], adj_ptr[u + 1]):
            a = adj[p]
            if a == parc[u]:
                continue
            if tail[a] == u:
                w = head[a]
                pi[w] = pi[u] + cost[a]
            else:
                w = tail[a]
                pi[w] = pi[u] - cost[a]
            parent[w] = u
            parc[w] = a
            depth[w] = depth[u] + 1
            queue[qt] = w
            qt += 1


@njit(cache=True)
def _pivot(e, direction, A, N, tail, head, flow, parent, parc, depth,
           path_arc, path_sign):
    """Push flow around the cycle closed by arc ``e``; return the leaving arc.

    ``direction`` +1 increases flow on ``e``, -1 decreases it.
    """
    u = tail[e]
    v = head[e]
    # Flow enters v through e (direction +1) and returns to u via the tree.
    a_node = v
    b_node = u
    cnt = 0
    while a_node != b_node:
        if depth[a_node] >= depth[b_node]:
            arc = parc[a_node]
            # flow moves a_node -> parent
            fwd = 1 if tail[arc] == a_node else -1
            path_arc[cnt] = arc
            path_sign[cnt] = fwd * direction
            cnt += 1
            a_node = parent[a_node]
        else:
            arc = parc[b_node]
            # flow moves parent -> b_node
            fwd = 1 if head[arc] == b_node else -1
            path_arc[cnt] = arc
            path_sign[cnt] = fwd * direction
            cnt += 1
            b_node = parent[b_node]

    theta = _INF if direction > 0 else flow[e]
    leave = e
    leave_key = N + e if direction < 0 else 1 << 62
    for k in range(cnt):
        arc = path_arc[k]
        if arc >= A:
            res = 0.0
            key = arc - A
        elif path_sign[k] > 0:
            continue
        else:
            res = flow[arc]
            key = N + arc
        if res < theta or (res == theta and key < leave_key):
            theta = res
            leave = arc
            leave_key = key
    if theta > 0.0:
        flow[e] += direction * theta
        for k in range(cnt):
            arc = path_arc[k]
            if arc < A:
                flow[arc] += path_sign[k] * theta
    flow[leave] = 0.0
    return leave


@njit(cache=True)
def transport_simplex(nr, nc, arc_u, arc_v, arc_c, flow0, tol, eps, bland_after, max_pivots):
    """Solve the restricted transportation problem starting from feasible ``flow0``.

    ``eps < 0`` runs to optimality; otherwise stops once the achieved decrease
    is at least ``(1 - eps)`` times a certified bound on the best decrease.
    Returns ``(flow, status, pivots)``.
    """
    A = arc_u.shape[0]
    N = nr + nc + 1
    root = nr + nc
    M = A + N - 1
    tail = np.empty(M, np.int64)
    head = np.empty(M, np.int64)
    cost = np.zeros(M)
    flow = np.zeros(M)
    for a in range(A):
        tail[a] = arc_u[a]
        head[a] = nr + arc_v[a]
        cost[a] = arc_c[a]
        flow[a] = flow0[a]
    for k in range(N - 1):
        tail[A + k] = root
        head[A + k] = k

    # Spanning forest over the positive-flow support, completed by root arcs.
    basic = np.zeros(M, np.bool_)
    uf = np.arange(N - 1)
    tarc = np.empty(N - 1, np.int64)
    tpos = -np.ones(M, np.int64)
    nt = 0
    for a in range(A):
        if flow[a] > 0.0:
            ru = _find(uf, tail[a])
            rv = _find(uf, head[a])
            if ru != rv:
                uf[ru] = rv
                basic[a] = True
                tarc[nt] = a
                tpos[a] = nt
                nt += 1
    for k in range(N - 1):
        if _find(uf, k) == k:
            a = A + k
            basic[a] = True
            tarc[nt] = a
            tpos[a] = nt
            nt += 1

    parent = np.empty(N, np.int64)
    parc = np.empty(N, np.int64)
    depth = np.empty(N, np.int64)
    pi = np.empty(N)
    deg = np.empty(N, np.int64)
    adj_ptr = np.empty(N + 1, np.int64)
    adj = np.empty(2 * (N - 1), np.int64)
    queue = np.empty(N, np.int64)
    path_arc = np.empty(N, np.int64)
    path_sign = np.empty(N, np.int64)
    _rebuild(N, root, tarc, tail, head, cost, parent, parc, depth, pi, deg, adj_ptr, adj, queue)

    pivots = 0
    # Purify: every positive non-tree arc is pivoted until it is basic or empty.
    for s in range(A):
        if basic[s] or flow[s] <= 0.0:
            continue
        r = cost[s] + pi[tail[s]] - pi[head[s]]
        direction = 1 if r < 0.0 else -1
        leave = _pivot(s, direction, A, N, tail, head, flow, parent, parc, depth,
                       path_arc, path_sign)
        pivots += 1
        if leave != s:
            pos = tpos[leave]
            tarc[pos] = s
            tpos[s] = pos
            tpos[leave] = -1
            basic[leave] = False
            basic[s] = True
            _rebuild(N, root, tarc, tail, head, cost, parent, parc, depth, pi,
                     deg, adj_ptr, adj, queue)

    f0 = 0.0
    for a in range(A):
        f0 += arc_c[a] * flow0[a]
    inexact = eps >= 0.0
    supply = np.zeros(nr)
    if inexact:
        for a in range(A):
            supply[arc_u[a]] += flow0[a]
    rowmin = np.zeros(nr)
    block = A if (inexact or A <= 4096) else max(1024, int(np.sqrt(A)) * 8)
    start = 0
    status = STATUS_OPTIMAL
    while True:
        use_bland = pivots >= bland_after
        best = -1
        best_r = -tol
        if inexact:
            for i in range(nr):
                rowmin[i] = 0.0
        if use_bland:
            # Bland: first eligible arc in index order.
            for a in range(A):
                if not basic[a] and cost[a] + pi[tail[a]] - pi[head[a]] < -tol:
                    best = a
                    break
        else:
            scanned = 0
            a = start
            while scanned < A:
                if not basic[a]:
                    r = cost[a] + pi[tail[a]] - pi[head[a]]
                    if inexact and r < rowmin[tail[a]]:
                        rowmin[tail[a]] = r
                    if r < best_r or (r == best_r and best >= 0 and a < best):
                        best = a
                        best_r = r
                scanned += 1
                a += 1
                if a == A:
                    a = 0
                if best >= 0 and scanned % block == 0:
                    break
            start = a if block < A else 0
        if best < 0:
            status = STATUS_OPTIMAL
            break
        if inexact:
            cur = 0.0
            for k in range(A):
                cur += cost[k] * flow[k]
            # Weak-duality bound: any feasible flow costs at least this.
            lb = cur
            for i in range(nr):
                lb += rowmin[i] * supply[i]
            if cur - f0 <= (1.0 - eps) * (lb - f0):
                status = STATUS_INEXACT
                break
        if pivots >= max_pivots:
            status = STATUS_PIVOT_LIMIT
            break
        leave = _pivot(best, 1, A, N, tail, head, flow, parent, parc, depth,
                       path_arc, path_sign)
        pivots += 1
        if leave != best:
            pos = tpos[leave]
            tarc[pos] = best
            tpos[best] = pos
            tpos[leave] = -1
            basic[leave] = False
            basic[best] = True
            _rebuild(N, root, tarc, tail, head, cost, parent, parc, depth, pi,
                     deg, adj_ptr, adj, queue)
    out = np.empty(A)
    for a in range(A):
        out[a] = flow[a]
    return out, status, pivots
