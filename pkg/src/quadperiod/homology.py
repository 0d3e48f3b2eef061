"""Homology bases on quad-graphs and the cocycles that impose periods.

Cycles live on the vertex graph of the decomposition.  Periods are
measured after projecting a cycle to the black or white diagonal graph;
prescribed periods are imposed through integer cocycles supported on the
diagonals.  Everything here is exact integer combinatorics; geometry
enters only through the counterclockwise rotation system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .surface import BLACK, WHITE


class HomologyError(ValueError):
    pass


@dataclass
class Cycle:
    """Closed walk: verts[i] -> verts[i+1] along edge eids[i] (cyclically)."""

    verts: list
    eids: list

    def __post_init__(self):
        if len(self.verts) != len(self.eids):
            raise HomologyError("cycle walk and edge list lengths differ")

    def __len__(self):
        return len(self.verts)

    def reversed(self):
        n = len(self.verts)
        verts = [self.verts[0]] + [self.verts[n - 1 - i] for i in range(n - 1)]
        eids = [self.eids[n - 1 - i] for i in range(n)]
        return Cycle(verts, eids)

    def passages(self):
        """(vertex, incoming edge, outgoing edge) per step of the walk."""
        n = len(self.verts)
        return [(self.verts[i], self.eids[(i - 1) % n], self.eids[i])
                for i in range(n)]


@dataclass
class DiagonalCycle:
    """Closed path on one diagonal graph: (quad, sign) per diagonal,
    sign +1 when traversed along the stored orientation."""

    color: int
    steps: list


def cycle_from_vertices(graph, walk, edge_keys=None):
    """Resolve a closed vertex walk to a Cycle.

    Steps between vertices joined by parallel edges need explicit edge
    keys (graphs built by the generators carry them)."""
    if isinstance(walk, dict):
        walk, edge_keys = walk["verts"], walk.get("edge_keys")
    n = len(walk)
    eids = []
    if edge_keys is not None:
        if graph.edge_key_ids is None:
            raise HomologyError("graph has no edge keys to resolve the walk")
        eids = [graph.edge_key_ids[k] for k in edge_keys]
    else:
        by_pair = {}
        for e, (a, b) in enumerate(graph.edge_list):
            by_pair.setdefault((a, b), []).append(e)
        for i in range(n):
            a, b = walk[i], walk[(i + 1) % n]
            key = (a, b) if a < b else (b, a)
            cand = by_pair.get(key, [])
            if len(cand) != 1:
                raise HomologyError(f"walk step {a}->{b} matches {len(cand)} edges")
            eids.append(cand[0])
    cyc = Cycle(list(walk), eids)
    for i in range(n):
        a, b = graph.edge_list[cyc.eids[i]]
        if {walk[i], walk[(i + 1) % n]} != {a, b}:
            raise HomologyError(f"edge {cyc.eids[i]} does not join walk step {i}")
    return cyc


# ---------------------------------------------------------------------------
# Tree-cotree decomposition
# ---------------------------------------------------------------------------

def tree_cotree(graph):
    """Spanning tree of the vertex graph, spanning tree of the dual quad
    graph on the remaining edges, and the 2g leftover edges."""
    V, F, E = graph.n_vertices, graph.n_quads, graph.n_edges()
    in_tree = np.zeros(E, dtype=bool)
    parent = np.full(V, -1, dtype=np.int64)
    parent_edge = np.full(V, -1, dtype=np.int64)
    order = [0]
    seen = np.zeros(V, dtype=bool)
    seen[0] = True
    adj = [[] for _ in range(V)]
    for e, (a, b) in enumerate(graph.edge_list):
        adj[a].append((b, e))
        adj[b].append((a, e))
    qi = 0
    while qi < len(order):
        v = order[qi]
        qi += 1
        for u, e in adj[v]:
            if not seen[u]:
                seen[u] = True
                parent[u] = v
                parent_edge[u] = e
                in_tree[e] = True
                order.append(u)
    if not seen.all():
        raise HomologyError("disconnected graph")

    in_cotree = np.zeros(E, dtype=bool)
    quad_parent = np.full(F, -1, dtype=np.int64)
    quad_parent_edge = np.full(F, -1, dtype=np.int64)
    quad_seen = np.zeros(F, dtype=bool)
    quad_seen[0] = True
    dual_order = [0]
    qi = 0
    while qi < len(dual_order):
        q = dual_order[qi]
        qi += 1
        for s in range(4):
            e = int(graph.dart_edge[q, s])
            if in_tree[e] or in_cotree[e]:
                continue
            (qa, sa), (qb, sb) = graph.edge_occ[e]
            q2 = qb if qa == q else qa
            if not quad_seen[q2]:
                quad_seen[q2] = True
                quad_parent[q2] = q
                quad_parent_edge[q2] = e
                in_cotree[e] = True
                dual_order.append(q2)
    if not quad_seen.all():
        raise HomologyError("dual graph disconnected off the tree")
    leftover = np.where(~in_tree & ~in_cotree)[0]
    if len(leftover) != 2 * graph.genus():
        raise HomologyError(
            f"{len(leftover)} leftover edges, expected {2 * graph.genus()}")
    return {
        "in_tree": in_tree,
        "parent": parent,
        "parent_edge": parent_edge,
        "in_cotree": in_cotree,
        "leftover": leftover,
    }


def _tree_path(tc, v, u):
    """Vertex/edge path from v to u through the spanning tree."""
    parent, pedge = tc["parent"], tc["parent_edge"]
    anc_v, anc_u = [v], [u]
    av, au = v, u
    seen_v = {v: 0}
    while parent[av] >= 0:
        av = int(parent[av])
        seen_v[av] = len(anc_v)
        anc_v.append(av)
    while au not in seen_v:
        au = int(parent[au])
        if au < 0:
            raise HomologyError("vertices in different components")
        anc_u.append(au)
    meet = au
    up = anc_v[:seen_v[meet] + 1]
    down = []
    au = u
    while au != meet:
        down.append(au)
        au = int(parent[au])
    verts = up + list(reversed(down))
    eids = [int(pedge[x]) for x in up[:-1]] + [int(pedge[x]) for x in reversed(down)]
    return verts, eids


def basis_cycles(graph, tc=None):
    """One cycle per leftover edge: the edge plus its tree path."""
    tc = tc or tree_cotree(graph)
    out = []
    for e in tc["leftover"]:
        a, b = graph.edge_list[int(e)]
        verts, eids = _tree_path(tc, b, a)  # b ... a through the tree
        out.append(Cycle([a] + verts[:-1], [int(e)] + eids))
    return out


# ---------------------------------------------------------------------------
# Intersection numbers by corner counting
# ---------------------------------------------------------------------------

def _covered(rot_pos_v, deg, e_in, e_out):
    """Darts swept by the left push-off of a passage (e_in, e_out) at a
    vertex of degree deg: strictly counterclockwise between e_out and
    e_in.  A U-turn covers every other dart."""
    i_out = rot_pos_v[e_out]
    i_in = rot_pos_v[e_in]
    covered = set()
    t = (i_out + 1) % deg
    while t != i_in:
        covered.add(t)
        t = (t + 1) % deg
    if e_in == e_out:
        covered.discard(i_in)
    return covered


def intersection_number(graph, c1, c2):
    """Algebraic intersection number of two closed walks.

    The second walk is pushed off to its left; crossings are counted at
    shared vertices from the cyclic order of the four incident walk
    edges.  Exact integer, antisymmetric, and well defined even when the
    walks share edges.
    """
    rot, rot_pos, _ = graph.rotation()
    at2 = {}
    for v, e_in, e_out in c2.passages():
        at2.setdefault(v, []).append((e_in, e_out))
    total = 0
    for v, a_in, a_out in c1.passages():
        if v not in at2:
            continue
        pos = rot_pos[v]
        deg = len(rot[v])
        for (b_in, b_out) in at2[v]:
            cov = _covered(pos, deg, b_in, b_out)
            if pos[a_in] in cov:
                total += 1
            if pos[a_out] in cov:
                total -= 1
    return total


def intersection_matrix(graph, cycles):
    n = len(cycles)
    M = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            M[i, j] = intersection_number(graph, cycles[i], cycles[j])
            M[j, i] = -M[i, j]
    return M


# ---------------------------------------------------------------------------
# Symplectic reduction over the integers
# ---------------------------------------------------------------------------

def symplectic_reduction(M):
    """Integer change of basis bringing an antisymmetric unimodular form to
    the standard block form J = [[0, I], [-I, 0]].

    Returns S with S M S^T = J; raises if a pivot other than +-1 survives
    (the form was not unimodular, which signals an upstream bug).
    """
    M = np.array(M, dtype=object)
    n = len(M)
    if n % 2 != 0 or np.any(M.T != -M):
        raise HomologyError("intersection form must be antisymmetric of even rank")
    S = np.eye(n, dtype=object)
    done = []  # indices paired off, in (a, b) order
    free = list(range(n))

    def add_row(i, j, c):
        # basis op e_i += c * e_j, applied to M (congruence) and S
        if c == 0:
            return
        M[i, :] += c * M[j, :]
        M[:, i] += c * M[:, j]
        S[i, :] += c * S[j, :]

    while free:
        sub = [(abs(M[i, j]), i, j) for i in free for j in free if M[i, j] != 0]
        if not sub:
            raise HomologyError("degenerate intersection form")
        # make the smallest entry divide everything in its row/column
        while True:
            m, i, j = min(sub)
            stuck = True
            for k in free:
                if k in (i, j):
                    continue
                r = M[i, k] % M[i, j]
                if r != 0:
                    add_row(k, j, -(M[i, k] // M[i, j]))
                    stuck = False
                    break
            if stuck:
                break
            sub = [(abs(M[a, b]), a, b) for a in free for b in free if M[a, b] != 0]
        m, i, j = min(sub)
        pivot = M[i, j]
        if abs(pivot) != 1:
            # an entry not divisible by the pivot may sit in another row
            moved = False
            for a in free:
                for b in free:
                    if a not in (i, j) and M[a, b] % pivot != 0:
                        add_row(i, a, 1)
                        moved = True
                        break
                if moved:
                    break
            if moved:
                continue
            raise HomologyError(f"intersection form not unimodular (pivot {pivot})")
        if pivot == -1:
            S[i, :] = -S[i, :]
            M[i, :] = -M[i, :]
            M[:, i] = -M[:, i]
        # clear the hyperbolic pair (i, j); here M[i, j] = 1, M[j, i] = -1
        for k in free:
            if k in (i, j):
                continue
            add_row(k, j, M[k, i])    # kills M[k, i] via M[j, i] = -1
            add_row(k, i, -M[k, j])   # kills M[k, j] via M[i, j] = +1
        done.append((i, j))
        free = [k for k in free if k not in (i, j)]
    g = n // 2
    perm = [i for i, j in done] + [j for i, j in done]
    S = S[perm, :]
    J = np.zeros((n, n), dtype=np.int64)
    J[:g, g:] = np.eye(g, dtype=np.int64)
    J[g:, :g] = -np.eye(g, dtype=np.int64)
    return np.array(S, dtype=np.int64), J


def symplectic_basis(graph, cycles, M=None):
    """Canonical basis as integer combinations of the given cycles.

    Returns (a_chains, b_chains, S): chains are lists of (coefficient,
    Cycle); S is the integer transform with S M S^T standard.
    """
    M = intersection_matrix(graph, cycles) if M is None else np.asarray(M)
    S, J = symplectic_reduction(M)
    got = S @ M.astype(object) @ S.T
    if np.any(got != J):
        raise HomologyError("symplectic reduction failed to reach standard form")
    n = len(cycles)
    g = n // 2
    chains = [[(int(S[i, m]), cycles[m]) for m in range(n) if S[i, m] != 0]
              for i in range(n)]
    return chains[:g], chains[g:], S


# ---------------------------------------------------------------------------
# Projection to the diagonal graphs
# ---------------------------------------------------------------------------

def project_cycle(graph, cycle, color, clockwise=False):
    """Route a cycle off the vertices of the opposite color, through quad
    fans, and record the traversed diagonals of the requested color.

    The fan at each opposite-color vertex is taken on the counterclockwise
    side by default; the clockwise routing differs by face boundaries and
    has the same periods against every closed differential.
    """
    rot, rot_pos, quad_after = graph.rotation()
    opposite = WHITE if color == BLACK else BLACK
    lo, hi = (0, 2) if color == BLACK else (1, 3)
    steps = []
    for v, e_in, e_out in cycle.passages():
        if graph.color[v] != opposite:
            continue
        pos = rot_pos[v]
        deg = len(rot[v])
        i_in, i_out = pos[e_in], pos[e_out]
        if i_in == i_out:
            continue  # backtracking corner: empty fan
        quads = []
        t = i_in
        if not clockwise:
            while t != i_out:
                quads.append(quad_after[v][t])
                t = (t + 1) % deg
        else:
            while t != i_out:
                t = (t - 1) % deg
                quads.append(quad_after[v][t])
        prev_vertex = graph.other_endpoint(e_in, v)
        for q in quads:
            vb0 = int(graph.quads[q, lo])
            vb1 = int(graph.quads[q, hi])
            if prev_vertex == vb0:
                steps.append((q, +1))
                prev_vertex = vb1
            elif prev_vertex == vb1:
                steps.append((q, -1))
                prev_vertex = vb0
            else:
                raise HomologyError("fan routing lost the walk")
    return DiagonalCycle(color=color, steps=steps)


def compile_steps(chain_projections):
    """Flatten [(coeff, DiagonalCycle)] into (quad index, weight) arrays."""
    qs, ws = [], []
    for coeff, dc in chain_projections:
        for q, s in dc.steps:
            qs.append(q)
            ws.append(coeff * s)
    return np.asarray(qs, dtype=np.int64), np.asarray(ws, dtype=np.float64)


# ---------------------------------------------------------------------------
# Cocycles with prescribed periods
# ---------------------------------------------------------------------------

def _diagonal_tree_cotree(graph, color):
    """Tree-cotree on one diagonal graph.  Nodes are vertices of the given
    color, edges are quads (each quad is one diagonal); faces are the
    vertices of the opposite color."""
    lo, hi = (0, 2) if color == BLACK else (1, 3)
    flo, fhi = (1, 3) if color == BLACK else (0, 2)
    F = graph.n_quads
    nodes = np.where(graph.color == color)[0]
    in_tree = np.zeros(F, dtype=bool)
    seen = {int(nodes[0])}
    adj = {}
    for q in range(F):
        a, b = int(graph.quads[q, lo]), int(graph.quads[q, hi])
        adj.setdefault(a, []).append((b, q))
        adj.setdefault(b, []).append((a, q))
    frontier = [int(nodes[0])]
    while frontier:
        v = frontier.pop()
        for u, q in adj[v]:
            if u not in seen:
                seen.add(u)
                in_tree[q] = True
                frontier.append(u)
    if len(seen) != len(nodes):
        raise HomologyError("diagonal graph disconnected")
    # dual tree over opposite-color vertices through non-tree quads
    faces = np.where(graph.color != color)[0]
    face_quads = {}
    for q in range(F):
        for side, sign in ((flo, +1), (fhi, -1)):
            v = int(graph.quads[q, side])
            face_quads.setdefault(v, []).append((q, sign))
    root = int(faces[0])
    face_parent_quad = {root: None}
    order = [root]
    in_cotree = np.zeros(F, dtype=bool)
    qi = 0
    while qi < len(order):
        v = order[qi]
        qi += 1
        for q, _ in face_quads[v]:
            if in_tree[q] or in_cotree[q]:
                continue
            a, b = int(graph.quads[q, flo]), int(graph.quads[q, fhi])
            u = b if v == a else a
            if u not in face_parent_quad:
                face_parent_quad[u] = q
                in_cotree[q] = True
                order.append(u)
    if len(order) != len(faces):
        raise HomologyError("diagonal dual graph disconnected")
    leftover = np.where(~in_tree & ~in_cotree)[0]
    return {
        "in_tree": in_tree,
        "in_cotree": in_cotree,
        "leftover": leftover,
        "face_order": order,
        "face_parent_quad": face_parent_quad,
        "face_quads": face_quads,
    }


def _propagate_cocycle(graph, color, dtc, leftover_values):
    """Closed integer cochain on the diagonals of one color: zero on the
    tree, prescribed on leftover diagonals, and determined on the dual
    tree by solving the closedness constraint at each opposite-color
    vertex from the leaves inward."""
    F = graph.n_quads
    sigma = np.zeros(F, dtype=np.int64)
    for q, x in leftover_values.items():
        sigma[q] = x
    for v in reversed(dtc["face_order"]):
        pq = dtc["face_parent_quad"][v]
        if pq is None:
            continue
        acc = 0
        psign = 0
        for q, sign in dtc["face_quads"][v]:
            if q == pq:
                psign = sign
            else:
                acc += sign * sigma[q]
        sigma[pq] = -acc // psign
        if psign * sigma[pq] + acc != 0:
            raise HomologyError("cocycle propagation failed")
    return sigma


def cocycle_period(sigma, dcycles):
    """Period of an integer diagonal cochain along projected cycles."""
    total = 0
    for coeff, dc in dcycles:
        for q, s in dc.steps:
            total += coeff * s * int(sigma[q])
    return total


def build_cocycles(graph, projections, color):
    """Integer cochains sigma_1..sigma_{2g} on one color's diagonals whose
    periods along the 2g projected basis cycles are delta_{jk}.

    projections: list of 2g compiled projections (lists of (coeff,
    DiagonalCycle)) of the canonical basis cycles in the same color.
    """
    dtc = _diagonal_tree_cotree(graph, color)
    leftover = [int(q) for q in dtc["leftover"]]
    n = len(leftover)
    if n != len(projections):
        raise HomologyError(
            f"{n} leftover diagonals for {len(projections)} basis cycles")
    basis_sigmas = []
    for q in leftover:
        basis_sigmas.append(_propagate_cocycle(graph, color, dtc, {q: 1}))
    P = np.zeros((n, n), dtype=object)
    for j, proj in enumerate(projections):
        for l, sig in enumerate(basis_sigmas):
            P[j, l] = cocycle_period(sig, proj)
    coeff = _solve_integer(P, np.eye(n, dtype=object))
    sigmas = np.zeros((n, graph.n_quads), dtype=np.int64)
    for k in range(n):
        acc = np.zeros(graph.n_quads, dtype=np.int64)
        for l in range(n):
            if coeff[l, k]:
                acc += int(coeff[l, k]) * basis_sigmas[l]
        sigmas[k] = acc
    return sigmas


def _solve_integer(A, B):
    """Exact solve A X = B over the rationals; entries must come out
    integral (A unimodular) or the periods were inconsistent."""
    n = len(A)
    M = [[Fraction(int(A[i, j])) for j in range(n)] +
         [Fraction(int(B[i, j])) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            raise HomologyError("singular period system for cocycles")
        M[col], M[piv] = M[piv], M[col]
        inv = M[col][col]
        M[col] = [x / inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    X = np.zeros((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            x = M[i][n + j]
            if x.denominator != 1:
                raise HomologyError("non-integer cocycle coefficients")
            X[i, j] = int(x)
    return X


# ---------------------------------------------------------------------------
# Full basis assembly
# ---------------------------------------------------------------------------

@dataclass
class HomologyBasis:
    graph: object
    a_chains: list
    b_chains: list
    proj_black: list = field(repr=False, default=None)   # 2g entries: a then b
    proj_white: list = field(repr=False, default=None)
    sigma_black: np.ndarray = field(repr=False, default=None)  # (2g, F)
    sigma_white: np.ndarray = field(repr=False, default=None)
    intersection_before: np.ndarray = None
    transform: np.ndarray = None

    @property
    def genus(self):
        return len(self.a_chains)

    def compiled(self, color, kind, k):
        """(quad indices, weights) for period integration along basis
        element k; kind is 'a' or 'b', weights include the traversal
        factor 2 per diagonal."""
        cache = self.__dict__.setdefault("_compiled", {})
        key = (color, kind, k)
        if key not in cache:
            proj = (self.proj_black if color == BLACK else self.proj_white)
            idx = k if kind == "a" else self.genus + k
            qs, ws = compile_steps(proj[idx])
            cache[key] = (qs, 2.0 * ws)
        return cache[key]


def _select_spanning_cycles(graph, candidates, rank):
    """Greedy subset of cycles spanning the homology; earlier candidates
    are preferred, keeping the selection deterministic across meshes that
    share the same reference loops.

    Usefulness of a candidate is judged by the row rank of its pairings
    against the whole candidate list (the pairing with a single new cycle
    is always zero, so square-block ranks cannot drive the greedy)."""
    M = intersection_matrix(graph, candidates)
    chosen = []
    r_now = 0
    for i in range(len(candidates)):
        trial = chosen + [i]
        r_new = _row_rank(M[trial, :])
        if r_new > r_now:
            chosen = trial
            r_now = r_new
        if len(chosen) == rank:
            break
    if len(chosen) != rank:
        raise HomologyError(f"cycles span rank {r_now}, need {rank}")
    return [candidates[i] for i in chosen], M[np.ix_(chosen, chosen)]


def _row_rank(M):
    if M.size == 0:
        return 0
    m, n = M.shape
    rows = [[Fraction(int(M[i, j])) for j in range(n)] for i in range(m)]
    rank = 0
    col = 0
    r = 0
    while r < m and col < n:
        piv = next((i for i in range(r, m) if rows[i][col] != 0), None)
        if piv is None:
            col += 1
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = rows[r][col]
        rows[r] = [x / inv for x in rows[r]]
        for i in range(m):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        r += 1
        col += 1
        rank += 1
    return rank


def homology_basis(graph, clockwise=False):
    """Canonical symplectic basis with diagonal projections and period
    cocycles.  Meshes built by the generators carry mesh-independent
    reference loops (extended by tree-cotree cycles when the loops alone
    do not span); otherwise cycles come from a tree-cotree split."""
    loops = (graph.meta or {}).get("loops")
    rank = 2 * graph.genus()
    cycles = None
    if loops:
        candidates = [cycle_from_vertices(graph, w) for w in loops["a"]]
        candidates += [cycle_from_vertices(graph, w) for w in loops["b"]]
        if len(candidates) != rank or \
                _row_rank(intersection_matrix(graph, candidates)) != rank:
            candidates += basis_cycles(graph)
        try:
            cycles, _ = _select_spanning_cycles(graph, candidates, rank)
            M = intersection_matrix(graph, cycles)
            a_chains, b_chains, S = symplectic_basis(graph, cycles, M)
        except HomologyError:
            # the loops can generate a finite-index sublattice; fall back
            # to the tree-cotree basis, which is always unimodular
            cycles = None
    if cycles is None:
        cycles = basis_cycles(graph)
        M = intersection_matrix(graph, cycles)
        a_chains, b_chains, S = symplectic_basis(graph, cycles, M)
    chains = a_chains + b_chains
    proj_black = [[(c, project_cycle(graph, cyc, BLACK, clockwise))
                   for c, cyc in ch] for ch in chains]
    proj_white = [[(c, project_cycle(graph, cyc, WHITE, clockwise))
                   for c, cyc in ch] for ch in chains]
    sigma_black = build_cocycles(graph, proj_black, BLACK)
    sigma_white = build_cocycles(graph, proj_white, WHITE)
    return HomologyBasis(
        graph=graph,
        a_chains=a_chains,
        b_chains=b_chains,
        proj_black=proj_black,
        proj_white=proj_white,
        sigma_black=sigma_black,
        sigma_white=sigma_white,
        intersection_before=M,
        transform=S,
    )
