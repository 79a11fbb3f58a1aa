"""Graphs, random bipartite instance families and self-avoiding-walk trees."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import BudgetError, ParameterError
from .rng import make_rng

SAW_NODE_BUDGET = 10**7


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected (multi)graph on vertices ``0..n_vertices-1``.

    ``bipartition`` holds 0 for an L vertex and 1 for an R vertex. Use
    :func:`make_graph` to build a validated instance.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    multigraph: bool = False
    bipartition: tuple[int, ...] | None = None

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n_vertices else 0

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Neighbour lists with multiplicity, sorted by vertex id."""
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def neighbor_sets(self) -> tuple[frozenset, ...]:
        return tuple(frozenset(a) for a in self.neighbors)

    @cached_property
    def neighbor_masks(self) -> tuple[int, ...]:
        """Bitmask of distinct neighbours for each vertex."""
        return tuple(sum(1 << u for u in s) for s in self.neighbor_sets)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Dense adjacency matrix counting edge multiplicity."""
        a = np.zeros((self.n_vertices, self.n_vertices))
        for u, v in self.edges:
            a[u, v] += 1
            a[v, u] += 1
        return a

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) of the neighbour lists, multiplicity kept."""
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self.neighbors])
        indices = np.array([u for a in self.neighbors for u in a], dtype=np.int64)
        return indptr, indices

    @property
    def left(self) -> list[int]:
        if self.bipartition is None:
            raise ParameterError("graph has no bipartition")
        return [v for v, side in enumerate(self.bipartition) if side == 0]

    @property
    def right(self) -> list[int]:
        if self.bipartition is None:
            raise ParameterError("graph has no bipartition")
        return [v for v, side in enumerate(self.bipartition) if side == 1]

    def simple(self) -> "Graph":
        """Collapse parallel edges."""
        return make_graph(self.n_vertices, sorted(set(self.edges)), False, self.bipartition)

    def to_networkx(self) -> nx.MultiGraph | nx.Graph:
        g = nx.MultiGraph() if self.multigraph else nx.Graph()
        g.add_nodes_from(range(self.n_vertices))
        g.add_edges_from(self.edges)
        return g


def _norm(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def make_graph(
    n: int,
    edges: Iterable[Sequence[int]],
    multigraph: bool = False,
    bipartition: Sequence[int] | None = None,
) -> Graph:
    """Validate and build a :class:`Graph`."""
    n = int(n)
    if n < 0:
        raise ParameterError("negative vertex count")
    out = []
    seen = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ParameterError(f"edge ({u},{v}) has an endpoint outside [0,{n})")
        if u == v:
            raise ParameterError(f"self-loop at vertex {u}")
        e2 = _norm(u, v)
        if not multigraph and e2 in seen:
            raise ParameterError(f"duplicate edge {e2} in a simple graph")
        seen.add(e2)
        out.append(e2)
    bip = None
    if bipartition is not None:
        bip = tuple(int(b) for b in bipartition)
        if len(bip) != n or any(b not in (0, 1) for b in bip):
            raise ParameterError("bipartition must label every vertex 0 (L) or 1 (R)")
        for u, v in out:
            if bip[u] == bip[v]:
                raise ParameterError(f"edge ({u},{v}) does not cross the bipartition")
    return Graph(n, tuple(out), bool(multigraph), bip)


def induced_subgraph(g: Graph, vertices: Sequence[int]) -> tuple[Graph, list[int]]:
    """Subgraph on ``vertices`` relabelled to ``0..k-1`` (in the given order)."""
    vs = list(vertices)
    index = {v: i for i, v in enumerate(vs)}
    edges = [(index[u], index[v]) for u, v in g.edges if u in index and v in index]
    bip = None if g.bipartition is None else [g.bipartition[v] for v in vs]
    return make_graph(len(vs), edges, g.multigraph, bip), vs


def gen_symmetric_bipartite(n: int, delta: int, seed: int) -> Graph:
    """Union of ``delta`` random perfect matchings of K_{2n}, lifted to L x R.

    Each matched pair (u, v) contributes the edges (l_u, r_v) and (l_v, r_u).
    Vertices ``0..2n-1`` are l_0.., vertices ``2n..4n-1`` are r_0..; coincident
    edges from different matchings are collapsed.
    """
    if n < 1 or delta < 1:
        raise ParameterError("need n >= 1 and delta >= 1")
    m = 2 * n
    rng = make_rng(seed, "symmetric-bipartite", n, delta)
    edges = set()
    for _ in range(delta):
        perm = rng.permutation(m)
        for i in range(0, m, 2):
            u, v = int(perm[i]), int(perm[i + 1])
            edges.add((u, m + v))
            edges.add((v, m + u))
    return make_graph(2 * m, sorted(edges), False, [0] * m + [1] * m)


def gen_regular_bipartite(n: int, delta: int, seed: int, multigraph: bool = True) -> Graph:
    """Union of ``delta`` uniform perfect matchings between L = 0..n-1 and R = n..2n-1.

    With ``multigraph`` the union keeps multiplicities, otherwise repeated edges
    are collapsed.
    """
    if n < 1 or delta < 1:
        raise ParameterError("need n >= 1 and delta >= 1")
    rng = make_rng(seed, "regular-bipartite", n, delta)
    edges = []
    for _ in range(delta):
        perm = rng.permutation(n)
        edges.extend((i, n + int(perm[i])) for i in range(n))
    if not multigraph:
        edges = sorted(set(edges))
    return make_graph(2 * n, edges, multigraph, [0] * n + [1] * n)


def gen_random_regular(n: int, d: int, seed: int) -> Graph:
    """Uniform random simple d-regular graph (networkx pairing model)."""
    if n * d % 2 or d >= n:
        raise ParameterError("n*d must be even and d < n")
    g = nx.random_regular_graph(d, n, seed=int(seed))
    return make_graph(n, sorted(_norm(u, v) for u, v in g.edges()))


def tree_graphs(kind: str, branching: int, depth: int, node_budget: int = SAW_NODE_BUDGET) -> Graph:
    """Finite truncation of an infinite tree, rooted at vertex 0.

    ``kind="ary"``: every vertex has ``branching`` children.
    ``kind="regular"``: the root has ``branching`` (= Delta) children, every
    other vertex ``branching - 1``.
    """
    if depth < 0:
        raise ParameterError("depth must be non-negative")
    if kind not in ("ary", "regular"):
        raise ParameterError(f"unknown tree kind {kind!r}")
    edges = []
    frontier = [0]
    count = 1
    for level in range(depth):
        nxt = []
        for v in frontier:
            k = branching if (kind == "ary" or level == 0) else branching - 1
            for _ in range(k):
                if count >= node_budget:
                    raise BudgetError("tree exceeds the node budget")
                edges.append((v, count))
                nxt.append(count)
                count += 1
        frontier = nxt
    return make_graph(count, edges)


# ---------------------------------------------------------------------------
# Self-avoiding walk trees


@dataclass(frozen=True)
class SawNode:
    origin: int
    parent: int | None
    pinning: int | None
    depth: int
    edge: int | None = None  # index of the source edge used to reach this node


@dataclass(frozen=True)
class SawTree:
    nodes: tuple[SawNode, ...]
    root: int
    vertex_order: tuple[int, ...]
    children: tuple[tuple[int, ...], ...] = field(repr=False, default=())

    def walk(self, node: int) -> list[int]:
        """Source-graph vertices along the root-to-node path."""
        out = []
        cur: int | None = node
        while cur is not None:
            out.append(self.nodes[cur].origin)
            cur = self.nodes[cur].parent
        return out[::-1]

    def __len__(self) -> int:
        return len(self.nodes)


def incident_edges(g: Graph) -> list[list[tuple[int, int]]]:
    """For each vertex, the list of (neighbour, edge index) pairs."""
    inc: list[list[tuple[int, int]]] = [[] for _ in range(g.n_vertices)]
    for k, (u, v) in enumerate(g.edges):
        inc[u].append((v, k))
        inc[v].append((u, k))
    return inc


def closure_pinning(rank: Sequence[int], first: tuple[int, int], last: tuple[int, int]) -> int:
    """Pinning of a closure leaf.

    ``first`` is the (vertex, edge) step that left the repeated vertex and
    ``last`` the step that returned to it. The leaf is pinned +1 when the first
    step precedes the last one. Vertices are compared by ``rank``; ties, which
    only occur for parallel edges, are broken by edge index.
    """
    a = (rank[first[0]], first[1])
    b = (rank[last[0]], last[1])
    return 1 if a < b else -1


def build_saw_tree(
    g: Graph,
    root: int,
    order: Sequence[int] | None = None,
    depth_limit: int | None = None,
    node_budget: int = SAW_NODE_BUDGET,
) -> SawTree:
    """Tree of self-avoiding walks from ``root``.

    A walk is extended along every incident edge except the one it just used.
    Reaching a vertex already on the walk creates a closure leaf whose pinning
    follows :func:`closure_pinning`. ``order`` lists vertices from smallest to
    largest (default: numeric order).
    """
    n = g.n_vertices
    if not 0 <= root < n:
        raise ParameterError("root outside the graph")
    order = tuple(range(n)) if order is None else tuple(order)
    if sorted(order) != list(range(n)):
        raise ParameterError("order must be a permutation of the vertices")
    rank = [0] * n
    for i, v in enumerate(order):
        rank[v] = i
    inc = incident_edges(g)

    nodes: list[SawNode] = [SawNode(root, None, None, 0, None)]
    children: list[list[int]] = [[]]
    # stack entries: node id, walk vertices, walk edges, position map
    stack = [(0, [root], [], {root: 0})]
    while stack:
        nid, path, pedges, pos = stack.pop()
        depth = len(path) - 1
        if depth_limit is not None and depth >= depth_limit:
            continue
        v = path[-1]
        last_edge = pedges[-1] if pedges else None
        new = []
        for u, k in inc[v]:
            if k == last_edge:
                continue
            if len(nodes) >= node_budget:
                raise BudgetError(f"SAW tree exceeds the node budget of {node_budget}")
            if u in pos:
                i = pos[u]
                first = (path[i + 1], pedges[i])
                pin = closure_pinning(rank, first, (v, k))
                nodes.append(SawNode(u, nid, pin, depth + 1, k))
                children.append([])
                children[nid].append(len(nodes) - 1)
            else:
                nodes.append(SawNode(u, nid, None, depth + 1, k))
                children.append([])
                cid = len(nodes) - 1
                children[nid].append(cid)
                pos2 = dict(pos)
                pos2[u] = len(path)
                new.append((cid, path + [u], pedges + [k], pos2))
        stack.extend(reversed(new))
    return SawTree(tuple(nodes), 0, order, tuple(tuple(c) for c in children))


# ---------------------------------------------------------------------------
# Text format


def write_graph(g: Graph, path) -> None:
    """Write ``g`` in the edge-list format ``n m [bipartite l] [multigraph]``."""
    header = [str(g.n_vertices), str(len(g.edges))]
    if g.bipartition is not None:
        l_count = g.bipartition.count(0)
        if any(g.bipartition[v] != 0 for v in range(l_count)):
            raise ParameterError("file format needs L = 0..l_count-1")
        header += ["bipartite", str(l_count)]
    if g.multigraph:
        header.append("multigraph")
    lines = [" ".join(header)] + [f"{u} {v}" for u, v in g.edges]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path) -> Graph:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows:
        raise ParameterError("empty graph file")
    head = rows[0]
    try:
        n, m = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise ParameterError("malformed graph header") from exc
    multigraph = "multigraph" in head
    bip = None
    if "bipartite" in head:
        l_count = int(head[head.index("bipartite") + 1])
        bip = [0] * l_count + [1] * (n - l_count)
    edges = [(int(r[0]), int(r[1])) for r in rows[1:]]
    if len(edges) != m:
        raise ParameterError(f"header promises {m} edges, file has {len(edges)}")
    return make_graph(n, edges, multigraph, bip)
