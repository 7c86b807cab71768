"""Scale-free network generation and shortest-path precomputation.

Networks are undirected, unweighted and connected.  All routing strategies
consult the same precomputed structures: the all-pairs hop-count matrix and,
for path-load estimation, a canonical next-hop table that encodes one
deterministic shortest path between every pair of nodes.
"""

from __future__ import annotations

from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


class DisconnectedGraphError(ValueError):
    """Raised when an operation requires a connected graph and finds none."""


class Network:
    """Immutable undirected graph with cached shortest-path structure.

    Parameters
    ----------
    adjacency : sequence of int sequences
        Per-node neighbor lists.  Must describe a simple undirected graph:
        symmetric, no self-loops, no duplicate edges.
    seed : int
        Generator seed recorded for provenance (edge-list headers, manifests).

    Notes
    -----
    The distance matrix and the canonical next-hop table are computed lazily
    on first access and cached.  After construction the object is treated as
    read-only, so it can be shared freely across concurrent simulations.
    """

    def __init__(self, adjacency, seed: int = 0):
        self.adjacency = [np.asarray(sorted(a), dtype=np.int32) for a in adjacency]
        self.node_count = len(self.adjacency)
        self.seed = int(seed)
        self._validate()
        self.degree = np.array([len(a) for a in self.adjacency], dtype=np.int64)
        self.hub_index = int(np.argmax(self.degree))

    def _validate(self) -> None:
        n = self.node_count
        if n < 2:
            raise ValueError("network needs at least 2 nodes")
        seen = set()
        for i, nbrs in enumerate(self.adjacency):
            prev = -1
            for l in nbrs:
                l = int(l)
                if l == i:
                    raise ValueError(f"self-loop at node {i}")
                if l == prev:
                    raise ValueError(f"duplicate edge {i}-{l}")
                if not 0 <= l < n:
                    raise ValueError(f"neighbor {l} out of range at node {i}")
                prev = l
                seen.add((i, l))
        for i, l in seen:
            if (l, i) not in seen:
                raise ValueError(f"asymmetric edge {i}-{l}")

    @cached_property
    def edge_count(self) -> int:
        return int(self.degree.sum()) // 2

    @cached_property
    def _csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency in CSR form: (indptr, indices), neighbors ascending."""
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(self.degree, out=indptr[1:])
        indices = (
            np.concatenate(self.adjacency)
            if self.node_count
            else np.empty(0, np.int32)
        )
        return indptr, indices.astype(np.int32)

    @cached_property
    def dist(self) -> np.ndarray:
        """All-pairs hop counts, shape (n, n), dtype int16.

        Raises
        ------
        DisconnectedGraphError
            If any pair of nodes has no connecting path.
        """
        indptr, indices = self._csr
        mat = csr_matrix(
            (np.ones(len(indices), dtype=np.int8), indices, indptr),
            shape=(self.node_count, self.node_count),
        )
        d = dijkstra(mat, directed=False, unweighted=True)
        if np.isinf(d).any():
            raise DisconnectedGraphError("graph is not connected")
        return d.astype(np.int16)

    @cached_property
    def next_toward(self) -> np.ndarray:
        """Canonical next-hop table, shape (n, n), dtype int32.

        ``next_toward[j, v]`` is the node that follows ``v`` on the canonical
        shortest path from ``v`` to ``j`` (and ``j`` itself when ``v == j``).
        Among the neighbors of ``v`` that are one hop closer to ``j``, the
        smallest index is chosen, which makes the table deterministic for a
        fixed network.
        """
        n = self.node_count
        dist = self.dist
        indptr, indices = self._csr
        src = np.repeat(np.arange(n, dtype=np.int32), self.degree)
        out = np.empty((n, n), dtype=np.int32)
        for j in range(n):
            dj = dist[j]
            closer = dj[indices] == dj[src] - 1
            cand = np.where(closer, indices, n).astype(np.int32)
            row = np.minimum.reduceat(cand, indptr[:-1])
            row[j] = j
            out[j] = row
        return out


def generate_scale_free(
    n: int, links_per_new_node: int, seed: int = 0
) -> Network:
    """Grow a scale-free network by degree-preferential attachment.

    Starts from a clique of ``links_per_new_node + 1`` nodes; every further
    node attaches ``links_per_new_node`` edges to distinct existing nodes
    with probability proportional to their current degree.  The result is
    connected with mean degree close to ``2 * links_per_new_node`` and a
    heavy-tailed degree distribution.

    Parameters
    ----------
    n : int
        Total number of nodes; must be at least ``links_per_new_node + 1``.
    links_per_new_node : int
        Edges added per new node, at least 1.
    seed : int
        Seed for the attachment randomness; fixed seed gives a bit-identical
        network.
    """
    m = int(links_per_new_node)
    if m < 1:
        raise ValueError("links_per_new_node must be >= 1")
    if n < m + 1:
        raise ValueError(f"need at least {m + 1} nodes for links_per_new_node={m}")
    rng = np.random.default_rng(seed)
    adjacency: list[list[int]] = [[] for _ in range(n)]
    # one entry per edge endpoint; sampling an index uniformly from this pool
    # is equivalent to picking a node with probability proportional to degree
    pool: list[int] = []
    for i in range(m + 1):
        for l in range(i + 1, m + 1):
            adjacency[i].append(l)
            adjacency[l].append(i)
            pool.extend((i, l))
    for new in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(pool[int(rng.integers(len(pool)))])
        for t in sorted(targets):
            adjacency[new].append(t)
            adjacency[t].append(new)
            pool.extend((new, t))
    return Network(adjacency, seed=seed)


def all_pairs_shortest_paths(net: Network) -> np.ndarray:
    """Hop-count matrix of ``net``; raises DisconnectedGraphError if split."""
    return net.dist


def shortest_next_hops(net: Network, i: int, j: int) -> np.ndarray:
    """Neighbors of ``i`` lying on some shortest path toward ``j``, ascending.

    Never empty for a connected network.  ``i == j`` is a contract violation.
    """
    if i == j:
        raise ValueError("next hop undefined for i == j")
    drow = net.dist[j]
    nbrs = net.adjacency[i]
    return nbrs[drow[nbrs] == drow[i] - 1]


def canonical_shortest_path(net: Network, start: int, j: int) -> list[int]:
    """The canonical shortest path from ``start`` to ``j``, both inclusive.

    Follows the ``next_toward`` table, so the result is deterministic for a
    fixed network and has exactly ``dist[start, j]`` edges.  ``start == j``
    gives the single-node path ``[start]``.
    """
    row = net.next_toward[j]
    path = [start]
    s = start
    while s != j:
        s = int(row[s])
        path.append(s)
    return path


def save_edge_list(net: Network, path: str | Path) -> None:
    """Write the network as a text edge list with a provenance header."""
    lines = [f"# nodes={net.node_count} seed={net.seed}"]
    for i in range(net.node_count):
        for l in net.adjacency[i]:
            if i < l:
                lines.append(f"{i} {l}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_edge_list(path: str | Path) -> Network:
    """Read a network written by :func:`save_edge_list`."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError("missing edge-list header")
    header = dict(
        item.split("=", 1) for item in text[0].lstrip("# ").split() if "=" in item
    )
    n = int(header["nodes"])
    seed = int(header.get("seed", 0))
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for line in text[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b = (int(x) for x in line.split())
        adjacency[a].append(b)
        adjacency[b].append(a)
    return Network(adjacency, seed=seed)
