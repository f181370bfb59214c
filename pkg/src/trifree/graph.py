"""Graph primitives: bit-row adjacency, edge indexing, partitions, products.

Adjacency is stored as a (n, ceil(n/64)) uint64 matrix so that the number of
common neighbors of two vertices (the quantity every dynamics step needs) is
a word-parallel AND plus popcount.
"""

from dataclasses import dataclass

import numpy as np

WORD = 64


def n_words(n: int) -> int:
    return (n + WORD - 1) // WORD


def edge_index(n: int, i: int, j: int) -> int:
    """Canonical index of pair {i,j} in 0..C(n,2)-1 (row-major upper triangle)."""
    if i == j:
        raise ValueError(f"self-loop ({i},{i}) is not an edge")
    if i > j:
        i, j = j, i
    if not (0 <= i < j < n):
        raise ValueError(f"pair ({i},{j}) out of range for n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def edge_from_index(n: int, idx: int) -> tuple[int, int]:
    """Inverse of edge_index."""
    m = n * (n - 1) // 2
    if not (0 <= idx < m):
        raise ValueError(f"edge index {idx} out of range for n={n}")
    # row i ends at offset (i+1)*n - (i+1)*(i+2)/2 - 1
    i = int((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8 * idx)) / 2)
    while i * n - i * (i + 1) // 2 > idx:
        i -= 1
    while (i + 1) * n - (i + 1) * (i + 2) // 2 <= idx:
        i += 1
    j = idx - (i * n - i * (i + 1) // 2) + i + 1
    return i, j


def all_pairs(n: int):
    """Pairs (i,j), i<j, in edge_index order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


class Graph:
    """Simple undirected graph on vertices 0..n-1 with bit-row adjacency."""

    __slots__ = ("n", "bits", "degree")

    def __init__(self, n: int):
        self.n = n
        self.bits = np.zeros((n, n_words(n)), dtype=np.uint64)
        self.degree = np.zeros(n, dtype=np.int64)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        g = cls(n)
        for i, j in edges:
            g.add_edge(i, j)
        return g

    def copy(self) -> "Graph":
        g = Graph.__new__(Graph)
        g.n = self.n
        g.bits = self.bits.copy()
        g.degree = self.degree.copy()
        return g

    def has_edge(self, i: int, j: int) -> bool:
        return bool((self.bits[i, j // WORD] >> np.uint64(j % WORD)) & np.uint64(1))

    def add_edge(self, i: int, j: int):
        if i == j:
            raise ValueError("self-loop")
        if self.has_edge(i, j):
            raise ValueError(f"edge ({i},{j}) already present")
        self._set(i, j)

    def remove_edge(self, i: int, j: int):
        if not self.has_edge(i, j):
            raise ValueError(f"edge ({i},{j}) not present")
        self._clear(i, j)

    def toggle_edge(self, i: int, j: int) -> bool:
        """Flip pair {i,j}; returns True if the edge is present afterwards."""
        if self.has_edge(i, j):
            self._clear(i, j)
            return False
        if i == j:
            raise ValueError("self-loop")
        self._set(i, j)
        return True

    def _set(self, i, j):
        self.bits[i, j // WORD] |= np.uint64(1 << (j % WORD))
        self.bits[j, i // WORD] |= np.uint64(1 << (i % WORD))
        self.degree[i] += 1
        self.degree[j] += 1

    def _clear(self, i, j):
        self.bits[i, j // WORD] &= ~np.uint64(1 << (j % WORD))
        self.bits[j, i // WORD] &= ~np.uint64(1 << (i % WORD))
        self.degree[i] -= 1
        self.degree[j] -= 1

    def common_neighbors(self, i: int, j: int) -> int:
        """Number of vertices adjacent to both i and j."""
        return int(np.bitwise_count(self.bits[i] & self.bits[j]).sum())

    def triangles_through(self, i: int, j: int) -> int:
        """Number of triangles the pair {i,j} would close (or closes, if present)."""
        return self.common_neighbors(i, j)

    def neighbors(self, i: int):
        out = []
        for w in range(self.bits.shape[1]):
            word = int(self.bits[i, w])
            base = w * WORD
            while word:
                b = word & -word
                out.append(base + b.bit_length() - 1)
                word ^= b
        return out

    def edges(self):
        for i in range(self.n):
            for j in self.neighbors(i):
                if j > i:
                    yield (i, j)

    def edge_count(self) -> int:
        return int(self.degree.sum()) // 2

    def max_degree(self) -> int:
        return int(self.degree.max()) if self.n else 0

    def is_triangle_free(self) -> bool:
        for i, j in self.edges():
            if self.common_neighbors(i, j) > 0:
                return False
        return True

    def triangle_count(self) -> int:
        t = 0
        for i, j in self.edges():
            t += self.common_neighbors(i, j)
        return t // 3

    def cut_size(self, part: "Partition") -> int:
        """Number of edges with endpoints on opposite sides of the partition."""
        c = 0
        for i, j in self.edges():
            if part.side[i] != part.side[j]:
                c += 1
        return c

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.edge_count()})"

    def edge_mask(self) -> int:
        """Edge set as an int bitmask in edge_index order (small n only)."""
        mask = 0
        for i, j in self.edges():
            mask |= 1 << edge_index(self.n, i, j)
        return mask

    @classmethod
    def from_edge_mask(cls, n: int, mask: int) -> "Graph":
        g = cls(n)
        for idx in range(n * (n - 1) // 2):
            if (mask >> idx) & 1:
                g.add_edge(*edge_from_index(n, idx))
        return g


@dataclass(frozen=True)
class Partition:
    """Ordered bipartition (A, B) of 0..n-1."""

    n: int
    A: tuple
    B: tuple

    def __post_init__(self):
        if sorted(self.A + self.B) != list(range(self.n)):
            raise ValueError("parts must partition 0..n-1")
        object.__setattr__(self, "A", tuple(sorted(self.A)))
        object.__setattr__(self, "B", tuple(sorted(self.B)))

    @property
    def side(self):
        s = getattr(self, "_side", None)
        if s is None:
            s = np.zeros(self.n, dtype=np.int8)
            for b in self.B:
                s[b] = 1
            object.__setattr__(self, "_side", s)
        return s

    @property
    def imbalance(self) -> int:
        return abs(len(self.A) - len(self.B))

    def is_weakly_balanced(self) -> bool:
        return self.imbalance <= self.n / 10

    def intra_pairs(self):
        """Pairs inside A then inside B, the coordinates of the defect chain."""
        pairs = []
        for part in (self.A, self.B):
            for x in range(len(part)):
                for y in range(x + 1, len(part)):
                    pairs.append((part[x], part[y]))
        return pairs


class ProductGraphView:
    """Cartesian product S x T on vertex set A x B, without materializing it.

    S is a graph on the labels in A, T on the labels in B, given as adjacency
    maps {vertex: set of neighbors}. Vertex (a,b) is adjacent to (a',b) when
    {a,a'} is an edge of S and to (a,b') when {b,b'} is an edge of T, so
    deg(a,b) = deg_S(a) + deg_T(b).
    """

    def __init__(self, A, B, s_adj, t_adj):
        self.A = tuple(A)
        self.B = tuple(B)
        self.s_adj = {a: frozenset(s_adj.get(a, ())) for a in self.A}
        self.t_adj = {b: frozenset(t_adj.get(b, ())) for b in self.B}

    def n_vertices(self) -> int:
        return len(self.A) * len(self.B)

    def vertices(self):
        for a in self.A:
            for b in self.B:
                yield (a, b)

    def degree(self, v) -> int:
        a, b = v
        return len(self.s_adj[a]) + len(self.t_adj[b])

    def adjacent(self, u, v) -> bool:
        a1, b1 = u
        a2, b2 = v
        if a1 == a2:
            return b2 in self.t_adj[b1]
        if b1 == b2:
            return a2 in self.s_adj[a1]
        return False

    def neighbors(self, v):
        a, b = v
        for a2 in self.s_adj[a]:
            yield (a2, b)
        for b2 in self.t_adj[b]:
            yield (a, b2)

    def max_degree(self) -> int:
        da = max((len(s) for s in self.s_adj.values()), default=0)
        db = max((len(t) for t in self.t_adj.values()), default=0)
        return da + db

    def n_edges(self) -> int:
        es = sum(len(s) for s in self.s_adj.values()) // 2
        et = sum(len(t) for t in self.t_adj.values()) // 2
        return es * len(self.B) + et * len(self.A)

    def is_edgeless(self) -> bool:
        return self.n_edges() == 0

    def materialize(self) -> Graph:
        """Explicit Graph with vertex (a_i, b_j) -> i*|B| + j. Small cases only."""
        ai = {a: i for i, a in enumerate(self.A)}
        bi = {b: i for i, b in enumerate(self.B)}
        nb = len(self.B)
        g = Graph(self.n_vertices())
        for a in self.A:
            for a2 in self.s_adj[a]:
                if ai[a] < ai[a2]:
                    for b in self.B:
                        g.add_edge(ai[a] * nb + bi[b], ai[a2] * nb + bi[b])
        for b in self.B:
            for b2 in self.t_adj[b]:
                if bi[b] < bi[b2]:
                    for a in self.A:
                        g.add_edge(ai[a] * nb + bi[b], ai[a] * nb + bi[b2])
        return g


def adjacency_map(edges) -> dict:
    adj = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    return adj


def write_edge_list(g: Graph, f):
    """Text format: first line "n m", then one "i j" line per edge, i<j."""
    close = False
    if isinstance(f, (str, bytes)):
        f = open(f, "w")
        close = True
    try:
        f.write(f"{g.n} {g.edge_count()}\n")
        for i, j in sorted(g.edges()):
            f.write(f"{i} {j}\n")
    finally:
        if close:
            f.close()


def read_edge_list(f) -> Graph:
    close = False
    if isinstance(f, (str, bytes)):
        f = open(f)
        close = True
    try:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError("expected header line 'n m'")
        n, m = int(header[0]), int(header[1])
        g = Graph(n)
        for _ in range(m):
            i, j = map(int, f.readline().split())
            g.add_edge(i, j)
        return g
    finally:
        if close:
            f.close()
