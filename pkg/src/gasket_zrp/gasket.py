"""Level-n graph approximations of the Sierpinski gasket.

Vertices live on the triangular lattice of spacing ``2**-n`` and are stored as
exact integer coordinates ``(a, b)``: ``a`` counts steps along ``a1 - a0`` and
``b`` along ``a2 - a0``. The embedded point is
``((a + b/2) / 2**n, (b * sqrt(3)/2) / 2**n)``.

The three contractions ``f_i(z) = (z + a_i) / 2`` act on level-n lattice
coordinates as a pure translation once the result is read at level ``n + 1``:
``f_0`` adds ``(0, 0)``, ``f_1`` adds ``(2**n, 0)`` and ``f_2`` adds
``(0, 2**n)``. The whole construction is therefore integer-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

import numpy as np

__all__ = [
    "MAX_GRAPH_LEVEL",
    "CapacityError",
    "Vertex",
    "GasketGraph",
    "build_gasket",
    "cell_corners",
    "block_triangle",
    "block_representatives",
    "vertex_count",
    "edge_count",
]

MAX_GRAPH_LEVEL = 12

# lattice directions joining nearest neighbours: a1-a0, a2-a0, a2-a1
_STEPS = ((1, 0), (0, 1), (-1, 1))


class CapacityError(ValueError):
    """Requested level exceeds what the construction supports."""


class Vertex(NamedTuple):
    a: int
    b: int
    level: int

    @property
    def point(self) -> tuple[float, float]:
        s = 2.0 ** -self.level
        return ((self.a + 0.5 * self.b) * s, (math.sqrt(3.0) / 2.0) * self.b * s)


def vertex_count(n: int) -> int:
    return 3 * (3**n + 1) // 2


def edge_count(n: int) -> int:
    return 3 ** (n + 1)


def _offsets(n: int) -> tuple[tuple[int, int], ...]:
    """Translations implementing f_0, f_1, f_2 from level n into level n + 1."""
    s = 1 << n
    return ((0, 0), (s, 0), (0, s))


def cell_corners(m: int) -> list[tuple[int, int]]:
    """Lower-left (a0-image) corners of the ``3**m`` level-m cells, in level-m units."""
    cells = [(0, 0)]
    for level in range(m):
        cells = [(p + dp, q + dq) for dp, dq in _offsets(level) for (p, q) in cells]
    return sorted(cells, key=lambda c: (c[1], c[0]))


@dataclass(frozen=True, eq=False)
class GasketGraph:
    """The graph Gamma_n = (V_n, E_n) with the counting measure mu_n.

    Attributes
    ----------
    level : int
    coords : ndarray, shape (N, 2)
        Integer lattice coordinates ``(a, b)``, sorted lexicographically by
        ``(b, a)``.
    edges : ndarray, shape (3**(n+1), 2)
        Unordered vertex-index pairs with ``i < j``, sorted.
    """

    level: int
    coords: np.ndarray
    edges: np.ndarray
    _index: dict = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def mass(self) -> Fraction:
        """Exact mu_n weight of a single vertex."""
        return Fraction(1, 3**self.level)

    @property
    def mass_per_vertex(self) -> float:
        return 3.0 ** -self.level

    @property
    def total_mass(self) -> Fraction:
        """mu_n(V_n) = |V_n| 3**-n, tending to 3/2."""
        return self.n_vertices * self.mass

    @cached_property
    def vertices(self) -> list[Vertex]:
        return [Vertex(int(a), int(b), self.level) for a, b in self.coords]

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    @cached_property
    def neighbors(self) -> np.ndarray:
        """(N, 4) neighbour table, padded with -1 past each vertex's degree."""
        nbr = np.full((self.n_vertices, 4), -1, dtype=np.int64)
        fill = np.zeros(self.n_vertices, dtype=np.int64)
        for i, j in self.edges:
            nbr[i, fill[i]] = j
            fill[i] += 1
            nbr[j, fill[j]] = i
            fill[j] += 1
        return nbr

    @cached_property
    def points(self) -> np.ndarray:
        """Euclidean embedding, shape (N, 2)."""
        s = 2.0 ** -self.level
        a = self.coords[:, 0].astype(float)
        b = self.coords[:, 1].astype(float)
        return np.column_stack(((a + 0.5 * b) * s, (math.sqrt(3.0) / 2.0) * b * s))

    @cached_property
    def corner_indices(self) -> tuple[int, int, int]:
        """Indices of a0, a1, a2."""
        s = 1 << self.level
        return (self.index_of(0, 0), self.index_of(s, 0), self.index_of(0, s))

    def index_of(self, a: int, b: int) -> int:
        return self._index[(a, b)]

    def contains(self, a: int, b: int) -> bool:
        return (a, b) in self._index

    def laplacian_matrix(self) -> np.ndarray:
        """Dense matrix of Delta_n (including the 5**n factor)."""
        n = self.n_vertices
        L = np.zeros((n, n))
        i, j = self.edges[:, 0], self.edges[:, 1]
        L[i, j] = 1.0
        L[j, i] = 1.0
        L[np.arange(n), np.arange(n)] = -self.degree
        return 5.0**self.level * L


def build_gasket(n: int) -> GasketGraph:
    """Build Gamma_n from V_{n+1} = f_0(V_n) u f_1(V_n) u f_2(V_n)."""
    if not 0 <= n <= MAX_GRAPH_LEVEL:
        raise CapacityError(f"level {n} outside supported range 0..{MAX_GRAPH_LEVEL}")
    verts = {(0, 0), (1, 0), (0, 1)}
    edges = {((0, 0), (1, 0)), ((0, 0), (0, 1)), ((0, 1), (1, 0))}
    for level in range(n):
        offs = _offsets(level)
        verts = {(a + da, b + db) for da, db in offs for (a, b) in verts}
        edges = {
            ((p[0] + da, p[1] + db), (q[0] + da, q[1] + db))
            for da, db in offs
            for (p, q) in edges
        }
    order = sorted(verts, key=lambda v: (v[1], v[0]))
    index = {v: i for i, v in enumerate(order)}
    pairs = sorted(tuple(sorted((index[p], index[q]))) for p, q in edges)
    return GasketGraph(
        level=n,
        coords=np.array(order, dtype=np.int64).reshape(-1, 2),
        edges=np.array(pairs, dtype=np.int64).reshape(-1, 2),
        _index=index,
    )


def _in_cell(a: int, b: int, p: int, q: int, s: int) -> bool:
    da, db = a - p * s, b - q * s
    return da >= 0 and db >= 0 and da + db <= s


def _cells_of(graph: GasketGraph, k: int) -> set:
    key = (graph.level, k)
    cache = _CELL_CACHE.get(key)
    if cache is None:
        cache = _CELL_CACHE[key] = set(cell_corners(graph.level - k))
    return cache


_CELL_CACHE: dict = {}


def _cell_of(graph: GasketGraph, a: int, b: int, k: int) -> tuple[int, int]:
    s = 1 << k
    cells = _cells_of(graph, k)
    p0, q0 = a // s, b // s
    candidates = [
        (p, q)
        for q in (q0 - 1, q0)
        for p in (p0 - 1, p0)
        if (p, q) in cells and _in_cell(a, b, p, q, s)
    ]
    # tie-break: smallest corner in (b, a) order; the a0-corner is the smallest
    return min(candidates, key=lambda c: (c[1], c[0]))


def _cell_members(graph: GasketGraph, p: int, q: int, k: int) -> list[int]:
    s = 1 << k
    members = []
    for db in range(s + 1):
        for da in range(s + 1 - db):
            a, b = p * s + da, q * s + db
            if graph.contains(a, b):
                members.append(graph.index_of(a, b))
    return sorted(members)


def block_triangle(graph: GasketGraph, x: int, k: int) -> list[int]:
    """Vertex indices of the level-(n-k) cell assigned to vertex ``x``.

    A vertex of V_{n-k} \\ V_0 lies in two cells; it is assigned to the one
    whose lexicographically smallest corner is smallest.
    """
    if not 0 <= k <= graph.level:
        raise ValueError(f"block scale k={k} must satisfy 0 <= k <= n={graph.level}")
    a, b = (int(c) for c in graph.coords[x])
    return _cell_members(graph, *_cell_of(graph, a, b, k), k)


def block_representatives(graph: GasketGraph, k: int) -> list[int]:
    """One vertex per level-(n-k) cell whose assigned cell is that cell."""
    if not 0 <= k <= graph.level:
        raise ValueError(f"block scale k={k} must satisfy 0 <= k <= n={graph.level}")
    s = 1 << k
    reps = []
    for p, q in cell_corners(graph.level - k):
        # the a2-corner is never claimed by a neighbouring cell under the tie-break
        a, b = p * s, (q + 1) * s
        assert _cell_of(graph, a, b, k) == (p, q)
        reps.append(graph.index_of(a, b))
    return reps


def cell_membership(graph: GasketGraph, k: int) -> list[list[int]]:
    """Member lists for all level-(n-k) cells, ordered as in ``cell_corners``."""
    return [_cell_members(graph, p, q, k) for p, q in cell_corners(graph.level - k)]


def symmetry_permutations(graph: GasketGraph) -> list[np.ndarray]:
    """Vertex permutations for the six elements of the gasket's D3 symmetry group.

    ``perm[i]`` is the image index of vertex ``i``.
    """
    s = 1 << graph.level
    a = graph.coords[:, 0]
    b = graph.coords[:, 1]

    def rot(a, b):
        return s - a - b, a

    maps = []
    ca, cb = a, b
    for _ in range(3):
        maps.append((ca, cb))
        maps.append((cb, ca))
        ca, cb = rot(ca, cb)
    return [
        np.array([graph.index_of(int(x), int(y)) for x, y in zip(ma, mb)], dtype=np.int64)
        for ma, mb in maps
    ]
