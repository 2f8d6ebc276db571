import numpy as np
import pytest
from fractions import Fraction

from gasket_zrp.gasket import (
    CapacityError,
    block_representatives,
    block_triangle,
    build_gasket,
    cell_membership,
    edge_count,
    symmetry_permutations,
    vertex_count,
)


@pytest.mark.parametrize("n", range(9))
def test_counts(n):
    g = build_gasket(n)
    assert g.n_vertices == vertex_count(n) == 3 * (3**n + 1) // 2
    assert g.n_edges == edge_count(n) == 3 ** (n + 1)


def test_small_levels_by_hand():
    g0 = build_gasket(0)
    assert (g0.n_vertices, g0.n_edges) == (3, 3)
    assert list(g0.degree) == [2, 2, 2]
    g1 = build_gasket(1)
    assert (g1.n_vertices, g1.n_edges) == (6, 9)
    assert sorted(g1.degree) == [2, 2, 2, 4, 4, 4]
    # n=4 matches b_4 = 3(3^4+1)/2 and 3^5 edges
    g4 = build_gasket(4)
    assert (g4.n_vertices, g4.n_edges) == (123, 243)


@pytest.mark.parametrize("n", range(7))
def test_connected_and_degrees(n):
    g = build_gasket(n)
    deg = g.degree
    assert set(deg.tolist()) <= {2, 4}
    assert int(np.sum(deg == 2)) == 3
    assert sorted(np.flatnonzero(deg == 2).tolist()) == sorted(g.corner_indices)
    seen = {0}
    frontier = [0]
    nbr = g.neighbors
    while frontier:
        x = frontier.pop()
        for y in nbr[x]:
            if y >= 0 and y not in seen:
                seen.add(int(y))
                frontier.append(int(y))
    assert len(seen) == g.n_vertices


@pytest.mark.parametrize("n", range(9))
def test_contractions_land_in_next_level(n):
    g, h = build_gasket(n), build_gasket(n + 1)
    s = 1 << n
    for da, db in ((0, 0), (s, 0), (0, s)):
        assert all(h.contains(int(a) + da, int(b) + db) for a, b in g.coords)


def test_edges_have_unit_length():
    g = build_gasket(3)
    p = g.points
    d = np.linalg.norm(p[g.edges[:, 0]] - p[g.edges[:, 1]], axis=1)
    assert np.allclose(d, 2.0**-3, rtol=0, atol=1e-15)


def test_mass_and_capacity():
    g = build_gasket(5)
    assert g.mass == Fraction(1, 3**5)
    assert g.total_mass == Fraction(3 * (3**5 + 1), 2 * 3**5)
    with pytest.raises(CapacityError):
        build_gasket(13)
    with pytest.raises(CapacityError):
        build_gasket(-1)


def test_block_triangle_examples():
    g = build_gasket(3)
    a0 = g.index_of(0, 0)
    for x in range(g.n_vertices):
        assert len(block_triangle(g, x, 0)) == 3
    corner = block_triangle(g, a0, 1)
    expected = sorted(g.index_of(a, b) for b in range(3) for a in range(3 - b))
    assert corner == expected
    assert len(corner) == 6
    assert block_triangle(g, 17, 3) == list(range(g.n_vertices))
    with pytest.raises(ValueError):
        block_triangle(g, 0, 4)


def test_block_triangle_contains_x():
    g = build_gasket(4)
    for k in range(5):
        for x in range(g.n_vertices):
            cell = block_triangle(g, x, k)
            assert x in cell
            assert len(cell) == vertex_count(k)


def test_block_representatives_counts():
    assert len(block_representatives(build_gasket(3), 3)) == 1
    assert len(block_representatives(build_gasket(2), 1)) == 3
    assert len(block_representatives(build_gasket(5), 2)) == 27
    with pytest.raises(ValueError):
        block_representatives(build_gasket(2), 3)


@pytest.mark.parametrize("n,k", [(3, 0), (3, 1), (4, 2), (5, 3)])
def test_cells_partition_edges(n, k):
    g = build_gasket(n)
    cells = [set(c) for c in cell_membership(g, k)]
    reps = block_representatives(g, k)
    for rep, c in zip(reps, cells):
        assert set(block_triangle(g, rep, k)) == c
    for i, j in g.edges:
        assert sum(1 for c in cells if i in c and j in c) == 1


def test_symmetry_group():
    g = build_gasket(3)
    perms = symmetry_permutations(g)
    assert len(perms) == 6
    assert len({tuple(p) for p in perms}) == 6
    edge_set = {tuple(e) for e in g.edges.tolist()}
    for p in perms:
        assert sorted(p.tolist()) == list(range(g.n_vertices))
        mapped = {tuple(sorted((int(p[i]), int(p[j])))) for i, j in g.edges}
        assert mapped == edge_set


def test_vertex_order_is_deterministic():
    a, b = build_gasket(4), build_gasket(4)
    assert np.array_equal(a.coords, b.coords)
    assert np.array_equal(a.edges, b.edges)
    v = a.vertices[5]
    assert (v.a, v.b) == tuple(a.coords[5])
