import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helmdd.errors import ConfigurationError
from helmdd.mesh import Tag, build_square_mesh, element_edges, with_tags


@pytest.mark.parametrize("m, nv, nt, nb", [(1, 4, 2, 4), (2, 9, 8, 8)])
def test_counts_small(m, nv, nt, nb):
    mesh = build_square_mesh(m)
    assert (mesh.n_vertices, mesh.n_triangles, len(mesh.boundary_edges)) == (nv, nt, nb)


def test_area_sum_m10():
    mesh = build_square_mesh(10)
    # brute force: shoelace per triangle
    total = 0.0
    for tri in mesh.triangles:
        (x0, y0), (x1, y1), (x2, y2) = mesh.vertices[tri]
        total += 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
    assert abs(total - 1.0) <= 1e-14


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 24))
def test_structure(m):
    mesh = build_square_mesh(m)
    assert mesh.n_vertices == (m + 1) ** 2
    assert mesh.n_triangles == 2 * m * m
    assert np.all(mesh.signed_areas() > 0)  # counter-clockwise
    assert np.isclose(mesh.signed_areas().sum(), 1.0, atol=1e-13)
    # each interior edge is shared by two triangles, boundary edges by one
    e = element_edges(mesh.triangles)
    key, counts = np.unique(e[:, 0] * mesh.n_vertices + e[:, 1], return_counts=True)
    assert set(counts.tolist()) <= {1, 2}
    single = np.sort(key[counts == 1])
    b = np.sort(mesh.boundary_edges, axis=1)
    assert np.array_equal(single, np.sort(b[:, 0] * mesh.n_vertices + b[:, 1]))
    # boundary edges lie on the boundary of the square
    p = mesh.vertices[mesh.boundary_edges]
    on = np.isclose(p, 0) | np.isclose(p, 1)
    assert np.all((on[:, 0, 0] & on[:, 1, 0]) | (on[:, 0, 1] & on[:, 1, 1]))


def test_vertex_numbering_and_diagonals():
    mesh = build_square_mesh(2)
    assert np.allclose(mesh.vertices[5], [1.0, 0.5])  # j*(m+1)+i with i=2, j=1
    # cell (0,0) is split by the lower-left/upper-right diagonal, cell (1,0) by the other one
    c00 = {frozenset(t) for t in mesh.triangles[0:2].tolist()}
    assert frozenset({0, 1, 4}) in c00 and frozenset({0, 4, 3}) in c00
    c10 = {frozenset(t) for t in mesh.triangles[2:4].tolist()}
    assert frozenset({1, 2, 4}) in c10 and frozenset({2, 5, 4}) in c10


def test_h_and_tags():
    mesh = build_square_mesh(4, "dirichlet")
    assert mesh.h == 0.25
    assert len(mesh.edges_with_tag(Tag.ROBIN)) == 0
    assert len(mesh.edges_with_tag(Tag.DIRICHLET)) == 16
    mixed = with_tags(mesh, [Tag.ROBIN] * 8 + [Tag.DIRICHLET] * 8)
    assert len(mixed.edges_with_tag(Tag.ROBIN)) == 8
    with pytest.raises(ConfigurationError):
        with_tags(mesh, [Tag.ROBIN])


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_rejects_bad_size(bad):
    with pytest.raises(ConfigurationError):
        build_square_mesh(bad)


def test_dump(tmp_path):
    mesh = build_square_mesh(2)
    path = tmp_path / "mesh.txt"
    mesh.dump(path)
    text = path.read_text().splitlines()
    assert "vertices 9" in text and "triangles 8" in text and "boundary_edges 8" in text
