import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import build_case
from helmdd.decomp import (
    PouVariant, add_overlap, assemble_local_matrices, build_extended, decompose, global_operators, partition_grid,
)
from helmdd.errors import ConfigurationError, SingularMatrixError
from helmdd.fem import ProblemSpec, assemble_boundary_mass, element_dofs
from helmdd.mesh import build_square_mesh


def test_partition_counts():
    assert np.all(partition_grid(build_square_mesh(3), 1, 1) == 0)
    assert np.bincount(partition_grid(build_square_mesh(4), 2, 2)).tolist() == [8] * 4
    assert np.bincount(partition_grid(build_square_mesh(8), 4, 4)).tolist() == [8] * 16
    with pytest.raises(ConfigurationError):
        partition_grid(build_square_mesh(2), 3, 1)


def test_partition_ids_are_row_major():
    mesh = build_square_mesh(4)
    part = partition_grid(mesh, 2, 2)
    c = mesh.barycentres()
    assert np.all(part[(c[:, 0] > 0.5) & (c[:, 1] < 0.5)] == 1)
    assert np.all(part[(c[:, 0] < 0.5) & (c[:, 1] > 0.5)] == 2)


def test_single_subdomain_is_whole_domain():
    mesh = build_square_mesh(4)
    (s,) = add_overlap(mesh, partition_grid(mesh, 1, 1), 1)
    assert len(s.elements) == mesh.n_triangles and len(s.interface_dofs) == 0 and not s.has_interface


def test_strip_overlap_oracle():
    mesh = build_square_mesh(4)
    subs = add_overlap(mesh, partition_grid(mesh, 2, 1), 1)
    x = mesh.vertices[:, 0]
    # core 2x4 cells plus the adjacent column of 4 cells
    assert [len(s.elements) for s in subs] == [24, 24]
    assert np.array_equal(subs[0].interface_dofs, np.flatnonzero(np.isclose(x, 0.75)))
    assert np.array_equal(subs[1].interface_dofs, np.flatnonzero(np.isclose(x, 0.25)))
    assert np.array_equal(subs[0].dofs, np.flatnonzero(x < 0.8))
    # corner interface nodes on the physical boundary still count as interface dofs
    assert len(subs[0].interface_dofs) == 5


def test_overlap_monotone():
    mesh = build_square_mesh(8)
    core = partition_grid(mesh, 2, 2)
    sizes = [[s.n_dofs for s in add_overlap(mesh, core, k)] for k in range(1, 7)]
    for a, b in zip(sizes, sizes[1:]):
        assert all(y > x or y == mesh.n_vertices for x, y in zip(a, b))
    assert sizes[-1] == [mesh.n_vertices] * 4
    with pytest.raises(ConfigurationError):
        add_overlap(mesh, core, 0)


def test_extended_sets():
    mesh = build_square_mesh(8)
    (s,) = build_extended(mesh, add_overlap(mesh, partition_grid(mesh, 1, 1), 1), 1)
    assert np.array_equal(s.extended_elements, s.elements)
    subs = build_extended(mesh, add_overlap(mesh, partition_grid(mesh, 3, 3), 1), 1)
    centre = subs[4]
    assert set(centre.dofs) < set(centre.extended_dofs)
    corner = subs[0]
    xy = mesh.vertices[corner.extended_dofs]
    assert xy.min() >= 0 and xy.max() <= 1
    # growth happens only across the interface: the boundary-touching part is unchanged
    on_left = corner.extended_dofs[np.isclose(xy[:, 0], 0)]
    assert len(on_left) > len(corner.dofs[np.isclose(mesh.vertices[corner.dofs, 0], 0)])
    with pytest.raises(ConfigurationError):
        build_extended(mesh, subs, 0)


def test_pou_single_and_strip():
    dec = decompose(build_square_mesh(4), 1, 1)
    assert np.all(dec.subdomains[0].pou_weights == 1)
    mesh = build_square_mesh(4)
    dec = decompose(mesh, 2, 1, 1, PouVariant.STEEP)
    x = mesh.vertices[:, 0]
    s0 = dec.subdomains[0]
    w = dict(zip(s0.dofs.tolist(), s0.pou_weights.tolist()))
    assert all(w[i] == 0 for i in s0.interface_dofs)
    assert all(w[i] == 0.5 for i in np.flatnonzero(np.isclose(x, 0.5)))
    assert all(w[i] == 1 for i in np.flatnonzero(x < 0.4))


@pytest.mark.parametrize("variant", list(PouVariant))
@pytest.mark.parametrize("overlap", [1, 2, 3])
@pytest.mark.parametrize("px,py", [(1, 1), (2, 2), (4, 4), (3, 2)])
def test_pou_identity(variant, overlap, px, py):
    dec = decompose(build_square_mesh(16), px, py, overlap, variant)
    I = sp.identity(dec.mesh.n_vertices)
    assert abs(dec.pou_operator() - I).max() <= 1e-13
    for s in dec.subdomains:
        assert np.all((s.pou_weights >= 0) & (s.pou_weights <= 1))
        assert np.all(s.pou_weights[s.interface_local] == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 14), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.sampled_from(list(PouVariant)))
def test_decomposition_invariants(m, px, py, overlap, variant):
    mesh = build_square_mesh(m)
    dec = decompose(mesh, px, py, overlap, variant)
    cores = np.concatenate([s.core_elements for s in dec.subdomains])
    assert np.array_equal(np.sort(cores), np.arange(mesh.n_triangles))
    assert abs(dec.pou_operator() - sp.identity(mesh.n_vertices)).max() <= 1e-13
    for s in dec.subdomains:
        assert set(s.core_elements) <= set(s.elements)
        assert np.array_equal(s.dofs, element_dofs(mesh, s.elements))
        assert not np.intersect1d(s.interface_dofs, s.interior_dofs).size


def test_pou_variants_differ_for_wide_overlap():
    mesh = build_square_mesh(16)
    w = {v: decompose(mesh, 2, 1, 3, v).subdomains[0].pou_weights for v in PouVariant}
    assert not np.allclose(w[PouVariant.STEEP], w[PouVariant.LINEAR])
    assert not np.allclose(w[PouVariant.LINEAR], w[PouVariant.VANISHING])
    # with one layer the vanishing variant coincides with the steep one
    w1 = {v: decompose(mesh, 2, 1, 1, v).subdomains[0].pou_weights for v in PouVariant}
    assert np.array_equal(w1[PouVariant.STEEP], w1[PouVariant.VANISHING])


def test_pou_linear_profile():
    mesh = build_square_mesh(16)
    dec = decompose(mesh, 2, 1, 3, PouVariant.LINEAR)
    s = dec.subdomains[0]
    x = mesh.vertices[s.dofs, 0]
    row = np.isclose(mesh.vertices[s.dofs, 1], 0.5)
    chi = {round(xx * 16): w for xx, w in zip(x[row], s.pou_weights[row])}
    # chi_0 falls 1, 2/3, 1/3, 0 across the extension zone while chi_1 = 1 there,
    # so D_0 = chi_0 / (chi_0 + 1)
    assert chi[11] == 0 and chi[10] == pytest.approx(1 / 4) and chi[9] == pytest.approx(2 / 5)


def test_local_matrices_single_subdomain():
    mesh, spec, ops, dec, lms = build_case(6, 1, 1, 4.0)
    lm = lms[0]
    assert abs(lm.A_hat - ops.A).max() < 1e-14
    assert abs(lm.A_tilde - ops.A).max() < 1e-14


def test_local_matrices_properties(grid2x2):
    mesh, spec, ops, dec, lms = grid2x2
    for s, lm in zip(dec.subdomains, lms):
        A = ops.A.tocsr()
        assert abs(lm.A - A[s.dofs][:, s.dofs]).max() == 0
        # Robin minus Neumann: i omega Z times the interface edge mass
        M, nodes = assemble_boundary_mass(mesh, s.interface_edges)
        diff = (lm.A_hat - lm.A_tilde).toarray()
        loc = s.local(nodes)
        expected = np.zeros_like(diff)
        expected[np.ix_(loc, loc)] = 1j * spec.omega * M.toarray()
        assert np.allclose(diff, expected, atol=1e-14)
        # positive Helmholtz Neumann matrix is SPD
        B = lm.B_tilde.toarray()
        assert np.allclose(B, B.T) and np.linalg.eigvalsh(B).min() > 0
        # rows whose stencil lies inside the subdomain agree with the global matrix
        inner = s.distance >= 1
        assert np.allclose(lm.A_tilde.toarray()[inner], A[s.dofs[inner]][:, s.dofs].toarray())
        assert lm.A_check.shape[0] == len(s.extended_dofs)


def test_extension_does_not_change_first_level():
    a = build_case(8, 2, 2, 6.0, extra_layers=0)
    b = build_case(8, 2, 2, 6.0, extra_layers=2)
    for la, lb, sa, sb in zip(a[4], b[4], a[3].subdomains, b[3].subdomains):
        assert np.array_equal(sa.dofs, sb.dofs) and np.array_equal(sa.pou_weights, sb.pou_weights)
        assert abs(la.A_hat - lb.A_hat).max() == 0


def test_singular_local_matrix_names_subdomain(monkeypatch):
    import helmdd.decomp as decomp

    def boom(M, context=""):
        raise SingularMatrixError("matrix is numerically singular at pivot 3", pivot=3)

    mesh = build_square_mesh(4)
    spec = ProblemSpec(1.0)
    dec = decompose(mesh, 2, 1)
    ops = global_operators(mesh, spec)
    monkeypatch.setattr(decomp, "lu_factor", boom)
    with pytest.raises(SingularMatrixError, match="subdomain 1") as exc:
        assemble_local_matrices(mesh, dec.subdomains[1], spec, ops)
    assert exc.value.pivot == 3
