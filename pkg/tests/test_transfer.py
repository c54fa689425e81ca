import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from rmtrfrac.mesh import build_hierarchy
from rmtrfrac.transfer import TransferHierarchy, assemble_pseudo_l2, dump_operator, interpolation_matrix


def _hier(extents=(1.0, 1.0), cells=(2, 3), L=2):
    return TransferHierarchy(build_hierarchy(extents, cells, L))


def test_pseudo_l2_prolongation_is_interpolation():
    for extents, cells in (((1.0,), (3,)), ((1.0, 0.5), (2, 3))):
        coarse, fine = build_hierarchy(extents, cells, 1)
        A = assemble_pseudo_l2(coarse, fine)
        B = interpolation_matrix(coarse, fine)
        assert abs(A - B).max() < 1e-12


def test_1d_midpoint_weights():
    coarse, fine = build_hierarchy((1.0,), (2,), 1)
    I = interpolation_matrix(coarse, fine).toarray()
    assert np.allclose(I[1], [0.5, 0.5, 0.0])
    assert np.allclose(I[3], [0.0, 0.5, 0.5])


def test_constants_prolongate_to_constants():
    T = _hier()
    for l in range(T.n_levels - 1):
        I = T.prolongation(l)
        assert np.allclose(I @ np.ones(I.shape[1]), 1.0, atol=1e-12)


def test_projection_differs_from_transpose():
    T = _hier()
    P = T.projection(0).matrix
    R = T.restriction(0).matrix
    assert abs(P - R).max() > 1e-3


def test_restriction_of_zero():
    T = _hier()
    R = T.restriction(1)
    assert np.array_equal(R @ np.zeros(R.shape[1]), np.zeros(R.shape[0]))


def test_shapes_and_kinds():
    T = _hier()
    meshes = T.meshes
    for l in range(T.n_levels - 1):
        assert T.prolongation(l).shape == (meshes[l + 1].n, meshes[l].n)
        assert T.projection(l).shape == (meshes[l].n, meshes[l + 1].n)
        assert T.restriction(l).kind == "restriction"
    with pytest.raises(IndexError):
        T.prolongation(T.n_levels - 1)
    with pytest.raises(IndexError):
        T.projection(-1)


def test_fields_do_not_mix():
    T = _hier(L=1)
    I = T.prolongation(0).matrix.tocoo()
    nf = T.n_fields
    assert np.all(I.row % nf == I.col % nf)


def test_degenerate_dual_basis_rejected(monkeypatch):
    from rmtrfrac import transfer

    coarse, fine = build_hierarchy((1.0,), (2,), 1)
    monkeypatch.setattr(transfer, "dual_shape_functions", lambda dim, xi: np.zeros((xi.shape[0], 2)))
    with pytest.raises(ValueError, match="non-positive"):
        assemble_pseudo_l2(fine, coarse, check_diagonal=False)


def test_projection_left_inverse_1d_three_levels():
    T = _hier((1.0,), (3,), 2)
    for l in range(2):
        P, I = T.projection(l).matrix, T.prolongation(l).matrix
        assert abs(P @ I - sp.identity(I.shape[1])).max() < 1e-12


@given(nx=st.integers(1, 3), ny=st.integers(1, 3), L=st.integers(1, 3))
def test_identities_property(nx, ny, L):
    T = _hier((1.0, 2.0), (nx, ny), L)
    for l in range(L):
        I = T.prolongation(l).matrix
        R = T.restriction(l).matrix
        P = T.projection(l).matrix
        assert (R != I.T).nnz == 0
        assert abs(P @ I - sp.identity(I.shape[1])).max() < 1e-12
        assert np.abs(np.asarray(I.sum(axis=1)).ravel() - 1.0).max() < 1e-12


def test_galerkin_triple_product_symmetric(rng):
    from rmtrfrac.rmtr import galerkin_product

    T = _hier(L=1)
    n = T.meshes[1].n
    A = sp.random(n, n, density=0.05, random_state=1)
    H = (A + A.T).tocsr()
    RHI = galerkin_product(T.restriction(0).matrix, H, T.prolongation(0).matrix)
    raw = (T.restriction(0).matrix @ H @ T.prolongation(0).matrix).toarray()
    assert np.abs(raw - raw.T).max() < 1e-12
    assert abs(RHI - RHI.T).max() == 0.0


def test_dump_operator(tmp_path):
    import scipy.io

    T = _hier(L=1)
    p = tmp_path / "I.mtx"
    dump_operator(T.prolongation(0), p)
    back = scipy.io.mmread(str(p)).tocsr()
    assert abs(back - T.prolongation(0).matrix).max() == 0.0
