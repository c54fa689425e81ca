import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from rmtrfrac.fracture import (
    FRACTURE_MODES,
    MaterialParams,
    PhaseFieldEnergy,
    energy,
    gradient,
    hessian,
    indicator_chi1,
    modified_energy,
)
from rmtrfrac.mesh import build_hierarchy

VARIANTS = [
    {},
    {"pressure": 0.3},
    {"modified": True, "chi1": 1},
    {"modified": True, "chi1": 0},
    {"modified": True, "chi1": 1, "pressure": 0.2},
]


def _mesh(cells=(3, 3), ext=(1.0, 1.0)):
    return build_hierarchy(ext, cells, 1)[1]


def _random_state(mesh, rng, scale=0.05):
    u, c = rng.normal(scale=scale, size=(mesh.n_nodes, mesh.dim)), rng.uniform(0, 1, mesh.n_nodes)
    return mesh.dofmap.join(u, c)


def test_zero_state_has_zero_energy_and_gradient():
    m = _mesh()
    x = np.zeros(m.n)
    assert energy(m, x, FRACTURE_MODES) == 0.0
    assert np.abs(gradient(m, x, FRACTURE_MODES)).max() == 0.0


def test_fully_broken_unloaded_square():
    m = _mesh((4, 4))
    x = m.dofmap.join(np.zeros((m.n_nodes, 2)), np.ones(m.n_nodes))
    p = FRACTURE_MODES.on_level(m)
    assert energy(m, x, FRACTURE_MODES) == pytest.approx(p.Gc * m.volume / (2 * p.l_s), rel=1e-13)


def test_1d_profile_energy_tends_to_gc():
    # interpolated exp(-|x|/l) on [-10 l, 10 l]; exact value Gc (1 - e^-20)
    ls, Gc = 1.0, 1.0
    errs = []
    for n in (40, 80, 160, 320):
        m = build_hierarchy((20.0 * ls,), (n // 2,), 1, origin=(-10.0 * ls,))[1]
        c = np.exp(-np.abs(m.node_coords[:, 0]) / ls)
        x = m.dofmap.join(np.zeros((m.n_nodes, 1)), c)
        params = MaterialParams(lam=0.0, mu=1.0, Gc=Gc, l_s=ls)
        errs.append(abs(energy(m, x, params) - Gc * (1 - np.exp(-20.0))))
    assert errs[-1] < 2e-4
    # interpolation error is second order in h
    assert all(3.5 < a / b < 4.5 for a, b in zip(errs, errs[1:]))


@pytest.mark.parametrize("kw", VARIANTS, ids=lambda kw: "-".join(f"{k}={v}" for k, v in kw.items()) or "plain")
def test_gradient_and_hessian_match_fd(kw, rng):
    m = _mesh()
    E = PhaseFieldEnergy(m, FRACTURE_MODES, **kw)
    for _ in range(3):
        x = _random_state(m, rng)
        g = E.gradient(x)
        h = 1e-6 * (1 + np.abs(x))
        I = np.eye(m.n)
        fd = np.array([(E.value(x + h[i] * I[i]) - E.value(x - h[i] * I[i])) / (2 * h[i]) for i in range(m.n)])
        assert np.abs(g - fd).max() / np.abs(g).max() < 1e-6
        v = rng.normal(size=m.n)
        t = 1e-6
        Hv_fd = (E.gradient(x + t * v) - E.gradient(x - t * v)) / (2 * t)
        assert np.abs(E.hessian(x) @ v - Hv_fd).max() / np.abs(Hv_fd).max() < 1e-5


@pytest.mark.parametrize("kw", VARIANTS[:3])
def test_hessian_exactly_symmetric(kw, rng):
    m = _mesh((4, 3))
    H = PhaseFieldEnergy(m, FRACTURE_MODES, **kw).hessian(_random_state(m, rng))
    assert abs(H - H.T).max() == 0.0


def test_hessian_at_zero_displacement(rng):
    m = _mesh((2, 2))
    c = rng.uniform(0, 1, m.n_nodes)
    x = m.dofmap.join(np.zeros((m.n_nodes, 2)), c)
    H = hessian(m, x, FRACTURE_MODES).toarray()
    dm = m.dofmap
    ui = np.flatnonzero(~dm.field_mask(2))
    ci = dm.field_dofs(2)
    # reference: isotropic stiffness with pointwise degradation (tension branch at zero strain)
    lam, mu, k = FRACTURE_MODES.lam, FRACTURE_MODES.mu, FRACTURE_MODES.k
    from rmtrfrac.fem import element_data

    ed = element_data(m)
    K = np.zeros((m.n, m.n))
    cq = c[m.elements] @ ed.N.T
    for e, nodes in enumerate(m.elements):
        for q in range(ed.N.shape[0]):
            dN = ed.dNdx[e, q]
            B = np.zeros((3, 8))
            B[0, 0::2], B[1, 1::2] = dN[:, 0], dN[:, 1]
            B[2, 0::2], B[2, 1::2] = dN[:, 1], dN[:, 0]
            D = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]])
            g = (1 - cq[e, q]) ** 2 * (1 - k) + k
            dofs = np.ravel(np.stack([dm.dof(nodes, 0), dm.dof(nodes, 1)], axis=1))
            K[np.ix_(dofs, dofs)] += ed.wdet[e, q] * g * B.T @ D @ B
    assert np.allclose(H[np.ix_(ui, ui)], K[np.ix_(ui, ui)], rtol=1e-12, atol=1e-12)
    assert np.linalg.eigvalsh(H[np.ix_(ci, ci)]).min() > 0


def test_energy_parts_sum(rng):
    m = _mesh()
    E = PhaseFieldEnergy(m, FRACTURE_MODES, pressure=0.5)
    x = _random_state(m, rng)
    parts = E.energy_parts(x)
    assert set(parts) == {"elastic", "fracture", "pressure"}
    assert sum(parts.values()) == pytest.approx(E.value(x), abs=1e-12)


def test_modified_energy_relations(rng):
    m = _mesh()
    x = _random_state(m, rng)
    p = FRACTURE_MODES
    E = PhaseFieldEnergy(m, p)
    M1 = PhaseFieldEnergy(m, p, modified=True, chi1=1)
    # chi1 = 1 differs only through the (1 - k) factor on the degraded term
    assert abs(M1.value(x) - E.value(x)) <= 2 * p.k * abs(E.energy_parts(x)["elastic"]) + 1e-15
    u0 = m.dofmap.join(np.zeros((m.n_nodes, 2)), m.dofmap.split(x)[1])
    assert modified_energy(m, u0, p, chi1=0) == 0.0
    M0 = PhaseFieldEnergy(m, p, modified=True, chi1=0)
    # Gc reaction/diffusion contribute nothing to the chi1 = 0 gradient
    M0_big = PhaseFieldEnergy(m, MaterialParams(p.lam, p.mu, 1e3 * p.Gc), modified=True, chi1=0)
    assert np.array_equal(M0.gradient(x), M0_big.gradient(x))


@pytest.mark.parametrize("c, expected", [([0.0, 0.0], 1), ([0.1, 0.9], 0), ([0.85, 0.2], 1)])
def test_indicator(c, expected):
    assert indicator_chi1(np.array(c), 0.85) == expected


@given(c=st.floats(0.0, 1.0), k=st.floats(1e-12, 1e-2))
def test_degradation_bounds(c, k):
    g = (1 - c) ** 2 * (1 - k) + k
    assert k - 1e-15 <= g <= 1.0 + 1e-15


def test_rejects_bad_material():
    with pytest.raises(ValueError):
        MaterialParams(lam=1.0, mu=0.0, Gc=1.0)
    with pytest.raises(ValueError):
        MaterialParams(lam=1.0, mu=1.0, Gc=1.0, k=0.0)
    with pytest.raises(ValueError):
        PhaseFieldEnergy(_mesh(), MaterialParams(lam=-5.0, mu=1.0, Gc=1.0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_gives_nonfinite_energy():
    m = _mesh()
    x = np.zeros(m.n)
    x[0] = np.inf
    assert not np.isfinite(energy(m, x, FRACTURE_MODES))


def test_length_scale_is_level_dependent():
    meshes = build_hierarchy((1.0, 1.0), (2, 2), 2)
    ls = [FRACTURE_MODES.on_level(m).l_s for m in meshes]
    assert ls == pytest.approx([1.0, 0.5, 0.25])
