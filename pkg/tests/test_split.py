import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rmtrfrac.split import eig_sym, split_energy, split_stresses, stress

LAM, MU = 12.1, 7.9

sym2 = arrays(np.float64, 3, elements=st.floats(-1.0, 1.0)).map(
    lambda v: np.array([[v[0], v[1]], [v[1], v[2]]])
)


def test_uniaxial_tension():
    a = 0.3
    s = split_energy(np.diag([a, 0.0]), LAM, MU)
    assert s.psi_minus == 0.0
    assert s.psi_plus == pytest.approx(0.5 * LAM * a**2 + MU * a**2, rel=1e-14)


def test_uniform_compression():
    s = split_energy(-0.2 * np.eye(2), LAM, MU)
    assert s.psi_plus == 0.0
    assert s.psi_minus > 0


def test_pure_shear():
    g = 0.4
    eps = np.array([[0.0, g / 2], [g / 2, 0.0]])
    s = split_energy(eps, LAM, MU)
    assert np.allclose(np.sort(s.principal_values), np.sort(np.linalg.eigvalsh(eps)), atol=1e-15)
    assert s.psi_plus == pytest.approx(MU * g**2 / 4, rel=1e-14)
    assert s.psi_minus == pytest.approx(MU * g**2 / 4, rel=1e-14)


@given(sym2)
def test_split_properties(eps):
    s = split_energy(eps, LAM, MU)
    assert s.psi_plus >= 0 and s.psi_minus >= 0
    assert np.abs(s.eps_plus + s.eps_minus - eps).max() <= 1e-12
    tr = np.trace(eps)
    vals = np.linalg.eigvalsh(eps)
    if np.all(vals >= 0) and tr >= 0:
        assert s.psi_minus == 0.0
    if (np.all(vals >= 0) and tr >= 0) or (np.all(vals <= 0) and tr <= 0):
        full = 0.5 * LAM * tr**2 + MU * np.sum(eps * eps)
        assert s.psi_plus + s.psi_minus == pytest.approx(full, rel=1e-12, abs=1e-15)


@given(sym2)
def test_eig_matches_numpy(eps):
    vals, vecs = eig_sym(eps)
    assert np.allclose(np.sort(vals), np.linalg.eigvalsh(eps), atol=1e-12)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.T, eps, atol=1e-12)
    assert np.allclose(vecs.T @ vecs, np.eye(2), atol=1e-12)


def test_stress_broken_tension_vanishes():
    sig = stress(np.diag([0.01, 0.005]), 1.0, LAM, MU, 0.0)
    assert np.abs(sig).max() == 0.0


def test_stress_intact_is_linear_elastic(rng):
    for _ in range(20):
        a = rng.uniform(0.1, 1.0, 2)
        Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        eps = Q @ np.diag(a) @ Q.T
        sig = stress(eps, 0.0, LAM, MU, 1e-8)
        ref = LAM * np.trace(eps) * np.eye(2) + 2 * MU * eps
        assert np.allclose(sig, ref, rtol=1e-12, atol=1e-14)


def test_zero_strain_zero_stress():
    assert np.abs(stress(np.zeros((2, 2)), 0.3, LAM, MU, 1e-8)).max() == 0.0


@given(sym2)
def test_split_stresses_sum(eps):
    sp_, sm_ = split_stresses(eps, LAM, MU)
    ref = LAM * np.trace(eps) * np.eye(2) + 2 * MU * eps
    assert np.allclose(sp_ + sm_, ref, atol=1e-12)


def test_stress_is_energy_derivative(rng):
    eps = np.array([[0.02, 0.013], [0.013, -0.007]])
    sp_, sm_ = split_stresses(eps, LAM, MU)
    h = 1e-7
    for i, j in ((0, 0), (1, 1), (0, 1)):
        E = np.zeros((2, 2))
        E[i, j] = E[j, i] = h
        dp = (split_energy(eps + E, LAM, MU).psi_plus - split_energy(eps - E, LAM, MU).psi_plus) / (2 * h)
        fac = 1.0 if i == j else 2.0
        assert dp == pytest.approx(fac * sp_[i, j], rel=1e-6)
