import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from emmviscowave.voigt import (SQRT2, SingularSpectrumError, check_elimination_identity, check_stiffness,
                                from_voigt, kelvin_to_tensor, random_spd, resolvent_split,
                                spd_function, tensor_to_kelvin, to_voigt, voigt_dim)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def sym(a):
    return a + np.swapaxes(a, -1, -2)


def test_voigt_dim():
    assert voigt_dim(2) == 3
    assert voigt_dim(3) == 6
    with pytest.raises(ValueError):
        voigt_dim(4)


def test_identity_and_shear_vectors():
    np.testing.assert_array_equal(to_voigt(np.eye(2)), [1.0, 1.0, 0.0])
    np.testing.assert_allclose(to_voigt([[0.0, 1.0], [1.0, 0.0]]), [0.0, 0.0, SQRT2], rtol=0, atol=0)


def test_three_d_ordering():
    w = np.array([[1.0, 6.0, 5.0], [6.0, 2.0, 4.0], [5.0, 4.0, 3.0]])
    np.testing.assert_allclose(to_voigt(w), [1, 2, 3, 4 * SQRT2, 5 * SQRT2, 6 * SQRT2])


def test_rejects_nonsymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        to_voigt([[0.0, 1.0], [0.0, 0.0]])


@given(arrays(float, (2, 2), elements=finite))
def test_round_trip_and_isometry(a):
    w = a + a.T
    v = to_voigt(w)
    np.testing.assert_allclose(from_voigt(v), w, rtol=1e-15, atol=1e-13)
    assert np.isclose(np.linalg.norm(v), np.linalg.norm(w), rtol=1e-14, atol=1e-12)


@given(arrays(float, (3, 3), elements=finite))
def test_round_trip_3d(a):
    w = a + a.T
    np.testing.assert_allclose(from_voigt(to_voigt(w)), w, rtol=1e-15, atol=1e-13)


def test_stacked_input(rng):
    w = sym(rng.standard_normal((5, 4, 2, 2)))
    v = to_voigt(w)
    assert v.shape == (5, 4, 3)
    np.testing.assert_allclose(from_voigt(v), w, rtol=1e-15, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
def test_quadratic_form_against_index_summation(rng, d):
    m = voigt_dim(d)
    for _ in range(20):
        K = random_spd(rng, m, 20.0)
        C = kelvin_to_tensor(K)
        w = sym(rng.standard_normal((d, d)))
        tensor_form = np.einsum("ijkl,kl,ij->", C, w, w)
        vec = to_voigt(w)
        assert np.isclose(vec @ K @ vec, tensor_form, rtol=1e-13, atol=0)
        np.testing.assert_allclose(tensor_to_kelvin(C), K, rtol=0, atol=1e-13 * np.abs(K).max())


def test_kelvin_tensor_full_symmetry(rng):
    C = kelvin_to_tensor(random_spd(rng, 3))
    np.testing.assert_array_equal(C, C.transpose(1, 0, 2, 3))
    np.testing.assert_array_equal(C, C.transpose(0, 1, 3, 2))
    np.testing.assert_allclose(C, C.transpose(2, 3, 0, 1), rtol=0, atol=1e-15)


def test_check_stiffness():
    assert check_stiffness(np.diag([1.0, 2.0, 3.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        check_stiffness(np.diag([1.0, 2.0, -1e-3]))
    with pytest.raises(ValueError):
        check_stiffness(np.diag([1.0, 1.0, 1e-10]))
    check_stiffness(np.diag([1.0, 1.0, 1e-10]), alpha0=1e-12)


def test_spd_function_trivial_cases():
    np.testing.assert_allclose(spd_function(np.eye(3), "exp", t=1.0), np.exp(-1.0) * np.eye(3), rtol=1e-15)
    np.testing.assert_allclose(spd_function(np.diag([1.0, 2.0, 3.0]), "shift_inv", lam=1.0),
                               np.diag([1 / 2, 1 / 3, 1 / 4]), rtol=1e-15)


def test_spd_function_exp_matches_scaling_and_squaring(rng):
    for _ in range(50):
        K = random_spd(rng, 3, 100.0, rng.uniform(0.1, 3.0))
        np.testing.assert_allclose(spd_function(K, "exp", t=1.0), sla.expm(-K), rtol=0,
                                   atol=1e-12 * np.abs(sla.expm(-K)).max())


def test_spd_function_other_tags(rng):
    K = random_spd(rng, 3, 10.0)
    lam = 0.3 + 1.7j
    np.testing.assert_allclose(spd_function(K, "shift_inv", lam=lam), np.linalg.inv(lam * np.eye(3) + K),
                               rtol=1e-13)
    np.testing.assert_allclose(spd_function(K, "sq_shift_inv", mu=2.0), np.linalg.inv(4 * np.eye(3) + K @ K),
                               rtol=1e-13)
    np.testing.assert_allclose(spd_function(K, "inv"), np.linalg.inv(K), rtol=1e-12)
    np.testing.assert_allclose(spd_function(K, np.sqrt) @ spd_function(K, np.sqrt), K, rtol=1e-13)


def test_spd_function_congruence(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    lam = np.array([0.5, 1.5, 4.0])
    K = (Q * lam) @ Q.T
    np.testing.assert_allclose(spd_function(K, "exp", t=0.7), (Q * np.exp(-0.7 * lam)) @ Q.T, atol=1e-12)


def test_spd_function_singular_carries_eigenvalue():
    with pytest.raises(SingularSpectrumError) as info:
        spd_function(np.diag([1.0, 2.0, 3.0]), "shift_inv", lam=-2.0)
    assert abs(info.value.eigenvalue) < 1e-12
    with pytest.raises(SingularSpectrumError):
        spd_function(np.diag([0.0, 1.0, 1.0]), "inv")
    with pytest.raises(ValueError, match="unknown"):
        spd_function(np.eye(3), "log")
    with pytest.raises(TypeError):
        spd_function(np.eye(3), "exp")


def test_elimination_identity_examples():
    assert check_elimination_identity(np.eye(3), 1.0, 1.0) == pytest.approx(0.0, abs=1e-16)
    assert check_elimination_identity(np.diag([2.0, 4.0, 8.0]), 2.0, 3.0) <= 1e-14


def test_elimination_identity_random(rng):
    res = [check_elimination_identity(random_spd(rng, 3, 10.0, rng.uniform(0.5, 5)), rng.uniform(0.5, 5),
                               rng.uniform(0.1, 10)) for _ in range(100)]
    assert max(res) <= 1e-12


def test_resolvent_split_examples(rng):
    K = random_spd(rng, 3, 5.0)
    Q, R = resolvent_split(K, 0.0)
    np.testing.assert_allclose(Q, np.linalg.inv(K), rtol=1e-13)
    np.testing.assert_array_equal(R, 0.0)
    Q, R = resolvent_split(np.eye(3), 1.0)
    np.testing.assert_allclose(Q, 0.5 * np.eye(3), atol=1e-16)
    np.testing.assert_allclose(R, -0.5 * np.eye(3), atol=1e-16)


@pytest.mark.parametrize("mu", [2.7, -2.7])
def test_resolvent_split_complex_oracle(rng, mu):
    K = random_spd(rng, 3, 20.0)
    Q, R = resolvent_split(K, mu)
    assert np.max(np.abs((1j * mu * np.eye(3) + K) @ (Q + 1j * R) - np.eye(3))) <= 1e-12
    # R is negative (positive) semidefinite for mu > 0 (< 0)
    ev = np.linalg.eigvalsh(R)
    assert np.all(np.sign(mu) * ev <= 0)


def test_random_spd_condition(rng):
    K = random_spd(rng, 3, 50.0, 2.0)
    ev = np.linalg.eigvalsh(K)
    assert ev[0] == pytest.approx(2.0)
    assert ev[-1] / ev[0] == pytest.approx(50.0)
