import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffthermo import ou
from diffthermo.errors import DomainError, ParameterError, StabilityError
from diffthermo.model import (
    CATALOG,
    build_model,
    double_well_potential,
    make_ao,
    make_driven_rotor,
    make_gradient_model,
    make_klein_kramers,
    make_ou,
    quadratic_potential,
    quartic_potential,
)
from diffthermo.numerics import probe_points

PTS = probe_points([(-2, 2), (-2, 2)], 50, seed=1)


def test_ou_drift_and_diffusion():
    m = make_ou([[1.0]], [[1.0]])
    x = np.array([[0.5], [-2.0]])
    np.testing.assert_allclose(m.b(x), -x)
    np.testing.assert_allclose(m.D(x), np.ones((2, 1, 1)))
    rot = make_ou([[1, 2], [-2, 1]], np.eye(2))
    np.testing.assert_allclose(rot.b(PTS), -PTS @ np.array([[1, 2], [-2, 1]]).T)


def test_ou_detailed_balance_examples():
    assert ou.ou_detailed_balance([[2, 1], [1, 2]], np.eye(2))
    assert not ou.ou_detailed_balance([[1, 2], [-2, 1]], np.eye(2))
    assert ou.ou_detailed_balance(np.diag([1.0, 2.0]), np.diag([3.0, 4.0]))


def test_klein_kramers_harmonic():
    m = make_klein_kramers(1.0, quadratic_potential(1.0, 1), 1.0, 1.0)
    x = PTS
    np.testing.assert_allclose(m.b(x), np.stack([x[:, 1], -x[:, 0] - x[:, 1]], axis=-1), atol=1e-12)
    np.testing.assert_allclose(m.D(x)[0], [[0, 0], [0, 1]])
    free = make_klein_kramers(2.0, quadratic_potential(0.0, 1), 1.0, 1.0)
    np.testing.assert_allclose(free.b(x), np.stack([x[:, 1] / 2, -x[:, 1] / 2], axis=-1), atol=1e-12)


def test_klein_kramers_double_well_stationary_current_is_hamiltonian():
    U = double_well_potential(0.25, 0.5)
    m = make_klein_kramers(1.0, U, 0.5, 0.2)
    x = PTS
    f = m.stationary_density(x)
    J = m.stationary_current(x)
    # J^ss = (v, -U'(x)) f^ss, orthogonal to grad f^ss
    np.testing.assert_allclose(J, np.stack([x[:, 1], -U.gradient(x[:, :1])[:, 0]], axis=-1) * f[:, None], atol=1e-12)


def test_ao_models():
    plain = make_ao(np.eye(2), quadratic_potential(np.eye(2)))
    np.testing.assert_allclose(plain.b(PTS), -PTS, atol=1e-12)
    G = np.array([[1.0, 1.0], [-1.0, 1.0]])
    m = make_ao(G, quadratic_potential(np.eye(2)))
    np.testing.assert_allclose(m.b(PTS), -PTS @ G.T, atol=1e-12)
    np.testing.assert_allclose(m.D(PTS)[0], np.eye(2))
    f = m.stationary_density(PTS)
    grad_f = -PTS * f[:, None]
    np.testing.assert_allclose(m.stationary_current(PTS), grad_f @ np.array([[0, 1], [-1, 0]]).T, atol=1e-12)
    quartic = make_ao(G, quartic_potential(0.25, 2))
    J = quartic.stationary_current(PTS)
    gf = -quartic_potential(0.25, 2).gradient(PTS) * quartic.stationary_density(PTS)[:, None]
    assert np.max(np.abs(np.sum(J * gf, axis=-1))) <= 1e-14


def test_gradient_models():
    m = make_gradient_model(double_well_potential(), 1.0, 4.0)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(m.b(x)[:, 0], -(x[:, 0] ** 3 - x[:, 0]), atol=1e-12)
    aniso = make_gradient_model(quadratic_potential(np.eye(2)), np.diag([1.0, 2.0]), 1.0)
    np.testing.assert_allclose(aniso.b(PTS), -PTS * np.array([1.0, 2.0]), atol=1e-12)
    np.testing.assert_allclose(aniso.stationary_current(PTS), 0.0, atol=1e-14)


def test_potential_gradient_matches_differences():
    for U, d in ((double_well_potential(), 1), (quartic_potential(0.25, 2), 2)):
        assert U.check_gradient(probe_points([(-2, 2)] * d, 30)) <= 1e-6


def test_catalog_and_builder():
    assert {"ou", "klein_kramers", "ao", "gradient", "driven_rotor"} <= set(CATALOG)
    assert {"B", "D", "beta"} <= set(CATALOG["ou"]["schema"])
    assert {"m", "U", "eta", "kBT"} <= set(CATALOG["klein_kramers"]["schema"])
    assert {"G", "phi"} <= set(CATALOG["ao"]["schema"])
    m = build_model("ou", {"B": [[1, 2], [-2, 1]]})
    assert m.dim == 2
    with pytest.raises(ParameterError):
        build_model("nope")


def test_model_rejects_unstable_and_negative_diffusion():
    with pytest.raises(StabilityError):
        make_ou([[-1.0]], [[1.0]])
    with pytest.raises((ParameterError, DomainError)):
        make_ou([[1.0]], [[-1.0]])
    with pytest.raises(ParameterError):
        make_ou([[1.0]], [[1.0]], beta=0.0)


def test_driven_rotor_has_no_potential():
    m = make_driven_rotor(2.0, 1.0)
    assert m.potential is None
    report = m.check([(-2, 2), (-2, 2)])
    assert report


# closed-form OU stationary theory
def test_ou_stationary_rotating():
    st_ = ou.ou_stationary([[1, 2], [-2, 1]], np.eye(2))
    np.testing.assert_allclose(st_.Xi, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(st_.A, [[0, 2], [-2, 0]], atol=1e-14)
    np.testing.assert_allclose(st_.current_coeff, [[0, 2], [-2, 0]], atol=1e-14)
    # the circulation of drift -B x against N(0, I): j = (D Xi^-1 - B) x
    np.testing.assert_allclose(st_.circulation, [[0, -2], [2, 0]], atol=1e-14)
    x = PTS
    J = st_.current(x)
    b = -x @ np.array([[1, 2], [-2, 1]]).T
    f = st_.density(x)
    np.testing.assert_allclose(J, (b + x) * f[:, None], atol=1e-14)


def test_ou_stationary_detailed_balance_and_scaling():
    st_ = ou.ou_stationary([[2, 1], [1, 2]], np.eye(2))
    np.testing.assert_allclose(st_.current_coeff, 0.0, atol=1e-14)
    np.testing.assert_allclose(st_.A, 0.0, atol=1e-14)
    assert max(ou.ou_mb_certificate(st_).values()) <= 1e-14
    st2 = ou.ou_stationary(np.eye(2), np.eye(2), beta=2.0)
    np.testing.assert_allclose(st2.Xi, 0.5 * np.eye(2), atol=1e-14)


def test_ou_certificate_rotating():
    cert = ou.ou_mb_certificate(ou.ou_stationary([[1, 2], [-2, 1]], np.eye(2)))
    assert max(cert.values()) <= 1e-12


def test_ou_drift_reconstruction():
    st_ = ou.ou_stationary([[1, 2], [-2, 1]], np.eye(2))
    assert ou.ou_drift_reconstruction_error(st_, PTS) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-2, 2)), st.floats(0.5, 2.0))
def test_ou_certificate_random_hurwitz(R, shift):
    B = R + (shift + max(0.0, -np.linalg.eigvals(R).real.min())) * np.eye(4)
    cert = ou.ou_mb_certificate(ou.ou_stationary(B, np.eye(4)))
    assert max(cert.values()) <= 1e-10
