import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffthermo.errors import ShapeError, StabilityError
from diffthermo.numerics import (
    CurrentField,
    Grid,
    GridField,
    RngStream,
    grid_divergence,
    grid_gradient,
    grid_integrate,
    is_hurwitz,
    psd_sqrt,
    solve_lyapunov,
    sym_antisym_split,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


# Lyapunov oracles: substitute into B X + X B^T = 2 D
@pytest.mark.parametrize(
    "B, D, X",
    [
        (np.eye(2), np.eye(2), np.eye(2)),
        ([[1, 2], [-2, 1]], np.eye(2), np.eye(2)),
        ([[2, 1], [1, 2]], np.eye(2), np.array([[2, -1], [-1, 2]]) / 3),
    ],
)
def test_lyapunov_examples(B, D, X):
    np.testing.assert_allclose(solve_lyapunov(B, D), X, atol=1e-14)


def test_lyapunov_rejects_unstable_and_bad_shapes():
    with pytest.raises(StabilityError):
        solve_lyapunov([[-1.0]], [[1.0]])
    with pytest.raises(ShapeError):
        solve_lyapunov(np.eye(2), np.eye(3))


def test_lyapunov_large_system_uses_same_equation():
    rng = np.random.default_rng(3)
    n = 40
    B = rng.normal(size=(n, n)) / np.sqrt(n) + 2 * np.eye(n)
    A = rng.normal(size=(n, n))
    D = A @ A.T / n + np.eye(n)
    X = solve_lyapunov(B, D)
    assert np.linalg.norm(B @ X + X @ B.T - 2 * D) <= 1e-11 * (1 + np.linalg.norm(D))
    np.testing.assert_allclose(X, X.T, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 3), elements=finite), st.floats(0.5, 3))
def test_lyapunov_residual_property(R, shift):
    B = R + (shift + max(0.0, -np.linalg.eigvals(R).real.min())) * np.eye(3)
    D = np.diag([1.0, 2.0, 0.5])
    assert is_hurwitz(B)
    X = solve_lyapunov(B, D)
    assert np.linalg.norm(B @ X + X @ B.T - 2 * D) <= 1e-10 * (1 + np.linalg.norm(X))
    assert np.all(np.linalg.eigvalsh(0.5 * (X + X.T)) > 0)


@pytest.mark.parametrize(
    "M, S, A",
    [
        (np.eye(2), np.eye(2), np.zeros((2, 2))),
        ([[0, 1], [-1, 0]], np.zeros((2, 2)), [[0, 1], [-1, 0]]),
        ([[1, 2], [0, 1]], [[1, 1], [1, 1]], [[0, 1], [-1, 0]]),
    ],
)
def test_sym_antisym_examples(M, S, A):
    s, a = sym_antisym_split(M)
    np.testing.assert_array_equal(s, S)
    np.testing.assert_array_equal(a, A)


@given(arrays(float, (4, 4), elements=finite))
def test_sym_antisym_property(M):
    S, A = sym_antisym_split(M)
    np.testing.assert_allclose(S + A, M, atol=1e-12)
    np.testing.assert_array_equal(S, S.T)
    np.testing.assert_array_equal(A, -A.T)


def test_grid_integrate_examples():
    for n in (3, 7, 100):
        g = Grid(((0.0, 1.0),), (n,))
        assert grid_integrate(np.ones(g.shape), g) == pytest.approx(1.0, abs=1e-15)
    g = Grid(((-8.0, 8.0),), (400,))
    x = g.points[..., 0]
    gauss = np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)
    assert abs(grid_integrate(gauss, g) - 1) <= 1e-6
    assert abs(grid_integrate(x**2 * gauss, g) - 1) <= 1e-4


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_grid_integrate_linear(a, c):
    g = Grid.cube(-1, 2, 13, 2)
    u = g.evaluate(lambda x: np.sin(x[..., 0]) * x[..., 1])
    v = g.evaluate(lambda x: np.cos(x[..., 1]))
    assert grid_integrate(a * u + c * v, g) == pytest.approx(a * grid_integrate(u, g) + c * grid_integrate(v, g), abs=1e-10)


def test_grid_gradient_examples():
    g = Grid.cube(-2, 2, 81, 2)
    assert np.all(grid_gradient(np.full(g.shape, 3.0), g) == 0)
    lin = grid_gradient(g.points[..., 0], g)
    inner = g.interior_mask()
    np.testing.assert_allclose(lin[inner], np.broadcast_to([1.0, 0.0], lin[inner].shape), atol=1e-13)
    q = grid_gradient(0.5 * np.sum(g.points**2, axis=-1), g)
    assert np.max(np.abs(q[inner] - g.points[inner])) <= 1e-12


def test_grid_divergence_of_rotation_is_zero():
    g = Grid.cube(-2, 2, 41, 2)
    x = g.points
    v = np.stack([-x[..., 1], x[..., 0]], axis=-1)
    assert np.max(np.abs(grid_divergence(v, g)[g.interior_mask()])) <= 1e-12


def test_grid_locate_and_contains():
    g = Grid(((0.0, 1.0), (0.0, 2.0)), (10, 4))
    idx = g.locate(np.array([[0.05, 0.1], [0.95, 1.9], [1.5, 0.0]]))
    # flat C-order cell index
    assert list(idx) == [0, 9 * 4 + 3, -1]
    assert g.contains(np.array([0.5, 1.0]))
    assert not g.contains(np.array([0.5, 2.5]))


def test_fields_validate_shapes():
    g = Grid.cube(0, 1, 5, 2)
    with pytest.raises(ShapeError):
        GridField(g, np.ones((5, 4)))
    with pytest.raises(ShapeError):
        CurrentField(g, np.ones((5, 5, 3)))
    f = GridField(g, np.full(g.shape, 2.0))
    assert f.normalized().integral() == pytest.approx(1.0)


def test_rng_stream_reproducible_and_chunk_invariant():
    a = RngStream(11, 3).normal(1000)
    s = RngStream(11, 3)
    b = np.concatenate([s.normal(300), s.normal(700)])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RngStream(11, 4).normal(1000))
    assert not np.array_equal(a, RngStream(12, 3).normal(1000))


@given(arrays(float, (3, 3), elements=finite))
def test_psd_sqrt_property(A):
    P = A @ A.T
    R = psd_sqrt(P)
    np.testing.assert_allclose(R, R.T, atol=1e-12)
    np.testing.assert_allclose(R @ R, P, atol=1e-8 * (1 + np.abs(P).max()))
