import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffthermo import decomp as dc
from diffthermo import fpe
from diffthermo.errors import DomainError
from diffthermo.model import (
    double_well_potential,
    make_driven_rotor,
    make_gradient_model,
    make_klein_kramers,
    make_ou,
    quadratic_potential,
)
from diffthermo.numerics import Grid

ROT = make_ou([[1, 2], [-2, 1]], np.eye(2))
KK = make_klein_kramers(1.0, quadratic_potential(1.0, 1), 1.0, 1.0)
C = dc.Classification


def _grid(m, g):
    f, J = fpe.stationary_density(fpe.assemble_operator(m, g))
    return f, J


@pytest.fixture(scope="module")
def rot_analytic():
    return dc.decompose_analytic(ROT, Grid.cube(-5, 5, 41, 2))


def test_gradient_model_is_detailed_balance():
    m = make_gradient_model(double_well_potential(), 1.0, 1.0)
    f, J = _grid(m, Grid(((-3.0, 3.0),), (401,)))
    d = dc.decompose(m, f, J, dc.GRID_THRESHOLDS, phi_func=m.potential)
    assert d.classification is C.DETAILED_BALANCE
    assert d.j_norm <= 1e-10
    assert d.reconstruction_residual <= 1e-6


def test_rotating_ou_analytic(rot_analytic):
    d = rot_analytic
    assert d.classification is C.MB_EQUILIBRIUM
    x = d.grid.points
    np.testing.assert_allclose(d.j.vectors, np.stack([-2 * x[..., 1], 2 * x[..., 0]], axis=-1), atol=1e-12)
    r = d.residuals()
    assert r["div_j_norm"] <= 1e-12 and r["orth_norm"] <= 1e-12
    assert r["reconstruction_residual"] <= 1e-6


def test_rotating_ou_grid():
    f, J = _grid(ROT, Grid.cube(-5, 5, 81, 2))
    d = dc.decompose(ROT, f, J, dc.GRID_THRESHOLDS)
    assert d.classification is C.MB_EQUILIBRIUM
    assert d.div_j_norm <= 1e-2 and d.orth_norm <= 1e-2


def test_driven_rotor_is_driven():
    m = make_driven_rotor(2.0, 1.0)
    f, J = _grid(m, Grid.cube(-4, 4, 81, 2))
    d = dc.decompose(m, f, J, dc.GRID_THRESHOLDS)
    assert d.classification is C.DRIVEN_NESS
    # both MB conditions fail well clear of the grid thresholds
    assert d.orth_norm >= 5 * dc.GRID_THRESHOLDS["tol_orth"]
    assert d.div_j_norm >= 10 * dc.GRID_THRESHOLDS["tol_div"]


def test_every_ou_circulation_is_mb():
    # j = (D Xi^-1 - B) x is linear with zero trace and x^T Xi^-1 j = 0,
    # so even the non-normal B = [[1,-1],[0,1]] satisfies both MB conditions
    m = make_ou([[1.0, -1.0], [0.0, 1.0]], np.eye(2))
    d = dc.decompose_analytic(m, Grid.cube(-6, 6, 41, 2))
    assert d.classification is C.MB_EQUILIBRIUM
    assert max(d.div_j_norm, d.orth_norm) <= 1e-12


def test_report_and_csv(rot_analytic, tmp_path):
    rep = rot_analytic.report()
    assert rep["classification"] == "MBEquilibrium"
    assert set(rep["residuals"]) >= {"j_norm", "div_j_norm", "orth_norm"}
    rot_analytic.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().count("\n") == 41 * 41 + 1


def test_beta_family():
    m = make_gradient_model(double_well_potential(), np.eye(1), 1.0)
    g = Grid(((-3.0, 3.0),), (401,))
    f1, _ = _grid(m, g)
    r = dc.beta_family_check(m, f1, [1.0, 2.0, 4.0])
    assert r["max_l1_error"] <= 1e-3
    assert r["entries"][0]["l1_error"] <= 1e-12
    f1, _ = _grid(ROT, Grid.cube(-5, 5, 161, 2))
    r = dc.beta_family_check(ROT, f1, [0.5, 2.0])
    assert r["max_j_rel_diff"] <= 0.01
    with pytest.raises(DomainError):
        rotor = make_driven_rotor(2.0, 1.0)
        fr, _ = _grid(rotor, Grid.cube(-4, 4, 41, 2))
        dc.beta_family_check(rotor, fr, [2.0])


def test_flow_examples(rot_analytic):
    r = dc.conservative_flow(rot_analytic, [1.0, 0.0], 1e-3, 100.0, record_every=100)
    assert r.phi_drift <= 1e-8
    # the orbit is the unit circle of the rotation j = [[0,-2],[2,0]] x
    np.testing.assert_allclose(np.linalg.norm(r.trajectory, axis=-1), 1.0, atol=1e-8)
    k = dc.decompose_analytic(KK, Grid.cube(-5, 5, 21, 2))
    r = dc.conservative_flow(k, [1.0, 0.0], 1e-3, 100.0, record_every=100)
    H = 0.5 * np.sum(r.trajectory**2, axis=-1)
    assert np.max(np.abs(H - 0.5)) <= 1e-8


def test_flow_on_grid_interpolated_current_converges():
    drift = []
    for n in (51, 101):
        f, J = _grid(KK, Grid.cube(-5, 5, n, 2))
        d = dc.decompose(KK, f, J, dc.GRID_THRESHOLDS)
        drift.append(dc.conservative_flow(d, [1.0, 0.0], 1e-2, 6.0).phi_drift)
    assert drift[1] < drift[0]
    assert drift[1] <= 0.05


def test_zero_current_flow_stays_put():
    r = dc.conservative_flow(lambda x: np.zeros_like(x), [0.3, -0.2], 1e-2, 1.0, phi=lambda x: np.sum(x**2, axis=-1))
    np.testing.assert_array_equal(r.trajectory[-1], [0.3, -0.2])


def test_cycle_report(rot_analytic):
    loop = dc.gaussian_level_loop(np.eye(2), 2.0, 0.5, 0.0, np.pi / 2, 8)
    r = dc.four_step_cycle_report(rot_analytic, loop)
    assert r["counts"] == {"driven": 1, "conservative": 2, "dissipative": 1}
    assert [s["label"] for s in r["steps"]] == ["driven", "conservative", "dissipative", "conservative"]
    th = np.linspace(0, 2 * np.pi, 30)
    r = dc.four_step_cycle_report(rot_analytic, np.stack([np.cos(th), np.sin(th)], axis=-1))
    assert r["counts"]["driven"] == 0 and r["counts"]["dissipative"] == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=2, max_size=8))
def test_cycle_total_telescopes(pts):
    loop = np.array(pts + [pts[0]], dtype=float)
    r = dc.four_step_cycle_report(lambda x: 0.5 * np.sum(x**2, axis=-1) + np.sin(x[..., 0]), loop)
    assert abs(r["total_delta_phi"]) <= 1e-8
