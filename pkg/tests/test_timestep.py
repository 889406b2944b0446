import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emmviscowave.assembly import assemble_ad, assemble_reduced
from emmviscowave.material import EmmMaterial, MaxwellBranch, isotropic
from emmviscowave.mesh import rect_mesh
from emmviscowave.spectral import higher_energy_bounds
from emmviscowave.timestep import (MidpointStepper, StateAD, StateReduced, corrector_weight, dissipation_rate,
                                   energy, energy_E, f_E, fit_decay, integrate, reduced_stepper, run_energy,
                                   step_ad, step_cn)

from conftest import single_triangle, two_branch


def _unit_state(ops, rng):
    x = rng.standard_normal(ops.n_reduced)
    return x / np.sqrt(2 * energy_E(ops, x))


def test_midpoint_validation():
    with pytest.raises(ValueError):
        MidpointStepper(np.eye(2), 0.0)


@pytest.mark.parametrize("dt", [0.1, 0.5, 2.0])
def test_scalar_midpoint_factor(dt):
    ops = assemble_reduced(single_triangle(), EmmMaterial(1.0, [MaxwellBranch(np.eye(3), 1.0)]))
    psi = np.array([1.0, -2.0, 0.5])
    out = step_cn(ops, StateReduced(np.zeros(0), psi), dt)
    np.testing.assert_allclose(out.psi, (1 - dt / 2) / (1 + dt / 2) * psi, rtol=1e-14)


def test_zero_state_stays_zero(ops4):
    z = StateReduced.from_vector(ops4, np.zeros(ops4.n_reduced))
    out = step_cn(ops4, z, 0.05)
    assert not out.v.any() and not out.psi.any()
    U = StateAD.from_vector(ops4, np.zeros(ops4.n_ad))
    out = step_ad(ops4, U, 0.05)
    assert not out.u1.any() and not out.u2.any() and not out.phi.any()


def test_state_round_trip(ops4, rng):
    x = rng.standard_normal(ops4.n_reduced)
    np.testing.assert_array_equal(StateReduced.from_vector(ops4, x).vector, x)
    U = rng.standard_normal(ops4.n_ad)
    np.testing.assert_array_equal(StateAD.from_vector(ops4, U).vector, U)


def test_energy_balance_per_step(ops8, rng):
    traj = run_energy(ops8, _unit_state(ops8, rng), 0.01, 200)
    assert traj.balance_residual.max() <= 1e-12
    assert np.all(np.diff(traj.E) <= 1e-15 * traj.E[:-1])
    assert np.all(traj.dissipation <= 0)


def test_higher_energy_balance(ops4, rng):
    # y = L x is itself a midpoint trajectory, so Ebar obeys the same balance
    dt = 0.02
    x = _unit_state(ops4, rng)
    st_ = reduced_stepper(ops4, dt)
    for _ in range(50):
        xn = st_.step(x)
        xm, ym = 0.5 * (x + xn), ops4.L @ (0.5 * (x + xn))
        lhs = energy(ops4, xn).Ebar - energy(ops4, x).Ebar
        rhs = dt * (dissipation_rate(ops4, xm) + dissipation_rate(ops4, ym, ops4.L @ ym))
        assert abs(lhs - rhs) <= 1e-12 * energy(ops4, x).Ebar
        x = xn


def test_conjugacy_along_trajectory(rng):
    ops = assemble_ad(rect_mesh(4, 4), two_branch())
    U = rng.standard_normal(ops.n_ad)
    x = ops.P @ U
    for _ in range(20):
        U = step_ad(ops, U, 0.05)
        x = step_cn(ops, x, 0.05)
        np.testing.assert_allclose(ops.P @ U, x, atol=1e-12 * np.abs(x).max())


def test_integrate_sampling(ops4, rng):
    x0 = rng.standard_normal(ops4.n_reduced)
    xs = integrate(reduced_stepper(ops4, 0.1), x0, 10, every=5)
    assert xs.shape == (3, ops4.n_reduced)
    np.testing.assert_array_equal(xs[0], x0)


def test_energy_examples():
    ops = assemble_reduced(single_triangle(), EmmMaterial(1.0, [MaxwellBranch(np.eye(3), 1.0)]))
    rep = energy(ops, StateReduced(np.zeros(0), np.array([1.0, 0.0, 0.0])))
    assert rep.E == pytest.approx(0.5, abs=1e-15)
    assert rep.Ebar == pytest.approx(1.0, abs=1e-15)  # L = -I doubles E
    assert rep.dissipation == pytest.approx(-1.0, abs=1e-15)
    z = energy(ops, np.zeros(3))
    assert (z.E, z.Ebar, z.Etilde, z.dissipation, z.f_E) == (0, 0, 0, 0, 0)


def test_energy_report_invariants(ops4, rng):
    for _ in range(10):
        rep = energy(ops4, rng.standard_normal(ops4.n_reduced), t=1.5)
        assert rep.t == 1.5
        assert rep.E >= 0 and rep.Ebar >= rep.E and rep.dissipation <= 0


def test_energy_formula(ops4, rng):
    x = rng.standard_normal(ops4.n_reduced)
    v, psi = ops4.split_reduced(x)
    E = 0.5 * v @ (ops4.M_rho @ v) + 0.5 * psi @ (ops4.M_psi @ psi)
    assert energy_E(ops4, x) == pytest.approx(E, rel=1e-14)
    ref = sum(psi[ops4.branch_slice(j)] @ (ops4.Wc[j] @ (ops4.G @ v)) for j in range(2))
    assert f_E(ops4, x) == pytest.approx(ref, rel=1e-12)
    rep = energy(ops4, x, state_dot=ops4.L @ x, c_f=0.3)
    assert rep.Etilde == pytest.approx(rep.Ebar + 0.3 * rep.f_E, rel=1e-14)


def test_dissipation_matches_quadratic_form(ops4, rng):
    x = rng.standard_normal(ops4.n_reduced)
    assert dissipation_rate(ops4, x) == pytest.approx(-(x @ (ops4.D_full @ x)), rel=1e-12)


def test_dE_dt_central_difference(ops4, rng):
    x0 = _unit_state(ops4, rng)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        n = int(round(0.2 / dt))
        xs = integrate(reduced_stepper(ops4, dt), x0, 2 * n)
        E = [energy_E(ops4, x) for x in xs[n - 1:n + 2]]
        errs.append(abs((E[2] - E[0]) / (2 * dt) - dissipation_rate(ops4, xs[n])))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_amended_energy_monotone(ops8, rng):
    traj = run_energy(ops8, _unit_state(ops8, rng), 0.01, 500)
    assert traj.c_f > 0
    assert np.all(np.diff(traj.Etilde) <= 1e-12 * traj.Etilde[:-1])


def test_corrector_weight_degenerate_branch():
    mat = EmmMaterial(1.0, [MaxwellBranch(isotropic(1, 1), 0.5), MaxwellBranch(np.eye(3), degenerate=True)])
    assert corrector_weight(assemble_reduced(rect_mesh(3, 3), mat)) == 0.0


def test_higher_energy_bounds(ops4, rng):
    a1, b1 = higher_energy_bounds(ops4)
    assert 0 < a1 <= b1
    for _ in range(20):
        x = rng.standard_normal(ops4.n_reduced)
        nH = x @ (ops4.M_H @ x)
        Eb = energy(ops4, x).Ebar
        assert a1 * nH * (1 - 1e-10) <= Eb <= b1 * nH * (1 + 1e-10)


def test_energy_csv(ops4, rng, tmp_path):
    traj = run_energy(ops4, _unit_state(ops4, rng), 0.05, 4)
    p = tmp_path / "e.csv"
    traj.write_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "E", "Ebar", "Etilde", "dissipation"]
    assert len(rows) == 6
    assert float(rows[1][1]) == traj.E[0]


def test_fit_decay_exact_exponential():
    t = np.linspace(0, 5, 101)
    rate, r2 = fit_decay(t, np.exp(-3 * t))
    assert abs(rate - 3.0) <= 1e-10 and r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_decay_oscillatory():
    t = np.linspace(0, 30, 3001)
    rate, _ = fit_decay(t, np.exp(-t) * (2 + np.cos(t)))
    assert 0.9 <= rate <= 1.1


def test_fit_decay_constant():
    rate, r2 = fit_decay(np.arange(10.0), np.full(10, 2.0))
    assert rate == 0 and r2 == 1.0


def test_fit_decay_underflow_warning():
    t = np.linspace(0, 1000, 1001)
    with pytest.warns(RuntimeWarning, match="underflow"):
        rate, _ = fit_decay(t, np.exp(-t), window=0.5)
    assert rate == pytest.approx(1.0, rel=1e-10)


def test_fit_decay_errors():
    with pytest.raises(ValueError):
        fit_decay([0.0], [1.0])
    with pytest.raises(ValueError):
        fit_decay([0.0, 1.0], [1.0, 0.5], window=0.0)


@given(st.floats(0.01, 10.0), st.floats(-5, 5))
def test_fit_decay_recovers_rate(rate, logc):
    t = np.linspace(0, 3, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        got, r2 = fit_decay(t, np.exp(logc - rate * t))
    assert got == pytest.approx(rate, rel=1e-9, abs=1e-12)
