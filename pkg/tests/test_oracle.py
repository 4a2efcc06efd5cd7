import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2jet import nozzle
from h2jet.equations import ClosureParams, horizontal_system, vertical_system
from h2jet.errors import PhysicsDomainError
from h2jet.oracle import (
    TRAJECTORY_COLUMNS,
    Orientation,
    ScenarioConfig,
    StepControl,
    format_trajectory,
    horizontal_rhs,
    initial_state,
    integrate,
    sample_sensors,
    stride_indices,
    vertical_rhs,
    _derivative,
)
from h2jet.physics import Ambient, GasConstants, JetState, NozzleState

AMB = Ambient()
GAS = GasConstants()


def subsonic():
    src = NozzleState(d=1.905e-3, u=263.1, rho=0.0838)
    return ScenarioConfig("sub", src, Orientation.VERTICAL, 150 * src.d, eval_range=(10, 150))


def underexpanded(orientation, d_e, length):
    _, ne = nozzle.expand(1.0e6, 293.0, d_e, AMB, GAS)
    src = ne.as_nozzle(293.0)
    return ScenarioConfig("ue", src, orientation, length * src.d, eval_range=(10, length))


@pytest.fixture(scope="module")
def traj_sub():
    return integrate(subsonic())


@pytest.fixture(scope="module")
def traj_h():
    return integrate(underexpanded(Orientation.HORIZONTAL, 3e-3, 500))


def test_initial_states():
    s0 = initial_state(subsonic())
    assert (s0.u_cl, s0.rho_cl, s0.theta) == (263.1, 0.0838, math.pi / 2)
    assert s0.b == pytest.approx(0.9525e-3)
    ue = initial_state(underexpanded(Orientation.VERTICAL, 1e-3, 200))
    assert ue.u_cl == pytest.approx(1872, rel=1e-3)
    assert ue.rho_cl == pytest.approx(0.0839, rel=1e-3)
    assert ue.b == pytest.approx(0.995e-3, rel=2e-3)
    assert initial_state(underexpanded(Orientation.HORIZONTAL, 3e-3, 500)).theta == 0.0


def test_s_end_must_exceed_diameter():
    src = NozzleState(d=1e-3, u=100.0, rho=0.0838)
    with pytest.raises(PhysicsDomainError):
        ScenarioConfig("x", src, Orientation.VERTICAL, 0.5e-3)


def _random_state(draw_u, draw_b, draw_rho, theta=math.pi / 2):
    return JetState(s=0.1, u_cl=draw_u, b=draw_b, rho_cl=draw_rho, theta=theta)


@settings(max_examples=50)
@given(st.floats(1, 300), st.floats(1e-4, 0.05), st.floats(0.09, 1.2))
def test_vertical_solution_satisfies_system(u, b, rho):
    cfg = subsonic()
    y = vertical_rhs(_random_state(u, b, rho), cfg)
    A, r = vertical_system(u, b, rho, cfg.closure)
    res = np.array(A) @ np.array(y) - np.array(r)
    scale = np.abs(np.array(A)).max(axis=1) * np.abs(y).max() + np.abs(r)
    assert np.all(np.abs(res) <= 1e-12 * scale)


def test_vertical_no_deficit_has_no_buoyancy_source():
    _, r = vertical_system(10.0, 0.01, AMB.rho_inf, subsonic().closure)
    assert r[1] == 0.0


def test_vertical_signs_at_source():
    cfg = subsonic()
    du, db, _ = vertical_rhs(initial_state(cfg), cfg)
    assert db > 0 and du < 0


def test_horizontal_rhs_properties():
    cfg = underexpanded(Orientation.HORIZONTAL, 3e-3, 500)
    straight = horizontal_rhs(JetState(0.1, 50.0, 0.01, AMB.rho_inf, 0.0), cfg)
    assert straight[3] == 0.0
    buoyant = horizontal_rhs(JetState(0.1, 50.0, 0.01, 0.6, 0.0), cfg)
    assert buoyant[3] > 0
    for th in (0.0, 0.4, 1.2):
        d = horizontal_rhs(JetState(0.1, 50.0, 0.01, 0.6, th), cfg)
        assert d[4] ** 2 + d[5] ** 2 == pytest.approx(1.0, rel=1e-15)


def test_singular_system_raises():
    with pytest.raises(PhysicsDomainError):
        _derivative([0.0, 0.01, 0.5, 0.0], True, subsonic().closure)


def test_step_halving_agreement_at_100d():
    cfg = subsonic()
    coarse = integrate(cfg, StepControl(h=cfg.source.d / 16, refine=False))
    fine = integrate(cfg, StepControl(h=cfg.source.d / 32, refine=False))
    s = 100 * cfg.source.d
    yc, yf = coarse.interpolate("Y_cl", s), fine.interpolate("Y_cl", s)
    assert abs(yc - yf) / yf < 1e-4


def test_refinement_reports_error(traj_sub):
    assert traj_sub.halving_error <= StepControl().tol


@pytest.mark.parametrize("which", ["sub", "uev", "ueh"])
def test_hydrogen_flux_conserved(which, traj_sub, traj_h):
    if which == "sub":
        cfg, tr = subsonic(), traj_sub
    elif which == "uev":
        cfg = underexpanded(Orientation.VERTICAL, 1e-3, 200)
        tr = integrate(cfg)
    else:
        cfg, tr = underexpanded(Orientation.HORIZONTAL, 3e-3, 500), traj_h
    q = tr.hydrogen_flux(cfg.gas.mass_ratio, cfg.amb.rho_inf)
    assert np.max(np.abs(q - q[0])) / q[0] < 1e-6


def test_horizontal_x_momentum_conserved(traj_h):
    lam2 = underexpanded(Orientation.HORIZONTAL, 3e-3, 500).spreading.Lambda2
    tr = traj_h
    m = np.cos(tr.theta) * tr.u_cl**2 * tr.b**2 * (AMB.rho_inf - lam2 * (AMB.rho_inf - tr.rho_cl))
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-5


def test_horizontal_trajectory_rises(traj_h):
    assert np.all(np.diff(traj_h.z) >= 0)
    assert np.all(np.diff(traj_h.x) > 0)


def test_pure_momentum_limit():
    # no density deficit and no buoyant entrainment: u^2 b^2 is conserved
    p = ClosureParams(rho_inf=1.205, g=9.81, lam=1.16, Lambda1=0.5737, Lambda2=0.7291,
                      mass_ratio=GAS.mass_ratio, e_mom=0.01, rho0=0.0838, alpha2=0.0,
                      alpha_cap=0.082)
    y = [100.0, 1e-3, 1.205, math.pi / 2, 0.0, 0.0]
    h = 1e-4
    m0 = (y[0] * y[1]) ** 2
    for _ in range(500):
        k1 = _derivative(y, True, p)
        k2 = _derivative([a + h / 2 * k for a, k in zip(y, k1)], True, p)
        k3 = _derivative([a + h / 2 * k for a, k in zip(y, k2)], True, p)
        k4 = _derivative([a + h * k for a, k in zip(y, k3)], True, p)
        y = [a + h / 6 * (q1 + 2 * q2 + 2 * q3 + q4) for a, q1, q2, q3, q4 in zip(y, k1, k2, k3, k4)]
    assert y[2] == pytest.approx(1.205, rel=1e-12)
    assert (y[0] * y[1]) ** 2 == pytest.approx(m0, rel=1e-6)


def test_hyperbolic_decay(traj_sub):
    sd = traj_sub.s_over_d
    mask = (sd >= 30) & (sd <= 150)
    x, y = sd[mask], 1.0 / traj_sub.Y_cl[mask]
    slope, icpt = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - (slope * x + icpt)) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 > 0.99


def test_trajectory_invariants(traj_sub):
    assert np.all(np.diff(traj_sub.s) > 0)
    for st_ in traj_sub.states[::50]:
        st_.check(AMB)
    assert np.all(np.diff(traj_sub.Y_cl[5:]) <= 0)
    with pytest.raises(ValueError):
        traj_sub.u_cl[0] = 1.0


def test_sample_sensors_interpolation(traj_sub):
    cfg = subsonic()
    d = cfg.source.d
    node = traj_sub.s[40] / d
    r = sample_sensors(traj_sub, [node], cfg)
    assert r.Y_cl[0] == traj_sub.Y_cl[40]
    mid = 0.5 * (traj_sub.s[40] + traj_sub.s[41]) / d
    r = sample_sensors(traj_sub, [mid], cfg)
    assert r.Y_cl[0] == pytest.approx(0.5 * (traj_sub.Y_cl[40] + traj_sub.Y_cl[41]), rel=1e-12)
    with pytest.raises(PhysicsDomainError):
        sample_sensors(traj_sub, [200.0], cfg)


def test_sample_sensors_subset_and_noise(traj_sub):
    cfg = subsonic()
    pos = np.linspace(10, 150, 20)
    a = sample_sensors(traj_sub, pos, cfg, k=5)
    assert np.allclose(a.s_over_d, pos[[0, 4, 8, 12, 16]])
    n1 = sample_sensors(traj_sub, pos, cfg, k=5, noise_std=0.05, seed=3)
    n2 = sample_sensors(traj_sub, pos, cfg, k=5, noise_std=0.05, seed=3)
    assert np.array_equal(n1.Y_cl, n2.Y_cl)
    assert not np.array_equal(n1.Y_cl, a.Y_cl)


def test_stride_indices():
    assert stride_indices(20, 5) == [0, 4, 8, 12, 16]
    assert stride_indices(20, 20) == list(range(20))
    with pytest.raises(ValueError):
        stride_indices(5, 6)


def test_trajectory_table_format(traj_sub):
    text = format_trajectory(traj_sub)
    lines = text.splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == len(traj_sub) + 1
    assert float(lines[1].split(",")[2]) == pytest.approx(263.1)
