import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from h2jet.errors import PhysicsDomainError
from h2jet.physics import (
    Ambient,
    GasConstants,
    JetState,
    NozzleState,
    Regime,
    SpreadingModel,
    alpha2,
    classify_regime,
    density_from_mass_fraction,
    entrainment,
    froude_number,
    gaussian_profiles,
    mass_fraction_from_density,
    mole_from_mass,
)

GAS = GasConstants()
AMB = Ambient()
SPREAD = SpreadingModel()
SUBSONIC = NozzleState(d=1.905e-3, u=263.1, rho=0.0838)


def test_froude_matches_table_value():
    assert froude_number(SUBSONIC, AMB) == pytest.approx(527.5, rel=0.01)


def test_froude_zero_velocity():
    assert froude_number(NozzleState(d=1e-3, u=0.0, rho=0.0838), AMB) == 0.0


def test_froude_neutral_buoyancy_rejected():
    with pytest.raises(PhysicsDomainError, match="Froude undefined"):
        froude_number(NozzleState(d=1e-3, u=10.0, rho=AMB.rho_inf), AMB)


@pytest.mark.parametrize(
    "fr, regime",
    [(527.5, Regime.BUOYANCY_DOMINATED), (3665.02, Regime.MOMENTUM_DOMINATED), (9.99, Regime.PLUME),
     (10.0, Regime.BUOYANCY_DOMINATED), (1000.0, Regime.BUOYANCY_DOMINATED)],
)
def test_regimes(fr, regime):
    assert classify_regime(fr) is regime


def test_negative_froude_rejected():
    with pytest.raises(PhysicsDomainError):
        classify_regime(-1.0)


def test_constants_validation():
    with pytest.raises(PhysicsDomainError):
        GasConstants(M_H2=0.03)
    with pytest.raises(PhysicsDomainError):
        GasConstants(gamma_heat=2.5)
    with pytest.raises(PhysicsDomainError):
        Ambient(rho_inf=1.5).check(GAS)
    AMB.check(GAS)


def test_mass_fraction_examples():
    assert mass_fraction_from_density(AMB.rho_inf, AMB, GAS) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert mass_fraction_from_density(0.0838, AMB, GAS) == pytest.approx(1.0, abs=0.005)
    # hand evaluation: 2.016 / 26.95 * (1.205 / 0.6 - 1)
    assert mass_fraction_from_density(0.6, AMB, GAS) == pytest.approx(0.0754, abs=1e-4)


def test_mass_fraction_errors():
    with pytest.raises(PhysicsDomainError):
        mass_fraction_from_density(0.0, AMB, GAS)
    with pytest.raises(PhysicsDomainError, match="inconsistent density"):
        mass_fraction_from_density(0.05, AMB, GAS)
    with pytest.warns(UserWarning):
        y = mass_fraction_from_density(AMB.rho_inf * 1.00001, AMB, GAS)
    assert y == 0.0


def test_density_from_mass_fraction():
    assert density_from_mass_fraction(0.0, AMB, GAS) == AMB.rho_inf
    assert density_from_mass_fraction(1.0, AMB, GAS) == pytest.approx(0.0839, abs=2e-4)
    with pytest.raises(PhysicsDomainError):
        density_from_mass_fraction(1.2, AMB, GAS)


@given(st.floats(0.0839, 1.205))
def test_density_round_trip(rho):
    y = mass_fraction_from_density(rho, AMB, GAS)
    assert density_from_mass_fraction(y, AMB, GAS) == pytest.approx(rho, rel=1e-12)


@given(st.floats(0.5, 2.0))
def test_lambda_ordering(lam):
    s = SpreadingModel(lam=lam)
    assert 0 < s.Lambda1 < s.Lambda2 < 1
    assert s.Lambda1 == lam**2 / (1 + lam**2)


def test_gaussian_profiles_examples():
    state = JetState(s=0.1, u_cl=50.0, b=0.01, rho_cl=0.9, theta=math.pi / 2)
    y = mass_fraction_from_density(0.9, AMB, GAS)
    assert gaussian_profiles(state, 0.0, SPREAD, AMB, GAS) == pytest.approx((50.0, 0.9, 0.9 * y))
    u, _, _ = gaussian_profiles(state, state.b, SPREAD, AMB, GAS)
    assert u == pytest.approx(50.0 / math.e)
    u, rho, ry = gaussian_profiles(state, 100 * state.b, SPREAD, AMB, GAS)
    assert u == pytest.approx(0.0, abs=1e-10)
    assert rho == pytest.approx(AMB.rho_inf, abs=1e-10)
    assert ry == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(PhysicsDomainError):
        gaussian_profiles(state, -1.0, SPREAD, AMB, GAS)


@given(st.floats(0.1, 1.2), st.lists(st.floats(0, 0.1), min_size=2, max_size=10))
def test_gaussian_profiles_monotone(rho_cl, radii):
    state = JetState(s=0.1, u_cl=10.0, b=0.01, rho_cl=rho_cl, theta=0.3)
    vals = [gaussian_profiles(state, r, SPREAD, AMB, GAS) for r in sorted(radii)]
    for (u0, r0, y0), (u1, r1, y1) in zip(vals, vals[1:]):
        assert u1 <= u0 and y1 <= y0 and r1 >= r0


def test_alpha2_examples():
    assert alpha2(1000) == 0.97
    # 17.313 - 11.665 + 2.0771
    assert alpha2(100) == pytest.approx(7.7251, abs=1e-3)
    assert abs(alpha2(268 - 1e-9) - alpha2(268)) < 0.01


@given(st.floats(268, 1e6))
def test_alpha2_constant_branch(fr):
    assert alpha2(fr) == 0.97


def _hand_entrainment(state, source, fr):
    e_mom = 0.282 * math.sqrt(math.pi * source.d**2 * source.rho * source.u**2 / 4 / source.rho)
    fr1 = state.u_cl**2 / (AMB.g * state.b * (AMB.rho_inf - state.rho_cl) / source.rho)
    e_buoy = alpha2(fr) / fr1 * 2 * math.pi * state.u_cl * state.b
    return e_mom + e_buoy


def test_entrainment_initial_state_matches_hand_evaluation():
    fr = froude_number(SUBSONIC, AMB)
    state = JetState(s=0.0, u_cl=263.1, b=1.905e-3 / 2, rho_cl=0.0838, theta=math.pi / 2)
    e, a = entrainment(state, SUBSONIC, SPREAD, AMB, fr)
    expected = _hand_entrainment(state, SUBSONIC, fr)
    assert a < 0.082
    assert e == pytest.approx(expected, rel=1e-10)


def test_entrainment_no_deficit_is_momentum_only():
    fr = froude_number(SUBSONIC, AMB)
    state = JetState(s=0.0, u_cl=263.1, b=1e-3, rho_cl=AMB.rho_inf, theta=math.pi / 2)
    e, _ = entrainment(state, SUBSONIC, SPREAD, AMB, fr)
    assert e == pytest.approx(0.282 * math.sqrt(math.pi * SUBSONIC.d**2 * SUBSONIC.u**2 / 4))


def test_entrainment_cap():
    fr = froude_number(SUBSONIC, AMB)
    # choose b so that the momentum term alone gives alpha = 0.2
    e_mom = 0.282 * math.sqrt(math.pi) * SUBSONIC.d * SUBSONIC.u / 2
    u = 10.0
    b = e_mom / (2 * math.pi * 0.2 * u)
    state = JetState(s=1.0, u_cl=u, b=b, rho_cl=AMB.rho_inf, theta=math.pi / 2)
    e, a = entrainment(state, SUBSONIC, SPREAD, AMB, fr)
    assert a == 0.082
    assert e == pytest.approx(2 * math.pi * b * 0.082 * u)


def test_entrainment_rejects_nonpositive_velocity():
    state = JetState(s=1.0, u_cl=1.0, b=1e-3, rho_cl=1.0, theta=0.0)
    object.__setattr__(state, "u_cl", 0.0)
    with pytest.raises(PhysicsDomainError):
        entrainment(state, SUBSONIC, SPREAD, AMB, 500.0)


@settings(max_examples=50)
@given(st.floats(0.1, 1000), st.floats(1e-4, 0.5), st.floats(0.09, 1.205))
def test_entrainment_identity(u, b, rho):
    state = JetState(s=1.0, u_cl=u, b=b, rho_cl=rho, theta=math.pi / 2)
    e, a = entrainment(state, SUBSONIC, SPREAD, AMB, 527.0)
    assert a <= 0.082
    assert e == pytest.approx(2 * math.pi * b * a * u, rel=1e-12)


def test_mole_from_mass_examples():
    assert mole_from_mass(0.0, GAS) == 0.0
    assert mole_from_mass(1.0, GAS) == 1.0
    # (0.0754/2.016) / (0.0754/2.016 + 0.9246/28.966)
    assert mole_from_mass(0.0754, GAS) == pytest.approx(0.5395, abs=1e-4)
    with pytest.raises(PhysicsDomainError):
        mole_from_mass(1.5, GAS)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20, unique=True))
def test_mole_from_mass_monotone(ys):
    ys = np.sort(np.array(ys))
    xs = mole_from_mass(ys, GAS)
    # strictly increasing, up to rounding for neighbours a few ulps apart
    assert np.all(np.diff(xs) >= 0)
    assert np.all(np.diff(xs)[np.diff(ys) > 1e-9] > 0)
    assert np.all((xs >= 0) & (xs <= 1))


def test_jet_state_invariants():
    with pytest.raises(PhysicsDomainError):
        JetState(0, 1, 1, 1.3, 0).check(AMB)
    with pytest.raises(PhysicsDomainError):
        JetState(0, 1, -1, 1.0, 0).check(AMB)
    with pytest.raises(PhysicsDomainError):
        JetState(0, 1, 1, 1.0, 2.0).check(AMB)
