import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from h2jet.errors import PhysicsDomainError
from h2jet.nozzle import (
    StagnationState,
    ThroatState,
    choked_state,
    critical_pressure_ratio,
    expand,
    notional_exit,
)
from h2jet.physics import Ambient, GasConstants, froude_number

GAS = GasConstants()
AMB = Ambient()


def test_throat_matches_table_values():
    t = choked_state(StagnationState(1.0e6, 293.0), GAS, 1e-3)
    assert t.rho1 == pytest.approx(0.521, rel=0.02)
    assert t.u1 == pytest.approx(1196.3, rel=0.02)


def test_throat_hand_values():
    t = choked_state(StagnationState(1.0e6, 293.0), GAS, 1e-3)
    g = 1.405
    assert t.P1 == pytest.approx(1.0e6 * (2 / (g + 1)) ** (g / (g - 1)), rel=1e-12)
    assert t.P1 == pytest.approx(5.28e5, rel=0.005)
    assert t.T1 == pytest.approx(243.7, abs=0.1)
    assert t.T1 == pytest.approx(293.0 * 2 / (g + 1), rel=1e-9)
    assert t.A1 == pytest.approx(math.pi * 1e-6 / 4)


def test_subcritical_rejected():
    with pytest.raises(PhysicsDomainError, match="flow not choked; use subsonic path"):
        choked_state(StagnationState(1.5e5, 293.0), GAS, 1e-3)


def test_notional_exit_hand_values():
    _, ne = expand(1.0e6, 293.0, 1e-3, AMB, GAS)
    assert ne.d_v == pytest.approx(1.99e-3, rel=0.005)
    assert ne.u2 == pytest.approx(1872.0, rel=0.002)
    assert ne.P2 == AMB.P_inf


def test_limiting_case_no_overpressure():
    t = ThroatState(P1=AMB.P_inf, T1=243.7, rho1=0.3, u1=1190.0, A1=1e-6)
    ne = notional_exit(t, AMB, GAS, 1e-3)
    assert ne.u2 == t.u1
    assert ne.d_v / 1e-3 == pytest.approx(math.sqrt(t.rho1 / ne.rho2), rel=1e-12)


def test_throat_below_ambient_rejected():
    t = ThroatState(P1=0.9e5, T1=243.7, rho1=0.3, u1=1190.0, A1=1e-6)
    with pytest.raises(PhysicsDomainError):
        notional_exit(t, AMB, GAS, 1e-3)


def test_notional_froude_near_table_value():
    # the tabulated 3665.02 is reproduced to 0.2% at the notional exit
    _, ne = expand(1.0e6, 293.0, 1e-3, AMB, GAS)
    assert froude_number(ne.as_nozzle(293.0), AMB) == pytest.approx(3665.02, rel=0.005)


@given(st.floats(3.0, 100.0), st.floats(0.5e-3, 5e-3))
def test_conservation_identities(p_bar, d_e):
    t, ne = expand(p_bar * 1e5, 293.0, d_e, AMB, GAS)
    m1 = t.rho1 * t.u1 * t.A1
    m2 = ne.rho2 * ne.u2 * ne.A2
    assert abs(m2 - m1) <= 1e-10 * m1
    lhs = ne.rho2 * ne.u2**2 * ne.A2
    rhs = t.rho1 * t.u1**2 * t.A1 + (t.P1 - AMB.P_inf) * t.A1
    assert abs(lhs - rhs) <= 1e-10 * rhs
    assert ne.d_v >= d_e
    assert ne.u2 > t.u1
    assert t.P1 < p_bar * 1e5


def test_critical_ratio():
    assert critical_pressure_ratio(1.4) == pytest.approx(1.8929, abs=1e-4)
