"""Choked-flow throat conditions and the Birch pseudo-diameter for under-expanded releases."""

from __future__ import annotations

import math
from dataclasses import dataclass

from h2jet.errors import PhysicsDomainError
from h2jet.physics import Ambient, GasConstants, NozzleState


@dataclass(frozen=True)
class StagnationState:
    P0: float
    T0: float

    def __post_init__(self):
        if self.P0 <= 0 or self.T0 <= 0:
            raise PhysicsDomainError("stagnation pressure and temperature must be positive")


@dataclass(frozen=True)
class ThroatState:
    P1: float
    T1: float
    rho1: float
    u1: float
    A1: float


@dataclass(frozen=True)
class NotionalExit:
    d_v: float
    u2: float
    rho2: float
    A2: float
    P2: float

    def as_nozzle(self, T: float) -> NozzleState:
        return NozzleState(d=self.d_v, u=self.u2, rho=self.rho2, P=self.P2, T=T)


def critical_pressure_ratio(gamma: float) -> float:
    return ((gamma + 1.0) / 2.0) ** (gamma / (gamma - 1.0))


def choked_state(
    stag: StagnationState, gas: GasConstants, d_e: float, P_inf: float = 101_325.0
) -> ThroatState:
    g = gas.gamma_heat
    if stag.P0 / P_inf <= critical_pressure_ratio(g):
        raise PhysicsDomainError("flow not choked; use subsonic path")
    ratio = 2.0 / (g + 1.0)
    T1 = stag.T0 * ratio
    return ThroatState(
        P1=stag.P0 * ratio ** (g / (g - 1.0)),
        T1=T1,
        rho1=stag.P0 * gas.M_H2 / (gas.R * stag.T0) * ratio ** (1.0 / (g - 1.0)),
        u1=math.sqrt(g * gas.R * T1 / gas.M_H2),
        A1=math.pi * d_e**2 / 4.0,
    )


def notional_exit(throat: ThroatState, amb: Ambient, gas: GasConstants, d_e: float) -> NotionalExit:
    dp = throat.P1 - amb.P_inf
    if dp < 0:
        raise PhysicsDomainError("throat pressure below ambient; no expansion to model")
    # hydrogen at ambient pressure and temperature after the expansion
    rho2 = amb.P_inf * gas.M_H2 / (gas.R * amb.T_inf)
    flux = throat.rho1 * throat.u1
    u2 = throat.u1 + dp / flux
    d_v = d_e * flux / math.sqrt(rho2 * (dp + flux * throat.u1))
    return NotionalExit(d_v=d_v, u2=u2, rho2=rho2, A2=math.pi * d_v**2 / 4.0, P2=amb.P_inf)


def expand(
    P0: float, T0: float, d_e: float, amb: Ambient, gas: GasConstants
) -> tuple[ThroatState, NotionalExit]:
    """Vessel state to (throat, notional exit) in one call."""
    throat = choked_state(StagnationState(P0, T0), gas, d_e, amb.P_inf)
    return throat, notional_exit(throat, amb, gas, d_e)
