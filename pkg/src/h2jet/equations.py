"""Coefficient assembly for the centerline ODE systems.

The same assembly serves the oracle integrator (python floats) and the physics
loss (autodiff nodes over node arrays); ``xp`` supplies exp/sqrt/sin/cos/minimum
for whichever value type is in play.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from h2jet.physics import Ambient, GasConstants, NozzleState, SpreadingModel, alpha2, froude_number
from h2jet.physics import momentum_entrainment

PI = math.pi


class ScalarOps:
    exp = staticmethod(math.exp)
    sqrt = staticmethod(math.sqrt)
    sin = staticmethod(math.sin)
    cos = staticmethod(math.cos)
    minimum = staticmethod(min)


@dataclass(frozen=True)
class ClosureParams:
    """Everything the right-hand sides need besides the local state.

    In nondimensional form velocities are in units of the exit velocity, lengths
    in the source diameter and densities in the ambient density.
    """

    rho_inf: float
    g: float
    lam: float
    Lambda1: float
    Lambda2: float
    mass_ratio: float
    e_mom: float
    rho0: float
    alpha2: float
    alpha_cap: float

    @classmethod
    def build(
        cls, gas: GasConstants, amb: Ambient, spreading: SpreadingModel, source: NozzleState
    ) -> "ClosureParams":
        return cls(
            rho_inf=amb.rho_inf,
            g=amb.g,
            lam=spreading.lam,
            Lambda1=spreading.Lambda1,
            Lambda2=spreading.Lambda2,
            mass_ratio=gas.mass_ratio,
            e_mom=momentum_entrainment(source, spreading),
            rho0=source.rho,
            alpha2=alpha2(froude_number(source, amb)),
            alpha_cap=spreading.alpha_cap,
        )

    def nondimensional(self, u_ref: float, L_ref: float, rho_ref: float) -> "ClosureParams":
        return replace(
            self,
            rho_inf=self.rho_inf / rho_ref,
            g=self.g * L_ref / u_ref**2,
            e_mom=self.e_mom / (u_ref * L_ref),
            rho0=self.rho0 / rho_ref,
        )


def entrainment_rate(u, b, rho, p: ClosureParams, xp=ScalarOps):
    """Capped entrainment E and effective coefficient for centerline values."""
    deficit = p.rho_inf - rho
    e_buoy = p.alpha2 * 2.0 * PI * p.g * b * b * deficit / (p.rho0 * u)
    alpha = (p.e_mom + e_buoy) / (2.0 * PI * b * u)
    alpha_eff = xp.minimum(alpha, p.alpha_cap)
    return 2.0 * PI * b * alpha_eff * u, alpha_eff


def mass_fraction(rho, p: ClosureParams):
    return p.mass_ratio * (p.rho_inf / rho - 1.0)


def _shared_rows(u, b, rho, p: ClosureParams, xp):
    deficit = p.rho_inf - rho
    e, _ = entrainment_rate(u, b, rho, p, xp)
    y = mass_fraction(rho, p)
    m = p.rho_inf - p.Lambda1 * deficit
    continuity = ([b * b * m, 2.0 * u * b * m, u * b * b * p.Lambda1], p.rho_inf * e / PI)
    # p/(RT) of the printed species row taken as the ambient molar density rho_inf/M_air
    species = (
        [rho * y * b * b, 2.0 * u * rho * y * b, u * b * b * (y - p.mass_ratio * p.rho_inf / rho)],
        0.0 * u,
    )
    k = 1.0 - p.Lambda2 * deficit / p.rho_inf
    buoyancy = deficit / p.rho_inf * p.g * p.lam**2 * b * b
    return continuity, species, k, buoyancy


def vertical_system(u, b, rho, p: ClosureParams, xp=ScalarOps):
    """Rows (continuity, momentum, species) of A(y) y' = r(y) for y = (u, b, rho)."""
    continuity, species, k, buoyancy = _shared_rows(u, b, rho, p, xp)
    momentum = (
        [k * u * b * b, k * u * u * b, u * u * b * b / 2.0 * p.Lambda2 / p.rho_inf],
        buoyancy,
    )
    rows = [continuity, momentum, species]
    return [r[0] for r in rows], [r[1] for r in rows]


def horizontal_system(u, b, rho, theta, p: ClosureParams, xp=ScalarOps):
    """Rows (continuity, x-momentum, z-momentum, species) for y = (u, b, rho, theta)."""
    continuity, species, k, buoyancy = _shared_rows(u, b, rho, p, xp)
    c, s = xp.cos(theta), xp.sin(theta)
    half = u * u * b * b / 2.0
    dens = half * p.Lambda2 / p.rho_inf
    x_mom = [k * u * c * b * b, k * u * u * c * b, c * dens, -1.0 * k * s * half]
    z_mom = [k * u * s * b * b, k * u * u * s * b, s * dens, k * c * half]
    zero = 0.0 * u
    rows = [
        (continuity[0] + [zero], continuity[1]),
        (x_mom, zero),
        (z_mom, buoyancy),
        (species[0] + [zero], species[1]),
    ]
    return [r[0] for r in rows], [r[1] for r in rows]
