"""Gas constants, self-similar profiles and entrainment closures for the jet model."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from h2jet.errors import PhysicsDomainError

ALPHA_CAP = 0.082
# 1e-3 slack before an out-of-range mass fraction becomes a hard error
_Y_SLACK = 1e-3


@dataclass(frozen=True)
class GasConstants:
    R: float = 8.314
    M_H2: float = 2.016e-3
    M_air: float = 28.966e-3
    gamma_heat: float = 1.405

    def __post_init__(self):
        if min(self.R, self.M_H2, self.M_air, self.gamma_heat) <= 0:
            raise PhysicsDomainError("gas constants must be strictly positive")
        if self.M_air <= self.M_H2:
            raise PhysicsDomainError("M_air must exceed M_H2")
        if not 1.0 < self.gamma_heat < 2.0:
            raise PhysicsDomainError("specific-heat ratio must lie in (1, 2)")

    @property
    def mass_ratio(self) -> float:
        """M_H2 / (M_air - M_H2), the prefactor relating density deficit to Y."""
        return self.M_H2 / (self.M_air - self.M_H2)


@dataclass(frozen=True)
class Ambient:
    P_inf: float = 101_325.0
    T_inf: float = 293.0
    rho_inf: float = 1.205
    g: float = 9.81

    def check(self, gas: GasConstants) -> None:
        ideal = self.P_inf * gas.M_air / (gas.R * self.T_inf)
        if abs(self.rho_inf - ideal) > 0.02 * ideal:
            raise PhysicsDomainError(
                f"ambient density {self.rho_inf} is not ideal-gas consistent ({ideal:.4f})"
            )
        if self.g <= 0:
            raise PhysicsDomainError("gravity must be positive")


@dataclass(frozen=True)
class SpreadingModel:
    lam: float = 1.16
    beta_A: float = 0.282
    alpha_cap: float = ALPHA_CAP
    Lambda1: float = field(init=False)
    Lambda2: float = field(init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise PhysicsDomainError("spreading ratio must be positive")
        l2 = self.lam**2
        object.__setattr__(self, "Lambda1", l2 / (1.0 + l2))
        object.__setattr__(self, "Lambda2", 2.0 * l2 / (1.0 + 2.0 * l2))


@dataclass(frozen=True)
class NozzleState:
    d: float
    u: float
    rho: float
    P: float = 101_325.0
    T: float = 293.0

    def __post_init__(self):
        if self.d <= 0:
            raise PhysicsDomainError("nozzle diameter must be positive")
        if self.u < 0:
            raise PhysicsDomainError("exit velocity must be non-negative")
        if self.rho <= 0:
            raise PhysicsDomainError("exit density must be positive")


@dataclass(frozen=True)
class JetState:
    s: float
    u_cl: float
    b: float
    rho_cl: float
    theta: float
    x: float = 0.0
    z: float = 0.0

    def check(self, amb: Ambient, tol: float = 1e-9) -> None:
        if not (self.b > 0 and self.u_cl > 0):
            raise PhysicsDomainError(f"non-positive width or velocity at s={self.s:.6g}")
        if not (0 < self.rho_cl <= amb.rho_inf + tol):
            raise PhysicsDomainError(
                f"centerline density {self.rho_cl:.6g} outside (0, rho_inf] at s={self.s:.6g}"
            )
        if not (-tol <= self.theta <= math.pi / 2 + tol):
            raise PhysicsDomainError(f"inclination {self.theta:.6g} outside [0, pi/2]")


class Regime(str, enum.Enum):
    PLUME = "Plume"
    BUOYANCY_DOMINATED = "BuoyancyDominated"
    MOMENTUM_DOMINATED = "MomentumDominated"


def froude_number(nozzle: NozzleState, amb: Ambient) -> float:
    """Exit densitometric Froude number."""
    deficit = abs(nozzle.rho - amb.rho_inf)
    if deficit == 0.0:
        raise PhysicsDomainError("Froude undefined for a neutrally buoyant release")
    return nozzle.u / math.sqrt(amb.g * nozzle.d * deficit / nozzle.rho)


def classify_regime(fr: float) -> Regime:
    if fr < 0:
        raise PhysicsDomainError("Froude number must be non-negative")
    if fr < 10:
        return Regime.PLUME
    if fr <= 1000:
        return Regime.BUOYANCY_DOMINATED
    return Regime.MOMENTUM_DOMINATED


def mass_fraction_from_density(rho_cl: float, amb: Ambient, gas: GasConstants) -> float:
    if rho_cl <= 0:
        raise PhysicsDomainError("density must be positive")
    y = gas.mass_ratio * (amb.rho_inf / rho_cl - 1.0)
    if y < -_Y_SLACK or y > 1.0 + _Y_SLACK:
        raise PhysicsDomainError(f"inconsistent density {rho_cl:.6g} (Y={y:.6g})")
    if y < 0.0 or y > 1.0:
        warnings.warn(f"mass fraction {y:.3g} clamped to [0, 1]", stacklevel=2)
        y = min(max(y, 0.0), 1.0)
    return y


def density_from_mass_fraction(y: float, amb: Ambient, gas: GasConstants) -> float:
    if not 0.0 <= y <= 1.0:
        raise PhysicsDomainError(f"mass fraction {y} outside [0, 1]")
    return amb.rho_inf / (1.0 + y / gas.mass_ratio)


def mole_from_mass(y, gas: GasConstants):
    """Mole fraction of hydrogen for mass fraction ``y`` (scalar or array)."""
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise PhysicsDomainError("mass fraction outside [0, 1]")
    moles_h2 = arr / gas.M_H2
    x = moles_h2 / (moles_h2 + (1.0 - arr) / gas.M_air)
    return float(x) if np.ndim(y) == 0 else x


def gaussian_profiles(
    state: JetState, r: float, spreading: SpreadingModel, amb: Ambient, gas: GasConstants
) -> tuple[float, float, float]:
    """Velocity, density and hydrogen partial density at radius ``r``.

    The concentration profile spreads with the same ratio as the density deficit.
    """
    if r < 0:
        raise PhysicsDomainError("radius must be non-negative")
    y_cl = mass_fraction_from_density(state.rho_cl, amb, gas)
    vel_decay = math.exp(-((r / state.b) ** 2))
    scal_decay = math.exp(-((r / (spreading.lam * state.b)) ** 2))
    u = state.u_cl * vel_decay
    rho = amb.rho_inf - (amb.rho_inf - state.rho_cl) * scal_decay
    return u, rho, state.rho_cl * y_cl * scal_decay


def alpha2(fr_den: float) -> float:
    if fr_den < 268:
        return 17.313 - 0.11665 * fr_den + 2.0771e-4 * fr_den**2
    return 0.97


def momentum_entrainment(source: NozzleState, spreading: SpreadingModel) -> float:
    # the source density cancels inside the square root
    return spreading.beta_A * math.sqrt(math.pi * source.d**2 * source.u**2 / 4.0)


def entrainment(
    state: JetState,
    source: NozzleState,
    spreading: SpreadingModel,
    amb: Ambient,
    fr_den: float,
) -> tuple[float, float]:
    """Capped entrainment rate and the effective entrainment coefficient."""
    if state.u_cl <= 0:
        raise PhysicsDomainError("centerline velocity must be positive")
    e_mom = momentum_entrainment(source, spreading)
    # alpha2 / Fr1 * 2 pi u b, written without 1/Fr1 so zero deficit gives zero
    deficit = amb.rho_inf - state.rho_cl
    e_buoy = (
        alpha2(fr_den) * 2.0 * math.pi * amb.g * state.b**2 * deficit / (source.rho * state.u_cl)
    )
    alpha = (e_mom + e_buoy) / (2.0 * math.pi * state.b * state.u_cl)
    alpha_eff = min(alpha, spreading.alpha_cap)
    return 2.0 * math.pi * state.b * alpha_eff * state.u_cl, alpha_eff
