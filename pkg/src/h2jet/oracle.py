"""Runge-Kutta integration of the centerline ODEs; the reference solution for everything else."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from h2jet import linalg
from h2jet.equations import ClosureParams, horizontal_system, vertical_system
from h2jet.errors import PhysicsDomainError
from h2jet.physics import (
    Ambient,
    GasConstants,
    JetState,
    NozzleState,
    Regime,
    SpreadingModel,
    classify_regime,
    froude_number,
    mole_from_mass,
)

TRAJECTORY_COLUMNS = ("s", "s_over_d", "u_cl", "b", "rho_cl", "Y_cl", "X_cl", "theta", "x", "z")


class Orientation(str, enum.Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    source: NozzleState
    orientation: Orientation
    s_end: float
    gas: GasConstants = field(default_factory=GasConstants)
    amb: Ambient = field(default_factory=Ambient)
    spreading: SpreadingModel = field(default_factory=SpreadingModel)
    eval_range: tuple[float, float] = (10.0, 150.0)
    # vessel-side record for under-expanded releases: P0, T0, d_e, throat/notional values
    release: Optional[dict] = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.s_end <= self.source.d:
            raise PhysicsDomainError("s_end must exceed the source diameter")

    @property
    def froude(self) -> float:
        return froude_number(self.source, self.amb)

    @property
    def regime(self) -> Regime:
        return classify_regime(self.froude)

    @property
    def closure(self) -> ClosureParams:
        return ClosureParams.build(self.gas, self.amb, self.spreading, self.source)


@dataclass(frozen=True)
class StepControl:
    h: Optional[float] = None  # defaults to an eighth of the source diameter
    refine: bool = True
    tol: float = 1e-3
    max_halvings: int = 4

    def __post_init__(self):
        if self.h is not None and self.h <= 0:
            raise ValueError("step must be positive")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Centerline solution on a grid of strictly increasing arc length.

    Columns are read-only numpy arrays; ``d`` is the source diameter used for s/d.
    """

    s: np.ndarray
    u_cl: np.ndarray
    b: np.ndarray
    rho_cl: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    z: np.ndarray
    Y_cl: np.ndarray
    X_cl: np.ndarray
    d: float
    h: float
    halving_error: float = float("nan")

    def __post_init__(self):
        for name in ("s", "u_cl", "b", "rho_cl", "theta", "x", "z", "Y_cl", "X_cl"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return len(self.s)

    @property
    def s_over_d(self) -> np.ndarray:
        return self.s / self.d

    @property
    def states(self) -> list[JetState]:
        return [
            JetState(*vals)
            for vals in zip(self.s, self.u_cl, self.b, self.rho_cl, self.theta, self.x, self.z)
        ]

    def hydrogen_flux(self, mass_ratio: float, rho_inf: float) -> np.ndarray:
        """u_cl rho_cl Y_cl b^2 with Y taken from the density deficit before clamping."""
        y = mass_ratio * (rho_inf / self.rho_cl - 1.0)
        return self.u_cl * self.rho_cl * y * self.b**2

    def interpolate(self, column: str, s) -> np.ndarray:
        return np.interp(s, self.s, getattr(self, column))


def initial_state(cfg: ScenarioConfig) -> JetState:
    theta = math.pi / 2 if cfg.orientation is Orientation.VERTICAL else 0.0
    return JetState(s=0.0, u_cl=cfg.source.u, b=cfg.source.d / 2.0, rho_cl=cfg.source.rho, theta=theta)


def vertical_rhs(state: JetState, cfg: ScenarioConfig, params: ClosureParams = None):
    """(du/ds, db/ds, drho/ds) from the vertical system."""
    p = params or cfg.closure
    A, r = vertical_system(state.u_cl, state.b, state.rho_cl, p)
    return tuple(linalg.solve(A, r))


def horizontal_rhs(state: JetState, cfg: ScenarioConfig, params: ClosureParams = None):
    """(du/ds, db/ds, drho/ds, dtheta/ds, dx/ds, dz/ds) from the inclined-jet system."""
    p = params or cfg.closure
    A, r = horizontal_system(state.u_cl, state.b, state.rho_cl, state.theta, p)
    du, db, drho, dtheta = linalg.solve(A, r)
    return du, db, drho, dtheta, math.cos(state.theta), math.sin(state.theta)


def _derivative(vec, vertical: bool, p: ClosureParams):
    u, b, rho, theta = vec[0], vec[1], vec[2], vec[3]
    if u <= 0 or b <= 0 or rho <= 0:
        raise PhysicsDomainError("non-physical intermediate stage state")
    if vertical:
        A, r = vertical_system(u, b, rho, p)
        du, db, drho = linalg.solve(A, r)
        return (du, db, drho, 0.0, 0.0, 1.0)
    A, r = horizontal_system(u, b, rho, theta, p)
    du, db, drho, dth = linalg.solve(A, r)
    return (du, db, drho, dth, math.cos(theta), math.sin(theta))


def _march(cfg: ScenarioConfig, h: float) -> np.ndarray:
    p = cfg.closure
    vertical = cfg.orientation is Orientation.VERTICAL
    s0 = initial_state(cfg)
    y = [s0.u_cl, s0.b, s0.rho_cl, s0.theta, s0.x, s0.z]
    n_steps = int(math.ceil(cfg.s_end / h - 1e-9))
    out = np.empty((n_steps + 1, 7))
    out[0, 0] = 0.0
    out[0, 1:] = y
    s = 0.0
    rho_lim = cfg.amb.rho_inf + 1e-9
    for i in range(1, n_steps + 1):
        step = min(h, cfg.s_end - s)
        k1 = _derivative(y, vertical, p)
        k2 = _derivative([a + 0.5 * step * k for a, k in zip(y, k1)], vertical, p)
        k3 = _derivative([a + 0.5 * step * k for a, k in zip(y, k2)], vertical, p)
        k4 = _derivative([a + step * k for a, k in zip(y, k3)], vertical, p)
        y = [
            a + step / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
            for a, q1, q2, q3, q4 in zip(y, k1, k2, k3, k4)
        ]
        s = i * h if i < n_steps else cfg.s_end
        if y[2] > rho_lim:
            raise PhysicsDomainError(f"centerline density exceeds ambient at s={s:.6g} m")
        JetState(s, y[0], y[1], y[2], y[3], y[4], y[5]).check(cfg.amb)
        out[i, 0] = s
        out[i, 1:] = y
    return out


def _mass_fraction(cfg: ScenarioConfig, rho: np.ndarray) -> np.ndarray:
    return np.clip(cfg.gas.mass_ratio * (cfg.amb.rho_inf / rho - 1.0), 0.0, 1.0)


def _to_trajectory(cfg: ScenarioConfig, table: np.ndarray, h: float, err: float) -> Trajectory:
    rho = table[:, 3]
    y_cl = _mass_fraction(cfg, rho)
    return Trajectory(
        s=table[:, 0].copy(),
        u_cl=table[:, 1].copy(),
        b=table[:, 2].copy(),
        rho_cl=rho.copy(),
        theta=table[:, 4].copy(),
        x=table[:, 5].copy(),
        z=table[:, 6].copy(),
        Y_cl=y_cl,
        X_cl=mole_from_mass(y_cl, cfg.gas),
        d=cfg.source.d,
        h=h,
        halving_error=err,
    )


def integrate(cfg: ScenarioConfig, ctrl: StepControl = StepControl()) -> Trajectory:
    """Fixed-step RK4 march from the source to ``cfg.s_end``.

    With ``ctrl.refine`` the step is halved until the mass fraction on the coarse
    grid agrees with the halved-step solution within ``ctrl.tol`` (relative); the
    finer of the agreeing pair is returned.
    """
    h = ctrl.h if ctrl.h is not None else cfg.source.d / 8.0
    coarse = _march(cfg, h)
    if not ctrl.refine:
        return _to_trajectory(cfg, coarse, h, float("nan"))

    err = float("inf")
    for _ in range(ctrl.max_halvings + 1):
        fine = _march(cfg, h / 2.0)
        y_c = _mass_fraction(cfg, coarse[:, 3])
        y_f = np.interp(coarse[:, 0], fine[:, 0], _mass_fraction(cfg, fine[:, 3]))
        mask = y_c > 0
        err = float(np.max(np.abs(y_f[mask] - y_c[mask]) / y_c[mask]))
        h /= 2.0
        coarse = fine
        if err <= ctrl.tol:
            break
    return _to_trajectory(cfg, coarse, h, err)


@dataclass(frozen=True)
class SensorReadings:
    s: np.ndarray
    Y_cl: np.ndarray
    rho_cl: np.ndarray
    X_cl: np.ndarray
    d: float

    @property
    def s_over_d(self) -> np.ndarray:
        return self.s / self.d

    def __len__(self):
        return len(self.s)

    def subset(self, idx) -> "SensorReadings":
        idx = np.asarray(idx, dtype=int)
        return SensorReadings(self.s[idx], self.Y_cl[idx], self.rho_cl[idx], self.X_cl[idx], self.d)


def stride_indices(total: int, k: int) -> list[int]:
    """Evenly strided selection of ``k`` of ``total`` indices, starting at 0."""
    if k > total:
        raise ValueError(f"cannot select {k} sensors from {total} positions")
    if k < 1:
        raise ValueError("need at least one sensor")
    step = total // k
    return [i * step for i in range(k)]


def sample_sensors(
    traj: Trajectory,
    positions,
    cfg: ScenarioConfig,
    k: Optional[int] = None,
    noise_std: float = 0.0,
    seed: int = 0,
) -> SensorReadings:
    """Read the trajectory at ``positions`` (in s/d) by linear interpolation in s."""
    pos = np.asarray(positions, dtype=float)
    s_max = traj.s[-1] / traj.d
    if np.any(pos < 0) or np.any(pos > s_max * (1 + 1e-12)):
        raise PhysicsDomainError(f"sensor position outside [0, {s_max:.6g}] s/d")
    if k is not None:
        pos = pos[stride_indices(len(pos), k)]
    s = pos * traj.d
    y = np.interp(s, traj.s, traj.Y_cl)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        y = np.clip(y * (1.0 + noise_std * rng.standard_normal(len(y))), 0.0, 1.0)
        rho = cfg.amb.rho_inf / (1.0 + y / cfg.gas.mass_ratio)
    else:
        rho = np.interp(s, traj.s, traj.rho_cl)
    return SensorReadings(s=s, Y_cl=y, rho_cl=rho, X_cl=mole_from_mass(y, cfg.gas), d=traj.d)


def format_trajectory(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRAJECTORY_COLUMNS) + "\n")
    cols = [traj.s, traj.s_over_d, traj.u_cl, traj.b, traj.rho_cl, traj.Y_cl, traj.X_cl,
            traj.theta, traj.x, traj.z]
    for row in zip(*cols):
        buf.write(",".join(f"{v:.10e}" for v in row) + "\n")
    return buf.getvalue()


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_trajectory(traj))
