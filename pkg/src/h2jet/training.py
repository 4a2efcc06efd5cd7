"""Physics-residual and regression losses, Adam, and the full-batch training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from h2jet import autodiff as ad
from h2jet.equations import ClosureParams, horizontal_system, vertical_system
from h2jet.errors import PhysicsDomainError, TrainingDivergedError
from h2jet.neural import (
    FieldPrediction,
    HeadScales,
    ModelParams,
    NodeFeatures,
    build_chain_graph,
    build_model,
    init_params,
)
from h2jet.oracle import Orientation, ScenarioConfig, SensorReadings, StepControl, integrate
from h2jet.physics import mole_from_mass

log = logging.getLogger(__name__)

VERTICAL_EQUATIONS = ("continuity", "momentum", "species")
HORIZONTAL_EQUATIONS = ("continuity", "x_momentum", "z_momentum", "species")


@dataclass(frozen=True)
class Scales:
    u_ref: float
    L_ref: float
    rho_ref: float

    def __post_init__(self):
        if min(self.u_ref, self.L_ref, self.rho_ref) <= 0:
            raise PhysicsDomainError("reference scales must be strictly positive")

    def to_nd(self, u, b, rho, s=0.0):
        return u / self.u_ref, b / self.L_ref, rho / self.rho_ref, s / self.L_ref

    def to_physical(self, u, b, rho, s=0.0):
        return u * self.u_ref, b * self.L_ref, rho * self.rho_ref, s * self.L_ref


def nondimensionalize(cfg: ScenarioConfig) -> Scales:
    return Scales(u_ref=cfg.source.u, L_ref=cfg.source.d, rho_ref=cfg.amb.rho_inf)


def nondimensional_closure(cfg: ScenarioConfig, scales: Scales) -> ClosureParams:
    return cfg.closure.nondimensional(scales.u_ref, scales.L_ref, scales.rho_ref)


@dataclass(frozen=True)
class CoordinateMap:
    """Network coordinate in [0, 1]: linear in s, or logarithmic in 1 + s/L."""

    kind: str
    s_end: float
    L: float

    def __post_init__(self):
        if self.kind not in ("linear", "log"):
            raise ValueError(f"unknown coordinate map {self.kind!r}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return s / self.s_end
        return np.log1p(s / self.L) / math.log1p(self.s_end / self.L)

    def slope(self, s):
        """d s_hat / d(s / L)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.full_like(s, self.L / self.s_end)
        return 1.0 / ((1.0 + s / self.L) * math.log1p(self.s_end / self.L))


# floor on the density deficit in the species divisor, in units of rho_inf
DEFICIT_FLOOR = 1e-3


def row_scales(u, b, rho, p: ClosureParams, vertical: bool, xp=np):
    """Positive per-row divisors.

    Mass and momentum rows are divided by u*b and u^2*b. The species row equals
    c * d(u b^2 (rho_inf - rho))/ds, so it is divided by c*u*b^2*|rho_inf - rho|
    (smoothed near zero) and becomes a relative hydrogen-flux defect.
    """
    ub = u * b
    uub = u * ub
    deficit = p.rho_inf - rho
    floor = DEFICIT_FLOOR * p.rho_inf
    species = p.mass_ratio * ub * b * xp.sqrt(deficit * deficit + floor * floor)
    return (ub, uub, species) if vertical else (ub, uub, uub, species)


def residual_rows(u, b, rho, theta, du, db, drho, dtheta, p: ClosureParams, vertical: bool,
                  xp=np, scaled: bool = False):
    """Defects A(y) y' - r(y) per governing equation (same assembly as the oracle).

    With ``scaled`` each row is divided by a positive state-dependent factor
    (:func:`row_scales`), which keeps the zero set for physical states but removes
    the b -> 0 / u -> 0 trivial zero.
    """
    if vertical:
        A, r = vertical_system(u, b, rho, p, xp)
        dy = (du, db, drho)
    else:
        A, r = horizontal_system(u, b, rho, theta, p, xp)
        dy = (du, db, drho, dtheta)
    out = []
    divisors = row_scales(u, b, rho, p, vertical, xp) if scaled else (None,) * len(A)
    for row, rhs, div in zip(A, r, divisors):
        acc = row[0] * dy[0]
        for coef, d in zip(row[1:], dy[1:]):
            acc = acc + coef * d
        acc = acc - rhs
        out.append(acc if div is None else acc / div)
    return out


def physics_residuals(pred: FieldPrediction, slope, cfg: ScenarioConfig, scales: Scales,
                      scaled: bool = False) -> np.ndarray:
    """(n nodes x equations) residual matrix for numeric predictions.

    ``pred`` derivatives are with respect to the network coordinate; ``slope`` is
    d s_hat / d(s/L) at each node.
    """
    p = nondimensional_closure(cfg, scales)
    slope = np.asarray(slope, dtype=float)
    rows = residual_rows(
        pred.u, pred.b, pred.rho, pred.theta,
        pred.d_u * slope, pred.d_b * slope, pred.d_rho * slope, pred.d_theta * slope,
        p, cfg.orientation is Orientation.VERTICAL, scaled=scaled,
    )
    res = np.column_stack(rows)
    bad = ~np.all(np.isfinite(res), axis=1)
    if np.any(bad):
        raise PhysicsDomainError(f"non-finite residual at node {int(np.flatnonzero(bad)[0])}")
    return res


def regression_loss(rho_pred, rho_obs, sensor_idx, u_pred, anchors) -> float:
    """Sensor density misfit plus initial/boundary velocity anchors (nondimensional).

    ``anchors`` is (u0, uB); either entry may be ``None`` to drop that term.
    """
    idx = np.asarray(sensor_idx, dtype=int)
    if len(idx) == 0:
        raise ValueError("no sensors")
    total = float(np.mean((np.asarray(rho_pred)[idx] - np.asarray(rho_obs)) ** 2))
    u0, uB = anchors
    if u0 is not None:
        total += float((u_pred[0] - u0) ** 2)
    if uB is not None:
        total += float((u_pred[-1] - uB) ** 2)
    return total


@dataclass
class LossBreakdown:
    physics: dict
    sensor: float
    initial_velocity: float
    boundary_velocity: float
    L_phy: float
    L_re: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


def total_loss(phy: np.ndarray, re_terms, w_phy: float = 1.0, w_re: float = 1.0,
               names: Sequence[str] = None) -> LossBreakdown:
    """Combine a residual matrix and regression terms (sensor, u0, uB) into one breakdown."""
    phy = np.asarray(phy, dtype=float)
    n = phy.shape[0]
    per_eq = (phy**2).sum(axis=0) / n if n else np.zeros(phy.shape[1])
    names = names or [f"eq{j}" for j in range(phy.shape[1])]
    sensor, u0, uB = (float(t) for t in re_terms)
    L_phy = w_phy * float(per_eq.sum())
    L_re = sensor + u0 + uB
    return LossBreakdown(
        physics={k: w_phy * float(v) for k, v in zip(names, per_eq)},
        sensor=sensor,
        initial_velocity=u0,
        boundary_velocity=uB,
        L_phy=L_phy,
        L_re=L_re,
        total=L_phy + w_re * L_re,
    )


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new (params, state) without mutating inputs."""
    missing = params.keys() - grads.keys()
    if missing:
        raise ValueError(f"gradients missing for {sorted(missing)}")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for {k}")
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m.get(k, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, 0.0) + (1.0 - beta2) * (g * g)
        new_p[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


@dataclass
class TrainConfig:
    epochs: int = 10_000
    width: int = 30
    depth: int = 3
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    w_phy: float = 1.0
    w_re: float = 1.0
    seed: int = 0
    backbone: str = "graph"
    k_neighbors: int = 1
    n_collocation: int = 100
    coordinate_map: str = "log"
    coordinate_only: bool = False
    sensor_flag: bool = False
    two_matrix: bool = False
    aggregation: str = "mean"
    derivative_mode: str = "autodiff"  # or "neighbor_fd"
    scaled_residuals: bool = False
    boundary_anchor: str = "oracle"  # "oracle", "none", or a number in m/s

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.backbone not in ("graph", "dense"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.derivative_mode not in ("autodiff", "neighbor_fd"):
            raise ValueError(f"unknown derivative mode {self.derivative_mode!r}")


@dataclass
class TrainReport:
    loss_history: np.ndarray
    final: LossBreakdown
    initial_loss: float
    train_seconds: float
    inference_seconds: float = float("nan")
    mse_mole_pct2: float = float("nan")
    mse_mass_frac2: float = float("nan")


def _merge_positions(groups, tol):
    allpos = np.sort(np.concatenate([np.asarray(g, dtype=float) for g in groups]))
    keep = [allpos[0]]
    for p in allpos[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    return np.array(keep)


def _nearest(nodes, s):
    return np.abs(nodes[None, :] - np.asarray(s, dtype=float)[:, None]).argmin(axis=1)


def _neighbor_difference_matrix(s_hat: np.ndarray) -> np.ndarray:
    n = len(s_hat)
    D = np.zeros((n, n))
    D[0, 0], D[0, 1] = -1.0, 1.0
    D[0] /= s_hat[1] - s_hat[0]
    D[-1, -2], D[-1, -1] = -1.0, 1.0
    D[-1] /= s_hat[-1] - s_hat[-2]
    for i in range(1, n - 1):
        h = s_hat[i + 1] - s_hat[i - 1]
        D[i, i - 1], D[i, i + 1] = -1.0 / h, 1.0 / h
    return D


class Problem:
    """Everything fixed for one training run: nodes, features, and the loss graph."""

    def __init__(self, tcfg: TrainConfig, scenario: ScenarioConfig, sensors: SensorReadings,
                 eval_s: Optional[np.ndarray] = None, u_boundary: Optional[float] = None):
        if len(sensors) == 0:
            raise ValueError("no sensors")
        self.tcfg, self.scenario, self.sensors = tcfg, scenario, sensors
        self.scales = nondimensionalize(scenario)
        self.vertical = scenario.orientation is Orientation.VERTICAL
        self.equations = VERTICAL_EQUATIONS if self.vertical else HORIZONTAL_EQUATIONS
        s_end = scenario.s_end
        colloc = np.linspace(0.0, s_end, tcfg.n_collocation)
        eval_s = np.asarray([] if eval_s is None else eval_s, dtype=float)
        if np.any(eval_s < 0) or np.any(eval_s > s_end * (1 + 1e-12)):
            raise PhysicsDomainError("evaluation point outside the trained domain")
        self.nodes = _merge_positions([colloc, sensors.s, eval_s], tol=1e-9 * s_end)
        self.sensor_idx = _nearest(self.nodes, sensors.s)
        self.eval_idx = _nearest(self.nodes, eval_s) if len(eval_s) else np.array([], int)
        mask = np.zeros(len(self.nodes), bool)
        mask[self.sensor_idx] = True

        self.cmap = CoordinateMap(tcfg.coordinate_map, s_end, self.scales.L_ref)
        s_hat = self.cmap(self.nodes)
        self.slope = self.cmap.slope(self.nodes)
        self.rho_obs = np.asarray(sensors.rho_cl) / self.scales.rho_ref
        order = np.argsort(s_hat[self.sensor_idx])
        rho_feat = np.interp(s_hat, s_hat[self.sensor_idx][order], self.rho_obs[order])
        feats = NodeFeatures(s_hat, rho_feat, mask, coordinate_only=tcfg.coordinate_only,
                             sensor_flag=tcfg.sensor_flag)
        self.graph = build_chain_graph(self.nodes, tcfg.k_neighbors, mask)
        self.features = feats if tcfg.backbone == "graph" else feats.coordinate()
        self.heads = HeadScales(u=1.0, b=0.1 * s_end / self.scales.L_ref, rho=1.0,
                                vertical=self.vertical)

        self.u0 = 1.0
        anchor = tcfg.boundary_anchor
        if u_boundary is not None:
            self.uB = u_boundary / self.scales.u_ref
        elif anchor == "none":
            self.uB = None
        elif anchor == "oracle":
            traj = integrate(scenario, StepControl(refine=False))
            self.uB = float(traj.u_cl[-1]) / self.scales.u_ref
        else:
            self.uB = float(anchor) / self.scales.u_ref

        self.params0 = init_params(tcfg.seed, tcfg.width, tcfg.depth, tcfg.backbone,
                                   n_features=self.features.n_features,
                                   two_matrix=tcfg.two_matrix, aggregation=tcfg.aggregation)
        self._build_graph()

    def _build_graph(self):
        adjacency = self.graph.adjacency if self.tcfg.backbone == "graph" else None
        model = build_model(self.params0, adjacency, self.features.matrix, self.heads)
        self.model = model
        vals = model.values
        if self.tcfg.derivative_mode == "neighbor_fd":
            ders = ad.constant(_neighbor_difference_matrix(self.features.s_hat)) @ vals
        else:
            ders = model.derivs
        cols = [ad.take(vals, (slice(None), j)) for j in range(4)]
        slope = ad.constant(self.slope)
        dcols = [ad.take(ders, (slice(None), j)) * slope for j in range(4)]
        p = nondimensional_closure(self.scenario, self.scales)
        rows = residual_rows(*cols, *dcols, p, self.vertical, xp=ad,
                             scaled=self.tcfg.scaled_residuals)
        n = len(self.nodes)
        self.phy_terms = [ad.sum(r * r) / n for r in rows]
        L_phy = self.phy_terms[0]
        for t in self.phy_terms[1:]:
            L_phy = L_phy + t
        rho = cols[2]
        u = cols[0]
        self.sensor_term = ad.mean((ad.take(rho, self.sensor_idx) - self.rho_obs) ** 2)
        self.u0_term = (ad.take(u, 0) - self.u0) ** 2
        L_re = self.sensor_term + self.u0_term
        if self.uB is not None:
            self.uB_term = (ad.take(u, n - 1) - self.uB) ** 2
            L_re = L_re + self.uB_term
        else:
            self.uB_term = None
        self.loss = self.tcfg.w_phy * L_phy + self.tcfg.w_re * L_re
        self.derivs = ders

    def evaluate(self, arrays: dict) -> float:
        return float(ad.forward(self.loss, arrays))

    def gradient(self, arrays: dict):
        value = ad.forward(self.loss, arrays)
        return float(value), ad.backward(self.loss, list(arrays))

    def breakdown(self) -> LossBreakdown:
        """Breakdown of the most recent forward pass."""
        w = self.tcfg.w_phy
        phy = {k: w * float(t.value) for k, t in zip(self.equations, self.phy_terms)}
        uB = float(self.uB_term.value) if self.uB_term is not None else 0.0
        sensor, u0 = float(self.sensor_term.value), float(self.u0_term.value)
        L_phy = float(sum(phy.values()))
        L_re = sensor + u0 + uB
        return LossBreakdown(phy, sensor, u0, uB, L_phy, L_re, L_phy + self.tcfg.w_re * L_re)

    def predict(self, arrays: dict) -> FieldPrediction:
        ad.forward(self.model.values, arrays)
        ad.forward(self.derivs, arrays)
        return FieldPrediction.from_arrays(np.asarray(self.model.values.value),
                                           np.asarray(self.derivs.value))


def train(tcfg: TrainConfig, scenario: ScenarioConfig, sensors: SensorReadings,
          eval_s: Optional[np.ndarray] = None, u_boundary: Optional[float] = None):
    """Full-batch Adam on physics + regression loss; returns (params, report, problem)."""
    t_start = time.perf_counter()
    prob = Problem(tcfg, scenario, sensors, eval_s, u_boundary)
    arrays = {k: v.copy() for k, v in prob.params0.arrays.items()}
    state = AdamState()
    history = np.empty(tcfg.epochs)
    initial = None
    over = 0
    for epoch in range(tcfg.epochs):
        try:
            value, grads = prob.gradient(arrays)
        except ad.AutodiffError as exc:
            raise TrainingDivergedError(f"training diverged at epoch {epoch}: {exc}") from exc
        if initial is None:
            initial = value
        history[epoch] = value
        over = over + 1 if value > 1e6 * initial else 0
        if over >= 100:
            raise TrainingDivergedError("training diverged")
        arrays, state = adam_step(arrays, grads, state, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
    prob.evaluate(arrays)
    final = prob.breakdown()
    train_seconds = time.perf_counter() - t_start
    params = prob.params0.copy()
    params.arrays = arrays
    report = TrainReport(history, final, initial, train_seconds)
    if final.total > initial:
        log.warning("final loss %.3e above initial %.3e", final.total, initial)
    return params, report, prob


def predicted_fractions(pred: FieldPrediction, scenario: ScenarioConfig):
    """Mass and mole fractions from predicted nondimensional density, clipped to [0, 1]."""
    y = scenario.gas.mass_ratio * (1.0 / pred.rho - 1.0)
    y = np.clip(y, 0.0, 1.0)
    return y, mole_from_mass(y, scenario.gas)


def mse_pair(y_pred, y_ref, gas) -> tuple[float, float]:
    y_pred, y_ref = np.asarray(y_pred, float), np.asarray(y_ref, float)
    x_pred = 100.0 * mole_from_mass(y_pred, gas)
    x_ref = 100.0 * mole_from_mass(y_ref, gas)
    return float(np.mean((x_pred - x_ref) ** 2)), float(np.mean((y_pred - y_ref) ** 2))


def evaluate_mse(params: ModelParams, prob: Problem, reference: SensorReadings):
    """MSE at the evaluation nodes in (mole-%^2, mass-fraction^2); also returns inference time."""
    if len(prob.eval_idx) != len(reference):
        raise ValueError("evaluation points were not part of the training graph")
    t0 = time.perf_counter()
    pred = prob.predict(params.arrays)
    y, _ = predicted_fractions(pred, prob.scenario)
    seconds = time.perf_counter() - t0
    mole, mass = mse_pair(y[prob.eval_idx], reference.Y_cl, prob.scenario.gas)
    return mole, mass, seconds
