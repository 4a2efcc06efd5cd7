"""Scenario files, sensor files, per-run reports and the backbone comparison driver.

Scenario files are flat ``key = value`` text with ``#`` comments.  Units live in
the key names (``diameter_mm``, ``pressure_bar``) and everything is converted to
SI on the way in.
"""

from __future__ import annotations

import io
import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from h2jet import __version__, nozzle
from h2jet.errors import PhysicsDomainError, ScenarioParseError, TrainingDivergedError
from h2jet.neural import load_checkpoint, save_checkpoint
from h2jet.oracle import (
    Orientation,
    ScenarioConfig,
    SensorReadings,
    Trajectory,
    integrate,
    sample_sensors,
    stride_indices,
)
from h2jet.physics import Ambient, GasConstants, NozzleState, SpreadingModel, mole_from_mass
from h2jet.training import (
    Problem,
    TrainConfig,
    evaluate_mse,
    predicted_fractions,
    train,
)

log = logging.getLogger(__name__)

SENSOR_HEADER = "s_over_d, mole_frac_pct, mass_frac, rho_cl"
CURVE_HEADER = "s_over_d, Y_pred, Y_oracle, X_pred_pct, u_pred, u_oracle, b_pred, rho_pred, theta_pred"

# key -> (target field, factor to SI)
_UNITS = {
    "diameter_mm": ("d", 1e-3),
    "diameter_m": ("d", 1.0),
    "exit_velocity_m_s": ("u", 1.0),
    "exit_density_kg_m3": ("rho", 1.0),
    "vessel_pressure_bar": ("P0", 1e5),
    "vessel_pressure_pa": ("P0", 1.0),
    "vessel_temperature_k": ("T0", 1.0),
    "ambient_pressure_pa": ("P_inf", 1.0),
    "ambient_temperature_k": ("T_inf", 1.0),
    "ambient_density_kg_m3": ("rho_inf", 1.0),
    "gravity_m_s2": ("g", 1.0),
    "domain_length_over_d": ("s_end_over_d", 1.0),
    "eval_start_over_d": ("eval_lo", 1.0),
    "eval_end_over_d": ("eval_hi", 1.0),
    "spreading_ratio": ("lam", 1.0),
    "momentum_entrainment_coeff": ("beta_A", 1.0),
    "entrainment_cap": ("alpha_cap", 1.0),
}
_TEXT_KEYS = {"name", "orientation", "pressure_reference"}


def _read_pairs(text: str, source: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key in pairs:
            raise ScenarioParseError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_scenario_text(text: str, origin: str = "<scenario>") -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from scenario-file text."""
    pairs = _read_pairs(text, origin)
    vals, words = {}, {}
    for key, value in pairs.items():
        if key in _TEXT_KEYS:
            words[key] = value
        elif key in _UNITS:
            target, factor = _UNITS[key]
            try:
                vals[target] = float(value) * factor
            except ValueError:
                raise ScenarioParseError(f"{origin}: {key} is not a number: {value!r}") from None
        else:
            log.warning("%s: unknown key %r ignored", origin, key)

    orientation = words.get("orientation")
    if orientation is None:
        raise ScenarioParseError("orientation required")
    try:
        orient = Orientation(orientation.lower())
    except ValueError:
        raise ScenarioParseError(f"orientation must be vertical or horizontal, got {orientation!r}") from None
    if "d" not in vals:
        raise ScenarioParseError("nozzle diameter required")

    gas = GasConstants()
    amb_defaults = Ambient()
    amb = Ambient(
        P_inf=vals.get("P_inf", amb_defaults.P_inf),
        T_inf=vals.get("T_inf", amb_defaults.T_inf),
        rho_inf=vals.get("rho_inf", amb_defaults.rho_inf),
        g=vals.get("g", amb_defaults.g),
    )
    spread_defaults = SpreadingModel()
    spreading = SpreadingModel(
        lam=vals.get("lam", spread_defaults.lam),
        beta_A=vals.get("beta_A", spread_defaults.beta_A),
        alpha_cap=vals.get("alpha_cap", spread_defaults.alpha_cap),
    )
    amb.check(gas)
    release = None
    notes = []
    if "P0" in vals:
        P0 = vals["P0"]
        if words.get("pressure_reference", "absolute").lower() == "gauge":
            P0 += amb.P_inf
        T0 = vals.get("T0", amb.T_inf)
        throat, exit_ = nozzle.expand(P0, T0, vals["d"], amb, gas)
        source = exit_.as_nozzle(amb.T_inf)
        release = {"P0": P0, "T0": T0, "d_e": vals["d"], "throat": asdict(throat),
                   "notional": asdict(exit_)}
        notes.append(f"under-expanded release: notional source d={source.d:.6g} m, "
                     f"u={source.u:.6g} m/s, rho={source.rho:.6g} kg/m3")
    elif "u" in vals and "rho" in vals:
        source = NozzleState(d=vals["d"], u=vals["u"], rho=vals["rho"],
                             P=amb.P_inf, T=amb.T_inf)
    else:
        missing = "exit velocity" if "u" not in vals else "exit density"
        raise ScenarioParseError(f"{missing} or vessel pressure required")

    lo = vals.get("eval_lo", 10.0)
    hi = vals.get("eval_hi", 150.0)
    if not 0 <= lo < hi:
        raise ScenarioParseError("evaluation range must satisfy 0 <= start < end")
    s_end = vals.get("s_end_over_d", hi) * source.d
    cfg = ScenarioConfig(
        name=words.get("name", "scenario"),
        source=source,
        orientation=orient,
        s_end=s_end,
        gas=gas,
        amb=amb,
        spreading=spreading,
        eval_range=(lo, hi),
        release=release,
        notes=tuple(notes),
    )
    if hi * cfg.source.d > cfg.s_end * (1 + 1e-12):
        raise ScenarioParseError("evaluation range extends past the integration domain")
    log.info("%s: Fr_den = %.6g, regime %s", cfg.name, cfg.froude, cfg.regime.value)
    return cfg


def parse_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc}") from exc
    cfg = parse_scenario_text(text, str(path))
    if "name" not in _read_pairs(text, str(path)):
        cfg = replace(cfg, name=path.stem)
    return cfg


def scenario_summary(cfg: ScenarioConfig) -> dict:
    """JSON-ready echo of a parsed scenario (SI units)."""
    out = {
        "name": cfg.name,
        "orientation": cfg.orientation.value,
        "source": asdict(cfg.source),
        "s_end_m": cfg.s_end,
        "eval_range_s_over_d": list(cfg.eval_range),
        "froude": cfg.froude,
        "regime": cfg.regime.value,
        "ambient": asdict(cfg.amb),
    }
    if cfg.release is not None:
        out["release"] = cfg.release
    return out


# sensor and evaluation files

def evaluation_positions(cfg: ScenarioConfig, total: int = 20) -> np.ndarray:
    if total < 1:
        raise ValueError("need at least one evaluation position")
    return np.linspace(cfg.eval_range[0], cfg.eval_range[1], total)


def format_readings(readings: SensorReadings) -> str:
    buf = io.StringIO()
    buf.write(SENSOR_HEADER + "\n")
    for row in zip(readings.s_over_d, 100.0 * readings.X_cl, readings.Y_cl, readings.rho_cl):
        buf.write(",".join(f"{v:.10e}" for v in row) + "\n")
    return buf.getvalue()


def write_readings(readings: SensorReadings, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_readings(readings))


def read_readings(path, cfg: ScenarioConfig) -> SensorReadings:
    """Load a sensor/evaluation file; positions are in units of the source diameter."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    header = [h.strip() for h in lines[0].split(",")] if lines else []
    expected = [h.strip() for h in SENSOR_HEADER.split(",")]
    if header != expected:
        raise ScenarioParseError(f"{path}: header must be {SENSOR_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise ScenarioParseError(f"{path}:{lineno}: malformed number") from None
        if len(rows[-1]) != 4:
            raise ScenarioParseError(f"{path}:{lineno}: expected 4 columns")
    if not rows:
        raise ScenarioParseError(f"{path}: no readings")
    data = np.array(rows)
    d = cfg.source.d
    return SensorReadings(s=data[:, 0] * d, Y_cl=data[:, 2], rho_cl=data[:, 3],
                          X_cl=data[:, 1] / 100.0, d=d)


def gen_sensors(cfg: ScenarioConfig, k: int = 5, total: int = 20, noise: float = 0.0,
                seed: int = 0, out_dir=None, traj: Optional[Trajectory] = None):
    """Oracle-sampled evaluation set and its strided sensor subset.

    Returns (sensors, evaluation); with ``out_dir`` both are also written as
    ``<name>_sensors.csv`` and ``<name>_eval.csv``.
    """
    if k > total:
        raise ValueError(f"cannot select {k} sensors from {total} positions")
    traj = traj if traj is not None else integrate(cfg)
    pos = evaluation_positions(cfg, total)
    evaluation = sample_sensors(traj, pos, cfg)
    sensors = sample_sensors(traj, pos[stride_indices(total, k)], cfg, noise_std=noise, seed=seed)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_readings(sensors, out_dir / f"{cfg.name}_sensors.csv")
        write_readings(evaluation, out_dir / f"{cfg.name}_eval.csv")
    return sensors, evaluation


# training runs

def format_curve(prob: Problem, arrays: dict, traj: Trajectory) -> str:
    pred = prob.predict(arrays)
    y, x = predicted_fractions(pred, prob.scenario)
    sc = prob.scales
    s = prob.nodes
    cols = [
        s / sc.L_ref,
        y,
        np.interp(s, traj.s, traj.Y_cl),
        100.0 * x,
        pred.u * sc.u_ref,
        np.interp(s, traj.s, traj.u_cl),
        pred.b * sc.L_ref,
        pred.rho * sc.rho_ref,
        pred.theta,
    ]
    buf = io.StringIO()
    buf.write(CURVE_HEADER + "\n")
    for row in zip(*cols):
        buf.write(",".join(f"{v:.10e}" for v in row) + "\n")
    return buf.getvalue()


@dataclass
class RunResult:
    scenario: str
    backbone: str
    seed: int
    status: str = "ok"
    mse_mole_pct2: float = float("nan")
    mse_mass_frac2: float = float("nan")
    train_seconds: float = float("nan")
    inference_seconds: float = float("nan")
    final_loss: Optional[dict] = None
    error: Optional[str] = None

    def metrics(self) -> dict:
        """Deterministic part of the record (no wall-clock timings)."""
        out = {"scenario": self.scenario, "backbone": self.backbone, "seed": self.seed,
               "status": self.status}
        if self.status == "ok":
            out.update(mse_mole_pct2=self.mse_mole_pct2, mse_mass_frac2=self.mse_mass_frac2,
                       final_loss=self.final_loss)
        else:
            out["error"] = self.error
        return out

    def timings(self) -> dict:
        return {"scenario": self.scenario, "backbone": self.backbone, "seed": self.seed,
                "train_seconds": self.train_seconds, "inference_seconds": self.inference_seconds}


def _dump_json(obj, path) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def run_training(cfg: ScenarioConfig, tcfg: TrainConfig, sensors: SensorReadings,
                 evaluation: SensorReadings, out_dir=None, traj: Optional[Trajectory] = None,
                 tag: Optional[str] = None) -> RunResult:
    """Train one backbone/seed, score it on ``evaluation`` and optionally write artifacts.

    Artifacts in ``out_dir``: checkpoint (``.npz``), run report (``.json``) and
    centerline curve (``_curve.csv``), all prefixed by ``tag``.
    """
    traj = traj if traj is not None else integrate(cfg)
    tag = tag or f"{cfg.name}_{tcfg.backbone}_seed{tcfg.seed}"
    res = RunResult(cfg.name, tcfg.backbone, tcfg.seed)
    try:
        params, report, prob = train(tcfg, cfg, sensors, eval_s=evaluation.s)
    except TrainingDivergedError as exc:
        res.status, res.error = "diverged", str(exc)
        log.error("%s: %s", tag, exc)
        return res
    mole, mass, seconds = evaluate_mse(params, prob, evaluation)
    res.mse_mole_pct2, res.mse_mass_frac2 = mole, mass
    res.train_seconds, res.inference_seconds = report.train_seconds, seconds
    res.final_loss = report.final.as_dict()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params, out_dir / f"{tag}.npz")
        record = {
            "version": __version__,
            "scenario": scenario_summary(cfg),
            "train_config": asdict(tcfg),
            "loss_history_every_10": report.loss_history[::10].tolist(),
            "initial_loss": report.initial_loss,
            "final_loss": res.final_loss,
            "mse_mole_pct2": mole,
            "mse_mass_frac2": mass,
        }
        _dump_json(record, out_dir / f"{tag}.json")
        _dump_json(res.timings(), out_dir / f"{tag}_timing.json")
        with open(out_dir / f"{tag}_curve.csv", "w", newline="") as fh:
            fh.write(format_curve(prob, params.arrays, traj))
    return res


def evaluate_checkpoint(cfg: ScenarioConfig, checkpoint, sensors: SensorReadings,
                        evaluation: SensorReadings, tcfg: Optional[TrainConfig] = None):
    """Rebuild the graph for a saved model and score it; returns (mole, mass, problem, arrays)."""
    params = load_checkpoint(checkpoint)
    base = tcfg or TrainConfig()
    tcfg = replace(base, backbone=params.kind, width=params.width, depth=params.depth,
                   seed=params.seed, two_matrix=params.two_matrix,
                   aggregation=params.aggregation)
    prob = Problem(tcfg, cfg, sensors, eval_s=evaluation.s)
    if prob.params0.n_features != params.n_features:
        raise ScenarioParseError("checkpoint features do not match the training configuration")
    mole, mass, _ = evaluate_mse(params, prob, evaluation)
    return mole, mass, prob, params.arrays


# comparison driver

@dataclass
class RunManifest:
    subcommand: str
    scenarios: Sequence[str]
    sensors: Optional[str] = None
    evaluation: Optional[str] = None
    out: str = "runs"
    seeds: Sequence[int] = (0,)
    backbones: Sequence[str] = ("graph", "dense")

    def validate(self) -> None:
        if not self.seeds:
            raise ScenarioParseError("at least one seed required")
        if not self.scenarios:
            raise ScenarioParseError("at least one scenario required")
        for p in [*self.scenarios, self.sensors, self.evaluation]:
            if p is not None and not Path(p).exists():
                raise ScenarioParseError(f"file not found: {p}")
        if (self.sensors or self.evaluation) and len(self.scenarios) > 1:
            raise ScenarioParseError("sensor/evaluation files apply to a single scenario")
        for b in self.backbones:
            if b not in ("graph", "dense"):
                raise ScenarioParseError(f"unknown backbone {b!r}")


@dataclass
class ComparisonReport:
    cells: list = field(default_factory=list)
    medians: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    oracle_seconds: dict = field(default_factory=dict)

    def failed_cells(self) -> list:
        """(scenario, backbone) pairs where every seed failed."""
        groups = {}
        for c in self.cells:
            groups.setdefault((c.scenario, c.backbone), []).append(c.status == "ok")
        return [k for k, ok in groups.items() if not any(ok)]

    def as_dict(self) -> dict:
        return {"version": __version__, "config": self.config,
                "cells": [c.metrics() for c in self.cells], "medians": self.medians}

    def timing_dict(self) -> dict:
        return {"cells": [c.timings() for c in self.cells], "oracle_seconds": self.oracle_seconds}


def _medians(cells) -> dict:
    out = {}
    for c in cells:
        if c.status != "ok":
            continue
        entry = out.setdefault(c.scenario, {}).setdefault(c.backbone, {"mole": [], "mass": []})
        entry["mole"].append(c.mse_mole_pct2)
        entry["mass"].append(c.mse_mass_frac2)
    return {
        scen: {bb: {"mse_mole_pct2": statistics.median(v["mole"]),
                    "mse_mass_frac2": statistics.median(v["mass"]),
                    "n_ok": len(v["mole"])}
               for bb, v in sorted(by_bb.items())}
        for scen, by_bb in sorted(out.items())
    }


def run_compare(manifest: RunManifest, tcfg: TrainConfig = TrainConfig(),
                k: int = 5, total: int = 20) -> ComparisonReport:
    """Every scenario x backbone x seed: train, evaluate, write artifacts and the report.

    ``report.json`` holds only seed-determined content so reruns are byte-identical;
    wall-clock numbers go to ``timing.json``.
    """
    import time

    manifest.validate()
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    report = ComparisonReport(config={
        "scenarios": [str(s) for s in manifest.scenarios],
        "sensors": manifest.sensors,
        "evaluation": manifest.evaluation,
        "seeds": list(manifest.seeds),
        "backbones": list(manifest.backbones),
        "train_config": {k_: v for k_, v in asdict(tcfg).items() if k_ not in ("seed", "backbone")},
        "sensors_per_scenario": k,
        "evaluation_points": total,
    })
    for path in manifest.scenarios:
        cfg = parse_scenario(path)
        t0 = time.perf_counter()
        traj = integrate(cfg)
        report.oracle_seconds[cfg.name] = time.perf_counter() - t0
        sensors, evaluation = gen_sensors(cfg, k, total, traj=traj)
        if manifest.sensors:
            sensors = read_readings(manifest.sensors, cfg)
        if manifest.evaluation:
            evaluation = read_readings(manifest.evaluation, cfg)
        write_readings(sensors, out / f"{cfg.name}_sensors.csv")
        write_readings(evaluation, out / f"{cfg.name}_eval.csv")
        for backbone in manifest.backbones:
            for seed in manifest.seeds:
                run_cfg = replace(tcfg, backbone=backbone, seed=seed)
                res = run_training(cfg, run_cfg, sensors, evaluation, out_dir=out, traj=traj)
                log.info("%s %s seed %d: %s mole-%%^2 = %.4g", cfg.name, backbone, seed,
                         res.status, res.mse_mole_pct2)
                report.cells.append(res)
    report.medians = _medians(report.cells)
    _dump_json(report.as_dict(), out / "report.json")
    _dump_json(report.timing_dict(), out / "timing.json")
    return report
