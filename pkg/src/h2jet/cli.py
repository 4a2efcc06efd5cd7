"""Command-line entry point: ``h2jet <subcommand> ...``.

Exit codes: 0 success, 2 scenario/config parse error, 3 physics-domain error,
4 training divergence, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

from h2jet import __version__, harness, nozzle
from h2jet.errors import H2JetError, ScenarioParseError
from h2jet.oracle import integrate, write_trajectory
from h2jet.physics import Ambient, GasConstants
from h2jet.training import TrainConfig

log = logging.getLogger("h2jet")

SHIPPED = ("subsonic_vertical", "underexpanded_vertical", "underexpanded_horizontal")


def shipped_scenario(name: str) -> Path:
    return Path(str(resources.files("h2jet") / "scenarios" / f"{name}.txt"))


def _resolve_scenario(value: str) -> str:
    """Accept a path or the name of a shipped scenario."""
    if Path(value).exists() or value not in SHIPPED:
        return value
    return str(shipped_scenario(value))


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--width", type=int, default=defaults.width)
    p.add_argument("--depth", type=int, default=defaults.depth)
    p.add_argument("--k-neighbors", type=int, default=defaults.k_neighbors)
    p.add_argument("--w-phy", type=float, default=defaults.w_phy)
    p.add_argument("--w-re", type=float, default=defaults.w_re)
    p.add_argument("--lr", type=float, default=defaults.lr)


def _train_config(args, **overrides) -> TrainConfig:
    return replace(
        TrainConfig(),
        epochs=args.epochs,
        width=args.width,
        depth=args.depth,
        k_neighbors=args.k_neighbors,
        w_phy=args.w_phy,
        w_re=args.w_re,
        lr=args.lr,
        **overrides,
    )


def _readings(args, cfg):
    """Sensor/evaluation sets from files when given, otherwise sampled from the oracle."""
    sensors, evaluation = harness.gen_sensors(cfg)
    if args.sensors:
        sensors = harness.read_readings(args.sensors, cfg)
    if args.eval:
        evaluation = harness.read_readings(args.eval, cfg)
    return sensors, evaluation


def cmd_oracle(args) -> int:
    cfg = harness.parse_scenario(_resolve_scenario(args.scenario))
    traj = integrate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(traj, out / f"{cfg.name}_trajectory.csv")
    flux = traj.hydrogen_flux(cfg.gas.mass_ratio, cfg.amb.rho_inf)
    summary = harness.scenario_summary(cfg)
    summary.update(n_steps=len(traj) - 1, step_m=traj.h,
                   flux_drift=float(abs(flux - flux[0]).max() / abs(flux[0])))
    _print_json(summary)
    return 0


def cmd_nozzle(args) -> int:
    amb, gas = Ambient(), GasConstants()
    P0 = args.pressure_bar * 1e5 + (amb.P_inf if args.gauge else 0.0)
    throat, exit_ = nozzle.expand(P0, args.temperature_k, args.diameter_mm * 1e-3, amb, gas)
    _print_json({"P0": P0, "T0": args.temperature_k, "throat": asdict(throat),
                 "notional": asdict(exit_)})
    return 0


def cmd_gen_sensors(args) -> int:
    cfg = harness.parse_scenario(_resolve_scenario(args.scenario))
    try:
        harness.gen_sensors(cfg, k=args.k, total=args.total, noise=args.noise,
                            seed=args.seed[0] if args.seed else 0, out_dir=args.out)
    except ValueError as exc:
        raise ScenarioParseError(str(exc)) from exc
    print(f"wrote {cfg.name}_sensors.csv and {cfg.name}_eval.csv to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = harness.parse_scenario(_resolve_scenario(args.scenario))
    if args.backbone == "both":
        raise ScenarioParseError("train takes a single backbone; use compare for both")
    sensors, evaluation = _readings(args, cfg)
    traj = integrate(cfg)
    status = 0
    for seed in args.seed or [0]:
        tcfg = _train_config(args, backbone=args.backbone, seed=seed)
        res = harness.run_training(cfg, tcfg, sensors, evaluation, out_dir=args.out, traj=traj)
        _print_json(res.metrics())
        if res.status != "ok":
            status = 4
    return status


def cmd_eval(args) -> int:
    cfg = harness.parse_scenario(_resolve_scenario(args.scenario))
    sensors, evaluation = _readings(args, cfg)
    tcfg = _train_config(args)
    mole, mass, prob, arrays = harness.evaluate_checkpoint(cfg, args.checkpoint, sensors,
                                                           evaluation, tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.checkpoint).stem
    with open(out / f"{stem}_eval_curve.csv", "w", newline="") as fh:
        fh.write(harness.format_curve(prob, arrays, integrate(cfg)))
    _print_json({"checkpoint": str(args.checkpoint), "mse_mole_pct2": mole, "mse_mass_frac2": mass})
    return 0


def cmd_compare(args) -> int:
    scenarios = [_resolve_scenario(s) for s in (args.scenario or SHIPPED)]
    backbones = ("graph", "dense") if args.backbone == "both" else (args.backbone,)
    manifest = harness.RunManifest("compare", scenarios, args.sensors, args.eval, args.out,
                                   tuple(args.seed or [0, 1, 2]), backbones)
    report = harness.run_compare(manifest, _train_config(args))
    _print_json(report.medians)
    failed = report.failed_cells()
    if failed:
        log.error("every seed failed for %s", failed)
        return 4
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2jet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="integrate the centerline ODEs and write the trajectory")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("nozzle", help="choked-throat and notional-exit states for a vessel release")
    p.add_argument("--pressure-bar", type=float, required=True)
    p.add_argument("--temperature-k", type=float, default=293.0)
    p.add_argument("--diameter-mm", type=float, required=True)
    p.add_argument("--gauge", action="store_true", help="pressure is gauge, not absolute")
    p.set_defaults(func=cmd_nozzle)

    p = sub.add_parser("gen-sensors", help="write oracle-sampled sensor and evaluation files")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default="runs")
    p.add_argument("--k", type=int, default=5, help="number of sensors")
    p.add_argument("--total", type=int, default=20, help="number of evaluation positions")
    p.add_argument("--noise", type=float, default=0.0, help="relative noise std on sensor values")
    p.add_argument("--seed", type=int, action="append")
    p.set_defaults(func=cmd_gen_sensors)

    for name, func, helptext in (
        ("train", cmd_train, "train one backbone per seed and write checkpoint, report, curve"),
        ("eval", cmd_eval, "score a saved checkpoint against an evaluation file"),
        ("compare", cmd_compare, "graph vs dense over scenarios and seeds"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name == "compare":
            p.add_argument("--scenario", action="append",
                           help="scenario file or shipped name; repeatable (default: all shipped)")
        else:
            p.add_argument("--scenario", required=True)
        p.add_argument("--sensors")
        p.add_argument("--eval")
        p.add_argument("--out", default="runs")
        if name != "eval":
            p.add_argument("--seed", type=int, action="append")
            p.add_argument("--backbone", choices=("graph", "dense", "both"),
                           default="both" if name == "compare" else "graph")
        else:
            p.add_argument("--checkpoint", required=True)
        _add_training_flags(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except H2JetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
