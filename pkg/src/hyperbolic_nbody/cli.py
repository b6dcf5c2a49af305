"""Command line front end: ``hnb <command> --config <path>``.

Every command writes ``<command>.json`` (and CSV files when enabled) to the
output directory. Exit codes: 0 success, 1 numerical failure, 2 bad config.
Flags can also be set through ``HNB_CONFIG``, ``HNB_OUT``, ``HNB_SEED``,
``HNB_THREADS`` and ``HNB_TOL_SCALE``; explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .action import ActionError, action_fixed_time, action_free_time
from .asymptotics import NotHyperbolicError, chazy_residual, limit_shape, write_chazy_csv
from .busemann import BusemannField
from .core import (
    ConeSpec,
    MassSystem,
    SingularConfigurationError,
    cone_constants,
    energy,
    mass_norm,
    potential,
)
from .flow import IntegrationError, PhaseState, detect_cone_exit, integrate
from .kepler import KeplerError
from .scattering import ShootingError, check_collision_free, hyperbolic_ray, solve_asymptotic_velocity

COMMANDS = ("shoot", "limit-shape", "action", "busemann", "cone", "chazy", "verify")
ENV_PREFIX = "HNB_"
NUMERICAL_ERRORS = (ShootingError, NotHyperbolicError, IntegrationError, ActionError, KeplerError, FloatingPointError)


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


# --------------------------------------------------------------------------
# deterministic JSON


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(obj, indent: int = 2) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become ``null``."""

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {emit(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(emit(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + emit(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return format(o, ".17g") if math.isfinite(o) else "null"
        return json.dumps(o)

    return emit(_plain(obj), 0) + "\n"


# --------------------------------------------------------------------------
# configuration


def _schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("configs/schema.json").read_text())


def bundled_config_path(name: str = "kepler") -> Path:
    return Path(str(resources.files(__package__).joinpath(f"configs/{name}.json")))


def load_config(path) -> tuple:
    """Read, schema-validate and hash a config; ``path`` may name a bundled config."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = bundled_config_path(str(path))
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(k) for k in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc
    return cfg, hashlib.sha256(raw).hexdigest()


class Run:
    """Validated view of a config with tolerances scaled by ``tol_scale``."""

    def __init__(self, cfg: dict, tol_scale: float = 1.0, seed: Optional[int] = None, threads: int = 1):
        self.cfg = cfg
        self.ms = MassSystem(cfg["masses"], cfg["dimension"])
        self.seed = int(cfg.get("seed", 0) if seed is None else seed)
        self.threads = threads
        tols = {"integrator": 1e-10, "shooting": 1e-10, "limit_shape": 1e-10, "action": 1e-10}
        tols.update(cfg.get("tolerances", {}))
        self.tol = {k: v * tol_scale for k, v in tols.items()}
        self.horizons = {"ray": 100.0, "cone": 50.0, "chazy": 1e4}
        self.horizons.update(cfg.get("horizons", {}))
        self.x0s = [self._config(x, f"initial_configurations[{k}]") for k, x in enumerate(cfg.get("initial_configurations", []))]
        self.v0s = [self._config(v, f"initial_velocities[{k}]", check=False) for k, v in enumerate(cfg.get("initial_velocities", []))]
        self.a = self._config(cfg["limit_shape"], "limit_shape") if "limit_shape" in cfg else None
        self.h = cfg.get("energy")
        if self.a is not None:
            ha = 0.5 * mass_norm(self.ms, self.a) ** 2
            if self.h is None:
                self.h = ha
            elif abs(ha - self.h) > 1e-9 * max(1.0, self.h):
                raise ConfigError(f"energy {self.h} is inconsistent with |a|^2/2 = {ha}")
        out = cfg.get("outputs", {})
        self.csv = bool(out.get("csv", False))
        self.out_dir = Path(out.get("directory", "hnb-out"))

    def _config(self, x, what: str, check: bool = True) -> np.ndarray:
        try:
            arr = self.ms.config(x)
        except ValueError as exc:
            raise ConfigError(f"{what}: {exc}") from exc
        if check:
            try:
                check_collision_free(self.ms, arr, what)
            except SingularConfigurationError as exc:
                raise ConfigError(str(exc)) from exc
        return arr

    def need(self, *keys):
        for k in keys:
            if k == "limit_shape" and self.a is None:
                raise ConfigError("this command needs 'limit_shape'")
            if k == "initial_configurations" and not self.x0s:
                raise ConfigError("this command needs 'initial_configurations'")
            if k == "initial_velocities" and len(self.v0s) != len(self.x0s):
                raise ConfigError("'initial_velocities' must match 'initial_configurations' one to one")
            if k == "energy" and self.h is None:
                raise ConfigError("this command needs 'energy' or 'limit_shape'")

    def velocities(self):
        """Initial velocities, defaulting to ``a`` when none are configured."""
        if self.v0s:
            self.need("initial_velocities")
            return self.v0s
        self.need("limit_shape")
        return [self.a] * len(self.x0s)


# --------------------------------------------------------------------------
# commands


def cmd_shoot(run: Run) -> dict:
    run.need("limit_shape", "initial_configurations")
    cone = None
    if "cone" in run.cfg and "alpha" in run.cfg["cone"]:
        cone = ConeSpec(run.a, run.cfg["cone"]["alpha"])
    out = []
    for k, x0 in enumerate(run.x0s):
        sr = solve_asymptotic_velocity(run.ms, x0, run.a, tol=run.tol["shooting"])
        ray = hyperbolic_ray(run.ms, x0, run.a, tol=run.tol["integrator"], t_end=run.horizons["ray"], cone=cone, shooting=sr)
        rec = sr.to_record()
        rec["ray"] = {k2: v for k2, v in ray.meta.items() if k2 != "v_star"}
        rec["ray"]["t_end"] = ray.t_end
        rec["ray"]["energy_drift"] = ray.max_energy_drift
        out.append(rec)
        if run.csv:
            ray.to_csv(run.out_dir / f"shoot_ray_{k}.csv")
    return {"results": out}


def cmd_limit_shape(run: Run) -> dict:
    run.need("initial_configurations")
    out = []
    for x0, v0 in zip(run.x0s, run.velocities()):
        res = limit_shape(run.ms, PhaseState(x0, v0), tol=run.tol["limit_shape"])
        h = energy(run.ms, x0, v0)
        out.append({
            "x0": x0, "v0": v0, "a_hat": res.a_hat, "error": res.error, "tail_bound": res.tail_bound,
            "T": res.T, "energy": h, "energy_law_residual": mass_norm(run.ms, res.a_hat) - math.sqrt(2.0 * h),
        })
    return {"results": out}


def cmd_action(run: Run) -> dict:
    run.need("initial_configurations", "energy")
    act_cfg = run.cfg.get("action", {})
    pairs = act_cfg.get("pairs") or [[i, j] for i in range(len(run.x0s)) for j in range(i + 1, len(run.x0s))]
    grid = act_cfg.get("grid", 128)
    out = []
    for k, (i, j) in enumerate(pairs):
        if max(i, j) >= len(run.x0s):
            raise ConfigError(f"action pair {[i, j]} refers to a missing configuration")
        x, y = run.x0s[i], run.x0s[j]
        rec = {"pair": [i, j]}
        free = action_free_time(run.ms, x, y, run.h, tol=run.tol["action"], grid_m=grid)
        rec["phi_h"] = free.to_record()
        if run.csv:
            free.curve.to_csv(run.out_dir / f"action_free_{k}.csv")
        if "fixed_time" in act_cfg:
            fixed = action_fixed_time(run.ms, x, y, act_cfg["fixed_time"], tol=run.tol["action"], grid_m=grid)
            rec["phi"] = fixed.to_record()
            if run.csv:
                fixed.curve.to_csv(run.out_dir / f"action_fixed_{k}.csv")
        out.append(rec)
    return {"h": run.h, "results": out}


def cmd_busemann(run: Run) -> dict:
    run.need("limit_shape")
    bz = run.cfg.get("busemann", {})
    points = [run._config(p, f"busemann.points[{k}]") for k, p in enumerate(bz.get("points", []))] or run.x0s
    if not points:
        raise ConfigError("this command needs 'busemann.points' or 'initial_configurations'")
    alpha = run.cfg.get("cone", {}).get("alpha")
    field_ = BusemannField(run.ms, run.a, run.h, bz.get("schedule"), tol=run.tol["action"], threads=run.threads)
    if run.csv:
        ests = field_.to_csv(run.out_dir / "busemann.csv", points, alpha=alpha)
    else:
        ests = field_.estimate_many(points)
    out = []
    for est in ests:
        g = field_.gradient(est.x, alpha=alpha, tol=run.tol["shooting"])
        rec = est.to_record()
        rec["gradient"] = g
        rec["eikonal_residual"] = 0.5 * mass_norm(run.ms, g) ** 2 - potential(run.ms, est.x) - run.h
        out.append(rec)
    return {"h": run.h, "origin_value": field_.value(field_.origin, out[0]["schedule"]), "results": out}


def cmd_cone(run: Run) -> dict:
    run.need("limit_shape")
    cone_cfg = run.cfg.get("cone", {})
    if "alpha" not in cone_cfg or "eps" not in cone_cfg:
        raise ConfigError("this command needs 'cone.alpha' and 'cone.eps'")
    try:
        cc = cone_constants(run.ms, run.a, cone_cfg["alpha"], cone_cfg["eps"], seed=run.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cone = ConeSpec(run.a, cc.alpha, cc.r0)
    runs = []
    for k, (x0, v0) in enumerate(zip(run.x0s, run.velocities())):
        traj = integrate(run.ms, PhaseState(x0, v0), run.horizons["cone"], tol=run.tol["integrator"])
        norms = np.array([mass_norm(run.ms, x) for x in traj.x])
        runs.append({
            "x0": x0, "v0": v0,
            "starts_in_cone": cone.contains(run.ms, x0),
            "velocity_in_ball": mass_norm(run.ms, v0 - run.a) <= cc.delta,
            "cone_exit": detect_cone_exit(traj, cone),
            "growth_slack": float(np.min(norms - (norms[0] + cc.lam * traj.t))),
        })
        if run.csv:
            traj.to_csv(run.out_dir / f"cone_run_{k}.csv")
    return {"constants": cc.__dict__, "runs": runs}


def cmd_chazy(run: Run) -> dict:
    run.need("initial_configurations")
    out = []
    for k, (x0, v0) in enumerate(zip(run.x0s, run.velocities())):
        z = PhaseState(x0, v0)
        a = limit_shape(run.ms, z, tol=run.tol["limit_shape"]).a_hat
        traj = integrate(run.ms, z, run.horizons["chazy"], tol=run.tol["integrator"])
        rows = chazy_residual(traj, a)
        if run.csv:
            write_chazy_csv(rows, run.out_dir / f"chazy_{k}.csv")
        out.append({"a_hat": a, "rows": rows[:, :2]})
    return {"results": out}


def cmd_verify(run: Run) -> dict:
    from .acceptance import run_all

    results = run_all(seed=run.seed, echo=lambda s: print(s, file=sys.stderr))
    return {"all_passed": all(r.passed for r in results), "criteria": [r.to_record() for r in results]}


HANDLERS = {
    "shoot": cmd_shoot, "limit-shape": cmd_limit_shape, "action": cmd_action, "busemann": cmd_busemann,
    "cone": cmd_cone, "chazy": cmd_chazy, "verify": cmd_verify,
}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hnb", description="Hyperbolic N-body motions: shooting, actions, Busemann functions.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="config file, or the name of a bundled config such as 'kepler'")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed for multistarts")
    p.add_argument("--threads", type=int, help="worker threads for fan-out")
    p.add_argument("--tol-scale", type=float, help="multiply every configured tolerance")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _env_default(args, name: str, cast):
    if getattr(args, name) is None:
        raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            try:
                setattr(args, name, cast(raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for {ENV_PREFIX + name.upper()}: {raw!r}") from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        for name, cast in (("config", str), ("out", str), ("seed", int), ("threads", int), ("tol_scale", float)):
            _env_default(args, name, cast)
        if args.config is None:
            if args.command != "verify":
                raise ConfigError("--config is required")
            args.config = "kepler"
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if args.tol_scale is not None and not args.tol_scale > 0:
            raise ConfigError("--tol-scale must be positive")
        cfg, digest = load_config(args.config)
        run = Run(cfg, tol_scale=args.tol_scale or 1.0, seed=args.seed, threads=args.threads or 1)
        if args.out:
            run.out_dir = Path(args.out)
        run.out_dir.mkdir(parents=True, exist_ok=True)
        body = HANDLERS[args.command](run)
        status = 0
        if args.command == "verify" and not body["all_passed"]:
            status = 1
    except (ConfigError, SingularConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    report = {
        "tool": "hyperbolic-nbody",
        "version": __version__,
        "command": args.command,
        "config_sha256": digest,
        "seed": run.seed,
        "tol_scale": args.tol_scale or 1.0,
        "status": "ok" if status == 0 else "failed",
        **body,
    }
    path = run.out_dir / f"{args.command}.json"
    path.write_text(dumps(report))
    print(f"{args.command}: {report['status']}, report written to {path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
