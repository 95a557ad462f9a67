"""Command-line front end.

Usage: ``reebflow <command> [options]``. Every command accepts
``--config FILE`` (JSON, see ``RunConfig``) and the global flags below,
which override values from the file. Exit codes: 0 success, 1 failed
verification or integration, 2 bad input.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import export
from .contact import ReebField
from .flow import (
    FlowError,
    classify_orbit,
    hyperplane_sweep,
    integrate,
    rotation_number,
    scan_periodic,
    trapped_radius,
)
from .hamiltonian import HamiltonianStack, from_polar
from .profiles import ProfileConstants, ProfileFamily


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything that determines a run's output."""

    profiles: ProfileConstants = field(default_factory=ProfileConstants)
    n: int = 2
    tol: float = 1e-10
    eps_T: float = 1e-6
    box: float = 4.0
    tube: float | None = None
    seed: int = 0
    jobs: int = 1
    output: str | None = None
    command: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not self.tol > 0.0:
            raise ConfigError("tol must be positive")
        if not self.eps_T > 0.0:
            raise ConfigError("eps_T must be positive")
        if not self.box > 0.0:
            raise ConfigError("box must be positive")
        if self.tube is not None and not self.tube > 0.0:
            raise ConfigError("tube must be positive")
        if self.jobs == 0:
            raise ConfigError("jobs must be nonzero")

    def to_dict(self) -> dict[str, Any]:
        return {
            "profiles": self.profiles.to_dict(),
            "n": self.n,
            "tol": self.tol,
            "eps_T": self.eps_T,
            "box": self.box,
            "tube": self.tube,
            "seed": self.seed,
            "jobs": self.jobs,
            "output": self.output,
            "command": self.command,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "profiles" in kw:
                kw["profiles"] = ProfileConstants.from_dict(kw["profiles"] or {})
            for key in ("n", "seed", "jobs"):
                if key in kw:
                    kw[key] = _strict_int(kw[key], key)
            for key in ("tol", "eps_T", "box"):
                if key in kw:
                    kw[key] = float(kw[key])
            if kw.get("tube") is not None:
                kw["tube"] = float(kw["tube"])
            if "params" in kw and not isinstance(kw["params"], dict):
                raise ConfigError("params must be an object")
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    def stack(self) -> HamiltonianStack:
        return HamiltonianStack(ProfileFamily(self.profiles), n=self.n)


def _strict_int(v, key):
    if isinstance(v, bool) or not float(v).is_integer():
        raise ConfigError(f"{key} must be an integer")
    return int(v)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        try:
            data = export.read_header(text)
        except ValueError:
            raise ConfigError(f"malformed config {path}: {exc.msg} at line {exc.lineno}") from exc
    if isinstance(data, dict):
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        # a previous run's header can be fed back as a config
        data = {k: v for k, v in data.items() if k not in ("command", "params", "output")}
    return RunConfig.from_dict(data)


def parse_point(text: str, dim: int, polar: bool = False) -> np.ndarray:
    """``"x1,y1,...,z"`` (or ``"r1,th1,...,z"`` when ``polar``) to a Cartesian point."""
    parts = text.split(",")
    if len(parts) != dim or any(p != p.strip() or not p for p in parts):
        raise ConfigError(f"expected {dim} comma-separated numbers without spaces, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"not a number in {text!r}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"point must be finite: {text!r}")
    if not polar:
        return np.array(vals)
    n = (dim - 1) // 2
    r = np.array(vals[0 : 2 * n : 2])
    th = np.array(vals[1 : 2 * n : 2])
    if np.any(r < 0.0):
        raise ConfigError("polar radii must be nonnegative")
    return from_polar(r, th, vals[-1])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with RunConfig fields")
    g.add_argument("--s", type=float, help="weight of the second circle, in (0, 1)")
    g.add_argument("--c", type=float, help="growth constant of f")
    g.add_argument("--delta-g", type=float)
    g.add_argument("--z-flat", type=float)
    g.add_argument("--z-full", type=float)
    g.add_argument("--n", type=int, help="number of planar factors")
    g.add_argument("--tol", type=float, help="integrator tolerance")
    g.add_argument("--eps-T", type=float, dest="eps_T", help="torus proximity threshold")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="worker processes for scans (-1: all cores)")
    g.add_argument("-o", "--out", help="output file (default stdout)")
    return p


def _point_flags(p, required=True):
    grp = p.add_mutually_exclusive_group(required=required)
    grp.add_argument("--start", "-p", dest="point", help="x1,y1,...,z")
    grp.add_argument("--polar", help="r1,th1,...,z")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="reebflow", description="Reeb flow of a contact form on R^(2n+1) with trapped orbits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", parents=[common], help="run the audit battery")
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--starts", type=int, default=200, help="multistart count per tube radius")

    f = sub.add_parser("field", parents=[common], help="evaluate H and X at a point")
    _point_flags(f)

    o = sub.add_parser("orbit", parents=[common], help="integrate an orbit")
    _point_flags(o)
    o.add_argument("--t", type=float, required=True, dest="t_span")
    o.add_argument("--backward", action="store_true")
    o.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    o.add_argument("--dt", type=float, help="resample every dt instead of solver steps")

    c = sub.add_parser("classify", parents=[common], help="classify an orbit")
    _point_flags(c)
    c.add_argument("--horizon", type=float, default=200.0)

    r = sub.add_parser("rotation", parents=[common], help="rotation number on the torus")
    _point_flags(r, required=False)
    r.add_argument("--revs", type=int, default=10_000)
    r.add_argument("--full", action="store_true", help="unwrap angles from the Cartesian flow")

    s = sub.add_parser("scan-periodic", parents=[common], help="grid search for near-returns")
    s.add_argument("--box", type=float)
    s.add_argument("--per-axis", type=int, default=6)
    s.add_argument("--horizon", type=float, default=200.0)
    s.add_argument("--return-tol", type=float, default=1e-4)
    s.add_argument("--t-min", type=float, default=0.5)
    s.add_argument("--tube", type=float)
    s.add_argument("--include-torus", action="store_true")
    s.add_argument("--reduced", action="store_true")

    w = sub.add_parser("sweep-hyperplane", parents=[common], help="crossing times from z = -z0")
    w.add_argument("--z0", type=float, default=3.0)
    w.add_argument("--rho-min", type=float, default=1.0)
    w.add_argument("--rho-max", type=float, default=3.0)
    w.add_argument("--steps", type=int, default=9)
    w.add_argument("--horizon", type=float, default=200.0)
    w.add_argument("--locate", action="store_true", help="also solve for the trapped radius")

    d = sub.add_parser("plotdata", parents=[common], help="columns t z r_j dist_T for plotting")
    _point_flags(d)
    d.add_argument("--t", type=float, required=True, dest="t_span")
    d.add_argument("--backward", action="store_true")
    d.add_argument("--dt", type=float, default=0.1)
    return parser


_GLOBAL = ("config", "s", "c", "delta_g", "z_flat", "z_full", "n", "tol", "eps_T", "seed", "jobs", "out")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    data = cfg.to_dict()
    prof = data["profiles"]
    for key in ("s", "c", "delta_g", "z_flat", "z_full"):
        if getattr(args, key) is not None:
            prof[key] = getattr(args, key)
    for key in ("n", "tol", "eps_T", "seed", "jobs"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if getattr(args, "box", None) is not None:
        data["box"] = args.box
    if getattr(args, "tube", None) is not None:
        data["tube"] = args.tube
    data["output"] = args.out
    data["command"] = args.command
    params = {}
    for key, val in sorted(vars(args).items()):
        if key in _GLOBAL or key in ("command", "box", "tube"):
            continue
        params[key] = val
    data["params"] = params
    return RunConfig.from_dict(data)


@contextlib.contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from exc
    with fh:
        yield fh


def _start(cfg: RunConfig) -> np.ndarray:
    p = cfg.params
    dim = 2 * cfg.n + 1
    if p.get("polar") is not None:
        return parse_point(p["polar"], dim, polar=True)
    if p.get("point") is not None:
        return parse_point(p["point"], dim)
    return from_polar(np.ones(cfg.n), np.zeros(cfg.n), 0.0)


def _cmd_verify(cfg, out) -> int:
    from .verify import run_audits

    stack = cfg.stack()
    items = run_audits(stack, seed=cfg.seed, samples=cfg.params["samples"], starts=cfg.params["starts"], tol=cfg.tol * 10)
    ok = all(it.passed for it in items)
    payload = {
        "passed": ok,
        "support_box": {"r_star": stack.r_star, "z_full": stack.z_full, "t_star": stack.t_star},
        "audits": [{"name": it.name, "passed": it.passed, "value": it.value, "detail": it.detail} for it in items],
    }
    export.write_json(out, cfg.to_dict(), _jsonable(payload))
    for it in items:
        print(f"{'PASS' if it.passed else 'FAIL'} {it.name} {_short(it.value)}", file=sys.stderr)
    return 0 if ok else 1


def _short(v):
    if isinstance(v, float):
        return f"{v:.3e}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return "" if v is None else str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _cmd_field(cfg, out) -> int:
    stack = cfg.stack()
    sample = ReebField(stack).sample(_start(cfg))
    export.write_json(out, cfg.to_dict(), {"sample": sample.to_dict()})
    return 0


def _cmd_orbit(cfg, out) -> int:
    p = cfg.params
    traj = integrate(ReebField(cfg.stack()), _start(cfg), p["t_span"], -1 if p["backward"] else 1, cfg.tol)
    writer = export.write_csv if p["format"] == "csv" else export.write_jsonl
    writer(out, cfg.to_dict(), traj, p["dt"])
    return 0


def _cmd_plotdata(cfg, out) -> int:
    p = cfg.params
    traj = integrate(ReebField(cfg.stack()), _start(cfg), p["t_span"], -1 if p["backward"] else 1, cfg.tol)
    export.write_plotdata(out, cfg.to_dict(), traj, p["dt"])
    return 0


def _cmd_classify(cfg, out) -> int:
    verdict = classify_orbit(ReebField(cfg.stack()), _start(cfg), cfg.params["horizon"], eps_T=cfg.eps_T, tol=cfg.tol)
    export.write_json(out, cfg.to_dict(), {"verdict": _jsonable(verdict.to_dict())})
    return 0


def _cmd_rotation(cfg, out) -> int:
    p = cfg.params
    est = rotation_number(ReebField(cfg.stack()), _start(cfg), p["revs"], cfg.eps_T, cfg.tol, reduced=not p["full"])
    export.write_json(out, cfg.to_dict(), {"rotation": est.to_dict()})
    return 0


def _cmd_scan(cfg, out) -> int:
    p = cfg.params
    res = scan_periodic(
        ReebField(cfg.stack()),
        box=cfg.box,
        per_axis=p["per_axis"],
        horizon=p["horizon"],
        return_tol=p["return_tol"],
        t_min=p["t_min"],
        eps_T=cfg.eps_T,
        tube=cfg.tube,
        include_torus=p["include_torus"],
        tol=cfg.tol,
        reduced=p["reduced"],
        jobs=cfg.jobs,
    )
    payload = res.to_dict()
    payload.pop("config")
    payload["scan"] = res.config
    payload["recurrences"] = res.recurrences
    export.write_json(out, cfg.to_dict(), _jsonable(payload))
    return 1 if res.recurrences else 0


def _cmd_sweep(cfg, out) -> int:
    p = cfg.params
    if p["steps"] < 1:
        raise ConfigError("steps must be positive")
    field_ = ReebField(cfg.stack())
    rhos = np.linspace(p["rho_min"], p["rho_max"], p["steps"]) if p["steps"] > 1 else np.array([p["rho_min"]])
    rows = hyperplane_sweep(field_, p["z0"], rhos, p["horizon"], cfg.tol)
    payload: dict[str, Any] = {"rows": [r.to_dict() for r in rows]}
    if p["locate"]:
        payload["trapped_radius"] = trapped_radius(field_, p["z0"])
    export.write_json(out, cfg.to_dict(), payload)
    return 0


COMMANDS = {
    "verify": _cmd_verify,
    "field": _cmd_field,
    "orbit": _cmd_orbit,
    "classify": _cmd_classify,
    "rotation": _cmd_rotation,
    "scan-periodic": _cmd_scan,
    "sweep-hyperplane": _cmd_sweep,
    "plotdata": _cmd_plotdata,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        with _sink(cfg.output) as out:
            return COMMANDS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"reebflow: error: {exc}", file=sys.stderr)
        return 2
    except FlowError as exc:
        print(f"reebflow: integration failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"reebflow: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
