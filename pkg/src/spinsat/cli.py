"""Command-line front end.

Every command reads a YAML configuration (nested sections are flattened,
flags override keys), writes plot-ready CSV and structured text into the
output directory and returns a process exit status:
0 on success, 2 on usage or configuration errors, 3 when the target is
unreachable.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from . import __version__, export
from .errors import DegenerateRelaxationError, DomainError, InvalidParamsError, UnreachableError
from .extremal import classify_singular_point, default_switching_seeds, trace_switching_curve
from .integrator import DEFAULT_TOL, MAX_TOL, MIN_TOL
from .model import PhysicalParams, PlanarState, admissibility_bound, horizontal_ordinate, normalize
from .synthesis import (
    asymptotic_times,
    field_map,
    inversion_recovery,
    reachability_threshold,
    simulate_schedule,
    singular_lines,
    sweep_ratio,
    synthesize_optimal,
)

log = logging.getLogger("spinsat")

EXIT_OK, EXIT_CONFIG, EXIT_UNREACHABLE = 0, 2, 3
GRID_MIN, GRID_MAX = 16, 4096
SEEDS_MIN = 2

_KEYS = ("t1_ms", "t2_ms", "omega_max_hz", "tol", "grid_n", "output_dir", "omegas", "omega_range", "seeds")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated run settings; times in ms, amplitude in Hz."""

    t1_ms: float
    t2_ms: float
    omega_max_hz: float | None = None
    tol: float = DEFAULT_TOL
    grid_n: int = 256
    output_dir: str = "out"
    omegas: tuple[float, ...] | None = None
    seeds: int = 64

    def __post_init__(self) -> None:
        for name in ("t1_ms", "t2_ms"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if self.omega_max_hz is not None and not (math.isfinite(self.omega_max_hz) and self.omega_max_hz > 0):
            raise ConfigError(f"omega_max_hz must be positive, got {self.omega_max_hz!r}")
        if not MIN_TOL <= self.tol <= MAX_TOL:
            raise ConfigError(f"tol must lie in [{MIN_TOL}, {MAX_TOL}], got {self.tol!r}")
        if not GRID_MIN <= self.grid_n <= GRID_MAX:
            raise ConfigError(f"grid_n must lie in [{GRID_MIN}, {GRID_MAX}], got {self.grid_n!r}")
        if self.seeds < SEEDS_MIN:
            raise ConfigError(f"seeds must be at least {SEEDS_MIN}")

    @property
    def t1(self) -> float:
        return self.t1_ms * 1e-3

    @property
    def t2(self) -> float:
        return self.t2_ms * 1e-3

    def physical(self) -> PhysicalParams:
        if self.omega_max_hz is None:
            raise ConfigError("omega_max_hz is required (config key or --omega)")
        try:
            return PhysicalParams(self.t1, self.t2, self.omega_max_hz)
        except InvalidParamsError as exc:
            raise ConfigError(str(exc)) from exc

    def fingerprint(self) -> dict[str, Any]:
        """Settings that determine the outputs (the output path does not)."""
        d = asdict(self)
        d.pop("output_dir")
        return d


def _flatten(doc: Mapping[str, Any], out: dict[str, Any]) -> dict[str, Any]:
    for k, v in doc.items():
        if isinstance(v, Mapping):
            _flatten(v, out)
        else:
            if k in out:
                raise ConfigError(f"key {k!r} given twice")
            out[k] = v
    return out


def _number(raw: Mapping[str, Any], key: str, cast=float):
    v = raw[key]
    if isinstance(v, bool):
        raise ConfigError(f"{key} must be numeric")
    try:
        # yaml reads forms like 1e-10 as strings
        x = cast(float(v)) if cast is int else cast(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be numeric, got {v!r}") from exc
    if cast is int and float(v) != x:
        raise ConfigError(f"{key} must be an integer, got {v!r}")
    return x


def parse_range(text: str) -> tuple[float, ...]:
    """``LO:HI:N`` into N evenly spaced amplitudes, endpoints included."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"malformed range {text!r}, expected LO:HI:N")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), float(parts[2])
    except ValueError as exc:
        raise ConfigError(f"malformed range {text!r}") from exc
    if n != int(n) or n < 1 or not (0 < lo <= hi) or not math.isfinite(hi) or (n == 1 and lo != hi):
        raise ConfigError(f"malformed range {text!r}")
    n = int(n)
    if n == 1:
        return (lo,)
    return tuple(lo + (hi - lo) * i / (n - 1) for i in range(n))


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read, flatten, override and validate a configuration document."""
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if doc is None:
            doc = {}
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a mapping")
        _flatten(doc, raw)
    unknown = sorted(set(raw) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in ("t1_ms", "t2_ms"):
        if key not in raw:
            raise ConfigError(f"missing required key {key}")

    kw: dict[str, Any] = {"t1_ms": _number(raw, "t1_ms"), "t2_ms": _number(raw, "t2_ms")}
    for key in ("omega_max_hz", "tol"):
        if key in raw:
            kw[key] = _number(raw, key)
    for key in ("grid_n", "seeds"):
        if key in raw:
            kw[key] = _number(raw, key, int)
    if "output_dir" in raw:
        kw["output_dir"] = str(raw["output_dir"])
    if "omega_range" in raw:
        kw["omegas"] = parse_range(raw["omega_range"])
    elif "omegas" in raw:
        vals = raw["omegas"]
        if not isinstance(vals, (list, tuple)):
            vals = [vals]
        kw["omegas"] = tuple(_number({"omegas": v}, "omegas") for v in vals)
    return RunConfig(**kw)


def _prepare(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_nondegenerate(cfg: RunConfig) -> None:
    if cfg.t1_ms == cfg.t2_ms:
        raise ConfigError("degenerate-relaxation: t1 = t2 leaves no horizontal singular line")


# commands -----------------------------------------------------------------------

def cmd_synthesize(cfg: RunConfig) -> int:
    p = cfg.physical()
    try:
        opt = synthesize_optimal(p, tol=cfg.tol)
        ir = inversion_recovery(p, cfg.tol)
    except UnreachableError as exc:
        print(f"unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    fp = cfg.fingerprint()
    out = _prepare(cfg)
    for tag, sched in (("", opt), ("ir_", ir)):
        export.write_document(out / f"{tag}schedule.yaml", export.schedule_to_dict(sched), fp, f"{sched.name} schedule")
        traj = simulate_schedule(sched, tol=cfg.tol)
        export.write_csv(
            out / f"{tag}trajectory.csv",
            export.TRAJECTORY_COLUMNS,
            export.trajectory_rows(traj, p.omega_max_hz),
            fp,
            f"{sched.name} trajectory",
        )
    gain = 100.0 * (ir.total_seconds - opt.total_seconds) / ir.total_seconds
    summary = {
        "omega_max_hz": p.omega_max_hz,
        "structure": opt.structure,
        "t_opt_tau": opt.total_tau,
        "t_opt_ms": 1e3 * opt.total_seconds,
        "t_ir_tau": ir.total_tau,
        "t_ir_ms": 1e3 * ir.total_seconds,
        "gain_percent": gain,
        "switching_curve_clear": opt.switching_curve_clear,
    }
    export.write_document(out / "summary.yaml", summary, fp, "summary")
    print(
        f"structure {opt.structure}  t_opt {summary['t_opt_ms']:.3f} ms  "
        f"t_ir {summary['t_ir_ms']:.3f} ms  gain {gain:.1f} %"
    )
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.omegas is None:
        if cfg.omega_max_hz is None:
            raise ConfigError("no amplitudes: give --omega, --omega-range or a sweep section")
        omegas: tuple[float, ...] = (cfg.omega_max_hz,)
    else:
        omegas = cfg.omegas
    if not omegas:
        raise ConfigError("empty amplitude list")
    if any(not (math.isfinite(w) and w > 0) for w in omegas):
        raise ConfigError("amplitudes must be positive")
    base = PhysicalParams(cfg.t1, cfg.t2, omegas[0]) if cfg.t2 <= 2 * cfg.t1 else None
    if base is None:
        raise ConfigError("t2_ms must not exceed 2 * t1_ms")
    rows = sweep_ratio(base, omegas, cfg.tol)
    fp = cfg.fingerprint()
    out = _prepare(cfg)
    export.write_csv(out / "sweep.csv", export.SWEEP_COLUMNS, export.sweep_rows(rows), fp, "ratio sweep")
    try:
        lim = asymptotic_times(cfg.t1, cfg.t2)
        record = (lim.t_opt_inf, lim.t_ir_inf, lim.ratio_inf)
    except DomainError as exc:
        log.warning("no asymptotic limit: %s", exc)
        record = (None, None, None)
    export.write_csv(out / "asymptote.csv", ("t_opt_inf_s", "t_ir_inf_s", "ratio_inf"), [record], fp, "asymptotic limits")
    for r in rows:
        ratio = "unreachable" if r.ratio is None else f"{r.ratio:.5f}"
        print(f"{r.omega_hz:12.4f} Hz  {ratio}")
    if record[2] is not None:
        print(f"asymptote t_opt {record[0]:.6f} s  t_ir {record[1]:.6f} s  ratio {record[2]:.5f}")
    return EXIT_OK


def cmd_threshold(cfg: RunConfig) -> int:
    th = reachability_threshold(cfg.t1, cfg.t2)
    out = _prepare(cfg)
    export.write_csv(out / "threshold.csv", ("threshold_hz",), [(th,)], cfg.fingerprint(), "reachability threshold")
    print(f"reachability threshold {th:.4f} Hz")
    return EXIT_OK


def cmd_fieldmap(cfg: RunConfig) -> int:
    _require_nondegenerate(cfg)
    n = normalize(cfg.physical())
    fm = field_map(n, cfg.grid_n)
    fp = cfg.fingerprint()
    out = _prepare(cfg)
    rows = zip(
        fm.y.ravel(), fm.z.ravel(), fm.dr_dot_dtheta.ravel(), fm.det_f1v.ravel(),
        fm.on_singular.ravel(), fm.classification.ravel(),
    )
    export.write_csv(
        out / "fieldmap.csv",
        ("y", "z", "dr_dot_dtheta", "det_f1v", "on_singular", "classification"),
        rows,
        fp,
        "radial speed map",
    )
    for name, pts in singular_lines(n, cfg.grid_n).items():
        cls = [classify_singular_point(PlanarState(y, z), n) for y, z in pts]
        export.write_csv(
            out / f"singular_{name}.csv",
            ("y", "z", "classification"),
            ((y, z, c) for (y, z), c in zip(pts, cls)),
            fp,
            f"{name} singular line",
        )
    print(f"grid {cfg.grid_n}x{cfg.grid_n}  z0 {fm.z0:.10f}")
    return EXIT_OK


def cmd_switching_curve(cfg: RunConfig) -> int:
    _require_nondegenerate(cfg)
    n = normalize(cfg.physical())
    seeds = default_switching_seeds(n, cfg.seeds)
    curve = trace_switching_curve(n, seeds, tol=cfg.tol)
    for y in curve.missing:
        log.warning("seed y=%.17g: no switch before the vertical axis", y)
    out = _prepare(cfg)
    rows = ((s, y, z, t) for s, (y, z), t in zip(curve.seed_y, curve.points, curve.tau_to_switch))
    export.write_csv(
        out / "switching_curve.csv",
        ("seed_y", "switch_y", "switch_z", "tau_to_switch"),
        rows,
        cfg.fingerprint(),
        f"switching curve y_min={admissibility_bound(n):.17g} z0={horizontal_ordinate(n):.17g}",
    )
    print(f"{len(curve.points)} switch points, {len(curve.missing)} seeds without a switch")
    return EXIT_OK


def cmd_asymptote(cfg: RunConfig) -> int:
    try:
        lim = asymptotic_times(cfg.t1, cfg.t2)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    out = _prepare(cfg)
    export.write_csv(
        out / "asymptote.csv",
        ("t_opt_inf_s", "t_ir_inf_s", "ratio_inf"),
        [(lim.t_opt_inf, lim.t_ir_inf, lim.ratio_inf)],
        cfg.fingerprint(),
        "asymptotic limits",
    )
    print(f"t_opt {lim.t_opt_inf:.6f} s  t_ir {lim.t_ir_inf:.6f} s  ratio {lim.ratio_inf:.5f}")
    return EXIT_OK


COMMANDS = {
    "synthesize": cmd_synthesize,
    "sweep": cmd_sweep,
    "fieldmap": cmd_fieldmap,
    "switching-curve": cmd_switching_curve,
    "asymptote": cmd_asymptote,
    "threshold": cmd_threshold,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinsat", description="Time-optimal saturation of a dissipative spin-1/2.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", help="YAML configuration file")
        sp.add_argument("--omega", type=float, metavar="HZ", help="amplitude omega_max/2pi in Hz")
        sp.add_argument("--tol", type=float, metavar="X", help="integration tolerance")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        if name == "sweep":
            sp.add_argument("--omega-range", metavar="LO:HI:N", help="N evenly spaced amplitudes")
        if name == "fieldmap":
            sp.add_argument("--grid", type=int, metavar="N", help="grid points per axis")
        if name == "switching-curve":
            sp.add_argument("--seeds", type=int, metavar="N", help="number of seeds")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = {
        "tol": args.tol,
        "output_dir": args.out,
        "grid_n": getattr(args, "grid", None),
        "seeds": getattr(args, "seeds", None),
        "omega_range": getattr(args, "omega_range", None),
    }
    if args.omega is not None:
        overrides["omega_max_hz"] = args.omega
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "sweep" and args.omega is not None and overrides["omega_range"] is None:
            # a single --omega replaces any configured list
            cfg = replace(cfg, omegas=(args.omega,))
        return COMMANDS[args.command](cfg)
    except (ConfigError, DegenerateRelaxationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
