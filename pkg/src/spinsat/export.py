"""Deterministic text emitters for schedules, trajectories and tables.

Floats are written with 17 significant digits, CSV files use ',' and LF
line endings, and every file starts with ``#`` header lines recording the
tool version and a hash of the effective configuration.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .integrator import Trajectory
from .synthesis import Arc, ControlSchedule, SweepRow


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def header_lines(config: Mapping[str, Any], kind: str) -> list[str]:
    return [
        f"# spinsat {__version__}",
        f"# config_sha256 {config_hash(config)}",
        f"# content {kind}",
    ]


def fmt(x: Any) -> str:
    """Fixed CSV cell formatting; ``None``/NaN become empty cells."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return ""
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], config: Mapping[str, Any], kind: str) -> None:
    buf = io.StringIO()
    for line in header_lines(config, kind):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# structured documents ----------------------------------------------------------
# The body is JSON flow syntax with every float in '%.16e' form, which both
# JSON and YAML 1.1 loaders read back as floats.

def _doc(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_doc(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (Mapping, list, tuple)) for v in obj):
            return "[" + ", ".join(_doc(v) for v in obj) + "]"
        items = [f"{pad}  {_doc(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return "null"
        return format(float(obj), ".16e")
    return json.dumps(str(obj))


def write_document(path: Path, obj: Mapping[str, Any], config: Mapping[str, Any], kind: str) -> None:
    text = "\n".join(header_lines(config, kind)) + "\n" + _doc(obj) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def read_document(path: Path) -> dict:
    body = "\n".join(ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#"))
    return json.loads(body)


def arc_to_dict(arc: Arc) -> dict:
    return {
        "kind": arc.kind,
        "u": arc.u,
        "duration_tau": arc.duration_tau,
        "start": [arc.start.y, arc.start.z],
        "end": [arc.end.y, arc.end.z],
    }


def schedule_to_dict(s: ControlSchedule) -> dict:
    n = s.normalized
    params: dict[str, Any] = {
        "big_gamma": n.big_gamma,
        "small_gamma": n.small_gamma,
        "u_max": n.u_max,
        "omega_max_hz": n.omega_max_hz,
    }
    if s.params is not None:
        params.update(t1_s=s.params.t1, t2_s=s.params.t2)
    return {
        "name": s.name,
        "branch": s.branch,
        "structure": s.structure,
        "arcs": [arc_to_dict(a) for a in s.arcs],
        "total_tau": s.total_tau,
        "total_seconds": s.total_seconds,
        "switching_curve_clear": s.switching_curve_clear,
        "params": params,
    }


TRAJECTORY_COLUMNS = ("tau", "t_ms", "y", "z", "u", "arc_kind")


def trajectory_rows(tr: Trajectory, omega_max_hz: float) -> Iterable[tuple]:
    labels = tr.labels or ("",) * len(tr)
    for t, (y, z), u, k in zip(tr.tau, tr.states[:, :2], tr.u, labels):
        yield (t, 1e3 * t / omega_max_hz, y, z, u, k)


SWEEP_COLUMNS = ("omega_hz", "t_opt_s", "t_ir_s", "ratio", "reachable", "structure")


def sweep_rows(rows: Sequence[SweepRow]) -> Iterable[tuple]:
    for r in rows:
        yield (r.omega_hz, r.t_opt_s, r.t_ir_s, r.ratio, r.reachable, r.structure)
