import math

import pytest
import yaml

from spinsat import __version__
from spinsat.cli import ConfigError, load_config, main, parse_range
from spinsat.export import config_hash, fmt, read_csv, read_document
from spinsat.model import admissibility_bound, horizontal_ordinate, normalize, PhysicalParams

REFERENCE = {
    "relaxation": {"t1_ms": 740, "t2_ms": 60},
    "control": {"omega_max_hz": 32.3},
    "numerics": {"tol": "1e-10", "grid_n": 64},
}


def write_config(tmp_path, doc, name="run.yaml"):
    doc = dict(doc)
    doc.setdefault("output_dir", str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def run(tmp_path, command, doc=REFERENCE, *extra):
    cfg = write_config(tmp_path, doc)
    return main([command, "--config", str(cfg), *extra]), tmp_path / "out"


def test_load_config_flattens_and_coerces(tmp_path):
    cfg = load_config(write_config(tmp_path, REFERENCE))
    assert cfg.t1 == pytest.approx(0.74)
    assert cfg.tol == 1e-10
    assert cfg.grid_n == 64


def test_flags_override(tmp_path):
    cfg = load_config(write_config(tmp_path, REFERENCE), {"omega_max_hz": 50.0, "grid_n": 32})
    assert cfg.omega_max_hz == 50.0 and cfg.grid_n == 32


@pytest.mark.parametrize(
    "patch",
    [{"numerics": {"grid_n": 8}}, {"numerics": {"grid_n": 5000}}, {"numerics": {"tol": 1.0}}, {"extra_key": 1}],
)
def test_invalid_config_values(tmp_path, patch):
    doc = {**REFERENCE, **patch}
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, doc))


@pytest.mark.parametrize("text", ["2:500", "a:b:3", "5:2:3", "2:500:0", "2:500:2.5", "0:10:3"])
def test_malformed_ranges(text):
    with pytest.raises(ConfigError):
        parse_range(text)


def test_range_endpoints():
    vals = parse_range("2:500:50")
    assert len(vals) == 50 and vals[0] == 2 and vals[-1] == 500


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(None) == "" and fmt(math.nan) == ""
    assert fmt(True) == "true" and fmt(3) == "3"


def test_synthesize_outputs(tmp_path):
    code, out = run(tmp_path, "synthesize")
    assert code == 0
    summary = read_document(out / "summary.yaml")
    assert summary["t_opt_ms"] == pytest.approx(202, abs=5)
    assert summary["t_ir_ms"] == pytest.approx(478, abs=10)
    assert summary["t_opt_ms"] == pytest.approx(1e3 * summary["t_opt_tau"] / 32.3, rel=1e-9)
    header, rows = read_csv(out / "trajectory.csv")
    assert header == ["tau", "t_ms", "y", "z", "u", "arc_kind"]
    for row in rows[::200]:
        assert float(row[1]) == pytest.approx(1e3 * float(row[0]) / 32.3, rel=1e-9, abs=1e-12)
    assert {r[5] for r in rows} == {"bang", "singular_horizontal", "singular_vertical"}
    sched = read_document(out / "schedule.yaml")
    assert [a["kind"] for a in sched["arcs"]] == ["bang", "singular_horizontal", "bang", "singular_vertical"]
    assert yaml.safe_load((out / "schedule.yaml").read_text()) == sched


def test_headers(tmp_path):
    code, out = run(tmp_path, "synthesize")
    cfg = load_config(tmp_path / "run.yaml")
    for f in out.iterdir():
        lines = f.read_text().splitlines()
        assert lines[0] == f"# spinsat {__version__}"
        assert lines[1] == f"# config_sha256 {config_hash(cfg.fingerprint())}"
        assert "\r" not in f.read_text()


def test_synthesize_unreachable(tmp_path, capsys):
    doc = {**REFERENCE, "control": {"omega_max_hz": 2.5}}
    code, out = run(tmp_path, "synthesize", doc)
    assert code == 3
    assert "unreachable" in capsys.readouterr().err
    assert not out.exists()


def test_missing_t1_writes_nothing(tmp_path):
    doc = {**REFERENCE, "relaxation": {"t2_ms": 60}}
    code, out = run(tmp_path, "synthesize", doc)
    assert code == 2
    assert not out.exists()


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_sweep_single_omega_matches_summary(tmp_path):
    code, out = run(tmp_path, "synthesize")
    summary = read_document(out / "summary.yaml")
    code, out = run(tmp_path, "sweep", REFERENCE, "--omega", "32.3")
    assert code == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header[:5] == ["omega_hz", "t_opt_s", "t_ir_s", "ratio", "reachable"]
    assert len(rows) == 1
    assert 1e3 * float(rows[0][1]) == pytest.approx(summary["t_opt_ms"], rel=1e-12)
    _, lim = read_csv(out / "asymptote.csv")
    assert float(lim[0][2]) == pytest.approx(0.389, abs=1e-3)


def test_sweep_range_last_row(tmp_path):
    code, out = run(tmp_path, "sweep", REFERENCE, "--omega-range", "2:500:4")
    assert code == 0
    _, rows = read_csv(out / "sweep.csv")
    assert rows[0][4] == "false" and rows[0][3] == ""
    assert abs(float(rows[-1][3]) - 0.389) < 0.02


@pytest.mark.parametrize("extra", [["--omega-range", "1:2"], ["--omega-range", "x:y:z"]])
def test_sweep_malformed(tmp_path, extra):
    code, _ = run(tmp_path, "sweep", REFERENCE, *extra)
    assert code == 2


def test_sweep_empty_list(tmp_path):
    doc = {**REFERENCE, "sweep": {"omegas": []}}
    code, _ = run(tmp_path, "sweep", doc)
    assert code == 2


def test_fieldmap(tmp_path):
    code, out = run(tmp_path, "fieldmap", REFERENCE, "--grid", "33")
    assert code == 0
    header, rows = read_csv(out / "fieldmap.csv")
    assert header == ["y", "z", "dr_dot_dtheta", "det_f1v", "on_singular", "classification"]
    assert len(rows) == 33 * 33
    origin = [r for r in rows if float(r[0]) == 0 and float(r[1]) == 0]
    assert origin and origin[0][2] == ""
    z0 = horizontal_ordinate(normalize(PhysicalParams(0.74, 0.06, 32.3)))
    _, hline = read_csv(out / "singular_horizontal.csv")
    assert all(float(r[1]) == pytest.approx(-0.0441, abs=1e-4) for r in hline)
    _, vline = read_csv(out / "singular_vertical.csv")
    for y, z, cls in vline:
        if float(z) > z0:
            assert cls == "time_minimizing"
        elif float(z) < z0:
            assert cls == "time_maximizing"


@pytest.mark.parametrize("grid", ["8", "5000"])
def test_fieldmap_bad_grid(tmp_path, grid):
    code, out = run(tmp_path, "fieldmap", REFERENCE, "--grid", grid)
    assert code == 2


def test_fieldmap_deterministic(tmp_path):
    _, out = run(tmp_path, "fieldmap", REFERENCE, "--grid", "40")
    first = {f.name: f.read_bytes() for f in out.iterdir()}
    _, out = run(tmp_path, "fieldmap", REFERENCE, "--grid", "40")
    assert first == {f.name: f.read_bytes() for f in out.iterdir()}


def test_switching_curve_command(tmp_path):
    code, out = run(tmp_path, "switching-curve")
    assert code == 0
    header, rows = read_csv(out / "switching_curve.csv")
    assert header == ["seed_y", "switch_y", "switch_z", "tau_to_switch"]
    n = normalize(PhysicalParams(0.74, 0.06, 32.3))
    assert abs(float(rows[0][1]) - admissibility_bound(n)) < 1e-4
    assert abs(float(rows[0][2]) - horizontal_ordinate(n)) < 1e-6


def test_switching_curve_degenerate(tmp_path, capsys):
    doc = {**REFERENCE, "relaxation": {"t1_ms": 60, "t2_ms": 60}}
    code, _ = run(tmp_path, "switching-curve", doc)
    assert code == 2
    assert "degenerate-relaxation" in capsys.readouterr().err


def test_asymptote_command(tmp_path):
    code, out = run(tmp_path, "asymptote")
    assert code == 0
    _, rows = read_csv(out / "asymptote.csv")
    assert float(rows[0][1]) == pytest.approx(0.74 * math.log(2), rel=1e-12)
    doc = {**REFERENCE, "relaxation": {"t1_ms": 60, "t2_ms": 100}}
    code, _ = run(tmp_path, "asymptote", doc)
    assert code == 2
