import hashlib
import json

import numpy as np
import pytest

from pebilliards.cli import load_config, main, serialize_config
from pebilliards.errors import ConfigError


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def simulate_doc(**overrides):
    doc = {
        "signature": [2, 1],
        "axes": [3.0, 2.0, 1.0],
        "initial": {"sample_null": True},
        "bounces": 50,
        "seed": 7,
        "record_tangency": False,
    }
    doc.update(overrides)
    return doc


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_config_round_trip(tmp_path):
    doc = simulate_doc()
    path = write_config(tmp_path, doc)
    loaded = load_config(path)
    again = json.loads(serialize_config(loaded))
    assert again == loaded == doc


def test_run_config_round_trip_identity():
    from pebilliards.cli import RunConfig

    cfg = RunConfig.from_doc(simulate_doc(tolerances={"boundary": 1e-9}))
    assert RunConfig.from_doc(cfg.to_doc()) == cfg


def test_run_config_rejects_bad_seed():
    from pebilliards.cli import RunConfig

    with pytest.raises(ConfigError):
        RunConfig.from_doc(simulate_doc(seed=-3))


def test_unknown_key_rejected(tmp_path):
    path = write_config(tmp_path, simulate_doc(typo_key=1))
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 1


def test_resonant_axes_is_config_error(tmp_path, capsys):
    path = write_config(tmp_path, simulate_doc(axes=[1.0, 1.0, 2.0], signature=[3, 0],
                                               initial={"x": [0.0, 0.0, 2.0], "v": [0.0, 0.1, -1.0]}))
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert "ResonantAxes" in capsys.readouterr().err


def test_off_boundary_initial_is_config_error(tmp_path, capsys):
    path = write_config(
        tmp_path,
        simulate_doc(initial={"x": [0.0, 0.0, 0.5], "v": [0.0, 0.0, -1.0]}),
    )
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert "OffBoundary" in capsys.readouterr().err


def test_simulate_writes_orbit_and_summary(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path, simulate_doc(bounces=100, record_tangency=True))
    assert main(["simulate", "--config", path, "--out", str(out)]) == 0
    lines = (out / "orbit.csv").read_text().splitlines()
    assert len(lines) == 102  # header + 101 states
    header = lines[0].split(",")
    assert header[:1] == ["index"]
    assert "H" in header and "F1" in header and "lam1" in header
    summary = json.loads((out / "summary.json").read_text())
    assert summary["aborted"] is None
    assert summary["drift"]["h_drift"] < 1e-9
    assert summary["bounces_completed"] == 100


def test_simulate_deterministic_for_fixed_seed(tmp_path):
    path = write_config(tmp_path, simulate_doc(bounces=200))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", path, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", path, "--out", str(out2)]) == 0
    assert (out1 / "orbit.csv").read_bytes() == (out2 / "orbit.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_simulate_thousand_bounce_run(tmp_path):
    out = tmp_path / "out"
    path = write_config(tmp_path, simulate_doc(bounces=1000))
    assert main(["simulate", "--config", path, "--out", str(out)]) == 0
    lines = (out / "orbit.csv").read_text().splitlines()
    assert len(lines) == 1002  # header + 1001 states
    summary = json.loads((out / "summary.json").read_text())
    assert summary["drift"]["h_drift"] < 1e-9
    assert max(summary["drift"]["f_drift"]) < 1e-9


def test_simulate_seed_flag_overrides(tmp_path):
    path = write_config(tmp_path, simulate_doc(bounces=50))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", path, "--out", str(out1), "--seed", "8"]) == 0
    assert main(["simulate", "--config", path, "--out", str(out2)]) == 0
    assert (out1 / "orbit.csv").read_bytes() != (out2 / "orbit.csv").read_bytes()


def test_commute_pass_and_tolerance_failure(tmp_path):
    doc = {"signature": [2, 1], "axes": [3.0, 2.0, 1.0], "samples": 500, "seed": 3}
    path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["commute", "--config", path, "--out", str(out)]) == 0
    reports = json.loads((out / "brackets.json").read_text())
    assert isinstance(reports, list) and len(reports) == 3
    assert all(r["max_normalized"] <= 1e-10 for r in reports)
    # negative control: breaking the metric adapter must trip the tolerance
    assert main(["commute", "--config", path, "--out", str(out), "--debug-flip-metric"]) == 3
    # unless the bracket tolerance is explicitly loosened past the breakage
    assert (
        main(
            ["commute", "--config", path, "--out", str(out), "--debug-flip-metric",
             "--tol-bracket", "10.0"]
        )
        == 0
    )


def test_simulate_degeneracy_quarantine(tmp_path):
    # This start runs straight into a boundary point whose normal is
    # light-like: the orbit aborts and the run is quarantined.
    doc = {
        "signature": [1, 1],
        "axes": [2.0**0.5, 2.0**0.5],
        "initial": {"x": [1.0, 1.0], "v": [-1.0, 0.0]},
        "bounces": 10,
        "record_tangency": False,
    }
    path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["simulate", "--config", path, "--out", str(out)]) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert "NullNormal" in summary["aborted"]


def test_commute_zero_samples_is_config_error(tmp_path):
    doc = {"signature": [2, 1], "axes": [3.0, 2.0, 1.0], "samples": 0}
    path = write_config(tmp_path, doc)
    assert main(["commute", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_oval_iterate_circle_antipodes(tmp_path):
    doc = {
        "oval": {
            "table": {"kind": "ellipse", "semi_axes": [1.0, 1.0]},
            "start": float(np.arctan2(0.8, 0.6)),
            "steps": 10,
        }
    }
    path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["oval", "iterate", "--config", path, "--out", str(out)]) == 0
    rows = (out / "oval_orbit.csv").read_text().splitlines()[1:]
    pts = np.array([[float(c) for c in row.split(",")[2:]] for row in rows])
    assert np.allclose(pts[0], [0.6, 0.8], atol=1e-12)
    for k in range(10):
        assert np.allclose(pts[k + 1], -pts[k], atol=1e-10)


def test_oval_periodic_ellipse(tmp_path):
    doc = {
        "oval": {
            "table": {"kind": "ellipse", "semi_axes": [2.0, 1.0]},
            "half_period": 2,
            "seed_param": 0.9,
        }
    }
    path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["oval", "periodic", "--config", path, "--out", str(out)]) == 0
    poly = json.loads((out / "polygon.json").read_text())
    assert poly["acceleration_factor"] == pytest.approx(1.0, abs=1e-10)
    assert poly["return_derivative_abs"] == pytest.approx(1.0, abs=1e-6)


def test_oval_synth_v4_and_determinism(tmp_path):
    polygon = {
        "points": [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]],
        "slopes": [-1.0, 2.0, -1.0, 2.0],
    }
    poly_path = tmp_path / "poly.json"
    poly_path.write_text(json.dumps(polygon), encoding="utf-8")
    doc = {"oval": {"polygon_file": "poly.json", "periods": 5}}
    path = write_config(tmp_path, doc)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["oval", "synth", "--config", path, "--out", str(out1)]) == 0
    assert main(["oval", "synth", "--config", path, "--out", str(out2)]) == 0
    report = json.loads((out1 / "synth_report.json").read_text())
    assert report["formula_factor"] == pytest.approx(4.0, abs=1e-8)
    assert report["simulated_factor"] == pytest.approx(4.0, abs=1e-8)
    assert report["speed_after_periods"] == pytest.approx(1024.0, rel=1e-6)
    for name in ("table.json", "synth_report.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_oval_synth_infeasible_slopes(tmp_path):
    doc = {
        "oval": {
            "polygon": {
                "points": [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]],
                "slopes": [1.0, 1.0, 1.0, 1.0],
            }
        }
    }
    path = write_config(tmp_path, doc)
    assert main(["oval", "synth", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_family_plot(tmp_path):
    doc = {
        "signature": [1, 1],
        "axes": [2.0, 1.0],
        "family": {"lambdas": [-6.0, -4.0, -2.0, 0.0, 0.5, 2.0, 6.0], "points": 64},
    }
    path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["family-plot", "--config", path, "--out", str(out)]) == 0
    rows = (out / "family.csv").read_text().splitlines()
    # pole member lambda = -4 is skipped with a warning row
    pole_rows = [r for r in rows if "pole-skipped" in r]
    assert len(pole_rows) == 1 and pole_rows[0].startswith("1,")
    # lambda = 0 polyline lies on the ellipse
    zero_rows = [r.split(",") for r in rows if r.startswith("3,")]
    pts = np.array([[float(r[4]), float(r[5])] for r in zero_rows])
    defect = np.abs(pts[:, 0] ** 2 / 4.0 + pts[:, 1] ** 2 - 1.0)
    assert float(np.max(defect)) <= 1e-10
    # deterministic: second run produces identical bytes
    out2 = tmp_path / "out2"
    assert main(["family-plot", "--config", path, "--out", str(out2)]) == 0
    assert sha256(out / "family.csv") == sha256(out2 / "family.csv")


def test_family_plot_requires_plane(tmp_path):
    doc = {"signature": [2, 1], "axes": [3.0, 2.0, 1.0], "family": {"count": 3}}
    path = write_config(tmp_path, doc)
    assert main(["family-plot", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_family_plot_count_default_spread(tmp_path):
    doc = {"signature": [1, 1], "axes": [2.0, 1.0], "family": {"count": 5, "points": 16}}
    path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["family-plot", "--config", path, "--out", str(out)]) == 0
    rows = (out / "family.csv").read_text().splitlines()[1:]
    members = {row.split(",")[0] for row in rows}
    assert members == {"0", "1", "2", "3", "4"}


def test_load_config_rejects_non_object(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2, 3]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(path))
