import csv
import json
import math
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

from gapcheck import cli
from gapcheck.config import build_config, parse_override
from gapcheck.errors import ConfigParseError, InsufficientData, OracleUnavailable
from gapcheck.report import REPORT_SCHEMA, SWEEP_CSV_HEADER, dumps_csv, dumps_json, write_atomic
from gapcheck.svgplot import CURVE_POINTS, concentration_svg, iqr_shrinkage, majorizer_svg

SVG = "{http://www.w3.org/2000/svg}"

SMALL = [
    "--set", "estimator.replications=2000",
    "--set", "sweep.budget=6400", "--set", "sweep.k_grid=[1,2,4]",
    "--set", "couple.replications=2000",
    "--set", "fit.steps=100", "--set", "fit.eval_samples=256",
    "--set", "figures.points=200", "--set", "figures.k_values=[1,16]",
]


def run_cli(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


class TestConfig:
    def test_defaults_are_benchmark(self):
        cfg = build_config("diagnose")
        assert cfg["model.A"] == [[1.0]] and cfg["proposal.loc"] == [0.0] and cfg.seed == 0

    def test_figures_default_to_lognormal(self):
        assert build_config("figures")["model.kind"] == "lognormal"
        assert build_config("figures", None, ["model.kind=gaussian_linear"])["model.kind"] == "gaussian_linear"

    def test_file_tables_and_dotted_keys(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('seed = 4\nmodel.kind = "lognormal"\n[estimator]\nk = 8\ncoupling = "antithetic"\n')
        cfg = build_config("diagnose", path)
        assert cfg.seed == 4 and cfg["model.kind"] == "lognormal"
        assert cfg["estimator.k"] == 8 and cfg["estimator.coupling"] == "antithetic"

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("estimator.k = 8\nmodel.s = 1\n")
        cfg = build_config("diagnose", path, ["estimator.k=2", "model.kind=lognormal"], {"seed": 9})
        assert cfg["estimator.k"] == 2 and cfg["model.kind"] == "lognormal" and cfg.seed == 9
        assert cfg["model.s"] == 1.0 and isinstance(cfg["model.s"], float)

    def test_parse_override_values(self):
        assert parse_override("sweep.k_grid=[1, 2]") == ("sweep.k_grid", [1, 2])
        assert parse_override("estimator.coupling=iid") == ("estimator.coupling", "iid")
        assert parse_override("figures.majorizer=true") == ("figures.majorizer", True)
        with pytest.raises(ConfigParseError):
            parse_override("novalue")

    def test_unknown_field_named(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("estimator.kk = 3\n")
        with pytest.raises(ConfigParseError, match="estimator.kk"):
            build_config("diagnose", path)

    def test_syntax_error_has_line(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("seed = 1\nmodel.kind = \n")
        with pytest.raises(ConfigParseError, match="line 2"):
            build_config("diagnose", path)

    @pytest.mark.parametrize("override", ["estimator.k=0", "model.noise_std=-1", "model.A=[[1,2],[3]]",
                                          "output.formats=['png']", "estimator.coupling=sobol"])
    def test_range_checks(self, override):
        with pytest.raises(ConfigParseError):
            build_config("diagnose", None, [override])


class TestWriters:
    def test_json_nulls_and_order(self):
        text = dumps_json({"b": math.inf, "a": np.float64(0.1), "c": np.int64(3), "d": None})
        assert json.loads(text) == {"b": None, "a": 0.1, "c": 3, "d": None}
        assert text.index('"b"') < text.index('"a"')

    def test_csv_formatting(self):
        text = dumps_csv(["x", "y", "z"], [[0.1, None, True], [1e-20, 3, math.nan]])
        assert text == "x,y,z\n0.1,,true\n1e-20,3,\n"

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        write_atomic(tmp_path / "sub" / "a.txt", "hello\n")
        write_atomic(tmp_path / "sub" / "a.txt", "again\n")
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.txt"]
        assert (tmp_path / "sub" / "a.txt").read_text() == "again\n"


class TestCommands:
    def test_diagnose_report(self, tmp_path, capsys):
        assert run_cli(tmp_path, "diagnose", "--set", "estimator.replications=1000000") == 0
        report = json.loads((tmp_path / "report.json").read_text())
        jsonschema.validate(report, REPORT_SCHEMA)
        assert abs(report["gap"] - 0.153426) <= 3 * report["gap_std_error"]
        assert report["gap_exact"] == pytest.approx(0.153426, abs=1e-6)
        assert report["prop2_bound"] >= report["gap"] and report["corollary_bound"] >= report["gap"]
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 1 and out[0].startswith("wrote ") and "report.json" in out[0]

    def test_inapplicable_serialises_as_null(self, tmp_path):
        assert run_cli(tmp_path, "diagnose", "--set", "proposal.loc=[3.0]",
                       "--set", "estimator.replications=100000") == 0
        report = json.loads((tmp_path / "report.json").read_text())
        jsonschema.validate(report, REPORT_SCHEMA)
        assert report["corollary_bound"] is None and report["applicable_corollary"] is False

    def test_sweep_csv(self, tmp_path):
        assert run_cli(tmp_path, "sweep-k", *SMALL) == 0
        with open(tmp_path / "sweep.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == SWEEP_CSV_HEADER
        assert [r[0] for r in rows[1:]] == ["1", "2", "4"]
        assert all("," not in cell for r in rows for cell in r)
        data = json.loads((tmp_path / "sweep.json").read_text())
        assert len(data["paired"]) == 2

    def test_couple_compare(self, tmp_path):
        assert run_cli(tmp_path, "couple-compare", *SMALL) == 0
        data = json.loads((tmp_path / "couple.json").read_text())
        assert [r["coupling"] for r in data["reports"]] == ["iid", "antithetic", "stratified"]
        for r in data["reports"]:
            jsonschema.validate(r, REPORT_SCHEMA)

    def test_fit_trace(self, tmp_path):
        assert run_cli(tmp_path, "fit", *SMALL) == 0
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "iteration,objective,gap,sigma_x,sigma_y,loc_0,log_scale_0"
        assert len(lines) == 1 + 3

    def test_formats_filter(self, tmp_path):
        assert run_cli(tmp_path, "sweep-k", *SMALL, "--formats", "json") == 0
        assert not (tmp_path / "sweep.csv").exists() and (tmp_path / "sweep.json").exists()

    @pytest.mark.parametrize("command", ["diagnose", "sweep-k", "couple-compare", "fit", "figures"])
    def test_determinism(self, tmp_path, command):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main([command, *SMALL, "--majorizer", "--seed", "11", "--out", str(a)]) == 0
        assert cli.main([command, *SMALL, "--majorizer", "--seed", "11", "--out", str(b)]) == 0
        names = sorted(p.name for p in a.iterdir())
        assert names and names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_changes_output(self, tmp_path):
        cli.main(["diagnose", *SMALL, "--seed", "1", "--out", str(tmp_path / "a")])
        cli.main(["diagnose", *SMALL, "--seed", "2", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "report.json").read_bytes() != (tmp_path / "b" / "report.json").read_bytes()


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        assert run_cli(tmp_path, "diagnose", "--set", "estimator.k=-2") == cli.EXIT_CONFIG
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config_error" and "estimator.k" in err["message"]

    def test_shape_error_is_config(self, tmp_path):
        assert run_cli(tmp_path, "diagnose", "--set", "proposal.loc=[0.0, 1.0]") == cli.EXIT_CONFIG

    def test_missing_config_file_is_io(self, tmp_path):
        assert run_cli(tmp_path, "diagnose", "--config", str(tmp_path / "nope.toml")) == cli.EXIT_IO

    def test_unwritable_output_is_io(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert cli.main(["diagnose", *SMALL, "--out", str(blocker / "sub")]) == cli.EXIT_IO
        assert json.loads(capsys.readouterr().err)["error"] == "io_error"

    def test_divergence(self, tmp_path):
        assert run_cli(tmp_path, "fit", "--set", "fit.step_size=5.0", "--set", "proposal.loc=[3.0]",
                       "--set", "fit.steps=100") == cli.EXIT_DIVERGENCE

    def test_oracle_unavailable(self, tmp_path, monkeypatch):
        def boom(cfg):
            raise OracleUnavailable("no evidence")

        monkeypatch.setattr(cli, "_run_sweep", boom)
        assert run_cli(tmp_path, "sweep-k") == cli.EXIT_ORACLE

    def test_help_documents_codes(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["--help"])
        text = capsys.readouterr().out
        for code in ("0", "2", "3", "4", "5"):
            assert f"  {code}  " in text


def parse_svg(text):
    root = ET.fromstring(text)
    assert root.tag == SVG + "svg"
    assert root.get("width") == "800" and root.get("height") == "600"
    return root


def by_class(root, tag, cls):
    return [e for e in root.iter(SVG + tag) if e.get("class") == cls]


class TestFigures:
    @pytest.fixture
    def data(self, rng):
        out = {}
        for k in (1, 64):
            y = np.log(np.exp(rng.normal(-0.125, 0.5, size=(400, k))).mean(axis=1))
            out[k] = (np.exp(y), y)
        return out

    def test_concentration_structure(self, data):
        root = parse_svg(concentration_svg(data))
        curve = by_class(root, "polyline", "log-curve")
        assert len(curve) == 1 and len(curve[0].get("points").split()) == CURVE_POINTS
        assert len(by_class(root, "g", "series")) == 2
        for cls in ("mean-x", "mean-y"):
            lines = by_class(root, "line", cls)
            assert len(lines) == 2 and all(l.get("stroke-dasharray") for l in lines)
        assert "stroke-dasharray" not in curve[0].attrib

    def test_iqr_attribute_matches_data(self, data):
        root = parse_svg(concentration_svg(data))
        attrs = {int(g.get("data-k")): float(g.get("data-iqr-x")) for g in by_class(root, "g", "series")}
        assert attrs[1] / attrs[64] == pytest.approx(iqr_shrinkage(data, 1, 64), rel=1e-4)

    def test_single_k(self, data):
        with pytest.raises(InsufficientData):
            concentration_svg({1: data[1]})

    def test_too_few_points(self, data):
        with pytest.raises(InsufficientData):
            concentration_svg({1: data[1], 2: (data[64][0][:50], data[64][1][:50])})

    def test_constant_weights_sit_on_curve(self):
        w = 1.3
        data = {k: (np.full(150, w), np.full(150, math.log(w))) for k in (1, 4)}
        root = parse_svg(concentration_svg(data))
        pts = {(c.get("cx"), c.get("cy")) for c in root.iter(SVG + "circle") if c.get("r") == "1.5"}
        assert len(pts) == 1
        cx, cy = map(float, pts.pop())
        curve = by_class(root, "polyline", "log-curve")[0].get("points").split()
        last_x, last_y = map(float, curve[-1].split(","))
        assert (cx, cy) == pytest.approx((last_x, last_y), abs=1e-6)

    def test_majorizer_structure(self):
        root = parse_svg(majorizer_svg(1.0, 0.8825, 0.5329, -0.125))
        assert len(by_class(root, "polyline", "log-curve")) == 1
        tangent = by_class(root, "polyline", "majorizer")
        assert len(tangent) == 1 and tangent[0].get("stroke") == "#2ca02c"
        for cls in ("point-tangent", "point-majorizer-value", "point-log-value", "point-log-mean"):
            assert len(by_class(root, "circle", cls)) == 1
        for cls in ("mark-nu-x", "mark-mu-x", "mark-nu-plus-c", "mark-mu-y"):
            assert len(by_class(root, "line", cls)) == 1

    def test_majorizer_lies_above_log(self):
        root = parse_svg(majorizer_svg(1.0, 0.8, 0.5, -0.2))
        curve = [tuple(map(float, p.split(","))) for p in by_class(root, "polyline", "log-curve")[0].get("points").split()]
        (x0, y0), (x1, y1) = [tuple(map(float, p.split(","))) for p in
                              by_class(root, "polyline", "majorizer")[0].get("points").split()]
        for cx, cy in curve:
            if x0 <= cx <= x1:
                line_y = y0 + (y1 - y0) * (cx - x0) / (x1 - x0)
                assert line_y <= cy + 1e-6  # pixel y grows downwards

    def test_cli_figures(self, tmp_path, capsys):
        assert run_cli(tmp_path, "figures", "--majorizer", "--set", "model.kind=lognormal") == 0
        parse_svg((tmp_path / "fig_concentration.svg").read_text())
        parse_svg((tmp_path / "fig_majorizer.svg").read_text())
        assert "IQR" in capsys.readouterr().out
