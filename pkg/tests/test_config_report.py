import csv
import json
from pathlib import Path

import numpy as np
import pytest

from boundary_triples.cli import run
from boundary_triples.config import ModelConfig, build_model, load_config, parse_config
from boundary_triples.core import Check, FlippedFluxModel
from boundary_triples.discrete import DiscreteBackend
from boundary_triples.errors import ConfigurationError
from boundary_triples.metric_graph import MetricGraph
from boundary_triples.report import (DTN_HEADER, SPECTRUM_HEADER, build_report, dumps,
                                     fmt_float, write_report)

from conftest import DATA


class TestConfig:
    def test_valid_interval(self):
        cfg = load_config(DATA / "interval.json")
        assert cfg.type == "interval" and cfg.edges[0].length == 1.0

    def test_interval_defaults(self):
        cfg = parse_config({"type": "interval"})
        assert [e.from_ for e in cfg.edges] == [0] and cfg.boundary == [0, 1]
        assert build_model(cfg).boundary_dim == 2

    def test_negative_length(self):
        with pytest.raises(ConfigurationError) as exc:
            load_config(DATA / "fault_negative_length.json")
        assert str(exc.value) == "edges[0].length must be > 0"
        assert exc.value.path == "edges[0].length"

    def test_unknown_field(self):
        with pytest.raises(ConfigurationError) as exc:
            load_config(DATA / "fault_unknown_field.json")
        assert "boundry" in str(exc.value)

    def test_zero_length_metric_graph(self):
        with pytest.raises(ConfigurationError, match=r"edges\[1\]\.length"):
            parse_config({"type": "metric_graph", "boundary": [0],
                          "edges": [{"from": 0, "to": 1, "length": 1},
                                    {"from": 1, "to": 2, "length": 0}]})

    def test_discrete_needs_discretization(self):
        with pytest.raises(ConfigurationError) as exc:
            parse_config({"type": "discrete", "edges": [{"from": 0, "to": 1, "length": 1}],
                          "boundary": [0, 1]})
        assert exc.value.path == "discretization"

    def test_interval_must_be_single_edge(self):
        with pytest.raises(ConfigurationError):
            parse_config({"type": "interval", "edges": [{"from": 0, "to": 1, "length": 1},
                                                        {"from": 1, "to": 2, "length": 1}]})

    def test_bad_scheme(self):
        with pytest.raises(ConfigurationError, match="scheme"):
            parse_config({"type": "discrete", "edges": [{"from": 0, "to": 1, "length": 1}],
                          "boundary": [0, 1],
                          "discretization": {"n_per_edge": 2, "scheme": "fem-p3"}})

    def test_unreadable_and_malformed(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_config(bad)

    def test_build_models(self):
        assert isinstance(build_model(load_config(DATA / "star3.json")), MetricGraph)
        assert isinstance(build_model(load_config(DATA / "interval_fem.json")), DiscreteBackend)
        assert isinstance(build_model(load_config(DATA / "fault_flipped_flux.json")),
                          FlippedFluxModel)

    def test_echo_uses_aliases(self):
        echo = load_config(DATA / "star3.json").echo()
        assert echo["edges"][0] == {"from": "c", "to": "a", "length": 1.0}


class TestReport:
    def test_float_format(self):
        assert fmt_float(0.1) == "0.10000000000000001"
        assert fmt_float(1.0) == "1.0"
        assert fmt_float(1e-300) == format(1e-300, ".17g") == "1e-300"
        assert fmt_float(float("nan")) == "null"
        assert fmt_float(2.0 ** 60) == "1.152921504606847e+18"

    def test_round_trip_is_bit_exact(self, rng):
        vals = list(rng.standard_normal(50) * 10.0 ** rng.integers(-30, 30, 50))
        checks = [Check.measured(f"c{i}", "lem:green", abs(v), 1.0) for i, v in enumerate(vals)]
        text = dumps(build_report("verify", {"type": "interval"}, checks))
        back = json.loads(text)
        assert [c["residual"] for c in back["checks"]] == [abs(v) for v in vals]

    def test_key_order_is_stable(self):
        rep = build_report("dtn", {"b": 1, "a": 2}, [], {}, {"z": 1})
        assert list(json.loads(dumps(rep))) == ["tool", "task", "config", "status", "checks",
                                                "tables", "z"]

    def test_complex_and_arrays(self):
        out = json.loads(dumps({"z": 1 + 2j, "m": np.eye(2), "b": np.bool_(True)}))
        assert out == {"z": {"re": 1.0, "im": 2.0}, "m": [[1.0, 0.0], [0.0, 1.0]], "b": True}

    def test_status_follows_checks(self):
        ok = Check.measured("a", "lem:green", 0.0, 1.0)
        bad = Check.measured("b", "lem:green", 2.0, 1.0)
        skip = Check.skipped("c", "lem:green", "n/a")
        assert build_report("verify", {}, [ok, skip])["status"] == "pass"
        assert build_report("verify", {}, [ok, bad])["status"] == "fail"

    def test_spectrum_csv(self, tmp_path):
        rows = [{"index": 0, "eigenvalue": -2.5, "multiplicity": 1, "method": "dtn"}]
        rep = build_report("spectrum", {}, [], {"spectrum": {"header": SPECTRUM_HEADER,
                                                              "rows": rows}})
        path = tmp_path / "s.csv"
        write_report(rep, path, "csv")
        got = list(csv.reader(path.open()))
        assert got == [["index", "eigenvalue", "multiplicity", "method"],
                       ["0", "-2.5", "1", "dtn"]]

    def test_dtn_csv_header(self):
        rep = build_report("dtn", {}, [], {"dtn": {"header": DTN_HEADER, "rows": []}})
        text = write_report(rep, None, "csv")
        assert text.splitlines()[0] == "z_re,z_im,row,col,entry_re,entry_im"

    def test_csv_needs_single_table(self):
        with pytest.raises(ValueError):
            write_report(build_report("verify", {}, []), None, "csv")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            write_report(build_report("verify", {}, []), None, "xml")

    def test_unserializable(self):
        with pytest.raises(TypeError):
            dumps({"x": object()})

    def test_timings_only_when_given(self):
        assert "timings" not in build_report("verify", {}, [])
        assert build_report("verify", {}, [], timings={"total_seconds": 1.0})["timings"]


class TestShippedSchemas:
    docs = Path(__file__).resolve().parent.parent / "docs"

    def test_config_schema_in_sync(self):
        shipped = json.loads((self.docs / "config.schema.json").read_text())
        assert shipped == ModelConfig.model_json_schema(by_alias=True)

    @pytest.mark.parametrize("argv", [
        ["verify", "--samples", "3"],
        ["dtn", "--z", "-1"],
        ["spectrum", "--robin", "identity", "--window", "-5", "20"],
    ])
    def test_reports_validate(self, argv, tmp_path):
        jsonschema = pytest.importorskip("jsonschema")
        referencing = pytest.importorskip("referencing")
        from referencing.jsonschema import DRAFT202012

        schema = json.loads((self.docs / "report.schema.json").read_text())
        config = json.loads((self.docs / "config.schema.json").read_text())
        registry = referencing.Registry().with_resource(
            "config.schema.json", DRAFT202012.create_resource(config))
        out = tmp_path / "r.json"
        code = run([argv[0], "-m", str(DATA / "interval.json"), "-o", str(out)] + argv[1:])
        assert code == 0
        validator = jsonschema.Draft202012Validator(schema, registry=registry)
        validator.validate(json.loads(out.read_text()))
