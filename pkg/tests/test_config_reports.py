import copy
import dataclasses
import enum
import json
import math
import os

import numpy as np
import pytest

from barlab import (
    OffspringLaw,
    SetKind,
    apply_overrides,
    json_bytes,
    load_config,
    read_report,
    sanitize,
    validate_config,
    write_csv,
    write_json,
    write_manifest,
)


def deviation_config():
    return {
        "command": "deviation",
        "seed": 42,
        "model": {
            "law": {"p_both": 0.9, "p_new": 0.05, "p_old": 0.05},
            "params": {"alpha0": 0.5, "beta0": 1.0, "alpha1": 0.3, "beta1": 0.8,
                       "alpha0p": 0.4, "beta0p": 0.9, "alpha1p": 0.2, "beta1p": 1.1},
            "noise": {"sigma": 0.3, "rho": 0.2, "sigma0": 0.3, "sigma1": 0.3},
            "init": {"kind": "point", "value": 1.5},
        },
        "experiment": {
            "mode": "tilde",
            "f": {"kind": "identity"},
            "deltas": [0.2, 0.4],
            "r_grid": [2, 4],
            "n_rep": 100,
        },
    }


def reasons(errors):
    return [f"{e.field}: {e.reason}" for e in errors]


class TestValidConfig:
    def test_typed_sections(self):
        rc, errors = validate_config(deviation_config())
        assert errors == []
        assert rc.command == "deviation" and rc.seed == 42
        assert rc.law == OffspringLaw(0.9, 0.05, 0.05)
        assert rc.params.alpha0 == 0.5 and rc.noise.rho == 0.2
        assert rc.init.kind == "point" and rc.init.value == 1.5
        assert rc.experiment["deltas"] == (0.2, 0.4)
        assert rc.experiment["r_grid"] == (2, 4)
        assert rc.experiment["set"] == "generation"
        assert rc.experiment["mu"]["length"] == 1_000_000

    def test_command_line_command_fills_in(self):
        cfg = deviation_config()
        del cfg["command"]
        rc, errors = validate_config(cfg, "deviation")
        assert errors == [] and rc.command == "deviation"

    def test_defaults(self):
        cfg = deviation_config()
        del cfg["seed"]
        rc, errors = validate_config(cfg)
        assert errors == [] and rc.seed == 0 and rc.output is None
        assert rc.constants.c_prime == 1.0


class TestConfigErrors:
    def test_all_errors_collected_in_one_pass(self):
        cfg = deviation_config()
        cfg["model"]["law"]["p_both"] = 1.5
        cfg["experiment"]["n_rep"] = 0
        cfg["experiment"]["bogus"] = True
        rc, errors = validate_config(cfg)
        assert rc is None
        fields = {e.field for e in errors}
        assert {"model.law.p_both", "experiment.n_rep", "experiment.bogus"} <= fields
        assert len(errors) >= 3

    def test_unknown_keys_rejected_at_every_level(self):
        cfg = deviation_config()
        cfg["extra_top"] = 1
        cfg["model"]["extra_model"] = 2
        rc, errors = validate_config(cfg)
        assert rc is None
        assert {"extra_top", "model.extra_model"} == {e.field for e in errors}
        assert all(e.reason == "unknown key" for e in errors)

    def test_h2_named_when_law_mean_too_small(self):
        cfg = deviation_config()
        cfg["model"]["law"] = {"p_both": 0.2, "p_new": 0.4, "p_old": 0.4}  # m = 1.2
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any("(H2) violated" in e.reason and "1.2" in e.reason for e in errors)

    def test_h3_named_for_conditioned_modes(self):
        cfg = deviation_config()
        cfg["model"]["law"] = {"p_both": 0.6, "p_new": 0.2, "p_old": 0.1}  # m = 1.5
        cfg["experiment"]["mode"] = "conditional"
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any("sum to 1" in e.reason for e in errors)

    def test_invalid_correlation_names_positive_definiteness(self):
        cfg = deviation_config()
        cfg["model"]["noise"]["rho"] = 1.0
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any("positive definite" in e.reason for e in errors)

    def test_empty_delta_grid_rejected(self):
        cfg = deviation_config()
        cfg["experiment"]["deltas"] = []
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "experiment.deltas" and "non-empty" in e.reason
                   for e in errors)

    def test_theta_mode_takes_no_f(self):
        cfg = deviation_config()
        cfg["experiment"]["mode"] = "theta"
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "experiment.f" for e in errors)

    def test_w_depth_must_reach_grid(self):
        cfg = deviation_config()
        cfg["experiment"]["w_depth"] = 3
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "experiment.w_depth" for e in errors)

    def test_command_mismatch(self):
        rc, errors = validate_config(deviation_config(), "simulate")
        assert rc is None
        assert any("declares" in e.reason for e in errors)

    def test_command_required_somewhere(self):
        cfg = deviation_config()
        del cfg["command"]
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "command" for e in errors)

    def test_negative_seed_rejected(self):
        cfg = deviation_config()
        cfg["seed"] = -1
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "seed" for e in errors)


class TestOtherCommands:
    def _model(self):
        return copy.deepcopy(deviation_config()["model"])

    def test_estimate_depth_default_and_floor(self):
        cfg = {"command": "estimate", "model": self._model(),
               "experiment": {"n": 4}}
        rc, errors = validate_config(cfg)
        assert errors == [] and rc.experiment["max_depth"] == 5
        cfg["experiment"]["max_depth"] = 4
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "experiment.max_depth" for e in errors)

    def test_chain_rejects_subtract_mu(self):
        cfg = {"command": "chain", "model": self._model(),
               "experiment": {"f": {"kind": "identity", "subtract_mu": True},
                              "x_grid": [-2.0, 2.0], "k_max": 10, "n_rep": 100}}
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "experiment.f.subtract_mu" for e in errors)

    def test_bounds_conditional_needs_admissible_b(self):
        cfg = {"command": "bounds", "model": self._model(),
               "constants": {"a": 0.5, "b": 0.5},
               "experiment": {"deltas": [0.5], "r_grid": [2, 4],
                              "forms": ["conditional"]}}
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "constants.b" and "b < a/(delta+1)" in e.reason
                   for e in errors)

    def test_bounds_theta_needs_small_gamma(self):
        cfg = {"command": "bounds", "model": self._model(),
               "constants": {"gamma": 1.0, "b": 0.1},
               "experiment": {"deltas": [1.0], "r_grid": [2, 4],
                              "forms": ["theta"]}}
        rc, errors = validate_config(cfg)
        assert rc is None
        assert any(e.field == "constants.gamma" for e in errors)

    def test_report_requires_input_path(self):
        rc, errors = validate_config({"command": "report"})
        assert rc is None
        assert any(e.field == "report" and "missing" in e.reason for e in errors)
        rc, errors = validate_config({"command": "report", "report": {}})
        assert rc is None
        assert any(e.field == "report.input" for e in errors)
        rc, errors = validate_config({"command": "report",
                                      "report": {"input": "out/report.json"}})
        assert errors == [] and rc.report_input == "out/report.json"


class TestOverridesAndLoading:
    def test_override_parses_yaml_scalars(self):
        cfg = {}
        apply_overrides(cfg, ["model.noise.sigma=0.7", "experiment.centered=true",
                              "experiment.deltas=[0.1, 0.2]", "output=runs/x"])
        assert cfg["model"]["noise"]["sigma"] == 0.7
        assert cfg["experiment"]["centered"] is True
        assert cfg["experiment"]["deltas"] == [0.1, 0.2]
        assert cfg["output"] == "runs/x"

    def test_override_replaces_existing(self):
        cfg = deviation_config()
        apply_overrides(cfg, ["experiment.n_rep=500"])
        assert cfg["experiment"]["n_rep"] == 500

    def test_override_requires_assignment(self):
        with pytest.raises(ValueError, match="path=value"):
            apply_overrides({}, ["experiment.n_rep"])
        with pytest.raises(ValueError, match="empty path"):
            apply_overrides({}, ["=5"])

    def test_load_config_roundtrip(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("command: simulate\nseed: 3\n")
        assert load_config(str(path)) == {"command": "simulate", "seed": 3}

    def test_load_config_requires_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError, match="mapping"):
            load_config(str(path))

    def test_load_config_empty_file_is_empty_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("")
        assert load_config(str(path)) == {}


@dataclasses.dataclass(frozen=True)
class Point:
    x: float
    label: str


class Color(enum.Enum):
    RED = "red"


class TestSanitize:
    def test_structures_reduce_to_json_types(self):
        obj = {"p": Point(1.5, "a"), "c": Color.RED, "t": (1, 2),
               "arr": np.array([1.0, 2.0]), "i": np.int64(3), "f": np.float64(0.25),
               "set_kind": SetKind.GENERATION}
        assert sanitize(obj) == {"p": {"x": 1.5, "label": "a"}, "c": "red",
                                 "t": [1, 2], "arr": [1.0, 2.0], "i": 3, "f": 0.25,
                                 "set_kind": "generation"}

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="NaN"):
            sanitize({"x": float("nan")})
        with pytest.raises(ValueError, match="NaN"):
            sanitize([math.inf])

    def test_non_string_keys_rejected(self):
        with pytest.raises(ValueError, match="keys must be strings"):
            sanitize({1: "x"})

    def test_unknown_types_rejected(self):
        with pytest.raises(ValueError, match="cannot serialize"):
            sanitize({"s": {1, 2}})


class TestJsonOutput:
    def test_bytes_are_key_sorted_and_compact(self):
        assert json_bytes({"b": 1, "a": 2}) == b'{"a":2,"b":1}\n'

    def test_insertion_order_is_irrelevant(self):
        one = json_bytes({"x": 1, "y": {"b": 2.5, "a": [1, 2]}})
        two = json_bytes({"y": {"a": [1, 2], "b": 2.5}, "x": 1})
        assert one == two

    def test_floats_use_shortest_repr(self):
        assert json_bytes({"v": 0.1}) == b'{"v":0.1}\n'

    def test_write_and_read_back(self, tmp_path):
        path = str(tmp_path / "report.json")
        write_json(path, {"kind": "demo", "rows": [1, 2]})
        assert read_report(path) == {"kind": "demo", "rows": [1, 2]}

    def test_write_leaves_no_temp_files(self, tmp_path):
        path = str(tmp_path / "report.json")
        write_json(path, {"kind": "demo"})
        assert os.listdir(tmp_path) == ["report.json"]

    def test_read_report_requires_kind(self, tmp_path):
        path = str(tmp_path / "other.json")
        path_obj = tmp_path / "other.json"
        path_obj.write_text('{"rows": []}\n')
        with pytest.raises(ValueError, match="kind"):
            read_report(path)


class TestCsvOutput:
    def test_exact_text(self, tmp_path):
        path = str(tmp_path / "rows.csv")
        write_csv(path, ("r", "p_hat", "note", "kept"),
                  [(2, 0.1, None, True), (3, 0.30000000000000004, "x", False)])
        text = (tmp_path / "rows.csv").read_text()
        assert text == ("r,p_hat,note,kept\n"
                        "2,0.1,,true\n"
                        "3,0.30000000000000004,x,false\n")

    def test_row_width_checked(self, tmp_path):
        with pytest.raises(ValueError, match="row width"):
            write_csv(str(tmp_path / "bad.csv"), ("a", "b"), [(1,)])


class TestManifest:
    def test_contents(self, tmp_path):
        import barlab
        path = write_manifest(str(tmp_path), "simulate", 7,
                              ["b.csv", "a.json"], extra={"config": {"seed": 7}})
        with open(path) as fh:
            manifest = json.load(fh)
        assert manifest["command"] == "simulate" and manifest["seed"] == 7
        assert manifest["outputs"] == ["a.json", "b.csv"]
        assert manifest["version"] == barlab.__version__
        assert manifest["config"] == {"seed": 7}
        assert "T" in manifest["created_utc"]  # ISO timestamp
