import json
import math

import numpy as np
import pytest

from stein_bounds import cli
from stein_bounds.bounds import BoundReport
from stein_bounds.exchangeable import perm_sum_law, perm_sum_variance
from stein_bounds.harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    build_model,
    random_admissible_matrix,
    random_centered_law,
    run,
)
from stein_bounds.distributions import moments


class TestRandomAdmissibleMatrix:
    def test_row_column_sums_vanish(self):
        cm = random_admissible_matrix(7, seed=5)
        assert np.max(np.abs(cm.c.sum(axis=0))) <= 1e-12
        assert np.max(np.abs(cm.c.sum(axis=1))) <= 1e-12

    def test_unit_variance_by_enumeration(self):
        cm = random_admissible_matrix(5, seed=9)
        law = perm_sum_law(cm)
        var = law.expect(lambda a: a * a) - law.expect(lambda a: a) ** 2
        assert abs(var - 1.0) <= 1e-8

    def test_seed_reproducibility(self):
        a = random_admissible_matrix(6, seed=123)
        b = random_admissible_matrix(6, seed=123)
        assert np.array_equal(a.c, b.c)

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            random_admissible_matrix(1, seed=0)


class TestRandomCenteredLaw:
    def test_exactly_centered(self, rng):
        for _ in range(20):
            law = random_centered_law(rng)
            assert abs(moments(law).mean) <= 1e-12


class TestConfigValidation:
    def test_empty_tasks_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(model={"kind": "iid-rademacher", "n": 4}, tasks=(), seed=1)

    def test_unknown_task_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(model={"kind": "iid-rademacher", "n": 4},
                             tasks=("not_a_task",), seed=1)

    def test_explicit_seed_required(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(model={"kind": "iid-rademacher", "n": 4},
                             tasks=("dw_indep",), seed=None)

    def test_seed_range_checked(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(model={"kind": "iid-rademacher", "n": 4},
                             tasks=("dw_indep",), seed=-1)

    def test_mc_tasks_need_reps(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(model={"kind": "iid-rademacher", "n": 4},
                             tasks=("dw_zero_bias",), seed=1, reps=10)

    def test_format_checked(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(model={"kind": "iid-rademacher", "n": 4},
                             tasks=("dw_indep",), seed=1, format="xml")

    def test_from_dict_overrides(self):
        cfg = ExperimentConfig.from_dict(
            {"model": {"kind": "iid-rademacher", "n": 4}, "tasks": ["dw_indep"], "seed": 1},
            overrides={"seed": 2, "reps": 5000},
        )
        assert cfg.seed == 2 and cfg.reps == 5000

    def test_missing_field_reported(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"tasks": ["dw_indep"], "seed": 1})


class TestBuildModel:
    def test_iid_rademacher(self):
        ctx = build_model({"kind": "iid-rademacher", "n": 6})
        assert ctx.kind == "indep_sum" and ctx.n == 6
        assert ctx.indep.normalized

    def test_combinatorial_random(self):
        ctx = build_model({"kind": "combinatorial-random", "n": 5, "seed": 3})
        assert ctx.kind == "combinatorial" and ctx.comb.unit_variance

    def test_gaussian(self):
        ctx = build_model({"kind": "gaussian-quadratic", "n": 12})
        assert ctx.kind == "gaussian" and ctx.gaussian.name == "quadratic"

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            build_model({"kind": "mystery"})

    def test_components_from_csv(self, tmp_path):
        from stein_bounds.distributions import rademacher
        paths = []
        for k in range(3):
            p = tmp_path / f"c{k}.csv"
            rademacher(1.0 + k).to_csv(p)
            paths.append(str(p))
        ctx = build_model({"kind": "components", "paths": paths})
        assert ctx.indep.n == 3 and ctx.indep.normalized


class TestRun:
    def test_documented_example(self):
        cfg = ExperimentConfig(
            model={"kind": "iid-rademacher", "n": 100},
            tasks=("dw_indep", "be_iid", "kolmogorov_exact"),
            seed=7,
        )
        report = run(cfg)
        assert not report.errors
        values = {r.bound_name: r for r in report.bounds}
        assert abs(values["dw_indep"].bound_value - 0.3) <= 1e-15
        assert values["be_iid"].bound_value == 0.65
        assert sum(1 for r in report.bounds if r.dominates is True) == 2
        assert report.distances[0]["name"] == "kolmogorov_exact"

    def test_task_isolation(self):
        cfg = ExperimentConfig(
            model={"kind": "gaussian-linear", "n": 4},
            tasks=("dw_indep", "dtv_interpolation"),
            seed=3, reps=2000,
        )
        report = run(cfg)
        # dw_indep cannot run on a gaussian functional: recorded, not fatal
        assert len(report.errors) == 1
        assert report.errors[0]["task"] == "dw_indep"
        assert len(report.bounds) == 1

    def test_byte_identical_reruns(self):
        cfg = ExperimentConfig(
            model={"kind": "iid-rademacher", "n": 16},
            tasks=("dw_indep", "be_iid", "dw_zero_bias", "antisymmetry"),
            seed=11, reps=2000,
        )
        first = run(cfg).to_json(include_wall_time=False)
        second = run(cfg).to_json(include_wall_time=False)
        assert first.encode() == second.encode()

    def test_seed_changes_mc_numbers(self):
        base = dict(model={"kind": "iid-rademacher", "n": 16}, tasks=("dw_zero_bias",))
        a = run(ExperimentConfig(seed=1, reps=2000, **base))
        b = run(ExperimentConfig(seed=2, reps=2000, **base))
        assert a.bounds[0].bound_value != b.bounds[0].bound_value

    def test_report_embeds_provenance(self):
        cfg = ExperimentConfig(model={"kind": "iid-rademacher", "n": 8},
                               tasks=("dw_indep",), seed=5, threads=2)
        data = run(cfg).to_dict()
        assert data["config"]["seed"] == 5
        assert data["threads"] == 2
        assert data["version"]
        assert "wall_time_s" in data

    def test_exchangeable_tasks_on_combinatorial(self):
        cfg = ExperimentConfig(
            model={"kind": "combinatorial-random", "n": 5, "seed": 2},
            tasks=("dw_exchangeable", "dk_exchangeable", "regression"),
            seed=13,
        )
        report = run(cfg)
        assert not report.errors
        assert all(r.dominates is True for r in report.bounds)
        assert report.residuals[0]["pass"] is True


class TestCli:
    def test_bounds_requires_config_or_flags(self):
        assert cli.main(["bounds"]) == cli.EXIT_CONFIG

    def test_bounds_with_flags(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = cli.main([
            "bounds", "--model", "iid-rademacher", "--n", "16",
            "--tasks", "dw_indep,be_iid", "--seed", "3", "--out", str(out),
        ])
        assert code == cli.EXIT_OK
        data = json.loads(out.read_text())
        assert {b["bound_name"] for b in data["bounds"]} == {"dw_indep", "be_iid"}

    def test_bounds_with_config_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "model": {"kind": "iid-rademacher", "n": 32},
            "tasks": ["dw_indep"], "seed": 4,
        }))
        out = tmp_path / "r.csv"
        code = cli.main(["bounds", "--config", str(cfg), "--format", "csv",
                         "--out", str(out)])
        assert code == cli.EXIT_OK
        assert out.read_text().startswith("bound_name,")

    def test_verify_regression(self, capsys):
        code = cli.main(["verify", "regression", "--model", "iid-rademacher",
                         "--n", "5", "--seed", "7"])
        assert code == cli.EXIT_OK

    def test_verify_needs_seed(self):
        assert cli.main(["verify", "regression", "--n", "4"]) == cli.EXIT_CONFIG

    def test_experiment_be_sweep_csv(self, capsys):
        code = cli.main(["experiment", "be-sweep", "--n", "10,64",
                         "--seed", "7", "--reps", "2000", "--format", "csv"])
        assert code == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 3
        assert lines[0].startswith("bound_name,")

    def test_experiment_bad_n_list(self):
        assert cli.main(["experiment", "be-sweep", "--n", "ten", "--seed", "1"]) == cli.EXIT_CONFIG

    def test_domination_failure_exit_code(self, monkeypatch, capsys):
        broken = ExperimentReport(config={}, version="test", threads=1)
        broken.bounds.append(
            BoundReport(bound_name="x", bound_value=0.1, distance_kind="kolmogorov",
                        empirical_distance=0.5, distance_mode="exact", dominates=False)
        )
        monkeypatch.setattr(cli.harness, "run", lambda cfg: broken)
        code = cli.main(["bounds", "--model", "iid-rademacher", "--n", "4",
                         "--tasks", "dw_indep", "--seed", "1"])
        assert code == cli.EXIT_DOMINATION
