import io
import json
import math
import subprocess
import sys

import pytest

from covshift_knn.cli import fmt_exponent, main, parse_design
from covshift_knn.config import ConfigError, ExperimentConfig, load_config, preset_names
from covshift_knn.distributions import Exponential, Uniform
from covshift_knn.risk import EstimatorConfig

SMALL = ["--n-grid", "64,128,256", "--replicates", "5", "--test-count", "100"]


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def small_config(tmp_path, **over):
    cfg = json.loads(load_config("exponential").dumps())
    cfg.update(n_grid=[64, 128, 256], replicates=5, test_count=100)
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestConfig:
    @pytest.mark.parametrize("name", preset_names())
    def test_preset_round_trip(self, name):
        cfg = load_config(name)
        again = ExperimentConfig.loads(cfg.dumps())
        assert again == cfg
        assert again.dumps() == cfg.dumps()

    def test_presets_shipped(self):
        assert {"transferless", "exponential", "pareto"} <= set(preset_names())

    def test_round_trip_non_default_fields(self):
        cfg = load_config("pareto").with_overrides(
            estimators={"two": EstimatorConfig(kind="local", two_sample=True, kappa_q=2.5, rho=1.5)},
            m_grid=[100], output="x.csv")
        assert ExperimentConfig.loads(cfg.dumps()) == cfg

    def test_single_estimator_shorthand(self):
        d = json.loads(load_config("transferless").dumps())
        d["estimator"] = d.pop("estimators")[0]
        cfg = ExperimentConfig.from_dict(d)
        assert list(cfg.estimators) == ["local-one-sample"]

    @pytest.mark.parametrize("mutate, match", [
        (lambda d: d["task"]["function"].update(name="cosine"), "unknown function"),
        (lambda d: d["task"]["noise"].update(name="cauchy"), "unknown noise"),
        (lambda d: d["task"]["source"].update(family="weibull"), "bad design"),
        (lambda d: d.update(replicates=0), "replicates"),
        (lambda d: d.update(n_grid="big"), "n_grid"),
        (lambda d: d.update(colour="red"), "unknown config keys"),
        (lambda d: d["estimators"][0].update(kind="kernel"), "kind"),
        (lambda d: d["estimators"].append(dict(d["estimators"][0])), "duplicate"),
        (lambda d: d.pop("task"), "missing"),
    ])
    def test_rejects(self, mutate, match):
        d = json.loads(load_config("exponential").dumps())
        mutate(d)
        with pytest.raises(ConfigError, match=match):
            ExperimentConfig.from_dict(d)

    def test_invalid_json(self):
        with pytest.raises(ConfigError, match="invalid JSON"):
            ExperimentConfig.loads("{")

    def test_paired_adds_counterpart(self):
        cfg = load_config("transferless").paired()
        assert [e.kind for e in cfg.estimators.values()] == ["standard", "local"]


class TestHelpers:
    def test_fmt_exponent(self):
        assert fmt_exponent(2 / 3) == "2/3"
        assert fmt_exponent(2.0) == "2"
        assert fmt_exponent(0.123456789) == "0.123457"
        assert fmt_exponent(float("inf")) == "inf"

    def test_parse_design(self):
        assert parse_design("exponential:2") == Exponential(2)
        assert parse_design("uniform:0,2") == Uniform(0, 2)
        assert parse_design('{"family": "exponential", "lam": 3}') == Exponential(3)


class TestRates:
    def test_table(self):
        code, out = run("rates", "--beta", "1", "--d", "1", "--gamma", "1", "--rho", "4")
        assert code == 0
        lines = {l.split()[0]: l.split() for l in out.splitlines()}
        assert lines["local-one-sample"][1] == "2/3"
        assert lines["standard-one-sample"][1] == "1/2"
        assert lines["standard-one-sample"][3] == "source-limited"

    def test_gap_region(self):
        code, out = run("rates", "--gamma", "0.5")
        assert "gap region: (2/3, 2)" in out
        lines = {l.split()[0]: l.split() for l in out.splitlines()}
        assert float(lines["local-one-sample"][2]) < 2 / 3
        assert float(lines["standard-one-sample"][2]) < 2 / 3

    def test_pareto_pair(self):
        code, out = run("rates", "--source", "pareto:1", "--target", "pareto:3")
        assert code == 0 and "gamma=3/2" in out and "rho=3" in out
        assert out.splitlines()[4].split()[1] == "2/3"

    @pytest.mark.parametrize("argv", [["--beta", "0"], ["--gamma", "-1"], ["--d", "1.5"], ["--source", "pareto:1"]])
    def test_usage_errors(self, argv):
        assert run("rates", *argv)[0] == 2

    def test_figure(self, tmp_path):
        code, _ = run("rates", "--gamma", "1", "--figure", str(tmp_path / "r.png"))
        assert code == 0 and (tmp_path / "r.png").stat().st_size > 0


class TestSimulate:
    def test_csv_summary_and_figure(self, tmp_path):
        out_csv = tmp_path / "out" / "risk.csv"
        code, out = run("-q", "simulate", "transferless", *SMALL, "--output", str(out_csv))
        assert code == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "n,m,replicate,estimator,risk,seed,wall_time_ms"
        assert len(lines) == 1 + 3 * 5
        assert "slope" in out and "±" in out and "vs theoretical 0.6667" in out
        assert out_csv.with_suffix(".png").exists()

    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        paths = []
        for i, threads in enumerate(["1", "1", "8"]):
            p = tmp_path / f"r{i}.csv"
            assert run("-q", "simulate", "transferless", *SMALL, "--threads", threads, "--no-figure",
                       "--output", str(p))[0] == 0
            paths.append(p.read_bytes())
        assert paths[0] == paths[1] == paths[2]

    def test_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("-q", "simulate", "transferless", *SMALL, "--no-figure", "--output", str(a))
        run("-q", "simulate", "transferless", *SMALL, "--no-figure", "--seed", "99", "--output", str(b))
        assert a.read_bytes() != b.read_bytes()

    def test_degenerate_grid(self, capsys):
        code, _ = run("-q", "simulate", "transferless", "--n-grid", "256", "--replicates", "1")
        assert code == 2
        assert "degenerate grid" in capsys.readouterr().err

    def test_config_errors_exit_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run("simulate", str(bad))[0] == 2
        assert run("simulate", "no-such-preset")[0] == 2
        assert run("simulate")[0] == 2

    def test_runtime_failure_exit_one(self, tmp_path, capsys):
        # the standard schedule needs gamma, which has no closed form for this pair
        path = small_config(tmp_path, task={**json.loads(load_config("exponential").dumps())["task"],
                                            "target": {"family": "gaussian", "mu": 0.0, "sigma": 1.0}})
        code, _ = run("-q", "simulate", str(path), "--no-figure", "--output", str(tmp_path / "o.csv"))
        assert code == 1
        assert "n=64, m=0, replicate=0" in capsys.readouterr().err

    def test_stdout_output(self, capsys):
        code, out = run("-q", "simulate", "transferless", *SMALL, "--output", "-")
        assert code == 0 and out.startswith("n,m,replicate,estimator,risk,seed,wall_time_ms\n")

    def test_timing_flag_fills_column(self, tmp_path):
        p = tmp_path / "t.csv"
        run("-q", "simulate", "transferless", *SMALL, "--timing", "--no-figure", "--output", str(p))
        assert float(p.read_text().splitlines()[1].split(",")[-1]) >= 0


class TestCompare:
    def test_two_row_summary(self, tmp_path):
        code, out = run("-q", "compare", str(small_config(tmp_path)), "--output", str(tmp_path / "c.csv"))
        assert code == 0
        assert sum("slope" in l for l in out.splitlines()) == 2
        assert "local wins" in out
        rows = (tmp_path / "c.csv").read_text().splitlines()[1:]
        assert {r.split(",")[3] for r in rows} == {"standard-one-sample", "local-one-sample"}

    def test_constant_density_reduces_to_fixed_k(self, tmp_path):
        # a constant density makes the local count a constant: ceil(ln(256)^(1/3) 256^(2/3)) at n = 256
        k = math.ceil(math.log(256) ** (1 / 3) * 256 ** (2 / 3))
        assert k == 72
        est = [{"name": "a", "kind": "local", "density_override": 1.0},
               {"name": "b", "kind": "standard", "fixed_k": k}]
        path = small_config(tmp_path, estimators=est, n_grid=[256, 257, 258])
        out_csv = tmp_path / "c.csv"
        assert run("-q", "compare", str(path), "--no-figure", "--output", str(out_csv))[0] == 0
        rows = [r.split(",") for r in out_csv.read_text().splitlines()[1:] if r.startswith("256,")]
        risks = {}
        for r in rows:
            risks.setdefault(r[3], []).append(r[4])
        assert risks["a"] == risks["b"]


class TestCheck:
    def test_exponential_all_satisfied(self):
        code, out = run("check", "--source", "exponential:1", "--target", "exponential:2")
        assert code == 0
        assert "dre threshold: 2" in out
        assert "violated" not in out

    def test_pareto_pseudo_moment(self):
        # int q^(1/(rho+1)) is finite iff rho < alpha_Q = 3
        _, out = run("check", "--source", "pareto:1", "--target", "pareto:3", "--rho", "2")
        assert "pseudo-moment: satisfied" in out
        code, out = run("check", "--source", "pareto:1", "--target", "pareto:3", "--rho", "4")
        assert code == 1 and "pseudo-moment: violated; witness rho=4" in out

    def test_gaussian_witness(self):
        code, out = run("check", "--source", "gaussian:0,1", "--target", "gaussian:0,1", "--gamma", "0.5")
        assert code == 1
        assert "property=maximal" in out and "x=" in out

    def test_violated_gamma(self):
        code, out = run("check", "--source", "exponential:1", "--target", "exponential:2", "--gamma", "2.5")
        assert code == 1 and "density ratio exponent: violated" in out

    @pytest.mark.parametrize("pair", [("gaussian", "pareto:1"), ("cauchy", "pareto:1"), ("pareto:1", "uniform:0,1,2")])
    def test_unsupported(self, pair):
        assert run("check", "--source", pair[0], "--target", pair[1])[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "covshift_knn", "rates", "--gamma", "1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "local-one-sample" in res.stdout
