import json

import numpy as np
import pytest

from eqmerton import cli
from eqmerton.config import ConfigError, RunConfig, load_config
from eqmerton.model import ExponentialDiscount, HyperbolicDiscount

BASE_INI = """\
[market]
r = 0.05
mu = 0.07
sigma = 0.2

[utility]
p = 0.5

[grid]
horizon = 1.0
n_steps = 200

[discount]
kind = hyperbolic
k = 1.0
gamma = 1.0

[sim]
n_paths = 5000
seed = 7
"""


def write_ini(tmp_path, body=BASE_INI, extra="", name="run.ini"):
    path = tmp_path / name
    path.write_text(body + extra)
    return str(path)


class TestConfigParsing:
    def test_loads_base_config(self, tmp_path):
        cfg = load_config(write_ini(tmp_path))
        assert cfg.market.mu == pytest.approx(0.07)
        assert isinstance(cfg.discount, HyperbolicDiscount)
        assert cfg.sim.n_paths == 5000

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(write_ini(tmp_path, extra="\n[solver]\nmethod = picard\ntypo = 1\n"))

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown section"):
            load_config(write_ini(tmp_path, extra="\n[mystery]\nx = 1\n"))

    def test_missing_section_rejected(self, tmp_path):
        body = BASE_INI.replace("[utility]\np = 0.5\n\n", "")
        with pytest.raises(ConfigError, match="utility"):
            load_config(write_ini(tmp_path, body=body))

    def test_alpha_and_mu_both_rejected(self, tmp_path):
        body = BASE_INI.replace("mu = 0.07", "mu = 0.07\nalpha = 0.12")
        with pytest.raises(ConfigError, match="exactly one"):
            load_config(write_ini(tmp_path, body=body))

    def test_bad_method_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="method"):
            load_config(write_ini(tmp_path, extra="\n[solver]\nmethod = magic\n"))

    def test_mixture_needs_rates_and_weights(self, tmp_path):
        body = BASE_INI.replace("kind = hyperbolic\nk = 1.0\ngamma = 1.0",
                                "kind = mixture\nbetas = 0.4, 0.6")
        with pytest.raises(ConfigError, match="betas and rhos"):
            load_config(write_ini(tmp_path, body=body))

    def test_compare_labels_require_sections(self, tmp_path):
        with pytest.raises(ConfigError, match="missing"):
            load_config(write_ini(tmp_path, extra="\n[compare]\nlabels = ghost\n"))

    def test_dict_roundtrip(self, tmp_path):
        cfg = load_config(write_ini(tmp_path))
        again = RunConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_nonnumeric_value_rejected(self, tmp_path):
        body = BASE_INI.replace("p = 0.5", "p = half")
        with pytest.raises(ConfigError, match="not a number"):
            load_config(write_ini(tmp_path, body=body))


class TestCliSolve:
    def test_solve_success_and_terminal_row(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["solve", "--config", ini, "--out", str(out)]) == 0
        rows = (out / "lambda.csv").read_text().strip().split("\n")
        last = rows[-1].split(",")
        assert float(last[1]) == 1.0  # lambda(T) = 1
        assert (out / "bounds.csv").exists()
        assert (out / "residuals.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["bounds_contain"] is True

    def test_byte_identical_reruns(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        cli.main(["solve", "--config", ini, "--out", str(out)])
        first = {f.name: f.read_bytes() for f in out.iterdir()}
        cli.main(["solve", "--config", ini, "--out", str(out)])
        second = {f.name: f.read_bytes() for f in out.iterdir()}
        assert first == second

    def test_manifest_rerun_reproduces_outputs(self, tmp_path):
        ini = write_ini(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cli.main(["solve", "--config", ini, "--out", str(out1)])
        cli.main(["solve", "--config", str(out1 / "manifest.json"),
                  "--out", str(out2)])
        assert (out1 / "lambda.csv").read_bytes() == (out2 / "lambda.csv").read_bytes()

    def test_mixture_method_on_hyperbolic_records_fit(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["solve", "--config", ini, "--out", str(out),
                         "--method", "mixture"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        fit = manifest["mixture_fit"]
        assert fit["sup_error_h"] < 1e-2
        assert sum(fit["betas"]) == pytest.approx(1.0, abs=1e-9)

    def test_closed_form_requires_exponential(self, tmp_path):
        ini = write_ini(tmp_path)
        rc = cli.main(["solve", "--config", ini, "--out", str(tmp_path / "o"),
                       "--method", "closed_form"])
        assert rc == 2

    def test_missing_config_exit_code(self, tmp_path):
        assert cli.main(["solve", "--config", str(tmp_path / "nope.ini")]) == 2

    def test_nonconvergence_exit_code_with_partial_outputs(self, tmp_path):
        ini = write_ini(tmp_path, extra="\n[solver]\nmax_iter = 1\n")
        out = tmp_path / "out"
        assert cli.main(["solve", "--config", ini, "--out", str(out)]) == 3
        # diagnostics still written
        assert (out / "bounds.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["error"] == "non_convergence"
        assert manifest["iterations"] == 1


class TestCliVerify:
    def test_empty_check_list(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["verify", "--config", ini, "--out", str(out),
                         "--checks", ""]) == 0
        assert (out / "verification.csv").read_text() == \
            "check,statistic,threshold,pass\n"

    def test_duality_checks_pass(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["verify", "--config", ini, "--out", str(out),
                         "--checks", "duality"]) == 0
        body = (out / "verification.csv").read_text()
        assert "dual_pde_residual" in body and "false" not in body

    def test_perturbed_lambda_fails_verification(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        rc = cli.main(["verify", "--config", ini, "--out", str(out),
                       "--checks", "value_identity",
                       "--debug-perturb-lambda", "0.05"])
        assert rc == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["all_passed"] is False

    def test_unknown_check_is_config_error(self, tmp_path):
        ini = write_ini(tmp_path)
        assert cli.main(["verify", "--config", ini, "--out", str(tmp_path / "o"),
                         "--checks", "bogus"]) == 2


class TestCliCompare:
    def compare_ini(self, tmp_path, labels, sections):
        body = BASE_INI.split("[discount]")[0]
        body += f"[compare]\nlabels = {labels}\nprobe_times = 0.25, 0.5\n\n"
        body += sections
        return write_ini(tmp_path, body=body, name="cmp.ini")

    def test_two_specs_distinct_curves(self, tmp_path):
        ini = self.compare_ini(
            tmp_path, "expo, hyper",
            "[discount.expo]\nkind = exponential\nrho = 0.1\n\n"
            "[discount.hyper]\nkind = hyperbolic\nk = 1.0\ngamma = 1.0\n",
        )
        out = tmp_path / "out"
        assert cli.main(["compare", "--config", ini, "--out", str(out)]) == 0
        lines = (out / "compare.csv").read_text().strip().split("\n")[1:]
        blocks = {}
        for line in lines:
            label, t, c, lam = line.split(",")
            blocks.setdefault(label, []).append((t, c))
        assert set(blocks) == {"expo", "hyper"}
        # both consumption curves end at c(T) = 1, but the curves differ
        for rows in blocks.values():
            assert float(rows[-1][1]) == pytest.approx(1.0, abs=1e-12)
        assert blocks["expo"] != blocks["hyper"]
        assert (out / "inconsistency_expo.csv").exists()
        assert (out / "inconsistency_hyper.csv").exists()

    def test_identical_specs_identical_blocks(self, tmp_path):
        ini = self.compare_ini(
            tmp_path, "one, two",
            "[discount.one]\nkind = exponential\nrho = 0.1\n\n"
            "[discount.two]\nkind = exponential\nrho = 0.1\n",
        )
        out = tmp_path / "out"
        assert cli.main(["compare", "--config", ini, "--out", str(out)]) == 0
        lines = (out / "compare.csv").read_text().strip().split("\n")[1:]
        one = [ln.split(",", 1)[1] for ln in lines if ln.startswith("one,")]
        two = [ln.split(",", 1)[1] for ln in lines if ln.startswith("two,")]
        assert one == two

    def test_single_spec_degenerate(self, tmp_path):
        ini = self.compare_ini(
            tmp_path, "solo",
            "[discount.solo]\nkind = exponential\nrho = 0.1\n",
        )
        out = tmp_path / "out"
        assert cli.main(["compare", "--config", ini, "--out", str(out)]) == 0
        lines = (out / "compare.csv").read_text().strip().split("\n")[1:]
        assert all(ln.startswith("solo,") for ln in lines)


class TestCliSimulate:
    def test_simulate_outputs_and_value_match(self, tmp_path):
        ini = write_ini(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["simulate", "--config", ini, "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        j, se = manifest["j_estimate"], manifest["j_std_error"]
        assert abs(j - manifest["value_at_start"]) <= 3 * se
        body = (out / "simulation.csv").read_text().strip().split("\n")
        assert body[0] == "t,mean_wealth,mean_value_over_h"
        assert len(body) == 202  # header + 201 nodes

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        ini1 = write_ini(tmp_path, extra="\n")
        ini4 = write_ini(tmp_path, extra="\n", name="run4.ini")
        with open(ini4, "a") as fh:
            fh.write("n_workers = 4\n")
        out1, out4 = tmp_path / "w1", tmp_path / "w4"
        cli.main(["simulate", "--config", ini1, "--out", str(out1)])
        cli.main(["simulate", "--config", ini4, "--out", str(out4)])
        assert (out1 / "simulation.csv").read_bytes() == \
            (out4 / "simulation.csv").read_bytes()

    def test_seed_override_changes_estimate(self, tmp_path):
        ini = write_ini(tmp_path)
        outs = []
        for seed in (7, 8):
            out = tmp_path / f"s{seed}"
            cli.main(["simulate", "--config", ini, "--out", str(out),
                      "--seed", str(seed)])
            outs.append(json.loads((out / "manifest.json").read_text()))
        assert outs[0]["j_estimate"] != outs[1]["j_estimate"]
        assert outs[0]["config"]["sim"]["seed"] == 7
        assert outs[1]["config"]["sim"]["seed"] == 8
