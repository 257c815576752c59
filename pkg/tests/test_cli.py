import json
import math

import numpy as np
import pytest

from qode import build_sampling_distribution, load_mdp
from qode.cli import main


@pytest.fixture()
def mdp_file(tmp_path):
    path = tmp_path / "m.json"
    assert main(["gen-mdp", "--states", "5", "--actions", "3", "--gamma", "0.9",
                 "--seed", "42", "--out", str(path)]) == 0
    return path


@pytest.fixture()
def unit_file(tmp_path):
    # 1 state, 1 action, r=1, gamma=0.5
    path = tmp_path / "unit.json"
    doc = {
        "n_states": 1, "n_actions": 1, "gamma": 0.5,
        "transition": [[[1.0]]], "reward": [[[1.0]]], "behavior": [[1.0]],
    }
    path.write_text(json.dumps(doc))
    return path


class TestGenMdp:
    def test_byte_identical_outputs(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["gen-mdp", "--states", "5", "--actions", "3", "--gamma", "0.9",
                "--seed", "42"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        out = capsys.readouterr().out
        assert "|S|=5 |A|=3" in out and "min_d=" in out

    def test_generated_file_validates(self, mdp_file):
        build_sampling_distribution(load_mdp(mdp_file))

    def test_single_state_min_d(self, tmp_path, capsys):
        path = tmp_path / "u.json"
        assert main(["gen-mdp", "--states", "1", "--actions", "1", "--gamma", "0.5",
                     "--seed", "0", "--out", str(path)]) == 0
        assert "min_d=1" in capsys.readouterr().out


class TestSolve:
    def test_unit_instance(self, unit_file, tmp_path, capsys):
        out = tmp_path / "fp.json"
        code = main(["solve", "--mdp", str(unit_file), "--operator", "max",
                     "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["converged"] is True
        assert doc["q_star"][0] == pytest.approx(2.0, abs=1e-9)

    def test_twin_lse_closed_form(self, tmp_path):
        path = tmp_path / "twin.json"
        doc = {
            "n_states": 1, "n_actions": 2, "gamma": 0.5,
            "transition": [[[1.0], [1.0]]], "reward": [[[1.0], [1.0]]],
            "behavior": [[0.5, 0.5]],
        }
        path.write_text(json.dumps(doc))
        out = tmp_path / "fp.json"
        assert main(["solve", "--mdp", str(path), "--operator", "lse",
                     "--temperature", "1", "--out", str(out)]) == 0
        q = json.loads(out.read_text())["q_star"]
        assert q[0] == pytest.approx(2.0 + math.log(2.0), abs=1e-9)

    def test_tol_contract(self, mdp_file, tmp_path):
        out = tmp_path / "fp.json"
        assert main(["solve", "--mdp", str(mdp_file), "--tol", "1e-10",
                     "--out", str(out)]) == 0
        assert json.loads(out.read_text())["residual"] <= 1e-10 * (1 - 0.9)

    def test_missing_file_exit_1(self, tmp_path):
        assert main(["solve", "--mdp", str(tmp_path / "nope.json")]) == 1


class TestOde:
    def test_scalar_instance_passes(self, unit_file, tmp_path, capsys):
        cert = tmp_path / "cert.json"
        traj = tmp_path / "traj.csv"
        code = main(["ode", "--mdp", str(unit_file), "--operator", "max",
                     "--p", "auto", "--t-end", "2.0", "--q0-seed", "1",
                     "--cert-out", str(cert), "--traj-out", str(traj)])
        assert code == 0
        doc = json.loads(cert.read_text())
        assert doc["passed"] is True and doc["p"] == 2
        assert traj.read_text().splitlines()[0] == "t,q_0"

    def test_inadmissible_p_exit_1(self, tmp_path, capsys):
        # n = |S||A| = 4 at gamma 0.9: the smallest admissible even p is 16
        path = tmp_path / "m22.json"
        assert main(["gen-mdp", "--states", "2", "--actions", "2", "--gamma", "0.9",
                     "--seed", "3", "--out", str(path)]) == 0
        code = main(["ode", "--mdp", str(path), "--p", "2", "--t-end", "1.0"])
        assert code == 1
        err = capsys.readouterr().err
        assert "minimum admissible even p: 16" in err

    def test_auto_p_recorded(self, tmp_path):
        path = tmp_path / "m22.json"
        assert main(["gen-mdp", "--states", "2", "--actions", "2", "--gamma", "0.9",
                     "--seed", "3", "--out", str(path)]) == 0
        cert = tmp_path / "cert.json"
        assert main(["ode", "--mdp", str(path), "--p", "auto", "--t-end", "2.0",
                     "--stride", "10", "--q0-seed", "3", "--cert-out", str(cert)]) == 0
        assert json.loads(cert.read_text())["p"] == 16


class TestLearn:
    def test_rejected_schedule_names_condition(self, mdp_file, capsys):
        code = main(["learn", "--mdp", str(mdp_file), "--steps-a", "1",
                     "--steps-q", "2", "--iters", "1000"])
        assert code == 1
        assert "sum(alpha_k) < inf" in capsys.readouterr().err

    def test_seed_repetition_identical_csv(self, mdp_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["learn", "--mdp", str(mdp_file), "--operator", "lse",
                "--temperature", "10", "--iters", "20000", "--seed", "5"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_fixed_boltzmann_warns_but_runs(self, mdp_file, tmp_path, capsys):
        out = tmp_path / "bz.csv"
        code = main(["learn", "--mdp", str(mdp_file), "--operator", "boltzmann",
                     "--temperature", "5", "--iters", "10000", "--out", str(out)])
        captured = capsys.readouterr()
        assert "convergence not guaranteed by theory" in captured.err
        assert code == 0
        assert out.exists()

    def test_annealed_run(self, mdp_file, capsys):
        code = main(["learn", "--mdp", str(mdp_file), "--operator", "boltzmann",
                     "--anneal", "--iters", "10000"])
        assert code == 0
        assert "residual_ok=True" in capsys.readouterr().out

    def test_anneal_requires_boltzmann(self, mdp_file):
        assert main(["learn", "--mdp", str(mdp_file), "--operator", "max",
                     "--anneal", "--iters", "1000"]) == 1


class TestVerify:
    def test_trials_zero_usage_error(self):
        assert main(["verify", "--suite", "norms", "--trials", "0"]) == 1

    def test_norms_suite_report(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["verify", "--suite", "norms", "--trials", "200",
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["suite"] == "norms" and doc["passed"] is True
        assert {"name", "trials", "worst_slack", "passed"} <= set(doc["checks"][0])
        assert "platform" in doc
        assert "PASS" in capsys.readouterr().out


class TestExitTaxonomy:
    def test_non_convergence_exit_2(self, mdp_file, capsys):
        code = main(["solve", "--mdp", str(mdp_file), "--max-iter", "2"])
        assert code == 2
        assert "did not converge" in capsys.readouterr().err

    def test_odd_p_rejected(self, mdp_file):
        assert main(["ode", "--mdp", str(mdp_file), "--p", "3", "--t-end", "1.0"]) == 1

    def test_verify_failure_exit_3(self, monkeypatch):
        from qode import verify as vf
        from qode.verify import CheckResult

        monkeypatch.setitem(
            vf.SUITES, "norms", lambda trials, seed: [CheckResult("stub", 1, -1.0, False)]
        )
        assert main(["verify", "--suite", "norms", "--trials", "10"]) == 3

    def test_thread_budget_env_cap(self, monkeypatch):
        from qode.learner import thread_budget

        monkeypatch.setenv("QODE_THREADS", "2")
        assert thread_budget() == 2
        monkeypatch.delenv("QODE_THREADS")
        assert thread_budget() >= 1


class TestConfigAndUsage:
    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"states": 3, "actions": 2, "seed": 1,
                                   "gamma": 0.8, "out": str(tmp_path / "c.json")}))
        code = main(["gen-mdp", "--states", "4", "--actions", "2",
                     "--out", str(tmp_path / "d.json"), "--config", str(cfg)])
        assert code == 0
        m = load_mdp(tmp_path / "d.json")
        assert m.n_states == 4  # flag wins
        assert m.gamma == 0.8   # config fills the rest

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["gen-mdp", "--states", "2", "--actions", "2",
                     "--out", str(tmp_path / "x.json"), "--config", str(cfg)]) == 1

    def test_usage_error_exits_1(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["solve"])  # missing required --mdp
        assert exc_info.value.code == 1
