"""Acceptance gate: every criterion at its committed tolerance, one line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the PASS/FAIL lines.
The stochastic matrix (criteria 7 and 8) is executed once and shared.
"""
import subprocess
import sys
import time

import numpy as np
import pytest

from qode import noise_report
from qode import verify as vf

# runtime budgets (seconds) as committed per criterion
BUDGET_1, BUDGET_2, BUDGET_3 = 10.0, 30.0, 60.0
BUDGET_4, BUDGET_5, BUDGET_6 = 300.0, 30.0, 5.0
BUDGET_7_PER_OP, BUDGET_9 = 300.0, 900.0


def _report(num: int, label: str, ok: bool, elapsed: float, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    extra = f" {detail}" if detail else ""
    print(f"ACCEPTANCE {num} [{label}]: {status} ({elapsed:.1f}s){extra}")


@pytest.fixture(scope="module")
def committed_matrix():
    t0 = time.perf_counter()
    runs = vf.committed_runs()
    elapsed = time.perf_counter() - t0
    return runs, elapsed


def test_criterion_1_norm_and_operator_suites():
    t0 = time.perf_counter()
    checks = vf.suite_norms(10_000, seed=0) + vf.suite_operators(10_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < BUDGET_1
    _report(1, "norm/operator inequality suites", ok, elapsed,
            f"worst_slack={min(c.worst_slack for c in checks):.2e}")
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]
    assert elapsed < BUDGET_1


def test_criterion_2_contraction_modulus():
    t0 = time.perf_counter()
    checks = vf.contraction_modulus_checks(trials=10_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < BUDGET_2
    _report(2, "contraction modulus <= gamma", ok, elapsed,
            f"worst_slack={checks[0].worst_slack:.2e}")
    assert all(c.passed for c in checks)
    assert elapsed < BUDGET_2


def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    checks = vf.oracle_checks()
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < BUDGET_3
    _report(3, "brute-force oracle equivalence", ok, elapsed,
            f"worst_slack={min(c.worst_slack for c in checks):.2e}")
    assert all(c.passed for c in checks)
    assert elapsed < BUDGET_3


def test_criterion_4_decay_certificates_mdp():
    t0 = time.perf_counter()
    checks = vf.mdp_certificate_checks()
    elapsed = time.perf_counter() - t0
    certs = [c for c in checks if c.name == "decay_certificates_mdp"]
    ok = all(c.passed for c in checks) and elapsed < BUDGET_4
    _report(4, "decay certificates on 20 random MDPs", ok, elapsed,
            f"cert_slack={certs[0].worst_slack:.2e}")
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]
    assert elapsed < BUDGET_4


def test_criterion_5_decay_certificates_synthetic():
    t0 = time.perf_counter()
    checks = vf.synthetic_certificate_checks() + [vf.scalar_analytic_check()]
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < BUDGET_5
    _report(5, "synthetic-system certificates + analytic scalar", ok, elapsed,
            f"worst_slack={min(c.worst_slack for c in checks):.2e}")
    assert all(c.passed for c in checks)
    assert elapsed < BUDGET_5


def test_criterion_6_scaling_limit_field():
    t0 = time.perf_counter()
    checks = vf.field_limit_checks(np.random.default_rng(0), trials=200)
    elapsed = time.perf_counter() - t0
    limit = [c for c in checks if c.name == "f_infinity_limit_bound"][0]
    ok = all(c.passed for c in checks) and elapsed < BUDGET_6
    _report(6, "large-state limit of the field", ok, elapsed,
            f"limit_slack={limit.worst_slack:.2e}")
    assert all(c.passed for c in checks)
    assert elapsed < BUDGET_6


def test_criterion_7_stochastic_convergence(committed_matrix):
    runs, elapsed = committed_matrix
    ok_all = True
    details = []
    for label, (ref, run_list) in runs.items():
        scale = float(np.max(np.abs(ref)))
        rel = sorted(float(r.error_series[-1]) / scale for r in run_list)
        passing = sum(1 for e in rel if e <= vf.REL_ERROR_THRESHOLD)
        ok_all &= passing >= vf.MIN_PASSING_SEEDS
        details.append(f"{label}:{passing}/10@{rel[-1]:.3f}")
    budget = BUDGET_7_PER_OP * len(runs)
    ok = ok_all and elapsed < budget
    _report(7, "stochastic convergence, committed threshold "
               f"{vf.REL_ERROR_THRESHOLD}", ok, elapsed, " ".join(details))
    assert ok_all, details
    assert elapsed < budget


def test_criterion_8_noise_checks(committed_matrix):
    runs, _ = committed_matrix
    t0 = time.perf_counter()
    worst_z, worst_moment, worst_resid = 0.0, np.inf, -np.inf
    for label, (_, run_list) in runs.items():
        for run in run_list:
            rep = noise_report(run)
            worst_z = max(worst_z, rep.worst_abs_z)
            worst_moment = min(worst_moment, rep.min_moment_slack)
            if rep.max_residual_violation is not None:
                worst_resid = max(worst_resid, rep.max_residual_violation)
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 4.0 and worst_moment >= -1e-12 and worst_resid <= 1e-12
    _report(8, "martingale/moment/residual noise checks", ok, elapsed,
            f"worst_z={worst_z:.2f} moment_slack={worst_moment:.3f} "
            f"resid_viol={worst_resid:.2e}")
    assert worst_z <= 4.0
    assert worst_moment >= -1e-12
    assert worst_resid <= 1e-12


def test_criterion_9_cli_verify_all():
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "qode.cli", "verify", "--suite", "all",
         "--trials", "10000", "--seed", "0"],
        capture_output=True, text=True, timeout=BUDGET_9,
    )
    elapsed = time.perf_counter() - t0
    ok = proc.returncode == 0 and elapsed < BUDGET_9
    _report(9, "qode verify --suite all", ok, elapsed,
            f"exit={proc.returncode}")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert elapsed < BUDGET_9
