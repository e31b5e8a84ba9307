"""End-to-end acceptance criteria at full scale; one PASS/FAIL line per criterion."""
import subprocess
import sys
import time

import pytest

from subdiff.experiments import (ExperimentConfig, verify_fracpde, verify_laplace, verify_mlt, verify_occupation,
                                 verify_pd, verify_pricing, verify_rayknight, verify_subordinator, verify_tail)

pytestmark = pytest.mark.acceptance

SEED = 20240601


def _config(**kw):
    return ExperimentConfig(seed=SEED, **kw).validate()


def _judge(log, tag, budget, fn, *args):
    t0 = time.perf_counter()
    rows = fn(*args)
    elapsed = time.perf_counter() - t0
    failed = [r for r in rows if r.rejected]
    worst = max(rows, key=lambda r: r.statistic / r.threshold if r.threshold else r.statistic)
    ok = not failed and elapsed < budget
    detail = f"{len(rows)} checks, worst {worst.name} {worst.statistic:.4g} vs {worst.threshold:.4g}"
    if failed:
        detail += ", rejected: " + ", ".join(sorted({r.name for r in failed}))
    print(line := f"{tag} {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.1f}s of {budget:g}s)")
    log(line)
    assert not failed, line
    assert elapsed < budget, line


def test_ac01_subordinator_law(acceptance_log):
    _judge(acceptance_log, "AC1", 60, verify_subordinator, _config())


def test_ac02_poisson_dirichlet(acceptance_log):
    _judge(acceptance_log, "AC2", 600, verify_pd, _config())


def test_ac03_excursion_tail(acceptance_log):
    _judge(acceptance_log, "AC3", 300, verify_tail, _config())


def test_ac04_event_transforms(acceptance_log):
    _judge(acceptance_log, "AC4", 900, verify_mlt, _config())


def test_ac05_occupation_time_change(acceptance_log):
    _judge(acceptance_log, "AC5", 300, verify_occupation, _config())


def test_ac06_ray_knight(acceptance_log):
    _judge(acceptance_log, "AC6", 600, verify_rayknight, _config())


def test_ac07_fractional_pde(acceptance_log):
    _judge(acceptance_log, "AC7", 600, verify_fracpde, _config())


def test_ac08_pricing(acceptance_log):
    _judge(acceptance_log, "AC8", 1800, verify_pricing, _config())


def test_ac09_gaver_stehfest(acceptance_log):
    _judge(acceptance_log, "AC9", 1, verify_laplace, _config())


REPRO_RUNS = (
    ("verify", "subordinator", "--paths", "12000"),
    ("verify", "pd", "--paths", "300"),
    ("verify", "tail", "--paths", "6000"),
    ("verify", "mlt", "--paths", "11000"),
    ("verify", "occupation", "--paths", "300"),
    ("verify", "rayknight", "--paths", "11000"),
    ("verify", "fracpde", "--paths", "11000"),
    ("verify", "laplace"),
    ("price", "direct", "--paths", "11000"),
    ("price", "decomposition", "--paths", "6000"),
)


def _cli(args, workers):
    cmd = [sys.executable, "-m", "subdiff", *args, "--seed", str(SEED), "--workers", str(workers)]
    proc = subprocess.run(cmd, capture_output=True)
    return proc.returncode, proc.stdout


def test_ac10_reproducibility(acceptance_log):
    t0 = time.perf_counter()
    mismatched = []
    for args in REPRO_RUNS:
        first = _cli(args, 1)
        if first[0] == 1 or not first[1] or _cli(args, 1) != first or _cli(args, 4) != first:
            mismatched.append(" ".join(args[:2]))
    elapsed = time.perf_counter() - t0
    ok = not mismatched and elapsed < 300
    detail = f"{len(REPRO_RUNS)} commands identical over reruns and workers 1/4"
    if mismatched:
        detail = "differing: " + ", ".join(mismatched)
    print(line := f"AC10 {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.1f}s of 300s)")
    acceptance_log(line)
    assert ok, line
