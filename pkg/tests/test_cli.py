import json
import subprocess
import sys

import pytest

from subdiff.cli import PRICE_COLUMNS, dispatch, read_report, write_report
from subdiff.experiments import ExperimentConfig, UsageError
from subdiff.harness import TestReport
from subdiff.pricing import PriceEstimate


def run(capsys, *argv):
    code = dispatch(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_no_arguments_is_usage_error(capsys):
    code, _, err = run(capsys)
    assert code == 1 and "usage" in err


def test_unknown_target_and_flag(capsys):
    assert run(capsys, "verify", "nonsense")[0] == 1
    assert run(capsys, "verify", "laplace", "--bogus", "1")[0] == 1
    assert run(capsys, "price", "direct", "--paths", "1")[0] == 1
    assert run(capsys, "verify", "laplace", "--order", "13")[0] == 1


def test_laplace_default_order_passes(capsys):
    code, out, _ = run(capsys, "verify", "laplace")
    rows = read_report(out)
    assert code == 0 and rows[0]["rejected"] == "false"
    assert float(rows[0]["statistic"]) < 1e-6


def test_laplace_order_twelve_is_rejected(capsys):
    code, out, _ = run(capsys, "verify", "laplace", "--order", "12", "--format", "json")
    rows = json.loads(out)
    assert code == 2 and rows[0]["rejected"] is True
    assert rows[0]["statistic"] > 1e-6


def test_price_output_is_reproducible(capsys, tmp_path):
    args = ("price", "direct", "--paths", "300", "--seed", "42", "--D", "0.1")
    a = run(capsys, *args)
    b = run(capsys, *args)
    assert a[0] == 0 and a[1] == b[1]
    rows = read_report(a[1])
    assert list(rows[0]) == list(PRICE_COLUMNS) + ["schema_version"]
    assert rows[0]["method"] == "direct" and rows[0]["n_paths"] == "300"
    out = tmp_path / "p.csv"
    assert run(capsys, *args, "--out", str(out))[1] == ""
    assert out.read_text() == a[1]


def test_price_independent_of_workers(capsys):
    args = ("price", "direct", "--paths", "10500", "--seed", "3", "--D", "0.1")
    assert run(capsys, *args, "--workers", "1")[1] == run(capsys, *args, "--workers", "3")[1]


def test_bypass_flag(capsys):
    base = ("price", "direct", "--paths", "300", "--exponent", "drift", "--kappa", "1", "--L", "0.95",
            "--payoff-center", "1.1")
    a = read_report(run(capsys, *base)[1])[0]
    b = read_report(run(capsys, *base, "--bypass")[1])[0]
    assert a["value"] == b["value"] and b["method"] == "direct_bypass"


def test_decomposition_contract_error(capsys):
    code, _, err = run(capsys, "price", "decomposition", "--paths", "100", "--L", "0.9")
    assert code == 1 and "L = x" in err


def test_simulate_emits_vertices(capsys):
    code, out, _ = run(capsys, "simulate", "--T", "0.5", "--seed", "1")
    rows = read_report(out)
    assert code == 0 and len(rows) > 10
    t = [float(r["t"]) for r in rows]
    e = [float(r["E"]) for r in rows]
    assert t == sorted(t) and e == sorted(e) and t[-1] <= 0.5


def test_config_file_with_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"transforms": {"order": 12}, "harness": {"seed": 5}}))
    assert run(capsys, "verify", "laplace", "--config", str(cfg))[0] == 2
    assert run(capsys, "verify", "laplace", "--config", str(cfg), "--order", "18")[0] == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert run(capsys, "verify", "laplace", "--config", str(bad))[0] == 1


def test_config_round_trip():
    cfg = ExperimentConfig(paths=10, seed=3)
    assert ExperimentConfig.from_dict(json.loads(cfg.to_json())) == cfg
    with pytest.raises(UsageError):
        ExperimentConfig(beta=1.5).validate()


def test_write_report_formats():
    rep = TestReport("x", 0.5, 1.0, False, (10, 20), {"extra": 1.25})
    rows = read_report(write_report([rep]))
    assert rows[0]["name"] == "x" and rows[0]["sample_sizes"] == "10;20"
    assert float(rows[0]["statistic"]) == 0.5 and rows[0]["schema_version"] == "1"
    js = read_report(write_report([rep], "json"), "json")
    assert js[0]["extra"] == 1.25 and js[0]["rejected"] is False
    text = write_report([], "csv", columns=PRICE_COLUMNS)
    assert text == ",".join(PRICE_COLUMNS) + ",schema_version\n"
    p = PriceEstimate(0.1, 0.2, 3, "direct", 0.0)
    assert read_report(write_report([p], columns=PRICE_COLUMNS))[0]["value"] == "0.10000000000000001"
    with pytest.raises(UsageError):
        write_report([rep], "xml")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "subdiff", "verify", "laplace"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("name,")
