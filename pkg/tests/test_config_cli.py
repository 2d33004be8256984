import csv
import io
import json
import subprocess
import sys

import pytest
import yaml

from funcmean import cli
from funcmean.acceptance import bundled_config_text
from funcmean.config import ConfigError, load_plans, parse_config
from funcmean.runner import FIELDS, emit_report, rows_failed, run_plan

HEADER = "experiment_id,space,functional,n,N,seed,analytic_mean,analytic_var,mc_mean,mc_var,mc_stderr,abs_error,z_score,status"

SMALL = {
    "experiments": [
        {
            "id": "u",
            "space": {"kind": "bounded_uniform"},
            "functional": "int(x; 0, 1)",
            "n_list": [8, 16],
            "N": 500,
            "seed": 1,
            "checks": ["mean"],
        }
    ]
}


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if not isinstance(data, str) else data)
    return path


def _with(**changes):
    exp = dict(SMALL["experiments"][0], **changes)
    return {"experiments": [exp]}


def test_csv_header_is_exact():
    assert ",".join(FIELDS) == HEADER


@pytest.mark.parametrize(
    "data, where",
    [
        (_with(N=10), "experiments.0.N"),
        (_with(n_list=[1]), "experiments.0.n_list.0"),
        (_with(checks=["median"]), "experiments.0.checks.0"),
        (_with(space={"kind": "ball2", "R": 1, "extra": 2}), "experiments.0.space.ball2.extra"),
        (_with(space={"kind": "torus"}), "experiments.0.space"),
        (_with(seed=-1), "experiments.0.seed"),
        (_with(functional="int(2x; 0, 1)"), "experiments.0.functional"),
        ({"experiments": [SMALL["experiments"][0], SMALL["experiments"][0]]}, "duplicate experiment id"),
    ],
)
def test_schema_errors_name_the_key(data, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        load_plans(data)


def test_yaml_syntax_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="YAML"):
        parse_config(_write(tmp_path, "experiments: [\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.yaml")


def test_run_rows_and_formats():
    rows = run_plan(load_plans(SMALL))
    assert [r.n for r in rows] == [8, 16]
    text = emit_report(rows).decode()
    assert text.splitlines()[0] == HEADER
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert parsed[0]["status"] == "OK" and float(parsed[0]["analytic_mean"]) == 0.5
    lines = emit_report(rows, "jsonl").decode().splitlines()
    rec = json.loads(lines[1])
    assert list(rec) == list(FIELDS) and rec["n"] == 16
    assert float(parsed[1]["mc_mean"]) == rec["mc_mean"]


def test_seed_override_changes_results():
    plans = load_plans(SMALL)
    a = emit_report(run_plan(plans))
    b = emit_report(run_plan(plans, seed=99))
    assert a != b and b"99" in b


def test_statuses():
    data = _with(space={"kind": "codim2", "a": "1", "b": "x", "r": 1, "s": 1.5}, n_list=[8])
    rows = run_plan(load_plans(data))
    assert rows[0].status == "ILL_POSED" and rows_failed(rows)
    rows = run_plan(load_plans(_with(space={"kind": "cauchy"}, n_list=[8])))
    assert rows[0].status == "HEAVY_TAIL" and not rows_failed(rows)
    rows = run_plan(load_plans(_with(space={"kind": "wiener"}, functional="int(x^3; 0, 1)", n_list=[8])))
    assert rows[0].status == "UNSUPPORTED"
    gap = _with(space={"kind": "wiener"}, functional={"h": "sin(y1)", "atoms": ["int(x^2; 0, 1)"]},
                checks=["exchange_gap"], n_list=[8])
    assert run_plan(load_plans(gap))[0].status == "NONCONCENTRATING"


def test_cli_run_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert cli.main(["run", str(_write(tmp_path, SMALL)), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == HEADER
    bad = _write(tmp_path, _with(N=1), "bad.yaml")
    assert cli.main(["run", str(bad)]) == 2
    assert "experiments.0.N" in capsys.readouterr().err
    ill = _write(tmp_path, _with(space={"kind": "codim2", "a": "1", "b": "x", "r": 1, "s": 1.5}), "ill.yaml")
    assert cli.main(["run", str(ill), "--out", str(tmp_path / "ill.csv")]) == 1


def test_cli_list_spaces(capsys):
    assert cli.main(["list-spaces"]) == 0
    out = capsys.readouterr().out
    for kind in ("bounded_uniform", "codim2", "wiener"):
        assert kind in out


def test_cli_rejects_bad_arguments():
    with pytest.raises(SystemExit):
        cli.main(["run", "x.yaml", "--workers", "0"])
    with pytest.raises(SystemExit):
        cli.main(["run", "x.yaml", "--format", "xml"])


def test_bundled_config_is_byte_identical_across_processes_and_workers(tmp_path):
    cfg = _write(tmp_path, bundled_config_text(), "example.yaml")
    outs = []
    for workers in ("1", "1", "8"):
        proc = subprocess.run(
            [sys.executable, "-m", "funcmean", "run", str(cfg), "--workers", workers],
            capture_output=True,
            check=True,
        )
        outs.append(proc.stdout)
    assert outs[0] == outs[1] == outs[2]
    rows = list(csv.DictReader(io.StringIO(outs[0].decode())))
    assert rows and all(r["status"] != "ILL_POSED" for r in rows)
