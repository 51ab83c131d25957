import csv
import io
import json
import subprocess
import sys

import pytest

from gbdp import cli
from gbdp.model import ModelSpec


@pytest.fixture
def model(tmp_path):
    def write(spec, name="m.json"):
        p = tmp_path / name
        p.write_text(json.dumps(spec.to_dict()))
        return str(p)

    return write


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_extinction_json(model, capsys):
    code, out, _ = run(["extinction", "--model", model(ModelSpec.linear((2.0,), (1.0,)))], capsys)
    assert code == 0
    assert json.loads(out)["epsilon"] == pytest.approx(0.5, abs=1e-12)


def test_simulate_trajectory_csv_reproducible(model, capsys):
    m = model(ModelSpec.linear((1.0, 0.5), (0.5,)))
    _, a, _ = run(["simulate", "--model", m, "--horizon", "2", "--seed", "5"], capsys)
    _, b, _ = run(["simulate", "--model", m, "--horizon", "2", "--seed", "5"], capsys)
    assert a == b
    rows = list(csv.reader(io.StringIO(a)))
    assert rows[0] == ["time", "state", "event_kind", "event_size"]
    assert rows[1][:3] == ["0.0", "1", "init"]


def test_simulate_replications(model, capsys):
    m = model(ModelSpec.linear((2.0,), (1.0,)))
    code, out, _ = run(["simulate", "--model", m, "--horizon", "1", "--replications", "200"], capsys)
    assert code == 0
    est = json.loads(out)["estimates"]
    assert {e["name"] for e in est} == {"N", "B", "D", "X"}


def test_pmf_methods_agree(model, capsys):
    m = model(ModelSpec.constant((1.0,), (0.5,)))
    _, a, _ = run(["pmf", "--model", m, "--t", "1", "--method", "closed-form", "--format", "json"], capsys)
    _, b, _ = run(["pmf", "--model", m, "--t", "1", "--format", "json"], capsys)
    pa, pb = json.loads(a)[0], json.loads(b)[0]
    da = dict(zip(range(pa["offset"], pa["offset"] + len(pa["probs"])), pa["probs"]))
    db = dict(zip(range(pb["offset"], pb["offset"] + len(pb["probs"])), pb["probs"]))
    assert max(abs(da.get(n, 0) - db.get(n, 0)) for n in set(da) | set(db)) <= 1e-8


def test_moments_and_figure(model, capsys):
    m = model(ModelSpec.linear((2.0,), (1.0,)))
    code, out, _ = run(["moments", "--model", m, "--t", "1"], capsys)
    assert code == 0 and json.loads(out)["mean_N"] == pytest.approx(2.718281828459045)
    code, out, _ = run(["figure", "--model", m, "--kind", "corrBN", "--t", "0,1"], capsys)
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "value", "defined"]
    assert rows[1][2] == "0" and rows[2][2] == "1"


def test_parking_and_laplace(model, capsys):
    code, out, _ = run(["parking", "--model", model(ModelSpec.parking((0.2,), (0.3,), 10)), "--t", "1,2"], capsys)
    assert code == 0 and json.loads(out)["long_run_E_N"] == pytest.approx(4.0)
    code, out, _ = run(["laplace", "--model", model(ModelSpec.linear((2.0,), (1.0,))), "--theta", "0"], capsys)
    assert json.loads(out)["value"] == pytest.approx(0.5, abs=1e-7)


def test_estimate_from_records(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("state_before,sojourn\n1,0.5\n2,0.25\n1,1.0\n")
    code, out, _ = run(["estimate", "--input", str(p)], capsys)
    assert code == 0 and json.loads(out)["lambda_hat"] == 1.5


def test_output_file(model, tmp_path, capsys):
    dest = tmp_path / "out.csv"
    m = model(ModelSpec.linear((2.0,), (1.0,)))
    assert cli.run(["joint", "--model", m, "--t", "0.5", "--kind", "births", "-o", str(dest)]) == 0
    assert dest.read_text().startswith("t,d,b,n,prob")


def test_exit_codes(model, tmp_path, capsys):
    assert run(["nonsense"], capsys)[0] == 1
    assert run(["pmf", "--model", "x.json"], capsys)[0] == 1  # missing --t
    assert run(["extinction", "--model", str(tmp_path / "missing.json")], capsys)[0] == 2
    m = model(ModelSpec.constant((1.0,), (1.0,)))
    assert run(["laplace", "--model", m, "--theta", "1"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"variant": "linear", "lambda": [-1], "mu": [1]}))
    assert run(["extinction", "--model", str(bad)], capsys)[0] == 2


def test_console_entry_point(model):
    m = model(ModelSpec.linear((2.0,), (1.0,)))
    r = subprocess.run([sys.executable, "-m", "gbdp.cli", "extinction", "--model", m],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and json.loads(r.stdout)["epsilon"] == pytest.approx(0.5)
