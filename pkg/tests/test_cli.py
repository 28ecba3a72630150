import csv
import io
import json

import numpy as np
import pytest

from thermoform import cli
from thermoform.builtins import EXAMPLE22, builtin_map


def _run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_example24(capsys):
    code, out, _ = _run(capsys, "validate", "--map", "example24")
    doc = json.loads(out)
    assert code == 0
    assert doc["validation"]["markov"]["markov"] is False
    assert doc["schema"] == 1
    assert doc["map"]["hash"] == builtin_map("example24").content_hash()
    assert doc["config"]["map_source"] == "example24"


def test_pressure_doubling_csv(capsys):
    code, out, err = _run(capsys, "pressure", "--map", "doubling", "--s-min", "0.5",
                          "--s-max", "1.5", "--s-steps", "3", "--cells", "1024")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    P = np.array([float(r["P"]) for r in rows])
    np.testing.assert_allclose(P, np.array([0.5, 0.0, -0.5]) * np.log(2), atol=1e-6)
    assert json.loads(err.strip().splitlines()[-1])["P1_zero"] is True


def test_pressure_verdict_file(capsys, tmp_path):
    v, o = tmp_path / "v.json", tmp_path / "p.csv"
    code, out, _ = _run(capsys, "pressure", "--map", "doubling", "--s-min", "0.5", "--s-max", "1.5",
                        "--s-steps", "3", "--cells", "256", "--verdict", str(v), "--output", str(o))
    assert code == 0 and out == ""
    assert json.loads(v.read_text())["nonincreasing"] is True
    assert o.read_text().startswith("s,P,lambda,h,converged")


def test_spectrum_hypothesis_failure(capsys):
    code, out, _ = _run(capsys, "spectrum", "--map", "example22", "--s", "1.5")
    assert code == 1
    assert json.loads(out)["error"] == "hypotheses fail"


def test_spectrum_records_seed(capsys):
    code, out, _ = _run(capsys, "spectrum", "--map", "doubling", "--s", "0.5", "--cells", "256",
                        "--seed", "7")
    doc = json.loads(out)
    assert code == 0
    assert doc["lasota_yorke"]["seed"] == 7 and doc["config"]["seed"] == 7
    assert doc["spectrum"]["gamma"] == pytest.approx(np.sqrt(2))


@pytest.mark.parametrize("argv", [
    ["validate", "--map", "/nonexistent/map.json"],
    ["validate", "--map", "example22", "--cells", "100"],
    ["validate", "--map", "example22", "--cells", "8"],
    ["validate", "--map", "example22", "--tol", "0.5"],
    ["validate", "--map", "example22", "--s", "-1"],
    ["pressure", "--map", "doubling", "--s-min", "0.5"],
    ["nosuch", "--map", "doubling"],
    ["validate"],
])
def test_input_errors_exit_3(capsys, argv):
    with pytest.raises(SystemExit) as err:
        raise SystemExit(cli.run(argv))
    assert err.value.code == 3


def test_bad_map_file(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(dict(EXAMPLE22, breakpoints=["0", "1"])))
    code, _, _ = _run(capsys, "validate", "--map", str(p))
    assert code == 3


def test_map_from_file_round_trip(capsys, tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(EXAMPLE22))
    code, out, _ = _run(capsys, "validate", "--map", str(p))
    assert code == 0
    assert json.loads(out)["map"]["hash"] == builtin_map("example22").content_hash()


def test_json_is_deterministic(capsys):
    argv = ["spectrum", "--map", "example24", "--s", "0.5", "--cells", "512"]
    _, a, _ = _run(capsys, *argv)
    _, b, _ = _run(capsys, *argv)
    assert a == b


def test_density_command(capsys):
    code, out, _ = _run(capsys, "density", "--map", "doubling", "--s", "0.8", "--cells", "256")
    doc = json.loads(out)
    assert code == 0
    np.testing.assert_allclose(doc["density"]["values"], 1.0, atol=1e-10)


def test_cylinders_command(capsys):
    code, out, _ = _run(capsys, "cylinders", "--map", "example22", "--s", "0.5", "--depth", "3",
                        "--n-max", "200")
    doc = json.loads(out)
    assert code == 0
    M = [r["M"] for r in doc["condition_B"]["rows"]]
    assert len(M) == 3 and M[0] > M[1] > M[2]
    assert 1.7 <= doc["scaling"]["theta_hat"] <= 2.3


def test_cylinders_csv(capsys):
    code, out, _ = _run(capsys, "cylinders", "--map", "doubling", "--s", "1", "--depth", "3",
                        "--n-max", "40", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    np.testing.assert_allclose([float(r["M_hat"]) for r in rows], [0.5, 0.25, 0.125], atol=1e-9)


def test_report_sections(capsys):
    code, out, _ = _run(capsys, "report", "--map", "doubling", "--s", "0.5", "--cells", "256",
                        "--depth", "2", "--n-max", "20", "--s-min", "0.5", "--s-max", "1.5",
                        "--s-steps", "3")
    doc = json.loads(out)
    assert code == 0
    for key in ("validation", "spectrum", "condition_B", "pressure"):
        assert key in doc
    assert "scaling" not in doc


def test_report_short_circuits(capsys):
    code, out, _ = _run(capsys, "report", "--map", "example22", "--s", "1.5")
    doc = json.loads(out)
    assert code == 1
    assert set(doc) >= {"validation"} and "spectrum" not in doc
