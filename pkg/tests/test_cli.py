import io
import json
import math

import numpy as np
import pytest

import massweight.cli as cli
from massweight.cli import main
from massweight.count_table import read_csv

from conftest import GOLDEN


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture
def fixture_csv(tmp_path):
    return write(tmp_path, "s.csv", "key,mass,fvalue\n01,1,1\n01,1,1\n02,1,3\n")


def test_estimate_fixture(fixture_csv):
    code, out, _ = run(["estimate", fixture_csv])
    assert code == 0
    d = json.loads(out)
    assert d["case"] == "Regular"
    assert d["fbar_new"] == pytest.approx(2.0, rel=1e-12)
    assert d["fbar_blue"] == 5 / 3
    assert d["z_used"] == pytest.approx(GOLDEN, rel=1e-12)
    assert d["manifest"]["command"] == "estimate"
    assert d["mode"] == "solved"


def test_estimate_known_z(fixture_csv):
    code, out, _ = run(["estimate", fixture_csv, "--known-z", "2"])
    assert code == 0
    d = json.loads(out)
    assert d["mode"] == "known"
    # w = 1 / (1 - 1/8) on both points
    assert d["fbar_new"] == pytest.approx(4 * (8 / 7) / 2, rel=1e-14)


@pytest.mark.parametrize("method", ["picard", "secant", "newton"])
def test_estimate_methods_agree(fixture_csv, method):
    _, out, _ = run(["estimate", fixture_csv, "--method", method])
    assert json.loads(out)["z_used"] == pytest.approx(GOLDEN, rel=1e-12)


def test_estimate_all_distinct(tmp_path):
    path = write(tmp_path, "d.csv", "key,mass,fvalue\n01,0.2,1\n02,0.3,4\n")
    code, out, _ = run(["estimate", path])
    d = json.loads(out)
    assert code == 0
    assert d["case"] == "AllDistinct"
    assert d["z_used"] == "inf"
    assert d["fbar_new"] == d["fbar_blue"] == 2.5
    assert d["per_point_var_new"] == {}


def test_estimate_aggregated_input(tmp_path):
    path = write(tmp_path, "a.csv", "key,count,mass,fvalue\n01,2,1,1\n02,1,1,3\n")
    _, out, _ = run(["estimate", path])
    assert json.loads(out)["fbar_new"] == pytest.approx(2.0, rel=1e-12)


def test_estimate_empty_and_malformed(tmp_path):
    assert run(["estimate", write(tmp_path, "e.csv", "")])[0] == 2
    assert run(["estimate", write(tmp_path, "h.csv", "key,mass,fvalue\n")])[0] == 2
    assert run(["estimate", write(tmp_path, "b.csv", "key,mass,fvalue\n01,abc,1\n")])[0] == 2
    assert run(["estimate", str(tmp_path / "missing.csv")])[0] == 2


def test_estimate_mass_mismatch(tmp_path):
    path = write(tmp_path, "m.csv", "key,mass,fvalue\n01,1,1\n01,2,1\n02,1,3\n")
    code, _, err = run(["estimate", path])
    assert code == 3
    assert "inconsistent" in err


def test_bad_arguments():
    assert run(["estimate"])[0] == 2
    assert run(["nonsense"])[0] == 2
    assert run(["oracle", "--size", "9"])[0] == 2
    assert run(["compare", "--regime", "concentrated", "--replicates", "1"])[0] == 2
    assert run(["compare"])[0] == 2


def test_output_uses_17_digits(fixture_csv):
    _, out, _ = run(["estimate", fixture_csv])
    line = next(s for s in out.splitlines() if '"z_used"' in s)
    digits = line.split(":")[1].strip().rstrip(",").replace(".", "").lstrip("0")
    assert len(digits.split("e")[0]) == 17
    assert float(line.split(":")[1].strip().rstrip(",")) == pytest.approx(GOLDEN, rel=1e-15)


def test_dumps_special_values():
    text = cli.dumps({"a": math.nan, "b": math.inf, "c": [0.1], "d": np.int64(3)})
    d = json.loads(text)
    assert d == {"a": None, "b": "inf", "c": [0.1], "d": 3}
    assert "0.10000000000000001" in text


def _comments(out):
    return {ln.split(":", 1)[0][2:]: ln.split(":", 1)[1].strip()
            for ln in out.splitlines() if ln.startswith("# ")}


def test_solve_trace(fixture_csv):
    code, out, _ = run(["solve", fixture_csv, "--method", "picard"])
    assert code == 0
    meta = _comments(out)
    assert meta["case"] == "Regular"
    assert float(meta["z"]) == pytest.approx(GOLDEN, rel=1e-12)
    assert json.loads(meta["manifest"])["method"] == "picard"
    rows = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert rows[0] == "k,z,phi,residual"
    assert len(rows) >= 2


@pytest.mark.parametrize("method", ["picard", "secant", "newton"])
@pytest.mark.parametrize("text", [
    "key,count,mass,fvalue\n01,2,1,1\n02,1,1,3\n",
    "key,count,mass,fvalue\n01,5,0.5,0\n02,1,0.01,0\n03,1,0.02,0\n",
    "key,count,mass,fvalue\n01,3,0.2,0\n02,2,0.3,0\n03,1,0.1,0\n04,1,0.05,0\n",
])
def test_solve_good_turing_not_slower(tmp_path, method, text):
    path = write(tmp_path, "t.csv", text)
    meta = _comments(run(["solve", path, "--method", method])[1])
    its = dict(part.strip().split("=") for part in meta["iterations"].split(","))
    assert int(its["good-turing"]) <= int(its["ps"])


def test_solve_boundary_cases(tmp_path):
    alld = write(tmp_path, "d.csv", "key,mass,fvalue\n01,0.2,1\n02,0.3,4\n")
    meta = _comments(run(["solve", alld])[1])
    assert meta["case"] == "AllDistinct" and meta["z"] == "inf" and meta["iterations"] == "0"
    conc = write(tmp_path, "c.csv", "key,count,mass,fvalue\n01,4,0.25,1\n")
    meta = _comments(run(["solve", conc])[1])
    assert meta["case"] == "Concentrated" and float(meta["z"]) == 0.25
    single = write(tmp_path, "s.csv", "key,mass,fvalue\n01,0.25,1\n")
    assert _comments(run(["solve", single])[1])["z"] == "undetermined"


def test_compare_deterministic(tmp_path):
    p = tmp_path / "r.csv"
    blobs = []
    for _ in range(2):
        code, out, _ = run(["compare", "--a", "2", "--b", "3", "--n", "200", "--replicates", "20",
                            "--seed", "7", "--csv", str(p)])
        assert code == 0
        blobs.append(p.read_bytes())
    assert blobs[0] == blobs[1]
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    assert json.loads(lines[0][len("# manifest: "):])["seed"] == 7
    assert lines[1] == "replicate,fbar_new,fbar_blue,fbar_known_z,z,case"
    assert len(lines) == 22


def test_compare_thread_count_invariant(tmp_path):
    outs = []
    for threads in ("1", "3"):
        p = tmp_path / f"t{threads}.csv"
        run(["compare", "--a", "50", "--b", "1.5", "--n", "100", "--replicates", "12",
             "--seed", "3", "--threads", threads, "--csv", str(p)])
        outs.append([ln for ln in p.read_text().splitlines() if not ln.startswith("#")])
    assert outs[0] == outs[1]


def test_compare_summary(tmp_path):
    js = tmp_path / "s.json"
    code, _, _ = run(["compare", "--regime", "tail_dominated", "--replicates", "30",
                      "--seed", "1", "--json", str(js)])
    assert code == 0
    d = json.loads(js.read_text())
    assert d["manifest"]["config"]["regime"] == "tail_dominated"
    assert d["expected_sampled_mass"] < 0.1
    assert sum(d["cases"].values()) == 30
    assert set(d["new"]) == {"mean", "variance", "stderr"}
    assert d["variance_ratio"] == pytest.approx(d["new"]["variance"] / d["blue"]["variance"])


def test_compare_config_file(tmp_path):
    cfg = write(tmp_path, "c.json", json.dumps({"a": 2.0, "b": 3.0, "n_draws": 50, "m": 2, "seed": 4}))
    code, out, _ = run(["compare", "--config", cfg, "--replicates", "5"])
    d = json.loads(out)
    assert code == 0
    assert d["manifest"]["config"] == {"a": 2.0, "b": 3.0, "n_draws": 50, "m": 2, "seed": 4,
                                       "regime": None}
    bad = write(tmp_path, "bad.json", json.dumps({"a": 2.0, "b": 3.0, "n_draws": 5, "zz": 1}))
    assert run(["compare", "--config", bad, "--replicates", "5"])[0] == 2


def test_generate_roundtrip(tmp_path):
    out = tmp_path / "g.csv"
    code, _, _ = run(["generate", "--regime", "concentrated", "--seed", "5", "--out", str(out)])
    assert code == 0
    text = out.read_text()
    assert text.startswith("# manifest: ")
    table = read_csv(str(out))
    assert table.n_draws == 10 ** 4
    assert all(len(k) == 12 for k in table.keys())
    run(["generate", "--regime", "concentrated", "--seed", "5", "--out", str(out)])
    assert out.read_text() == text


def test_generate_aggregated(tmp_path):
    out = tmp_path / "g.csv"
    run(["generate", "--a", "10", "--b", "2", "--n", "40", "--aggregated", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[1] == "key,count,mass,fvalue"
    assert read_csv(str(out)).n_draws == 40


def test_oracle_defaults_pass():
    code, out, _ = run(["oracle", "--trials", "40"])
    d = json.loads(out)
    assert code == 0 and d["status"] == "pass"
    assert d["worst_gap"] <= 1e-12
    assert set(d["solved_z_effect"]) == {"max_mean_shift", "max_covariance_shift"}
    cov = d["covariance_new_known_z"]["closed_form"]
    assert cov["index"] == [0, 1, 2, 3] and len(cov["rows"]) == 4


def test_oracle_single_point():
    code, out, _ = run(["oracle", "--size", "1", "--trials", "3"])
    assert code == 0


def test_oracle_negative_control(monkeypatch):
    real = cli.cov_matrix_new

    def flipped(masses, z, n):
        c = real(masses, z, n)
        off = ~np.eye(len(c), dtype=bool)
        c[off] = -c[off]
        return c

    monkeypatch.setattr(cli, "cov_matrix_new", flipped)
    code, out, _ = run(["oracle", "--trials", "5"])
    assert code == 4
    assert json.loads(out)["status"] == "fail"
