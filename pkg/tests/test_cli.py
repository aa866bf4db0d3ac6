import csv
import json

import numpy as np
import pytest

from drsn.cli import RunConfig, config_from_args, main, read_config_file
from drsn.dataio import (ColumnMap, emit_csv, ingest_csv, ingest_single,
                         read_report)
from drsn.limit import quantile, read_cache, simulate_w
from drsn.scenarios import ScenarioSpec, generate

SMALL_W = ["--paths", "1000", "--steps", "1000"]


def write(path, text):
    path.write_text(text)
    return str(path)


def test_ingest_four_rows(tmp_path):
    f = write(tmp_path / "d.csv", "y,x,group\n1.0,0.5,A\n2.0,0.1,B\n3.0,0.2,A\n4.0,0.3,B\n")
    s1, s2, covs = ingest_csv(f)
    assert covs == ["x"]
    assert s1.p == 2 and s1.group_label == "A" and s2.group_label == "B"
    assert np.array_equal(s1.outcomes, [1.0, 3.0])
    assert np.array_equal(s2.design, [[1.0, 0.1], [1.0, 0.3]])


def test_ingest_three_groups_names_third(tmp_path):
    f = write(tmp_path / "d.csv", "y,x,group\n1,0,A\n2,0,B\n3,0,C\n")
    with pytest.raises(ValueError, match="'C'"):
        ingest_csv(f)


def test_ingest_one_group(tmp_path):
    f = write(tmp_path / "d.csv", "y,x,group\n1,0,A\n2,0,A\n")
    with pytest.raises(ValueError, match="exactly two"):
        ingest_csv(f)


def test_ingest_errors(tmp_path):
    with pytest.raises(ValueError, match="'z'"):
        ingest_csv(write(tmp_path / "a.csv", "y,x,group\n1,0,A\n"), ColumnMap(covariates=("z",)))
    with pytest.raises(ValueError, match="row 3, column 'x'"):
        ingest_csv(write(tmp_path / "b.csv", "y,x,group\n1,0,A\n2,abc,B\n"))
    with pytest.raises(ValueError, match="non-finite"):
        ingest_csv(write(tmp_path / "c.csv", "y,x,group\n1,0,A\n2,nan,B\n"))
    with pytest.raises(ValueError, match="group"):
        ingest_csv(write(tmp_path / "d.csv", "y,x\n1,0\n"))


def test_column_mapping(tmp_path):
    f = write(tmp_path / "d.csv", "junk,out,a,b,g\n9,1,0,5,u\n9,2,1,6,v\n")
    s1, s2, covs = ingest_csv(f, ColumnMap("out", ("b",), "g"))
    assert covs == ["b"] and np.array_equal(s1.design, [[1.0, 5.0]])


def test_round_trip_bitwise(tmp_path):
    g1, g2 = generate(ScenarioSpec("scen1", 300, 1.0), 11)
    path = tmp_path / "scen.csv"
    emit_csv(path, [g1, g2], ["x2"])
    h1, h2, _ = ingest_csv(path)
    for a, b in ((g1, h1), (g2, h2)):
        assert np.array_equal(a.outcomes, b.outcomes)
        assert np.array_equal(a.design, b.design)


def test_round_trip_scenario2(tmp_path):
    g1, g2 = generate(ScenarioSpec("scen2b", 200, 4.0), 2)
    path = tmp_path / "s2.csv"
    emit_csv(path, [g1, g2], ["x2", "x3", "x3sq", "x4"])
    h1, h2, _ = ingest_csv(path)
    assert np.array_equal(g2.design, h2.design) and np.array_equal(g1.outcomes, h1.outcomes)


def test_config_file_and_override(tmp_path):
    cfg = write(tmp_path / "run.cfg", "# comment\nalpha = 0.1\nepsilon=0.2\ncovariates = x\n")
    c = config_from_args(["test", "--config", cfg, "--epsilon", "0.05"])
    assert c.alpha == 0.1 and c.epsilon == 0.05 and c.covariates == "x"
    assert isinstance(c.paths, int)
    with pytest.raises(ValueError, match="unknown key"):
        read_config_file(write(tmp_path / "bad.cfg", "alhpa = 0.1\n"))


def test_config_keys_are_fields():
    assert set(RunConfig().as_dict()) >= {"command", "delta", "alpha", "epsilon", "n_t", "n_y"}
    with pytest.raises(ValueError):
        RunConfig(delta=-1.0)
    with pytest.raises(ValueError):
        RunConfig(alpha=1.0)


@pytest.fixture(scope="module")
def scen_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    g1, g2 = generate(ScenarioSpec("scen1", 300, 1.0), 5)
    path = d / "scen.csv"
    emit_csv(path, [g1, g2], ["x2"])
    one = d / "one.csv"
    emit_csv(one, [g1], ["x2"])
    return str(path), str(one)


def test_identical_files_accept(tmp_path, scen_csv):
    _, one = scen_csv
    out = tmp_path / "r.json"
    rc = main(["test", "--data", one, "--data2", one, "--delta", "0.5", *SMALL_W,
               "--output", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["reject"] is False and rep["p_value"] >= 0.99
    assert rep["delta"] == 0.5 and rep["delta_sq"] == 0.25


def test_json_and_csv_reports_agree(tmp_path, scen_csv):
    path, _ = scen_csv
    common = ["test", "--data", path, "--interval=-1,5", "--x-eval", "1,1",
              "--delta", "0.3", "--n-t", "20", "--n-y", "61", *SMALL_W]
    assert main([*common, "--output", str(tmp_path / "r.json")]) == 0
    assert main([*common, "--output", str(tmp_path / "r.csv"), "--format", "csv"]) == 0
    j = read_report(tmp_path / "r.json", "json")
    c = read_report(tmp_path / "r.csv", "csv")
    for k in ("t_stat", "v_stat", "delta", "delta_sq", "alpha", "quantile", "p_value",
              "delta_hat_alpha", "ci_lower"):
        assert float(j[k]) == float(c[k])
        assert f"{float(j[k]):.17g}" == f"{float(c[k]):.17g}"
    assert j["reject"] == c["reject"]
    prov = j["provenance"]
    assert set(prov) >= {"config_hash", "seeds", "grid", "version"}
    assert prov["grid"]["n_t"] == 20 and prov["grid"]["n_y"] == 61
    assert j["ci_lower"] == j["delta_hat_alpha"]


def test_report_is_reproducible(tmp_path, scen_csv):
    path, _ = scen_csv
    args = ["test", "--data", path, "--n-t", "10", "--n-y", "21", *SMALL_W]
    main([*args, "--output", str(tmp_path / "a.json")])
    main([*args, "--output", str(tmp_path / "a.json")])
    a = json.loads((tmp_path / "a.json").read_text())
    main([*args, "--output", str(tmp_path / "b.json")])
    b = json.loads((tmp_path / "b.json").read_text())
    assert a["t_stat"] == b["t_stat"] and a["v_stat"] == b["v_stat"]


def test_fit_command(tmp_path, scen_csv):
    path, _ = scen_csv
    out = tmp_path / "fit.csv"
    assert main(["fit", "--data", path, "--n-y", "7", "--interval=0,4", "--output", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["group", "y", "beta_1", "beta_2", "status"]
    assert len(rows) == 1 + 2 * 7
    assert {r[-1] for r in rows[1:]} <= {"converged", "all_below", "all_above", "failed"}
    assert (tmp_path / "fit.csv.meta.json").exists()


def test_quantile_command(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["quantile", "--epsilon", "0.1", *SMALL_W, "--seed", "3",
                 "--alpha", "0.05", "--output", str(out)]) == 0
    rows = read_cache(out)
    assert len(rows) == 1 and rows[0]["level"] == 0.95
    assert rows[0]["quantile"] == quantile(simulate_w(0.1, 1000, 1000, 3), 0.95)


def test_mc_command(tmp_path):
    out = tmp_path / "mc.csv"
    assert main(["mc", "--scenario", "scen1", "--sigma2", "1", "--n", "200", "--reps", "6",
                 "--n-t", "6", "--n-y", "21", *SMALL_W, "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert list(rows[0]) == ["delta_sq", "rate", "reps", "margin", "alpha", "epsilon", "n", "scenario"]
    rates = [float(r["rate"]) for r in rows]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    pv = list(csv.DictReader(open(tmp_path / "mc_pvalue.csv")))
    assert list(pv[0]) == ["delta_sq", "p_value"] and len(pv) == len(rows)


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["test", "--data", str(tmp_path / "missing.csv")]) != 0
    assert "error in" in capsys.readouterr().err
    bad = write(tmp_path / "three.csv", "y,x,group\n1,0,A\n2,0,B\n3,0,C\n")
    assert main(["fit", "--data", bad]) != 0
    assert "dataio" in capsys.readouterr().err
    assert main(["test", "--delta", "-1"]) != 0


def test_single_file_with_constant_group(tmp_path):
    f = write(tmp_path / "s.csv", "y,x,group\n1,0,A\n2,1,A\n")
    s, covs = ingest_single(f)
    assert s.group_label == "A" and covs == ["x"]
    with pytest.raises(ValueError):
        ingest_single(write(tmp_path / "t.csv", "y,x,group\n1,0,A\n2,1,B\n"))
