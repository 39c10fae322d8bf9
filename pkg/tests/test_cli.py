import csv
import json

import pytest

from budgeted_svc.cli import GRID, grid_cell_seed, main
from budgeted_svc.cvi import validate_report


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _manifest(path):
    return json.loads((path.parent / (path.name + ".manifest.json")).read_text())


@pytest.fixture
def gauss(workdir):
    assert main(["generate", "--shape", "gauss3", "--n", "40", "--seed", "2",
                 "--out", "g.csv"]) == 0
    return workdir / "g.csv"


def test_generate_rings_and_manifest(workdir):
    assert main(["generate", "--shape", "rings", "--n", "200", "--seed", "7",
                 "--out", "rings.csv"]) == 0
    rows = list(csv.reader(open("rings.csv")))
    assert len(rows) == 200 + 200 + 100 and {r[-1] for r in rows} == {"0", "1", "2"}
    man = _manifest(workdir / "rings.csv")
    assert man["command"] == "generate" and man["outputs"] == ["rings.csv"]
    assert man["exit_code"] == 0 and man["wall_time_s"] >= 0


def test_generate_is_byte_identical(workdir):
    for name in ("a.csv", "b.csv"):
        main(["generate", "--shape", "moons", "--seed", "3", "--out", name])
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()


def test_unknown_shape_is_usage_error(workdir, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--shape", "spiral", "--out", "x.csv"])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


def test_full_pipeline(gauss, workdir):
    assert main(["train", "--data", "g.csv", "--label-column", "2", "--gamma", "2", "--C", "8",
                 "--budget", "30", "--model-out", "m.json", "--trace-out", "t.jsonl"]) == 0
    model = json.loads((workdir / "m.json").read_text())
    assert len(model["support"]) <= 30
    man = _manifest(workdir / "m.json")
    assert set(man["inputs"]) == {"g.csv"} and len(man["inputs"]["g.csv"]) == 64

    assert main(["cluster", "--data", "g.csv", "--label-column", "2", "--model", "m.json",
                 "--epsilon", "100", "--out", "lab.csv"]) == 0
    side = json.loads((workdir / "lab.csv.json").read_text())
    assert side["num_clusters"] == 3 and side["M"] <= side["boundary_size"]

    assert main(["evaluate", "--data", "g.csv", "--label-column", "2", "--labels", "lab.csv",
                 "--out", "rep.json"]) == 0
    rep = json.loads((workdir / "rep.json").read_text())
    validate_report(rep)
    assert rep["purity"] == 1.0

    assert main(["evaluate", "--data", "g.csv", "--labels", "lab.csv", "--out", "bare.json"]) == 0
    bare = json.loads((workdir / "bare.json").read_text())
    assert bare["purity"] is None and bare["nmi"] is None and bare["rand"] is None

    assert main(["diagnose", "--trace", "t.jsonl", "--C", "8", "--out", "aud.json"]) == 0
    aud = json.loads((workdir / "aud.json").read_text())
    assert aud["ok"] and aud["maintenance_rate"] > 0


def test_cluster_epsilon_zero_single_cluster(gauss, workdir):
    main(["train", "--data", "g.csv", "--label-column", "2", "--gamma", "2", "--C", "8",
          "--model-out", "m.json"])
    assert main(["cluster", "--data", "g.csv", "--label-column", "2", "--model", "m.json",
                 "--epsilon", "0", "--out", "lab.csv"]) == 0
    side = json.loads((workdir / "lab.csv.json").read_text())
    assert side["num_clusters"] == 1 and side["M"] == 0


def test_standardized_model_applies_transform(gauss, workdir):
    main(["train", "--data", "g.csv", "--label-column", "2", "--gamma", "2", "--C", "8",
          "--standardize", "--model-out", "m.json"])
    model = json.loads((workdir / "m.json").read_text())
    assert set(model["standardize"]) == {"mean", "scale"}
    assert main(["cluster", "--data", "g.csv", "--label-column", "2", "--model", "m.json",
                 "--epsilon", "100", "--out", "lab.csv"]) == 0


def test_projection_k_not_below_budget(gauss, capsys):
    assert main(["train", "--data", "g.csv", "--strategy", "proj-knn", "--k", "50",
                 "--budget", "50", "--model-out", "m.json"]) == 2
    assert "k=50" in capsys.readouterr().err


def test_missing_file_is_io_error(workdir):
    assert main(["train", "--data", "nope.csv", "--model-out", "m.json"]) == 3
    assert _manifest(workdir / "m.json")["exit_code"] == 3


def test_ragged_csv_is_parse_error(workdir, capsys):
    (workdir / "bad.csv").write_text("1,2\n3\n")
    assert main(["train", "--data", "bad.csv", "--model-out", "m.json"]) == 3
    assert "line 2" in capsys.readouterr().err


def test_dimension_mismatch(gauss, workdir):
    main(["train", "--data", "g.csv", "--model-out", "m.json"])  # label column kept as feature
    assert main(["cluster", "--data", "g.csv", "--label-column", "2", "--model", "m.json",
                 "--out", "lab.csv"]) == 2


def test_evaluate_length_mismatch(gauss, workdir):
    (workdir / "lab.csv").write_text("point_index,cluster_id,in_boundary\n0,0,1\n")
    assert main(["evaluate", "--data", "g.csv", "--labels", "lab.csv", "--out", "r.json"]) == 2


def test_diagnose_tampered_trace(gauss, workdir, capsys):
    main(["train", "--data", "g.csv", "--label-column", "2", "--gamma", "2", "--C", "1",
          "--budget", "10", "--stop-theta", "0", "--max-steps", "50", "--trace-out", "t.jsonl",
          "--model-out", "m.json"])
    lines = (workdir / "t.jsonl").read_text().splitlines()
    rec = json.loads(lines[3])
    rec["s_t"] = 1.5
    lines[3] = json.dumps(rec)
    (workdir / "bad.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["diagnose", "--trace", "bad.jsonl", "--C", "1", "--out", "aud.json"]) == 1
    assert "step 4" in capsys.readouterr().err
    (workdir / "junk.jsonl").write_text("{oops\n")
    assert main(["diagnose", "--trace", "junk.jsonl", "--C", "1", "--out", "aud2.json"]) == 3


def test_diagnose_unbudgeted(gauss, workdir):
    main(["train", "--data", "g.csv", "--label-column", "2", "--max-steps", "100",
          "--trace-out", "t.jsonl", "--model-out", "m.json"])
    assert main(["diagnose", "--trace", "t.jsonl", "--C", "1", "--out", "aud.json"]) == 0
    assert json.loads((workdir / "aud.json").read_text())["maintenance_rate"] == 0


def test_gridsearch_default_grid(gauss, workdir):
    assert main(["gridsearch", "--data", "g.csv", "--label-column", "2", "--budget", "20",
                 "--out", "tab.csv", "--model-out", "best.json"]) == 0
    rows = list(csv.DictReader(open("tab.csv")))
    assert len(rows) == 36
    assert sorted({float(r["gamma"]) for r in rows}) == GRID
    best = float(rows[0]["purity"])
    assert all(best >= float(r["purity"]) for r in rows if r["purity"])
    assert int(rows[0]["seed"]) == grid_cell_seed(0, int(rows[0]["cell"]))
    model = json.loads((workdir / "best.json").read_text())
    assert model["kernel"]["gamma"] == float(rows[0]["gamma"])


def test_gridsearch_minimizing_metric_and_errors(gauss, workdir):
    assert main(["gridsearch", "--data", "g.csv", "--label-column", "2", "--gamma-grid", "1,4",
                 "--C-grid", "8", "--metric", "dbi", "--epsilon", "100", "--out", "t.csv"]) == 0
    rows = list(csv.DictReader(open("t.csv")))
    dbis = [float(r["dbi"]) for r in rows if r["dbi"]]
    assert dbis == sorted(dbis)
    assert main(["gridsearch", "--data", "g.csv", "--gamma-grid", "", "--out", "e.csv"]) == 2
    assert main(["gridsearch", "--data", "g.csv", "--out", "p.csv"]) == 2  # purity needs truth


def test_gridsearch_jobs_from_environment(gauss, workdir, monkeypatch):
    args = ["gridsearch", "--data", "g.csv", "--label-column", "2", "--gamma-grid", "2,8",
            "--C-grid", "1,8", "--epsilon", "100"]
    main(args + ["--out", "serial.csv"])
    monkeypatch.setenv("BSVC_JOBS", "2")
    main(args + ["--out", "parallel.csv"])
    assert _manifest(workdir / "parallel.csv")["config"]["jobs"] == 2
    assert (workdir / "serial.csv").read_bytes() == (workdir / "parallel.csv").read_bytes()
