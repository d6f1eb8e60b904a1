import csv
import json

import numpy as np
import pytest

from conftest import write_text
from film.cli import main
from film.experiment import load_records
from film.ipip import IpipModel, ensemble_vote, final_vote
from film.synthetic import two_gaussians


def dataset_csv(path, n=240, p_min=0.2, seed=0):
    d = two_gaussians(n=n, p_min=p_min, n_features=3, separation=2.0, seed=seed)
    lines = ["a,b,c,class"]
    for row, y in zip(d.X, d.y):
        lines.append(",".join(repr(float(v)) for v in row) + ("," + ("yes" if y else "no")))
    return write_text(path, "\n".join(lines) + "\n")


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------- ingest

def test_ingest_summary(tmp_path, capsys):
    p = write_text(tmp_path / "d.csv", "x,color,class\n1,red,a\n2,blue,b\n3,red,a\n4,,a\n5,red,a\n")
    code, out, _ = run(["ingest", str(p)], capsys)
    assert code == 0
    s = json.loads(out)
    # hand tally: one row dropped, 3 'a' and 1 'b' remain
    assert s["n"] == 4 and s["rows_dropped"] == 1
    assert s["n_min"] == 1 and s["n_maj"] == 3 and s["ir"] == 3.0
    assert s["positive_label"] == "b"


def test_ingest_missing_target(tmp_path, capsys):
    p = write_text(tmp_path / "d.csv", "x,class\n1,a\n2,b\n")
    code, _, err = run(["ingest", str(p), "--target", "label"], capsys)
    assert code == 2 and "label" in err


def test_bad_jobs(tmp_path, capsys):
    p = write_text(tmp_path / "d.csv", "x,class\n1,a\n2,b\n")
    assert run(["ingest", str(p), "--jobs", "0"], capsys)[0] == 2


# ---------------------------------------------------------------- experiment

def small_config(tmp_path, **extra):
    cfg = {"synthetic": {"n": 200, "p_min": 0.15, "n_features": 2, "separation": 2.0, "seed": 1},
           "techniques": ["none"], "learners": ["logistic"], "n": 6, "folds": 2, "seed": 5}
    cfg.update(extra)
    return write_text(tmp_path / "cfg.json", json.dumps(cfg))


def test_experiment_cell_count(tmp_path, capsys):
    code, out, _ = run(["experiment", "--config", str(small_config(tmp_path)), "--out", str(tmp_path / "r"),
                        "--jobs", "1"], capsys)
    assert code == 0
    recs = load_records(tmp_path / "r")
    # 7 variants x 2 folds
    assert len(recs) == 14
    assert sorted({(r.variant, r.fold) for r in recs}) == [(v, f) for v in range(7) for f in range(2)]
    for name in ("records.json", "uic_report.json", "bias_profile.csv", "concordance.json", "concordance.svg",
                 "manifest.json", "win_ratios.csv"):
        assert (tmp_path / "r" / name).exists()
    manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert manifest["seed"] == 5 and len(manifest["variants"]) == 7


def test_experiment_rerun_identical(tmp_path, capsys):
    cfg = small_config(tmp_path)
    run(["experiment", "--config", str(cfg), "--out", str(tmp_path / "a"), "--jobs", "1"], capsys)
    run(["experiment", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "2"], capsys)
    for name in ("records.json", "uic_report.json", "bias_profile.csv", "concordance.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_seed_precedence(tmp_path, capsys, monkeypatch):
    cfg = small_config(tmp_path)
    monkeypatch.setenv("FILM_SEED", "9")
    run(["experiment", "--config", str(cfg), "--out", str(tmp_path / "env"), "--jobs", "1"], capsys)
    run(["experiment", "--config", str(cfg), "--out", str(tmp_path / "flag"), "--jobs", "1", "--seed", "3"], capsys)
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 9
    assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["seed"] == 3


def test_experiment_not_imbalanced(tmp_path, capsys):
    cfg = small_config(tmp_path, synthetic={"n": 200, "p_min": 0.45, "n_features": 2, "seed": 1})
    code, _, err = run(["experiment", "--config", str(cfg), "--out", str(tmp_path / "r"), "--jobs", "1"], capsys)
    assert code == 2 and err


def test_experiment_unknown_key(tmp_path, capsys):
    cfg = small_config(tmp_path, colour="red")
    assert run(["experiment", "--config", str(cfg), "--out", str(tmp_path / "r")], capsys)[0] == 2


def test_report(tmp_path, capsys):
    cfg = small_config(tmp_path)
    for k in range(2):
        run(["experiment", "--config", str(cfg), "--out", str(tmp_path / f"r{k}"), "--jobs", "1",
             "--seed", str(k)], capsys)
    code, _, _ = run(["report", str(tmp_path / "r0"), str(tmp_path / "r1"), "--out", str(tmp_path / "rep")], capsys)
    assert code == 0
    rep = tmp_path / "rep"
    for name in ("bias_heatmap_0.png", "bias_heatmap_1.png", "pooled_abs_r_run_technique.png",
                 "pooled_abs_r_technique.png", "gaussian_weights.png", "comparison.csv", "comparison.json"):
        assert (rep / name).exists()
    rows = list(csv.DictReader((rep / "comparison.csv").open()))
    assert {r["pooling"] for r in rows} == {"run_technique", "technique"}
    assert len(rows) == 16


# ---------------------------------------------------------------- ipip

def test_ipip_train_predict_consistent(tmp_path, capsys):
    data = dataset_csv(tmp_path / "d.csv")
    model_path = tmp_path / "m.json"
    code, out, _ = run(["ipip", "train", str(data), "--out", str(model_path), "--seed", "2"], capsys)
    assert code == 0 and json.loads(out)["n_models"] >= 1
    code, out, _ = run(["ipip", "predict", str(model_path), str(data)], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert len(rows) == 240

    # recompute every tally from the persisted members
    bundle = json.loads(model_path.read_text())
    model = IpipModel.from_json(bundle["model"])
    X = np.loadtxt(data, delimiter=",", skiprows=1, usecols=(0, 1, 2))
    cfg = model.config
    pos_votes = [np.sum([m.predict_proba(X) >= 0.5 for m in ens], axis=0) for ens in model.ensembles]
    ens_labels = np.array([ensemble_vote(v, len(e), cfg.intra_vote_threshold)
                           for v, e in zip(pos_votes, model.ensembles)])
    final = final_vote(ens_labels, cfg.inter_vote_threshold)
    for i, row in enumerate(rows):
        assert int(row["row_index"]) == i
        assert row["label"] == ("yes" if final[i] else "no")
        assert row["ensemble_votes"] == f"{int(ens_labels[:, i].sum())}/{len(model.ensembles)}"
        per = [f"{int(v[i])}/{len(e)}" for v, e in zip(pos_votes, model.ensembles)]
        assert row["model_votes_per_ensemble"] == ";".join(per)


def test_ipip_forced_single_model(tmp_path, capsys):
    data = dataset_csv(tmp_path / "d.csv")
    code, out, _ = run(["ipip", "train", str(data), "--out", str(tmp_path / "m.json"), "--b-s", "1", "--b-e", "1"],
                       capsys)
    assert code == 0 and json.loads(out)["n_models"] == 1
    bundle = json.loads((tmp_path / "m.json").read_text())
    assert [len(e) for e in bundle["model"]["ensembles"]] == [1]


def test_ipip_predict_width_mismatch(tmp_path, capsys):
    data = dataset_csv(tmp_path / "d.csv")
    run(["ipip", "train", str(data), "--out", str(tmp_path / "m.json"), "--b-s", "1", "--b-e", "1"], capsys)
    narrow = write_text(tmp_path / "n.csv", "a,b\n1,2\n")
    code, _, err = run(["ipip", "predict", str(tmp_path / "m.json"), str(narrow)], capsys)
    assert code == 2 and err


def test_ipip_predict_not_a_bundle(tmp_path, capsys):
    bogus = write_text(tmp_path / "m.json", "{}")
    data = dataset_csv(tmp_path / "d.csv")
    assert run(["ipip", "predict", str(bogus), str(data)], capsys)[0] == 2
