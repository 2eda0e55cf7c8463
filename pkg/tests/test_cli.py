import json

import numpy as np
import pytest
import yaml

from mkdti.cli import main, rank_novel_pairs
from mkdti.config import dump_config, load_config, parse_config
from mkdti.exceptions import ConfigError

FAST = {
    "seed": 7,
    "train": {"iterations": 2},
    "gat": {"num_layers": 2, "heads": 2, "layer_dims": [4, 4], "input_dim": 6},
    "kernels": {"gammas": [0.5, 0.25]},
    "eval": {"k": 3},
    "synth": {"n_drugs": 12, "n_targets": 10, "density_in": 0.5, "density_out": 0.05, "seed": 7},
    "predict": {"top_n": 5},
}


@pytest.fixture
def workspace(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump(FAST))
    data = tmp_path / "data"
    assert main(["generate", "--config", str(cfg), "--out", str(data)]) == 0
    return tmp_path, cfg, data


def run(cmd, cfg, data, out, *extra):
    return main([cmd, "--config", str(cfg), "--data", str(data), "--out", str(out), *extra])


def test_generate_writes_dataset(workspace):
    tmp, cfg, data = workspace
    assert len((data / "drugs.txt").read_text().splitlines()) == 12
    spec = yaml.safe_load((data / "synth_spec.yaml").read_text())
    assert spec["synth"]["n_targets"] == 10
    again = tmp / "again"
    main(["generate", "--config", str(cfg), "--out", str(again)])
    assert (again / "associations.tsv").read_bytes() == (data / "associations.tsv").read_bytes()


def test_train_then_predict(workspace, capsys):
    tmp, cfg, data = workspace
    out = tmp / "train"
    assert run("train", cfg, data, out) == 0
    assert len((out / "train_log.tsv").read_text().splitlines()) == 2
    assert (out / "checkpoint.npz").exists() and (out / "predictions.tsv").exists()
    assert run("predict", cfg, data, out) == 0
    lines = (out / "ranked_pairs.tsv").read_text().splitlines()
    assert len(lines) == 5
    known = {tuple(l.split("\t")) for l in (data / "associations.tsv").read_text().splitlines()}
    rows = [l.split("\t") for l in lines]
    assert not any((d, t) in known for d, t, _ in rows)
    scores = [float(s) for _, _, s in rows]
    assert scores == sorted(scores, reverse=True)
    assert main(["predict", "--config", str(cfg), "--out", str(out), "--top-n", "2"]) == 0
    assert len((out / "ranked_pairs.tsv").read_text().splitlines()) == 2


def test_rank_novel_pairs_sort_oracle():
    Y = np.array([[1, 0, 0], [0, 0, 1]])
    S = np.array([[9.0, 0.5, 0.7], [0.5, 0.7, 8.0]])
    ranked = rank_novel_pairs(Y, S)
    expected = sorted(((i, j, S[i, j]) for i in range(2) for j in range(3) if Y[i, j] == 0),
                      key=lambda r: (-r[2], r[0] * 3 + r[1]))
    assert ranked == [(i, j, float(s)) for i, j, s in expected]
    assert rank_novel_pairs(Y, S, 1) == ranked[:1]


def test_cv_report_and_determinism(workspace):
    tmp, cfg, data = workspace
    assert run("cv", cfg, data, tmp / "cv1") == 0
    assert run("cv", cfg, data, tmp / "cv2") == 0
    recs = json.loads((tmp / "cv1" / "cv_report.json").read_text())["records"]
    assert len(recs) == 4 and recs[-1]["fold"] == "mean"
    for name in ("cv_report.tsv", "cv_report.json"):
        assert (tmp / "cv1" / name).read_bytes() == (tmp / "cv2" / name).read_bytes()
    assert (tmp / "cv1" / "curves" / "roc_fold0.tsv").read_text().startswith("fpr\ttpr\n")


def test_cv_base_only_bank_has_one_kernel(workspace):
    tmp, _, data = workspace
    cfg = tmp / "base.yaml"
    cfg.write_text(yaml.safe_dump({**FAST, "ablation": "base_only"}))
    assert run("cv", cfg, data, tmp / "cvb") == 0
    assert json.loads((tmp / "cvb" / "cv_report.json").read_text())["selector"] == "base_only"


def test_ablate_table(workspace):
    tmp, cfg, data = workspace
    assert run("ablate", cfg, data, tmp / "abl") == 0
    rows = json.loads((tmp / "abl" / "ablation.json").read_text())
    assert [r["selector"] for r in rows] == ["base_only", "layer:1", "layer:2", "all"]
    assert [r["n_kernels"] for r in rows] == [1, 1, 1, 3]
    assert len((tmp / "abl" / "ablation.tsv").read_text().splitlines()) == 5


def test_sweep_table(workspace):
    tmp, _, data = workspace
    cfg = tmp / "sweep.yaml"
    cfg.write_text(yaml.safe_dump({**FAST, "train": {"iterations": 1},
                                   "sweep": {"gammas": [[0.5, 0.25], [1.0, 1.0]], "layer_dims": [[4, 4], [2, 2]]}}))
    assert run("sweep", cfg, data, tmp / "sw") == 0
    assert len(json.loads((tmp / "sw" / "sweep.json").read_text())) == 4


def test_exit_codes(workspace, capsys):
    tmp, cfg, data = workspace
    assert main(["bogus"]) == 1
    assert run("train", cfg, tmp / "missing", tmp / "o") == 2
    assert main(["cv", "--config", str(tmp / "nope.yaml")]) == 1
    bad = tmp / "bad.yaml"
    bad.write_text(yaml.safe_dump({**FAST, "trian": {}}))
    assert main(["cv", "--config", str(bad)]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert main(["predict", "--config", str(cfg), "--out", str(tmp / "empty")]) == 2
    (data / "associations.tsv").write_text("D99\tT00\n")
    assert run("train", cfg, data, tmp / "o") == 2


def test_numerical_failure_exit_code(workspace, monkeypatch):
    tmp, cfg, data = workspace
    from mkdti import cli
    from mkdti.exceptions import NumericalError

    def boom(*a, **k):
        raise NumericalError("synthetic")

    monkeypatch.setattr(cli, "fit", boom)
    assert run("train", cfg, data, tmp / "o") == 3


def test_config_strict_and_round_trip(tmp_path):
    with pytest.raises(ConfigError, match="gat"):
        parse_config({"gat": {"layers": 2}})
    with pytest.raises(ConfigError):
        parse_config({"train": 3})
    cfg = parse_config(FAST)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg
    assert cfg.train_config().gat.layer_dims == (4, 4)


def test_flags_override_config(workspace):
    tmp, cfg, data = workspace
    out = tmp / "seeded"
    assert main(["generate", "--config", str(cfg), "--seed", "99", "--out", str(out)]) == 0
    assert yaml.safe_load((out / "synth_spec.yaml").read_text())["synth"]["seed"] == 99
