import json

import pytest
from click.testing import CliRunner

from ogmfusion.cli import main
from ogmfusion.io import Dataset, load_grid, read_manifest, read_ppm
from ogmfusion.metrics import EVAL_FIELDS, read_csv


def run(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    res = run("generate", "--count", 10, "--seed", 3, "--out", out)
    assert res.exit_code == 0, res.output
    return out


def test_generate_one_scene(tmp_path):
    res = run("generate", "--count", 1, "--seed", 0, "--out", tmp_path)
    assert res.exit_code == 0, res.output
    subdirs = sorted(p.name for p in tmp_path.iterdir() if p.is_dir())
    assert subdirs == ["s00000_0", "s00000_1"]
    m = read_manifest(tmp_path)
    assert set(m.samples) == set(subdirs)
    assert sorted(p.name for p in (tmp_path / "s00000_0").iterdir()) == [
        "g1.eogm", "g2.eogm", "label.eogm", "meta.json"]


def test_manifest_partition(dataset):
    m = read_manifest(dataset)
    m.validate(dataset)
    splits = [set(m.split(s)) for s in ("train", "val", "test")]
    assert sum(map(len, splits)) == len(m.samples) == 20
    # both perspectives of a scene share a split
    for name, split in m.samples.items():
        assert m.samples[name[:-1] + ("1" if name.endswith("0") else "0")] == split


def test_fuse_baseline_exact_poses_reproduce_labels(dataset, tmp_path):
    out = tmp_path / "eval.csv"
    res = run("fuse-baseline", "--dataset", dataset, "--config", "A", "--seed", 1, "--out", out,
              "--split", "all")
    assert res.exit_code == 0, res.output
    rows = read_csv(out)
    assert list(rows[0]) == EVAL_FIELDS and len(rows) == 20
    assert max(float(r["kld"]) for r in rows) <= 1e-6


def test_unknown_config_is_usage_error(dataset, tmp_path):
    res = CliRunner().invoke(main, ["fuse-baseline", "--dataset", str(dataset), "--config", "E",
                                    "--seed", "0", "--out", str(tmp_path / "x.csv")])
    assert res.exit_code == 2
    assert "Invalid value" in res.output


def test_seed_is_required(dataset, tmp_path):
    res = CliRunner().invoke(main, ["fuse-baseline", "--dataset", str(dataset), "--config", "B",
                                    "--out", str(tmp_path / "x.csv")])
    assert res.exit_code != 0


def test_eval_csv_byte_identical_across_runs(dataset, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("fuse-baseline", "--dataset", dataset, "--config", "D", "--seed", 5, "--out", out).exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    run("fuse-baseline", "--dataset", dataset, "--config", "D", "--seed", 6, "--out", c)
    assert c.read_bytes() != a.read_bytes()


def test_train_eval_aggregate(dataset, tmp_path):
    cfg = tmp_path / "train.yaml"
    cfg.write_text("max_epochs: 1\nbatch_size: 2\nsteps_per_epoch: 1\ncrop_size: 32\n"
                   "widths: [4, 8, 8]\nval_limit: 1\n")
    ckpt = tmp_path / "m.ckpt"
    res = run("train", "--dataset", dataset, "--config", "B", "--train-cfg", cfg, "--seed", 0, "--out", ckpt)
    assert res.exit_code == 0, res.output
    assert ckpt.exists()
    log = read_csv(f"{ckpt}.log.csv")
    assert [r["epoch"] for r in log] == ["1"]
    assert json.loads((tmp_path / "m.ckpt.json").read_text())["config"] == "B"

    outs = []
    for k in range(2):
        out = tmp_path / f"eval{k}.csv"
        res = run("eval", "--dataset", dataset, "--checkpoint", ckpt, "--config", "B", "--seed", 2,
                  "--out", out, "--with-baseline")
        assert res.exit_code == 0, res.output
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    methods = {r["method"] for r in read_csv(tmp_path / "eval0.csv")}
    assert methods == {"ours", "baseline"}

    summary = tmp_path / "summary.csv"
    res = run("aggregate", "--in", tmp_path / "eval0.csv", tmp_path / "eval1.csv", "--out", summary)
    assert res.exit_code == 0, res.output
    rows = read_csv(summary)
    assert [(r["config"], r["method"]) for r in rows] == [("B", "baseline"), ("B", "ours")]
    n_test = len(Dataset(dataset).names("test"))
    assert all(int(r["n"]) == 2 * n_test for r in rows)


def test_bad_train_cfg_key(dataset, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"learning_rate": 1}')
    res = CliRunner().invoke(main, ["train", "--dataset", str(dataset), "--config", "A",
                                    "--train-cfg", str(cfg), "--seed", "0", "--out", str(tmp_path / "m")])
    assert res.exit_code == 2


def test_render(dataset, tmp_path):
    grid = dataset / "s00000_0" / "label.eogm"
    out = tmp_path / "label.ppm"
    assert run("render", "--grid", grid, "--out", out).exit_code == 0
    g = load_grid(grid)
    assert read_ppm(out).shape == (g.geometry.n_x, g.geometry.n_y, 3)
