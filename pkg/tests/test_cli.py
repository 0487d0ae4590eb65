import json
import subprocess
import sys

import pytest

from hypalign.cli import main, read_annotations

SMALL = {"branching": [2, 2], "dim": 6, "samples_per_leaf": 2, "heldout_per_leaf": 2, "layer_ids": [1, 2]}


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_curvature(capsys):
    code, out, _ = run(["solve-curvature", "--c1", "0.25", "--c2", "1.0", "--r", "40"], capsys)
    assert code == 0
    sol = json.loads(out)
    assert 0.25 <= sol["c3_star"] <= 1.0
    assert {"dc3_dc1", "dc3_dc2", "certified"} <= set(sol)


def test_solve_curvature_errors(capsys):
    assert run(["solve-curvature", "--c1", "-1", "--c2", "1", "--r", "5"], capsys)[0] == 2
    code, _, err = run(["solve-curvature", "--c1", "0.01", "--c2", "4", "--r", "1000"], capsys)
    assert code == 3 and "numeric error" in err


def test_make_synthetic_train_eval(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL))
    data = tmp_path / "data.jsonl"
    assert run(["make-synthetic", "--spec", str(spec), "--out", str(data)], capsys)[0] == 0
    assert len(data.read_text().splitlines()) == 16

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 2, "data_path": str(data), "synthetic": None, "treecuts": 3}))
    code, out, _ = run(["train", "--config", str(cfg), "--out-dir", str(tmp_path / "run")], capsys)
    assert code == 0 and "hca" in json.loads(out)
    assert (tmp_path / "run" / "report.json").exists()

    code, out, _ = run(["taxonomy", "build", "--annotations", str(data)], capsys)
    assert code == 0
    tax = json.loads(out)
    assert tax["root"] == "root" and "a0b1" in tax["nodes"]
    tax_path = tmp_path / "tax.json"
    tax_path.write_text(out)

    preds = tmp_path / "preds.jsonl"
    preds.write_text(
        "\n".join(json.dumps({"truth_leaf": leaf, "scores": {n: float(n == leaf or leaf.startswith(n)) for n in tax["nodes"]}})
                  for leaf in ("a0b0", "a1b1")) + "\n"
    )
    out_file = tmp_path / "metrics.json"
    args = ["eval", "--taxonomy", str(tax_path), "--predictions", str(preds), "--treecuts", "4", "--seed", "1"]
    assert run(args + ["--out", str(out_file)], capsys)[0] == 0
    rep = json.loads(out_file.read_text())
    assert rep == {"la": 1.0, "hca": 1.0, "mta": 1.0, "num_treecuts": 4, "seed": 1}

    code, out, _ = run(["taxonomy", "split", "--taxonomy", str(tax_path), "--seed", "0"], capsys)
    halves = json.loads(out)
    assert code == 0 and set(halves) == {"base", "novel", "seed"}
    assert run(["taxonomy", "split", "--taxonomy", str(tax_path), "--seed", "0", "--out-dir", str(tmp_path / "s")], capsys)[0] == 0
    assert json.loads((tmp_path / "s" / "base.json").read_text()) == halves["base"]


def test_validation_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 0}))
    code, _, err = run(["train", "--config", str(cfg), "--out-dir", str(tmp_path)], capsys)
    assert code == 2 and "epochs" in err
    assert run(["train", "--config", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)], capsys)[0] == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('["a", "b"]\n["a"]\n')
    assert run(["taxonomy", "build", "--annotations", str(bad)], capsys)[0] == 2
    bad.write_text('["a"]\n{not json\n')
    code, _, err = run(["taxonomy", "build", "--annotations", str(bad)], capsys)
    assert code == 2 and "bad.jsonl:2" in err


def test_annotation_formats(tmp_path):
    p = tmp_path / "a.json"
    p.write_text('[["A", "x"], ["B", "y"]]')
    assert read_annotations(p) == [("A", "x"), ("B", "y")]
    p.write_text('{"labels": ["A", "x"]}\n["B", "y"]\n')
    assert read_annotations(p) == [("A", "x"), ("B", "y")]


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "hypalign.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("solve-curvature", "make-synthetic", "train", "eval", "taxonomy"):
        assert cmd in out.stdout


def test_missing_subcommand():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
