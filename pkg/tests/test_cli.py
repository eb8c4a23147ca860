import csv
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from polycap.cli import main
from polycap.config import load_schema, parse_config
from polycap.grid import build_grid, build_mask
from polycap.harness import CSV_COLUMNS

from test_grid import _carpet_bruteforce

EXAMPLES = resources.files("polycap").joinpath("examples")


def _example(name):
    return parse_config(EXAMPLES.joinpath(f"{name}.yaml").read_text(), name)


def test_list_examples(capsys):
    assert main(["list-examples"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 10
    assert not any("INVALID" in line for line in lines)
    names = {line.split()[0] for line in lines}
    assert {"cantor-1d", "cantor-2d", "sierpinski-carpet", "capacity-points-1d"} <= names


def test_every_example_validates():
    files = [f for f in EXAMPLES.iterdir() if f.name.endswith(".yaml")]
    assert files
    for f in files:
        parse_config(f.read_text(), f.name)


def test_carpet_example_depth2_matches_bruteforce():
    cfg = _example("sierpinski-carpet")
    g = build_grid(**cfg.data["grid"])
    item = next(it for it in cfg.items if it["geometry"].get("depth") == 2)
    assert build_mask(g, item["geometry"]).count == _carpet_bruteforce(g.n - 1, 2)


def _run(tmp_path, *args):
    return main(["run", *map(str, args), "--out-dir", str(tmp_path), "--workers", "1"])


def test_empty_set_capacity_row_is_zero(tmp_path, capsys):
    assert _run(tmp_path, "capacity-empty-set") == 0
    with open(tmp_path / "capacity-empty-set.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    cond = [r for r in rows[1:] if r[3] == "condenser"]
    assert cond and float(cond[0][4]) == 0.0


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, "capacity-points-1d") == 0
    assert _run(b, "capacity-points-1d") == 0
    assert (a / "capacity-points-1d.json").read_bytes() == (b / "capacity-points-1d.json").read_bytes()
    assert (a / "capacity-points-1d.csv").read_bytes() == (b / "capacity-points-1d.csv").read_bytes()


def test_worker_pool_gives_same_record(tmp_path):
    assert _run(tmp_path / "one", "deviation") == 0
    assert main(["run", "deviation", "--out-dir", str(tmp_path / "two"), "--workers", "2"]) == 0
    assert (tmp_path / "one" / "deviation.json").read_bytes() == (tmp_path / "two" / "deviation.json").read_bytes()


def test_record_validates_and_carries_bound_kinds(tmp_path):
    assert _run(tmp_path, "poincare-1d", "--format", "json") == 0
    rec = json.loads((tmp_path / "poincare-1d.json").read_text())
    jsonschema.validate(rec, load_schema("record"))
    assert not (tmp_path / "poincare-1d.csv").exists()
    timing = json.loads((tmp_path / "poincare-1d.timing.json").read_text())
    assert "wall_seconds" in timing
    for it in rec["items"]:
        for r in it["results"]:
            assert r["bound_kind"] in ("exact-eigen", "exact-qp", "upper-bound", "lower-bound", "sampled", "derived")
    vals = {it["item_id"]: it["results"][0]["value"] for it in rec["items"]}
    assert vals["ends"] == pytest.approx(1 / np.pi, rel=0.02)


def test_seed_override_changes_digest(tmp_path):
    assert _run(tmp_path / "a", "deviation", "--format", "json") == 0
    assert _run(tmp_path / "b", "deviation", "--seed", "7", "--format", "json") == 0
    ra = json.loads((tmp_path / "a" / "deviation.json").read_text())
    rb = json.loads((tmp_path / "b" / "deviation.json").read_text())
    assert ra["config_digest"] != rb["config_digest"] and rb["seed"] == 7


def test_invalid_config_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: capacity\ngrid: {dim: 4, n: 9}\nitems: [{id: a}]\n")
    assert _run(tmp_path, bad) == 1
    assert "bad.yaml:2:" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path, capsys):
    assert _run(tmp_path, tmp_path / "missing.yaml") == 1


def test_unknown_suite_exits_one(capsys):
    assert main(["verify", "nonsense"]) == 1
    assert "unknown suite" in capsys.readouterr().err


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_verdict_failure_exits_two(tmp_path):
    cfg = tmp_path / "cond.yaml"
    cfg.write_text(EXAMPLES.joinpath("synthesis-condition.yaml").read_text().replace("cap: 10", "cap: 0.5"))
    assert _run(tmp_path, cfg) == 2


def test_equivalence_run_freezes_then_checks_fixture(tmp_path):
    text = EXAMPLES.joinpath("equivalence-2d-m1.yaml").read_text()
    text = text.replace("n: 33", "n: 17").replace("side: 16.0", "side: 8.0").replace("starts: 32", "starts: 4")
    cfg = tmp_path / "eq.yaml"
    cfg.write_text(text)
    fx = tmp_path / "eq-fixture.json"
    assert _run(tmp_path / "o1", cfg, "--fixture", fx) == 0
    assert fx.exists()
    assert _run(tmp_path / "o2", cfg, "--fixture", fx) == 0
    rec = json.loads((tmp_path / "o2" / "equivalence-2d-m1.json").read_text())
    assert any(k.startswith("regression:") for k in rec["verdicts"])
    with open(tmp_path / "o2" / "equivalence-2d-m1.csv", newline="") as fh:
        q = {r["quantity"] for r in csv.DictReader(fh)}
    assert {"gamma_inv_root", "poincare"} <= q
    frozen = json.loads(fx.read_text())
    frozen["C_gamma"]["upper"] *= 1.5
    fx.write_text(json.dumps(frozen))
    assert _run(tmp_path / "o3", cfg, "--fixture", fx) == 2


def test_verify_analytic_oracles(capsys):
    assert main(["verify", "analytic-oracles", "--workers", "1"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5
