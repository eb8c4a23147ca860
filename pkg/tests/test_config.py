import pytest

from polycap.config import ConfigError, load_config, parse_config

GOOD = """\
experiment: capacity
seed: 3
grid: {dim: 1, n: 33}
params: {m: 1, k: 0}
items:
  - id: a
    geometry: {type: point, at: [0.5]}
"""


def test_valid_config_parses():
    cfg = parse_config(GOOD)
    assert cfg.experiment == "capacity" and cfg.seed == 3
    assert len(cfg.digest) == 64


def test_digest_tracks_content_and_seed():
    a, b = parse_config(GOOD), parse_config(GOOD)
    assert a.digest == b.digest
    assert a.with_seed(4).digest != a.digest
    assert a.with_seed(None) is a
    assert a.with_seed(4).seed == 4 and a.seed == 3


def test_schema_violation_reports_line_and_column():
    bad = GOOD.replace("n: 33", "n: two")
    with pytest.raises(ConfigError) as exc:
        parse_config(bad, "cfg.yaml")
    assert str(exc.value).startswith("cfg.yaml:3:")
    assert "grid/n" in str(exc.value)


def test_unknown_key_rejected_with_location():
    bad = GOOD + "bogus: 1\n"
    with pytest.raises(ConfigError, match=r"cfg.yaml:1:1: <root>: Additional properties"):
        parse_config(bad, "cfg.yaml")


def test_missing_geometry_field():
    bad = GOOD.replace("{type: point, at: [0.5]}", "{type: point}")
    with pytest.raises(ConfigError, match=r"cfg.yaml:7:15: items/0/geometry: 'at' is a required property"):
        parse_config(bad, "cfg.yaml")


@pytest.mark.parametrize("edit,msg", [
    (("k: 0", "k: 1"), "k \\+ 1 <= m"),
    (("n: 33", "n: 32"), "odd"),
    (("experiment: capacity", "experiment: equivalence"), "at least three"),
])
def test_semantic_checks(edit, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(GOOD.replace(*edit), "cfg.yaml")


def test_duplicate_ids():
    text = GOOD + "  - id: a\n    geometry: {type: cube}\n"
    with pytest.raises(ConfigError, match="unique"):
        parse_config(text)


def test_malformed_yaml():
    with pytest.raises(ConfigError, match="malformed YAML"):
        parse_config("grid: [1, 2\n", "x.yaml")


def test_non_mapping_document():
    with pytest.raises(ConfigError, match="mapping"):
        parse_config("- 1\n- 2\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")
