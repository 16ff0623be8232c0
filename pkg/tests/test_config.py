from pathlib import Path

import pytest

from picardmc.config import ConfigError, loads_config, parse_config

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
d: 1
grid: {times: [1.0], points: [[0.0]]}
a: {kind: gaussian_bump, params: [1.0, 1.0, 0.0]}
"""


def test_minimal_heat_config():
    cfg = loads_config(MINIMAL)
    assert cfg.d == 1 and cfg.n == 1 and cfg.seed == 0
    assert cfg.fields_a()[0].kind == "gaussian_bump"
    assert cfg.fields_f() == [None]
    assert len(cfg.build_grid()) == 1


@pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.yaml")))
def test_shipped_configs_round_trip(path):
    cfg = parse_config(path)
    again = loads_config(cfg.dumps())
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_round_trip_with_every_block():
    text = MINIMAL + """
n: 2
budget: 5000
alloc: {method: file, entries: {1: 3, 2: 4, 3: 5, 4: 6}, B: 0.5, with_t: true}
u0: mc
n_leaf: 8
mode: full
riesz: {eps: 0.01, R: 5.0, N: 100}
nested: [10, 20]
per_point_streams: true
"""
    cfg = loads_config(text)
    assert loads_config(cfg.dumps()) == cfg
    assert dict(cfg.alloc.entries) == {1: 3, 2: 4, 3: 5, 4: 6}


def test_negative_time_rejected_with_line():
    bad = MINIMAL.replace("times: [1.0]", "times: [-1.0]")
    with pytest.raises(ConfigError) as info:
        loads_config(bad)
    assert "grid.times[0]" in str(info.value)
    assert info.value.line == 3


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError) as info:
        loads_config(MINIMAL + "colour: blue\n")
    assert "colour" in str(info.value) and info.value.line == 5


@pytest.mark.parametrize(
    "extra, path",
    [
        ("n: -1\n", "n"),
        ("mode: other\n", "mode"),
        ("alloc: {method: magic}\n", "alloc.method"),
        ("riesz: {eps: 2.0, R: 1.0}\n", "riesz"),
        ("seed: 1.5\n", "seed"),
    ],
)
def test_invalid_values(extra, path):
    with pytest.raises(ConfigError) as info:
        loads_config(MINIMAL + extra)
    assert info.value.path == path


def test_wrong_field_dimension():
    with pytest.raises(ConfigError):
        loads_config(MINIMAL.replace("d: 1", "d: 2").replace("points: [[0.0]]", "points: [[0.0, 0.0]]")
                     .replace("a: {kind: gaussian_bump, params: [1.0, 1.0, 0.0]}",
                              "a: [{kind: gaussian_bump, params: [1.0, 1.0, 0.0, 0.0]}]"))


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        loads_config("d: 1\ngrid: [1, 2\n")
    assert info.value.line is not None


def test_missing_file():
    with pytest.raises((ConfigError, FileNotFoundError)):
        parse_config("/nonexistent/run.yaml")


def test_digest_ignores_workers():
    cfg = loads_config(MINIMAL)
    assert cfg.digest() == cfg.replace(workers=4).digest()
    assert cfg.digest() != cfg.replace(seed=1).digest()
