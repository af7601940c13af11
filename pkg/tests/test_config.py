import pytest
from hypothesis import given, strategies as st

from nesc import config
from nesc.config import ConfigError


def test_parse_basic():
    cfg = config.parse("""
        # comment line
        game.name = fixed-demand
        game.capacities = 172, 47, 66   # trailing comment
        esc.gamma = 0.02
        solver.record_every = 100
        esc.phases = none
    """)
    assert cfg == {"game.name": "fixed-demand", "game.capacities": [172, 47, 66], "esc.gamma": 0.02,
                   "solver.record_every": 100, "esc.phases": None}


@pytest.mark.parametrize("text,match", [
    ("game.name bilinear", "expected"),
    ("Game.Name = x", "bad key"),
    ("name = x", "bad key"),
    ("esc.gamma = 1\nesc.gamma = 2", "duplicate"),
])
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        config.parse(text)


def test_resolve_layers_and_rejects_unknown():
    cfg = config.resolve({"esc.gamma": 0.5})
    assert cfg["esc.gamma"] == 0.5 and cfg["esc.epsilon"] == 1.0
    with pytest.raises(ConfigError, match="unknown config key"):
        config.resolve({"esc.gama": 0.5})
    with pytest.raises(ConfigError, match="unknown game"):
        config.resolve({"game.name": "poker"})


def test_game_keys_follow_game():
    cfg = config.resolve({"game.u1_star": 1.0})
    assert cfg["game.u1_star"] == 1.0
    switched = config.resolve({"game.name": "fixed-demand", "game.demand": 300}, cfg)
    assert "game.u1_star" not in switched and switched["game.demand"] == 300
    with pytest.raises(ConfigError):
        config.resolve({"game.demand": 1.0})


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "missing.cfg")


scalars = st.one_of(st.integers(-10**6, 10**6), st.floats(-1e6, 1e6, allow_nan=False).filter(lambda f: f != int(f)),
                    st.sampled_from(["zero", "random", "rk4", None]))


@given(st.dictionaries(st.sampled_from(sorted(config.DEFAULTS)), st.one_of(scalars, st.lists(scalars.filter(
    lambda v: v is not None), min_size=2, max_size=4))))
def test_dump_parse_round_trip(cfg):
    assert config.parse(config.dumps(cfg)) == cfg
