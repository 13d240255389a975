import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dextron_lite import config
from dextron_lite.env import PhysicsConstants
from dextron_lite.errors import ConfigError
from dextron_lite.learn.sac import SacConfig
from dextron_lite.mcsearch import McConfig


@dataclasses.dataclass(frozen=True)
class Outer:
    n: int = 3
    x: float = 0.5
    flag: bool = False
    name: str = "a"
    sizes: tuple = (256, 256)
    physics: PhysicsConstants = dataclasses.field(default_factory=PhysicsConstants)


def test_read_kv_comments_and_errors(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# header\nn = 4   # trailing\n\nx=0.25\n")
    assert config.read_kv(p) == {"n": "4", "x": "0.25"}
    p.write_text("n 4\n")
    with pytest.raises(ConfigError, match=":1:"):
        config.read_kv(p)


def test_overrides_coerce_types():
    cfg = config.apply_overrides(Outer(), {"n": "7", "x": "1e-3", "flag": "yes", "name": "b", "sizes": "(8, 8)",
                                           "physics.z_trig": "0.2"})
    assert cfg == Outer(7, 1e-3, True, "b", (8, 8), PhysicsConstants(z_trig=0.2))


@pytest.mark.parametrize("key", ["nope", "physics.nope", "physics", "n.sub"])
def test_unknown_or_misplaced_keys(key):
    with pytest.raises(ConfigError):
        config.apply_overrides(Outer(), {key: "1"})


def test_bad_values():
    with pytest.raises(ConfigError):
        config.apply_overrides(Outer(), {"flag": "maybe"})
    with pytest.raises(ConfigError):
        config.apply_overrides(Outer(), {"n": "seven"})
    with pytest.raises(ConfigError):
        config.parse_assignments(["novalue"])


@pytest.mark.parametrize("cfg", [Outer(), McConfig(), SacConfig(), Outer(9, 0.125, True, "zz", (4,))])
def test_write_then_load_round_trip(tmp_path, cfg):
    path = tmp_path / "resolved.cfg"
    config.write_kv(path, cfg)
    assert config.load(type(cfg)(), path) == cfg


@given(n=st.integers(-10**9, 10**9), x=st.floats(allow_nan=False, allow_infinity=False))
def test_round_trip_property(tmp_path_factory, n, x):
    path = tmp_path_factory.mktemp("cfg") / "c.cfg"
    cfg = Outer(n=n, x=x)
    config.write_kv(path, cfg)
    assert config.load(Outer(), path) == cfg


def test_file_then_overrides_precedence(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("n = 4\nx = 2.0\n")
    cfg = config.load(Outer(), p, {"n": "5"})
    assert (cfg.n, cfg.x) == (5, 2.0)
