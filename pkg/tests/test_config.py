import pytest

from etc_lab.config import default_config, load_config, parse_config
from etc_lab.errors import ConfigError


def test_default_config_values():
    cfg = default_config()
    assert cfg.certificate.sigma == 0.99 and cfg.certificate.lam == 4.7e-3
    assert cfg.experiment.mc_count == 100 and cfg.experiment.duration == 100.0
    assert cfg.integrator.h == 1e-4 and cfg.integrator.event_tol == 1e-9
    assert cfg.experiment.cases == ("i", "ii", "iii", "iv", "v", "vi")
    assert cfg.plant.disturbance.kind == "gaussian" and cfg.plant.disturbance.window == 100.0


def test_empty_document_uses_defaults():
    assert parse_config({}).digest() == parse_config({"trigger": {}}).digest()


def test_unknown_keys_and_sections_are_rejected():
    with pytest.raises(ConfigError, match="section"):
        parse_config({"solver": {}})
    with pytest.raises(ConfigError, match="k3"):
        parse_config({"trigger": {"k3": 1.0}})
    with pytest.raises(ConfigError):
        parse_config({"plant": {"disturbance": {"colour": "pink"}}})


@pytest.mark.parametrize("doc", [
    {"experiment": {"cases": ["i", "vii"]}},
    {"experiment": {"cases": ["i", "i"]}},
    {"experiment": {"mc_count": 0}},
    {"experiment": {"initial": "square"}},
    {"trigger": {"schedule": "table"}},
    {"plant": {"kind": "pendulum"}},
    {"plant": {"disturbance": {"kind": "gaussian", "hold": 1.5e-4}}},
    {"integrator": {"h": -1.0}},
])
def test_invalid_values(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_overrides_and_digest():
    cfg = default_config()
    o = cfg.with_overrides(seed=3, duration=2.0, step=1e-3, out_dir="elsewhere", cases=["i"], mc_count=2)
    assert (o.experiment.seed, o.experiment.duration, o.integrator.h) == (3, 2.0, 1e-3)
    assert o.experiment.cases == ("i",) and o.experiment.mc_count == 2
    assert o.digest() != cfg.digest()
    assert cfg.with_overrides(out_dir="a").digest() == cfg.digest()
    assert default_config().digest() == cfg.digest()
    with pytest.raises(ConfigError):
        cfg.with_overrides(cases=["x"])


def test_load_from_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[experiment]\nseed = 7\ncases = ["iii"]\n[plant.disturbance]\nkind = "zero"\n')
    cfg = load_config(path)
    assert cfg.experiment.seed == 7 and cfg.experiment.cases == ("iii",) and cfg.plant.disturbance.kind == "zero"
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment\n")
    with pytest.raises(ConfigError):
        load_config(bad)
