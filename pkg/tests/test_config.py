import pytest

from multinav.config import ConfigError, desk_config, from_dict, load_config, save_config


def test_defaults():
    cfg = from_dict({})
    assert cfg.profile == "paper"
    assert cfg.lidar.n_beams == 512 and cfg.horizon == 400
    assert cfg.ppo.gamma == 0.99 and cfg.ppo.clip_epsilon == 0.2


def test_desk_profile():
    cfg = desk_config()
    assert cfg.lidar.n_beams == 128 and cfg.net.n_beams == 128
    assert cfg.stage_one == {"random_empty": 4}


def test_yaml_roundtrip(tmp_path):
    cfg = desk_config(seed=4, ppo={"epochs": 2})
    path = tmp_path / "c.yaml"
    save_config(cfg, str(path))
    again = load_config(str(path))
    assert again == cfg and again.digest() == cfg.digest()


def test_digest_ignores_runtime_keys():
    a = desk_config(output_dir="a", workers=1)
    b = desk_config(output_dir="b", workers=3)
    assert a.digest() == b.digest()
    assert desk_config(seed=1).digest() != desk_config(seed=2).digest()


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"ppo": {"gama": 0.9}},
    {"ppo": {"gamma": 1.5}},
    {"profile": "huge"},
    {"lidar": {"n_beams": 1}},
    {"net": {"conv3": [1, 1, 1]}},
    {"ppo": 3},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_non_mapping_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(str(p))
