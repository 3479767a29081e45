"""Configuration dataclass and file loading."""

import json

import pytest

from agent_bridge import BridgeConfig, BridgeConfigError, load_bridge_config


def write_config(tmp_path, data) -> str:
    path = tmp_path / "bridge.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_defaults_are_sane():
    config = BridgeConfig(server="tcp:127.0.0.1:5555")
    assert config.max_retries == 3
    assert config.turn_cap >= 1
    assert config.workers == 1
    assert config.env == {}


@pytest.mark.parametrize(
    "kwargs,message",
    [
        ({"server": "carrier-pigeon:home"}, "server must be"),
        ({"server": "tcp:"}, "server must be"),
        ({"server": "tcp:h:1", "max_retries": -1}, "max_retries"),
        ({"server": "tcp:h:1", "backoff_base": -0.1}, "backoff_base"),
        ({"server": "tcp:h:1", "temperature": -1.0}, "temperature"),
        ({"server": "tcp:h:1", "turn_cap": 0}, "turn_cap"),
        ({"server": "tcp:h:1", "workers": 0}, "workers"),
        ({"server": "tcp:h:1", "env": "gp"}, "env must be"),
    ],
)
def test_invalid_fields_are_rejected(kwargs, message):
    with pytest.raises(BridgeConfigError, match=message):
        BridgeConfig(**kwargs)


def test_load_round_trip(tmp_path):
    path = write_config(
        tmp_path,
        {
            "version": 1,
            "bridge": {
                "server": "tcp:127.0.0.1:5555",
                "endpoint": "http://localhost:9000/v1/chat/completions",
                "model": "tiny-chat",
                "credential_env": "BRIDGE_TOKEN",
                "max_retries": 5,
                "temperature": 0.7,
                "workers": 4,
                "seed": 11,
            },
            "env": {"env": "gp", "face_rule": "ordinal"},
        },
    )
    config = load_bridge_config(path)
    assert config.server == "tcp:127.0.0.1:5555"
    assert config.model == "tiny-chat"
    assert config.max_retries == 5
    assert config.workers == 4
    assert config.seed == 11
    assert config.env == {"env": "gp", "face_rule": "ordinal"}
    # unlisted fields keep their defaults
    assert config.turn_cap == BridgeConfig(server="tcp:h:1").turn_cap


def test_load_requires_version(tmp_path):
    path = write_config(tmp_path, {"bridge": {"server": "tcp:h:1"}})
    with pytest.raises(BridgeConfigError, match="version"):
        load_bridge_config(path)


def test_load_rejects_unknown_section(tmp_path):
    path = write_config(
        tmp_path, {"version": 1, "bridge": {"server": "tcp:h:1"}, "extra": {}}
    )
    with pytest.raises(BridgeConfigError, match="unknown config key 'extra'"):
        load_bridge_config(path)


def test_load_rejects_unknown_bridge_key(tmp_path):
    path = write_config(
        tmp_path,
        {"version": 1, "bridge": {"server": "tcp:h:1", "retires": 3}},
    )
    with pytest.raises(BridgeConfigError, match="unknown config key 'bridge.retires'"):
        load_bridge_config(path)


def test_load_requires_server(tmp_path):
    path = write_config(tmp_path, {"version": 1, "bridge": {"workers": 2}})
    with pytest.raises(BridgeConfigError, match="bridge.server is required"):
        load_bridge_config(path)


def test_load_env_section_is_not_validated_here(tmp_path):
    # the server owns env validation; a key unknown to it must pass through
    path = write_config(
        tmp_path,
        {
            "version": 1,
            "bridge": {"server": "tcp:h:1"},
            "env": {"env": "gp", "bogus": True},
        },
    )
    assert load_bridge_config(path).env == {"env": "gp", "bogus": True}


def test_load_rejects_non_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(BridgeConfigError, match="not valid json"):
        load_bridge_config(str(path))


def test_load_rejects_missing_file(tmp_path):
    with pytest.raises(BridgeConfigError, match="cannot read config"):
        load_bridge_config(str(tmp_path / "nope.json"))
