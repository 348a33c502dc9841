import pytest

from dhsflow.config import ConfigError, parse_kv, read_kv, split_sections, write_kv


def test_parse_comments_and_whitespace():
    text = "# header\nplant.ua_pipe = 0.02  # trailing\n\n  agent.gamma=0.9\n"
    assert parse_kv(text) == {"plant.ua_pipe": "0.02", "agent.gamma": "0.9"}


@pytest.mark.parametrize("text", ["just words", "= 3", "a = 1\na = 2"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_kv(text)


def test_round_trip(tmp_path):
    data = {"x": "1", "y.z": "a b c"}
    write_kv(data, tmp_path / "c.txt", header="demo")
    assert read_kv(tmp_path / "c.txt") == data


def test_sections_reject_unknown_keys():
    known = {"plant": {"ua_pipe"}, "run": {"seed"}}
    assert split_sections({"plant.ua_pipe": "1"}, known) == {"plant": {"ua_pipe": "1"}, "run": {}}
    for bad in ({"plant.colour": "1"}, {"weather.x": "1"}, {"seed": "1"}):
        with pytest.raises(ConfigError):
            split_sections(bad, known)
