import pytest

from crossdial.kvconfig import ConfigError, coerce, dump_kv, load_kv, parse_bool, parse_kv_text, write_kv


def test_parse_basic():
    entries = parse_kv_text("a = 1\nb = hello world\n")
    assert entries == {"a": "1", "b": "hello world"}


def test_parse_comments_and_blanks():
    text = "# header\n\na = 1   # trailing\n   # indented comment\nb=2\n"
    assert parse_kv_text(text) == {"a": "1", "b": "2"}


def test_parse_preserves_order():
    entries = parse_kv_text("z = 1\na = 2\nm = 3\n")
    assert list(entries) == ["z", "a", "m"]


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_kv_text("a = 1\na = 2\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match=":2:"):
        parse_kv_text("a = 1\nnot a pair\n")


def test_round_trip(tmp_path):
    path = tmp_path / "c.cfg"
    entries = {"name": "x", "rate": 0.5, "steps": 10, "flag": True, "off": False}
    write_kv(path, entries)
    back = load_kv(path)
    assert back == {"name": "x", "rate": "0.5", "steps": "10", "flag": "true", "off": "false"}
    assert parse_bool(back["flag"]) is True
    assert parse_bool(back["off"]) is False


def test_dump_format():
    assert dump_kv({"a": 1, "b": "x"}) == "a = 1\nb = x\n"


def test_parse_bool_rejects_junk():
    with pytest.raises(ConfigError):
        parse_bool("maybe")


def test_coerce_types():
    values = coerce({"n": "3", "lr": "5e-4", "name": "m"}, {"n": int, "lr": float, "name": str})
    assert values == {"n": 3, "lr": 5e-4, "name": "m"}


def test_coerce_unknown_key_named():
    with pytest.raises(ConfigError, match="bogus"):
        coerce({"bogus": "1"}, {"n": int})


def test_coerce_bad_value_names_key():
    with pytest.raises(ConfigError, match="n"):
        coerce({"n": "three"}, {"n": int})
