import pytest

from gpicl_lab.utils.converters import format_float, parse_list, parse_scalar, stable_hash64


@pytest.mark.parametrize(
    "text, expected",
    [
        ("2^13", 8192),
        (" 2 ^ 4 ", 16),
        ("1e-8", 1e-8),
        ("0.9", 0.9),
        (".5", 0.5),
        ("64", 64),
        ("-3", -3),
        ("true", True),
        ("Off", False),
        ("none", None),
        ("", None),
        ("fashion_mnist", "fashion_mnist"),
        ("emb:clip", "emb:clip"),
    ],
)
def test_parse_scalar(text, expected):
    assert parse_scalar(text) == expected
    assert type(parse_scalar(text)) is type(expected)


def test_parse_scalar_passes_non_text_through():
    assert parse_scalar(7) == 7
    assert parse_scalar(None) is None


def test_parse_list():
    assert parse_list("1, 2^4, x") == [1, 16, "x"]
    assert parse_list("16,") == [16]
    assert parse_list("") == []
    assert parse_list(("3", 4)) == [3, 4]


def test_stable_hash64_is_stable_and_separates_parts():
    assert stable_hash64(0, "seen", "mnist", 5) == stable_hash64(0, "seen", "mnist", 5)
    assert stable_hash64("ab", "c") != stable_hash64("a", "bc")
    assert 0 <= stable_hash64("x") < 2**64


def test_format_float():
    assert format_float(2.302585092994046) == "2.30258509"
    assert format_float(float("nan")) == "nan"
    assert format_float(1e-12) == "1e-12"
