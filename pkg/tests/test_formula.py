import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedpl.formula import FormulaError, FormulaSpec, parse_formula

# (text, byte offset where parsing must stop)
MALFORMED = [
    ("y1 + y2 0 + X1", 8),
    ("", 0),
    ("~ x", 0),
    ("y ~", 3),
    ("y ~ ", 4),
    ("y1 + y1 ~ x", 5),
    ("y ~ x + x", 8),
    ("y ~ y", 4),
    ("y + ~ x", 4),
    ("y ~ x +", 7),
    ("y ~ 2 + x", 4),
    ("1y ~ x", 0),
    ("y ~ x | 2", 8),
    ("y ~ x | z", 8),
    ("y ~ x ~ z", 6),
    ("y ~ x$", 5),
    ("y ~ 0 +", 7),
    ("y ~ x | 1 | 1", 10),
    ("y ~ x x", 6),
    ("é ~ x", 0),
]


def test_documented_example():
    f = parse_formula("y1 + y2 + z1 + z2 ~ 0 + X1 + X2 + X3")
    assert f.response_names == ("y1", "y2", "z1", "z2")
    assert f.covariate_names == ("X1", "X2", "X3")
    assert f.intercept_suppressed


def test_simple_formula():
    f = parse_formula("y ~ x")
    assert f == FormulaSpec(("y",), ("x",), False, False)


def test_compat_suffix_and_render():
    f = parse_formula("y1+y2~0+X1|1")
    assert f.compat_part
    assert f.render() == "y1 + y2 ~ 0 + X1 | 1"
    assert parse_formula("y ~ 1").render() == "y ~ 1"
    assert parse_formula("y ~ 0").covariate_names == ()


def test_names_allow_dots_and_underscores():
    f = parse_formula("_a.b + c_1 ~ d.e")
    assert f.response_names == ("_a.b", "c_1")


@pytest.mark.parametrize("text, offset", MALFORMED)
def test_malformed_strings_report_position(text, offset):
    with pytest.raises(FormulaError) as exc:
        parse_formula(text)
    assert exc.value.offset == offset
    assert f"at offset {offset}" in str(exc.value)


def test_offsets_are_in_bytes():
    with pytest.raises(FormulaError) as exc:
        parse_formula("y ~ x + é")
    assert exc.value.offset == 8
    with pytest.raises(FormulaError) as exc:
        parse_formula("é + y ~ x")
    assert exc.value.offset == 0


def test_non_string_rejected():
    with pytest.raises(TypeError):
        parse_formula(None)


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("y1z2X ~+|0._é\t")), max_size=30))
def test_total_on_arbitrary_text(text):
    try:
        f = parse_formula(text)
    except FormulaError as exc:
        assert 0 <= exc.offset <= len(text.encode())
    else:
        assert parse_formula(f.render()) == f


@settings(max_examples=100, deadline=None)
@given(st.lists(st.from_regex(r"[A-Za-z_][A-Za-z0-9._]{0,5}", fullmatch=True), min_size=2, max_size=6, unique=True),
       st.integers(1, 5), st.booleans(), st.sampled_from([" ", "", "  "]))
def test_render_normalizes_whitespace(names, split, zero, ws):
    split = min(split, len(names) - 1)
    lhs, rhs = names[:split], names[split:]
    text = ws.join([f"{ws}+{ws}".join(lhs), "~", ("0" + ws + "+" + ws if zero else "") + f"{ws}+{ws}".join(rhs)])
    f = parse_formula(text)
    assert f.response_names == tuple(lhs) and f.covariate_names == tuple(rhs)
    assert parse_formula(f.render()) == f
