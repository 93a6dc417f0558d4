import pytest
from hypothesis import given, strategies as st

from ctxswitch.expr import (
    MASK64,
    BinOp,
    Const,
    ExprSyntaxError,
    Name,
    compile_expr,
    evaluate,
    names,
    parse_expr,
    render,
)


@pytest.mark.parametrize(
    "text, env, expected",
    [
        ("1 + 2 * 3", {}, 7),
        ("(1 + 2) * 3", {}, 9),
        ("0 - 1", {}, MASK64),
        ("a << 64", {"a": 1}, 0),
        ("a << 63", {"a": 3}, 1 << 63),
        ("a >> 70", {"a": MASK64}, 0),
        ("1 | 2 == 2", {}, 1),
        ("x == 0", {"x": 0}, 1),
        ("x != 0", {"x": 0}, 0),
        ("a < b", {"a": 2, "b": 3}, 1),
        ("a >= b", {"a": 2, "b": 3}, 0),
        ("0xff & 0x0f ^ 1", {}, 0x0F ^ 1),
        ("0xffffffffffffffff * 2", {}, MASK64 - 1),
        ("1 - 2 - 3", {}, (1 - 2 - 3) & MASK64),
    ],
)
def test_evaluation(text, env, expected):
    tree = parse_expr(text)
    assert evaluate(tree, env) == expected
    assert compile_expr(tree)(env) == expected


@pytest.mark.parametrize("text, column", [("", 1), ("1 +", 4), ("a $ b", 3), ("(a + b", 7), ("a b", 3), ("1 / 2", 3)])
def test_syntax_errors_report_column(text, column):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text)
    assert info.value.column == column


def test_literal_over_64_bits_rejected():
    with pytest.raises(ExprSyntaxError):
        parse_expr(str(1 << 64))


def test_render_is_canonical():
    assert render(parse_expr("acc+x")) == render(parse_expr("  acc +  x ")) == "(acc+x)"
    assert render(parse_expr("a + b * c")) == "(a+(b*c))"
    assert names(parse_expr("a + b * a")) == {"a", "b"}


_OPS = ["+", "-", "*", "&", "|", "^", "<<", ">>", "==", "!=", "<", "<=", ">", ">="]
trees = st.recursive(
    st.one_of(st.integers(0, MASK64).map(Const), st.sampled_from(["a", "b"]).map(Name)),
    lambda sub: st.builds(BinOp, st.sampled_from(_OPS), sub, sub),
    max_leaves=12,
)


@given(trees, st.integers(0, MASK64), st.integers(0, MASK64))
def test_compiled_matches_tree_walk_and_reparse(tree, a, b):
    env = {"a": a, "b": b}
    value = evaluate(tree, env)
    assert 0 <= value <= MASK64
    assert compile_expr(tree)(env) == value
    assert parse_expr(render(tree)) == tree
