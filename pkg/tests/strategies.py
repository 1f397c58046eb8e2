"""Hypothesis strategies for syntax trees of the modeling language."""

from hypothesis import strategies as st

from ppsynth.grammar.lexer import KEYWORDS
from ppsynth.ppl import ast

names = st.from_regex(r"[a-z][a-z0-9_]{0,5}", fullmatch=True).filter(lambda s: s not in KEYWORDS)
numbers = st.one_of(
    st.integers(min_value=0, max_value=1000),
    st.floats(min_value=0, max_value=1e4, allow_nan=False, allow_infinity=False),
)


def exprs(max_leaves: int = 8):
    leaves = st.one_of(numbers.map(ast.Num), names.map(ast.Name))

    def extend(inner):
        return st.one_of(
            inner.map(ast.Neg),
            st.tuples(st.sampled_from("+-*/"), inner, inner).map(lambda t: ast.BinOp(*t)),
            st.tuples(st.sampled_from(["exp", "log", "sqrt", "logit", "invlogit"]), inner).map(
                lambda t: ast.Call(t[0], (t[1],))
            ),
            st.tuples(inner, inner).map(lambda t: ast.Call("pow", t)),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def dist_calls():
    args = st.lists(st.tuples(st.one_of(st.none(), names), exprs(4)), max_size=3).map(
        lambda items: tuple(ast.Arg(n, v) for n, v in items)
    )
    return st.builds(ast.DistCall, names.map(str.capitalize), args)


def stochastic(allow_rep: bool = True):
    rep = st.one_of(st.none(), st.integers(1, 50)) if allow_rep else st.none()
    return st.builds(lambda t, d, r: ast.Stochastic(t, d, r), names, dist_calls(), rep)


def deterministic():
    return st.builds(ast.Deterministic, names, exprs(6))


def decls():
    return st.one_of(
        st.builds(ast.DataDecl, names, st.sampled_from(["real", "int"])),
        st.builds(ast.DataDecl, names, st.sampled_from(["vector", "intvector"]), st.integers(1, 99)),
    )


def programs():
    return st.builds(
        ast.ModelProgram,
        st.lists(decls(), max_size=3).map(tuple),
        st.lists(st.one_of(stochastic(), deterministic()), max_size=4).map(tuple),
        st.lists(stochastic(allow_rep=False), min_size=1, max_size=3).map(tuple),
    )
