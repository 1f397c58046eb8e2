"""Abstract syntax for the modeling language.

A program is a data block, a prior block and a likelihood block. Every node
carries the token span it was parsed from; spans never take part in equality
so that ``parse(render(p)) == p`` holds structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

Span = Tuple[int, int]

NO_SPAN: Span = (-1, -1)


def _span() -> Span:
    return field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: Union[int, float]
    span: Span = _span()


@dataclass(frozen=True)
class Name:
    id: str
    span: Span = _span()


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    func: str  # exp log sqrt logit invlogit pow
    args: Tuple["Expr", ...]
    span: Span = _span()


Expr = Union[Num, Name, Neg, BinOp, Call]

FUNCTIONS = {"exp": 1, "log": 1, "sqrt": 1, "logit": 1, "invlogit": 1, "pow": 2}


@dataclass(frozen=True)
class Arg:
    name: Optional[str]
    value: Expr
    span: Span = _span()
    name_span: Span = _span()


@dataclass(frozen=True)
class DistCall:
    name: str
    args: Tuple[Arg, ...]
    span: Span = _span()
    name_span: Span = _span()
    close_span: Span = _span()


@dataclass(frozen=True)
class Stochastic:
    target: str
    dist: DistCall
    rep: Optional[int] = None
    span: Span = _span()
    target_span: Span = _span()
    rep_span: Span = _span()


@dataclass(frozen=True)
class Deterministic:
    target: str
    expr: Expr
    span: Span = _span()
    target_span: Span = _span()


Statement = Union[Stochastic, Deterministic]


@dataclass(frozen=True)
class DataDecl:
    """``name: dtype;`` where dtype is real, int, vector[n] or intvector[n]."""

    name: str
    dtype: str
    length: Optional[int] = None
    span: Span = _span()

    @property
    def shape(self) -> Tuple[int, ...]:
        return () if self.length is None else (self.length,)

    @property
    def is_int(self) -> bool:
        return self.dtype in ("int", "intvector")


@dataclass(frozen=True)
class ModelProgram:
    data_decls: Tuple[DataDecl, ...]
    prior_stmts: Tuple[Statement, ...]
    likelihood_stmts: Tuple[Stochastic, ...]

    def with_prior(self, stmts) -> "ModelProgram":
        return ModelProgram(self.data_decls, tuple(stmts), self.likelihood_stmts)

    def with_likelihood(self, stmts) -> "ModelProgram":
        return ModelProgram(self.data_decls, self.prior_stmts, tuple(stmts))

    @property
    def data_names(self) -> Tuple[str, ...]:
        return tuple(d.name for d in self.data_decls)


def walk(expr: Expr):
    """Yield every node of an expression tree, parents first."""
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Neg):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack.extend((node.right, node.left))
        elif isinstance(node, Call):
            stack.extend(reversed(node.args))


def free_names(expr: Expr):
    return [n for n in walk(expr) if isinstance(n, Name)]


def statement_exprs(stmt: Statement):
    if isinstance(stmt, Deterministic):
        return [stmt.expr]
    return [a.value for a in stmt.dist.args]
