"""Statement-level validation: parse-ability, known distributions, valid
parameters, and scope/shape consistency against a symbol table.

Every failing check reports the earliest offending token span, with token
indices relative to the fragment being validated, so a decoder can discard
everything from that point and resample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .grammar import (
    LexError,
    ParseError,
    PrefixState,
    Token,
    accepts_prefix,
    at_statement_start,
    parse_statement,
    tokenize,
)
from .ppl import ast
from .ppl.distributions import REGISTRY
from .ppl.shapes import (
    ArgumentError,
    ShapeError,
    VarType,
    check_literal_domains,
    infer_type,
    match_arguments,
    stochastic_type,
)

DATA = "data"
PRIOR = "prior"
DETERMINISTIC = "deterministic"

Span = Tuple[int, int]
Fragment = Union[str, Sequence[Token]]


@dataclass(frozen=True)
class Binding:
    kind: str
    type: VarType


class SymbolTable:
    """Ordered identifier bindings: data columns first, then prior variables."""

    def __init__(self, bindings: Optional[Dict[str, Binding]] = None, observed=()):
        self._bindings: Dict[str, Binding] = dict(bindings or {})
        self.observed: Tuple[str, ...] = tuple(observed)

    @classmethod
    def from_data(cls, decls: Sequence[ast.DataDecl]) -> "SymbolTable":
        table = cls()
        for d in decls:
            table.add(d.name, DATA, VarType(d.shape, d.is_int))
        return table

    def add(self, name: str, kind: str, vtype: VarType) -> None:
        if name in self._bindings:
            raise KeyError(f"{name!r} is already bound")
        if kind == DATA and any(b.kind != DATA for b in self._bindings.values()):
            raise ValueError("data bindings must precede prior bindings")
        self._bindings[name] = Binding(kind, vtype)

    def observe(self, name: str) -> None:
        self.observed = self.observed + (name,)

    def snapshot(self) -> "SymbolTable":
        return SymbolTable(self._bindings, self.observed)

    def types(self) -> Dict[str, VarType]:
        return {k: b.type for k, b in self._bindings.items()}

    def names(self, kind: Optional[str] = None) -> List[str]:
        return [k for k, b in self._bindings.items() if kind is None or b.kind == kind]

    def __contains__(self, name: str) -> bool:
        return name in self._bindings

    def __getitem__(self, name: str) -> Binding:
        return self._bindings[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._bindings)

    def __len__(self) -> int:
        return len(self._bindings)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolTable):
            return NotImplemented
        return list(self._bindings.items()) == list(other._bindings.items()) and self.observed == other.observed

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {b.kind}" for k, b in self._bindings.items())
        return f"SymbolTable({inner})"


@dataclass
class ValidationReport:
    """Outcome of Φ on one fragment. Checks after the first failure are None."""

    phi1: Optional[bool] = None
    phi2: Optional[bool] = None
    phi3: Optional[bool] = None
    scope: Optional[bool] = None
    violating_span: Optional[Span] = None
    message: str = ""
    statement: Optional[ast.Statement] = field(default=None, repr=False)
    end_state: Optional[PrefixState] = field(default=None, repr=False, compare=False)

    @property
    def valid(self) -> bool:
        return bool(self.phi1 and self.phi2 and self.phi3 and self.scope)

    @property
    def failed_check(self) -> Optional[str]:
        for name in ("phi1", "phi2", "phi3", "scope"):
            if getattr(self, name) is False:
                return name
        return None


class _Violation(Exception):
    def __init__(self, message: str, span: Span):
        super().__init__(message)
        self.span = span


def _tokens(fragment: Fragment) -> List[Token]:
    if isinstance(fragment, str):
        try:
            return tokenize(fragment)
        except LexError as exc:
            position = len(tokenize(fragment[: exc.offset]))
            raise _Violation(f"lexical error: {exc}", (position, position + 1)) from exc
    return list(fragment)


_CONTEXT_PREFIX = {
    PRIOR: "model { data { } prior {",
    "likelihood": "model { data { } prior { } likelihood {",
}


def statement_context(block: str) -> PrefixState:
    """A prefix state sitting at the start of a statement in ``block``."""
    return PrefixState.initial().feed(tokenize(_CONTEXT_PREFIX[block]))


def block_of(ctx: PrefixState) -> str:
    return PRIOR if ctx.top == "pstmts" else "likelihood"


def _check_parse(tokens: List[Token], ctx: PrefixState) -> PrefixState:
    if not at_statement_start(ctx):
        raise _Violation("context is not at a statement boundary", (0, 0))
    if not tokens:
        raise _Violation("empty fragment", (0, 0))
    state = ctx
    for i, tok in enumerate(tokens):
        if i > 0 and at_statement_start(state):
            raise _Violation("fragment holds more than one statement", (i, i + 1))
        nxt = accepts_prefix(state, tok.kind)
        if nxt is None:
            raise _Violation(f"unexpected token {tok.text!r}", (i, i + 1))
        state = nxt
    if not at_statement_start(state):
        n = len(tokens)
        raise _Violation("statement is incomplete", (n, n))
    return state


def phi1_parseable(fragment: Fragment, ctx: Optional[PrefixState] = None) -> bool:
    """Whether the fragment extends ``ctx`` by exactly one complete statement."""
    ctx = ctx or statement_context(PRIOR)
    try:
        _check_parse(_tokens(fragment), ctx)
    except _Violation:
        return False
    return True


def _check_distribution(stmt: ast.Statement, registry) -> None:
    if isinstance(stmt, ast.Stochastic) and stmt.dist.name not in registry:
        raise _Violation(f"unknown distribution {stmt.dist.name!r}", stmt.dist.name_span)


def phi2_distribution_valid(stmt: ast.Statement, registry=None) -> bool:
    try:
        _check_distribution(stmt, registry or REGISTRY)
    except _Violation:
        return False
    return True


def _check_parameters(stmt: ast.Statement, registry) -> None:
    if not isinstance(stmt, ast.Stochastic):
        return
    spec = registry[stmt.dist.name]
    try:
        ordered = match_arguments(stmt.dist, spec)
        check_literal_domains(stmt.dist, spec, ordered)
    except ArgumentError as exc:
        raise _Violation(str(exc), exc.span) from exc


def phi3_parameter_valid(stmt: ast.Statement, registry=None) -> bool:
    registry = registry or REGISTRY
    try:
        _check_parameters(stmt, registry)
    except _Violation:
        return False
    return True


def _check_scope(stmt: ast.Statement, table: SymbolTable, block: str, registry) -> Tuple[str, VarType]:
    env = table.types()
    try:
        if block == PRIOR:
            if stmt.target in table:
                raise _Violation(f"{stmt.target!r} is already defined", stmt.target_span)
            if isinstance(stmt, ast.Deterministic):
                return DETERMINISTIC, infer_type(stmt.expr, env)
            spec = registry[stmt.dist.name]
            if not spec.continuous:
                raise _Violation(
                    f"{spec.name} is discrete and cannot be used in the prior block", stmt.dist.name_span
                )
            ordered = match_arguments(stmt.dist, spec)
            return PRIOR, stochastic_type(stmt, spec, ordered, env)
        if isinstance(stmt, ast.Deterministic):
            raise _Violation("the likelihood block holds only ~ statements", stmt.target_span)
        if stmt.target not in table or table[stmt.target].kind != DATA:
            raise _Violation(f"likelihood target {stmt.target!r} is not a data column", stmt.target_span)
        if stmt.target in table.observed:
            raise _Violation(f"{stmt.target!r} is already observed", stmt.target_span)
        spec = registry[stmt.dist.name]
        ordered = match_arguments(stmt.dist, spec)
        return DATA, stochastic_type(stmt, spec, ordered, env, table[stmt.target].type)
    except (ShapeError, ArgumentError) as exc:
        raise _Violation(str(exc), exc.span) from exc


def scope_and_shape_check(stmt: ast.Statement, table: SymbolTable, block: str, registry=None) -> bool:
    try:
        _check_scope(stmt, table, block, registry or REGISTRY)
    except _Violation:
        return False
    return True


def _commit(stmt: ast.Statement, table: SymbolTable, kind: str, vtype: VarType) -> None:
    if kind == DATA:
        table.observe(stmt.target)
    else:
        table.add(stmt.target, kind, vtype)


def validate_statement(
    stmt: ast.Statement, table: SymbolTable, block: str, registry=None
) -> ValidationReport:
    """Φ on an already parsed statement; extends ``table`` on success."""
    registry = registry or REGISTRY
    report = ValidationReport(phi1=True, statement=stmt)
    stages = (
        ("phi2", lambda: _check_distribution(stmt, registry)),
        ("phi3", lambda: _check_parameters(stmt, registry)),
        ("scope", lambda: _check_scope(stmt, table, block, registry)),
    )
    result = None
    for name, check in stages:
        try:
            result = check()
        except _Violation as exc:
            setattr(report, name, False)
            report.violating_span = exc.span
            report.message = str(exc)
            return report
        setattr(report, name, True)
    _commit(stmt, table, *result)
    return report


def validate(
    fragment: Fragment,
    ctx: Optional[PrefixState] = None,
    table: Optional[SymbolTable] = None,
    registry=None,
) -> ValidationReport:
    """Φ = φ1 ∧ φ2 ∧ φ3 plus the scope check, evaluated left to right.

    ``table`` is extended with the fragment's binding when every check
    passes and left untouched otherwise.
    """
    ctx = ctx or statement_context(PRIOR)
    table = table if table is not None else SymbolTable()
    try:
        tokens = _tokens(fragment)
        end_state = _check_parse(tokens, ctx)
    except _Violation as exc:
        return ValidationReport(phi1=False, violating_span=exc.span, message=str(exc))
    block = block_of(ctx)
    try:
        stmt = parse_statement(tokens, block)
    except ParseError as exc:  # unreachable when the prefix check passed
        return ValidationReport(phi1=False, violating_span=(exc.position, exc.position + 1), message=str(exc))
    report = validate_statement(stmt, table, block, registry)
    report.end_state = end_state
    return report


def validate_program(program: ast.ModelProgram, registry=None) -> List[ValidationReport]:
    """Validate every statement in order; stops after the first failure."""
    table = SymbolTable.from_data(program.data_decls)
    reports = []
    for block, stmts in ((PRIOR, program.prior_stmts), ("likelihood", program.likelihood_stmts)):
        for stmt in stmts:
            report = validate_statement(stmt, table, block, registry)
            reports.append(report)
            if not report.valid:
                return reports
    return reports


def program_is_valid(program: ast.ModelProgram, registry=None) -> bool:
    reports = validate_program(program, registry)
    return bool(program.likelihood_stmts) and all(r.valid for r in reports)
