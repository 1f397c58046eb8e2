"""Table-driven LL(1) parsing with persistent prefix states.

The parser stack is an immutable cons list, so a ``PrefixState`` can be
copied for free and kept as a backtracking snapshot. LL(1) parsers have the
correct-prefix property: a token is consumed exactly when the extended token
sequence is still a prefix of some sentence, which makes ``accepts_prefix``
an exact viability test rather than a heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

from ..ppl import ast
from .definition import CATEGORY, EOF, GRAMMAR, GrammarDef
from .lexer import LexError, Token, tokenize


class ParseError(SyntaxError):
    """Syntax error carrying the index of the first offending token."""

    def __init__(self, message: str, position: int, offset: int = -1, expected=()):
        super().__init__(message)
        self.position = position
        self.offset = offset
        self.expected = tuple(sorted(expected))


class _End:
    __slots__ = ("nt",)

    def __init__(self, nt: str):
        self.nt = nt

    def __repr__(self):
        return f"<end {self.nt}>"


def _push_all(stack, symbols):
    for sym in reversed(symbols):
        stack = (sym, stack)
    return stack


@dataclass(frozen=True)
class PrefixState:
    """A viable prefix: the tokens consumed so far and the predictive stack."""

    stack: tuple = field(repr=False)
    tokens: Tuple[str, ...] = ()
    grammar: GrammarDef = field(default=GRAMMAR, repr=False, compare=False)

    @classmethod
    def initial(cls, grammar: GrammarDef = GRAMMAR) -> "PrefixState":
        return cls(_push_all(None, (grammar.start, EOF)), (), grammar)

    @property
    def top(self) -> Optional[str]:
        """Next grammar symbol to be matched or expanded (end markers skipped)."""
        stack = self.stack
        while stack is not None and isinstance(stack[0], _End):
            stack = stack[1]
        return None if stack is None else stack[0]

    @property
    def complete(self) -> bool:
        return self.top == EOF

    def feed(self, tokens: Iterable) -> "PrefixState":
        """Consume tokens (kinds or Token objects); raise ParseError on rejection."""
        state = self
        for tok in tokens:
            kind = tok.kind if isinstance(tok, Token) else tok
            nxt = accepts_prefix(state, kind)
            if nxt is None:
                raise ParseError(
                    f"unexpected token {getattr(tok, 'text', kind)!r}",
                    len(state.tokens),
                    getattr(tok, "offset", -1),
                    viable_kinds(state),
                )
            state = nxt
        return state


def _advance(stack, kind: str, grammar: GrammarDef):
    """Return the stack after consuming ``kind``, or None if not viable."""
    table = grammar.table
    nts = grammar.nonterminals
    while stack is not None:
        top, rest = stack
        if type(top) is _End:
            stack = rest
        elif top in nts:
            rhs = table.get((top, kind))
            if rhs is None:
                return None
            stack = _push_all((_End(top), rest), rhs)
        elif top == kind:
            return rest
        else:
            return None
    return None


def accepts_prefix(state: PrefixState, kind: str) -> Optional[PrefixState]:
    """Extend ``state`` by one terminal; None means the token is rejected."""
    if isinstance(kind, Token):
        kind = kind.kind
    stack = _advance(state.stack, kind, state.grammar)
    if stack is None:
        return None
    return PrefixState(stack, state.tokens + (kind,), state.grammar)


def viable_kinds(state: PrefixState) -> frozenset:
    """All terminal kinds that ``accepts_prefix`` would accept from ``state``."""
    grammar = state.grammar
    out = set()
    for kind in grammar.terminals:
        if _advance(state.stack, kind, grammar) is not None:
            out.add(kind)
    return frozenset(out)


class EndOfProgram(Exception):
    pass


def frontier_nonterminal(state: PrefixState) -> str:
    """Coarse nonterminal whose expansion is in progress at ``state``.

    Returns one of Statement, Distribution, ArgList, Expr, Declaration, or the
    raw nonterminal name for block-level positions.
    """
    stack = state.stack
    top = state.top
    if top == EOF or top is None:
        raise EndOfProgram("program is complete")
    if top in CATEGORY:
        return CATEGORY[top]
    while stack is not None:
        sym = stack[0]
        if isinstance(sym, _End) and sym.nt in CATEGORY:
            return CATEGORY[sym.nt]
        if isinstance(sym, _End):
            return sym.nt
        stack = stack[1]
    raise EndOfProgram("program is complete")


def at_statement_start(state: PrefixState) -> bool:
    return state.top in ("pstmts", "lstmts", "lstmt")


# --- parse trees -----------------------------------------------------------


@dataclass
class ParseNode:
    symbol: str
    children: List["ParseNode"] = field(default_factory=list)
    start: int = 0
    end: int = 0
    token: Optional[Token] = None

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)

    def leaves(self):
        if self.token is not None:
            yield self
        for c in self.children:
            yield from c.leaves()


def parse_tree(tokens: Sequence[Token], start: str = "program", grammar: GrammarDef = GRAMMAR) -> ParseNode:
    """LL(1) parse of ``tokens`` from nonterminal ``start`` to end of input."""
    table = grammar.table
    nts = grammar.nonterminals
    holder = ParseNode("<root>")
    stack = [EOF, start]
    nodes = [holder]
    pos = 0
    n = len(tokens)
    while True:
        top = stack.pop()
        kind = tokens[pos].kind if pos < n else EOF
        if type(top) is _End:
            nodes.pop().end = pos
            continue
        if top in nts:
            rhs = table.get((top, kind))
            if rhs is None:
                raise _error(tokens, pos, top, grammar)
            node = ParseNode(top, start=pos)
            nodes[-1].children.append(node)
            nodes.append(node)
            stack.append(_End(top))
            stack.extend(reversed(rhs))
            continue
        if top == kind:
            if kind == EOF:
                return holder.children[0]
            nodes[-1].children.append(ParseNode(kind, start=pos, end=pos + 1, token=tokens[pos]))
            pos += 1
            continue
        raise _error(tokens, pos, top, grammar)


def _error(tokens, pos, top, grammar):
    if top in grammar.nonterminals:
        expected = {t for (a, t) in grammar.table if a == top}
    else:
        expected = {top}
    if pos < len(tokens):
        tok = tokens[pos]
        return ParseError(
            f"syntax error at token {pos} ({tok.text!r}); expected one of {sorted(expected)}",
            pos,
            tok.offset,
            expected,
        )
    return ParseError(f"unexpected end of input; expected one of {sorted(expected)}", pos, -1, expected)


# --- parse tree -> AST -----------------------------------------------------


def _kid(node: ParseNode, symbol: str) -> ParseNode:
    for c in node.children:
        if c.symbol == symbol:
            return c
    raise KeyError(symbol)


def _number(tok: Token):
    if tok.kind == "INT":
        return int(tok.text)
    return float(tok.text)


def _expr(node: ParseNode) -> ast.Expr:
    sym = node.symbol
    if sym == "expr":
        left = _expr(_kid(node, "term"))
        return _tails(left, _kid(node, "expr_tail"), "term")
    if sym == "term":
        left = _expr(_kid(node, "unary"))
        return _tails(left, _kid(node, "term_tail"), "unary")
    if sym in ("unary", "nonident_unary"):
        first = node.children[0]
        if first.symbol == "-":
            return ast.Neg(_expr(node.children[1]), node.span)
        return _expr(first)
    if sym == "primary":
        first = node.children[0]
        if first.symbol == "IDENT":
            return ast.Name(first.token.text, first.span)
        return _expr(first)
    if sym == "atom":
        first = node.children[0]
        if first.symbol in ("INT", "FLOAT"):
            return ast.Num(_number(first.token), first.span)
        if first.symbol == "(":
            return _expr(node.children[1])
        return _expr(first)
    if sym == "call":
        func = node.children[0].token.text
        args = tuple(_expr(c) for c in node.children if c.symbol == "expr")
        return ast.Call(func, args, node.span)
    if sym == "nonident_expr":
        left = _expr(_kid(node, "nonident_unary"))
        left = _tails(left, _kid(node, "term_tail"), "unary")
        return _tails(left, _kid(node, "expr_tail"), "term")
    raise ValueError(f"not an expression node: {sym}")


def _tails(left: ast.Expr, tail: ParseNode, operand: str) -> ast.Expr:
    # tail := op operand tail | eps  (left-associative fold)
    while tail.children:
        op = tail.children[0].symbol
        right = _expr(tail.children[1])
        start = left.span[0] if left.span[0] >= 0 else tail.start
        left = ast.BinOp(op, left, right, (start, right.span[1]))
        tail = tail.children[2]
    return left


def _arg(node: ParseNode) -> ast.Arg:
    first = node.children[0]
    if first.symbol == "IDENT":
        after = node.children[1]
        if after.children and after.children[0].symbol == "=":
            value = _expr(after.children[1])
            return ast.Arg(first.token.text, value, node.span, first.span)
        left: ast.Expr = ast.Name(first.token.text, first.span)
        left = _tails(left, _kid(after, "term_tail"), "unary")
        left = _tails(left, _kid(after, "expr_tail"), "term")
        return ast.Arg(None, left, node.span)
    return ast.Arg(None, _expr(first), node.span)


def _dist(node: ParseNode) -> ast.DistCall:
    name = node.children[0]
    args_node = _kid(node, "args")
    args = []
    if args_node.children:
        args.append(_arg(args_node.children[0]))
        tail = args_node.children[1]
        while tail.children:
            args.append(_arg(tail.children[1]))
            tail = tail.children[2]
    close = node.children[-1]
    return ast.DistCall(name.token.text, tuple(args), node.span, name.span, close.span)


def _pstmt(node: ParseNode) -> ast.Statement:
    target = node.children[0]
    tail = node.children[1]
    first = tail.children[0]
    if first.symbol == "=":
        return ast.Deterministic(target.token.text, _expr(tail.children[1]), node.span, target.span)
    rep = None
    rep_span = ast.NO_SPAN
    if first.symbol == "rep":
        rep = int(first.children[1].token.text)
        rep_span = first.children[1].span
    dist = _dist(_kid(tail, "dist"))
    return ast.Stochastic(target.token.text, dist, rep, node.span, target.span, rep_span)


def _lstmt(node: ParseNode) -> ast.Stochastic:
    target = node.children[0]
    return ast.Stochastic(target.token.text, _dist(_kid(node, "dist")), None, node.span, target.span)


def _decl(node: ParseNode) -> ast.DataDecl:
    name = node.children[0].token.text
    dtype = _kid(node, "dtype")
    kind = dtype.children[0].symbol
    length = int(dtype.children[2].token.text) if kind in ("vector", "intvector") else None
    return ast.DataDecl(name, kind, length, node.span)


def _list(node: ParseNode):
    out = []
    while node.children:
        out.append(node.children[0])
        node = node.children[1]
    return out


def tree_to_program(root: ParseNode) -> ast.ModelProgram:
    data = _kid(root, "data_block")
    prior = _kid(root, "prior_block")
    lik = _kid(root, "likelihood_block")
    decls = [_decl(d) for d in _list(_kid(data, "decls"))]
    pstmts = [_pstmt(s) for s in _list(_kid(prior, "pstmts"))]
    lstmts = [_lstmt(_kid(lik, "lstmt"))]
    lstmts += [_lstmt(s) for s in _list(_kid(lik, "lstmts"))]
    return ast.ModelProgram(tuple(decls), tuple(pstmts), tuple(lstmts))


def parse(text: str) -> ast.ModelProgram:
    """Parse program text into a ModelProgram; raise ParseError on bad syntax."""
    try:
        tokens = tokenize(text)
    except LexError as exc:
        raise ParseError(f"lexical error: {exc}", -1, exc.offset) from exc
    return tree_to_program(parse_tree(tokens))


def parse_tokens(tokens: Sequence[Token]) -> ast.ModelProgram:
    return tree_to_program(parse_tree(tokens))


def parse_statement(tokens: Sequence[Token], block: str) -> ast.Statement:
    """Parse a single prior or likelihood statement; spans index into ``tokens``."""
    if block == "prior":
        return _pstmt(parse_tree(tokens, "pstmt"))
    if block == "likelihood":
        return _lstmt(parse_tree(tokens, "lstmt"))
    raise ValueError(f"unknown block {block!r}")
