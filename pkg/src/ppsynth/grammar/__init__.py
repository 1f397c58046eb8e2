from .definition import GRAMMAR, GrammarDef, ebnf
from .lexer import LexError, Token, token_kind, tokenize
from .parser import (
    EndOfProgram,
    ParseError,
    ParseNode,
    PrefixState,
    accepts_prefix,
    at_statement_start,
    frontier_nonterminal,
    parse,
    parse_statement,
    parse_tokens,
    parse_tree,
    viable_kinds,
)
from .render import render, render_expr, render_statement

__all__ = [
    "GRAMMAR", "GrammarDef", "ebnf", "LexError", "Token", "token_kind", "tokenize",
    "EndOfProgram", "ParseError", "ParseNode", "PrefixState", "accepts_prefix",
    "at_statement_start", "frontier_nonterminal", "parse", "parse_statement",
    "parse_tokens", "parse_tree", "viable_kinds", "render", "render_expr",
    "render_statement",
]
