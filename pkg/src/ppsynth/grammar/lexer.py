from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORDS = frozenset(
    {
        "model", "data", "prior", "likelihood",
        "real", "int", "vector", "intvector",
        "exp", "log", "sqrt", "logit", "invlogit", "pow",
    }
)
PUNCT = frozenset("{}()[];:,~=+-*/")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<FLOAT>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<INT>\d+)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}()\[\];:,~=+\-*/])
    """,
    re.VERBOSE,
)


class LexError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class Token:
    kind: str  # terminal kind: IDENT, INT, FLOAT, a keyword, or a punctuation char
    text: str
    offset: int = -1

    def __str__(self) -> str:
        return self.text


def token_kind(text: str) -> str:
    """Terminal kind of a single token string."""
    if text in KEYWORDS or text in PUNCT:
        return text
    m = _TOKEN_RE.fullmatch(text)
    if m is None or m.lastgroup in (None, "ws"):
        raise LexError(f"not a single token: {text!r}", 0)
    return m.lastgroup


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LexError(f"unexpected character {text[pos]!r} at offset {pos}", pos)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            if kind == "IDENT" and value in KEYWORDS:
                kind = value
            elif kind == "punct":
                kind = value
            tokens.append(Token(kind, value, pos))
        pos = m.end()
    return tokens
