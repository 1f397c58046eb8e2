"""Context-free grammar of the modeling language and its LL(1) table.

EBNF::

    program          := "model" "{" data_block prior_block likelihood_block "}"
    data_block       := "data" "{" decl* "}"
    decl             := IDENT ":" dtype ";"
    dtype            := "real" | "int" | "vector" "[" INT "]" | "intvector" "[" INT "]"
    prior_block      := "prior" "{" pstmt* "}"
    pstmt            := IDENT rep? "~" dist ";" | IDENT "=" expr ";"
    rep              := "[" INT "]"
    likelihood_block := "likelihood" "{" lstmt+ "}"
    lstmt            := IDENT "~" dist ";"
    dist             := IDENT "(" (arg ("," arg)*)? ")"
    arg              := (IDENT "=")? expr
    expr             := term (("+" | "-") term)*
    term             := unary (("*" | "/") unary)*
    unary            := "-" unary | IDENT | INT | FLOAT | "(" expr ")" | call
    call             := ("exp" | "log" | "sqrt" | "logit" | "invlogit") "(" expr ")"
                      | "pow" "(" expr "," expr ")"

The productions below are the left-factored form of the same language, so a
single token of lookahead decides every expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Tuple

EOF = "$"
EPS = ()

UNARY_FUNCS = ("exp", "log", "sqrt", "logit", "invlogit")

_PRODUCTIONS: List[Tuple[str, Tuple[str, ...]]] = [
    ("program", ("model", "{", "data_block", "prior_block", "likelihood_block", "}")),
    ("data_block", ("data", "{", "decls", "}")),
    ("decls", ("decl", "decls")),
    ("decls", EPS),
    ("decl", ("IDENT", ":", "dtype", ";")),
    ("dtype", ("real",)),
    ("dtype", ("int",)),
    ("dtype", ("vector", "[", "INT", "]")),
    ("dtype", ("intvector", "[", "INT", "]")),
    ("prior_block", ("prior", "{", "pstmts", "}")),
    ("pstmts", ("pstmt", "pstmts")),
    ("pstmts", EPS),
    ("pstmt", ("IDENT", "pstmt_tail")),
    ("pstmt_tail", ("rep", "~", "dist", ";")),
    ("pstmt_tail", ("~", "dist", ";")),
    ("pstmt_tail", ("=", "expr", ";")),
    ("rep", ("[", "INT", "]")),
    ("likelihood_block", ("likelihood", "{", "lstmt", "lstmts", "}")),
    ("lstmts", ("lstmt", "lstmts")),
    ("lstmts", EPS),
    ("lstmt", ("IDENT", "~", "dist", ";")),
    ("dist", ("IDENT", "(", "args", ")")),
    ("args", ("arg", "args_tail")),
    ("args", EPS),
    ("args_tail", (",", "arg", "args_tail")),
    ("args_tail", EPS),
    ("arg", ("IDENT", "arg_after_ident")),
    ("arg", ("nonident_expr",)),
    ("arg_after_ident", ("=", "expr")),
    ("arg_after_ident", ("term_tail", "expr_tail")),
    ("nonident_expr", ("nonident_unary", "term_tail", "expr_tail")),
    ("expr", ("term", "expr_tail")),
    ("expr_tail", ("+", "term", "expr_tail")),
    ("expr_tail", ("-", "term", "expr_tail")),
    ("expr_tail", EPS),
    ("term", ("unary", "term_tail")),
    ("term_tail", ("*", "unary", "term_tail")),
    ("term_tail", ("/", "unary", "term_tail")),
    ("term_tail", EPS),
    ("unary", ("-", "unary")),
    ("unary", ("primary",)),
    ("nonident_unary", ("-", "unary")),
    ("nonident_unary", ("atom",)),
    ("primary", ("IDENT",)),
    ("primary", ("atom",)),
    ("atom", ("INT",)),
    ("atom", ("FLOAT",)),
    ("atom", ("(", "expr", ")")),
    ("atom", ("call",)),
    *[("call", (f, "(", "expr", ")")) for f in UNARY_FUNCS],
    ("call", ("pow", "(", "expr", ",", "expr", ")")),
]

# Coarse categories reported by frontier_nonterminal.
CATEGORY = {
    "pstmts": "Statement",
    "lstmts": "Statement",
    "pstmt": "Statement",
    "lstmt": "Statement",
    "pstmt_tail": "Statement",
    "dist": "Distribution",
    "args": "ArgList",
    "args_tail": "ArgList",
    "arg": "ArgList",
    "arg_after_ident": "ArgList",
    "nonident_expr": "Expr",
    "expr": "Expr",
    "expr_tail": "Expr",
    "term": "Expr",
    "term_tail": "Expr",
    "unary": "Expr",
    "nonident_unary": "Expr",
    "primary": "Expr",
    "atom": "Expr",
    "call": "Expr",
    "decls": "Declaration",
    "decl": "Declaration",
    "dtype": "Declaration",
    "rep": "Statement",
}


class GrammarConflict(Exception):
    pass


@dataclass
class GrammarDef:
    productions: List[Tuple[str, Tuple[str, ...]]]
    start: str
    nonterminals: FrozenSet[str] = field(init=False)
    terminals: FrozenSet[str] = field(init=False)
    first: Dict[str, FrozenSet[str]] = field(init=False, repr=False)
    follow: Dict[str, FrozenSet[str]] = field(init=False, repr=False)
    nullable: FrozenSet[str] = field(init=False, repr=False)
    table: Dict[Tuple[str, str], Tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self.nonterminals = frozenset(lhs for lhs, _ in self.productions)
        syms = {s for _, rhs in self.productions for s in rhs}
        self.terminals = frozenset(syms - self.nonterminals) | {EOF}
        self._compute_sets()
        self._build_table()

    def is_terminal(self, sym: str) -> bool:
        return sym not in self.nonterminals

    def first_of(self, seq) -> Tuple[FrozenSet[str], bool]:
        out = set()
        for sym in seq:
            if sym in self.nonterminals:
                out |= self.first[sym]
                if sym not in self.nullable:
                    return frozenset(out), False
            else:
                out.add(sym)
                return frozenset(out), False
        return frozenset(out), True

    def _compute_sets(self):
        nullable = set()
        first = {a: set() for a in self.nonterminals}
        changed = True
        while changed:
            changed = False
            for lhs, rhs in self.productions:
                if lhs not in nullable and all(s in nullable for s in rhs):
                    nullable.add(lhs)
                    changed = True
                for sym in rhs:
                    add = first[sym] if sym in self.nonterminals else {sym}
                    if not add <= first[lhs]:
                        first[lhs] |= add
                        changed = True
                    if sym not in nullable:
                        break
        self.nullable = frozenset(nullable)
        self.first = {a: frozenset(s) for a, s in first.items()}

        follow = {a: set() for a in self.nonterminals}
        follow[self.start].add(EOF)
        changed = True
        while changed:
            changed = False
            for lhs, rhs in self.productions:
                for i, sym in enumerate(rhs):
                    if sym not in self.nonterminals:
                        continue
                    f, rest_nullable = self.first_of(rhs[i + 1:])
                    add = set(f)
                    if rest_nullable:
                        add |= follow[lhs]
                    if not add <= follow[sym]:
                        follow[sym] |= add
                        changed = True
        self.follow = {a: frozenset(s) for a, s in follow.items()}

    def _build_table(self):
        table = {}
        for lhs, rhs in self.productions:
            f, is_nullable = self.first_of(rhs)
            lookaheads = set(f)
            if is_nullable:
                lookaheads |= self.follow[lhs]
            for t in lookaheads:
                if (lhs, t) in table and table[(lhs, t)] != rhs:
                    raise GrammarConflict(f"LL(1) conflict on {lhs} / {t}")
                table[(lhs, t)] = rhs
        self.table = table

    def reachable(self) -> FrozenSet[str]:
        seen = {self.start}
        stack = [self.start]
        while stack:
            a = stack.pop()
            for lhs, rhs in self.productions:
                if lhs != a:
                    continue
                for s in rhs:
                    if s in self.nonterminals and s not in seen:
                        seen.add(s)
                        stack.append(s)
        return frozenset(seen)


GRAMMAR = GrammarDef(_PRODUCTIONS, "program")


def ebnf() -> str:
    """The grammar in EBNF, as documented in this module."""
    return __doc__.split("EBNF::", 1)[1].split("The productions", 1)[0].strip("\n")
