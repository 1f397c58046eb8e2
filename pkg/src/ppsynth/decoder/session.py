"""Constrained decoding of model programs one statement at a time.

A session owns the token context, the grammar prefix state and the symbol
table. Every statement is validated as soon as it is complete. On failure
the tokens from the start of the violating span onward are dropped, and
generation resumes from the prefix state recorded just before that token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..grammar import LexError, PrefixState, Token, accepts_prefix, at_statement_start, tokenize
from ..grammar.render import render_decl, render_statement
from ..ppl import ast
from ..ppl.distributions import REGISTRY
from ..ppl.model import Dataset
from ..semantics import PRIOR, SymbolTable, validate
from .generators import CandidateGenerator, FragmentContext, TokenContext, render_prompt
from .masking import DeadEnd, apply_mask, build_mask

LIKELIHOOD = "likelihood"


class DecodeError(RuntimeError):
    """Decoding gave up; ``kind`` is "decode-retry-cap" or "decode-dead-end"."""

    def __init__(self, kind: str, message: str, block: str = ""):
        super().__init__(message)
        self.kind = kind
        self.block = block


@dataclass
class DecoderConfig:
    retry_cap: int = 16
    max_prior: int = 8
    max_likelihood: int = 3
    temperature: float = 0.3
    max_statement_tokens: int = 64

    def __post_init__(self):
        if self.retry_cap < 1:
            raise ValueError("retry_cap must be at least 1")
        if self.max_prior < 0 or self.max_likelihood < 1:
            raise ValueError("statement caps must allow a non-empty likelihood")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


@dataclass
class DecodeStats:
    tokens_generated: int = 0
    tokens_discarded: int = 0
    statements_accepted: int = 0
    retries: int = 0
    proposals: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class _Snapshot:
    state: PrefixState
    table: SymbolTable
    n_tokens: int
    n_prior: int
    n_likelihood: int


def data_decls_for(dataset: Dataset) -> tuple:
    """Data declarations matching the dataset's columns; size-1 columns are scalars."""
    decls = []
    for name, values in dataset.columns.items():
        is_int = dataset.is_int(name)
        if np.ndim(values) == 0 or np.size(values) == 1:
            decls.append(ast.DataDecl(name, "int" if is_int else "real"))
        else:
            decls.append(ast.DataDecl(name, "intvector" if is_int else "vector", int(np.size(values))))
    return tuple(decls)


@dataclass
class DecodeSession:
    """Mutable decoding state for one program."""

    data_decls: tuple
    dataset: Optional[Dataset] = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    config: DecoderConfig = field(default_factory=DecoderConfig)
    prompt: str = ""  # overrides the dataset description in fragment prompts
    registry: dict = field(default_factory=lambda: REGISTRY)
    stats: DecodeStats = field(default_factory=DecodeStats)

    def __post_init__(self):
        self.tokens: List[Token] = []
        self.state = PrefixState.initial()
        self.table = SymbolTable.from_data(self.data_decls)
        self.prior_stmts: List[ast.Statement] = []
        self.likelihood_stmts: List[ast.Stochastic] = []
        self.block: Optional[str] = None
        self._snapshots: List[_Snapshot] = []
        self._pending: List[Token] = []
        text = "model { data { " + " ".join(render_decl(d) for d in self.data_decls) + " }"
        self._extend(tokenize(text))

    @classmethod
    def for_dataset(cls, dataset: Dataset, **kwargs) -> "DecodeSession":
        return cls(data_decls_for(dataset), dataset=dataset, **kwargs)

    def _extend(self, tokens: Sequence[Token]) -> None:
        self.state = self.state.feed(tokens)
        self.tokens.extend(tokens)

    def open_block(self, block: str) -> None:
        keyword = "prior" if block == PRIOR else LIKELIHOOD
        self._extend(tokenize(f"{keyword} {{"))
        self.block = block
        self._pending = []

    def close_block(self) -> None:
        self._extend(tokenize("}"))
        if self.block == LIKELIHOOD:
            self._extend(tokenize("}"))
        self.block = None

    def push_snapshot(self) -> None:
        self._snapshots.append(
            _Snapshot(self.state, self.table.snapshot(), len(self.tokens),
                      len(self.prior_stmts), len(self.likelihood_stmts))
        )

    def pop_snapshot(self) -> None:
        """Restore the most recent snapshot and discard everything after it."""
        snap = self._snapshots.pop()
        self.stats.tokens_discarded += len(self.tokens) - snap.n_tokens
        del self.tokens[snap.n_tokens:]
        self.state = snap.state
        self.table = snap.table
        del self.prior_stmts[snap.n_prior:]
        del self.likelihood_stmts[snap.n_likelihood:]

    def drop_snapshot(self) -> None:
        self._snapshots.pop()

    @property
    def description(self) -> str:
        if self.prompt:
            return self.prompt
        return self.dataset.description if self.dataset is not None else ""

    @property
    def statements(self) -> List[ast.Statement]:
        return self.prior_stmts if self.block == PRIOR else self.likelihood_stmts

    @property
    def statement_cap(self) -> int:
        return self.config.max_prior if self.block == PRIOR else self.config.max_likelihood

    def context_text(self) -> str:
        lines = ["model {", "  data {"]
        lines += [f"    {render_decl(d)}" for d in self.data_decls]
        lines.append("  }")
        if self.block is not None or self.prior_stmts:
            lines.append("  prior {")
            lines += [f"    {render_statement(s)}" for s in self.prior_stmts]
            if self.block == PRIOR:
                return "\n".join(lines)
            lines.append("  }")
        lines.append("  likelihood {")
        lines += [f"    {render_statement(s)}" for s in self.likelihood_stmts]
        return "\n".join(lines)

    def program(self) -> ast.ModelProgram:
        return ast.ModelProgram(self.data_decls, tuple(self.prior_stmts), tuple(self.likelihood_stmts))

    def _commit(self, stmt_tokens: List[Token], report) -> ast.Statement:
        self.tokens.extend(stmt_tokens)
        self.state = report.end_state
        self.statements.append(report.statement)
        self.stats.statements_accepted += 1
        return report.statement


def _close_allowed(session: DecodeSession) -> bool:
    return session.block == PRIOR or bool(session.likelihood_stmts)


def _retry(session: DecodeSession, retries: int, message: str) -> int:
    retries += 1
    session.stats.retries += 1
    if retries >= session.config.retry_cap:
        raise DecodeError(
            "decode-retry-cap",
            f"gave up on a {session.block} statement after {retries} failed attempts: {message}",
            session.block or "",
        )
    return retries


def _cut_point(span_start: int, n_tokens: int, previous: Optional[int]) -> int:
    """Where to resume after a failure.

    Normally the start of the violating span. When a retry fails again at
    exactly the same point, the cut backs off one token before it, so a token that admits no valid continuation (an extra
    comma, say) is eventually resampled too.
    """
    cut = max(0, min(span_start, n_tokens - 1))
    if previous is not None and cut == previous:
        cut = max(0, previous - 1)
    return cut


def _sample_token(session: DecodeSession, generator, state: PrefixState, stmt_tokens) -> Optional[Token]:
    weights = generator.token_weights(
        TokenContext(session=session, state=state, statement_tokens=tuple(stmt_tokens), rng=session.rng)
    )
    vocab = list(weights)
    mask = build_mask(state, vocab)
    probs = apply_mask([weights[v] for v in vocab], mask, session.config.temperature)
    text = vocab[int(session.rng.choice(len(vocab), p=probs))]
    session.stats.tokens_generated += 1
    return tokenize(text)[0]


def _sample_statement_tokens(session: DecodeSession, generator) -> Optional[ast.Statement]:
    start = session.state
    retries = 0
    last_cut: Optional[int] = None
    stmt_tokens: List[Token] = []
    states = [start]  # states[i] is the prefix state before stmt_tokens[i]
    while True:
        state = states[len(stmt_tokens)]
        try:
            while not (stmt_tokens and at_statement_start(state)):
                if len(stmt_tokens) >= session.config.max_statement_tokens:
                    raise DeadEnd("statement grew past the token limit")
                tok = _sample_token(session, generator, state, stmt_tokens)
                if not stmt_tokens and tok.kind == "}":
                    return None
                state = accepts_prefix(state, tok.kind)
                stmt_tokens.append(tok)
                states.append(state)
        except DeadEnd as exc:
            retries = _retry(session, retries, str(exc))
            session.stats.tokens_discarded += len(stmt_tokens)
            stmt_tokens, states, last_cut = [], [start], None
            continue
        report = validate(stmt_tokens, start, session.table, session.registry)
        if report.valid:
            return session._commit(stmt_tokens, report)
        retries = _retry(session, retries, report.message)
        cut = last_cut = _cut_point(report.violating_span[0], len(stmt_tokens), last_cut)
        session.stats.tokens_discarded += len(stmt_tokens) - cut
        del stmt_tokens[cut:]
        del states[cut + 1:]


def _strip_echo(prefix: List[Token], proposal: List[Token]) -> List[Token]:
    """Drop a repeated copy of the kept prefix from a fragment proposal."""
    n = len(prefix)
    if n and [t.text for t in proposal[:n]] == [t.text for t in prefix]:
        return proposal[n:]
    return proposal


def _next_statement_tokens(session: DecodeSession, generator, prefix: List[Token]):
    """Tokens of one more proposed statement, or None when the block closes."""
    if not session._pending:
        session.stats.proposals += 1
        text = generator.propose_fragment(
            FragmentContext(
                session=session,
                prompt=render_prompt(session.description, session.context_text(), session.registry),
                context=session.context_text(),
                prefix=" ".join(t.text for t in prefix),
                block=session.block,
                rng=session.rng,
            )
        )
        session._pending = _strip_echo(prefix, tokenize(text or ""))
        if not session._pending and not prefix:
            return None
    if not prefix and session._pending[0].kind == "}":
        session._pending = []
        return None
    # one statement: everything through the first top-level ';'
    for i, tok in enumerate(session._pending):
        if tok.kind == ";":
            out, session._pending = session._pending[: i + 1], session._pending[i + 1:]
            break
    else:
        out, session._pending = session._pending, []
    session.stats.tokens_generated += len(out)
    return prefix + out


def _sample_statement_fragments(session: DecodeSession, generator) -> Optional[ast.Statement]:
    start = session.state
    retries = 0
    last_cut: Optional[int] = None
    prefix: List[Token] = []
    while True:
        try:
            tokens = _next_statement_tokens(session, generator, prefix)
        except LexError as exc:
            session._pending = []
            retries = _retry(session, retries, f"lexical error: {exc}")
            continue
        if tokens is None:
            if _close_allowed(session):
                return None
            retries = _retry(session, retries, "the likelihood block needs at least one statement")
            continue
        report = validate(tokens, start, session.table, session.registry)
        if report.valid:
            return session._commit(tokens, report)
        session._pending = []
        retries = _retry(session, retries, report.message)
        cut = last_cut = _cut_point(report.violating_span[0], len(tokens), last_cut)
        session.stats.tokens_discarded += len(tokens) - cut
        prefix = tokens[:cut]


def sample_statement(session: DecodeSession, generator: CandidateGenerator) -> Optional[ast.Statement]:
    """Decode, validate and commit one statement of the open block.

    Returns None when the generator closes the block instead. Raises
    DecodeError once ``config.retry_cap`` attempts have failed.
    """
    if session.block is None:
        raise RuntimeError("no block is open")
    if generator.mode == "token":
        return _sample_statement_tokens(session, generator)
    return _sample_statement_fragments(session, generator)


def decode_block(session: DecodeSession, block: str, generator: CandidateGenerator) -> List[ast.Statement]:
    """Decode a whole prior or likelihood block and close it."""
    session.open_block(block)
    while len(session.statements) < session.statement_cap:
        if sample_statement(session, generator) is None:
            break
    statements = list(session.statements)
    session.close_block()
    return statements


def _session(dataset, generator, config, rng, prompt, stats):
    config = config or DecoderConfig(temperature=getattr(generator, "temperature", 0.3))
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    kwargs = dict(rng=rng, config=config)
    if prompt is not None:
        kwargs["prompt"] = prompt
    if stats is not None:
        kwargs["stats"] = stats
    return DecodeSession.for_dataset(dataset, **kwargs)


def generate_program(
    dataset: Dataset,
    generator: CandidateGenerator,
    config: Optional[DecoderConfig] = None,
    rng=None,
    prompt: Optional[str] = None,
    stats: Optional[DecodeStats] = None,
) -> ast.ModelProgram:
    """Decode a full program: data block from the dataset, then prior, then likelihood."""
    session = _session(dataset, generator, config, rng, prompt, stats)
    decode_block(session, PRIOR, generator)
    decode_block(session, LIKELIHOOD, generator)
    return session.program()


def generate_prior(dataset, generator, config=None, rng=None, prompt=None, stats=None) -> tuple:
    session = _session(dataset, generator, config, rng, prompt, stats)
    return tuple(decode_block(session, PRIOR, generator))


def generate_likelihood(
    dataset, prior_stmts, generator, config=None, rng=None, prompt=None, stats=None
) -> tuple:
    """Decode a likelihood block for a fixed, already valid prior block."""
    session = _session(dataset, generator, config, rng, prompt, stats)
    session.open_block(PRIOR)
    for stmt in prior_stmts:
        report = validate(tokenize(render_statement(stmt)), session.state, session.table, session.registry)
        if not report.valid:
            raise ValueError(f"prior statement is not valid: {report.message}")
        session._commit(tokenize(render_statement(stmt)), report)
    session.close_block()
    return tuple(decode_block(session, LIKELIHOOD, generator))
