"""Candidate generators used by the constrained decoder.

A generator works in one of two modes. In token mode it returns a weight
for each candidate next token, and the decoder masks and samples those
weights. In fragment mode it returns statement text, which the decoder
validates as a whole.
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..grammar import PrefixState, Token
from ..ppl import ast
from ..ppl.distributions import (
    NONNEG_INT,
    ORDERED,
    POSITIVE,
    REAL,
    SUPPORT_BINARY,
    SUPPORT_NONNEG_INT,
    SUPPORT_POSITIVE,
    SUPPORT_UNIT,
    UNIT,
    supports_values,
)

if TYPE_CHECKING:  # pragma: no cover
    from .session import DecodeSession

PROMPT_TEMPLATE = """You write probabilistic models in a small modeling language.

Dataset description:
{description}

A program has a data block, a prior block and a likelihood block. Prior
statements are `name ~ Dist(args);`, `name[n] ~ Dist(args);` or
`name = expression;`. Likelihood statements are `column ~ Dist(args);` and
their targets must be data columns. Available distributions: {distributions}.
Expressions use + - * /, parentheses, numbers, bound names and the functions
exp, log, sqrt, logit, invlogit and pow.

Program so far:
{template_code}
"""

FRAGMENT_INSTRUCTIONS = """
Reply with exactly one new statement for the {block} block, or with a single
`}}` to close the block. Reply with code only.
"""

PREFIX_INSTRUCTIONS = """The statement must begin with: {prefix}
Reply with the rest of that statement only.
"""


def render_prompt(description: str, template_code: str, distributions: Iterable[str] = ()) -> str:
    return PROMPT_TEMPLATE.format(
        description=description.strip() or "(no description)",
        template_code=template_code,
        distributions=", ".join(distributions) or "see the registry",
    )


@dataclass(frozen=True)
class TokenContext:
    session: "DecodeSession"
    state: PrefixState
    statement_tokens: Tuple[Token, ...]
    rng: np.random.Generator


@dataclass(frozen=True)
class FragmentContext:
    session: "DecodeSession"
    prompt: str
    context: str
    prefix: str
    block: str
    rng: np.random.Generator


class CandidateGenerator(ABC):
    """Source of candidate tokens or statements."""

    mode = "token"
    temperature = 0.3

    def token_weights(self, ctx: TokenContext) -> Dict[str, float]:
        raise NotImplementedError(f"{type(self).__name__} does not produce token weights")

    def propose_fragment(self, ctx: FragmentContext) -> str:
        raise NotImplementedError(f"{type(self).__name__} does not produce fragments")


class FragmentGenerator(CandidateGenerator, ABC):
    mode = "fragment"

    @abstractmethod
    def propose_fragment(self, ctx: FragmentContext) -> str: ...


# --- builtin grammar sampler -------------------------------------------------

FRESH_NAMES = (
    "mu", "tau", "theta", "alpha", "beta", "sigma", "eta", "lam", "phi", "nu",
    "kappa", "gamma", "delta", "omega", "a", "b", "c", "z", "s", "m",
)
WRONG_ALIASES = ("std", "sd", "scale", "loc", "lam")
LITERALS = {
    REAL: {"0": 3.0, "1": 0.5, "2": 0.2, "0.5": 0.2},
    POSITIVE: {"1": 2.0, "2": 1.0, "5": 2.0, "10": 2.0, "2.5": 0.5, "0.5": 0.5, "100": 0.2},
    UNIT: {"0.5": 1.0, "0.1": 0.2, "0.9": 0.2},
    NONNEG_INT: {"1": 0.5, "10": 0.5},
    "ordered-lower": {"0": 2.0, "1": 0.3},
    "ordered-upper": {"10": 2.0, "100": 1.0, "1": 0.5, "5": 0.5},
}
OPERATORS = {
    REAL: {"+": 1.0, "-": 0.3, "*": 1.0, "/": 0.2},
    POSITIVE: {"*": 1.0, "/": 0.3, "+": 0.3},
}
_OPENERS = {"(", "exp", "log", "sqrt", "logit", "invlogit", "pow"}
_FUNC_DOMAIN = {"exp": REAL, "log": POSITIVE, "sqrt": POSITIVE, "logit": UNIT, "invlogit": REAL}
_SCALE_NAMES = re.compile(r"^(sigma|se|sd|std|err|stderr|error)s?(_.*)?$", re.IGNORECASE)


@dataclass(frozen=True)
class VarInfo:
    shape: Tuple[int, ...]
    is_int: bool
    sign: str  # real, positive, unit or nonneg-int
    is_data: bool
    values: Optional[np.ndarray] = None


def _value_sign(values: np.ndarray, is_int: bool) -> str:
    if is_int and np.all(values >= 0):
        return NONNEG_INT
    if np.all((values > 0) & (values < 1)):
        return UNIT
    if np.all(values > 0):
        return POSITIVE
    return REAL


def _expr_sign(expr: ast.Expr, info: Dict[str, VarInfo]) -> str:
    if isinstance(expr, ast.Num):
        return POSITIVE if expr.value > 0 else REAL
    if isinstance(expr, ast.Name):
        v = info.get(expr.id)
        if v is None:
            return REAL
        if v.sign == NONNEG_INT:
            return POSITIVE if v.values is not None and np.all(v.values > 0) else REAL
        return v.sign
    if isinstance(expr, ast.Call):
        if expr.func in ("exp", "sqrt"):
            return POSITIVE
        if expr.func == "invlogit":
            return UNIT
        if expr.func == "pow" and _expr_sign(expr.args[0], info) == POSITIVE:
            return POSITIVE
        return REAL
    if isinstance(expr, ast.BinOp) and expr.op in "+*/":
        left, right = _expr_sign(expr.left, info), _expr_sign(expr.right, info)
        pos = (POSITIVE, UNIT)
        if left in pos and right in pos:
            return UNIT if expr.op == "*" and left == right == UNIT else POSITIVE
    return REAL


_SUPPORT_SIGN = {SUPPORT_POSITIVE: POSITIVE, SUPPORT_UNIT: UNIT}


def variable_info(session: "DecodeSession") -> Dict[str, VarInfo]:
    """Shape and sign of every bound name, from data values and prior supports."""
    info: Dict[str, VarInfo] = {}
    types = session.table.types()
    for decl in session.data_decls:
        values = None
        if session.dataset is not None and decl.name in session.dataset:
            values = np.asarray(session.dataset.columns[decl.name], dtype=float).reshape(-1)
            sign = _value_sign(values, decl.is_int)
        else:
            sign = NONNEG_INT if decl.is_int else REAL
        info[decl.name] = VarInfo(decl.shape, decl.is_int, sign, True, values)
    for stmt in session.prior_stmts:
        vtype = types.get(stmt.target)
        if vtype is None:
            continue
        if isinstance(stmt, ast.Stochastic):
            spec = session.registry.get(stmt.dist.name)
            sign = _SUPPORT_SIGN.get(spec.support, REAL) if spec else REAL
        else:
            sign = _expr_sign(stmt.expr, info)
        info[stmt.target] = VarInfo(vtype.shape, vtype.is_int, sign, False)
    return info


def response_columns(session: "DecodeSession") -> List[str]:
    """Data columns that look like observations rather than covariates.

    Integer trial counts paired with a smaller count column, monotone
    covariates and columns named like standard errors are excluded.
    """
    names = [d.name for d in session.data_decls if d.length is not None]
    info = variable_info(session)
    excluded = set()
    for a in names:
        va = info[a].values
        if va is None:
            continue
        if len(va) > 2 and (np.all(np.diff(va) >= 0) or np.all(np.diff(va) <= 0)) and len(np.unique(va)) > 2:
            excluded.add(a)
        if _SCALE_NAMES.match(a) and info[a].sign == POSITIVE:
            excluded.add(a)
        for b in names:
            vb = info[b].values
            if a != b and vb is not None and info[a].is_int and info[b].is_int and va.shape == vb.shape:
                if np.all(va <= vb) and np.any(va < vb):
                    excluded.add(b)
    out = [n for n in names if n not in excluded]
    return out or names


@dataclass
class _Frame:
    func: str  # "dist", "paren" or a function keyword
    argpos: int = 0
    start: int = 0  # token index just after the opening parenthesis


@dataclass
class StatementView:
    """What a partial statement has committed to so far."""

    tokens: Tuple[Token, ...]
    target: Optional[str] = None
    rep: Optional[int] = None
    op: Optional[str] = None  # "~" or "="
    dist: Optional[str] = None
    frames: Tuple[_Frame, ...] = ()
    arg_start: int = 0  # index of the first token of the current dist argument
    arg_name: Optional[str] = None
    named: Tuple[str, ...] = ()
    expr_start: int = 0  # index of the first token of the current expression

    @classmethod
    def of(cls, tokens: Sequence[Token]) -> "StatementView":
        view = cls(tuple(tokens))
        frames: List[_Frame] = []
        named: List[str] = []
        prev = None
        for i, tok in enumerate(tokens):
            k = tok.kind
            if i == 0:
                view.target = tok.text
            elif view.op is None and k == "INT" and prev == "[":
                view.rep = int(tok.text)
            elif view.op is None and k in ("~", "="):
                view.op = k
                view.expr_start = i + 1
            elif view.op == "~" and view.dist is None and k == "IDENT":
                view.dist = tok.text
            elif k == "(":
                if view.op == "~" and not frames:
                    frames.append(_Frame("dist", 0, i + 1))
                    view.arg_start = view.expr_start = i + 1
                    view.arg_name = None
                else:
                    func = prev if prev in _OPENERS else "paren"
                    frames.append(_Frame(func, 0, i + 1))
            elif k == ")" and frames:
                frames.pop()
            elif k == "," and frames:
                frames[-1].argpos += 1
                if frames[-1].func == "dist" and len(frames) == 1:
                    view.arg_start = view.expr_start = i + 1
                    view.arg_name = None
            elif k == "=" and len(frames) == 1 and frames[0].func == "dist" and i == view.arg_start + 1:
                view.arg_name = tokens[i - 1].text
                named.append(view.arg_name)
                view.expr_start = i + 1
            prev = k
        view.frames = tuple(frames)
        view.named = tuple(named)
        return view

    @property
    def in_dist_args(self) -> bool:
        return bool(self.frames) and self.frames[0].func == "dist"

    @property
    def depth(self) -> int:
        return len(self.frames) - (1 if self.in_dist_args else 0)

    def current_expression(self) -> Tuple[Token, ...]:
        start = self.frames[-1].start if self.depth > 0 else self.expr_start
        out, level = [], 0
        for tok in self.tokens[start:]:
            if tok.kind == "(":
                level += 1
            elif tok.kind == ")":
                level -= 1
            elif level == 0 and tok.kind == ",":
                out = []
                continue
            if level == 0 or tok.kind == "(":
                out.append(tok)
        return tuple(out)


def _normalize(weights: Dict[str, float], total: float) -> Dict[str, float]:
    s = sum(weights.values())
    return {k: v * total / s for k, v in weights.items() if v > 0} if s > 0 else {}


def _merge(*parts: Dict[str, float]) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for part in parts:
        for k, v in part.items():
            out[k] = out.get(k, 0.0) + v
    return out


def _referenced_names(session: "DecodeSession") -> set:
    names = set()
    for stmt in list(session.prior_stmts) + list(session.likelihood_stmts):
        for expr in ast.statement_exprs(stmt):
            names.update(n.id for n in ast.free_names(expr))
    return names


class BuiltinGrammarSampler(CandidateGenerator):
    """Offline token-level generator with context-aware, non-uniform weights.

    It prefers fresh names for prior targets and unobserved response columns
    for likelihood targets. Distributions are weighted toward Normal and
    HalfNormal, and likelihood families are filtered to ones whose support
    covers the observed values. Expressions respect each parameter's domain
    and get shorter as they nest. Sometimes it writes a wrong argument name
    or arity, and the decoder repairs that by resampling the violating span.
    """

    mode = "token"

    def __init__(self, temperature: float = 0.3, slip_rate: float = 0.03, named_rate: float = 0.2):
        self.temperature = temperature
        self.slip_rate = slip_rate
        self.named_rate = named_rate

    def token_weights(self, ctx: TokenContext) -> Dict[str, float]:
        session = ctx.session
        top = ctx.state.top
        view = StatementView.of(ctx.statement_tokens)
        info = variable_info(session)
        if not view.tokens:
            return self._statement_start(session, info)
        if view.op is None:
            if view.tokens[-1].kind == "[":
                return self._rep_lengths(info)
            if view.tokens[-1].kind == "INT":
                return {"]": 1.0}
            return self._after_target(session, info, view)
        if view.op == "~" and view.dist is None:
            return self._distribution(session, info, view)
        if view.op == "~" and not view.frames:
            return {"(": 1.0, ";": 1.0}
        if top in _FIXED_TERMINALS:
            return {top: 1.0}
        return self._expression(session, info, view)

    # statement level

    def _statement_start(self, session, info) -> Dict[str, float]:
        if session.block == "prior":
            bound = set(info)
            fresh = [n for n in FRESH_NAMES if n not in bound][:6]
            names = {n: 0.5 ** i for i, n in enumerate(fresh)}
            n_stoch = sum(isinstance(s, ast.Stochastic) for s in session.prior_stmts)
            close = 0.0 if n_stoch == 0 else [0.25, 0.6, 1.0, 1.5][min(n_stoch - 1, 3)]
            return _merge(_normalize(names, 1.0), {"}": close})
        responses = set(response_columns(session))
        open_cols = [d.name for d in session.data_decls
                     if d.name not in session.table.observed and d.length is not None]
        weights = {c: (1.0 if c in responses else 0.03) for c in open_cols}
        pending = any(c in responses for c in open_cols)
        weights["}"] = 0.1 if pending else 5.0
        return weights

    def _rep_lengths(self, info) -> Dict[str, float]:
        lengths = sorted({v.shape[0] for v in info.values() if v.is_data and v.shape})
        return {str(n): 1.0 for n in lengths} or {"2": 1.0}

    def _after_target(self, session, info, view) -> Dict[str, float]:
        if session.block != "prior":
            return {"~": 1.0}
        has_vectors = any(v.is_data and v.shape for v in info.values())
        has_prior = any(not v.is_data for v in info.values())
        weights = {"~": 1.0, "[": 0.35 if has_vectors and view.rep is None else 0.0}
        weights["="] = 0.15 if has_prior else 0.0
        return weights

    def _distribution(self, session, info, view) -> Dict[str, float]:
        registry = session.registry
        if session.block == "prior":
            out = {}
            for name, spec in registry.items():
                if spec.continuous:
                    out[name] = 3.0 if name in ("Normal", "HalfNormal") else 1.0
            return out
        target = info.get(view.target)
        values = target.values if target is not None else None
        out = {}
        for name, spec in registry.items():
            if spec.support == "interval":
                continue
            if values is not None and not supports_values(spec, values):
                continue
            if not spec.continuous and not (target is not None and target.is_int):
                continue
            if name == "Binomial" and not self._trial_columns(info, view.target):
                continue
            if spec.support == SUPPORT_BINARY or name == "Binomial":
                out[name] = 3.0
            elif spec.support == SUPPORT_NONNEG_INT:
                out[name] = 2.0
            elif name == "Normal":
                out[name] = 3.0
            else:
                out[name] = 1.0
        return out or {"Normal": 1.0}

    @staticmethod
    def _trial_columns(info, target: Optional[str]) -> List[str]:
        t = info.get(target)
        if t is None or t.values is None:
            return []
        return [n for n, v in info.items()
                if v.is_data and v.is_int and n != target and v.values is not None
                and v.values.shape == t.values.shape and np.all(v.values >= t.values)]

    # expressions

    def _param(self, session, view) -> Tuple[Optional[str], str, bool]:
        """(parameter name, domain, name is wrong) for the current dist argument."""
        spec = session.registry.get(view.dist)
        if spec is None:
            return None, REAL, False
        index = view.frames[0].argpos
        if view.arg_name is not None and view.arg_name in spec.param_names:
            name = view.arg_name
            wrong = False
        else:
            wrong = view.arg_name is not None
            if index >= len(spec.params):
                return None, REAL, wrong
            name = spec.params[index].name
        domain = spec.param(name).domain
        if domain == ORDERED:
            domain = "ordered-lower" if spec.param_names.index(name) == 0 else "ordered-upper"
        return name, domain, wrong

    def _domain(self, session, view) -> Tuple[str, Optional[str]]:
        """Domain of the expression being written and the parameter it feeds."""
        param, domain = None, REAL
        if view.in_dist_args:
            param, domain, _ = self._param(session, view)
        for frame in view.frames[1:] if view.in_dist_args else view.frames:
            if frame.func == "pow":
                domain = POSITIVE if frame.argpos == 0 else REAL
            elif frame.func in _FUNC_DOMAIN:
                domain = _FUNC_DOMAIN[frame.func]
        return domain, param

    def _shape_ok(self, session, info, view) -> callable:
        exprs = [t.text for t in view.tokens[view.expr_start:] if t.kind == "IDENT"]
        if session.block != "prior":
            target = info.get(view.target)
            allowed = {(), target.shape} if target is not None else {()}
            return lambda v: v.shape in allowed
        if view.op == "~":
            allowed = {()} if view.rep is None else {(), (view.rep,)}
            return lambda v: v.shape in allowed
        fixed = {info[n].shape for n in exprs if n in info and info[n].shape}
        if fixed:
            shape = next(iter(fixed))
            return lambda v: v.shape in ((), shape)
        return lambda v: True

    def _expression(self, session, info, view) -> Dict[str, float]:
        last = view.tokens[-1].kind
        domain, param = self._domain(session, view)
        depth = view.depth
        expecting_operand = last in ("(", ",", "=", "+", "-", "*", "/")
        if view.in_dist_args and not view.depth and view.tokens[-1].kind in ("(", ",") and view.arg_name is None:
            return self._arg_start(session, info, view, domain)
        if view.in_dist_args and depth == 0 and len(view.tokens) == view.arg_start + 1 \
                and view.tokens[-1].kind == "IDENT" and (view.tokens[-1].text not in info or view.named):
            return {"=": 1.0}
        if expecting_operand:
            return self._operand(session, info, view, domain, depth)
        return self._continuation(session, view, domain, depth)

    def _arg_start(self, session, info, view, domain) -> Dict[str, float]:
        spec = session.registry.get(view.dist)
        if spec is None:
            return {")": 1.0}
        index = view.frames[0].argpos
        if view.tokens[-1].kind == "(" and not spec.params:
            return {")": 1.0}
        if index >= len(spec.params):
            return self._operand(session, info, view, REAL, 0)
        n_positional = index - len(view.named)
        remaining = [n for n in spec.param_names[n_positional:] if n not in view.named]
        if view.named:
            # after a named argument every later one must be named too
            name = remaining[0] if remaining else None
            return self._named(name) if name else {")": 1.0}
        operand = self._operand(session, info, view, domain, 0)
        name = spec.param_names[index]
        if name in info:
            return operand
        return _merge(_normalize(operand, 1.0 - self.named_rate), _normalize(self._named(name), self.named_rate))

    def _named(self, name: str) -> Dict[str, float]:
        weights = {name: 1.0 - self.slip_rate * 5}
        for alias in WRONG_ALIASES:
            if alias != name:
                weights[alias] = self.slip_rate
        return weights

    def _operand(self, session, info, view, domain, depth) -> Dict[str, float]:
        block = session.block
        shape_ok = self._shape_ok(session, info, view)
        in_prior_dist = block == "prior" and view.op == "~"
        compatible = {
            REAL: (REAL, POSITIVE, UNIT, NONNEG_INT),
            "ordered-lower": (),
            "ordered-upper": (),
            POSITIVE: (POSITIVE, UNIT),
            UNIT: (UNIT,),
            NONNEG_INT: (NONNEG_INT,),
        }[domain]
        used = _referenced_names(session)
        current = {t.text for t in view.tokens[view.expr_start:] if t.kind == "IDENT"}
        prior_vars, data_vars = {}, {}
        for name, v in info.items():
            if name == view.target and session.block != "prior":
                continue
            if v.sign not in compatible or not shape_ok(v):
                continue
            if domain == POSITIVE and v.values is not None and np.any(v.values <= 0):
                continue
            if v.is_data:
                if in_prior_dist:
                    continue
                if domain == NONNEG_INT and view.dist == "Binomial":
                    if name not in self._trial_columns(info, view.target):
                        continue
                data_vars[name] = 1.0
            else:
                # vectors carry the structure of hierarchical models; unused
                # parameters are preferred so the program stays connected
                w = 2.0 if v.shape else 1.0
                if name not in used:
                    w *= 3.0
                if name in current:
                    w *= 0.2
                prior_vars[name] = w
        literals = dict(LITERALS.get(domain, {"1": 1.0}))
        if domain == NONNEG_INT:
            literals = {} if data_vars else literals
        if in_prior_dist:
            w_lit, w_prior, w_data = 3.0, 1.0, 0.0
        elif block == "prior":
            w_lit, w_prior, w_data = 0.4, 3.0, 1.0
        else:
            w_lit = 0.5 if domain == POSITIVE else 0.2
            w_prior, w_data = 3.0, (2.0 if domain == POSITIVE else 0.7)
            if domain == NONNEG_INT:
                w_data = 5.0
        if depth > 0 or view.tokens[-1].kind in ("+", "-", "*", "/"):
            w_data *= 1.5 if not in_prior_dist else 0.0
        decay = 0.3 ** depth
        calls = {}
        if domain == POSITIVE:
            calls = {"exp": 0.4 if not in_prior_dist else 0.0, "sqrt": 0.03}
        elif domain == UNIT:
            calls = {"invlogit": 1.0 if not in_prior_dist else 0.0}
        elif domain == REAL:
            calls = {"(": 0.05, "-": 0.05, "log": 0.02, "exp": 0.02, "pow": 0.01}
        calls = {k: v * decay for k, v in calls.items()}
        return _merge(
            _normalize(literals, w_lit),
            _normalize(prior_vars, w_prior),
            _normalize(data_vars, w_data),
            calls,
        )

    def _continuation(self, session, view, domain, depth) -> Dict[str, float]:
        current = view.current_expression()
        n_operands = 1 + sum(t.kind in ("+", "-", "*", "/") for t in current)
        if view.op == "=":
            base = 0.8
        elif session.block == "prior":
            base = 0.03
        else:
            base = 0.35
        if depth > 0 and domain == REAL:
            base = 0.6
        base *= 0.5 ** (n_operands - 1) * 0.7 ** depth
        ops = {k: v * base for k, v in OPERATORS.get(domain, {}).items()}
        if depth > 0:
            end = {")": 1.0, ",": 1.0}
        elif view.in_dist_args:
            end = self._arity_end(session, view)
        else:
            end = {";": 1.0}
        return _merge(ops, end)

    def _arity_end(self, session, view) -> Dict[str, float]:
        spec = session.registry.get(view.dist)
        n_args = view.frames[0].argpos + 1
        arity = len(spec.params) if spec is not None else n_args
        slip = self.slip_rate
        if n_args < arity:
            return {",": 1.0, ")": slip}
        return {")": 1.0, ",": slip}


_FIXED_TERMINALS = {"(", ")", "[", "]", "~", "=", ";", ",", "{", "}"}


# --- fragment generators --------------------------------------------------------

HOSTILE_STATEMENT = "mu ~ ExtNormal(0);"


class MockGenerator(FragmentGenerator):
    """Returns scripted fragments in order.

    Once the script is used up it keeps returning ``fallback``. The default
    script is empty and the fallback names an unregistered distribution, so
    with no configuration every proposal fails validation.
    """

    def __init__(self, script: Sequence[str] = (), fallback: str = HOSTILE_STATEMENT):
        self.script = list(script)
        self.fallback = fallback
        self.calls: List[FragmentContext] = []

    def propose_fragment(self, ctx: FragmentContext) -> str:
        self.calls.append(ctx)
        index = len(self.calls) - 1
        return self.script[index] if index < len(self.script) else self.fallback

    @classmethod
    def from_file(cls, path: str) -> "MockGenerator":
        """Script file: a JSON list of strings, or one fragment per non-empty line."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            script = json.loads(text)
        except json.JSONDecodeError:
            script = [line for line in text.splitlines() if line.strip()]
        if not isinstance(script, list) or not all(isinstance(s, str) for s in script):
            raise ValueError("mock script must be a JSON list of strings")
        return cls(script)


class GeneratorError(RuntimeError):
    pass


_FENCE = re.compile(r"```[a-zA-Z]*\n?(.*?)```", re.DOTALL)


def clean_completion(text: str) -> str:
    """Strip code fences and a leading ``prior {`` or ``likelihood {`` opener."""
    m = _FENCE.search(text)
    if m:
        text = m.group(1)
    text = re.sub(r"^\s*(prior|likelihood)\s*\{", "", text.strip())
    return text.strip()


class HttpGenerator(FragmentGenerator):
    """Fragment generator backed by an OpenAI-compatible chat completions endpoint."""

    def __init__(
        self,
        endpoint: str,
        api_key: Optional[str] = None,
        model: str = "default",
        temperature: float = 0.3,
        timeout: float = 60.0,
        max_tokens: int = 128,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.max_tokens = max_tokens

    @classmethod
    def from_env(cls, endpoint: str, api_key_env: Optional[str], **kwargs) -> "HttpGenerator":
        key = os.environ.get(api_key_env) if api_key_env else None
        if api_key_env and not key:
            raise GeneratorError(f"environment variable {api_key_env} is not set")
        return cls(endpoint, key, **kwargs)

    def _messages(self, ctx: FragmentContext) -> List[dict]:
        user = ctx.prompt + FRAGMENT_INSTRUCTIONS.format(block=ctx.block)
        if ctx.prefix:
            user += PREFIX_INSTRUCTIONS.format(prefix=ctx.prefix)
        return [{"role": "user", "content": user}]

    def propose_fragment(self, ctx: FragmentContext) -> str:
        body = {
            "model": self.model,
            "messages": self._messages(ctx),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stop": ["}"],  # an empty completion closes the block
            "seed": int(ctx.rng.integers(2**31 - 1)),
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(
            self.endpoint, data=json.dumps(body).encode("utf-8"), headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise GeneratorError(f"request to {self.endpoint} failed: {exc}") from exc
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GeneratorError("unexpected response shape from the endpoint") from exc
        return clean_completion(content or "")
