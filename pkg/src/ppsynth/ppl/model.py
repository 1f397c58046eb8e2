"""Binding a program to data, plus the reference interpreter.

``bind`` checks a program against a dataset and returns a ``BoundModel``.
The model's ``logp_grad`` is generated code (see ``codegen``); everything
else here (``evaluate``, ``pointwise_loglik``, the transforms) walks the AST
directly with numpy, which also gives an independent check on the generated
gradient function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import expit, logit

from . import ast
from .distributions import (
    REGISTRY,
    SUPPORT_INTERVAL,
    SUPPORT_POSITIVE,
    SUPPORT_UNIT,
    DistributionSpec,
)
from .shapes import (
    ArgumentError,
    ShapeError,
    VarType,
    check_literal_domains,
    infer_type,
    match_arguments,
    stochastic_type,
)

IDENTITY = "identity"
LOG = "log"
LOGIT = "logit"
INTERVAL = "interval"

FUNCS: Dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "logit": logit,
    "invlogit": expit,
    "pow": np.power,
}


@dataclass
class Dataset:
    """Named numeric columns. Integer columns keep an integer dtype."""

    name: str
    columns: Dict[str, np.ndarray]
    description: str = ""

    def __post_init__(self):
        cols = {}
        for key, values in self.columns.items():
            arr = np.asarray(values)
            if arr.dtype.kind not in "iuf":
                raise ValueError(f"column {key!r} is not numeric")
            cols[key] = arr
        self.columns = cols

    def is_int(self, column: str) -> bool:
        return self.columns[column].dtype.kind in "iu"

    def __contains__(self, column: str) -> bool:
        return column in self.columns


class BindError(ValueError):
    """Static failure while binding; ``kind`` names the failure class."""

    def __init__(self, kind: str, message: str, span=ast.NO_SPAN):
        super().__init__(message)
        self.kind = kind
        self.span = span


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class ParamSlot:
    """Where one prior variable lives in the flat parameter vector."""

    name: str
    shape: Tuple[int, ...]
    offset: int
    transform: str
    stmt_index: int

    @property
    def size(self) -> int:
        return self.shape[0] if self.shape else 1

    @property
    def stop(self) -> int:
        return self.offset + self.size

    def labels(self) -> List[str]:
        if not self.shape:
            return [self.name]
        return [f"{self.name}[{i}]" for i in range(self.shape[0])]


@dataclass(frozen=True)
class ObsSlot:
    target: str
    start: int
    stop: int
    stmt_index: int


def _transform_for(spec: DistributionSpec) -> str:
    if spec.support == SUPPORT_POSITIVE:
        return LOG
    if spec.support == SUPPORT_UNIT:
        return LOGIT
    if spec.support == SUPPORT_INTERVAL:
        return INTERVAL
    return IDENTITY


@dataclass(frozen=True)
class _Resolved:
    spec: DistributionSpec
    args: Tuple[ast.Expr, ...]


def _log_sig_pair(u):
    # log(s) + log(1 - s) with s = invlogit(u), stable for large |u|
    return -(np.logaddexp(0.0, u) + np.logaddexp(0.0, -u))


@dataclass(frozen=True)
class Evaluation:
    values: Dict[str, np.ndarray]
    prior_terms: Tuple[float, ...]
    log_jacobian: float
    pointwise: np.ndarray

    @property
    def logp(self) -> float:
        total = float(np.sum(self.prior_terms)) + float(np.sum(self.pointwise)) + self.log_jacobian
        return total if np.isfinite(total) else -np.inf


@dataclass(eq=False)
class BoundModel:
    program: ast.ModelProgram
    dataset: Dataset
    data: Dict[str, np.ndarray]
    layout: Tuple[ParamSlot, ...]
    observations: Tuple[ObsSlot, ...]
    types: Dict[str, VarType]
    _resolved: Dict[int, _Resolved] = field(repr=False, default_factory=dict)
    _logp_grad: Optional[Callable] = field(repr=False, default=None)
    source: str = field(repr=False, default="")

    @property
    def dim(self) -> int:
        return self.layout[-1].stop if self.layout else 0

    @property
    def n_obs(self) -> int:
        return self.observations[-1].stop if self.observations else 0

    def param_labels(self) -> List[str]:
        return [lab for slot in self.layout for lab in slot.labels()]

    # -- log density -------------------------------------------------------

    def logp_grad(self, theta) -> Tuple[float, np.ndarray]:
        """Joint log density (with log-Jacobian) and its gradient at ``theta``.

        Non-finite densities come back as ``(-inf, zeros)``.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected a parameter vector of length {self.dim}, got shape {theta.shape}")
        return self._logp_grad(theta)

    def logp(self, theta) -> float:
        return self.logp_grad(theta)[0]

    # -- interpreter ---------------------------------------------------------

    def _eval(self, expr: ast.Expr, env: Mapping[str, np.ndarray]):
        if isinstance(expr, ast.Num):
            return np.float64(expr.value)
        if isinstance(expr, ast.Name):
            return env[expr.id]
        if isinstance(expr, ast.Neg):
            return -self._eval(expr.operand, env)
        if isinstance(expr, ast.BinOp):
            a = self._eval(expr.left, env)
            b = self._eval(expr.right, env)
            if expr.op == "+":
                return a + b
            if expr.op == "-":
                return a - b
            if expr.op == "*":
                return a * b
            return a / b
        if isinstance(expr, ast.Call):
            return FUNCS[expr.func](*[self._eval(a, env) for a in expr.args])
        raise TypeError(expr)

    def _walk_prior(self, visit):
        """Run the prior block, delegating each stochastic variable to ``visit``."""
        env: Dict[str, np.ndarray] = dict(self.data)
        slots = {s.stmt_index: s for s in self.layout}
        for i, stmt in enumerate(self.program.prior_stmts):
            if isinstance(stmt, ast.Deterministic):
                env[stmt.target] = self._eval(stmt.expr, env)
                continue
            res = self._resolved[i]
            params = [self._eval(a, env) for a in res.args]
            env[stmt.target] = visit(slots[i], res, params)
        return env

    def _bounds(self, params):
        lower, upper = params
        return lower, upper

    def evaluate(self, theta) -> Evaluation:
        """Evaluate every term of the joint density separately."""
        theta = np.asarray(theta, dtype=float)
        prior_terms: List[float] = []
        jac = [0.0]

        def visit(slot: ParamSlot, res: _Resolved, params):
            u = theta[slot.offset] if not slot.shape else theta[slot.offset:slot.stop]
            if slot.transform == LOG:
                x = np.exp(u)
                jac[0] += float(np.sum(u))
            elif slot.transform == LOGIT:
                x = expit(u)
                jac[0] += float(np.sum(_log_sig_pair(u)))
            elif slot.transform == INTERVAL:
                lower, upper = self._bounds(params)
                width = upper - lower
                x = lower + width * expit(u)
                jac[0] += float(np.sum(np.log(width) + _log_sig_pair(u)))
            else:
                x = u
            lp, _ = res.spec.logp(x, *params)
            prior_terms.append(float(np.sum(lp)))
            return x

        with np.errstate(all="ignore"):
            env = self._walk_prior(visit)
            pointwise = np.empty(self.n_obs)
            for obs in self.observations:
                res = self._resolved[-1 - obs.stmt_index]
                params = [self._eval(a, env) for a in res.args]
                lp, _ = res.spec.logp(self.data[obs.target], *params)
                pointwise[obs.start:obs.stop] = np.broadcast_to(lp, (obs.stop - obs.start,))
        return Evaluation(env, tuple(prior_terms), jac[0], pointwise)

    def pointwise_loglik(self, theta) -> np.ndarray:
        """log p(y_i | constrained(theta)) for every observation i."""
        return self.evaluate(theta).pointwise

    # -- transforms ------------------------------------------------------------

    def constrain(self, theta) -> np.ndarray:
        """Map an unconstrained vector to constrained values in layout order."""
        ev = self.evaluate(theta)
        return self.flatten(ev.values)

    def flatten(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        out = np.empty(self.dim)
        for slot in self.layout:
            out[slot.offset:slot.stop] = np.ravel(values[slot.name])
        return out

    def unconstrain(self, values) -> np.ndarray:
        """Inverse of ``constrain``; raises TransformError outside the support."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} constrained values, got shape {values.shape}")
        theta = np.empty(self.dim)

        def visit(slot: ParamSlot, res: _Resolved, params):
            x = values[slot.offset] if not slot.shape else values[slot.offset:slot.stop]
            if not np.all(np.isfinite(x)):
                raise TransformError(f"{slot.name}: non-finite value")
            if slot.transform == LOG:
                if not np.all(x > 0):
                    raise TransformError(f"{slot.name}: value must be positive")
                u = np.log(x)
            elif slot.transform == LOGIT:
                if not np.all((x > 0) & (x < 1)):
                    raise TransformError(f"{slot.name}: value must lie in (0, 1)")
                u = logit(x)
            elif slot.transform == INTERVAL:
                lower, upper = self._bounds(params)
                if not np.all((x > lower) & (x < upper)):
                    raise TransformError(f"{slot.name}: value must lie strictly between its bounds")
                u = logit((x - lower) / (upper - lower))
            else:
                u = x
            theta[slot.offset:slot.stop] = np.ravel(u)
            return x

        with np.errstate(all="ignore"):
            self._walk_prior(visit)
        return theta

    def transform(self, values, direction: str) -> np.ndarray:
        if direction == "to-unconstrained":
            return self.unconstrain(values)
        if direction == "to-constrained":
            return self.constrain(values)
        raise ValueError(f"unknown direction {direction!r}")


def _data_type(decl: ast.DataDecl) -> VarType:
    return VarType(decl.shape, decl.is_int)


def _bind_data(program: ast.ModelProgram, dataset: Dataset) -> Dict[str, np.ndarray]:
    data: Dict[str, np.ndarray] = {}
    for decl in program.data_decls:
        if decl.name in data:
            raise BindError("duplicate-declaration", f"data {decl.name!r} declared twice", decl.span)
        if decl.name not in dataset:
            raise BindError("missing-column", f"dataset {dataset.name!r} has no column {decl.name!r}", decl.span)
        arr = np.asarray(dataset.columns[decl.name], dtype=float)
        if decl.length is None:
            if arr.size != 1:
                raise BindError(
                    "length-mismatch", f"{decl.name!r} is declared scalar but has {arr.size} values", decl.span
                )
            arr = arr.reshape(())
        elif arr.ndim != 1 or arr.shape[0] != decl.length:
            raise BindError(
                "length-mismatch",
                f"{decl.name!r} is declared with length {decl.length} but has {arr.size} values",
                decl.span,
            )
        if decl.is_int and not np.all(np.floor(arr) == arr):
            raise BindError("type", f"{decl.name!r} is declared integer but has fractional values", decl.span)
        data[decl.name] = arr
    return data


def _resolve(stmt: ast.Stochastic, registry, env) -> Tuple[_Resolved, VarType]:
    spec = registry.get(stmt.dist.name)
    if spec is None:
        raise BindError("unknown-distribution", f"unknown distribution {stmt.dist.name!r}", stmt.dist.name_span)
    args = match_arguments(stmt.dist, spec)
    check_literal_domains(stmt.dist, spec, args)
    return _Resolved(spec, tuple(args)), spec


def bind(program: ast.ModelProgram, dataset: Dataset, registry=None) -> BoundModel:
    """Resolve data, type-check every statement and compile the log density."""
    from .codegen import compile_logp_grad

    registry = registry or REGISTRY
    data = _bind_data(program, dataset)
    env: Dict[str, VarType] = {d.name: _data_type(d) for d in program.data_decls}
    resolved: Dict[int, _Resolved] = {}
    layout: List[ParamSlot] = []
    offset = 0
    try:
        for i, stmt in enumerate(program.prior_stmts):
            if stmt.target in env:
                raise BindError("scope", f"{stmt.target!r} is already defined", stmt.target_span)
            if isinstance(stmt, ast.Deterministic):
                env[stmt.target] = infer_type(stmt.expr, env)
                continue
            res, spec = _resolve(stmt, registry, env)
            if not spec.continuous:
                raise BindError(
                    "discrete-prior",
                    f"{spec.name} is discrete; priors must be continuous for gradient-based inference",
                    stmt.dist.name_span,
                )
            vtype = stochastic_type(stmt, spec, list(res.args), env)
            resolved[i] = res
            slot = ParamSlot(stmt.target, vtype.shape, offset, _transform_for(spec), i)
            layout.append(slot)
            offset = slot.stop
            env[stmt.target] = vtype
        if not program.likelihood_stmts:
            raise BindError("empty-likelihood", "the likelihood block is empty")
        observations: List[ObsSlot] = []
        start = 0
        data_types = {d.name: _data_type(d) for d in program.data_decls}
        for j, stmt in enumerate(program.likelihood_stmts):
            if stmt.target not in data_types:
                raise BindError("scope", f"likelihood target {stmt.target!r} is not a data column", stmt.target_span)
            if any(o.target == stmt.target for o in observations):
                raise BindError("scope", f"{stmt.target!r} is observed twice", stmt.target_span)
            res, spec = _resolve(stmt, registry, env)
            stochastic_type(stmt, spec, list(res.args), env, data_types[stmt.target])
            resolved[-1 - j] = res
            size = data_types[stmt.target].size
            observations.append(ObsSlot(stmt.target, start, start + size, j))
            start += size
    except (ShapeError, ArgumentError) as exc:
        kind = "shape" if isinstance(exc, ShapeError) else "argument"
        raise BindError(kind, str(exc), exc.span) from exc
    model = BoundModel(program, dataset, data, tuple(layout), tuple(observations), env, resolved)
    model._logp_grad, model.source = compile_logp_grad(model)
    return model
