"""Static typing rules: shapes (scalar or vector[n]) and integrality.

Shared by the semantic checker and by ``bind`` so both reject exactly the
same programs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

from . import ast
from .distributions import NONNEG_INT, REGISTRY, DistributionSpec, in_domain

Shape = Tuple[int, ...]


@dataclass(frozen=True)
class VarType:
    shape: Shape = ()
    is_int: bool = False

    @property
    def size(self) -> int:
        return self.shape[0] if self.shape else 1


REAL_SCALAR = VarType((), False)


class ShapeError(ValueError):
    def __init__(self, message: str, span=ast.NO_SPAN):
        super().__init__(message)
        self.span = span


class ArgumentError(ValueError):
    def __init__(self, message: str, span=ast.NO_SPAN):
        super().__init__(message)
        self.span = span


def broadcast(a: Shape, b: Shape, span=ast.NO_SPAN) -> Shape:
    if a == b or not b:
        return a
    if not a:
        return b
    raise ShapeError(f"cannot broadcast vector[{a[0]}] with vector[{b[0]}]", span)


def infer_type(expr: ast.Expr, env: Mapping[str, VarType]) -> VarType:
    """Type of ``expr``; unknown names raise ShapeError carrying their span."""
    if isinstance(expr, ast.Num):
        return VarType((), isinstance(expr.value, int))
    if isinstance(expr, ast.Name):
        if expr.id not in env:
            raise ShapeError(f"undefined identifier {expr.id!r}", expr.span)
        return env[expr.id]
    if isinstance(expr, ast.Neg):
        return infer_type(expr.operand, env)
    if isinstance(expr, ast.BinOp):
        lt = infer_type(expr.left, env)
        rt = infer_type(expr.right, env)
        shape = broadcast(lt.shape, rt.shape, expr.span)
        return VarType(shape, lt.is_int and rt.is_int and expr.op != "/")
    if isinstance(expr, ast.Call):
        shape: Shape = ()
        for a in expr.args:
            shape = broadcast(shape, infer_type(a, env).shape, expr.span)
        return VarType(shape, False)
    raise TypeError(f"not an expression: {expr!r}")


def constant_value(expr: ast.Expr) -> Optional[float]:
    """Value of a literal, possibly negated; None for anything else."""
    if isinstance(expr, ast.Num):
        return float(expr.value)
    if isinstance(expr, ast.Neg):
        inner = constant_value(expr.operand)
        return None if inner is None else -inner
    return None


def match_arguments(call: ast.DistCall, spec: DistributionSpec) -> List[ast.Expr]:
    """Order the call's arguments by the distribution's parameter list.

    Positional arguments fill parameters left to right; named ones must use
    a declared parameter name, may not repeat, and may not be followed by
    positional ones. Every parameter must end up bound.
    """
    names = spec.param_names
    bound: Dict[str, ast.Expr] = {}
    seen_named = False
    for i, arg in enumerate(call.args):
        if arg.name is None:
            if seen_named:
                raise ArgumentError("positional argument after a named one", arg.span)
            if i >= len(names):
                raise ArgumentError(
                    f"{spec.name} takes {len(names)} argument(s), got {len(call.args)}", arg.span
                )
            bound[names[i]] = arg.value
            continue
        seen_named = True
        if arg.name not in names:
            raise ArgumentError(
                f"{spec.name} has no parameter {arg.name!r} (expected one of {', '.join(names)})",
                arg.name_span,
            )
        if arg.name in bound:
            raise ArgumentError(f"parameter {arg.name!r} given twice", arg.name_span)
        bound[arg.name] = arg.value
    missing = [n for n in names if n not in bound]
    if missing:
        raise ArgumentError(f"{spec.name} is missing {', '.join(missing)}", call.close_span)
    return [bound[n] for n in names]


def check_literal_domains(call: ast.DistCall, spec: DistributionSpec, ordered: List[ast.Expr]) -> None:
    """Static domain checks on literal arguments (e.g. a literal sigma must be > 0)."""
    values = [constant_value(e) for e in ordered]
    for p, expr, v in zip(spec.params, ordered, values):
        if v is not None and not in_domain(v, p.domain):
            raise ArgumentError(f"{spec.name}: {p.name}={v:g} is outside its {p.domain} domain", expr.span)
    if spec.name == "Uniform" and None not in values and not values[0] < values[1]:
        raise ArgumentError("Uniform: lower must be below upper", ordered[1].span)


def lookup(name: str, registry=None) -> Optional[DistributionSpec]:
    return (registry or REGISTRY).get(name)


def stochastic_type(
    stmt: ast.Stochastic,
    spec: DistributionSpec,
    ordered: List[ast.Expr],
    env: Mapping[str, VarType],
    target_type: Optional[VarType] = None,
) -> VarType:
    """Type the statement binds (prior) or check it against the data (likelihood)."""
    shape: Shape = ()
    for p, expr in zip(spec.params, ordered):
        t = infer_type(expr, env)
        if p.domain == NONNEG_INT and not t.is_int:
            raise ArgumentError(f"{spec.name}: {p.name} must be an integer expression", expr.span)
        shape = broadcast(shape, t.shape, expr.span)
    if target_type is not None:
        if shape and shape != target_type.shape:
            raise ShapeError(
                f"arguments of shape vector[{shape[0]}] do not fit target {stmt.target!r}",
                stmt.dist.span,
            )
        if not spec.continuous and not target_type.is_int:
            raise ShapeError(f"{spec.name} needs integer data but {stmt.target!r} is real", stmt.target_span)
        return target_type
    if stmt.rep is not None:
        if stmt.rep < 1:
            raise ShapeError("replication count must be at least 1", stmt.rep_span)
        if shape and shape != (stmt.rep,):
            raise ShapeError(
                f"arguments of shape vector[{shape[0]}] do not fit replication [{stmt.rep}]",
                stmt.rep_span,
            )
        shape = (stmt.rep,)
    return VarType(shape, False)
