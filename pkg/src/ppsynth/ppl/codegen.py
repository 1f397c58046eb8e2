"""Source-to-source reverse-mode differentiation of a bound model.

Shapes are static (scalar or one fixed vector length), so the compiler can
emit one straight-line forward pass and one straight-line adjoint pass as a
plain Python function over numpy values. Broadcasting a scalar against a
vector is undone in the adjoint pass with a sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import expit

from . import ast
from .model import FUNCS, INTERVAL, LOG, LOGIT

_BINOPS = {"+": "add", "-": "sub", "*": "mul", "/": "div"}


@dataclass(frozen=True)
class _Val:
    name: str  # python expression naming the value
    shape: Tuple[int, ...]
    active: bool  # depends on theta


def _bshape(*vals: _Val) -> Tuple[int, ...]:
    for v in vals:
        if v.shape:
            return v.shape
    return ()


class _Compiler:
    def __init__(self, model):
        self.model = model
        self.fwd: List[str] = []
        self.ops: List[tuple] = []
        self.terms: List[_Val] = []
        self.ns: Dict[str, object] = {"np": np, "expit": expit, "_inf": np.inf}
        self.count = 0
        self.slot_names: Dict[int, str] = {}

    def fresh(self, prefix="v") -> str:
        self.count += 1
        return f"{prefix}{self.count}"

    def emit(self, op: str, inputs, code: str, shape, extra=None) -> _Val:
        active = any(v.active for v in inputs)
        out = _Val(self.fresh(), shape, active)
        self.fwd.append(f"{out.name} = {code}")
        if active:
            self.ops.append((op, out, tuple(inputs), extra))
        return out

    # -- forward -------------------------------------------------------------

    def expr(self, e: ast.Expr, env: Dict[str, _Val]) -> _Val:
        if isinstance(e, ast.Num):
            # numpy scalars, so constant arithmetic like 1 / 0 gives inf instead of raising
            key = f"c{self.count}"
            self.count += 1
            self.ns[key] = np.float64(e.value)
            return _Val(key, (), False)
        if isinstance(e, ast.Name):
            return env[e.id]
        if isinstance(e, ast.Neg):
            a = self.expr(e.operand, env)
            return self.emit("neg", [a], f"-{a.name}", a.shape)
        if isinstance(e, ast.BinOp):
            a = self.expr(e.left, env)
            b = self.expr(e.right, env)
            return self.emit(_BINOPS[e.op], [a, b], f"{a.name} {e.op} {b.name}", _bshape(a, b))
        if isinstance(e, ast.Call):
            args = [self.expr(x, env) for x in e.args]
            fname = f"f_{e.func}"
            self.ns[fname] = FUNCS[e.func]
            code = f"{fname}({', '.join(a.name for a in args)})"
            return self.emit(e.func, args, code, _bshape(*args))
        raise TypeError(e)

    def log_sig_pair(self, u: _Val) -> _Val:
        code = f"-(np.logaddexp(0.0, {u.name}) + np.logaddexp(0.0, -{u.name}))"
        return self.emit("logsig2", [u], code, u.shape)

    def add_term(self, v: _Val):
        if v.shape:
            v = self.emit("sum", [v], f"{v.name}.sum()", ())
        self.terms.append(v)

    def dist_term(self, spec, x: _Val, params: List[_Val]):
        fname = f"d_{spec.name}"
        self.ns[fname] = spec.logp
        inputs = [x] + params
        shape = _bshape(*inputs)
        lp = self.fresh("t")
        parts = self.fresh("P")
        self.fwd.append(f"{lp}, {parts} = {fname}({', '.join(v.name for v in inputs)})")
        total = _Val(self.fresh(), (), any(v.active for v in inputs))
        self.fwd.append(f"{total.name} = {lp}.sum()")
        if total.active:
            self.ops.append(("dist", total, tuple(inputs), (parts, shape)))
        self.terms.append(total)

    def compile(self):
        model = self.model
        env: Dict[str, _Val] = {}
        for name, arr in model.data.items():
            key = f"D_{name}"
            self.ns[key] = np.float64(arr) if arr.ndim == 0 else arr
            env[name] = _Val(key, arr.shape, False)
        slots = {s.stmt_index: s for s in model.layout}
        for i, stmt in enumerate(model.program.prior_stmts):
            if isinstance(stmt, ast.Deterministic):
                env[stmt.target] = self.expr(stmt.expr, env)
                continue
            res = model._resolved[i]
            params = [self.expr(a, env) for a in res.args]
            slot = slots[i]
            index = f"theta[{slot.offset}]" if not slot.shape else f"theta[{slot.offset}:{slot.stop}]"
            u = _Val(self.fresh("u"), slot.shape, True)
            self.fwd.append(f"{u.name} = {index}")
            self.slot_names[slot.offset] = u.name
            if slot.transform == LOG:
                x = self.emit("exp", [u], f"np.exp({u.name})", u.shape)
                self.add_term(u)
            elif slot.transform == LOGIT:
                x = self.emit("invlogit", [u], f"expit({u.name})", u.shape)
                self.add_term(self.log_sig_pair(u))
            elif slot.transform == INTERVAL:
                lower, upper = params
                width = self.emit("sub", [upper, lower], f"{upper.name} - {lower.name}", _bshape(upper, lower))
                s = self.emit("invlogit", [u], f"expit({u.name})", u.shape)
                scaled = self.emit("mul", [width, s], f"{width.name} * {s.name}", u.shape)
                x = self.emit("add", [lower, scaled], f"{lower.name} + {scaled.name}", u.shape)
                logw = self.emit("log", [width], f"np.log({width.name})", width.shape)
                jac = self.log_sig_pair(u)
                jac = self.emit("add", [logw, jac], f"{logw.name} + {jac.name}", u.shape)
                self.add_term(jac)
            else:
                x = u
            self.dist_term(res.spec, x, params)
            env[stmt.target] = x
        for obs in model.observations:
            res = model._resolved[-1 - obs.stmt_index]
            params = [self.expr(a, env) for a in res.args]
            self.dist_term(res.spec, env[obs.target], params)
        return self.source()

    # -- adjoint -------------------------------------------------------------

    def source(self) -> str:
        dim = self.model.dim
        terms = " + ".join(t.name for t in self.terms) or "0.0"
        lines = ["def logp_grad(theta):", "    with np.errstate(all='ignore'):"]
        body = list(self.fwd)
        body.append(f"lp = float({terms})")
        body.append("if not (-_inf < lp < _inf):")
        body.append(f"    return -_inf, np.zeros({dim})")
        adj: Dict[str, str] = {}

        def acc(target: _Val, expr: str, shape):
            if not target.active:
                return
            if target.shape == () and shape != ():
                expr = f"np.sum({expr})"
            elif target.shape != () and shape == ():
                expr = f"np.full({target.shape[0]}, {expr})"
            g = adj.get(target.name)
            if g is None:
                g = f"g_{target.name}"
                adj[target.name] = g
                body.append(f"{g} = {expr}")
            else:
                body.append(f"{g} = {g} + {expr}")

        for t in self.terms:
            if t.active:
                acc(t, "1.0", ())
        for op, out, ins, extra in reversed(self.ops):
            g = adj.get(out.name)
            if g is None:
                continue
            shape = out.shape
            if op == "dist":
                parts, bshape = extra
                for j, v in enumerate(ins):
                    acc(v, f"{g} * {parts}[{j}]", bshape)
                continue
            a = ins[0]
            if op == "add":
                acc(a, g, shape)
                acc(ins[1], g, shape)
            elif op == "sub":
                acc(a, g, shape)
                acc(ins[1], f"-{g}", shape)
            elif op == "mul":
                acc(a, f"{g} * {ins[1].name}", shape)
                acc(ins[1], f"{g} * {a.name}", shape)
            elif op == "div":
                acc(a, f"{g} / {ins[1].name}", shape)
                acc(ins[1], f"-{g} * {out.name} / {ins[1].name}", shape)
            elif op == "neg":
                acc(a, f"-{g}", shape)
            elif op == "exp":
                acc(a, f"{g} * {out.name}", shape)
            elif op == "log":
                acc(a, f"{g} / {a.name}", shape)
            elif op == "sqrt":
                acc(a, f"{g} * 0.5 / {out.name}", shape)
            elif op == "logit":
                acc(a, f"{g} / ({a.name} * (1.0 - {a.name}))", shape)
            elif op == "invlogit":
                acc(a, f"{g} * {out.name} * (1.0 - {out.name})", shape)
            elif op == "pow":
                b = ins[1]
                acc(a, f"{g} * {b.name} * f_pow({a.name}, {b.name} - 1.0)", shape)
                acc(b, f"{g} * {out.name} * np.log({a.name})", shape)
            elif op == "logsig2":
                acc(a, f"{g} * (1.0 - 2.0 * expit({a.name}))", shape)
            elif op == "sum":
                acc(a, g, ())
            else:
                raise AssertionError(op)

        body.append(f"G = np.zeros({dim})")
        for slot in self.model.layout:
            u = self.slot_names[slot.offset]
            g = adj.get(u)
            if g is None:
                continue
            index = f"G[{slot.offset}]" if not slot.shape else f"G[{slot.offset}:{slot.stop}]"
            body.append(f"{index} = {g}")
        body.append("if not np.all(np.isfinite(G)):")
        body.append(f"    return -_inf, np.zeros({dim})")
        body.append("return lp, G")
        lines.extend("        " + line for line in body)
        return "\n".join(lines) + "\n"


def compile_logp_grad(model):
    """Generate, compile and return ``(logp_grad, source_text)`` for ``model``."""
    comp = _Compiler(model)
    source = comp.compile()
    ns = dict(comp.ns)
    exec(compile(source, "<logp_grad>", "exec"), ns)
    return ns["logp_grad"], source
