"""Canonical text rendering of programs."""

from __future__ import annotations

from ..ppl import ast

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def render_number(value) -> str:
    if isinstance(value, bool):
        raise TypeError("boolean literal")
    if isinstance(value, int):
        return str(value)
    text = repr(float(value))
    if text in ("inf", "-inf", "nan"):
        raise ValueError(f"non-finite literal {value}")
    return text


def render_expr(expr: ast.Expr, prec: int = 0) -> str:
    if isinstance(expr, ast.Num):
        return render_number(expr.value)
    if isinstance(expr, ast.Name):
        return expr.id
    if isinstance(expr, ast.Neg):
        text = "-" + render_expr(expr.operand, 3)
        return f"({text})" if prec > 3 else text
    if isinstance(expr, ast.Call):
        return f"{expr.func}({', '.join(render_expr(a) for a in expr.args)})"
    if isinstance(expr, ast.BinOp):
        p = _PREC[expr.op]
        # left-associative: the right operand needs parentheses at equal precedence
        text = f"{render_expr(expr.left, p)} {expr.op} {render_expr(expr.right, p + 1)}"
        return f"({text})" if p < prec else text
    raise TypeError(f"not an expression: {expr!r}")


def render_dist(dist: ast.DistCall) -> str:
    args = []
    for a in dist.args:
        value = render_expr(a.value)
        args.append(f"{a.name}={value}" if a.name else value)
    return f"{dist.name}({', '.join(args)})"


def render_statement(stmt: ast.Statement) -> str:
    if isinstance(stmt, ast.Deterministic):
        return f"{stmt.target} = {render_expr(stmt.expr)};"
    rep = f"[{stmt.rep}]" if stmt.rep is not None else ""
    return f"{stmt.target}{rep} ~ {render_dist(stmt.dist)};"


def render_decl(decl: ast.DataDecl) -> str:
    if decl.length is None:
        return f"{decl.name}: {decl.dtype};"
    return f"{decl.name}: {decl.dtype}[{decl.length}];"


def render_block(name: str, lines) -> str:
    body = "".join(f"    {line}\n" for line in lines)
    return f"  {name} {{\n{body}  }}\n"


def render(program: ast.ModelProgram) -> str:
    """Canonical form: one declaration or statement per line, single spaces."""
    return (
        "model {\n"
        + render_block("data", [render_decl(d) for d in program.data_decls])
        + render_block("prior", [render_statement(s) for s in program.prior_stmts])
        + render_block("likelihood", [render_statement(s) for s in program.likelihood_stmts])
        + "}\n"
    )
