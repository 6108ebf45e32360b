"""Constant substitution and unrolling of ``for i in range(...)`` loops."""
from __future__ import annotations

from dataclasses import replace

from ..errors import NonConstantBound, ProgramSyntaxError
from .ast import (
    Assign, BinOp, BoolLit, Call, Choose, Compare, For, If, ListExpr, Name,
    Neg, Num, Observe, Pow, Program, Prune, Skip,
)

MAX_ITERATIONS = 100_000


def _subst(e, env: dict):
    if isinstance(e, Name):
        if e.id in env:
            return Num(float(env[e.id]), line=e.line, col=e.col)
        return e
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return replace(e, operand=_subst(e.operand, env))
    if isinstance(e, BinOp):
        return replace(e, left=_subst(e.left, env), right=_subst(e.right, env))
    if isinstance(e, Pow):
        return replace(e, base=_subst(e.base, env))
    if isinstance(e, Call):
        return replace(e, args=tuple(_subst(a, env) for a in e.args))
    if isinstance(e, ListExpr):
        return replace(e, items=tuple(_subst(a, env) for a in e.items))
    if isinstance(e, Compare):
        return replace(e, left=_subst(e.left, env), right=_subst(e.right, env))
    if isinstance(e, BoolLit):
        return e
    raise TypeError(f"unexpected node {e!r}")


def eval_const(e, env: dict) -> float:
    """Evaluate an arithmetic expression over numbers and names bound in ``env``."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Name):
        if e.id in env:
            return float(env[e.id])
        raise NonConstantBound(f"{e.id!r} is not a constant", e.line, e.col)
    if isinstance(e, Neg):
        return -eval_const(e.operand, env)
    if isinstance(e, BinOp):
        a, b = eval_const(e.left, env), eval_const(e.right, env)
        if e.op == "/":
            if b == 0:
                raise NonConstantBound("division by zero in constant expression", e.line, e.col)
            return a / b
        return {"+": a + b, "-": a - b, "*": a * b}[e.op]
    if isinstance(e, Pow):
        return eval_const(e.base, env) ** e.exponent
    raise NonConstantBound("expected a constant expression",
                           getattr(e, "line", None), getattr(e, "col", None))


class _Unroller:
    def __init__(self, constants: dict):
        self.constants = dict(constants)
        self.iterations = 0

    def block(self, stmts, env) -> tuple:
        out = []
        for s in stmts:
            out.extend(self.stmt(s, env))
        return tuple(out)

    def stmt(self, s, env) -> list:
        if isinstance(s, Assign):
            if s.target in env:
                raise ProgramSyntaxError(f"cannot assign to constant {s.target!r}", s.line, s.col)
            return [replace(s, expr=_subst(s.expr, env))]
        if isinstance(s, Skip):
            return [s]
        if isinstance(s, Observe):
            return [replace(s, cond=_subst(s.cond, env))]
        if isinstance(s, Prune):
            return [replace(s, bound=_subst(s.bound, env))]
        if isinstance(s, If):
            return [replace(s, cond=_subst(s.cond, env), then=self.block(s.then, env),
                            orelse=self.block(s.orelse, env))]
        if isinstance(s, Choose):
            return [replace(s, prob=_subst(s.prob, env), then=self.block(s.then, env),
                            orelse=self.block(s.orelse, env))]
        if isinstance(s, For):
            bounds = [eval_const(a, env) for a in s.args]
            for b, a in zip(bounds, s.args):
                if b != int(b):
                    raise NonConstantBound("range bounds must be integers",
                                           getattr(a, "line", s.line), getattr(a, "col", s.col))
            lo, hi = (0, int(bounds[0])) if len(bounds) == 1 else (int(bounds[0]), int(bounds[1]))
            out = []
            for i in range(lo, hi):
                self.iterations += 1
                if self.iterations > MAX_ITERATIONS:
                    raise NonConstantBound(
                        f"loop unrolling exceeds {MAX_ITERATIONS} iterations", s.line, s.col)
                out.extend(self.block(s.body, {**env, s.var: i}))
            return out
        raise TypeError(f"unexpected statement {s!r}")


def unroll_loops(program: Program, constants: dict | None = None) -> Program:
    """Replace loops by copies of their bodies and substitute named constants."""
    u = _Unroller(constants or {})
    return Program(u.block(program.body, dict(u.constants)))
