"""Syntax trees: the surface language and the normalized core form.

Surface nodes mirror the concrete grammar one to one.  Core nodes are what
the compiler consumes: assignment right-hand sides are either a linear
combination or a single product, and conditions are linear Boolean
conditions.  Source positions never take part in equality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


def _pos():
    return field(default=None, compare=False, repr=False)


# -- surface expressions -----------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Name:
    id: str
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Neg:
    operand: "SExpr"
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "SExpr"
    right: "SExpr"
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Pow:
    base: "SExpr"
    exponent: int
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class ListExpr:
    items: tuple
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


SExpr = Union[Num, Name, Neg, BinOp, Pow, Call, ListExpr]


# -- surface conditions and statements ----------------------------------------

@dataclass(frozen=True)
class BoolLit:
    value: bool
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Compare:
    op: str
    left: SExpr
    right: SExpr
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Assign:
    target: str
    expr: SExpr
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class If:
    cond: Union[BoolLit, Compare]
    then: tuple
    orelse: tuple
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Choose:
    prob: SExpr
    then: tuple
    orelse: tuple
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Observe:
    cond: Union[BoolLit, Compare]
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Prune:
    bound: SExpr
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class For:
    var: str
    args: tuple
    body: tuple
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Skip:
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class Program:
    body: tuple


# -- core forms --------------------------------------------------------------

@dataclass(frozen=True)
class GmLiteral:
    """Univariate Gaussian mixture with constant parameters (stds, not variances)."""

    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        n = len(self.weights)
        if n == 0 or len(self.means) != n or len(self.stds) != n:
            raise ValueError("gm literal needs equal, nonempty parameter lists")
        if any(w <= 0 for w in self.weights):
            raise ValueError("gm weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"gm weights sum to {sum(self.weights)}, not 1")
        total = math.fsum(self.weights)
        if total != 1.0:
            # absorb the rounding slack so path masses stay exactly conserved
            object.__setattr__(self, "weights", tuple(w / total for w in self.weights))
        if any(s < 0 for s in self.stds):
            raise ValueError("gm standard deviations must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def is_discrete(self) -> bool:
        return all(s == 0 for s in self.stds)

    def scaled(self, scale: float, shift: float = 0.0) -> "GmLiteral":
        return GmLiteral(
            self.weights,
            tuple(shift + scale * m for m in self.means),
            tuple(abs(scale) * s for s in self.stds),
        )

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, m, s in zip(self.weights, self.means, self.stds):
            if s > 0:
                out += w * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * np.sqrt(2 * np.pi))
        return out


@dataclass(frozen=True)
class LinearComb:
    """``sum(coeff * name) + constant``."""

    terms: tuple
    constant: float = 0.0

    def names(self):
        return [n for _, n in self.terms]


@dataclass(frozen=True)
class Product:
    left: str
    right: str

    def names(self):
        return [self.left, self.right]


Expr = Union[LinearComb, Product]


@dataclass(frozen=True)
class TrueCond:
    def negate(self):
        return FalseCond()

    def names(self):
        return []


@dataclass(frozen=True)
class FalseCond:
    def negate(self):
        return TrueCond()

    def names(self):
        return []


_FLIP = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


@dataclass(frozen=True)
class LinearIneq:
    """``sum(coeff * name)  op  constant`` with op in <, <=, >, >=."""

    terms: tuple
    constant: float
    op: str

    def negate(self):
        return LinearIneq(self.terms, self.constant, _FLIP[self.op])

    def names(self):
        return [n for _, n in self.terms]


@dataclass(frozen=True)
class VarEq:
    """``var == constant`` or ``var != constant``."""

    var: str
    constant: float
    op: str

    def negate(self):
        return VarEq(self.var, self.constant, _FLIP[self.op])

    def names(self):
        return [self.var]


Lbc = Union[TrueCond, FalseCond, LinearIneq, VarEq]


@dataclass(frozen=True)
class CoreAssign:
    target: str
    expr: Expr
    aux: tuple = ()
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class CoreIf:
    cond: Lbc
    then: tuple
    orelse: tuple
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class CoreObserve:
    cond: Lbc
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class CorePrune:
    bound: int
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


@dataclass(frozen=True)
class CoreSkip:
    line: Optional[int] = _pos()
    col: Optional[int] = _pos()


def aux_name(k: int) -> str:
    """Placeholder used inside a core expression for its k-th aux literal."""
    return f"@{k}"


def is_aux(name: str) -> bool:
    return name.startswith("@")


def is_hidden(name: str) -> bool:
    return name.startswith("__")
