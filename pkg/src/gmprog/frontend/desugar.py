"""Rewrite surface programs into the core form the compiler accepts.

Every right-hand side is first expanded into a polynomial whose atoms are
program variables and fresh random literals.  Linear polynomials and single
products map directly onto core assignments.  Anything else is broken up
with hidden temporaries (``__t0``, ``__t1``, ...) that are reused from one
statement to the next so the variable vector stays small.
"""
from __future__ import annotations

import math

from scipy.special import ndtri

from ..errors import (
    MalformedBranch,
    NonConstantBound,
    UnsupportedDistribution,
    UnsupportedExpression,
)
from .ast import (
    Assign, BinOp, BoolLit, Call, Choose, Compare, CoreAssign, CoreIf,
    CoreObserve, CorePrune, CoreSkip, FalseCond, For, GmLiteral, If,
    LinearComb, LinearIneq, ListExpr, Name, Neg, Num, Observe, Pow, Product,
    Program, Prune, Skip, TrueCond, VarEq, aux_name,
)
from .surrogates import EXPONENTIAL1, LAPLACE01, STANDARD_NORMAL, UNIFORM01
from .unroll import unroll_loops

DISTRIBUTIONS = ("gm", "gauss", "normal", "uniform", "bernoulli", "laplace", "exponential")


class _Aux:
    """A random-literal atom; identity matters, not value."""

    __slots__ = ("lit", "serial")
    _count = 0

    def __init__(self, lit: GmLiteral):
        self.lit = lit
        _Aux._count += 1
        self.serial = _Aux._count

    def __repr__(self):
        return f"<aux {self.serial}>"


def _key(atom):
    return (1, atom.serial) if isinstance(atom, _Aux) else (0, atom)


def _mono(*atoms):
    return tuple(sorted(atoms, key=_key))


# polynomials are dicts {monomial tuple: coefficient}

def _const(v):
    return {(): float(v)} if v != 0 else {}


def _add(p, q, s=1.0):
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0.0) + s * v
        if out[k] == 0.0:
            del out[k]
    return out


def _scale(p, s):
    if s == 0:
        return {}
    return {k: v * s for k, v in p.items()}


def _mul(p, q):
    out = {}
    for k1, v1 in p.items():
        for k2, v2 in q.items():
            k = _mono(*k1, *k2)
            out[k] = out.get(k, 0.0) + v1 * v2
            if out[k] == 0.0:
                del out[k]
    return out


def _constant_value(p):
    if any(k != () for k in p):
        return None
    return p.get((), 0.0)


def _degree(p):
    return max((len(k) for k in p), default=0)


class Desugarer:
    def __init__(self):
        self.temp_next = 0

    # -- helpers
    def fresh_temp(self) -> str:
        name = f"__t{self.temp_next}"
        self.temp_next += 1
        return name

    def _err(self, cls, msg, node):
        return cls(msg, getattr(node, "line", None), getattr(node, "col", None))

    def const_of(self, e, what="value"):
        pre: list = []
        p = self.poly(e, pre)
        v = _constant_value(p)
        if v is None or pre:
            raise self._err(NonConstantBound, f"{what} must be a constant expression", e)
        return v

    # -- expressions to polynomials
    def poly(self, e, pre: list):
        if isinstance(e, Num):
            return _const(e.value)
        if isinstance(e, Name):
            return {(e.id,): 1.0}
        if isinstance(e, Neg):
            return _scale(self.poly(e.operand, pre), -1.0)
        if isinstance(e, BinOp):
            left = self.poly(e.left, pre)
            right = self.poly(e.right, pre)
            if e.op == "+":
                return _add(left, right)
            if e.op == "-":
                return _add(left, right, -1.0)
            if e.op == "*":
                return _mul(left, right)
            if e.op == "/":
                v = _constant_value(right)
                if v is None:
                    raise self._err(UnsupportedExpression, "division by a non-constant", e)
                if v == 0:
                    raise self._err(UnsupportedExpression, "division by zero", e)
                return _scale(left, 1.0 / v)
        if isinstance(e, Pow):
            if e.exponent > 2:
                raise self._err(
                    UnsupportedExpression,
                    "powers above 2 are not supported; write the products explicitly", e)
            base = self.poly(e.base, pre)
            if e.exponent == 0:
                return _const(1.0)
            return base if e.exponent == 1 else _mul(base, base)
        if isinstance(e, Call):
            return self.call(e, pre)
        if isinstance(e, ListExpr):
            raise self._err(UnsupportedExpression, "list literal outside gm(...)", e)
        raise TypeError(f"unexpected expression {e!r}")

    def _lit(self, lit: GmLiteral):
        return {(_Aux(lit),): 1.0}

    def call(self, e: Call, pre: list):
        f = e.func
        args = e.args
        if f not in DISTRIBUTIONS:
            raise self._err(UnsupportedDistribution, f"unsupported distribution {f!r}", e)

        def need(n):
            if len(args) != n:
                raise self._err(UnsupportedExpression, f"{f} takes {n} arguments", e)

        if f == "gm":
            need(3)
            lists = []
            for a in args:
                if not isinstance(a, ListExpr):
                    raise self._err(UnsupportedExpression, "gm expects three list arguments", a)
                lists.append(tuple(self.const_of(x, "gm parameter") for x in a.items))
            try:
                return self._lit(GmLiteral(*lists))
            except ValueError as exc:
                raise self._err(UnsupportedExpression, str(exc), e) from None
        if f in ("gauss", "normal"):
            need(2)
            mu = self.poly(args[0], pre)
            sd = self.poly(args[1], pre)
            mc, sc = _constant_value(mu), _constant_value(sd)
            if sc is not None and sc < 0:
                raise self._err(UnsupportedExpression, "standard deviation must be nonnegative", e)
            if mc is not None and sc is not None:
                return self._lit(GmLiteral((1.0,), (mc,), (sc,)))
            # x = mu + sd * N(0, 1)
            return _add(mu, _mul(sd, self._lit(STANDARD_NORMAL)))
        if f == "uniform":
            need(2)
            lo = self.poly(args[0], pre)
            hi = self.poly(args[1], pre)
            lc, hc = _constant_value(lo), _constant_value(hi)
            if lc is not None and hc is not None:
                if hc <= lc:
                    raise self._err(UnsupportedExpression, "uniform needs lower < upper", e)
                return self._lit(UNIFORM01.scaled(hc - lc, lc))
            return _add(lo, _mul(_add(hi, lo, -1.0), self._lit(UNIFORM01)))
        if f == "laplace":
            need(2)
            loc = self.poly(args[0], pre)
            scale = self.poly(args[1], pre)
            lc, sc = _constant_value(loc), _constant_value(scale)
            if lc is not None and sc is not None:
                return self._lit(LAPLACE01.scaled(sc, lc))
            return _add(loc, _mul(scale, self._lit(LAPLACE01)))
        if f == "exponential":
            need(1)
            rate = _constant_value(self.poly(args[0], pre))
            if rate is None:
                raise self._err(UnsupportedDistribution, "exponential needs a constant rate", e)
            if rate <= 0:
                raise self._err(UnsupportedExpression, "exponential rate must be positive", e)
            return self._lit(EXPONENTIAL1.scaled(1.0 / rate))
        # bernoulli
        need(1)
        p = self.poly(args[0], pre)
        pc = _constant_value(p)
        if pc is not None:
            if not 0.0 <= pc <= 1.0:
                raise self._err(UnsupportedExpression, "bernoulli probability outside [0, 1]", e)
            if pc == 1.0:
                return _const(1.0)
            if pc == 0.0:
                return {}
            return self._lit(GmLiteral((pc, 1.0 - pc), (1.0, 0.0), (0.0, 0.0)))
        # z = Uniform(0,1); if z < p {x = 1} else {x = 0}
        z = self.fresh_temp()
        x = self.fresh_temp()
        pre.append(CoreAssign(z, LinearComb(((1.0, aux_name(0)),)), (UNIFORM01,),
                              line=e.line, col=e.col))
        cond = self.lower_cond_poly(_add({(z,): 1.0}, p, -1.0), "<", pre, e)
        pre.append(CoreIf(
            cond,
            (CoreAssign(x, LinearComb((), 1.0), line=e.line, col=e.col),),
            (CoreAssign(x, LinearComb((), 0.0), line=e.line, col=e.col),),
            line=e.line, col=e.col,
        ))
        return {(x,): 1.0}

    # -- polynomials to core statements
    def materialize(self, p, which, pre, node):
        """Replace the given aux atoms by temporaries assigned beforehand."""
        if not which:
            return p
        names = {}
        for aux in which:
            t = self.fresh_temp()
            pre.append(CoreAssign(t, LinearComb(((1.0, aux_name(0)),)), (aux.lit,),
                                  line=node.line, col=node.col))
            names[aux.serial] = t
        out = {}
        for k, v in p.items():
            nk = _mono(*(names.get(a.serial, a) if isinstance(a, _Aux) else a for a in k))
            out[nk] = out.get(nk, 0.0) + v
        return out

    def _product_stmt(self, target, a, b, node):
        lits = []
        names = []
        for atom in (a, b):
            if isinstance(atom, _Aux):
                if atom in lits:
                    names.append(aux_name(lits.index(atom)))
                else:
                    lits.append(atom)
                    names.append(aux_name(len(lits) - 1))
            else:
                names.append(atom)
        return CoreAssign(target, Product(names[0], names[1]), tuple(x.lit for x in lits),
                          line=node.line, col=node.col)

    def _linear_stmt(self, target, p, node):
        terms = []
        lits = []
        for k, v in p.items():
            if k == ():
                continue
            (atom,) = k
            if isinstance(atom, _Aux):
                lits.append(atom.lit)
                terms.append((v, aux_name(len(lits) - 1)))
            else:
                terms.append((v, atom))
        return CoreAssign(target, LinearComb(tuple(terms), p.get((), 0.0)), tuple(lits),
                          line=node.line, col=node.col)

    def linearize(self, p, pre, node, keep_aux=True):
        """Hoist every degree-two monomial into a temporary; returns a linear poly."""
        if _degree(p) > 2:
            raise self._err(UnsupportedExpression,
                            "expression has degree above 2; split it into products", node)
        if not keep_aux:
            auxes = {a.serial: a for k in p for a in k if isinstance(a, _Aux)}
            p = self.materialize(p, list(auxes.values()), pre, node)
        else:
            # an aux shared between monomials must become a named variable
            seen: dict = {}
            for k in p:
                for a in set(x for x in k if isinstance(x, _Aux)):
                    seen.setdefault(a.serial, [a, 0])[1] += 1
            shared = [a for a, n in seen.values() if n > 1]
            if shared and _degree(p) == 2:
                p = self.materialize(p, shared, pre, node)
        out = {}
        for k, v in p.items():
            if len(k) == 2:
                t = self.fresh_temp()
                pre.append(self._product_stmt(t, k[0], k[1], node))
                k = (t,)
            out[k] = out.get(k, 0.0) + v
        return out

    def lower_assign(self, target, p, pre, node):
        if _degree(p) > 2:
            raise self._err(UnsupportedExpression,
                            "expression has degree above 2; split it into products", node)
        if len(p) == 1:
            (k, v), = p.items()
            if len(k) == 2 and v == 1.0:
                pre.append(self._product_stmt(target, k[0], k[1], node))
                return
        lin = self.linearize(p, pre, node)
        pre.append(self._linear_stmt(target, lin, node))

    def lower_cond_poly(self, p, op, pre, node):
        lin = self.linearize(p, pre, node, keep_aux=False)
        const = lin.pop((), 0.0)
        terms = tuple((v, k[0]) for k, v in lin.items() if v != 0.0)
        if not terms:
            return TrueCond() if _compare(const, op, 0.0) else FalseCond()
        if op in ("==", "!="):
            if len(terms) == 1:
                c, name = terms[0]
                return VarEq(name, (0.0 - const) / c, op)
            t = self.fresh_temp()
            pre.append(CoreAssign(t, LinearComb(terms), line=node.line, col=node.col))
            return VarEq(t, 0.0 - const, op)
        return LinearIneq(terms, 0.0 - const, op)

    def lower_cond(self, c, pre):
        if isinstance(c, BoolLit):
            return TrueCond() if c.value else FalseCond()
        left = self.poly(c.left, pre)
        right = self.poly(c.right, pre)
        return self.lower_cond_poly(_add(left, right, -1.0), c.op, pre, c)

    # -- statements
    def stmt(self, s) -> list:
        self.temp_next = 0
        pre: list = []
        if isinstance(s, Assign):
            if s.target.startswith("@"):
                raise self._err(UnsupportedExpression, "invalid variable name", s)
            p = self.poly(s.expr, pre)
            self.lower_assign(s.target, p, pre, s)
            return pre
        if isinstance(s, Skip):
            return [CoreSkip(line=s.line, col=s.col)]
        if isinstance(s, Observe):
            cond = self.lower_cond(s.cond, pre)
            return pre + [CoreObserve(cond, line=s.line, col=s.col)]
        if isinstance(s, Prune):
            k = self.const_of(s.bound, "prune bound")
            if k < 1 or k != int(k):
                raise self._err(UnsupportedExpression, "prune bound must be a positive integer", s)
            return [CorePrune(int(k), line=s.line, col=s.col)]
        if isinstance(s, If):
            cond = self.lower_cond(s.cond, pre)
            return pre + [CoreIf(cond, self.block(s.then), self.block(s.orelse),
                                 line=s.line, col=s.col)]
        if isinstance(s, Choose):
            p = self.const_of(s.prob, "choice probability")
            if not 0.0 <= p <= 1.0:
                raise self._err(UnsupportedExpression, "choice probability outside [0, 1]", s)
            if p >= 1.0:
                cond = TrueCond()
            elif p <= 0.0:
                cond = FalseCond()
            else:
                t = self.fresh_temp()
                pre.append(CoreAssign(t, LinearComb(((1.0, aux_name(0)),)),
                                      (STANDARD_NORMAL,), line=s.line, col=s.col))
                cond = LinearIneq(((1.0, t),), float(ndtri(p)), "<")
            return pre + [CoreIf(cond, self.block(s.then), self.block(s.orelse),
                                 line=s.line, col=s.col)]
        if isinstance(s, For):
            raise self._err(MalformedBranch, "loops must be unrolled before desugaring", s)
        raise TypeError(f"unexpected statement {s!r}")

    def block(self, stmts) -> tuple:
        out = []
        for s in stmts:
            out.extend(self.stmt(s))
        return tuple(out)


def _compare(a, op, b) -> bool:
    return {
        "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
        "==": math.isclose(a, b, abs_tol=1e-12), "!=": not math.isclose(a, b, abs_tol=1e-12),
    }[op]


def _has_loops(stmts) -> bool:
    for s in stmts:
        if isinstance(s, For):
            return True
        if isinstance(s, (If, Choose)) and (_has_loops(s.then) or _has_loops(s.orelse)):
            return True
    return False


def desugar(program: Program, constants: dict | None = None) -> tuple:
    """Return the core statement tuple for a surface program.

    Loops still present are unrolled first (with ``constants`` substituted).
    """
    if constants or _has_loops(program.body):
        program = unroll_loops(program, constants)
    return Desugarer().block(program.body)
