import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmprog.errors import (
    InvalidCfg, NonConstantBound, ProgramSyntaxError, UnknownIdentifier,
    UnsupportedDistribution, UnsupportedExpression,
)
from gmprog.frontend import (
    GmLiteral, LinearComb, LinearIneq, Product, TrueCond, VarEq, check_cfg, compile_cfg,
    compile_source, desugar, format_program, parse, unroll_loops, validate_cfg,
)
from gmprog.frontend.ast import (
    Assign, Call, CoreAssign, CoreIf, For, If, Num, Observe, Skip, is_aux,
)
from gmprog.frontend.cfg import Cfg, CfgNode, ConditionPayload, SkipPayload
from gmprog.frontend.surrogates import EXPONENTIAL1, LAPLACE01, UNIFORM01

from conftest import BENCH_DIR, CORPUS, bench_source

BRANCHING = """
x1 = gauss(0, 1)
if x1 > 0 {
    x2 = 2*x1 + 1 + gauss(0, 0.1)
} else {
    x2 = -2*x1 + 1 + gauss(0, 0.1)
}
observe(x2 < 3)
"""


def _walk(stmts):
    for s in stmts:
        yield s
        for attr in ("then", "orelse", "body"):
            yield from _walk(getattr(s, attr, ()) or ())


class TestParse:
    def test_single_assignment(self):
        p = parse("x = gauss(0,1)")
        assert p.body == (Assign("x", Call("gauss", (Num(0.0), Num(1.0)))),)

    def test_branching_shape(self):
        p = parse(BRANCHING)
        kinds = [type(s) for s in p.body]
        assert kinds == [Assign, If, Observe]
        assert len(p.body[1].then) == 1 and len(p.body[1].orelse) == 1

    def test_error_location(self):
        with pytest.raises(ProgramSyntaxError) as exc:
            parse("x = 1\nif x > {\n}")
        assert (exc.value.line, exc.value.col) == (2, 8)
        assert exc.value.format("prog.txt").startswith("prog.txt:2:8: ")

    @pytest.mark.parametrize("src", [
        "x = ", "x = (1 + 2", "if x > 1 { x = 1", "observe x > 1", "x = 1 2", "for i range(3) {}",
        "x = 3 $ 4", "prune()",
    ])
    def test_rejects(self, src):
        with pytest.raises(ProgramSyntaxError):
            parse(src)

    def test_separators_and_comments(self):
        p = parse("x = 1; y = 2  # trailing\n\n z = gm([0.5,\n 0.5], [0, 1], [1, 1])")
        assert [s.target for s in p.body] == ["x", "y", "z"]

    def test_else_if(self):
        p = parse("x = gauss(0,1)\nif x < 0 { y = 0 } else if x < 1 { y = 1 } else { y = 2 }")
        inner = p.body[1].orelse
        assert len(inner) == 1 and isinstance(inner[0], If)

    @pytest.mark.parametrize("name", CORPUS)
    def test_roundtrip_corpus(self, name):
        p = parse(bench_source(name))
        assert parse(format_program(p)) == p


class TestUnroll:
    def test_empty_range(self):
        p = unroll_loops(parse("x = 0\nfor i in range(0) { x = x + 1 }"))
        assert len(p.body) == 1

    def test_tracking_two_copies(self):
        src = (BENCH_DIR / "tracking.prob").read_text()
        p = unroll_loops(parse(src), {"n": 2})
        walk = [s.target for s in p.body if isinstance(s, Assign)]
        assert walk[:4] == ["x", "y", "x", "y"] and walk[4:6] == ["x", "y"]

    def test_loop_variable_substituted(self):
        p = unroll_loops(parse("x = 0\nfor i in range(1, 3) { x = x + i }"))
        assert format_program(p).splitlines()[1:] == ["x = x + 1", "x = x + 2"]

    def test_nonconstant_bound(self):
        with pytest.raises(NonConstantBound):
            unroll_loops(parse("n = gauss(3, 1)\nfor i in range(n) { skip }"))

    def test_iteration_limit(self):
        with pytest.raises(NonConstantBound):
            unroll_loops(parse("for i in range(200000) { skip }"))

    def test_assign_to_loop_var(self):
        with pytest.raises(ProgramSyntaxError):
            unroll_loops(parse("for i in range(2) { i = 1 }"))


class TestDesugar:
    def test_gauss_literal(self):
        (s,) = desugar(parse("x = gauss(0,1)"))
        assert s.aux == (GmLiteral((1.0,), (0.0,), (1.0,)),)
        assert s.expr == LinearComb(((1.0, "@0"),), 0.0)

    def test_normal_variable_mean(self):
        core = desugar(parse("y = 1\nx = normal(y, 2)"))
        s = core[1]
        assert s.expr == LinearComb(((1.0, "y"), (2.0, "@0")), 0.0)
        assert s.aux == (GmLiteral((1.0,), (0.0,), (1.0,)),)

    def test_bernoulli_constant(self):
        (s,) = desugar(parse("x = bernoulli(0.3)"))
        lit = s.aux[0]
        assert lit.is_discrete and lit.weights == (0.3, 0.7) and lit.means == (1.0, 0.0)

    def test_bernoulli_variable_branches(self):
        core = desugar(parse("p = uniform(0, 1)\nx = bernoulli(p)"))
        ifs = [s for s in core if isinstance(s, CoreIf)]
        assert len(ifs) == 1
        cond = ifs[0].cond
        assert isinstance(cond, LinearIneq) and cond.op == "<" and "p" in cond.names()
        then_vals = {s.expr.constant for s in ifs[0].then}
        else_vals = {s.expr.constant for s in ifs[0].orelse}
        assert then_vals == {1.0} and else_vals == {0.0}

    def test_choose_quantile(self):
        core = desugar(parse("choose 0.3 { y = 1 } else { y = 0 }"))
        cond = core[-1].cond
        # P(N(0,1) < q) = 0.3
        from scipy.stats import norm
        assert norm.cdf(cond.constant) == pytest.approx(0.3, abs=1e-12)

    def test_square_is_product(self):
        core = desugar(parse("x = gauss(0,1)\ny = x^2"))
        assert core[1].expr == Product("x", "x")

    def test_general_polynomial_linearized(self):
        core = desugar(parse("x = gauss(0,1)\ny = gauss(0,1)\nz = 3*x*y + 2*x - 1"))
        assert core[2].expr == Product("x", "y")
        assert core[3].expr == LinearComb(((3.0, core[2].target), (2.0, "x")), -1.0)

    def test_cubic_rejected(self):
        with pytest.raises(UnsupportedExpression):
            desugar(parse("x = gauss(0,1)\ny = x^3"))
        with pytest.raises(UnsupportedExpression):
            desugar(parse("x = gauss(0,1)\ny = x*x*x"))

    def test_unknown_distribution(self):
        with pytest.raises(UnsupportedDistribution):
            desugar(parse("x = poisson(3)"))

    def test_equality_condition(self):
        core = desugar(parse("x = bernoulli(0.5)\nobserve(2*x == 2)"))
        assert core[1].cond == VarEq("x", 1.0, "==")

    def test_constant_condition(self):
        core = desugar(parse("x = 1\nif 1 < 2 { x = 2 } else { x = 3 }"))
        assert core[1].cond == TrueCond()


class TestSurrogates:
    def test_uniform(self):
        w, m, s = (np.array(v) for v in (UNIFORM01.weights, UNIFORM01.means, UNIFORM01.stds))
        assert UNIFORM01.size == 5
        mean = w @ m
        var = w @ (s**2 + m**2) - mean**2
        assert mean == pytest.approx(0.5, abs=1e-15)
        assert var == pytest.approx(1 / 12, rel=0.02)

    @pytest.mark.parametrize("lit,mean,var,rtol", [
        (LAPLACE01, 0.0, 2.0, 0.05),
        (EXPONENTIAL1, 1.0, 1.0, 0.05),
    ])
    def test_other(self, lit, mean, var, rtol):
        w, m, s = (np.array(v) for v in (lit.weights, lit.means, lit.stds))
        mu = w @ m
        assert mu == pytest.approx(mean, abs=rtol)
        assert w @ (s**2 + m**2) - mu**2 == pytest.approx(var, rel=rtol)

    def test_literal_validation(self):
        with pytest.raises(ValueError):
            GmLiteral((0.5, 0.6), (0.0, 1.0), (1.0, 1.0))
        with pytest.raises(ValueError):
            GmLiteral((1.0,), (0.0,), (-1.0,))


class TestCompile:
    def test_empty(self):
        cfg = check_cfg(compile_cfg(desugar(parse(""))))
        assert [n.kind for n in cfg.nodes] == ["entry", "exit"]

    def test_branching_graph(self):
        cfg = compile_source(BRANCHING)
        assert [n.kind for n in cfg.nodes] == [
            "entry", "state", "test", "state", "state", "state", "observe", "exit"]
        assert cfg.nodes[3].cond_flag is True and cfg.nodes[4].cond_flag is False
        assert isinstance(cfg.nodes[5].payload, SkipPayload)
        assert cfg.nodes[5].parents == [3, 4]
        assert validate_cfg(cfg) == []
        assert cfg.var_names == ["x1", "x2"]

    def test_if_without_else(self):
        cfg = compile_source("x = gauss(0,1)\nif x > 0 { x = 1 }")
        test = next(n for n in cfg.nodes if n.kind == "test")
        false_child = next(cfg.nodes[c] for c in test.children if cfg.nodes[c].cond_flag is False)
        assert isinstance(false_child.payload, SkipPayload)

    def test_branch_starting_with_observe(self):
        cfg = compile_source("x = gauss(0,1)\nif x > 0 { observe(x < 2) } else { x = 0 }")
        test = next(n for n in cfg.nodes if n.kind == "test")
        kids = [cfg.nodes[c] for c in test.children]
        assert all(k.kind == "state" for k in kids)
        assert validate_cfg(cfg) == []

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifier):
            compile_source("x = y + 1")
        with pytest.raises(UnknownIdentifier):
            compile_source("x = 1\nobserve(z > 0)")

    def test_prune_bound_positive(self):
        with pytest.raises(UnsupportedExpression):
            compile_source("x = gauss(0,1)\nprune(0)")
        with pytest.raises(UnsupportedExpression):
            compile_source("x = gauss(0,1)\nprune(2.5)")

    def test_tracking_tests_constant_in_n(self):
        src = (BENCH_DIR / "tracking.prob").read_text()
        counts = {n: compile_source(src, {"n": n}).count("test") for n in (1, 2, 5, 20)}
        assert set(counts.values()) == {2}

    @pytest.mark.parametrize("name", CORPUS)
    def test_aux_consumed_once(self, name):
        from conftest import bench_cfg
        cfg = bench_cfg(name)
        for node in cfg.nodes:
            p = node.payload
            if hasattr(p, "aux"):
                used = [n for n in p.expr.names() if is_aux(n)]
                assert sorted(set(used)) == [f"@{k}" for k in range(len(p.aux))]
        assert not any(is_aux(v) for v in cfg.var_names)


def _node(i, kind, parents, children, payload=None, flag=None):
    return CfgNode(i, kind, payload, flag, list(parents), list(children))


class TestValidate:
    def test_cycle(self):
        nodes = [
            _node(0, "entry", [], [1]),
            _node(1, "state", [0, 2], [2], SkipPayload()),
            _node(2, "state", [1], [1], SkipPayload()),
            _node(3, "exit", [], []),
        ]
        kinds = {d.kind for d in validate_cfg(Cfg(nodes, []))}
        assert "CycleDetected" in kinds

    def test_test_arity(self):
        cond = ConditionPayload(TrueCond())
        nodes = [
            _node(0, "entry", [], [1]),
            _node(1, "test", [0], [2], cond),
            _node(2, "state", [1], [3], SkipPayload(), True),
            _node(3, "exit", [2], []),
        ]
        assert [d.kind for d in validate_cfg(Cfg(nodes, []))] == ["TestArity"]

    def test_two_exits(self):
        nodes = [_node(0, "entry", [], [1]), _node(1, "exit", [0], []), _node(2, "exit", [], [])]
        kinds = {d.kind for d in validate_cfg(Cfg(nodes, []))}
        assert "ExitCount" in kinds

    def test_edge_mismatch(self):
        nodes = [_node(0, "entry", [], [1]), _node(1, "exit", [], [])]
        assert validate_cfg(Cfg(nodes, []))[0].kind == "EdgeMismatch"

    def test_check_raises(self):
        nodes = [_node(0, "entry", [], [1]), _node(1, "exit", [], [])]
        with pytest.raises(InvalidCfg):
            check_cfg(Cfg(nodes, []))


# -- random well-formed programs ---------------------------------------------

_VARS = ["a", "b", "c"]


@st.composite
def _expr(draw, known):
    v = draw(st.sampled_from(known))
    kind = draw(st.integers(0, 4))
    k = draw(st.integers(-3, 3))
    if kind == 0:
        return f"{k}*{v} + {draw(st.integers(-5, 5))}"
    if kind == 1:
        return f"{v} + gauss({k}, {draw(st.integers(1, 3))})"
    if kind == 2:
        return f"{v} * {draw(st.sampled_from(known))}"
    if kind == 3:
        return f"bernoulli(0.{draw(st.integers(1, 9))})"
    return f"gm([0.5, 0.5], [{k}, 1], [0, 1])"


@st.composite
def _block(draw, known, depth):
    lines = []
    for _ in range(draw(st.integers(0, 3))):
        kind = draw(st.integers(0, 4 if depth < 2 else 1))
        if kind <= 1:
            lines.append(f"{draw(st.sampled_from(_VARS))} = {draw(_expr(known))}")
        elif kind == 2:
            v = draw(st.sampled_from(known))
            op = draw(st.sampled_from(["<", "<=", ">", ">=", "==", "!="]))
            then = draw(_block(known, depth + 1))
            orelse = draw(_block(known, depth + 1))
            tail = f" else {{\n{orelse}\n}}" if draw(st.booleans()) else ""
            lines.append(f"if {v} {op} {draw(st.integers(-2, 2))} {{\n{then}\n}}{tail}")
        elif kind == 3:
            lines.append(f"observe({draw(st.sampled_from(known))} > -100)")
        else:
            lines.append(f"prune({draw(st.integers(1, 4))})")
    return "\n".join(lines)


@st.composite
def programs(draw):
    head = "\n".join(f"{v} = gauss(0, 1)" for v in _VARS)
    return head + "\n" + draw(_block(_VARS, 0))


class TestFuzz:
    @settings(max_examples=300)
    @given(programs())
    def test_compile_validates(self, src):
        cfg = compile_cfg(desugar(parse(src)))
        assert validate_cfg(cfg) == []
        assert len(cfg.topological_order()) == len(cfg.nodes)

    @settings(max_examples=200)
    @given(programs())
    def test_print_roundtrip(self, src):
        p = parse(src)
        assert parse(format_program(p)) == p
