"""Parsing, desugaring, loop unrolling and CFG compilation."""
from .ast import GmLiteral, LinearComb, LinearIneq, Product, TrueCond, FalseCond, VarEq
from .cfg import Cfg, CfgNode, Diagnostic, check_cfg, compile_cfg, validate_cfg
from .desugar import desugar
from .parser import format_program, parse
from .unroll import unroll_loops


def compile_source(source: str, constants: dict | None = None) -> Cfg:
    """Full pipeline: parse, unroll, desugar, compile and validate."""
    program = unroll_loops(parse(source), constants)
    return check_cfg(compile_cfg(desugar(program)))


__all__ = [
    "Cfg", "CfgNode", "Diagnostic", "FalseCond", "GmLiteral", "LinearComb",
    "LinearIneq", "Product", "TrueCond", "VarEq", "check_cfg", "compile_cfg",
    "compile_source", "desugar", "format_program", "parse", "unroll_loops",
    "validate_cfg",
]
