"""Second-order Gaussian approximation for probabilistic programs.

Programs are compiled to a control-flow graph whose nodes transform a
Gaussian mixture; the engine pushes a mixture from entry to exit and reports
the posterior together with its evidence.
"""
from .engine import (
    EngineConfig, EngineTrace, RunResult, apply_rule, approx_trunc, component_bound,
    merge_dist, node_semantics, prune_dist, run,
)
from .errors import GmProgError, InfeasibleProgram, InvalidCfg, SourceError
from .frontend import compile_source, parse
from .mixture import (
    GaussianComponent, GaussianMixture, WeightedDist, extend, make_mixture, map_estimate,
    marginalize, mixture_cov, mixture_mean, pdf_eval,
)
from .oracles import discrete_enumerate, mc_estimate

__version__ = "0.1.0"


def run_source(source: str, constants: dict | None = None, config: EngineConfig | None = None):
    """Compile ``source`` and run it; returns a :class:`RunResult`."""
    return run(compile_source(source, constants), config)


__all__ = [
    "EngineConfig", "EngineTrace", "GaussianComponent", "GaussianMixture", "GmProgError",
    "InfeasibleProgram", "InvalidCfg", "RunResult", "SourceError", "WeightedDist",
    "apply_rule", "approx_trunc", "compile_source", "component_bound", "discrete_enumerate",
    "extend", "make_mixture", "map_estimate", "marginalize", "mc_estimate", "merge_dist",
    "mixture_cov", "mixture_mean", "node_semantics", "parse", "pdf_eval", "prune_dist",
    "run", "run_source",
]
