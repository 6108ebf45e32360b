"""Second-order Gaussian approximation of a program's posterior.

The CFG is traversed in topological breadth-first order.  Every node turns
the merged output of its parents into a new ``(mass, mixture)`` pair:
assignments are handled component by component with exact first and second
moments, branch guards and observations truncate or condition each
component, and prune nodes merge components pairwise until a bound is met.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AllMassZero, ComponentBudgetExceeded, DimensionMismatch, InfeasibleProgram
from .frontend.ast import (
    FalseCond, LinearComb, LinearIneq, Product, TrueCond, VarEq, aux_name, is_hidden,
)
from .frontend.cfg import AssignPayload, Cfg, CfgNode, ConditionPayload, PruneBound
from .mixture import (
    GaussianMixture, WeightedDist, map_estimate, marginalize, mixture_cov, mixture_mean,
    psd_repair, symmetrize,
)
from .moments import (
    DEGENERATE_TOL, _inside, _op_bounds, batch_condition_equality, batch_product_moments,
    batch_truncate_halfspace,
)


@dataclass(frozen=True)
class EngineConfig:
    drop_mass_threshold: float = 1e-15
    max_components: Optional[int] = None
    record_trace: bool = False
    keep_hidden: bool = False
    prune_cap: Optional[int] = None  # prune any node output above this many components

    def __post_init__(self):
        if not 0.0 <= self.drop_mass_threshold <= 1e-6:
            raise ValueError("drop_mass_threshold must lie in [0, 1e-6]")
        if self.max_components is not None and self.max_components < 1:
            raise ValueError("max_components must be positive")
        if self.prune_cap is not None and self.prune_cap < 1:
            raise ValueError("prune_cap must be positive")


@dataclass(frozen=True)
class TraceRecord:
    node: int
    kind: str
    mass_in: float
    mass_out: float
    components: int


@dataclass
class EngineTrace:
    records: list = field(default_factory=list)

    def to_json(self) -> list:
        return [dict(node=r.node, kind=r.kind, mass_in=r.mass_in, mass_out=r.mass_out,
                     components=r.components) for r in self.records]

    def by_node(self) -> dict:
        return {r.node: r for r in self.records}


def point_mass(var_names) -> GaussianMixture:
    d = len(var_names)
    return GaussianMixture(var_names, np.ones(1), np.zeros((1, d)), np.zeros((1, d, d)))


# -- merge -------------------------------------------------------------------

def merge_dist(inputs) -> WeightedDist:
    """Mass-weighted union of several weighted mixtures over the same variables."""
    inputs = list(inputs)
    if not inputs:
        raise DimensionMismatch("merge_dist needs at least one input")
    names = inputs[0].dist.var_names
    for wd in inputs[1:]:
        if wd.dist.var_names != names:
            raise DimensionMismatch("merged mixtures must share their variables")
    live = [wd for wd in inputs if wd.mass > 0]
    if not live:
        raise AllMassZero("every input to merge has zero mass")
    if len(live) == 1:
        return WeightedDist(live[0].mass, live[0].dist)
    total = math.fsum(wd.mass for wd in live)
    weights = np.concatenate([wd.dist.weights * (wd.mass / total) for wd in live])
    means = np.concatenate([wd.dist.means for wd in live])
    covs = np.concatenate([wd.dist.covs for wd in live])
    return WeightedDist(total, GaussianMixture(names, weights, means, covs))


# -- assignments ---------------------------------------------------------------

def _extend_all(dist: GaussianMixture, aux) -> tuple:
    """Append every aux literal as an independent coordinate (component-major)."""
    w, m, S = dist.weights, dist.means, dist.covs
    names = list(dist.var_names)
    for k, lit in enumerate(aux):
        C, d = m.shape
        L = lit.size
        lw = np.asarray(lit.weights)
        lm = np.asarray(lit.means)
        lv = np.square(np.asarray(lit.stds))
        w = np.outer(w, lw).ravel()
        nm = np.empty((C, L, d + 1))
        nm[:, :, :d] = m[:, None, :]
        nm[:, :, d] = lm[None, :]
        nS = np.zeros((C, L, d + 1, d + 1))
        nS[:, :, :d, :d] = S[:, None]
        nS[:, :, d, d] = lv[None, :]
        m = nm.reshape(C * L, d + 1)
        S = nS.reshape(C * L, d + 1, d + 1)
        names.append(aux_name(k))
    return w, m, S, names


def apply_rule(dist: GaussianMixture, assign: AssignPayload) -> GaussianMixture:
    """Assign the target with exact componentwise first and second moments."""
    d = dist.dim
    w, m, S, names = _extend_all(dist, assign.aux)
    index = {n: i for i, n in enumerate(names)}
    t = index[assign.target]
    expr = assign.expr
    m = m.copy()
    S = S.copy()
    if isinstance(expr, LinearComb):
        a = np.zeros(len(names))
        for coef, name in expr.terms:
            a[index[name]] += coef
        new_mean = m @ a + expr.constant
        cross = S @ a
        new_var = cross @ a
    elif isinstance(expr, Product):
        new_mean, new_var, cross = batch_product_moments(m, S, index[expr.left], index[expr.right])
    else:
        raise TypeError(f"unsupported expression {expr!r}")
    S[:, t, :] = cross
    S[:, :, t] = cross
    S[:, t, t] = np.maximum(new_var, 0.0)
    m[:, t] = new_mean
    if len(names) > d:
        m = m[:, :d]
        S = S[:, :d, :d]
    return GaussianMixture(dist.var_names, w, m, S)


# -- truncation ------------------------------------------------------------------

def _finish(dist, w, masses, means, covs, threshold):
    total = float(w @ masses)
    if not total > threshold:
        return 0.0, dist
    keep = w * masses > threshold
    nw = (w * masses)[keep]
    return total, GaussianMixture(dist.var_names, nw / nw.sum(), means[keep], covs[keep])


def approx_trunc(dist: GaussianMixture, lbc, threshold: float = 1e-15,
                 density: bool = True):
    """Restrict a mixture to the set where ``lbc`` holds.

    Returns the probability of the set and the renormalized second-order
    match of the restricted mixture.  With ``density`` true (observations) an
    equality on a continuous coordinate contributes its slice density;
    otherwise (branch guards) such an equality has probability zero.
    """
    if isinstance(lbc, TrueCond):
        return 1.0, dist
    if isinstance(lbc, FalseCond):
        return 0.0, dist
    w, M, S = dist.weights, dist.means, dist.covs
    if isinstance(lbc, LinearIneq):
        coeffs = np.zeros(dist.dim)
        for c, name in lbc.terms:
            coeffs[dist.index(name)] += c
        if not np.any(coeffs):
            # constant condition after cancellation: compare 0 with the bound
            ok = _inside(0.0, *_op_bounds(lbc.op, lbc.constant))
            return (1.0, dist) if ok else (0.0, dist)
        masses, means, covs = batch_truncate_halfspace(M, S, coeffs, lbc.constant, lbc.op)
        return _finish(dist, w, masses, means, covs, threshold)
    if isinstance(lbc, VarEq):
        i = dist.index(lbc.var)
        scale = np.maximum(1.0, np.max(np.diagonal(S, axis1=1, axis2=2), axis=1))
        cont = S[:, i, i] > DEGENERATE_TOL * scale
        at = np.abs(M[:, i] - lbc.constant) <= 1e-9
        if lbc.op == "!=":
            masses = np.where(cont, 1.0, np.where(at, 0.0, 1.0))
            return _finish(dist, w, masses, M, S, threshold)
        if density:
            masses, means, covs = batch_condition_equality(M, S, i, lbc.constant)
            return _finish(dist, w, masses, means, covs, threshold)
        masses = np.where(cont, 0.0, np.where(at, 1.0, 0.0))
        return _finish(dist, w, masses, M, S, threshold)
    raise TypeError(f"unsupported condition {lbc!r}")


# -- pruning -----------------------------------------------------------------

def _pair_cost(w, m, i, others):
    diff = np.linalg.norm(m[others] - m[i], axis=1)
    return 2.0 * w[i] * w[others] / (w[i] + w[others]) * diff


def prune_dist(dist: GaussianMixture, K: int) -> GaussianMixture:
    """Merge the cheapest pair of components until at most ``K`` remain.

    The cost of merging ``i`` and ``j`` is ``w_i |mu' - mu_i| + w_j |mu' - mu_j|``
    with ``mu'`` the merged mean.  Ties go to the lexicographically smallest
    pair and the merged component takes the lower index.
    """
    if K < 1:
        raise ValueError("K must be positive")
    C = dist.n_components
    if C <= K:
        return dist
    w = dist.weights.copy()
    m = dist.means.copy()
    S = dist.covs.copy()
    alive = np.ones(C, dtype=bool)
    cost = np.full((C, C), np.inf)
    for i in range(C - 1):
        cost[i, i + 1:] = _pair_cost(w, m, i, np.arange(i + 1, C))
    n = C
    while n > K:
        flat = int(np.argmin(cost))
        i, j = divmod(flat, C)
        wi, wj = w[i], w[j]
        tot = wi + wj
        a, b = wi / tot, wj / tot
        diff = m[i] - m[j]
        m[i] = a * m[i] + b * m[j]
        S[i] = symmetrize(a * S[i] + b * S[j] + a * b * np.outer(diff, diff))
        w[i] = tot
        alive[j] = False
        cost[j, :] = np.inf
        cost[:, j] = np.inf
        n -= 1
        others = np.flatnonzero(alive)
        others = others[others != i]
        if others.size:
            vals = _pair_cost(w, m, i, others)
            lo = others < i
            cost[others[lo], i] = vals[lo]
            cost[i, others[~lo]] = vals[~lo]
    return GaussianMixture(dist.var_names, w[alive], m[alive], S[alive])


# -- node dispatch ---------------------------------------------------------------

def node_semantics(node: CfgNode, inp: WeightedDist, cfg: Cfg | None = None,
                   threshold: float = 1e-15, guard=None) -> WeightedDist:
    """Apply one node to its merged input.

    ``guard`` is the (already negated if needed) condition of the parent test
    for branch state nodes; when omitted it is looked up in ``cfg``.
    """
    kind = node.kind
    p, dist = inp.mass, inp.dist
    if kind in ("entry", "exit", "test"):
        return inp
    if kind == "state":
        if node.cond_flag is not None:
            if guard is None:
                if cfg is None:
                    raise ValueError("branch state nodes need the cfg or an explicit guard")
                guard = cfg.guard(node)
            if p > 0:
                q, dist = approx_trunc(dist, guard, threshold, density=False)
                p = p * q
        if p > 0 and isinstance(node.payload, AssignPayload):
            dist = apply_rule(dist, node.payload)
        return WeightedDist(p, dist)
    if kind == "observe":
        if p > 0:
            q, dist = approx_trunc(dist, node.payload.lbc, threshold, density=True)
            p = p * q
        return WeightedDist(p, dist)
    if kind == "prune":
        if p > 0:
            dist = prune_dist(dist, node.payload.K)
        return WeightedDist(p, dist)
    raise ValueError(f"unknown node kind {kind!r}")


# -- driver --------------------------------------------------------------------

@dataclass
class RunResult:
    posterior: GaussianMixture
    evidence: float
    trace: Optional[EngineTrace]
    full_posterior: GaussianMixture

    def __iter__(self):
        return iter((self.posterior, self.evidence, self.trace))

    def to_json(self) -> dict:
        post = self.posterior
        out = {
            "posterior": post.to_json(),
            "evidence": float(self.evidence),
            "mean": mixture_mean(post).tolist(),
            "cov": mixture_cov(post).tolist(),
            "map": map_estimate(post).tolist(),
            "components": int(post.n_components),
        }
        if self.trace is not None:
            out["trace"] = self.trace.to_json()
        return out


def run(cfg: Cfg, config: EngineConfig | None = None) -> RunResult:
    config = config or EngineConfig()
    thr = config.drop_mass_threshold
    trace = EngineTrace() if config.record_trace else None
    outputs: dict[int, WeightedDist] = {}
    init = WeightedDist(1.0, point_mass(cfg.var_names))
    for nid in cfg.topological_order():
        node = cfg.nodes[nid]
        if node.kind == "entry":
            inp = init
        else:
            parents = [outputs[p] for p in node.parents]
            if any(wd.mass > 0 for wd in parents):
                inp = merge_dist(parents)
            else:
                inp = WeightedDist(0.0, parents[0].dist)
        out = node_semantics(node, inp, cfg, thr)
        if config.prune_cap is not None and out.dist.n_components > config.prune_cap:
            out = WeightedDist(out.mass, prune_dist(out.dist, config.prune_cap))
        if out.mass <= thr and out.mass != 0.0:
            out = WeightedDist(0.0, out.dist)
        outputs[nid] = out
        C = out.dist.n_components
        if config.max_components is not None and C > config.max_components:
            raise ComponentBudgetExceeded(
                f"node {nid} holds {C} components, above the cap of {config.max_components}")
        if trace is not None:
            trace.records.append(TraceRecord(nid, node.kind, float(inp.mass), float(out.mass), C))
        # free memory of nodes whose children are all done
        for p in node.parents:
            if all(c in outputs for c in cfg.nodes[p].children):
                outputs[p] = WeightedDist(outputs[p].mass, _placeholder(outputs[p].dist))
    final = outputs[cfg.exit.id]
    if not final.mass > thr:
        raise InfeasibleProgram("the program's observations have zero probability")
    full = _clean(final.dist)
    post = full
    if not config.keep_hidden:
        keep = [i for i, n in enumerate(full.var_names) if not is_hidden(n)]
        if keep and len(keep) < full.dim:
            post = marginalize(full, keep)
    return RunResult(post, float(final.mass), trace, full)


def _placeholder(dist: GaussianMixture) -> GaussianMixture:
    # a zero-mass path still needs a well-shaped mixture to carry along
    if dist.n_components == 1:
        return dist
    return GaussianMixture(dist.var_names, np.ones(1), dist.means[:1], dist.covs[:1])


def _clean(dist: GaussianMixture) -> GaussianMixture:
    w = dist.weights / dist.weights.sum()
    return GaussianMixture(dist.var_names, w, dist.means, psd_repair(dist.covs))


def component_bound(cfg: Cfg, prune_cap: int | None = None) -> dict:
    """Static upper bound on the component count leaving every node.

    Assignments multiply by the sizes of their aux literals, joins add the
    bounds of their parents and prune nodes cap at ``K``. A global
    ``prune_cap`` caps every node as the engine does.
    """
    bound: dict[int, int] = {}
    for nid in cfg.topological_order():
        node = cfg.nodes[nid]
        b = 1 if node.kind == "entry" else sum(bound[p] for p in node.parents)
        if node.kind == "state" and isinstance(node.payload, AssignPayload):
            for lit in node.payload.aux:
                b *= lit.size
        if node.kind == "prune":
            b = min(b, node.payload.K)
        if prune_cap is not None:
            b = min(b, prune_cap)
        bound[nid] = b
    return bound
