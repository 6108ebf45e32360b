"""Independent reference answers: exact enumeration and Monte Carlo.

Neither oracle shares code with the moment kernels.  ``discrete_enumerate``
pushes finite sets of weighted points through the graph.
``mc_estimate`` runs likelihood weighting.  An assignment of the form
``x = linear + noise`` keeps the noise unsampled until it is needed, so a
later ``observe(x == c)`` can weight by the exact noise density instead of
rejecting almost every sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as cartesian

import numpy as np

from .errors import NotDiscrete, ZeroEvidence
from .frontend.ast import FalseCond, LinearComb, LinearIneq, Product, TrueCond, VarEq, is_hidden
from .frontend.cfg import AssignPayload, Cfg

RNG_ALGORITHM = "numpy.Philox-4x64 (SeedSequence-spawned blocks)"
EQ_TOL = 1e-9


@dataclass(frozen=True)
class DiscretePosterior:
    var_names: tuple
    atoms: list  # [(point tuple, probability)]
    evidence: float

    def mean(self) -> np.ndarray:
        pts = np.array([p for p, _ in self.atoms], dtype=float)
        probs = np.array([q for _, q in self.atoms])
        return probs @ pts

    def marginal(self, name: str) -> dict:
        i = self.var_names.index(name)
        out: dict = {}
        for p, q in self.atoms:
            out[p[i]] = out.get(p[i], 0.0) + q
        return out


@dataclass(frozen=True)
class McEstimate:
    var_names: tuple
    mean: np.ndarray
    cov: np.ndarray
    evidence: float
    n_samples: int
    std_err_mean: np.ndarray
    seed: int
    rng: str = RNG_ALGORITHM

    def index(self, name: str) -> int:
        return self.var_names.index(name)


def _holds(value: float, lbc) -> bool:
    """Condition check on an exact point, same boundary rule as the kernels."""
    op, c = lbc.op, lbc.constant
    if op == "==":
        return abs(value - c) <= EQ_TOL
    if op == "!=":
        return abs(value - c) > EQ_TOL
    if op == ">":
        return value > c + EQ_TOL
    if op == ">=":
        return value >= c - EQ_TOL
    if op == "<":
        return value < c - EQ_TOL
    return value <= c + EQ_TOL


# -- exact enumeration ---------------------------------------------------------

def _point_ok(point, lbc, index) -> bool:
    if isinstance(lbc, TrueCond):
        return True
    if isinstance(lbc, FalseCond):
        return False
    if isinstance(lbc, VarEq):
        return _holds(point[index[lbc.var]], lbc)
    norm = math.sqrt(sum(c * c for c, _ in lbc.terms))
    s = math.fsum(c * point[index[n]] for c, n in lbc.terms)
    # compare on the normalized direction like the halfspace kernel does
    return _holds(s / norm, LinearIneq((), lbc.constant / norm, lbc.op))


def _assign_points(atoms: dict, payload: AssignPayload, index) -> dict:
    out: dict = {}
    t = index[payload.target]
    lits = [list(zip(lit.weights, lit.means)) for lit in payload.aux]
    for point, prob in atoms.items():
        for combo in cartesian(*lits) if lits else [()]:
            env = {f"@{k}": v for k, (_, v) in enumerate(combo)}
            w = prob
            for wk, _ in combo:
                w *= wk

            def val(name):
                return env[name] if name in env else point[index[name]]

            e = payload.expr
            if isinstance(e, LinearComb):
                new = math.fsum([c * val(n) for c, n in e.terms] + [e.constant])
            else:
                new = val(e.left) * val(e.right)
            p = list(point)
            p[t] = new
            key = tuple(p)
            out[key] = out.get(key, 0.0) + w
    return out


def discrete_enumerate(cfg: Cfg) -> DiscretePosterior:
    """Exact posterior of a program whose random literals are all finite discrete."""
    for node in cfg.nodes:
        if isinstance(node.payload, AssignPayload):
            for lit in node.payload.aux:
                if not lit.is_discrete:
                    raise NotDiscrete(f"node {node.id} draws from a continuous literal")
    names = list(cfg.var_names)
    index = {n: i for i, n in enumerate(names)}
    outputs: dict = {}
    for nid in cfg.topological_order():
        node = cfg.nodes[nid]
        if node.kind == "entry":
            atoms = {tuple(0.0 for _ in names): 1.0}
        else:
            atoms = {}
            for p in node.parents:
                for k, v in outputs[p].items():
                    atoms[k] = atoms.get(k, 0.0) + v
        if node.kind == "state":
            guard = cfg.guard(node)
            if guard is not None:
                atoms = {k: v for k, v in atoms.items() if _point_ok(k, guard, index)}
            if isinstance(node.payload, AssignPayload):
                atoms = _assign_points(atoms, node.payload, index)
        elif node.kind == "observe":
            lbc = node.payload.lbc
            atoms = {k: v for k, v in atoms.items() if _point_ok(k, lbc, index)}
        outputs[nid] = atoms
    final = outputs[cfg.exit.id]
    total = math.fsum(final.values())
    if total <= 0:
        raise ZeroEvidence("every path is ruled out by the observations")
    keep = [i for i, n in enumerate(names) if not is_hidden(n)]
    merged: dict = {}
    for k, v in final.items():
        kk = tuple(k[i] for i in keep)
        merged[kk] = merged.get(kk, 0.0) + v
    atoms = [(k, v / total) for k, v in merged.items() if v > 0]
    return DiscretePosterior(tuple(names[i] for i in keep), atoms, total)


# -- likelihood weighting --------------------------------------------------------

class _Block:
    """One batch of particles moving through the graph together."""

    def __init__(self, cfg: Cfg, n: int, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.names = list(cfg.var_names)
        self.index = {v: i for i, v in enumerate(self.names)}
        d = len(self.names)
        self.X = np.zeros((n, d))
        self.W = np.ones(n)
        # delayed noise: value = X + coef * Z with Z ~ literal table[lit]
        self.coef = np.zeros((n, d))
        self.lit = np.full((n, d), -1, dtype=np.int64)
        self.table: list = []
        self.n = n

    def _lit_id(self, lit) -> int:
        for k, other in enumerate(self.table):
            if other is lit or other == lit:
                return k
        self.table.append(lit)
        return len(self.table) - 1

    def sample(self, lit, size: int) -> np.ndarray:
        w = np.asarray(lit.weights)
        cum = np.cumsum(w)
        cum[-1] = 1.0
        comp = np.searchsorted(cum, self.rng.random(size), side="right")
        comp = np.minimum(comp, len(w) - 1)
        m = np.asarray(lit.means)[comp]
        s = np.asarray(lit.stds)[comp]
        return m + s * self.rng.standard_normal(size)

    def materialize(self, idx: np.ndarray, names) -> None:
        for name in names:
            j = self.index[name]
            lits = self.lit[idx, j]
            pend = lits >= 0
            if not np.any(pend):
                continue
            sel = idx[pend]
            for k in np.unique(lits[pend]):
                rows = sel[self.lit[sel, j] == k]
                z = self.sample(self.table[k], rows.size)
                self.X[rows, j] += self.coef[rows, j] * z
            self.lit[sel, j] = -1
            self.coef[sel, j] = 0.0

    def cond_mask(self, idx, lbc) -> np.ndarray:
        if isinstance(lbc, TrueCond):
            return np.ones(idx.size, dtype=bool)
        if isinstance(lbc, FalseCond):
            return np.zeros(idx.size, dtype=bool)
        self.materialize(idx, lbc.names())
        if isinstance(lbc, VarEq):
            x = self.X[idx, self.index[lbc.var]]
            close = np.abs(x - lbc.constant) <= EQ_TOL
            return close if lbc.op == "==" else ~close
        norm = math.sqrt(sum(c * c for c, _ in lbc.terms))
        s = sum(c * self.X[idx, self.index[n]] for c, n in lbc.terms) / norm
        b = lbc.constant / norm
        return {"<": s < b - EQ_TOL, "<=": s <= b + EQ_TOL,
                ">": s > b + EQ_TOL, ">=": s >= b - EQ_TOL}[lbc.op]

    def assign(self, idx, payload: AssignPayload) -> None:
        e = payload.expr
        t = self.index[payload.target]
        m = idx.size
        if isinstance(e, Product):
            self.materialize(idx, [n for n in (e.left, e.right) if not n.startswith("@")])
            vals = {}
            for k, lit in enumerate(payload.aux):
                vals[f"@{k}"] = self.sample(lit, m)

            def get(n):
                return vals[n] if n in vals else self.X[idx, self.index[n]]

            new = get(e.left) * get(e.right)
            self.lit[idx, t] = -1
            self.coef[idx, t] = 0.0
            self.X[idx, t] = new
            return
        self.materialize(idx, [n for n in e.names() if not n.startswith("@")])
        new = np.full(m, float(e.constant))
        delayed = None
        for c, n in e.terms:
            if n.startswith("@"):
                lit = payload.aux[int(n[1:])]
                if delayed is None and c != 0 and all(s > 0 for s in lit.stds):
                    delayed = (c, lit)
                    continue
                new = new + c * self.sample(lit, m)
            else:
                new = new + c * self.X[idx, self.index[n]]
        self.X[idx, t] = new
        if delayed is None:
            self.lit[idx, t] = -1
            self.coef[idx, t] = 0.0
        else:
            self.lit[idx, t] = self._lit_id(delayed[1])
            self.coef[idx, t] = delayed[0]

    def observe(self, idx, lbc) -> np.ndarray:
        if isinstance(lbc, VarEq) and lbc.op == "==":
            j = self.index[lbc.var]
            lits = self.lit[idx, j]
            pend = lits >= 0
            keep = np.ones(idx.size, dtype=bool)
            if np.any(pend):
                rows = idx[pend]
                for k in np.unique(lits[pend]):
                    sub = rows[self.lit[rows, j] == k]
                    c = self.coef[sub, j]
                    z = (lbc.constant - self.X[sub, j]) / c
                    self.W[sub] *= self.table[k].pdf(z) / np.abs(c)
                self.X[rows, j] = lbc.constant
                self.lit[rows, j] = -1
                self.coef[rows, j] = 0.0
            rest = ~pend
            keep[rest] = np.abs(self.X[idx[rest], j] - lbc.constant) <= EQ_TOL
            keep &= self.W[idx] > 0
            return idx[keep]
        return idx[self.cond_mask(idx, lbc)]

    def run(self) -> np.ndarray:
        cfg = self.cfg
        held: dict = {}
        for nid in cfg.topological_order():
            node = cfg.nodes[nid]
            if node.kind == "entry":
                idx = np.arange(self.n)
            else:
                parts = [held[p] for p in node.parents]
                idx = parts[0] if len(parts) == 1 else np.concatenate(parts)
            if node.kind == "state":
                guard = cfg.guard(node)
                if guard is not None:
                    idx = idx[self.cond_mask(idx, guard)]
                if isinstance(node.payload, AssignPayload) and idx.size:
                    self.assign(idx, node.payload)
            elif node.kind == "observe" and idx.size:
                idx = self.observe(idx, node.payload.lbc)
            held[nid] = idx
        final = held[cfg.exit.id]
        self.materialize(final, self.names)
        return final


def mc_estimate(cfg: Cfg, n_samples: int, seed: int, block_size: int = 1 << 16) -> McEstimate:
    """Likelihood-weighted posterior mean and covariance with standard errors."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    names = list(cfg.var_names)
    keep = [i for i, n in enumerate(names) if not is_hidden(n)]
    d = len(keep)
    n_blocks = -(-n_samples // block_size)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    s0 = 0.0
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    q0 = 0.0
    q1 = np.zeros(d)
    q2 = np.zeros(d)
    for b, ss in enumerate(children):
        n = min(block_size, n_samples - b * block_size)
        block = _Block(cfg, n, np.random.Generator(np.random.Philox(ss)))
        final = block.run()
        x = block.X[np.ix_(final, keep)]
        w = block.W[final]
        s0 += w.sum()
        s1 += w @ x
        s2 += (x * w[:, None]).T @ x
        w2 = w * w
        q0 += w2.sum()
        q1 += w2 @ x
        q2 += w2 @ (x * x)
    if not s0 > 0:
        raise ZeroEvidence("all sample weights are zero")
    mean = s1 / s0
    cov = s2 / s0 - np.outer(mean, mean)
    spread = np.maximum(q2 - 2 * mean * q1 + mean**2 * q0, 0.0)
    se = np.sqrt(spread) / s0
    return McEstimate(tuple(names[i] for i in keep), mean, 0.5 * (cov + cov.T),
                      s0 / n_samples, n_samples, se, seed)
