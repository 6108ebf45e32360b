"""Control-flow graphs: compilation from core statements and validation."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import InvalidCfg, MalformedBranch, UnknownIdentifier
from .ast import (
    CoreAssign, CoreIf, CoreObserve, CorePrune, CoreSkip, Expr, GmLiteral,
    Lbc, is_aux,
)

KINDS = ("entry", "state", "test", "observe", "prune", "exit")


@dataclass(frozen=True)
class AssignPayload:
    target: str
    expr: Expr
    aux: tuple = ()  # GmLiteral per aux placeholder, consumed by this node only


@dataclass(frozen=True)
class SkipPayload:
    pass


@dataclass(frozen=True)
class ConditionPayload:
    lbc: Lbc


@dataclass(frozen=True)
class PruneBound:
    K: int


Payload = Optional[Union[AssignPayload, SkipPayload, ConditionPayload, PruneBound]]


@dataclass
class CfgNode:
    id: int
    kind: str
    payload: Payload = None
    cond_flag: Optional[bool] = None
    parents: list = field(default_factory=list)
    children: list = field(default_factory=list)
    line: Optional[int] = None
    col: Optional[int] = None

    def __repr__(self):
        extra = "" if self.cond_flag is None else f", cond={self.cond_flag}"
        return f"CfgNode({self.id}, {self.kind}{extra}, parents={self.parents}, children={self.children})"


@dataclass
class Cfg:
    nodes: list
    var_names: list

    def node(self, i: int) -> CfgNode:
        return self.nodes[i]

    @property
    def entry(self) -> CfgNode:
        return next(n for n in self.nodes if n.kind == "entry")

    @property
    def exit(self) -> CfgNode:
        return next(n for n in self.nodes if n.kind == "exit")

    def count(self, kind: str) -> int:
        return sum(1 for n in self.nodes if n.kind == kind)

    def guard(self, node: CfgNode):
        """Condition applied on entry to a branch state node (negated on false)."""
        if node.cond_flag is None:
            return None
        lbc = self.nodes[node.parents[0]].payload.lbc
        return lbc if node.cond_flag else lbc.negate()

    def topological_order(self) -> list:
        """Breadth-first order in which a node appears once all parents have."""
        pending = {n.id: len(n.parents) for n in self.nodes}
        queue = deque(n.id for n in self.nodes if not n.parents)
        order = []
        while queue:
            i = queue.popleft()
            order.append(i)
            for c in self.nodes[i].children:
                pending[c] -= 1
                if pending[c] == 0:
                    queue.append(c)
        return order


class _Builder:
    def __init__(self):
        self.nodes: list[CfgNode] = []

    def new(self, kind, payload=None, parents=(), cond_flag=None, line=None, col=None):
        n = CfgNode(len(self.nodes), kind, payload, cond_flag, [], [], line, col)
        self.nodes.append(n)
        for p in parents:
            self.link(p, n.id)
        return n.id

    def link(self, a, b):
        self.nodes[a].children.append(b)
        self.nodes[b].parents.append(a)

    def single_parent(self, ends, stmt):
        # test/observe/prune nodes need exactly one parent; join with a skip node
        if len(ends) == 1:
            return ends[0]
        return self.new("state", SkipPayload(), ends, line=stmt.line, col=stmt.col)

    def state_payload(self, s):
        if isinstance(s, CoreAssign):
            return AssignPayload(s.target, s.expr, tuple(s.aux))
        return SkipPayload()

    def block(self, stmts, ends) -> list:
        for s in stmts:
            ends = self.stmt(s, ends)
        return ends

    def stmt(self, s, ends) -> list:
        if isinstance(s, (CoreAssign, CoreSkip)):
            return [self.new("state", self.state_payload(s), ends, line=s.line, col=s.col)]
        if isinstance(s, CoreObserve):
            p = self.single_parent(ends, s)
            return [self.new("observe", ConditionPayload(s.cond), [p], line=s.line, col=s.col)]
        if isinstance(s, CorePrune):
            if s.bound < 1:
                raise MalformedBranch("prune bound must be positive", s.line, s.col)
            p = self.single_parent(ends, s)
            return [self.new("prune", PruneBound(s.bound), [p], line=s.line, col=s.col)]
        if isinstance(s, CoreIf):
            p = self.single_parent(ends, s)
            t = self.new("test", ConditionPayload(s.cond), [p], line=s.line, col=s.col)
            out = []
            for flag, branch in ((True, s.then), (False, s.orelse)):
                branch = tuple(branch)
                if branch and isinstance(branch[0], (CoreAssign, CoreSkip)):
                    first, rest = branch[0], branch[1:]
                    head = self.new("state", self.state_payload(first), [t], flag,
                                    line=first.line, col=first.col)
                else:
                    rest = branch
                    head = self.new("state", SkipPayload(), [t], flag, line=s.line, col=s.col)
                out.extend(self.block(rest, [head]))
            return out
        raise MalformedBranch(f"unexpected statement {type(s).__name__}",
                              getattr(s, "line", None), getattr(s, "col", None))


def _collect_vars(stmts, order: list, seen: set, uses: list):
    for s in stmts:
        if isinstance(s, CoreAssign):
            for n in s.expr.names():
                if not is_aux(n):
                    uses.append((n, s))
            if s.target not in seen:
                seen.add(s.target)
                order.append(s.target)
        elif isinstance(s, CoreIf):
            uses.extend((n, s) for n in s.cond.names())
            _collect_vars(s.then, order, seen, uses)
            _collect_vars(s.orelse, order, seen, uses)
        elif isinstance(s, CoreObserve):
            uses.extend((n, s) for n in s.cond.names())


def compile_cfg(core) -> Cfg:
    """Build the CFG for a desugared, loop-free core statement tuple.

    Nodes are numbered in depth-first order, true branch before false branch.
    Variables are ordered by first assignment.
    """
    if hasattr(core, "body"):
        raise MalformedBranch("compile_cfg expects desugared core statements")
    order: list = []
    uses: list = []
    _collect_vars(core, order, set(), uses)
    known = set(order)
    for name, s in uses:
        if name not in known:
            raise UnknownIdentifier(f"unknown identifier {name!r}", s.line, s.col)
    b = _Builder()
    entry = b.new("entry")
    ends = b.block(core, [entry])
    b.new("exit", parents=ends)
    return Cfg(b.nodes, order)


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    kind: str
    node: Optional[int]
    message: str

    def __str__(self):
        where = "" if self.node is None else f"node {self.node}: "
        return f"{self.kind}: {where}{self.message}"


def validate_cfg(cfg: Cfg) -> list:
    """Return structural violations; an empty list means the graph is well formed."""
    diags: list[Diagnostic] = []
    nodes = cfg.nodes
    n = len(nodes)
    ids = {node.id for node in nodes}
    for idx, node in enumerate(nodes):
        if node.id != idx:
            diags.append(Diagnostic("BadNodeId", node.id, f"stored at position {idx}"))
        for c in node.children:
            if c not in ids or node.id not in nodes[c].parents:
                diags.append(Diagnostic("EdgeMismatch", node.id, f"child {c} does not list it"))
        for p in node.parents:
            if p not in ids or node.id not in nodes[p].children:
                diags.append(Diagnostic("EdgeMismatch", node.id, f"parent {p} does not list it"))
        if node.kind not in KINDS:
            diags.append(Diagnostic("UnknownKind", node.id, repr(node.kind)))
    if any(d.kind in ("BadNodeId", "EdgeMismatch") for d in diags):
        return diags

    entries = [x for x in nodes if x.kind == "entry"]
    exits = [x for x in nodes if x.kind == "exit"]
    if len(entries) != 1:
        diags.append(Diagnostic("EntryCount", None, f"{len(entries)} entry nodes"))
    if len(exits) != 1:
        diags.append(Diagnostic("ExitCount", None, f"{len(exits)} exit nodes"))

    for node in nodes:
        np_, nc = len(node.parents), len(node.children)
        k = node.kind
        if k == "entry" and (np_ != 0 or nc != 1):
            diags.append(Diagnostic("EntryArity", node.id, f"{np_} parents, {nc} children"))
        elif k == "exit" and (np_ < 1 or nc != 0):
            diags.append(Diagnostic("ExitArity", node.id, f"{np_} parents, {nc} children"))
        elif k == "test":
            kids = [nodes[c] for c in node.children]
            flags = sorted(str(c.cond_flag) for c in kids)
            if (np_ != 1 or nc != 2 or any(c.kind != "state" for c in kids)
                    or flags != ["False", "True"]):
                diags.append(Diagnostic("TestArity", node.id,
                                        f"{np_} parents, children {node.children}"))
            if not isinstance(node.payload, ConditionPayload):
                diags.append(Diagnostic("BadPayload", node.id, "test without condition"))
        elif k in ("observe", "prune") and (np_ != 1 or nc != 1):
            diags.append(Diagnostic(f"{k.capitalize()}Arity", node.id,
                                    f"{np_} parents, {nc} children"))
        elif k == "state" and (np_ < 1 or nc != 1):
            diags.append(Diagnostic("StateArity", node.id, f"{np_} parents, {nc} children"))
        if k == "observe" and not isinstance(node.payload, ConditionPayload):
            diags.append(Diagnostic("BadPayload", node.id, "observe without condition"))
        if k == "prune" and not (isinstance(node.payload, PruneBound) and node.payload.K >= 1):
            diags.append(Diagnostic("BadPayload", node.id, "prune without positive bound"))
        if k == "state" and not isinstance(node.payload, (AssignPayload, SkipPayload)):
            diags.append(Diagnostic("BadPayload", node.id, "state without assignment or skip"))
        under_test = k == "state" and np_ == 1 and nodes[node.parents[0]].kind == "test"
        if (node.cond_flag is not None) != under_test:
            diags.append(Diagnostic("CondFlag", node.id,
                                    "cond_flag must be set exactly on children of tests"))

    # cycles
    order = cfg.topological_order()
    if len(order) != n:
        stuck = sorted(set(range(n)) - set(order))
        diags.append(Diagnostic("CycleDetected", stuck[0], f"nodes {stuck} lie on or after a cycle"))
        return diags

    # every node on an entry -> exit path
    if len(entries) == 1 and len(exits) == 1:
        fwd = _reach(nodes, entries[0].id, "children")
        bwd = _reach(nodes, exits[0].id, "parents")
        for node in nodes:
            if node.id not in fwd or node.id not in bwd:
                diags.append(Diagnostic("Unreachable", node.id, "not on an entry-to-exit path"))
    return diags


def _reach(nodes, start, attr) -> set:
    seen = {start}
    stack = [start]
    while stack:
        for j in getattr(nodes[stack.pop()], attr):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def check_cfg(cfg: Cfg) -> Cfg:
    diags = validate_cfg(cfg)
    if diags:
        raise InvalidCfg(diags)
    return cfg
