"""Static analyses computing post-region generators.

A post-region generator maps methods (including the constructor) and await
program-points of a normalized program to formulas over the owning class's
fields and the local clock ``t``.  Three generators are provided:

- basic:       everything maps to ``true``;
- local:       the weakly negated external triggers of the leading guards
               of all methods that are guaranteed to have been called on
               ``this`` when the point is reached;
- structural:  the weakly negated triggers of all controller methods of
               the class, uniformly for every member.

Guaranteed calls are a must-analysis over the causality graph of a body: a
method counts only if a self-call to it lies on *every* await-free path from
the entry (or from any await) to the target node.  Loop bodies hang off the
skip edge, so a call inside a loop is never guaranteed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

from . import dl, trans
from .lang.ast import (ClassDecl, EThis, GDiff, HabsProgram, MethodDecl,
                       RCall, RGet, RNew, SAssign, SAwait, SDuration, SIf,
                       SWhile, walk_stmts)


class AnalysisError(Exception):
    pass


# ---------------------------------------------------------------------------
# causality graph

@dataclass(frozen=True)
class CGNode:
    kind: str  # 'stmt', 'in' or 'out'
    uid: int
    stmt: object = field(default=None, compare=False, hash=False)

    def is_await(self) -> bool:
        return self.kind == "stmt" and isinstance(self.stmt, SAwait)

    def self_call(self) -> Optional[str]:
        """Name of the method this node calls on `this`, if any."""
        if self.kind == "stmt" and isinstance(self.stmt, SAssign) \
                and isinstance(self.stmt.rhs, RCall) \
                and isinstance(self.stmt.rhs.callee, EThis):
            return self.stmt.rhs.method
        return None


@dataclass
class CausalityGraph:
    nodes: list
    edges: dict              # node -> set of successor nodes
    entry: CGNode
    exit: CGNode

    def preds(self) -> dict:
        out = {n: set() for n in self.nodes}
        for u, succs in self.edges.items():
            for v in succs:
                out[v].add(u)
        return out

    def await_node(self, point: int) -> CGNode:
        for n in self.nodes:
            if n.is_await() and n.stmt.point == point:
                return n
        raise AnalysisError(f"unknown program point {point}")


class _Builder:
    def __init__(self):
        self.uid = itertools.count()

    def fresh(self, kind, stmt=None) -> CGNode:
        return CGNode(kind, next(self.uid), stmt)

    def of_block(self, stmts) -> CausalityGraph:
        assert stmts, "causality graphs need a nonempty statement list"
        graphs = [self.of_stmt(s) for s in stmts]
        nodes = []
        edges: dict = {}
        for g in graphs:
            nodes += g.nodes
            for u, vs in g.edges.items():
                edges.setdefault(u, set()).update(vs)
        for a, b in zip(graphs, graphs[1:]):
            edges.setdefault(a.exit, set()).add(b.entry)
        for n in nodes:
            edges.setdefault(n, set())
        return CausalityGraph(nodes, edges, graphs[0].entry, graphs[-1].exit)

    def of_stmt(self, s) -> CausalityGraph:
        if isinstance(s, SWhile):
            inner = self.of_block(s.body)
            n_in = self.fresh("in", s)
            n_out = self.fresh("out", s)
            edges = {u: set(vs) for u, vs in inner.edges.items()}
            edges.setdefault(n_in, set()).update({inner.entry, n_out})
            edges.setdefault(inner.exit, set()).add(n_in)
            edges.setdefault(n_out, set())
            return CausalityGraph(inner.nodes + [n_in, n_out], edges, n_in, n_out)
        if isinstance(s, SIf):
            then = self.of_block(s.then) if s.then else None
            els = self.of_block(s.els) if s.els else None
            n_in = self.fresh("in", s)
            n_out = self.fresh("out", s)
            nodes = [n_in, n_out]
            edges = {n_in: set(), n_out: set()}
            for g in (then, els):
                if g is None:
                    edges[n_in].add(n_out)  # empty branch: fall through
                    continue
                nodes += g.nodes
                for u, vs in g.edges.items():
                    edges.setdefault(u, set()).update(vs)
                edges[n_in].add(g.entry)
                edges.setdefault(g.exit, set()).add(n_out)
            return CausalityGraph(nodes, edges, n_in, n_out)
        n = self.fresh("stmt", s)
        return CausalityGraph([n], {n: set()}, n, n)


def build_causality_graph(body) -> CausalityGraph:
    """Graph of a normalized body (a statement list)."""
    return _Builder().of_block(body)


# ---------------------------------------------------------------------------
# guaranteed calls

def guaranteed_calls(graph: CausalityGraph, at: Union[str, int]) -> set:
    """gcall at the exit node (``at='exit'``) or at an await point id.

    A method m' is guaranteed iff every method path (await-free path from
    the entry node or from an await node) to the target contains a call to
    m' on this.  Computed as a greatest fixpoint; see
    :func:`guaranteed_calls_bruteforce` for the path-enumeration oracle.
    """
    target = graph.exit if at == "exit" else graph.await_node(at)
    universe = frozenset(n.self_call() for n in graph.nodes if n.self_call())
    preds = graph.preds()

    g = {n: set(universe) for n in graph.nodes}
    changed = True
    while changed:
        changed = False
        for n in graph.nodes:
            contribs = []
            if n is graph.entry:
                contribs.append(set())  # the zero-length path starting here
            for u in preds[n]:
                contribs.append(set() if u.is_await() else g[u])
            acc = set(universe)
            for c in contribs:
                acc &= c
            if not contribs:
                acc = set(universe)  # unreachable node: vacuous
            own = n.self_call()
            if own:
                acc = acc | {own}
            if acc != g[n]:
                g[n] = acc
                changed = True
    return set(g[target])


def guaranteed_calls_bruteforce(graph: CausalityGraph, at: Union[str, int]) -> set:
    """Oracle: enumerate method paths explicitly (simple except that the
    final hop may close a cycle back to the target)."""
    target = graph.exit if at == "exit" else graph.await_node(at)
    starts = [graph.entry] + [n for n in graph.nodes if n.is_await() and n is not graph.entry]
    paths = []

    def extend(path, seen):
        for nxt in graph.edges[path[-1]]:
            if nxt is target:
                # longer paths through the target only add calls, so there
                # is no need to continue past it
                paths.append(path + [nxt])
                continue
            if nxt in seen or nxt.is_await():
                continue  # paths do not pass through awaits
            extend(path + [nxt], seen | {nxt})

    for s in starts:
        if s is target and s is graph.entry:
            paths.append([s])  # a fresh process arrives here having run nothing
        extend([s], {s})
    if not paths:
        return set()
    out = None
    for p in paths:
        calls = {n.self_call() for n in p if n.self_call()}
        out = calls if out is None else out & calls
    return out


# ---------------------------------------------------------------------------
# controllers

def detect_controllers(c: ClassDecl, whole: HabsProgram) -> set:
    """Methods of ``c`` that (1) lead with an await, (2) contain no other
    suspension and no get/duration, (3) end with a recursive self-call on
    every path, and (4) are called only from the class's init block (their
    own tail call aside)."""
    out = set()
    for m in c.methods:
        if not m.body or not isinstance(m.body[0], SAwait):
            continue
        if not _no_other_suspensions(m.body):
            continue
        if not _ends_with_self_call(m.body, m.name):
            continue
        if not _called_only_from_init(c, m.name, whole):
            continue
        out.add(m.name)
    return out


def _no_other_suspensions(body) -> bool:
    for s in walk_stmts(body[1:]):
        if isinstance(s, (SAwait, SDuration)):
            return False
        if isinstance(s, SAssign) and isinstance(s.rhs, RGet):
            return False
    return True


def _ends_with_self_call(body, name) -> bool:
    stmts = [s for s in body if not _is_plain_return(s)]
    if not stmts:
        return False
    last = stmts[-1]
    if isinstance(last, SIf):
        return (bool(last.then) and _ends_with_self_call(last.then, name)
                and bool(last.els) and _ends_with_self_call(last.els, name))
    return (isinstance(last, SAssign) and isinstance(last.rhs, RCall)
            and isinstance(last.rhs.callee, EThis) and last.rhs.method == name)


def _is_plain_return(s) -> bool:
    from .lang.ast import SReturn
    return isinstance(s, SReturn)


def _called_only_from_init(c: ClassDecl, name: str, whole: HabsProgram) -> bool:
    for cls_name, member, body in _all_bodies(whole):
        for s in walk_stmts(body):
            if not (isinstance(s, SAssign) and isinstance(s.rhs, RCall)):
                continue
            call = s.rhs
            targets = _call_targets(call, cls_name, whole)
            if (c.name, name) not in targets:
                continue
            if cls_name == c.name and member == "init":
                continue
            if cls_name == c.name and member == name and isinstance(call.callee, EThis):
                continue  # the defining recursive tail call
            return False
    return True


def _all_bodies(p: HabsProgram):
    from .lang.ast import all_bodies
    return all_bodies(p)


def _call_targets(call: RCall, cls_name, whole: HabsProgram) -> set:
    """(class, method) pairs a call may refer to; uses the type checker's
    annotation when present, otherwise matches by method name."""
    if isinstance(call.callee, EThis) and cls_name is not None:
        return {(cls_name, call.method)}
    if call.target_class is not None:
        return {(call.target_class, call.method)}
    out = set()
    for c in whole.classes:
        if any(m.name == call.method for m in c.methods):
            out.add((c.name, call.method))
    return out


# ---------------------------------------------------------------------------
# post-region generators

@dataclass
class PostRegionGenerator:
    """Map from (class, member) and (class, point id) to region formulas."""
    kind: str
    program: HabsProgram
    images: dict   # (class name, member name | point id) -> dl.Formula

    def region(self, cls: str, key) -> dl.Formula:
        try:
            return self.images[(cls, key)]
        except KeyError:
            raise AnalysisError(f"no post-region for {cls}.{key}") from None

    def items(self):
        return sorted(self.images.items(), key=_image_order)


def _image_order(item):
    (cls, key), _ = item
    return (cls, isinstance(key, int), str(key))


def _domain(p: HabsProgram):
    """All (class, member) and (class, point) keys of a normalized program."""
    keys = []
    for c in p.classes:
        keys.append((c.name, "init"))
        for m in c.methods:
            keys.append((c.name, m.name))
        blocks = ([c.init_block] if c.init_block is not None else []) \
            + [m.body for m in c.methods]
        for block in blocks:
            for s in walk_stmts(block):
                if isinstance(s, SAwait):
                    keys.append((c.name, s.point))
    return keys


def _require_normalized(p: HabsProgram):
    if not p.normalized:
        raise AnalysisError("program must be normalized first")


def generator_basic(p: HabsProgram) -> PostRegionGenerator:
    _require_normalized(p)
    return PostRegionGenerator("basic", p, {k: dl.TRUE for k in _domain(p)})


def leading_trigger(m: MethodDecl) -> dl.Formula:
    """External trigger of a method's leading guard."""
    if not m.body or not isinstance(m.body[0], SAwait):
        raise AnalysisError(f"method {m.name} is not suspension-leading")
    return trans.external_trigger(m.body[0].guard)


def generator_local(p: HabsProgram) -> PostRegionGenerator:
    _require_normalized(p)
    images = {}
    for c in p.classes:
        triggers = {m.name: leading_trigger(m) for m in c.methods}

        def region_of(gcalls):
            return dl.conj(dl.weak_negate(triggers[m]) for m in sorted(gcalls))

        if c.init_block is not None:
            init_graph = build_causality_graph(c.init_block)
            images[(c.name, "init")] = region_of(guaranteed_calls(init_graph, "exit"))
        else:
            images[(c.name, "init")] = dl.TRUE
        for m in c.methods:
            graph = build_causality_graph(m.body)
            images[(c.name, m.name)] = region_of(guaranteed_calls(graph, "exit"))
            for s in walk_stmts(m.body):
                if isinstance(s, SAwait):
                    images[(c.name, s.point)] = region_of(guaranteed_calls(graph, s.point))
        if c.init_block is not None:
            for s in walk_stmts(c.init_block):
                if isinstance(s, SAwait):
                    images[(c.name, s.point)] = region_of(
                        guaranteed_calls(init_graph, s.point))
    return PostRegionGenerator("local", p, images)


def generator_structural(p: HabsProgram) -> PostRegionGenerator:
    _require_normalized(p)
    images = {}
    for c in p.classes:
        ctrl = detect_controllers(c, p)
        # declaration order keeps the conjunct order stable
        ordered = [m for m in c.methods if m.name in ctrl]
        region = dl.conj(dl.weak_negate(leading_trigger(m)) for m in ordered)
        for key in _domain_of_class(p, c):
            images[key] = region
    return PostRegionGenerator("structural", p, images)


def _domain_of_class(p, c):
    return [k for k in _domain(p) if k[0] == c.name]


def compose(g1: PostRegionGenerator, g2: PostRegionGenerator) -> PostRegionGenerator:
    """Point-wise conjunction (true conjuncts dropped)."""
    if g1.program is not g2.program or set(g1.images) != set(g2.images):
        raise AnalysisError("generators were built over different programs")
    images = {k: dl.conj([g1.images[k], g2.images[k]]) for k in g1.images}
    return PostRegionGenerator(f"{g1.kind}+{g2.kind}", g1.program, images)


def make_generator(p: HabsProgram, kind: str) -> PostRegionGenerator:
    if kind == "basic":
        return generator_basic(p)
    if kind == "local":
        return generator_local(p)
    if kind == "structural":
        return generator_structural(p)
    if kind == "composed":
        g = compose(generator_local(p), generator_structural(p))
        g.kind = "composed"
        return g
    raise AnalysisError(f"unknown generator kind {kind!r}")


# ---------------------------------------------------------------------------
# frame exemption

def frame_exempt(m: MethodDecl, c: ClassDecl) -> bool:
    """True iff the method provably cannot touch the invariant: it assigns
    no field that is physical, read in the invariant or read in any ODE,
    makes no calls, creates no objects and has a trivial postcondition."""
    if m.post is not None:
        post = trans.formula(m.post)
        if post != dl.TRUE:
            return False
    protected = set(c.physical_names())
    if c.object_invariant is not None:
        protected |= dl.free_variables(trans.formula(c.object_invariant))
    for ph in c.physical:
        protected |= dl.free_variables(trans.term(ph.deriv))
    for s in walk_stmts(m.body):
        if isinstance(s, SAssign):
            if isinstance(s.rhs, (RCall, RNew)):
                return False
            if s.target is not None and s.target_kind == "field" and s.target in protected:
                return False
    return True


# ---------------------------------------------------------------------------
# robustness: which obligations must be reproven after a change

CHANGE_KINDS = ("added", "removed", "guard_changed")


def reproof_set(change: str, method: str, kind: str, p: HabsProgram) -> set:
    """Obligations (as ``Class.method`` strings) to re-verify after adding /
    removing / changing the leading guard of ``Class.method``, under the
    basic, local or structural generator."""
    _require_normalized(p)
    if change not in CHANGE_KINDS:
        raise AnalysisError(f"unknown change kind {change!r}")
    cls_name, _, mname = method.partition(".")
    try:
        c = p.cls(cls_name)
        c.method(mname)
    except KeyError:
        raise AnalysisError(f"unknown method {method!r}") from None

    if kind == "basic":
        return set() if change == "removed" else {method}

    callers = _calling_members(c, mname, p)
    if kind == "local":
        base = callers if change == "removed" else callers | {method}
        return base
    if kind == "structural":
        if mname in detect_controllers(c, p):
            members = {f"{c.name}.{m.name}" for m in c.methods}
            if change == "removed":
                members.discard(method)
            return members
        base = callers if change == "removed" else callers | {method}
        return base
    raise AnalysisError(f"unknown generator kind {kind!r}")


def _calling_members(c: ClassDecl, mname: str, p: HabsProgram) -> set:
    """Methods of the class whose gcall set (at exit or any await point)
    contains the method."""
    out = set()
    for m in c.methods:
        graph = build_causality_graph(m.body)
        keys = ["exit"] + [s.point for s in walk_stmts(m.body) if isinstance(s, SAwait)]
        if any(mname in guaranteed_calls(graph, k) for k in keys):
            out.add(f"{c.name}.{m.name}")
    return out
