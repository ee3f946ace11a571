"""Normalization: suspension-leading method bodies, program-point numbering
and name resolution.

After ``normalize``:

- every method body starts with an ``await`` carrying a ``diff`` guard
  (``await diff true`` is inserted where missing);
- every await statement carries a program-point identifier; identifiers form
  a contiguous 1..n sequence in textual order over the whole program;
- variable references are annotated as field / local / param and unresolved
  names are rejected;
- contracts declared on interface methods are copied onto the implementing
  class's methods.
"""

from __future__ import annotations

import copy

from .ast import (EBin, EBool, ENull, ENum, EThis, EUn, EUnit, EVar, GDiff,
                  HabsProgram, MethodDecl, Pos, RCall, RExpr, RGet, RNew,
                  SAssign, SAwait, SDuration, SIf, SReturn, SSkip, SWhile)


class HabsNameError(Exception):
    def __init__(self, pos: Pos, msg: str, filename: str = "<input>"):
        self.pos = pos
        self.msg = msg
        super().__init__(f"{filename}:{pos.line}:{pos.col}: {msg}")


def normalize(program: HabsProgram, filename: str = "<input>") -> HabsProgram:
    p = copy.deepcopy(program)
    _attach_interface_contracts(p, filename)

    for c in p.classes:
        for m in c.methods:
            if not m.body or not isinstance(m.body[0], SAwait):
                m.body.insert(0, SAwait(guard=GDiff(EBool(True)), pos=m.pos))

    counter = 0
    for c in p.classes:
        blocks = ([c.init_block] if c.init_block is not None else []) + [m.body for m in c.methods]
        for block in blocks:
            counter = _number_awaits(block, counter)
    counter = _number_awaits(p.main_block, counter)

    for c in p.classes:
        fields = set(c.field_names())
        if c.init_block is not None:
            c.init_locals = _resolve_block(c.init_block, fields, {}, filename)
        for m in c.methods:
            params = {n for _, n in m.params}
            m.locals = _resolve_block(m.body, fields, params, filename)
    p.main_locals = _resolve_block(p.main_block, set(), {}, filename)
    p.normalized = True
    return p


def _attach_interface_contracts(p: HabsProgram, filename: str):
    by_name = {i.name: i for i in p.interfaces}
    for c in p.classes:
        if c.implements is None or c.implements not in by_name:
            continue
        for sig in by_name[c.implements].methods:
            try:
                m = c.method(sig.name)
            except KeyError:
                continue
            if m.pre is None:
                m.pre = copy.deepcopy(sig.pre)
            if m.post is None:
                m.post = copy.deepcopy(sig.post)
            if m.tactic is None:
                m.tactic = sig.tactic


def _number_awaits(block, counter: int) -> int:
    for s in block:
        if isinstance(s, SAwait):
            counter += 1
            s.point = counter
        elif isinstance(s, SIf):
            counter = _number_awaits(s.then, counter)
            counter = _number_awaits(s.els, counter)
        elif isinstance(s, SWhile):
            counter = _number_awaits(s.body, counter)
    return counter


def _resolve_block(block, fields, params, filename) -> dict:
    """Annotate references; returns the declared locals of the block."""
    locals_: dict = {}

    def resolve_expr(e):
        if isinstance(e, EVar):
            if e.this_qualified:
                if e.name not in fields:
                    raise HabsNameError(e.pos, f"unknown field {e.name!r}", filename)
                e.kind = "field"
            elif e.name in locals_:
                e.kind = "local"
            elif e.name in params:
                e.kind = "param"
            elif e.name in fields:
                e.kind = "field"
            else:
                raise HabsNameError(e.pos, f"unresolved name {e.name!r}", filename)
        elif isinstance(e, EUn):
            resolve_expr(e.arg)
        elif isinstance(e, EBin):
            resolve_expr(e.left)
            resolve_expr(e.right)
        elif isinstance(e, (ENum, EBool, ENull, EUnit, EThis)):
            pass
        elif e is not None:
            raise HabsNameError(getattr(e, "pos", Pos(0, 0)),
                                f"cannot resolve {type(e).__name__}", filename)

    def resolve_rhs(r):
        if isinstance(r, RExpr):
            resolve_expr(r.expr)
        elif isinstance(r, RGet):
            resolve_expr(r.expr)
        elif isinstance(r, RNew):
            for a in r.args:
                resolve_expr(a)
        elif isinstance(r, RCall):
            resolve_expr(r.callee)
            for a in r.args:
                resolve_expr(a)

    def resolve_stmts(stmts):
        for s in stmts:
            if isinstance(s, SAssign):
                resolve_rhs(s.rhs)
                if s.target is not None:
                    if s.decl_type is not None:
                        if s.target in locals_:
                            raise HabsNameError(s.pos, f"duplicate local {s.target!r}", filename)
                        locals_[s.target] = s.decl_type
                        s.target_kind = "local"
                    elif s.target in locals_ or s.target in params:
                        s.target_kind = "local"
                    elif s.target in fields:
                        s.target_kind = "field"
                    else:
                        raise HabsNameError(s.pos, f"unresolved assignment target {s.target!r}",
                                            filename)
            elif isinstance(s, SAwait):
                g = s.guard
                resolve_expr(g.expr)
            elif isinstance(s, SDuration):
                resolve_expr(s.expr)
            elif isinstance(s, SIf):
                resolve_expr(s.cond)
                resolve_stmts(s.then)
                resolve_stmts(s.els)
            elif isinstance(s, SWhile):
                resolve_expr(s.cond)
                resolve_stmts(s.body)
            elif isinstance(s, SReturn):
                if s.expr is not None:
                    resolve_expr(s.expr)

    resolve_stmts(block)
    return locals_


def assigned_fields(block) -> set:
    """Names of fields assigned anywhere in the block (after resolution)."""
    from .ast import walk_stmts

    out = set()
    for s in walk_stmts(block):
        if isinstance(s, SAssign) and s.target is not None and s.target_kind == "field":
            out.add(s.target)
    return out
