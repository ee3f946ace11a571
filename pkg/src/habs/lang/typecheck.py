"""Type checking and contract-vocabulary diagnostics.

The type system is nominal with the language's own types (class and
interface names, Fut<T>, Real, Int, Bool, Unit).  Int is accepted as a
discrete numeric type and mixes freely with Real.  Calls through an
interface resolve against the implementing class.

``check_types`` returns diagnostics instead of raising; an empty list means
the program is well typed.  As a side effect every call is annotated with
its resolved target class, which later analyses rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ast import (BOOL, INT, REAL, UNIT, EBin, EBool, ENull, ENum, EThis, EUn,
                  EUnit, EVar, FutType, GDiff, GDuration, GPoll, HabsProgram,
                  Pos, RCall, RExpr, RGet, RNew, SAssign, SAwait, SDuration,
                  SIf, SReturn, SSkip, SWhile, SimpleType, walk_stmts)


@dataclass
class Diagnostic:
    pos: Pos
    message: str

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.pos.line}:{self.pos.col}: {self.message}"


_NUMERIC = (REAL, INT)


def _is_numeric(t) -> bool:
    return t in _NUMERIC


def _compatible(expected, actual) -> bool:
    if expected == actual:
        return True
    if _is_numeric(expected) and _is_numeric(actual):
        return True
    if actual == SimpleType("<null>"):
        return isinstance(expected, (FutType,)) or (
            isinstance(expected, SimpleType)
            and expected.name not in ("Real", "Int", "Bool", "Unit"))
    return False


class _Checker:
    def __init__(self, program: HabsProgram):
        self.p = program
        self.diags: list = []
        self.classes = {c.name: c for c in program.classes}
        self.interfaces = {i.name: i for i in program.interfaces}
        # one implementing class per interface in this fragment
        self.impl = {}
        for c in program.classes:
            if c.implements and c.implements not in self.impl:
                self.impl[c.implements] = c.name

    def report(self, pos, msg):
        self.diags.append(Diagnostic(pos, msg))

    # -- types of expressions -------------------------------------------
    def expr_type(self, e, env, cls):
        if isinstance(e, ENum):
            return REAL
        if isinstance(e, EBool):
            return BOOL
        if isinstance(e, ENull):
            return SimpleType("<null>")
        if isinstance(e, EUnit):
            return UNIT
        if isinstance(e, EThis):
            if cls is None:
                self.report(e.pos, "`this` outside a class")
                return SimpleType("<error>")
            return SimpleType(cls.name)
        if isinstance(e, EVar):
            if e.name in env:
                return env[e.name]
            self.report(e.pos, f"unknown name {e.name!r}")
            return SimpleType("<error>")
        if isinstance(e, EUn):
            at = self.expr_type(e.arg, env, cls)
            if e.op == "!":
                if at != BOOL and at != SimpleType("<error>"):
                    self.report(e.pos, "operand of ! must be Bool")
                return BOOL
            if not _is_numeric(at) and at != SimpleType("<error>"):
                self.report(e.pos, "operand of unary - must be numeric")
            return at if _is_numeric(at) else REAL
        if isinstance(e, EBin):
            lt = self.expr_type(e.left, env, cls)
            rt = self.expr_type(e.right, env, cls)
            if e.op in ("&&", "||"):
                for t, side in ((lt, e.left), (rt, e.right)):
                    if t not in (BOOL, SimpleType("<error>")):
                        self.report(e.pos, f"operand of {e.op} must be Bool")
                return BOOL
            if e.op in ("<=", ">=", "<", ">"):
                for t in (lt, rt):
                    if not _is_numeric(t) and t != SimpleType("<error>"):
                        self.report(e.pos, f"operand of {e.op} must be numeric")
                return BOOL
            if e.op in ("==", "!="):
                return BOOL
            for t in (lt, rt):
                if not _is_numeric(t) and t != SimpleType("<error>"):
                    self.report(e.pos, f"operand of {e.op} must be numeric")
            return INT if lt == INT and rt == INT else REAL
        raise TypeError(type(e).__name__)

    def rhs_type(self, r, env, cls, pos):
        if isinstance(r, RExpr):
            return self.expr_type(r.expr, env, cls)
        if isinstance(r, RGet):
            ft = self.expr_type(r.expr, env, cls)
            if isinstance(ft, FutType):
                return ft.inner
            if ft != SimpleType("<error>"):
                self.report(pos, "get applied to a non-future expression")
            return SimpleType("<error>")
        if isinstance(r, RNew):
            c = self.classes.get(r.class_name)
            if c is None:
                self.report(pos, f"unknown class {r.class_name!r}")
                return SimpleType("<error>")
            self.check_args(r.args, c.params, env, cls, pos, f"new {c.name}")
            return SimpleType(c.name)
        if isinstance(r, RCall):
            ct = self.expr_type(r.callee, env, cls)
            target = self.resolve_class(ct, pos)
            if target is None:
                return SimpleType("<error>")
            try:
                m = target.method(r.method)
            except KeyError:
                self.report(pos, f"class {target.name} has no method {r.method!r}")
                return SimpleType("<error>")
            r.target_class = target.name
            self.check_args(r.args, m.params, env, cls, pos, f"{target.name}.{m.name}")
            return FutType(m.ret)
        raise TypeError(type(r).__name__)

    def resolve_class(self, t, pos):
        if not isinstance(t, SimpleType) or t.name in ("Real", "Int", "Bool", "Unit", "<null>"):
            if t != SimpleType("<error>"):
                self.report(pos, "call receiver is not an object")
            return None
        name = t.name
        if name in self.classes:
            return self.classes[name]
        if name in self.impl:
            return self.classes[self.impl[name]]
        self.report(pos, f"unknown class or interface {name!r}")
        return None

    def check_args(self, args, params, env, cls, pos, what):
        if len(args) != len(params):
            self.report(pos, f"{what} expects {len(params)} argument(s), got {len(args)}")
            return
        for a, (pt, pn) in zip(args, params):
            at = self.expr_type(a, env, cls)
            if at != SimpleType("<error>") and not _compatible(pt, at):
                self.report(pos, f"argument {pn!r} of {what} expects "
                                 f"{_show(pt)}, got {_show(at)}")

    # -- statements -------------------------------------------------------
    def check_block(self, block, env, cls, ret=None):
        for s in block:
            if isinstance(s, SAssign):
                rt = self.rhs_type(s.rhs, env, cls, s.pos)
                if s.target is not None:
                    if s.decl_type is not None:
                        env[s.target] = s.decl_type
                    et = env.get(s.target)
                    if et is None:
                        continue  # resolution already reported
                    if rt != SimpleType("<error>") and not _compatible(et, rt):
                        self.report(s.pos, f"cannot assign {_show(rt)} to "
                                           f"{s.target!r} of type {_show(et)}")
            elif isinstance(s, SAwait):
                g = s.guard
                if isinstance(g, GPoll):
                    gt = self.expr_type(g.expr, env, cls)
                    if not isinstance(gt, FutType) and gt != SimpleType("<error>"):
                        self.report(s.pos, "future poll on a non-future expression")
                elif isinstance(g, GDuration):
                    self.expect_numeric(g.expr, env, cls, s.pos, "duration guard")
                else:
                    self.expect_bool(g.expr, env, cls, s.pos, "differential guard")
            elif isinstance(s, SDuration):
                self.expect_numeric(s.expr, env, cls, s.pos, "duration")
            elif isinstance(s, SIf):
                self.expect_bool(s.cond, env, cls, s.pos, "if condition")
                self.check_block(s.then, env, cls, ret)
                self.check_block(s.els, env, cls, ret)
            elif isinstance(s, SWhile):
                self.expect_bool(s.cond, env, cls, s.pos, "while condition")
                self.check_block(s.body, env, cls, ret)
            elif isinstance(s, SReturn):
                rt = UNIT if s.expr is None else self.expr_type(s.expr, env, cls)
                if ret is not None and rt != SimpleType("<error>") and not _compatible(ret, rt):
                    self.report(s.pos, f"return type mismatch: expected "
                                       f"{_show(ret)}, got {_show(rt)}")
            elif isinstance(s, SSkip):
                pass

    def expect_bool(self, e, env, cls, pos, what):
        t = self.expr_type(e, env, cls)
        if t not in (BOOL, SimpleType("<error>")):
            self.report(pos, f"{what} must be Bool")

    def expect_numeric(self, e, env, cls, pos, what):
        t = self.expr_type(e, env, cls)
        if not _is_numeric(t) and t != SimpleType("<error>"):
            self.report(pos, f"{what} must be numeric")

    # -- contracts ----------------------------------------------------------
    def check_contract(self, expr, allowed_env, cls, what, pos):
        if expr is None:
            return
        before = len(self.diags)
        t = self.expr_type(expr, allowed_env, cls)
        for d in self.diags[before:]:
            if d.message.startswith("unknown name"):
                d.message = f"{d.message} ({what} may mention only "\
                            f"{', '.join(sorted(allowed_env)) or 'nothing'})"
        if t not in (BOOL, SimpleType("<error>")):
            self.report(pos, f"{what} must be Bool")

    # -- drive -------------------------------------------------------------
    def run(self):
        for c in self.p.classes:
            fields = {n: t for t, n in c.params}
            for ph in c.physical:
                fields[ph.name] = REAL
            for ph in c.physical:
                env = dict(fields)
                self.expect_numeric(ph.init, env, c, ph.pos, "initial value")
                self.expect_numeric(ph.deriv, env, c, ph.pos, "derivative")
                for v in _names(ph.deriv):
                    if v not in fields:
                        self.report(ph.pos, f"derivative of {ph.name} mentions "
                                            f"non-field {v!r}")
            if c.init_block is not None:
                self.check_block(c.init_block, dict(fields), c)
            for m in c.methods:
                env = dict(fields)
                env.update({n: t for t, n in m.params})
                self.check_block(m.body, env, c, ret=m.ret)
                self.check_contract(m.pre, {n: t for t, n in m.params}, c,
                                    f"precondition of {c.name}.{m.name}", m.pos)
                post_env = dict(fields)
                post_env["result"] = m.ret
                self.check_contract(m.post, post_env, c,
                                    f"postcondition of {c.name}.{m.name}", m.pos)
            self.check_contract(c.creation_condition, {n: t for t, n in c.params}, c,
                                f"creation condition of {c.name}", c.pos)
            self.check_contract(c.object_invariant, dict(fields), c,
                                f"object invariant of {c.name}", c.pos)
        self.check_block(self.p.main_block, {}, None)
        return self.diags


def _names(e):
    if isinstance(e, EVar):
        yield e.name
    elif isinstance(e, EUn):
        yield from _names(e.arg)
    elif isinstance(e, EBin):
        yield from _names(e.left)
        yield from _names(e.right)


def _show(t) -> str:
    if isinstance(t, FutType):
        return f"Fut<{_show(t.inner)}>"
    return t.name


def check_types(program: HabsProgram) -> list:
    """Diagnostics for the normalized program; empty means well typed."""
    return _Checker(program).run()
