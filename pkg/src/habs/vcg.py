"""Proof-obligation generation: statement translation into dL and the
per-member obligation scheme, emitted as prover-ready archive files.

One obligation is generated per constructor, method and main block:

- method:  I_C /\\ pre /\\ cll = 0 -> [trans(body)](cll = 0 /\\ post /\\ pr)
- init:    pre_C /\\ cll = 0     -> [trans(init)](cll = 0 /\\ pr)
- main:    cll = 0               -> [trans(main)] cll = 0

where ``pr`` installs the chosen generator's post-region as the evolution
domain of the class dynamics.  ``cll`` tracks intermediate contract
violations (``fail`` sets it to 1), ``havoc`` assigns all fields anew,
``havoc_ph`` only the physical ones.

The leading await that normalization guarantees translates to a plain test
of its guard: the obligation's antecedent already assumes the invariant at
scheduling, and fresh processes have no suspension there to protect.
Vacuous ``?true`` tests are kept so that emitted files are stable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import dl, trans
from .analysis import PostRegionGenerator, frame_exempt
from .lang.ast import (ClassDecl, HabsProgram, MethodDecl, RCall, RExpr,
                       RGet, RNew, SAssign, SAwait, SDuration, SIf, SReturn,
                       SSkip, SWhile)

ZERO = dl.Num(Fraction(0))
ONE = dl.Num(Fraction(1))
CLL0 = dl.Cmp("=", dl.Var("cll"), ZERO)
FAIL = dl.Assign("cll", ONE)


class VcgError(Exception):
    pass


@dataclass
class TranslationContext:
    cls: Optional[ClassDecl]
    program: HabsProgram
    generator: PostRegionGenerator
    member: str = "main"
    locals_map: dict = field(default_factory=dict)
    _fresh: int = 0

    @property
    def invariant(self) -> dl.Formula:
        if self.cls is None or self.cls.object_invariant is None:
            return dl.TRUE
        return trans.formula(self.cls.object_invariant)

    @property
    def ode(self) -> dl.Ode:
        eqs = tuple((ph.name, trans.term(ph.deriv)) for ph in (self.cls.physical if self.cls else []))
        return dl.Ode(eqs, dl.TRUE)

    def pr(self, psi: dl.Formula) -> dl.Formula:
        return dl.build_pr(psi, self.invariant, self.ode)

    def region(self, key) -> dl.Formula:
        return self.generator.region(self.cls.name, key)

    def havoc_all(self) -> dl.Program:
        names = self.cls.field_names()
        return dl.seq([dl.Havoc(n) for n in names])

    def havoc_physical(self) -> dl.Program:
        return dl.seq([dl.Havoc(n) for n in self.cls.physical_names()])

    def rename(self, name: str) -> dict:
        return self.locals_map

    def local(self, name: str) -> str:
        return self.locals_map.get(name, name)

    def fresh_future(self) -> str:
        self._fresh += 1
        return f"{self.member}_fut{self._fresh}"

    def precondition_of_call(self, rhs: RCall) -> dl.Formula:
        cls = self._target_class(rhs)
        if cls is None:
            return dl.TRUE
        try:
            m = cls.method(rhs.method)
        except KeyError:
            raise VcgError(f"call to unknown method {rhs.method!r}") from None
        if m.pre is None:
            return dl.TRUE
        pre = trans.formula(m.pre)
        return substitute(pre, self._args_for(pre, m.params, rhs.args))

    def _target_class(self, rhs: RCall) -> Optional[ClassDecl]:
        if rhs.target_class is not None:
            return self.program.cls(rhs.target_class)
        from .lang.ast import EThis
        if isinstance(rhs.callee, EThis) and self.cls is not None:
            return self.cls
        for c in self.program.classes:
            if any(m.name == rhs.method for m in c.methods):
                return c
        return None

    def creation_condition(self, rhs: RNew) -> dl.Formula:
        try:
            c = self.program.cls(rhs.class_name)
        except KeyError:
            raise VcgError(f"new of unknown class {rhs.class_name!r}") from None
        if c.creation_condition is None:
            return dl.TRUE
        pre = trans.formula(c.creation_condition)
        return substitute(pre, self._args_for(pre, c.params, rhs.args))

    def _args_for(self, pre: dl.Formula, params, args) -> dict:
        """Terms for exactly the parameters the contract mentions; object
        and future arguments never reach a formula."""
        mentioned = dl.free_variables(pre)
        return {pn: trans.term(a, self.locals_map)
                for (_, pn), a in zip(params, args) if pn in mentioned}


def substitute(f: dl.Formula, mapping: dict) -> dl.Formula:
    """Capture-free substitution of variables by terms (obligations do not
    quantify over contract parameters, so no renaming is needed)."""
    def t(x):
        if isinstance(x, dl.Var):
            return mapping.get(x.name, x)
        if isinstance(x, dl.Num):
            return x
        if isinstance(x, dl.Minus):
            return dl.Minus(t(x.arg))
        if isinstance(x, dl.BinOp):
            return dl.BinOp(x.op, t(x.left), t(x.right))
        raise VcgError(f"substitute: unknown term {type(x).__name__}")

    def go(x):
        if isinstance(x, (dl.TrueF, dl.FalseF)):
            return x
        if isinstance(x, dl.Cmp):
            return dl.Cmp(x.rel, t(x.left), t(x.right))
        if isinstance(x, dl.Not):
            return dl.Not(go(x.arg))
        if isinstance(x, (dl.And, dl.Or, dl.Implies)):
            return type(x)(go(x.left), go(x.right))
        raise VcgError(f"substitute: unsupported formula {type(x).__name__}")

    return go(f)


# ---------------------------------------------------------------------------
# statement translation (everything but the leading await of a method body)

def trans_stmt(s, ctx: TranslationContext) -> Optional[dl.Program]:
    """Returns None for statements with an empty translation (return unit)."""
    if isinstance(s, SSkip):
        return dl.Test(dl.TRUE)
    if isinstance(s, SReturn):
        if s.expr is None:
            return None
        return dl.Assign("result", trans.term(s.expr, ctx.locals_map))
    if isinstance(s, SIf):
        cond = trans.formula(s.cond, ctx.locals_map)
        then = trans_block(s.then, ctx)
        if s.els:
            return dl.Choice(dl.Seq(dl.Test(cond), then),
                             dl.Seq(dl.Test(dl.Not(cond)), trans_block(s.els, ctx)))
        return dl.Choice(dl.Seq(dl.Test(cond), then), dl.Test(dl.Not(cond)))
    if isinstance(s, SWhile):
        cond = trans.formula(s.cond, ctx.locals_map)
        body = trans_block(s.body, ctx)
        return dl.Seq(dl.Loop(dl.Seq(dl.Test(cond), body)), dl.Test(dl.Not(cond)))
    if isinstance(s, SAwait):
        g = trans.guard_formula(s.guard, ctx.locals_map)
        psi = dl.conj([ctx.region(s.point), dl.weak_negate(g)])
        ok = dl.seq([dl.Test(ctx.pr(psi)), ctx.havoc_all(),
                     dl.Test(dl.conj([g, ctx.invariant]))])
        bad = dl.seq([dl.Test(dl.Not(ctx.pr(psi))), FAIL, ctx.havoc_all(), dl.Test(g)])
        return dl.Choice(ok, bad)
    if isinstance(s, SDuration):
        e = trans.term(s.expr, ctx.locals_map)
        bound = dl.Cmp("<=", dl.Var("t"), e)
        check = dl.Choice(dl.Test(ctx.pr(bound)),
                          dl.Seq(dl.Test(dl.Not(ctx.pr(bound))), FAIL))
        flow = dl.Ode(ctx.ode.eqs + (("t", ONE),), bound)
        return dl.seq([dl.Assign("t", ZERO), check, dl.Assign("t", ZERO),
                       flow, dl.Test(dl.Cmp(">=", dl.Var("t"), e))])
    if isinstance(s, SAssign):
        return _trans_assign(s, ctx)
    raise VcgError(f"statement outside the normalized fragment: {type(s).__name__}")


def _trans_assign(s: SAssign, ctx: TranslationContext) -> dl.Program:
    rhs = s.rhs
    target = None
    if s.target is not None:
        target = ctx.local(s.target) if s.target_kind == "local" else s.target
    if isinstance(rhs, RExpr):
        if target is None:
            return dl.Test(dl.TRUE)  # a pure expression statement has no effect
        return dl.Assign(target, trans.term(rhs.expr, ctx.locals_map))
    if isinstance(rhs, RCall):
        pre = ctx.precondition_of_call(rhs)
        check = dl.Choice(dl.Test(pre), dl.Seq(dl.Test(dl.Not(pre)), FAIL))
        return dl.Seq(check, dl.Havoc(target if target else ctx.fresh_future()))
    if isinstance(rhs, RNew):
        pre = ctx.creation_condition(rhs)
        check = dl.Choice(dl.Test(pre), dl.Seq(dl.Test(dl.Not(pre)), FAIL))
        return dl.Seq(check, dl.Havoc(target if target else ctx.fresh_future()))
    if isinstance(rhs, RGet):
        if target is None:
            target = ctx.fresh_future()
        ok = dl.seq([dl.Test(ctx.pr(dl.TRUE)), ctx.havoc_physical(),
                     dl.Test(ctx.invariant), dl.Havoc(target)])
        bad = dl.seq([dl.Test(dl.Not(ctx.pr(dl.TRUE))), FAIL,
                      ctx.havoc_physical(), dl.Havoc(target)])
        return dl.Choice(ok, bad)
    raise VcgError(f"unknown right-hand side {type(rhs).__name__}")


def trans_block(stmts, ctx: TranslationContext) -> dl.Program:
    parts = [p for p in (trans_stmt(s, ctx) for s in stmts) if p is not None]
    return dl.seq(parts)


# ---------------------------------------------------------------------------
# obligations

@dataclass
class Obligation:
    name: str               # Class.member, or "main"
    kind: str               # init | method | main
    formula: dl.Formula
    tactic: Optional[str] = None
    exempt: bool = False    # frame-exempt under the basic generator

    def declared_variables(self) -> set:
        return dl.free_variables(self.formula) | {"t", "cll"}

    def render(self) -> str:
        assert isinstance(self.formula, dl.Implies)
        return dl.render_keymaerax(self.name, self.formula.left,
                                   self.formula.right, self.declared_variables())


def _locals_map(member: str, locals_: dict) -> dict:
    return {name: f"{member}_{name}" for name in locals_}


def obligation_method(c: ClassDecl, m: MethodDecl, ctx: TranslationContext) -> Obligation:
    ctx = TranslationContext(c, ctx.program, ctx.generator, member=m.name,
                             locals_map=_locals_map(m.name, m.locals))
    if not m.body or not isinstance(m.body[0], SAwait):
        raise VcgError(f"method {c.name}.{m.name} is not suspension-leading")
    lead = dl.Test(trans.guard_formula(m.body[0].guard, ctx.locals_map))
    body = dl.seq([lead] + [p for p in (trans_stmt(s, ctx) for s in m.body[1:])
                            if p is not None])
    pre = trans.formula(m.pre) if m.pre is not None else dl.TRUE
    post = trans.formula(m.post) if m.post is not None else dl.TRUE
    antecedent = dl.conj([ctx.invariant, pre, CLL0])
    goal = dl.conj([CLL0, post, ctx.pr(ctx.region(m.name))])
    return Obligation(f"{c.name}.{m.name}", "method",
                      dl.Implies(antecedent, dl.Box(body, goal)), tactic=m.tactic,
                      exempt=frame_exempt(m, c))


def obligation_init(c: ClassDecl, ctx: TranslationContext) -> Obligation:
    ctx = TranslationContext(c, ctx.program, ctx.generator, member="init",
                             locals_map=_locals_map("init", c.init_locals))
    parts = [dl.Test(dl.TRUE)]  # scheduling of the fresh init process
    for ph in c.physical:
        parts.append(dl.Assign(ph.name, trans.term(ph.init)))
    if c.init_block is not None:
        for s in c.init_block:
            p = trans_stmt(s, ctx)
            if p is not None:
                parts.append(p)
    body = dl.seq(parts)
    pre = trans.formula(c.creation_condition) if c.creation_condition is not None else dl.TRUE
    antecedent = dl.conj([pre, CLL0])
    goal = dl.conj([CLL0, ctx.pr(ctx.region("init"))])
    return Obligation(f"{c.name}.init", "init",
                      dl.Implies(antecedent, dl.Box(body, goal)))


def obligation_main(p: HabsProgram, ctx: TranslationContext) -> Obligation:
    ctx = TranslationContext(None, p, ctx.generator, member="main",
                             locals_map=_locals_map("main", p.main_locals))
    body = trans_block(p.main_block, ctx) if p.main_block else dl.Test(dl.TRUE)
    return Obligation("main", "main", dl.Implies(CLL0, dl.Box(body, CLL0)))


def obligations(p: HabsProgram, generator: PostRegionGenerator) -> list:
    """All obligations of a program in deterministic order (classes in
    declaration order: init then methods; main last)."""
    ctx = TranslationContext(None, p, generator)
    out = []
    for c in p.classes:
        out.append(obligation_init(c, ctx))
        for m in c.methods:
            out.append(obligation_method(c, m, ctx))
    out.append(obligation_main(p, ctx))
    return out


# ---------------------------------------------------------------------------
# emission

def emit(p: HabsProgram, generator: PostRegionGenerator, out_dir: str,
         exempt_frames: bool = True) -> list:
    """Write one ``.kyx`` archive entry per obligation plus ``manifest.txt``;
    tactic annotations go verbatim into ``.kyt`` sidecars.  Frame-exempt
    methods are skipped under the basic generator; the manifest records the
    exemption.  Returns the list of written file paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    manifest = []
    for ob in obligations(p, generator):
        skipped = ob.exempt and exempt_frames and generator.kind == "basic"
        manifest.append("\t".join([
            ob.name, ob.kind, generator.kind,
            "exempt" if skipped else "obligated",
            "tactic" if ob.tactic else "-",
        ]))
        if skipped:
            continue
        path = os.path.join(out_dir, f"{ob.name}.kyx")
        with open(path, "w") as fh:
            fh.write(ob.render())
        written.append(path)
        if ob.tactic:
            tpath = os.path.join(out_dir, f"{ob.name}.kyt")
            with open(tpath, "w") as fh:
                fh.write(ob.tactic + "\n")
            written.append(tpath)
    mpath = os.path.join(out_dir, "manifest.txt")
    with open(mpath, "w") as fh:
        fh.write("\n".join(manifest) + "\n")
    written.append(mpath)
    return written
