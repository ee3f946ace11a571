"""Pretty-printer; parse . print . parse is a fixpoint on the AST."""

from __future__ import annotations

from .ast import (EBin, EBool, ENull, ENum, EThis, EUn, EUnit, EVar, FutType,
                  GDiff, GDuration, GPoll, HabsProgram, RCall, RExpr, RGet,
                  RNew, SAssign, SAwait, SDuration, SIf, SReturn, SSkip,
                  SWhile, SimpleType)

_PREC = {"||": 1, "&&": 2, "<=": 3, ">=": 3, "<": 3, ">": 3, "==": 3, "!=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5}


def print_type(t) -> str:
    if isinstance(t, FutType):
        return f"Fut<{print_type(t.inner)}>"
    assert isinstance(t, SimpleType)
    return t.name


def print_expr(e, prec: int = 0) -> str:
    if isinstance(e, EVar):
        return f"this.{e.name}" if e.this_qualified else e.name
    if isinstance(e, EThis):
        return "this"
    if isinstance(e, ENum):
        v = e.value
        if v.denominator == 1:
            return str(v.numerator)
        s = f"{v.numerator}/{v.denominator}"
        return f"({s})" if prec >= 5 else s
    if isinstance(e, EBool):
        return "true" if e.value else "false"
    if isinstance(e, ENull):
        return "null"
    if isinstance(e, EUnit):
        return "unit"
    if isinstance(e, EUn):
        return f"{e.op}{print_expr(e.arg, 6)}"
    if isinstance(e, EBin):
        p = _PREC[e.op]
        s = f"{print_expr(e.left, p)} {e.op} {print_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(type(e).__name__)


def print_rhs(r) -> str:
    if isinstance(r, RExpr):
        return print_expr(r.expr)
    if isinstance(r, RNew):
        return f"new {r.class_name}({', '.join(print_expr(a) for a in r.args)})"
    if isinstance(r, RGet):
        return f"{print_expr(r.expr, 6)}.get"
    if isinstance(r, RCall):
        return f"{print_expr(r.callee, 6)}!{r.method}({', '.join(print_expr(a) for a in r.args)})"
    raise TypeError(type(r).__name__)


def print_guard(g) -> str:
    if isinstance(g, GPoll):
        return f"{print_expr(g.expr, 6)}?"
    if isinstance(g, GDuration):
        return f"duration({print_expr(g.expr)})"
    assert isinstance(g, GDiff)
    return f"diff {print_expr(g.expr)}"


def print_stmt(s, ind: str) -> str:
    if isinstance(s, SSkip):
        return f"{ind}skip;"
    if isinstance(s, SAwait):
        return f"{ind}await {print_guard(s.guard)};"
    if isinstance(s, SDuration):
        return f"{ind}duration({print_expr(s.expr)});"
    if isinstance(s, SReturn):
        return f"{ind}return{'' if s.expr is None else ' ' + print_expr(s.expr)};"
    if isinstance(s, SAssign):
        head = ""
        if s.target is not None:
            head = f"{s.target} = "
            if s.decl_type is not None:
                head = f"{print_type(s.decl_type)} {head}"
        return f"{ind}{head}{print_rhs(s.rhs)};"
    if isinstance(s, SIf):
        out = [f"{ind}if ({print_expr(s.cond)}) {{"]
        out += [print_stmt(x, ind + "  ") for x in s.then]
        out.append(f"{ind}}}")
        if s.els:
            out.append(f"{ind}else {{")
            out += [print_stmt(x, ind + "  ") for x in s.els]
            out.append(f"{ind}}}")
        return "\n".join(out)
    if isinstance(s, SWhile):
        out = [f"{ind}while ({print_expr(s.cond)}) {{"]
        out += [print_stmt(x, ind + "  ") for x in s.body]
        out.append(f"{ind}}}")
        return "\n".join(out)
    raise TypeError(type(s).__name__)


def print_program(p: HabsProgram) -> str:
    out = []
    for i in p.interfaces:
        out.append(f"interface {i.name} {{")
        for m in i.methods:
            if m.pre is not None:
                out.append(f"  [HybridSpec: Requires({print_expr(m.pre)})]")
            if m.post is not None:
                out.append(f"  [HybridSpec: Ensures({print_expr(m.post)})]")
            if m.tactic is not None:
                out.append(f'  [HybridSpec: Tactic("{m.tactic}")]')
            params = ", ".join(f"{print_type(t)} {n}" for t, n in m.params)
            out.append(f"  {print_type(m.ret)} {m.name}({params});")
        out.append("}")
    for c in p.classes:
        if c.creation_condition is not None:
            out.append(f"[HybridSpec: Requires({print_expr(c.creation_condition)})]")
        if c.object_invariant is not None:
            out.append(f"[HybridSpec: ObjInv({print_expr(c.object_invariant)})]")
        params = ", ".join(f"{print_type(t)} {n}" for t, n in c.params)
        impl = f" implements {c.implements}" if c.implements else ""
        out.append(f"class {c.name}({params}){impl} {{")
        if c.physical:
            out.append("  physical {")
            for ph in c.physical:
                out.append(f"    Real {ph.name} = {print_expr(ph.init)} : "
                           f"{ph.name}' = {print_expr(ph.deriv)};")
            out.append("  }")
        if c.init_block is not None:
            out.append("  {")
            out += [print_stmt(s, "    ") for s in c.init_block]
            out.append("  }")
        for m in c.methods:
            if m.pre is not None:
                out.append(f"  [HybridSpec: Requires({print_expr(m.pre)})]")
            if m.post is not None:
                out.append(f"  [HybridSpec: Ensures({print_expr(m.post)})]")
            if m.tactic is not None:
                out.append(f'  [HybridSpec: Tactic("{m.tactic}")]')
            params = ", ".join(f"{print_type(t)} {n}" for t, n in m.params)
            out.append(f"  {print_type(m.ret)} {m.name}({params}) {{")
            out += [print_stmt(s, "    ") for s in m.body]
            out.append("  }")
        out.append("}")
    out.append("{")
    out += [print_stmt(s, "  ") for s in p.main_block]
    out.append("}")
    return "\n".join(out) + "\n"
