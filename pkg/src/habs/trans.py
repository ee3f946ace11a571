"""Translation of language expressions and guards into dL terms/formulas.

Fields, parameters and the reserved symbols keep their names; local
variables get method-qualified names so that all dL variables are
program-wide unique.
"""

from __future__ import annotations

from typing import Mapping, Optional

from . import dl
from .lang.ast import (EBin, EBool, ENull, ENum, EThis, EUn, EUnit, EVar,
                       GDiff, GDuration, GPoll, Guard)


class TransError(Exception):
    pass


def term(e, rename: Optional[Mapping[str, str]] = None) -> dl.Term:
    """Numeric expression to a dL term."""
    if isinstance(e, ENum):
        return dl.Num(e.value)
    if isinstance(e, EVar):
        name = e.name
        if rename and name in rename:
            name = rename[name]
        return dl.Var(name)
    if isinstance(e, EUn):
        if e.op == "-":
            arg = term(e.arg, rename)
            if isinstance(arg, dl.Num):
                return dl.Num(-arg.value)
            return dl.Minus(arg)
        raise TransError(f"operator {e.op!r} is not a term operator")
    if isinstance(e, EBin):
        if e.op in ("+", "-", "*", "/"):
            left = term(e.left, rename)
            right = term(e.right, rename)
            if e.op == "/" and isinstance(left, dl.Num) and isinstance(right, dl.Num):
                if right.value == 0:
                    raise TransError("division by the literal zero")
                return dl.Num(left.value / right.value)
            return dl.BinOp(e.op, left, right)
        raise TransError(f"operator {e.op!r} is not a term operator")
    if isinstance(e, (EBool, ENull, EUnit, EThis)):
        raise TransError(f"{type(e).__name__} has no term translation")
    raise TransError(f"untranslatable expression {type(e).__name__}")


_REL = {"<=": "<=", ">=": ">=", "<": "<", ">": ">", "==": "="}


def formula(e, rename: Optional[Mapping[str, str]] = None) -> dl.Formula:
    """Boolean expression to a dL formula."""
    if isinstance(e, EBool):
        return dl.TRUE if e.value else dl.FALSE
    if isinstance(e, EUn) and e.op == "!":
        return dl.Not(formula(e.arg, rename))
    if isinstance(e, EBin):
        if e.op == "&&":
            return dl.And(formula(e.left, rename), formula(e.right, rename))
        if e.op == "||":
            return dl.Or(formula(e.left, rename), formula(e.right, rename))
        if e.op in _REL:
            return dl.Cmp(_REL[e.op], term(e.left, rename), term(e.right, rename))
        if e.op == "!=":
            return dl.Not(dl.Cmp("=", term(e.left, rename), term(e.right, rename)))
    raise TransError(f"expression has no formula translation: {type(e).__name__}")


def guard_formula(g: Guard, rename: Optional[Mapping[str, str]] = None) -> dl.Formula:
    """trans(g): the guard expression for diff guards, true otherwise."""
    if isinstance(g, GDiff):
        return formula(g.expr, rename)
    return dl.TRUE


def external_trigger(g: Guard, rename: Optional[Mapping[str, str]] = None) -> dl.Formula:
    """Condition over fields and the clock t under which the guard fires:
    the guard expression for diff guards, ``t >= e`` for duration guards and
    ``false`` for future polls (nothing can be said about resolution)."""
    if isinstance(g, GDiff):
        return formula(g.expr, rename)
    if isinstance(g, GDuration):
        return dl.Cmp(">=", dl.Var("t"), term(g.expr, rename))
    if isinstance(g, GPoll):
        return dl.FALSE
    raise TransError(f"unknown guard {type(g).__name__}")
