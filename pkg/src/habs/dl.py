"""Differential dynamic logic: terms, formulas, hybrid programs.

This is the compilation target of the toolchain.  The module provides
construction helpers that enforce the structural invariants, weak negation,
the post-region formula builder ``build_pr``, free-variable computation,
and a deterministic text rendering compatible with the KeYmaera X archive
format plus a reader for exactly that rendering (round-trip property).

All node types are immutable; everything here is referentially transparent.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Union

import numpy as np


class DlError(Exception):
    """Malformed construction or use of a dL object."""


# ---------------------------------------------------------------------------
# terms

@dataclass(frozen=True)
class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __post_init__(self):
        if not self.name:
            raise DlError("variable identifier must be nonempty")


@dataclass(frozen=True)
class Num(Term):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Minus(Term):
    arg: Term


@dataclass(frozen=True)
class BinOp(Term):
    op: str  # one of + - * /
    left: Term
    right: Term

    def __post_init__(self):
        if self.op not in ("+", "-", "*", "/"):
            raise DlError(f"unknown term operator {self.op!r}")
        if self.op == "/" and isinstance(self.right, Num) and self.right.value == 0:
            raise DlError("division by the literal zero")


def num(x) -> Num:
    """Exact rational literal from int, Fraction or a decimal string."""
    if isinstance(x, float):
        # floats only enter via tests; keep them exact through the repr
        return Num(Fraction(repr(x)))
    return Num(Fraction(x))


# ---------------------------------------------------------------------------
# formulas

@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Cmp(Formula):
    rel: str  # one of <= >= = < >
    left: Term
    right: Term

    def __post_init__(self):
        if self.rel not in ("<=", ">=", "=", "<", ">"):
            raise DlError(f"unknown relation {self.rel!r}")


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Box(Formula):
    prog: "Program"
    post: Formula


TRUE = TrueF()
FALSE = FalseF()


def conj(parts: Iterable[Formula]) -> Formula:
    """Right-associated conjunction; true conjuncts dropped, empty -> true."""
    items = [p for p in parts if not isinstance(p, TrueF)]
    if not items:
        return TRUE
    out = items[-1]
    for p in reversed(items[:-1]):
        out = And(p, out)
    return out


def disj(parts: Iterable[Formula]) -> Formula:
    items = [p for p in parts if not isinstance(p, FalseF)]
    if not items:
        return FALSE
    out = items[-1]
    for p in reversed(items[:-1]):
        out = Or(p, out)
    return out


# ---------------------------------------------------------------------------
# hybrid programs

@dataclass(frozen=True)
class Program:
    pass


@dataclass(frozen=True)
class Assign(Program):
    var: str
    term: Term


@dataclass(frozen=True)
class Havoc(Program):
    var: str


@dataclass(frozen=True)
class Test(Program):
    cond: Formula


@dataclass(frozen=True)
class Choice(Program):
    left: Program
    right: Program


@dataclass(frozen=True)
class Seq(Program):
    first: Program
    second: Program


@dataclass(frozen=True)
class Loop(Program):
    body: Program


@dataclass(frozen=True)
class Ode(Program):
    eqs: tuple  # tuple of (variable name, Term)
    domain: Formula

    def __post_init__(self):
        names = [v for v, _ in self.eqs]
        if len(set(names)) != len(names):
            raise DlError("ODE left-hand variables must be pairwise distinct")


def seq(parts: Iterable[Program]) -> Program:
    """Right-associated sequence of programs; empty sequence -> ?true."""
    items = list(parts)
    if not items:
        return Test(TRUE)
    out = items[-1]
    for p in reversed(items[:-1]):
        out = Seq(p, out)
    return out


# ---------------------------------------------------------------------------
# weak negation

def weak_negate(f: Formula) -> Formula:
    """Negation pushed to literals, flipping weak inequalities.

    ``<=`` and ``>=`` swap, equality is kept self-dual so that event
    boundaries are preserved.  Strict atoms, modalities and quantifiers are
    rejected: the language's guards carry only weak relations, so this is
    deliberately partial.
    """
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Cmp):
        if f.rel == "<=":
            return Cmp(">=", f.left, f.right)
        if f.rel == ">=":
            return Cmp("<=", f.left, f.right)
        if f.rel == "=":
            return f
        raise DlError(f"weak negation undefined for strict relation {f.rel!r}")
    if isinstance(f, Not):
        # classical double negation; the argument is left in place
        return f.arg
    if isinstance(f, And):
        return Or(weak_negate(f.left), weak_negate(f.right))
    if isinstance(f, Or):
        return And(weak_negate(f.left), weak_negate(f.right))
    if isinstance(f, Implies):
        return And(f.left, weak_negate(f.right))
    raise DlError(f"weak negation undefined for {type(f).__name__}")


# ---------------------------------------------------------------------------
# post-region formula

def build_pr(psi: Formula, inv: Formula, ode: Program) -> Formula:
    """inv /\\ [t := 0; {ode, t' = 1 & psi}] inv

    ``ode`` is the class dynamics without the clock; ``t' = 1`` is appended
    after the class equations and the given region becomes the evolution
    domain.
    """
    if not isinstance(ode, Ode):
        raise DlError("build_pr needs an ODE as third argument")
    if any(v == "t" for v, _ in ode.eqs):
        raise DlError("class ODE must not already bind the clock t")
    clocked = Ode(ode.eqs + (("t", Num(Fraction(1))),), psi)
    return And(inv, Box(Seq(Assign("t", Num(Fraction(0))), clocked), inv))


# ---------------------------------------------------------------------------
# free variables

def free_variables(x: Union[Term, Formula, Program]) -> set:
    """Variables read or assigned anywhere, quantifier-bound ones excluded."""
    if isinstance(x, Var):
        return {x.name}
    if isinstance(x, Num):
        return set()
    if isinstance(x, Minus):
        return free_variables(x.arg)
    if isinstance(x, BinOp):
        return free_variables(x.left) | free_variables(x.right)
    if isinstance(x, (TrueF, FalseF)):
        return set()
    if isinstance(x, Cmp):
        return free_variables(x.left) | free_variables(x.right)
    if isinstance(x, Not):
        return free_variables(x.arg)
    if isinstance(x, (And, Or, Implies)):
        return free_variables(x.left) | free_variables(x.right)
    if isinstance(x, Exists):
        return free_variables(x.body) - {x.var}
    if isinstance(x, Box):
        return free_variables(x.prog) | free_variables(x.post)
    if isinstance(x, Assign):
        return {x.var} | free_variables(x.term)
    if isinstance(x, Havoc):
        return {x.var}
    if isinstance(x, Test):
        return free_variables(x.cond)
    if isinstance(x, (Choice, Seq)):
        a = x.left if isinstance(x, Choice) else x.first
        b = x.right if isinstance(x, Choice) else x.second
        return free_variables(a) | free_variables(b)
    if isinstance(x, Loop):
        return free_variables(x.body)
    if isinstance(x, Ode):
        out = free_variables(x.domain)
        for v, t in x.eqs:
            out |= {v} | free_variables(t)
        return out
    raise DlError(f"free_variables: unknown node {type(x).__name__}")


# ---------------------------------------------------------------------------
# normalization (structural comparison form)

def normalize(x):
    """Right-associates /\\, \\/ and ; chains and folds signed literals.

    This is the normal form used for golden comparisons; no logical
    simplification happens beyond -(literal) -> negative literal.
    """
    if isinstance(x, Minus):
        a = normalize(x.arg)
        if isinstance(a, Num):
            return Num(-a.value)
        return Minus(a)
    if isinstance(x, (Var, Num)):
        return x
    if isinstance(x, BinOp):
        return BinOp(x.op, normalize(x.left), normalize(x.right))
    if isinstance(x, (TrueF, FalseF)):
        return x
    if isinstance(x, Cmp):
        return Cmp(x.rel, normalize(x.left), normalize(x.right))
    if isinstance(x, Not):
        return Not(normalize(x.arg))
    if isinstance(x, And):
        parts = [normalize(p) for p in _flatten(x, And, "left", "right")]
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = And(p, out)
        return out
    if isinstance(x, Or):
        parts = [normalize(p) for p in _flatten(x, Or, "left", "right")]
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Or(p, out)
        return out
    if isinstance(x, Implies):
        return Implies(normalize(x.left), normalize(x.right))
    if isinstance(x, Exists):
        return Exists(x.var, normalize(x.body))
    if isinstance(x, Box):
        return Box(normalize(x.prog), normalize(x.post))
    if isinstance(x, Assign):
        return Assign(x.var, normalize(x.term))
    if isinstance(x, Havoc):
        return x
    if isinstance(x, Test):
        return Test(normalize(x.cond))
    if isinstance(x, Choice):
        return Choice(normalize(x.left), normalize(x.right))
    if isinstance(x, Seq):
        parts = [normalize(p) for p in _flatten(x, Seq, "first", "second")]
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Seq(p, out)
        return out
    if isinstance(x, Loop):
        return Loop(normalize(x.body))
    if isinstance(x, Ode):
        return Ode(tuple((v, normalize(t)) for v, t in x.eqs), normalize(x.domain))
    raise DlError(f"normalize: unknown node {type(x).__name__}")


def _flatten(x, cls, a, b) -> Iterator:
    if isinstance(x, cls):
        yield from _flatten(getattr(x, a), cls, a, b)
        yield from _flatten(getattr(x, b), cls, a, b)
    else:
        yield x


def alpha_equal(f: Formula, g: Formula) -> bool:
    """Structural equality after normalization (no bound-variable renaming
    is needed here: obligations never shadow names)."""
    return normalize(f) == normalize(g)


# ---------------------------------------------------------------------------
# evaluation over valuations (monitoring, truth tables, the §-style
# procedure bodies); works transparently on scalars and numpy arrays.

def eval_term(t: Term, val) -> object:
    if isinstance(t, Var):
        try:
            return val[t.name]
        except KeyError:
            raise DlError(f"unbound variable {t.name!r}") from None
    if isinstance(t, Num):
        return float(t.value)
    if isinstance(t, Minus):
        return -eval_term(t.arg, val)
    if isinstance(t, BinOp):
        a = eval_term(t.left, val)
        b = eval_term(t.right, val)
        if t.op == "+":
            return a + b
        if t.op == "-":
            return a - b
        if t.op == "*":
            return a * b
        if np.any(b == 0):
            raise DlError("division by zero during evaluation")
        return a / b
    raise DlError(f"eval_term: unknown node {type(t).__name__}")


def eval_formula(f: Formula, val, slack: float = 0.0):
    """Truth of a modality-free, quantifier-free formula.

    ``slack`` skews comparisons toward satisfaction to absorb numeric event
    localization error.
    """
    if isinstance(f, TrueF):
        return np.bool_(True)
    if isinstance(f, FalseF):
        return np.bool_(False)
    if isinstance(f, Cmp):
        a = eval_term(f.left, val)
        b = eval_term(f.right, val)
        if f.rel in ("<=", "<"):
            return np.less_equal(a, b + slack) if f.rel == "<=" else np.less(a, b + slack)
        if f.rel in (">=", ">"):
            return np.greater_equal(a, b - slack) if f.rel == ">=" else np.greater(a, b - slack)
        return np.less_equal(np.abs(a - b), slack) if slack else np.equal(a, b)
    if isinstance(f, Not):
        return np.logical_not(eval_formula(f.arg, val, slack))
    if isinstance(f, And):
        return np.logical_and(eval_formula(f.left, val, slack), eval_formula(f.right, val, slack))
    if isinstance(f, Or):
        return np.logical_or(eval_formula(f.left, val, slack), eval_formula(f.right, val, slack))
    if isinstance(f, Implies):
        return np.logical_or(np.logical_not(eval_formula(f.left, val, slack)),
                             eval_formula(f.right, val, slack))
    raise DlError(f"cannot evaluate {type(f).__name__} over a valuation")


def atoms(f: Formula) -> list:
    """Distinct comparison atoms in first-occurrence order."""
    out: list = []

    def walk(g):
        if isinstance(g, Cmp):
            if g not in out:
                out.append(g)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or, Implies)):
            walk(g.left)
            walk(g.right)
        elif not isinstance(g, (TrueF, FalseF)):
            raise DlError("atoms: formula is not propositional")

    walk(f)
    return out


def eval_prop(f: Formula, assignment) -> bool:
    """Evaluate treating each comparison atom as an opaque proposition."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Cmp):
        return assignment[f]
    if isinstance(f, Not):
        return not eval_prop(f.arg, assignment)
    if isinstance(f, And):
        return eval_prop(f.left, assignment) and eval_prop(f.right, assignment)
    if isinstance(f, Or):
        return eval_prop(f.left, assignment) or eval_prop(f.right, assignment)
    if isinstance(f, Implies):
        return (not eval_prop(f.left, assignment)) or eval_prop(f.right, assignment)
    raise DlError("eval_prop: formula is not propositional")


def equivalent_truth_table(f: Formula, g: Formula, limit: int = 16) -> bool:
    """Propositional equivalence by truth table over the union of atoms."""
    ats = atoms(f)
    for a in atoms(g):
        if a not in ats:
            ats.append(a)
    if len(ats) > limit:
        raise DlError(f"too many atoms for a truth table: {len(ats)}")
    for bits in range(1 << len(ats)):
        assignment = {a: bool(bits >> i & 1) for i, a in enumerate(ats)}
        if eval_prop(f, assignment) != eval_prop(g, assignment):
            return False
    return True


def is_propositional(f: Formula) -> bool:
    try:
        atoms(f)
        return True
    except DlError:
        return False


# ---------------------------------------------------------------------------
# rendering
#
# Normal form: sequences right-associated, parentheses always emitted around
# choice and loop, tests and quantified/boxed bodies always parenthesized.
# Rational literals render exactly (numerator/denominator), so files are
# bit-stable.

_TERM_PREC = {"+": 10, "-": 10, "*": 20, "/": 20}


def render_term(t: Term, prec: int = 0) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Num):
        v = t.value
        if v < 0:
            return render_term(Minus(Num(-v)), prec)
        s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        if v.denominator != 1 and prec >= 20:
            return f"({s})"
        return s
    if isinstance(t, Minus):
        inner = render_term(t.arg, 30)
        s = f"-{inner}"
        return f"({s})" if prec > 10 else s
    if isinstance(t, BinOp):
        p = _TERM_PREC[t.op]
        left = render_term(t.left, p)
        right = render_term(t.right, p + 1)
        s = f"{left} {t.op} {right}" if t.op in ("+", "-") else f"{left}{t.op}{right}"
        return f"({s})" if p < prec else s
    raise DlError(f"render_term: unknown node {type(t).__name__}")


# formula precedence: -> (1) < | (2) < & (3) < atoms
def render_formula(f: Formula, prec: int = 0) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Cmp):
        return f"{render_term(f.left)} {f.rel} {render_term(f.right)}"
    if isinstance(f, Not):
        return f"!({render_formula(f.arg)})"
    if isinstance(f, And):
        s = f"{render_formula(f.left, 4)} & {render_formula(f.right, 3)}"
        return f"({s})" if prec > 3 else s
    if isinstance(f, Or):
        s = f"{render_formula(f.left, 3)} | {render_formula(f.right, 2)}"
        return f"({s})" if prec > 2 else s
    if isinstance(f, Implies):
        s = f"{render_formula(f.left, 2)} -> {render_formula(f.right, 1)}"
        return f"({s})" if prec > 1 else s
    if isinstance(f, Exists):
        return f"\\exists {f.var} ({render_formula(f.body)})"
    if isinstance(f, Box):
        return f"[{render_program(f.prog)}]({render_formula(f.post)})"
    raise DlError(f"render_formula: unknown node {type(f).__name__}")


def render_program(p: Program) -> str:
    if isinstance(p, Assign):
        return f"{p.var} := {render_term(p.term)}"
    if isinstance(p, Havoc):
        return f"{p.var} := *"
    if isinstance(p, Test):
        return f"?({render_formula(p.cond)})"
    if isinstance(p, Choice):
        return f"{{{render_program(p.left)} ++ {render_program(p.right)}}}"
    if isinstance(p, Seq):
        return f"{render_program(p.first)}; {render_program(p.second)}"
    if isinstance(p, Loop):
        return f"{{{render_program(p.body)}}}*"
    if isinstance(p, Ode):
        eqs = ", ".join(f"{v}' = {render_term(t)}" for v, t in p.eqs)
        return f"{{{eqs} & {render_formula(p.domain)}}}"
    raise DlError(f"render_program: unknown node {type(p).__name__}")


def render_keymaerax(name: str, assumptions: Formula, goal: Formula,
                     declared: Iterable[str]) -> str:
    """One archive entry: declarations of real program variables plus the
    problem formula ``assumptions -> goal``."""
    declared = set(declared)
    used = free_variables(assumptions) | free_variables(goal)
    missing = sorted(used - declared)
    if missing:
        raise DlError(f"undeclared free variables: {', '.join(missing)}")
    lines = [f'ArchiveEntry "{name}"', "", "ProgramVariables"]
    for v in sorted(declared):
        lines.append(f"  Real {v};")
    lines += ["End.", "", "Problem",
              f"  {render_formula(Implies(assumptions, goal))}",
              "End.", "", "End.", ""]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# reader for the rendering above

class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos

    def __repr__(self):
        return f"{self.kind}:{self.text}"


_SYMBOLS = ["\\exists", "++", ":=", "<=", ">=", "->", "(", ")", "[", "]",
            "{", "}", "?", ";", ",", "&", "|", "!", "=", "<", ">", "+",
            "-", "*", "/", "'"]


def _lex(src: str) -> list:
    toks = []
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c == '"':
            j = src.index('"', i + 1)
            toks.append(_Tok("str", src[i + 1:j], i))
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            toks.append(_Tok("num", src[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Tok("id", src[i:j], i))
            i = j
            continue
        for s in _SYMBOLS:
            if src.startswith(s, i):
                toks.append(_Tok(s, s, i))
                i += len(s)
                break
        else:
            raise DlError(f"unexpected character {c!r} at offset {i}")
    toks.append(_Tok("eof", "", n))
    return toks


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind):
        t = self.next()
        if t.kind != kind:
            raise DlError(f"expected {kind!r}, got {t.text!r} at offset {t.pos}")
        return t

    def at(self, kind):
        return self.peek().kind == kind

    # -- terms --------------------------------------------------------
    def term(self):
        t = self.term_factor()
        while self.at("+") or self.at("-"):
            op = self.next().kind
            t = BinOp(op, t, self.term_factor())
        return t

    def term_factor(self):
        t = self.term_unary()
        while self.at("*") or self.at("/"):
            op = self.next().kind
            rhs = self.term_unary()
            if op == "/" and isinstance(t, Num) and isinstance(rhs, Num):
                if rhs.value == 0:
                    raise DlError("division by the literal zero")
                t = Num(t.value / rhs.value)  # fold literal ratios
            else:
                t = BinOp(op, t, rhs)
        return t

    def term_unary(self):
        if self.at("-"):
            self.next()
            arg = self.term_unary()
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Minus(arg)
        return self.term_atom()

    def term_atom(self):
        t = self.peek()
        if t.kind == "num":
            self.next()
            return Num(Fraction(t.text))
        if t.kind == "id":
            self.next()
            return Var(t.text)
        if t.kind == "(":
            self.next()
            inner = self.term()
            self.expect(")")
            return inner
        raise DlError(f"expected a term at offset {t.pos}, got {t.text!r}")

    # -- formulas -----------------------------------------------------
    def formula(self):
        left = self.formula_or()
        if self.at("->"):
            self.next()
            return Implies(left, self.formula())
        return left

    def formula_or(self):
        parts = [self.formula_and()]
        while self.at("|"):
            self.next()
            parts.append(self.formula_and())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Or(p, out)
        return out

    def formula_and(self):
        parts = [self.formula_unary()]
        while self.at("&"):
            self.next()
            parts.append(self.formula_unary())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = And(p, out)
        return out

    def formula_unary(self):
        t = self.peek()
        if t.kind == "!":
            self.next()
            self.expect("(")
            inner = self.formula()
            self.expect(")")
            return Not(inner)
        if t.kind == "\\exists":
            self.next()
            v = self.expect("id").text
            self.expect("(")
            body = self.formula()
            self.expect(")")
            return Exists(v, body)
        if t.kind == "[":
            self.next()
            prog = self.program()
            self.expect("]")
            self.expect("(")
            post = self.formula()
            self.expect(")")
            return Box(prog, post)
        if t.kind == "id" and t.text == "true" and not self._cmp_follows():
            self.next()
            return TRUE
        if t.kind == "id" and t.text == "false" and not self._cmp_follows():
            self.next()
            return FALSE
        if t.kind == "(":
            # either a parenthesized formula or a parenthesized term that
            # starts a comparison; try the comparison first
            save = self.i
            try:
                return self.comparison()
            except DlError:
                self.i = save
            self.next()
            inner = self.formula()
            self.expect(")")
            return inner
        return self.comparison()

    def _cmp_follows(self):
        return self.peek(1).kind in ("<=", ">=", "=", "<", ">", "+", "-", "*", "/", "'")

    def comparison(self):
        left = self.term()
        t = self.next()
        if t.kind not in ("<=", ">=", "=", "<", ">"):
            raise DlError(f"expected a relation at offset {t.pos}, got {t.text!r}")
        right = self.term()
        return Cmp(t.kind, left, right)

    # -- programs -----------------------------------------------------
    def program(self):
        parts = [self.program_item()]
        while self.at(";"):
            self.next()
            if self.peek().kind in ("]", "}", "eof"):  # trailing separator
                break
            parts.append(self.program_item())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Seq(p, out)
        return out

    def program_item(self):
        t = self.peek()
        if t.kind == "?":
            self.next()
            self.expect("(")
            cond = self.formula()
            self.expect(")")
            return Test(cond)
        if t.kind == "{":
            save = self.i
            self.next()
            ode = self._try_ode()
            if ode is not None:
                return ode
            self.i = save
            self.next()
            left = self.program()
            if self.at("++"):
                self.next()
                right = self.program()
                self.expect("}")
                return Choice(left, right)
            self.expect("}")
            if self.at("*"):
                self.next()
                return Loop(left)
            return left  # grouping braces are transparent
        if t.kind == "id":
            name = self.next().text
            self.expect(":=")
            if self.at("*"):
                self.next()
                return Havoc(name)
            return Assign(name, self.term())
        raise DlError(f"expected a program at offset {t.pos}, got {t.text!r}")

    def _try_ode(self):
        # after '{': ident ' = term (, ident ' = term)* & formula }
        if not (self.at("id") and self.peek(1).kind == "'"):
            return None
        eqs = []
        while True:
            v = self.expect("id").text
            self.expect("'")
            self.expect("=")
            eqs.append((v, self.term()))
            if self.at(","):
                self.next()
                continue
            break
        self.expect("&")
        dom = self.formula()
        self.expect("}")
        return Ode(tuple(eqs), dom)


def parse_formula(src: str) -> Formula:
    p = _Parser(_lex(src))
    f = p.formula()
    p.expect("eof")
    return f


def parse_program(src: str) -> Program:
    p = _Parser(_lex(src))
    prog = p.program()
    p.expect("eof")
    return prog


# The block terminator 'End.' carries a bare dot the expression lexer does
# not know, so the archive reader splits on the block markers textually and
# reuses the formula parser for the problem body.
def parse_kyx(src: str):
    """Parse an emitted archive entry: returns (name, declared, formula)."""
    import re

    m = re.search(r'ArchiveEntry\s+"([^"]*)"', src)
    if not m:
        raise DlError("not an archive entry")
    name = m.group(1)
    mv = re.search(r"ProgramVariables(.*?)End\.", src, re.S)
    if not mv:
        raise DlError("missing ProgramVariables block")
    declared = set(re.findall(r"Real\s+(\w+)\s*;", mv.group(1)))
    mp = re.search(r"Problem(.*?)\nEnd\.", src, re.S)
    if not mp:
        raise DlError("missing Problem block")
    formula = parse_formula(mp.group(1))
    extra = free_variables(formula) - declared
    if extra:
        raise DlError(f"undeclared free variables: {', '.join(sorted(extra))}")
    return name, declared, formula
