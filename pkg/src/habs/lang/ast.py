"""AST for the modeled object language.

Positions are carried for diagnostics but excluded from equality so that
parse / pretty-print / parse fixpoint checks compare structure only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional


@dataclass
class Pos:
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


NOPOS = Pos(0, 0)


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class Type:
    pass


@dataclass(frozen=True)
class SimpleType(Type):
    name: str  # Real, Int, Bool, Unit or a class/interface name


@dataclass(frozen=True)
class FutType(Type):
    inner: Type


REAL = SimpleType("Real")
INT = SimpleType("Int")
BOOL = SimpleType("Bool")
UNIT = SimpleType("Unit")

RESERVED_NAMES = ("t", "cll", "result")


# ---------------------------------------------------------------------------
# expressions

@dataclass(eq=True)
class Expr:
    pass


@dataclass
class EVar(Expr):
    name: str
    this_qualified: bool = False
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)
    kind: Optional[str] = field(default=None, compare=False)  # field | local | param, set by resolver


@dataclass
class EThis(Expr):
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class ENum(Expr):
    value: Fraction
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class EBool(Expr):
    value: bool
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class ENull(Expr):
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class EUnit(Expr):
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class EUn(Expr):
    op: str  # ! or -
    arg: Expr
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class EBin(Expr):
    op: str  # && || <= >= < > == != + - * /
    left: Expr
    right: Expr
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


# ---------------------------------------------------------------------------
# right-hand sides, guards, statements

@dataclass
class Rhs:
    pass


@dataclass
class RExpr(Rhs):
    expr: Expr


@dataclass
class RNew(Rhs):
    class_name: str
    args: list


@dataclass
class RGet(Rhs):
    expr: Expr


@dataclass
class RCall(Rhs):
    callee: Expr
    method: str
    args: list
    target_class: Optional[str] = field(default=None, compare=False)  # set by the type checker


@dataclass
class Guard:
    pass


@dataclass
class GPoll(Guard):
    expr: Expr


@dataclass
class GDuration(Guard):
    expr: Expr


@dataclass
class GDiff(Guard):
    expr: Expr


@dataclass
class Stmt:
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class SAssign(Stmt):
    target: Optional[str] = None          # None for a bare rhs statement
    decl_type: Optional[Type] = None      # set when the statement declares a local
    rhs: Rhs = None
    target_kind: Optional[str] = field(default=None, compare=False)  # field | local


@dataclass
class SAwait(Stmt):
    guard: Guard = None
    point: Optional[int] = field(default=None, compare=False)  # program-point id, set by normalize


@dataclass
class SDuration(Stmt):
    expr: Expr = None


@dataclass
class SIf(Stmt):
    cond: Expr = None
    then: list = field(default_factory=list)
    els: list = field(default_factory=list)


@dataclass
class SWhile(Stmt):
    cond: Expr = None
    body: list = field(default_factory=list)


@dataclass
class SReturn(Stmt):
    expr: Optional[Expr] = None  # None encodes `return unit`


@dataclass
class SSkip(Stmt):
    pass


# ---------------------------------------------------------------------------
# declarations

@dataclass
class PhysDecl:
    name: str
    init: Expr
    deriv: Expr
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class MethodSig:
    name: str
    params: list                      # list of (Type, name)
    ret: Type = UNIT
    pre: Optional[Expr] = None        # Requires annotation
    post: Optional[Expr] = None       # Ensures annotation
    tactic: Optional[str] = None
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class MethodDecl:
    name: str
    params: list                      # list of (Type, name)
    ret: Type
    body: list                        # list of Stmt, ends in SReturn after parsing
    pre: Optional[Expr] = None
    post: Optional[Expr] = None
    tactic: Optional[str] = None
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)
    locals: dict = field(default_factory=dict, compare=False)  # name -> Type, set by resolver


@dataclass
class InterfaceDecl:
    name: str
    methods: list                     # list of MethodSig
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)


@dataclass
class ClassDecl:
    name: str
    params: list                      # list of (Type, name): constructor fields
    implements: Optional[str] = None
    physical: list = field(default_factory=list)   # list of PhysDecl
    init_block: Optional[list] = None              # list of Stmt
    methods: list = field(default_factory=list)
    creation_condition: Optional[Expr] = None      # Requires on the class
    object_invariant: Optional[Expr] = None        # ObjInv annotation
    pos: Pos = field(default_factory=lambda: NOPOS, compare=False)
    init_locals: dict = field(default_factory=dict, compare=False)

    def field_names(self) -> list:
        return [n for _, n in self.params] + [p.name for p in self.physical]

    def physical_names(self) -> list:
        return [p.name for p in self.physical]

    def method(self, name: str) -> MethodDecl:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


@dataclass
class HabsProgram:
    interfaces: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    main_block: list = field(default_factory=list)
    main_locals: dict = field(default_factory=dict, compare=False)
    normalized: bool = field(default=False, compare=False)

    def cls(self, name: str) -> ClassDecl:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)


def walk_stmts(stmts):
    """Yield every statement in a block, descending into branches/loops."""
    for s in stmts:
        yield s
        if isinstance(s, SIf):
            yield from walk_stmts(s.then)
            yield from walk_stmts(s.els)
        elif isinstance(s, SWhile):
            yield from walk_stmts(s.body)


def all_bodies(p: HabsProgram):
    """Yield (class name or None, member name, statement list) triples for
    every init block, method body and the main block."""
    for c in p.classes:
        if c.init_block is not None:
            yield c.name, "init", c.init_block
        for m in c.methods:
            yield c.name, m.name, m.body
    yield None, "main", p.main_block
