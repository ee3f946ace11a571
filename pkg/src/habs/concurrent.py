"""Guarded procedures over one global ODE: the small concurrency model.

A concurrent program is a set of procedures ``?grd; bdy`` (guards are
conjunctions of weak inequalities, bodies are ODE-free dL programs) plus
one set of dynamics.  Executing is urgent: a procedure runs as soon as its
guard holds; otherwise time advances along the dynamics to the least
strictly positive instant at which some guard holds.

One executable reading is fixed here (see the project notes): with weak
inequalities a procedure stays enabled on the event boundary after it ran
(the tank's lower sensor still reads ``level <= 3`` once the drain turned
positive), so the literal transition rules stutter forever.  The default
policy therefore executes only procedures whose body actually changes the
valuation and lets time advance when every enabled body is a no-op; this
adds no reachable states.

Three proof-obligation schemes are provided: post-conditions only (sound
for trivial dynamics), basic post-regions (evolution domain ``true``) and
precise post-regions (the conjunction of all weakly negated guards).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import dl
from .lang.ast import EBin, ENum, EUn, EVar, PhysDecl
from .sim.dynamics import first_time, solve_ode


class ConcurrentError(Exception):
    pass


@dataclass(frozen=True)
class Procedure:
    name: str
    guard: dl.Formula      # conjunction of weak inequalities
    body: dl.Program       # ODE-free


@dataclass(frozen=True)
class ConcurrentProgram:
    procedures: tuple
    dynamics: dl.Ode       # no evolution domain

    def __post_init__(self):
        for prcd in self.procedures:
            _check_weak_guard(prcd.guard)
            if _contains_ode(prcd.body):
                raise ConcurrentError(f"procedure {prcd.name} contains an ODE")
        if not isinstance(self.dynamics.domain, dl.TrueF):
            raise ConcurrentError("dynamics must not carry an evolution domain")


def _check_weak_guard(f: dl.Formula):
    if isinstance(f, (dl.TrueF, dl.FalseF)):
        return
    if isinstance(f, dl.Cmp):
        if f.rel not in ("<=", ">="):
            raise ConcurrentError(f"guards use weak inequalities only, got {f.rel!r}")
        return
    if isinstance(f, dl.And):
        _check_weak_guard(f.left)
        _check_weak_guard(f.right)
        return
    raise ConcurrentError(f"guards are conjunctions of weak inequalities, got "
                          f"{type(f).__name__}")


def _contains_ode(p: dl.Program) -> bool:
    if isinstance(p, dl.Ode):
        return True
    if isinstance(p, (dl.Assign, dl.Havoc, dl.Test)):
        return False
    if isinstance(p, dl.Choice):
        return _contains_ode(p.left) or _contains_ode(p.right)
    if isinstance(p, dl.Seq):
        return _contains_ode(p.first) or _contains_ode(p.second)
    if isinstance(p, dl.Loop):
        return _contains_ode(p.body)
    return False


@dataclass(frozen=True)
class ConcurrentState:
    clock: float
    valuation: dict


# ---------------------------------------------------------------------------
# policies and the body interpreter

class ConcurrentPolicy:
    def procedure_order(self, enabled: list) -> list:
        return enabled

    def havoc(self, var: str, current: float) -> float:
        return current

    def branch_first_left(self) -> bool:
        return True

    def loop_count(self) -> int:
        return 0


class RandomConcurrentPolicy(ConcurrentPolicy):
    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def procedure_order(self, enabled):
        out = list(enabled)
        self.rng.shuffle(out)
        return out

    def havoc(self, var, current):
        return self.rng.uniform(-10.0, 10.0)

    def branch_first_left(self):
        return self.rng.random() < 0.5

    def loop_count(self):
        n = 0
        while self.rng.random() < 0.5 and n < 8:
            n += 1
        return n


def interpret_body(p: dl.Program, val: dict, policy: ConcurrentPolicy) -> Optional[dict]:
    """Final valuation of an ODE-free dL program, or None if every branch
    dies on a failing test."""
    if isinstance(p, dl.Assign):
        out = dict(val)
        out[p.var] = float(dl.eval_term(p.term, val))
        return out
    if isinstance(p, dl.Havoc):
        out = dict(val)
        out[p.var] = policy.havoc(p.var, val.get(p.var, 0.0))
        return out
    if isinstance(p, dl.Test):
        return dict(val) if bool(dl.eval_formula(p.cond, val)) else None
    if isinstance(p, dl.Seq):
        mid = interpret_body(p.first, val, policy)
        return None if mid is None else interpret_body(p.second, mid, policy)
    if isinstance(p, dl.Choice):
        first, second = ((p.left, p.right) if policy.branch_first_left()
                         else (p.right, p.left))
        out = interpret_body(first, val, policy)
        return out if out is not None else interpret_body(second, val, policy)
    if isinstance(p, dl.Loop):
        out = dict(val)
        for _ in range(policy.loop_count()):
            nxt = interpret_body(p.body, out, policy)
            if nxt is None:
                break
            out = nxt
        return out
    raise ConcurrentError(f"cannot interpret {type(p).__name__}")


# ---------------------------------------------------------------------------
# stepping

_DL_TO_EXPR_OPS = {"+", "-", "*", "/"}


def _term_to_expr(t: dl.Term):
    if isinstance(t, dl.Var):
        return EVar(t.name)
    if isinstance(t, dl.Num):
        return ENum(Fraction(t.value))
    if isinstance(t, dl.Minus):
        return EUn("-", _term_to_expr(t.arg))
    if isinstance(t, dl.BinOp):
        return EBin(t.op, _term_to_expr(t.left), _term_to_expr(t.right))
    raise ConcurrentError(f"unknown term {type(t).__name__}")


def _dynamics_for(prog: ConcurrentProgram, val: dict):
    phys = [PhysDecl(v, ENum(Fraction(0)), _term_to_expr(t))
            for v, t in prog.dynamics.eqs]
    return solve_ode(phys, val)


def _guard_holds(prcd: Procedure, val: dict) -> bool:
    return bool(dl.eval_formula(prcd.guard, val))


def step(state: ConcurrentState, prog: ConcurrentProgram,
         policy: Optional[ConcurrentPolicy] = None, horizon: float = 1e6,
         scan_step: float = 1.0 / 32.0):
    """One transition: ``('execute', name, state')``, ``('urgent', None,
    state')`` or ``('final', None, state)``."""
    policy = policy or ConcurrentPolicy()
    val = state.valuation
    enabled = [p for p in prog.procedures if _guard_holds(p, val)]
    failures = 0
    for prcd in policy.procedure_order(enabled):
        out = interpret_body(prcd.body, val, policy)
        if out is None:
            failures += 1
            continue
        if out != val:
            return "execute", prcd.name, ConcurrentState(state.clock, out)
    if enabled and failures == len(enabled):
        raise ConcurrentError("every enabled procedure fails its internal tests")

    # urgent: no enabled procedure can change the state; advance to the
    # least strictly positive time at which some guard holds
    dyn = _dynamics_for(prog, val)
    names = sorted({v for p in prog.procedures for v in dl.free_variables(p.guard)})

    def pred(ts):
        env = {n: (dyn.value(n, ts) if n in dyn.fields else np.full(ts.shape, val[n]))
               for n in names}
        hit = np.zeros(ts.shape, dtype=bool)
        for prcd in prog.procedures:
            hit |= np.asarray(dl.eval_formula(prcd.guard, env))
        hit &= ts > 0  # strictly positive advance
        return hit

    left = horizon - state.clock
    t = first_time(pred, left, scan_step=scan_step)
    if not math.isfinite(t) or t <= 0:
        return "final", None, state
    return "urgent", None, ConcurrentState(state.clock + t, dyn.store_at(t))


def run(prog: ConcurrentProgram, initial: dict, horizon: float,
        policy: Optional[ConcurrentPolicy] = None, step_cap: int = 100_000):
    """Transition sequence up to the horizon; returns a list of
    (kind, name, state) entries starting from the initial state."""
    state = ConcurrentState(0.0, dict(initial))
    out = [("init", None, state)]
    for _ in range(step_cap):
        kind, name, nxt = step(state, prog, policy, horizon)
        if kind == "final" or nxt.clock > horizon:
            out.append((kind, name, nxt))
            return out
        out.append((kind, name, nxt))
        state = nxt
    raise ConcurrentError("step cap exhausted (livelock?)")


def reachable_sample(prog: ConcurrentProgram, initial: dict, horizon: float,
                     sample_step: float,
                     policy: Optional[ConcurrentPolicy] = None) -> list:
    """Sampled reachable valuations: all execute pre/post states, samples of
    the dynamics between urgent endpoints, and the trailing dynamics after a
    final state up to the horizon."""
    trace = run(prog, initial, horizon, policy)
    samples = []

    def flow_samples(val, upto):
        dyn = _dynamics_for(prog, val)
        ts = np.arange(0.0, upto, sample_step)
        ts = np.append(ts, upto)
        data = {n: (dyn.value(n, ts) if n in dyn.fields else np.full(ts.shape, val[n]))
                for n in val if isinstance(val[n], float)}
        for i in range(len(ts)):
            samples.append({n: float(a[i]) for n, a in data.items()})

    for k, (kind, _name, state) in enumerate(trace):
        samples.append(dict(state.valuation))
        if kind == "final":
            flow_samples(state.valuation, horizon - state.clock)
        elif k + 1 < len(trace) and trace[k + 1][0] == "urgent":
            dt = trace[k + 1][2].clock - state.clock
            flow_samples(state.valuation, dt)
    return samples


# ---------------------------------------------------------------------------
# proof obligations (the three schemes)

SCHEMES = ("postcond", "basic", "precise")


def obligations(prog: ConcurrentProgram, initial: dict, inv: dl.Formula,
                scheme: str) -> list:
    """The initial-state formula plus one formula per procedure; returns
    (name, formula) pairs."""
    if scheme not in SCHEMES:
        raise ConcurrentError(f"unknown scheme {scheme!r}")
    if not dl.is_propositional(inv):
        raise ConcurrentError("invariant must be modality-free")
    init = dl.conj([dl.Cmp("=", dl.Var(v), _lit(initial[v]))
                    for v in sorted(initial)])
    if scheme == "postcond":
        post = inv
    else:
        domain = dl.TRUE if scheme == "basic" else dl.conj(
            [dl.weak_negate(p.guard) for p in prog.procedures])
        post = dl.And(inv, dl.Box(dl.Ode(prog.dynamics.eqs, domain), inv))
    out = [("init", dl.Implies(init, post))]
    for prcd in prog.procedures:
        body = dl.Seq(dl.Test(prcd.guard), prcd.body)
        out.append((f"prcd:{prcd.name}", dl.Implies(inv, dl.Box(body, post))))
    return out


def _lit(v: float) -> dl.Term:
    f = Fraction(v).limit_denominator(10**9)
    return dl.Num(f) if f >= 0 else dl.Num(f)


# ---------------------------------------------------------------------------
# the minimal text syntax

def parse_concurrent(text: str) -> ConcurrentProgram:
    """Programs like::

        dyn { level' = drain }
        prcd up: ?level >= 10 { drain := -1 }
        prcd down: ?level <= 3 { drain := 1 }

    ``=`` in bodies is accepted for ``:=``.
    """
    dynamics = None
    procedures = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("dyn"):
                body = _braced(line[3:], lineno)
                eqs = []
                for part in body.split(","):
                    lhs, _, rhs = part.partition("=")
                    lhs = lhs.strip()
                    if not lhs.endswith("'"):
                        raise ConcurrentError(f"line {lineno}: expected v' = term")
                    eqs.append((lhs[:-1].strip(), _parse_term(rhs)))
                dynamics = dl.Ode(tuple(eqs), dl.TRUE)
            elif line.startswith("prcd"):
                head, _, rest = line[4:].partition(":")
                name = head.strip()
                guard_src, _, body_src = rest.partition("{")
                guard_src = guard_src.strip()
                if not guard_src.startswith("?"):
                    raise ConcurrentError(f"line {lineno}: procedure guard must start with ?")
                guard = dl.parse_formula(guard_src[1:])
                body = _parse_body(_braced("{" + body_src, lineno))
                procedures.append(Procedure(name, guard, body))
            else:
                raise ConcurrentError(f"line {lineno}: expected 'dyn' or 'prcd'")
        except dl.DlError as e:
            raise ConcurrentError(f"line {lineno}: {e}") from None
    if dynamics is None:
        raise ConcurrentError("missing dyn declaration")
    return ConcurrentProgram(tuple(procedures), dynamics)


def _braced(s: str, lineno: int) -> str:
    s = s.strip()
    if not (s.startswith("{") and s.endswith("}")):
        raise ConcurrentError(f"line {lineno}: expected a braced block")
    return s[1:-1]


def _parse_term(src: str) -> dl.Term:
    return dl.parse_program(f"__x := {src.strip()}").term


def _parse_body(src: str) -> dl.Program:
    parts = []
    for stmt in filter(None, (s.strip() for s in src.split(";"))):
        if stmt.startswith("?"):
            parts.append(dl.Test(dl.parse_formula(stmt[1:])))
            continue
        lhs, sep, rhs = stmt.partition(":=")
        if not sep:
            lhs, sep, rhs = stmt.partition("=")
            if not sep:
                raise ConcurrentError(f"cannot parse statement {stmt!r}")
        rhs = rhs.strip()
        if rhs == "*":
            parts.append(dl.Havoc(lhs.strip()))
        else:
            parts.append(dl.Assign(lhs.strip(), _parse_term(rhs)))
    return dl.seq(parts)


TANK_EXAMPLE = """\
dyn { level' = drain }
prcd up: ?level >= 10 { drain = -1 }
prcd down: ?level <= 3 { drain = 1 }
"""
