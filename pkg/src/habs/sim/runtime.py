"""Executable operational semantics.

Configurations are immutable snapshots (functional updates with structural
sharing), so a run's record list needs no copying.  Discrete rules carry
the labels 1..14; rule "dur" completes a blocking duration statement, rule
"ii" is the timed advance and "script" injects a scenario call.

The default scheduler is deterministic: objects in creation order, rules in
numeric order, queues and messages FIFO.  A seeded random policy exercises
the nondeterminism.

Two readings fixed here (recorded in the project notes): duration guards
count down (the countdown starts when the process enters the queue), and a
blocked object's queued guards do not gate the time advance (only an active
blocking duration does) so that time always progresses.  Dynamics are
re-solved from the store whenever a write could affect them, which keeps
``f(0)`` equal to the snapshot at all times.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..lang.ast import (ClassDecl, GDiff, GDuration, GPoll, HabsProgram,
                        RCall, RExpr, RGet, RNew, SAssign, SAwait, SDuration,
                        SIf, SReturn, SSkip, SWhile)
from .dynamics import ConstantDynamics, Dynamics, first_time, solve_ode
from .evalexpr import UNIT, EvalError, eval_bool, eval_bool_vec, eval_expr


class RunError(Exception):
    pass


# -- runtime-only statements -------------------------------------------------

class RSuspend:
    """Marker introduced in front of an await before descheduling."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "suspend"


@dataclass(frozen=True)
class RAwaitDur:
    """A queued duration guard with its frozen countdown."""
    point: Optional[int]
    remaining: float


@dataclass(frozen=True)
class RDur:
    """A blocking duration statement with its frozen countdown."""
    remaining: float


# -- configurations -----------------------------------------------------------

@dataclass(frozen=True)
class Msg:
    callee: str
    method: str
    args: tuple
    fid: int


@dataclass(frozen=True)
class Proc:
    store: dict          # local variables (treated as immutable)
    fid: int
    stmts: tuple
    cls: Optional[str]
    member: str          # method name, "init" or "main"

    def head(self):
        return self.stmts[0] if self.stmts else None

    def with_store(self, name, value) -> "Proc":
        s = dict(self.store)
        s[name] = value
        return replace(self, store=s)

    def pop(self, *push) -> "Proc":
        return replace(self, stmts=tuple(push) + self.stmts[1:])


@dataclass(frozen=True)
class Obj:
    oid: str
    cls: Optional[ClassDecl]
    store: dict
    dyn: Dynamics
    active: Optional[Proc]
    queue: tuple

    def merged(self, proc: Optional[Proc]) -> dict:
        out = dict(self.store)
        if proc is not None:
            out.update(proc.store)
        out["this"] = self.oid
        return out


@dataclass(frozen=True)
class Config:
    clock: float
    objects: dict        # oid -> Obj, in creation order
    msgs: tuple
    futures: dict        # fid -> value
    next_fid: int = 1
    counters: dict = field(default_factory=dict)

    def with_obj(self, obj: Obj) -> "Config":
        objects = dict(self.objects)
        objects[obj.oid] = obj
        return replace(self, objects=objects)


def _freeze_guard(proc: Proc, obj: Obj) -> Proc:
    """Replace a leading duration guard by its runtime countdown."""
    head = proc.head()
    if isinstance(head, SAwait) and isinstance(head.guard, GDuration):
        value = float(eval_expr(head.guard.expr, obj.merged(proc)))
        return proc.pop(RAwaitDur(head.point, value))
    return proc


def _rebase(obj: Obj) -> Obj:
    """Re-solve the dynamics so that time zero matches the store."""
    if obj.cls is None or not obj.cls.physical:
        return replace(obj, dyn=ConstantDynamics(obj.store))
    return replace(obj, dyn=solve_ode(obj.cls.physical, obj.store))


def _needs_rebase(obj: Obj, name: str) -> bool:
    if obj.cls is None or not obj.cls.physical:
        return False
    if name in obj.cls.physical_names():
        return True
    from ..lang.ast import EVar, EUn, EBin

    def mentions(e):
        if isinstance(e, EVar):
            return e.name == name
        if isinstance(e, EUn):
            return mentions(e.arg)
        if isinstance(e, EBin):
            return mentions(e.left) or mentions(e.right)
        return False

    return any(mentions(ph.deriv) for ph in obj.cls.physical)


def _set_field(obj: Obj, name: str, value) -> Obj:
    store = dict(obj.store)
    store[name] = value
    obj = replace(obj, store=store)
    return _rebase(obj) if _needs_rebase(obj, name) else replace(
        obj, dyn=_with_initial(obj.dyn, store))


def _with_initial(dyn: Dynamics, store: dict) -> Dynamics:
    # non-physical writes keep the flow but must show up in store_at()
    import copy as _copy
    new = _copy.copy(dyn)
    new.initial = dict(store)
    return new


# -- scheduler policies -------------------------------------------------------

class SchedulerPolicy:
    def choose(self, moves: list):
        raise NotImplementedError


class DeterministicPolicy(SchedulerPolicy):
    """Objects in creation order, rules in numeric order, FIFO queues."""

    def choose(self, moves):
        return moves[0]


class RandomPolicy(SchedulerPolicy):
    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def choose(self, moves):
        return moves[self.rng.randrange(len(moves))]


# -- the machine ---------------------------------------------------------------

@dataclass
class SimConfig:
    horizon: float = 100.0
    slack: float = 1e-9
    bisect_tol: float = 1e-9
    mte_scan_step: float = 1.0 / 32.0
    zeno_cap: int = 10_000          # discrete steps per clock instant
    events_per_unit_cap: int = 10_000
    step_cap: int = 1_000_000


@dataclass
class Record:
    clock: float
    rule: str
    oid: str
    config: Config
    note: str = ""


@dataclass
class Run:
    program: HabsProgram
    records: list
    horizon: float
    outcome: str = "horizon"  # horizon | final | deadlock
    error: Optional[str] = None

    @property
    def final(self) -> Config:
        return self.records[-1].config

    def log_lines(self) -> list:
        out = []
        for r in self.records:
            line = f"clock={r.clock:.9g} rule={r.rule} object={r.oid}"
            if r.note:
                line += f" {r.note}"
            out.append(line)
        out.append(f"outcome={self.outcome}" + (f" error={self.error}" if self.error else ""))
        return out


class Engine:
    def __init__(self, program: HabsProgram, policy: Optional[SchedulerPolicy] = None,
                 sim: Optional[SimConfig] = None):
        if not program.normalized:
            raise RunError("program must be normalized before simulation")
        self.program = program
        self.policy = policy or DeterministicPolicy()
        self.sim = sim or SimConfig()
        self.cfg = self.initial_config()

    # -- construction ---------------------------------------------------
    def initial_config(self) -> Config:
        main = Proc(store={}, fid=0,
                    stmts=tuple(self.program.main_block) + (SReturn(expr=None),),
                    cls=None, member="main")
        obj = Obj("main", None, {"this": "main"}, ConstantDynamics({"this": "main"}),
                  main, ())
        return Config(0.0, {"main": obj}, (), {}, next_fid=1, counters={})

    # -- discrete rules ----------------------------------------------------
    def enabled_moves(self, cfg: Config) -> list:
        """(rule label, oid, extra) tuples in deterministic order."""
        moves = []
        for oid, obj in cfg.objects.items():
            act = obj.active
            head = act.head() if act else None
            if act is not None:
                if isinstance(head, SAwait):
                    moves.append(("1", oid, None))
                elif isinstance(head, RSuspend):
                    moves.append(("2", oid, None))
            if act is None:
                for i, proc in enumerate(obj.queue):
                    h = proc.head()
                    if isinstance(h, SAwait) or isinstance(h, RAwaitDur):
                        if self._guard_true(cfg, obj, proc):
                            moves.append(("3", oid, i))
                            break
                for i, proc in enumerate(obj.queue):
                    if not isinstance(proc.head(), (SAwait, RAwaitDur)):
                        moves.append(("4", oid, i))
                        break
            if act is not None:
                if isinstance(head, SReturn):
                    moves.append(("5", oid, None))
                elif isinstance(head, SAssign) and isinstance(head.rhs, RGet):
                    fid = eval_expr(head.rhs.expr, obj.merged(act))
                    if fid in cfg.futures:
                        moves.append(("6", oid, None))
                elif isinstance(head, SAssign) and isinstance(head.rhs, RCall):
                    moves.append(("7", oid, None))
            for k, msg in enumerate(cfg.msgs):
                if msg.callee == oid:
                    moves.append(("8", oid, k))
                    break
            if act is not None:
                if isinstance(head, SAssign) and isinstance(head.rhs, RNew):
                    moves.append(("9", oid, None))
                elif isinstance(head, SAssign) and isinstance(head.rhs, RExpr):
                    rule = "10" if (head.target is None or head.target_kind != "field") else "11"
                    moves.append((rule, oid, None))
                elif isinstance(head, SWhile):
                    moves.append(("12", oid, None))
                elif isinstance(head, SIf):
                    cond = bool(eval_expr(head.cond, obj.merged(act)))
                    moves.append(("13" if cond else "14", oid, None))
                elif isinstance(head, SSkip):
                    moves.append(("skip", oid, None))
                elif isinstance(head, SDuration):
                    val = float(eval_expr(head.expr, obj.merged(act)))
                    moves.append(("dur!", oid, val))  # freeze, not a logged step
                elif isinstance(head, RDur) and head.remaining <= self.sim.slack:
                    moves.append(("dur", oid, None))
        order = {str(k): k for k in range(1, 15)}
        moves.sort(key=lambda m: (list(cfg.objects).index(m[1]),
                                  order.get(m[0], 15 if m[0] != "dur!" else 0)))
        return moves

    def _guard_true(self, cfg: Config, obj: Obj, proc: Proc) -> bool:
        h = proc.head()
        if isinstance(h, RAwaitDur):
            return h.remaining <= self.sim.slack
        g = h.guard
        if isinstance(g, GPoll):
            fid = eval_expr(g.expr, obj.merged(proc))
            return fid in cfg.futures
        if isinstance(g, GDiff):
            return eval_bool(g.expr, obj.merged(proc), obj.dyn, 0.0, self.sim.slack)
        if isinstance(g, GDuration):  # not yet frozen: value is the full wait
            return float(eval_expr(g.expr, obj.merged(proc))) <= self.sim.slack
        raise RunError(f"unknown guard {type(g).__name__}")

    def apply(self, move, cfg: Config):
        """Returns (new config, note) for a discrete move."""
        rule, oid, extra = move
        obj = cfg.objects[oid]
        act = obj.active
        head = act.head() if act else None

        if rule == "1":
            return cfg.with_obj(replace(obj, active=act.pop(RSuspend(), head))), ""
        if rule == "2":
            aw = act.stmts[1]
            proc = replace(act, stmts=act.stmts[1:])
            proc = _freeze_guard(proc, obj)
            new = replace(obj, active=None, queue=obj.queue + (proc,))
            note = f"member={act.member} point={getattr(aw, 'point', '?')}"
            return cfg.with_obj(_rebase(new)), note
        if rule == "3":
            proc = obj.queue[extra]
            rest = tuple(p for i, p in enumerate(obj.queue) if i != extra)
            activated = replace(proc, stmts=proc.stmts[1:])
            return (cfg.with_obj(replace(obj, active=activated, queue=rest)),
                    f"member={proc.member}")
        if rule == "4":
            proc = obj.queue[extra]
            rest = tuple(p for i, p in enumerate(obj.queue) if i != extra)
            return (cfg.with_obj(replace(obj, active=proc, queue=rest)),
                    f"member={proc.member}")
        if rule == "5":
            value = UNIT if head.expr is None else eval_expr(head.expr, obj.merged(act))
            futures = dict(cfg.futures)
            if act.fid in futures:
                raise RunError(f"future {act.fid} resolved twice")
            futures[act.fid] = value
            new = _rebase(replace(obj, active=None))
            return (replace(cfg.with_obj(new), futures=futures),
                    f"member={act.member} fid={act.fid}")
        if rule == "6":
            fid = eval_expr(head.rhs.expr, obj.merged(act))
            value = cfg.futures[fid]
            return self._assign(cfg, obj, act, head, value), f"fid={fid}"
        if rule == "7":
            callee = eval_expr(head.rhs.callee, obj.merged(act))
            if callee is None:
                raise RunError(f"call of {head.rhs.method} on null at clock {cfg.clock:g}")
            args = tuple(eval_expr(a, obj.merged(act)) for a in head.rhs.args)
            fid = cfg.next_fid
            msg = Msg(callee, head.rhs.method, args, fid)
            cfg2 = self._assign(cfg, obj, act, head, fid)
            return (replace(cfg2, msgs=cfg2.msgs + (msg,), next_fid=fid + 1),
                    f"method={head.rhs.method} callee={callee} fid={fid}")
        if rule == "8":
            msg = cfg.msgs[extra]
            rest = tuple(m for i, m in enumerate(cfg.msgs) if i != extra)
            target = cfg.objects[msg.callee]
            proc = self._make_process(target, msg)
            proc = _freeze_guard(proc, target)
            cfg2 = cfg.with_obj(replace(target, queue=target.queue + (proc,)))
            return replace(cfg2, msgs=rest), f"method={msg.method} fid={msg.fid}"
        if rule == "9":
            return self._create_object(cfg, obj, act, head)
        if rule in ("10", "11"):
            value = eval_expr(head.rhs.expr, obj.merged(act))
            return self._assign(cfg, obj, act, head, value), ""
        if rule == "12":
            unrolled = SIf(cond=head.cond, then=list(head.body) + [head],
                           els=[], pos=head.pos)
            return cfg.with_obj(replace(obj, active=act.pop(unrolled))), ""
        if rule == "13":
            return cfg.with_obj(replace(obj, active=act.pop(*head.then))), ""
        if rule == "14":
            return cfg.with_obj(replace(obj, active=act.pop(*head.els))), ""
        if rule == "skip":
            return cfg.with_obj(replace(obj, active=act.pop())), ""
        if rule == "dur!":
            return cfg.with_obj(replace(obj, active=act.pop(RDur(float(extra))))), ""
        if rule == "dur":
            return cfg.with_obj(replace(obj, active=act.pop())), ""
        raise RunError(f"unknown rule {rule}")

    def _assign(self, cfg: Config, obj: Obj, act: Proc, head: SAssign, value) -> Config:
        """Pop the head statement, writing the value if there is a target."""
        if head.target is None:
            return cfg.with_obj(replace(obj, active=act.pop()))
        if head.target_kind == "field":
            new = _set_field(obj, head.target, value)
            return cfg.with_obj(replace(new, active=act.pop()))
        proc = act.with_store(head.target, value).pop()
        return cfg.with_obj(replace(obj, active=proc))

    def _make_process(self, target: Obj, msg: Msg) -> Proc:
        cls = target.cls
        if cls is None:
            raise RunError(f"message to the main pseudo-object")
        try:
            m = cls.method(msg.method)
        except KeyError:
            raise RunError(f"class {cls.name} has no method {msg.method!r}") from None
        if len(m.params) != len(msg.args):
            raise RunError(f"arity mismatch calling {cls.name}.{m.name}")
        store = {n: v for (_, n), v in zip(m.params, msg.args)}
        for name, ty in m.locals.items():
            store[name] = _default_value(ty)
        return Proc(store, msg.fid, tuple(m.body), cls.name, m.name)

    def _create_object(self, cfg: Config, obj: Obj, act: Proc, head: SAssign):
        rhs: RNew = head.rhs
        try:
            cls = self.program.cls(rhs.class_name)
        except KeyError:
            raise RunError(f"new of unknown class {rhs.class_name!r}") from None
        counters = dict(cfg.counters)
        n = counters.get(cls.name, 0) + 1
        counters[cls.name] = n
        oid2 = f"{cls.name.lower()}{n}"
        store = {"this": oid2}
        args = [eval_expr(a, obj.merged(act)) for a in rhs.args]
        if len(args) != len(cls.params):
            raise RunError(f"arity mismatch creating {cls.name}")
        for (_, pname), v in zip(cls.params, args):
            store[pname] = v
        for ph in cls.physical:
            store[ph.name] = float(eval_expr(ph.init, store))
        init_stmts = tuple(cls.init_block or ()) + (SReturn(expr=None),)
        fid = cfg.next_fid
        init_locals = {n2: _default_value(t) for n2, t in cls.init_locals.items()}
        init = Proc(init_locals, fid, init_stmts, cls.name, "init")
        new_obj = _rebase(Obj(oid2, cls, store, ConstantDynamics(store), init, ()))
        cfg2 = self._assign(cfg, obj, act, head, oid2)
        objects = dict(cfg2.objects)
        objects[oid2] = new_obj
        return (replace(cfg2, objects=objects, next_fid=fid + 1, counters=counters),
                f"created={oid2}")

    # -- timed advance ----------------------------------------------------
    def object_mte(self, cfg: Config, obj: Obj, horizon_left: float) -> float:
        if obj.active is not None:
            head = obj.active.head()
            if isinstance(head, RDur):
                return max(head.remaining, 0.0)
            return math.inf  # blocked on get: queued guards cannot be scheduled
        best = math.inf
        for proc in obj.queue:
            best = min(best, self._guard_mte(cfg, obj, proc, horizon_left))
        return best

    def _guard_mte(self, cfg: Config, obj: Obj, proc: Proc, horizon_left: float) -> float:
        h = proc.head()
        if isinstance(h, RAwaitDur):
            return max(h.remaining, 0.0)
        if not isinstance(h, SAwait):
            return math.inf  # schedulable via rule 4, never blocks time
        g = h.guard
        if isinstance(g, GPoll):
            fid = eval_expr(g.expr, obj.merged(proc))
            return 0.0 if fid in cfg.futures else math.inf
        if isinstance(g, GDuration):
            return max(float(eval_expr(g.expr, obj.merged(proc))), 0.0)
        store = obj.merged(proc)
        pred = lambda ts: eval_bool_vec(g.expr, store, obj.dyn, ts, self.sim.slack)
        return first_time(pred, horizon_left, self.sim.mte_scan_step, self.sim.bisect_tol)

    def advance(self, cfg: Config, dt: float) -> Config:
        objects = {}
        for oid, obj in cfg.objects.items():
            store = obj.dyn.store_at(dt)
            new = replace(obj, store=store)
            if obj.active is not None and isinstance(obj.active.head(), RDur):
                head = obj.active.head()
                new = replace(new, active=obj.active.pop(RDur(head.remaining - dt)))
            queue = []
            for proc in new.queue:
                h = proc.head()
                if isinstance(h, RAwaitDur):
                    proc = proc.pop(RAwaitDur(h.point, h.remaining - dt))
                queue.append(proc)
            new = replace(new, queue=tuple(queue))
            objects[oid] = _rebase(new)
        return replace(cfg, clock=cfg.clock + dt, objects=objects)

    # -- the run loop -------------------------------------------------------
    def run(self, horizon: Optional[float] = None, script=None) -> Run:
        sim = self.sim
        horizon = sim.horizon if horizon is None else horizon
        script = sorted(script or [], key=lambda ev: ev.time)
        si = 0
        records = [Record(self.cfg.clock, "start", "", self.cfg)]
        steps_here = 0
        total = 0
        window_start, window_events = 0.0, 0
        outcome, error = "horizon", None

        while True:
            if total > sim.step_cap:
                outcome, error = "zeno", "global step cap exhausted"
                break
            # inject scenario calls due now
            while si < len(script) and script[si].time <= self.cfg.clock + sim.slack:
                ev = script[si]
                si += 1
                self.cfg = self._inject(self.cfg, ev)
                records.append(Record(self.cfg.clock, "script", ev.obj, self.cfg,
                                      note=f"method={ev.method}"))
            moves = self.enabled_moves(self.cfg)
            if moves:
                steps_here += 1
                total += 1
                if steps_here > sim.zeno_cap:
                    outcome, error = "zeno", (
                        f"{steps_here} discrete steps at clock {self.cfg.clock:g}")
                    break
                rule, oid, extra = self.policy.choose(moves)
                try:
                    self.cfg, note = self.apply((rule, oid, extra), self.cfg)
                except EvalError as e:
                    outcome, error = "error", str(e)
                    break
                if rule != "dur!":
                    records.append(Record(self.cfg.clock, rule, oid, self.cfg, note=note))
                if rule in ("3", "4"):
                    if self.cfg.clock >= window_start + 1.0:
                        window_start, window_events = self.cfg.clock, 0
                    window_events += 1
                    if window_events > sim.events_per_unit_cap:
                        outcome, error = "zeno", (
                            f"{window_events} scheduling events within one time unit")
                        break
                continue
            # quiescent: advance time
            steps_here = 0
            left = horizon - self.cfg.clock
            if left <= sim.slack:
                outcome = "horizon"
                break
            mte = min((self.object_mte(self.cfg, o, left)
                       for o in self.cfg.objects.values()), default=math.inf)
            script_dt = (script[si].time - self.cfg.clock) if si < len(script) else math.inf
            dt = min(mte, script_dt, left)
            if dt == math.inf:
                outcome = "deadlock" if self._blocked() else "final"
                if outcome == "deadlock":
                    error = "get on an unresolved future with nothing else enabled"
                break
            if dt <= 0:
                raise RunError(f"zero time advance at clock {self.cfg.clock:g}: "
                               "semantics bug")
            self.cfg = self.advance(self.cfg, dt)
            records.append(Record(self.cfg.clock, "ii", "", self.cfg, note=f"dt={dt:.9g}"))
        return Run(self.program, records, horizon, outcome, error)

    def _blocked(self) -> bool:
        for obj in self.cfg.objects.values():
            if obj.active is not None and isinstance(obj.active.head(), SAssign) \
                    and isinstance(obj.active.head().rhs, RGet):
                return True
        return False

    def _inject(self, cfg: Config, ev) -> Config:
        if ev.obj not in cfg.objects:
            raise RunError(f"scenario targets unknown object {ev.obj!r}")
        fid = cfg.next_fid
        msg = Msg(ev.obj, ev.method, tuple(ev.args), fid)
        return replace(cfg, msgs=cfg.msgs + (msg,), next_fid=fid + 1)


def _default_value(ty):
    from ..lang.ast import BOOL, INT, REAL, FutType, SimpleType

    if ty in (REAL, INT):
        return 0.0
    if ty == BOOL:
        return False
    if isinstance(ty, FutType):
        return None
    if isinstance(ty, SimpleType) and ty.name == "Unit":
        return UNIT
    return None  # object references default to null


def run_program(program: HabsProgram, horizon: float = 100.0,
                policy: Optional[SchedulerPolicy] = None,
                sim: Optional[SimConfig] = None, script=None) -> Run:
    sim = sim or SimConfig(horizon=horizon)
    engine = Engine(program, policy=policy, sim=sim)
    return engine.run(horizon=horizon, script=script)
