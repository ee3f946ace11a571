"""Empirical soundness check: every sampled state of every
suspension-subtrace must satisfy the generator's region for its member, and
the object invariant throughout.

Sampling covers a uniform grid plus all segment boundaries inside the
subtrace (these are the detected event times) and both endpoints.  A small
comparison slack absorbs the 1e-9 event-localization error of the
simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import dl
from ..analysis import PostRegionGenerator
from .. import trans
from .runtime import Run
from .traces import SuspensionSubtrace, all_subtraces


@dataclass
class Violation:
    oid: str
    member: object
    kind: str          # "region" or "invariant"
    time: float        # subtrace-local clock t
    trace_time: float  # object-local trace time
    state: dict
    formula: dl.Formula

    def describe(self) -> str:
        vals = ", ".join(f"{k}={v:.6g}" for k, v in sorted(self.state.items())
                         if isinstance(v, float))
        return (f"{self.oid}.{self.member}: {self.kind} violated at t={self.time:.6g} "
                f"(trace time {self.trace_time:.6g}): {dl.render_formula(self.formula)} "
                f"with {vals}")


@dataclass
class MonitorEntry:
    oid: str
    member: object
    subtraces: int
    samples: int
    ok: bool
    first_violation: Optional[Violation] = None


@dataclass
class MonitorReport:
    entries: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None


def _sample_times(st: SuspensionSubtrace, step: float) -> np.ndarray:
    lo, hi = st.start, st.end
    n = max(int(np.floor((hi - lo) / step)), 0)
    grid = lo + step * np.arange(n + 1)
    inner = [b for b in st.trace.boundaries() if lo < b < hi]
    ts = np.unique(np.concatenate([grid, np.array(inner + [lo, hi])]))
    return ts[(ts >= lo) & (ts <= hi)]


def monitor(subtraces, region: dl.Formula, inv: dl.Formula, sampling: float,
            slack: float = 1e-7) -> MonitorReport:
    """Check one member's subtraces against its region and the invariant."""
    report = MonitorReport()
    for st in subtraces:
        entry = _check_one(st, region, inv, sampling, slack)
        report.entries.append(entry)
        if entry.first_violation is not None:
            report.violations.append(entry.first_violation)
    return report


def _check_one(st: SuspensionSubtrace, region, inv, sampling, slack) -> MonitorEntry:
    names = sorted((dl.free_variables(region) | dl.free_variables(inv)) - {"t"})
    ts = _sample_times(st, sampling)
    states = st.trace.sample(names, ts)
    states["t"] = st.local_times(ts)
    first = None
    ok = True
    for kind, f in (("region", region), ("invariant", inv)):
        sat = np.asarray(dl.eval_formula(f, states, slack=slack))
        if sat.shape == ():
            sat = np.full(ts.shape, bool(sat))
        bad = np.flatnonzero(~sat)
        if bad.size:
            ok = False
            i = int(bad[0])
            state = {k: float(v[i]) for k, v in states.items()}
            v = Violation(st.trace.oid, st.member, kind, float(states["t"][i]),
                          float(ts[i]), state, f)
            if first is None or v.trace_time < first.trace_time:
                first = v
    return MonitorEntry(st.trace.oid, st.member, 1, len(ts), ok, first)


def check_run(run: Run, generator: PostRegionGenerator, sampling: float = 1e-3,
              slack: float = 1e-7) -> MonitorReport:
    """Monitor every suspension-subtrace of a run against the generator's
    regions and the object invariants."""
    program = run.program
    report = MonitorReport()
    grouped = all_subtraces(run)
    for (oid, member), sts in sorted(grouped.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        cls_name = sts[0].trace.cls_name
        cls = program.cls(cls_name)
        inv = (trans.formula(cls.object_invariant)
               if cls.object_invariant is not None else dl.TRUE)
        region = generator.region(cls_name, member)
        sub = monitor(sts, region, inv, sampling, slack)
        merged = MonitorEntry(oid, member, len(sts),
                              sum(e.samples for e in sub.entries),
                              all(e.ok for e in sub.entries),
                              sub.first())
        report.entries.append(merged)
        report.violations.extend(sub.violations)
    return report
