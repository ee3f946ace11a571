"""Dense-time traces of a run and their suspension-subtraces.

A trace maps object-local time (normalized to start at 0 when the object is
created) to stores: at a clock where configurations exist the final one
wins, between clocks the stored dynamics interpolate, and after the last
configuration the last dynamics run out to the horizon.

A suspension-subtrace starts where a process terminates (attributed to the
method) or suspends (attributed to the await's program point) and ends at
(and includes) the next non-trivial scheduling on the same object.  A
scheduling is trivial when the awakened process deschedules again without
doing anything, i.e. it only re-suspends.  Zero-duration subtraces are
dropped; if nothing non-trivial is ever scheduled the subtrace is truncated
at the horizon and flagged open-ended.  Each subtrace carries a local clock
``t`` that starts at 0 with unit rate.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .runtime import Run


class TraceError(Exception):
    pass


@dataclass
class Segment:
    start: float      # object-local time
    store: dict
    dyn: object


@dataclass
class Trace:
    oid: str
    cls_name: Optional[str]
    created_at: float        # global clock of creation
    end: float               # object-local end (horizon - created_at)
    segments: list           # ordered, tiling [0, end] without gaps

    def _segment_index(self, t: float) -> int:
        starts = [s.start for s in self.segments]
        i = bisect.bisect_right(starts, t) - 1
        return max(i, 0)

    def value(self, name: str, t: float):
        seg = self.segments[self._segment_index(t)]
        if hasattr(seg.dyn, "fields") and name in seg.dyn.fields:
            return float(seg.dyn.value(name, t - seg.start))
        try:
            return seg.store[name]
        except KeyError:
            raise TraceError(f"object {self.oid} has no field {name!r}") from None

    def state(self, t: float) -> dict:
        seg = self.segments[self._segment_index(t)]
        out = dict(seg.store)
        for name in getattr(seg.dyn, "fields", ()):
            out[name] = float(seg.dyn.value(name, t - seg.start))
        return out

    def sample(self, names, ts: np.ndarray) -> dict:
        """Vectorized sampling: name -> array aligned with ``ts``."""
        ts = np.asarray(ts, dtype=float)
        out = {n: np.empty(ts.shape) for n in names}
        starts = np.array([s.start for s in self.segments])
        idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, None)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if not mask.any():
                continue
            local = ts[mask] - seg.start
            for n in names:
                if hasattr(seg.dyn, "fields") and n in seg.dyn.fields:
                    out[n][mask] = seg.dyn.value(n, local)
                else:
                    v = seg.store.get(n)
                    if not isinstance(v, (int, float)) or isinstance(v, bool):
                        raise TraceError(f"field {n!r} is not numeric on {self.oid}")
                    out[n][mask] = v
        return out

    def boundaries(self) -> list:
        return [s.start for s in self.segments] + [self.end]


def extract_trace(run: Run, oid: str) -> Trace:
    """Trace of one object, normalized to start at 0."""
    checkpoints = []  # (clock, store, dyn) at the final configuration per clock
    created_at = None
    for rec in run.records:
        obj = rec.config.objects.get(oid)
        if obj is None:
            continue
        if created_at is None:
            created_at = rec.clock
        if checkpoints and checkpoints[-1][0] == rec.clock:
            checkpoints[-1] = (rec.clock, obj.store, obj.dyn)
        else:
            checkpoints.append((rec.clock, obj.store, obj.dyn))
    if created_at is None:
        raise TraceError(f"object {oid!r} does not occur in the run")
    segments = [Segment(c - created_at, store, dyn) for c, store, dyn in checkpoints]
    end = max(run.horizon - created_at, segments[-1].start)
    return Trace(oid, _cls_name(run, oid), created_at, end, segments)


def _cls_name(run: Run, oid: str):
    for rec in reversed(run.records):
        obj = rec.config.objects.get(oid)
        if obj is not None:
            return obj.cls.name if obj.cls is not None else None
    return None


# ---------------------------------------------------------------------------
# suspension-subtraces

@dataclass
class SuspensionSubtrace:
    trace: Trace
    member: object           # method name (str), "init", or an await point id (int)
    start: float             # object-local time of the descheduling
    end: float               # object-local time of the next non-trivial scheduling
    open_ended: bool = False # truncated at the horizon, nothing scheduled after

    @property
    def duration(self) -> float:
        return self.end - self.start

    def local_times(self, ts) -> np.ndarray:
        """Subtrace clock t (starts at 0, unit rate) for trace times."""
        return np.asarray(ts, dtype=float) - self.start


def _note_dict(note: str) -> dict:
    out = {}
    for part in note.split():
        if "=" in part:
            k, _, v = part.partition("=")
            out[k] = v
    return out


def _scheduling_trivial(run: Run, pos: int, oid: str) -> bool:
    """True iff the process activated at record ``pos`` deschedules again
    without performing any action (it only re-suspends)."""
    for rec in run.records[pos + 1:]:
        if rec.oid != oid or rec.rule in ("8", "script"):
            continue  # message delivery does not involve the active process
        if rec.rule == "2":
            return True
        if rec.rule != "1":
            return False
    return True  # run ended while the process held the object: nothing happened


def suspension_subtraces(trace: Trace, run: Run, member=None) -> list:
    """All suspension-subtraces of the traced object, optionally filtered by
    method name / "init" / await point id."""
    oid = trace.oid
    events = []  # (pos, clock, kind, member)
    for pos, rec in enumerate(run.records):
        if rec.oid != oid:
            continue
        data = _note_dict(rec.note)
        if rec.rule == "5":
            events.append((pos, rec.clock, "desched", data.get("member", "?")))
        elif rec.rule == "2":
            point = data.get("point")
            events.append((pos, rec.clock, "desched",
                           int(point) if point and point.isdigit() else point))
        elif rec.rule in ("3", "4"):
            events.append((pos, rec.clock, "sched", data.get("member", "?")))

    out = []
    for k, (pos, clock, kind, who) in enumerate(events):
        if kind != "desched":
            continue
        if member is not None and who != member:
            continue
        end_clock = None
        for pos2, clock2, kind2, _ in events[k + 1:]:
            if kind2 == "sched" and not _scheduling_trivial(run, pos2, oid):
                end_clock = clock2
                break
        start_local = clock - trace.created_at
        if end_clock is None:
            end_local = trace.end
            if end_local > start_local:
                out.append(SuspensionSubtrace(trace, who, start_local, end_local,
                                              open_ended=True))
        elif end_clock > clock:
            out.append(SuspensionSubtrace(trace, who, start_local,
                                          end_clock - trace.created_at))
    return out


def all_subtraces(run: Run) -> dict:
    """(oid, member/point) -> list of subtraces, for every object."""
    out: dict = {}
    last = run.records[-1].config
    for oid in last.objects:
        if last.objects[oid].cls is None:
            continue  # the main pseudo-object has no fields to monitor
        trace = extract_trace(run, oid)
        for st in suspension_subtraces(trace, run):
            out.setdefault((oid, st.member), []).append(st)
    return out
