"""Scenario scripts: external calls injected into open programs.

Line format (``#`` comments and blank lines allowed):

    at <time> call <object>.<method>(<literal>, ...)

Objects are named ``<classname-lowercase><creation-index>``, e.g. the first
Billard instance is ``billard1``.  Literals are numbers, ``true`` or
``false``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class ScriptEvent:
    time: float
    obj: str
    method: str
    args: tuple


_LINE = re.compile(
    r"at\s+(?P<time>[0-9.]+)\s+call\s+(?P<obj>\w+)\.(?P<method>\w+)"
    r"\((?P<args>[^)]*)\)\s*$")


def parse_script(text: str) -> list:
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ScenarioError(f"script line {lineno}: cannot parse {raw!r}")
        args = []
        for a in filter(None, (s.strip() for s in m.group("args").split(","))):
            if a == "true":
                args.append(True)
            elif a == "false":
                args.append(False)
            else:
                try:
                    args.append(float(Fraction(a)))
                except ValueError:
                    raise ScenarioError(
                        f"script line {lineno}: bad literal {a!r}") from None
        events.append(ScriptEvent(float(m.group("time")), m.group("obj"),
                                  m.group("method"), tuple(args)))
    return sorted(events, key=lambda ev: ev.time)
