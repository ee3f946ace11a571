"""Run-time expression evaluation over stores and dynamics.

Discrete fields read from the store, physical fields from the dynamics at
the given elapsed time; operators are homomorphic.  Everything works on
scalars and on numpy time arrays (used by the guard hitting-time search and
the trace sampler).
"""

from __future__ import annotations

import numpy as np

from ..lang.ast import EBin, EBool, ENull, ENum, EThis, EUn, EUnit, EVar


class EvalError(Exception):
    pass


UNIT = "unit"


def eval_expr(e, store, dyn=None, t=0.0):
    """Value of ``e``: ``store`` maps names to values (object fields plus
    process locals), ``dyn`` supplies physical fields at offset ``t``."""
    if isinstance(e, ENum):
        return float(e.value)
    if isinstance(e, EBool):
        return e.value
    if isinstance(e, ENull):
        return None
    if isinstance(e, EUnit):
        return UNIT
    if isinstance(e, EThis):
        try:
            return store["this"]
        except KeyError:
            raise EvalError("`this` outside an object") from None
    if isinstance(e, EVar):
        if dyn is not None and e.name in dyn.fields:
            return dyn.value(e.name, t)
        try:
            return store[e.name]
        except KeyError:
            raise EvalError(f"unbound name {e.name!r}") from None
    if isinstance(e, EUn):
        v = eval_expr(e.arg, store, dyn, t)
        if e.op == "-":
            return -v
        if e.op == "!":
            return np.logical_not(v) if isinstance(v, np.ndarray) else (not v)
        raise EvalError(f"unknown unary operator {e.op!r}")
    if isinstance(e, EBin):
        return _binop(e, store, dyn, t)
    raise EvalError(f"cannot evaluate {type(e).__name__}")


def _binop(e, store, dyn, t):
    a = eval_expr(e.left, store, dyn, t)
    b = eval_expr(e.right, store, dyn, t)
    op = e.op
    if op == "&&":
        return np.logical_and(a, b)
    if op == "||":
        return np.logical_or(a, b)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if np.any(np.asarray(b) == 0):
            raise EvalError("division by zero")
        return a / b
    if op == "<=":
        return np.less_equal(a, b)
    if op == ">=":
        return np.greater_equal(a, b)
    if op == "<":
        return np.less(a, b)
    if op == ">":
        return np.greater(a, b)
    if op == "==":
        return _eq(a, b)
    if op == "!=":
        return np.logical_not(_eq(a, b))
    raise EvalError(f"unknown operator {op!r}")


def _eq(a, b):
    if isinstance(a, (float, np.ndarray)) or isinstance(b, (float, np.ndarray)):
        return np.equal(a, b)
    return a == b


def eval_expr_store(e, store):
    """Evaluation against a plain store (no dynamics); used by the
    integrator's right-hand side."""
    return eval_expr(e, store, None, 0.0)


def eval_bool(e, store, dyn=None, t=0.0, slack: float = 0.0) -> bool:
    """Boolean evaluation with comparison slack toward satisfaction; used
    for guard truth so that bisected event boundaries register."""
    v = _eval_slack(e, store, dyn, t, slack) if slack else eval_expr(e, store, dyn, t)
    return bool(v)


def eval_bool_vec(e, store, dyn, ts, slack: float = 0.0) -> np.ndarray:
    v = _eval_slack(e, store, dyn, ts, slack) if slack else eval_expr(e, store, dyn, ts)
    out = np.asarray(v)
    if out.shape == ():
        out = np.full(np.asarray(ts).shape, bool(v))
    return out.astype(bool)


def _eval_slack(e, store, dyn, t, slack):
    if isinstance(e, EBin):
        if e.op == "&&":
            return np.logical_and(_eval_slack(e.left, store, dyn, t, slack),
                                  _eval_slack(e.right, store, dyn, t, slack))
        if e.op == "||":
            return np.logical_or(_eval_slack(e.left, store, dyn, t, slack),
                                 _eval_slack(e.right, store, dyn, t, slack))
        if e.op in ("<=", "<"):
            a = eval_expr(e.left, store, dyn, t)
            b = eval_expr(e.right, store, dyn, t)
            return np.less_equal(a, b + slack) if e.op == "<=" else np.less(a, b + slack)
        if e.op in (">=", ">"):
            a = eval_expr(e.left, store, dyn, t)
            b = eval_expr(e.right, store, dyn, t)
            return np.greater_equal(a, b - slack) if e.op == ">=" else np.greater(a, b - slack)
        if e.op == "==":
            a = eval_expr(e.left, store, dyn, t)
            b = eval_expr(e.right, store, dyn, t)
            if isinstance(a, (float, np.ndarray)) and isinstance(b, (float, np.ndarray)):
                return np.less_equal(np.abs(a - b), slack)
            return _eq(a, b)
    if isinstance(e, EUn) and e.op == "!":
        # negation flips the slack direction; guards never nest negations
        # around comparisons in practice, keep exact semantics here
        return np.logical_not(eval_expr(e.arg, store, dyn, t))
    return eval_expr(e, store, dyn, t)
