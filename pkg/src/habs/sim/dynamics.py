"""Continuous dynamics: solving a class's ODE block from a store snapshot.

Linear systems with triangular dependencies (every paper-style example:
constant drains, gravity chains, limited growth) get an exact closed form
built from exponential polynomials; everything else falls back to a
high-order adaptive integrator with dense output.  Both satisfy the same
interface: a map from elapsed time to the evolved physical fields, with
time zero agreeing with the snapshot.
"""

from __future__ import annotations

import math
from typing import Dict, Mapping, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import solve_ivp

from ..lang.ast import EBin, EBool, ENum, EUn, EVar


class SolverError(Exception):
    pass


# ---------------------------------------------------------------------------
# exponential polynomials: sum of exp(r t) * p(t)

class ExpPoly:
    """Closed under +, scalar *, product and integration; exact evaluation."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Dict[float, np.ndarray]] = None):
        self.terms = {}
        if terms:
            for r, c in terms.items():
                c = np.trim_zeros(np.atleast_1d(np.asarray(c, dtype=float)), "b")
                if c.size:
                    self.terms[float(r)] = c

    @classmethod
    def const(cls, v: float) -> "ExpPoly":
        return cls({0.0: [v]})

    def is_const(self) -> bool:
        rates = list(self.terms)
        if not rates:
            return True
        return rates == [0.0] and self.terms[0.0].size == 1

    def const_value(self) -> float:
        if not self.terms:
            return 0.0
        if not self.is_const():
            raise SolverError("not a constant")
        return float(self.terms[0.0][0])

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        out = {r: c.copy() for r, c in self.terms.items()}
        for r, c in other.terms.items():
            if r in out:
                out[r] = npoly.polyadd(out[r], c)
            else:
                out[r] = c
        return ExpPoly(out)

    def scale(self, k: float) -> "ExpPoly":
        return ExpPoly({r: c * k for r, c in self.terms.items()})

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + other.scale(-1.0)

    def __mul__(self, other: "ExpPoly") -> "ExpPoly":
        out = ExpPoly()
        for r1, c1 in self.terms.items():
            for r2, c2 in other.terms.items():
                out = out + ExpPoly({r1 + r2: npoly.polymul(c1, c2)})
        return out

    def integrate(self) -> "ExpPoly":
        """One antiderivative (not anchored at zero)."""
        out = ExpPoly()
        for r, p in self.terms.items():
            if r == 0.0:
                out = out + ExpPoly({0.0: npoly.polyint(p)})
            else:
                # solve q' + r q = p coefficient-wise from the top degree
                q = np.zeros_like(p)
                for k in range(p.size - 1, -1, -1):
                    higher = (k + 1) * q[k + 1] if k + 1 < q.size else 0.0
                    q[k] = (p[k] - higher) / r
                out = out + ExpPoly({r: q})
        return out

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for r, c in self.terms.items():
            term = npoly.polyval(t, c)
            if r != 0.0:
                term = term * np.exp(r * t)
            out = out + term
        return out if out.shape else float(out)


# ---------------------------------------------------------------------------
# affine extraction:  expr  ==  a(t) + b * field   with b a constant

class _NotAffine(Exception):
    pass


def _affine(e, target: str, env: Mapping[str, ExpPoly]):
    if isinstance(e, ENum):
        return ExpPoly.const(float(e.value)), 0.0
    if isinstance(e, EBool):
        raise _NotAffine
    if isinstance(e, EVar):
        if e.name == target:
            return ExpPoly(), 1.0
        if e.name in env:
            return env[e.name], 0.0
        raise _NotAffine  # references a field that is not solved yet
    if isinstance(e, EUn) and e.op == "-":
        a, b = _affine(e.arg, target, env)
        return a.scale(-1.0), -b
    if isinstance(e, EBin):
        if e.op == "+":
            a1, b1 = _affine(e.left, target, env)
            a2, b2 = _affine(e.right, target, env)
            return a1 + a2, b1 + b2
        if e.op == "-":
            a1, b1 = _affine(e.left, target, env)
            a2, b2 = _affine(e.right, target, env)
            return a1 - a2, b1 - b2
        if e.op == "*":
            a1, b1 = _affine(e.left, target, env)
            a2, b2 = _affine(e.right, target, env)
            if b1 == 0.0 and b2 == 0.0:
                return a1 * a2, 0.0
            if b2 == 0.0 and a2.is_const():
                k = a2.const_value()
                return a1.scale(k), b1 * k
            if b1 == 0.0 and a1.is_const():
                k = a1.const_value()
                return a2.scale(k), b2 * k
            raise _NotAffine
        if e.op == "/":
            a1, b1 = _affine(e.left, target, env)
            a2, b2 = _affine(e.right, target, env)
            if b2 != 0.0 or not a2.is_const():
                raise _NotAffine
            k = a2.const_value()
            if k == 0.0:
                raise SolverError("division by zero in a derivative")
            return a1.scale(1.0 / k), b1 / k
    raise _NotAffine


def _solve_linear(a: ExpPoly, b: float, f0: float) -> ExpPoly:
    """Solution of f' = a(t) + b f with f(0) = f0."""
    if b == 0.0:
        F = a.integrate()
        return F + ExpPoly.const(f0 - F.eval(0.0))
    g = ExpPoly({-b: [1.0]}) * a
    G = g.integrate()
    ebt = ExpPoly({b: [1.0]})
    return ebt.scale(f0 - G.eval(0.0)) + ebt * G


# ---------------------------------------------------------------------------
# dynamics objects

class Dynamics:
    """Map from elapsed time to the evolved physical fields.

    ``initial`` is the full store snapshot at time zero; non-physical
    entries stay constant along the flow.
    """

    fields: tuple

    def value(self, name: str, t):
        raise NotImplementedError

    def store_at(self, dt: float) -> dict:
        raise NotImplementedError


class ConstantDynamics(Dynamics):
    """No physical block: nothing evolves."""

    def __init__(self, initial: dict):
        self.initial = dict(initial)
        self.fields = ()

    def value(self, name, t):
        v = self.initial[name]
        t = np.asarray(t, dtype=float)
        return v if not t.shape else np.full(t.shape, v)

    def store_at(self, dt):
        return dict(self.initial)


class ClosedFormDynamics(Dynamics):
    def __init__(self, initial: dict, solutions: Dict[str, ExpPoly]):
        self.initial = dict(initial)
        self.solutions = solutions
        self.fields = tuple(solutions)

    def value(self, name, t):
        sol = self.solutions.get(name)
        if sol is not None:
            return sol.eval(t)
        v = self.initial[name]
        t = np.asarray(t, dtype=float)
        return v if not t.shape else np.full(t.shape, v)

    def store_at(self, dt):
        out = dict(self.initial)
        for name, sol in self.solutions.items():
            out[name] = float(sol.eval(float(dt)))
        return out


class NumericDynamics(Dynamics):
    """Adaptive DOP853 with dense output, lazily extended in chunks."""

    def __init__(self, initial: dict, phys, rhs, chunk: float = 4.0,
                 rtol: float = 1e-11, atol: float = 1e-12):
        self.initial = dict(initial)
        self.fields = tuple(ph.name for ph in phys)
        self._rhs = rhs
        self._chunk = chunk
        self._rtol = rtol
        self._atol = atol
        self._segments = []  # list of OdeSolution
        self._end = 0.0

    def _extend(self, upto: float):
        while self._end < upto:
            span = max(self._chunk, upto - self._end)
            y0 = (np.array([self.initial[f] for f in self.fields])
                  if not self._segments else self._segments[-1][2])
            sol = solve_ivp(self._rhs, (0.0, span), y0, method="DOP853",
                            dense_output=True, rtol=self._rtol, atol=self._atol)
            if not sol.success:
                raise SolverError(f"integrator failure: {sol.message}")
            self._segments.append((self._end, self._end + span, sol.y[:, -1], sol.sol))
            self._end += span

    def _eval_vec(self, ts: np.ndarray) -> np.ndarray:
        if ts.size and ts.max() > self._end:
            self._extend(float(ts.max()))
        out = np.empty((len(self.fields), ts.size))
        for i, t in enumerate(ts.ravel()):
            for lo, hi, _, sol in self._segments:
                if lo <= t <= hi:
                    out[:, i] = sol(t - lo)
                    break
            else:
                if t == 0.0 and not self._segments:
                    out[:, i] = [self.initial[f] for f in self.fields]
                else:
                    raise SolverError(f"time {t} outside integrated range")
        return out

    def value(self, name, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if name not in self.fields:
            v = self.initial[name]
            return v if np.isscalar(t) or np.asarray(t).shape == () else np.full(t_arr.shape, v)
        if t_arr.size == 0:
            return t_arr
        vals = self._eval_vec(t_arr)[self.fields.index(name)]
        return float(vals[0]) if np.asarray(t).shape == () else vals

    def store_at(self, dt):
        out = dict(self.initial)
        vals = self._eval_vec(np.array([float(dt)]))
        for i, f in enumerate(self.fields):
            out[f] = float(vals[i, 0])
        return out


def solve_ode(phys, initial: Mapping[str, object], force_numeric: bool = False) -> Dynamics:
    """Dynamics for the physical block from the given snapshot.

    Tries the exact triangular/linear closed form first and falls back to
    numeric integration; ``force_numeric`` skips the closed form (used by
    the cross-check tests).
    """
    initial = dict(initial)
    if not phys:
        return ConstantDynamics(initial)
    if not force_numeric:
        sols = _closed_form(phys, initial)
        if sols is not None:
            return ClosedFormDynamics(initial, sols)
    from .evalexpr import eval_expr_store  # local import to avoid a cycle

    names = [ph.name for ph in phys]

    def rhs(_t, y):
        store = dict(initial)
        store.update(zip(names, y))
        return [eval_expr_store(ph.deriv, store) for ph in phys]

    return NumericDynamics(initial, phys, rhs)


def _closed_form(phys, initial) -> Optional[Dict[str, ExpPoly]]:
    env: Dict[str, ExpPoly] = {}
    for name, v in initial.items():
        if name not in {ph.name for ph in phys} and isinstance(v, (int, float)) \
                and not isinstance(v, bool):
            env[name] = ExpPoly.const(float(v))
    pending = list(phys)
    solved: Dict[str, ExpPoly] = {}
    progress = True
    while pending and progress:
        progress = False
        for ph in list(pending):
            try:
                a, b = _affine(ph.deriv, ph.name, env)
            except _NotAffine:
                continue
            sol = _solve_linear(a, b, float(initial[ph.name]))
            solved[ph.name] = sol
            env[ph.name] = sol
            pending.remove(ph)
            progress = True
    return solved if not pending else None


# ---------------------------------------------------------------------------
# first hitting times along a dynamics

def first_time(pred, horizon: float, scan_step: float = 1.0 / 32.0,
               tol: float = 1e-9) -> float:
    """Least t in [0, horizon] with pred(t) true, by scanning then bisecting
    the bracketing interval; ``pred`` must accept numpy arrays.  Returns
    ``inf`` when no sample hits within the horizon.
    """
    if horizon < 0:
        return math.inf
    if bool(pred(np.array([0.0]))[0]):
        return 0.0
    chunk = 4096
    lo = 0.0
    while lo < horizon:
        hi = min(lo + chunk * scan_step, horizon)
        n = max(2, int(round((hi - lo) / scan_step)) + 1)
        ts = np.linspace(lo, hi, n)
        vals = np.asarray(pred(ts), dtype=bool)
        idx = np.argmax(vals)
        if vals[idx]:
            if idx == 0:
                return _bisect(pred, max(lo - scan_step, 0.0), float(ts[0]), tol)
            return _bisect(pred, float(ts[idx - 1]), float(ts[idx]), tol)
        lo = hi
    return math.inf


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    # invariant: pred(hi) is true; weak relations make the boundary attained
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bool(pred(np.array([mid]))[0]):
            hi = mid
        else:
            lo = mid
    return hi
