"""Piecewise-constant rates and their piecewise-linear integrals.

``StepFunction`` holds right-continuous piecewise-constant functions (flow
rates); ``BreakpointFunction`` holds continuous piecewise-linear ones
(cumulative flows, queue lengths, exit times). Both are immutable and backed by
float64 arrays. Breakpoints closer than ``EPS_TIME`` are merged, keeping the
earlier time.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import DomainError, NotAttained

EPS_TIME = 1e-9


def _merge_times(times: np.ndarray, eps: float) -> np.ndarray:
    """Indices of ``times`` kept when merging points closer than ``eps``.

    The first and last point always survive; an interior point is dropped when
    it lies within ``eps`` of the previously kept point or of the last point.
    """
    n = len(times)
    if n <= 2 or np.min(np.diff(times)) >= eps:
        return np.arange(n)
    keep = [0]
    end = times[-1]
    for i in range(1, n - 1):
        if times[i] - times[keep[-1]] >= eps and end - times[i] >= eps:
            keep.append(i)
    keep.append(n - 1)
    return np.asarray(keep)


class StepFunction:
    """Right-continuous step function on ``[times[0], times[-1])``.

    ``values[i]`` is the value on ``[times[i], times[i+1])``.
    """

    __slots__ = ("times", "values")

    def __init__(self, times, values, eps: float = EPS_TIME, simplify: bool = True):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or v.ndim != 1 or len(t) != len(v) + 1 or len(t) < 2:
            raise ValueError("need len(times) == len(values) + 1 >= 2")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if eps > 0 and len(t) > 2:
            keep = _merge_times(t, eps)
            if len(keep) != len(t):
                # a merged interval takes the value of its longest sub-piece,
                # so sub-eps slivers disappear
                lengths = np.diff(t)
                new_v = np.empty(len(keep) - 1)
                for k in range(len(keep) - 1):
                    lo, hi = keep[k], keep[k + 1]
                    new_v[k] = v[lo + int(np.argmax(lengths[lo:hi]))]
                t, v = t[keep], new_v
        if simplify and len(v) > 1:
            change = np.concatenate(([True], v[1:] != v[:-1]))
            if not change.all():
                idx = np.flatnonzero(change)
                t = np.concatenate((t[idx], t[-1:]))
                v = v[idx]
        t.setflags(write=False)
        v.setflags(write=False)
        self.times = t
        self.values = v

    # -- constructors ----------------------------------------------------------

    @classmethod
    def constant(cls, value: float, start: float, end: float) -> "StepFunction":
        return cls([start, end], [value])

    @classmethod
    def zero(cls, start: float, end: float) -> "StepFunction":
        return cls([start, end], [0.0])

    @classmethod
    def from_pieces(cls, pieces, start: float, end: float, fill: float = 0.0) -> "StepFunction":
        """Build from ``(a, b, value)`` triples; gaps are filled with ``fill``.

        Pieces are clipped to ``[start, end)`` and must not overlap.
        """
        times = [start]
        values = []
        cur = start
        for a, b, val in sorted(pieces, key=lambda p: p[0]):
            a, b = max(a, start), min(b, end)
            if b <= a:
                continue
            if a < cur:
                raise ValueError("overlapping pieces")
            if a > cur:
                values.append(fill)
                times.append(a)
            values.append(val)
            times.append(b)
            cur = b
        if cur < end:
            values.append(fill)
            times.append(end)
        return cls(times, values)

    # -- basic properties --------------------------------------------------------

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def __repr__(self) -> str:
        return f"StepFunction(times={self.times.tolist()}, values={self.values.tolist()})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, StepFunction) and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    def __call__(self, theta):
        return self.eval(theta)

    def eval(self, theta):
        """Value at ``theta``; ``theta == end`` returns the last value (left limit)."""
        th = np.asarray(theta, dtype=float)
        if np.any(th < self.times[0]) or np.any(th > self.times[-1]):
            raise DomainError(f"theta outside [{self.start}, {self.end}]")
        idx = np.searchsorted(self.times, th, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if out.ndim == 0 else out

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def integral(self, a: float | None = None, b: float | None = None) -> float:
        F = self.integrate()
        a = self.start if a is None else a
        b = self.end if b is None else b
        return F(b) - F(a)

    def integrate(self) -> "BreakpointFunction":
        """Cumulative integral from the domain start; exact up to one rounding per piece."""
        areas = self.values * np.diff(self.times)
        cum = np.concatenate(([0.0], np.cumsum(areas)))
        return BreakpointFunction(self.times, cum, eps=0.0)

    # -- algebra -----------------------------------------------------------------

    def refine(self, times) -> "StepFunction":
        """Same function on a grid that contains ``times`` (no simplification)."""
        grid = np.union1d(self.times, np.asarray(times, dtype=float))
        grid = grid[(grid >= self.start) & (grid <= self.end)]
        mids = 0.5 * (grid[:-1] + grid[1:])
        return StepFunction(grid, self.eval(mids), eps=0.0, simplify=False)

    def _binary(self, other, op) -> "StepFunction":
        if isinstance(other, StepFunction):
            if self.start != other.start or self.end != other.end:
                raise DomainError("operands have different domains")
            grid = np.union1d(self.times, other.times)
            mids = 0.5 * (grid[:-1] + grid[1:])
            return StepFunction(grid, op(self.eval(mids), other.eval(mids)))
        return StepFunction(self.times, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction(self.times, -self.values)

    def scale(self, c: float) -> "StepFunction":
        return StepFunction(self.times, self.values * float(c))

    def shift(self, delta: float) -> "StepFunction":
        return StepFunction(self.times + delta, self.values)

    def restrict(self, start: float, end: float, fill: float = 0.0) -> "StepFunction":
        """Restrict/extend to ``[start, end)``; uncovered parts take ``fill``."""
        pieces = [(a, b, v) for a, b, v in zip(self.times[:-1], self.times[1:], self.values)]
        return StepFunction.from_pieces(pieces, start, end, fill=fill)

    # -- export --------------------------------------------------------------------

    def csv_rows(self):
        """Breakpoint rows plus a midpoint row per piece, so the step shape survives plotting."""
        rows = []
        for a, b, v in zip(self.times[:-1], self.times[1:], self.values):
            rows.append((a, v))
            rows.append((0.5 * (a + b), v))
        rows.append((self.times[-1], self.values[-1]))
        return rows

    def to_csv(self, path: str | Path | None = None) -> str:
        return _write_csv(self.csv_rows(), path)


class BreakpointFunction:
    """Continuous piecewise-linear function through ``(times[i], values[i])``."""

    __slots__ = ("times", "values")

    def __init__(self, times, values, eps: float = EPS_TIME):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if eps > 0 and len(t) > 2:
            keep = _merge_times(t, eps)
            t, v = t[keep], v[keep]
        t.setflags(write=False)
        v.setflags(write=False)
        self.times = t
        self.values = v

    @classmethod
    def zero(cls, start: float, end: float) -> "BreakpointFunction":
        return cls([start, end], [0.0, 0.0])

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def __repr__(self) -> str:
        return f"BreakpointFunction(times={self.times.tolist()}, values={self.values.tolist()})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, BreakpointFunction) and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    def __call__(self, theta):
        return self.eval(theta)

    def eval(self, theta):
        th = np.asarray(theta, dtype=float)
        tol = EPS_TIME
        if np.any(th < self.times[0] - tol) or np.any(th > self.times[-1] + tol):
            raise DomainError(f"theta outside [{self.start}, {self.end}]")
        out = np.interp(th, self.times, self.values)
        return float(out) if out.ndim == 0 else out

    def is_nondecreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) >= -tol))

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)

    def derivative(self) -> StepFunction:
        return StepFunction(self.times, self.slopes(), eps=0.0)

    # -- algebra -------------------------------------------------------------------

    def _binary(self, other, op) -> "BreakpointFunction":
        if isinstance(other, BreakpointFunction):
            lo, hi = max(self.start, other.start), min(self.end, other.end)
            if hi < lo:
                raise DomainError("operands have disjoint domains")
            grid = np.union1d(self.times, other.times)
            grid = grid[(grid >= lo) & (grid <= hi)]
            return BreakpointFunction(grid, op(self.eval(grid), other.eval(grid)), eps=0.0)
        return BreakpointFunction(self.times, op(self.values, float(other)), eps=0.0)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        if isinstance(other, BreakpointFunction):
            raise TypeError("product of two piecewise-linear functions is not piecewise linear")
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return BreakpointFunction(self.times, -self.values, eps=0.0)

    def scale(self, c: float) -> "BreakpointFunction":
        return BreakpointFunction(self.times, self.values * float(c), eps=0.0)

    def shift(self, delta: float) -> "BreakpointFunction":
        """``G(theta) = F(theta - delta)``: the graph moved right by ``delta``."""
        return BreakpointFunction(self.times + delta, self.values, eps=0.0)

    def restrict(self, start: float, end: float) -> "BreakpointFunction":
        """Restrict to ``[start, end]``; outside the domain the end values are held."""
        inner = self.times[(self.times > start) & (self.times < end)]
        grid = np.concatenate(([start], inner, [end])) if end > start else np.array([start])
        return BreakpointFunction(grid, np.interp(grid, self.times, self.values), eps=0.0)

    def sup_distance(self, other: "BreakpointFunction") -> float:
        """Exact sup-norm of the difference (attained at a breakpoint)."""
        grid = np.union1d(self.times, other.times)
        return float(np.max(np.abs(np.interp(grid, self.times, self.values)
                                   - np.interp(grid, other.times, other.values))))

    # -- inverses of nondecreasing functions ------------------------------------------

    def _check_range(self, y: float, tol: float):
        if y < self.values[0] - tol or y > self.values[-1] + tol:
            raise NotAttained(f"{y} outside [{self.values[0]}, {self.values[-1]}]")

    def max_preimage(self, y: float, tol: float = 0.0) -> float:
        """Largest ``theta`` with ``F(theta) = y`` (right end of a flat piece)."""
        self._check_range(y, tol)
        v, t = self.values, self.times
        k = int(np.searchsorted(v, y, side="right"))
        if k >= len(v):
            return float(t[-1])
        if k == 0:
            return float(t[0])
        v0, v1 = v[k - 1], v[k]
        return float(t[k - 1] + (y - v0) / (v1 - v0) * (t[k] - t[k - 1]))

    def min_preimage(self, y: float, tol: float = 0.0) -> float:
        """Smallest ``theta`` with ``F(theta) = y`` (left end of a flat piece)."""
        self._check_range(y, tol)
        v, t = self.values, self.times
        k = int(np.searchsorted(v, y, side="left"))
        if k <= 0:
            return float(t[0])
        if k >= len(v):
            return float(t[-1])
        v0, v1 = v[k - 1], v[k]
        return float(t[k - 1] + (y - v0) / (v1 - v0) * (t[k] - t[k - 1]))

    # -- export --------------------------------------------------------------------------

    def csv_rows(self):
        return list(zip(self.times, self.values))

    def to_csv(self, path: str | Path | None = None) -> str:
        return _write_csv(self.csv_rows(), path)


def integrate(f: StepFunction) -> BreakpointFunction:
    return f.integrate()


def max_preimage(F: BreakpointFunction, y: float) -> float:
    return F.max_preimage(y)


def _write_csv(rows, path) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "value"])
    for theta, value in rows:
        w.writerow([repr(float(theta)), repr(float(value))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
