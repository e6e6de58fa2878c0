"""Delay processes, in-flight bookkeeping and the wall-clock time model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass
class DelayModel:
    """Delay process tau(t).

    kind ``fixed`` uses ``tau``; ``cyclic`` uses ``n`` (tau = n); ``random``
    draws from ``probs`` over {0, ..., len(probs) - 1} with its own ``seed``.
    """

    kind: str = "fixed"
    tau: int = 0
    n: int = 1
    probs: tuple = ()
    seed: int = 0
    _rng: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("fixed", "cyclic", "random"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "fixed" and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.kind == "cyclic" and self.n < 1:
            raise ValueError("n must be at least 1")
        if self.kind == "random":
            p = np.asarray(self.probs, dtype=float)
            if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
                raise ValueError("probs must be a distribution over {0..tau_max}")
            self.probs = tuple(float(v) for v in p / p.sum())
        self.reset()

    @classmethod
    def fixed(cls, tau: int) -> "DelayModel":
        return cls("fixed", tau=tau)

    @classmethod
    def cyclic(cls, n: int) -> "DelayModel":
        return cls("cyclic", n=n)

    @classmethod
    def bounded_random(cls, probs, seed: int = 0) -> "DelayModel":
        return cls("random", probs=tuple(probs), seed=seed)

    def reset(self) -> None:
        self._rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(0xDE1A,)))
        self._table = None
        self._table_pos = 0

    @property
    def tau_max(self) -> int:
        if self.kind == "fixed":
            return self.tau
        if self.kind == "cyclic":
            return self.n
        return len(self.probs) - 1

    @property
    def second_moment(self) -> float:
        """E[tau^2] (the B^2 of the random-delay bound)."""
        if self.kind == "random":
            k = np.arange(len(self.probs))
            return float(np.dot(self.probs, k * k))
        return float(self.tau_max ** 2)

    def _draw_random(self) -> int:
        if self._table is None or self._table_pos >= self._table.size:
            self._table = self._rng.choice(len(self.probs), size=4096, p=self.probs)
            self._table_pos = 0
        v = int(self._table[self._table_pos])
        self._table_pos += 1
        return v


def draw_delay(dm: DelayModel, t: int) -> int:
    """tau(t), clamped so that t - tau(t) >= 0."""
    if t < 1:
        raise ValueError("t must be at least 1")
    if dm.kind == "fixed":
        tau = dm.tau
    elif dm.kind == "cyclic":
        tau = dm.n
    else:
        tau = dm._draw_random()
    return min(tau, t)


class DelayQueue:
    """Parameter snapshots and the one-to-one assignment t -> t - tau(t).

    Snapshots x(s) are pushed as they are produced. ``take(t, target)``
    returns the issue index whose snapshot the gradient applied at step t is
    computed from, or ``None`` when nothing is available yet (warm-up,
    ``target < 1``).

    Indices are never reused. If ``target`` was already delivered the nearest
    unused index in the window [t - tau_max, t] is taken instead (older on
    ties), and an index that is about to leave the window is served first, so
    with tau_max fixed every index past warm-up is delivered exactly once.
    """

    def __init__(self, tau_max: int):
        if tau_max < 0:
            raise ValueError("tau_max must be nonnegative")
        self.tau_max = tau_max
        self._snap: dict[int, np.ndarray] = {}
        self._used: set[int] = set()
        self.delivered: list[int] = []

    def push(self, s: int, x: np.ndarray) -> None:
        self._snap[s] = x
        stale = s - self.tau_max - 1
        self._snap.pop(stale, None)
        self._used.discard(stale)

    def snapshot(self, s: int) -> np.ndarray:
        return self._snap[s]

    def take(self, t: int, target: int) -> int | None:
        if target < 1:
            return None
        lo = max(1, t - self.tau_max)
        if lo == t - self.tau_max and lo not in self._used and lo in self._snap and lo != target:
            choice = lo
        elif target not in self._used:
            choice = target
        else:
            free = [s for s in range(lo, t + 1) if s not in self._used and s in self._snap]
            if not free:
                return None
            choice = min(free, key=lambda s: (abs(s - target), s))
        self._used.add(choice)
        self.delivered.append(choice)
        return choice


@dataclass(frozen=True)
class TimeModel:
    """Costs in units of one per-sample gradient evaluation."""

    C: float = 1.0
    m: int = 1
    n: int = 1

    def __post_init__(self):
        if not (self.C > 0 and self.m >= 1 and self.n >= 1):
            raise ValueError("C, m and n must be positive")


ARCHS = ("centralized", "cyclic", "tree")


def _exact(v) -> Fraction:
    return Fraction(v) if isinstance(v, int) else Fraction(str(v))


def wallclock_iterations(tm: TimeModel, arch: str, T_wall) -> int:
    """Iterations completed in ``T_wall`` units: T, T n / m and T / m."""
    if not T_wall > 0:
        raise ValueError("T_wall must be positive")
    T = _exact(T_wall)
    if arch == "centralized":
        return math.floor(T)
    if arch == "cyclic":
        return math.floor(T * tm.n / tm.m)
    if arch == "tree":
        return math.floor(T / tm.m)
    raise ValueError(f"unknown architecture {arch!r}")


def update_interval(tm: TimeModel, arch: str) -> Fraction:
    """Wall-clock units between master updates.

    Centralized: one m-sample gradient per update (m units). Cyclic: the
    master is fed every m / n units but spends C per update, so max(m/n, C).
    Tree: one aggregate every m units.
    """
    if arch == "centralized":
        return Fraction(tm.m)
    if arch == "cyclic":
        return max(Fraction(tm.m, tm.n), _exact(tm.C))
    if arch == "tree":
        return Fraction(tm.m)
    raise ValueError(f"unknown architecture {arch!r}")
