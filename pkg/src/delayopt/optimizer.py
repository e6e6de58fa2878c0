"""Delayed dual-averaging and mirror-descent updates.

A :class:`SolverState` may hold a stack of independent replicas: ``x`` has
shape ``(R, d)`` (or ``(d,)`` for a single run) and every update acts row-wise.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Ball, EuclideanProx, StepSchedule, da_argmin, md_step, norm
from .delay import DelayModel, DelayQueue, draw_delay
from .oracle import Objective, StreamBank, gram_max_eig

METHODS = ("dual-averaging", "mirror-descent")
WEIGHT_TOL = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass
class GradientEvent:
    g: np.ndarray
    computed_at: int
    worker: int = 0
    weight: float = 1.0

    def __post_init__(self):
        if self.computed_at < 0:
            raise ValueError("computed_at must be nonnegative")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")


@dataclass
class SolverState:
    """Iterate x(t), dual sum z(t) and the compensated running sum of x(2..t)."""

    method: str
    prox: EuclideanProx
    schedule: StepSchedule
    x: np.ndarray
    z: np.ndarray
    t: int = 1
    running_sum: np.ndarray = None
    _comp: np.ndarray = field(default=None, repr=False)
    count: int = 0

    @classmethod
    def start(cls, method: str, prox: EuclideanProx, schedule: StepSchedule,
              x0=None, replicas: int | None = None) -> "SolverState":
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        shape = (prox.dim,) if replicas is None else (replicas, prox.dim)
        z = np.zeros(shape)
        if method == "dual-averaging":
            # x(1) minimises psi over the domain
            x = np.broadcast_to(prox.domain.project(prox.center), shape).copy()
        else:
            x0 = prox.center if x0 is None else np.asarray(x0, dtype=float)
            if not np.all(prox.domain.contains(x0)):
                raise ValueError("x0 lies outside the domain")
            x = np.broadcast_to(x0, shape).copy()
        return cls(method, prox, schedule, x, z, 1, np.zeros(shape), np.zeros(shape), 0)

    def step(self, g: np.ndarray) -> None:
        """Apply one (already combined) gradient and advance t."""
        if self.method == "dual-averaging":
            self.z += g
            self.t += 1
            self.x = da_argmin(self.prox, self.z, self.schedule.alpha(self.t))
        else:
            self.x = md_step(self.prox, self.x, g, self.schedule.alpha(self.t), check_domain=False)
            self.t += 1
        # Kahan summation of x(t+1)
        y = self.x - self._comp
        total = self.running_sum + y
        self._comp = (total - self.running_sum) - y
        self.running_sum = total
        self.count += 1


def apply_single(s: SolverState, ev: GradientEvent) -> SolverState:
    if ev.weight != 1.0:
        raise ValueError("single-gradient updates need weight 1")
    s.step(np.asarray(ev.g, dtype=float))
    return s


def combine(evs: list[GradientEvent]) -> np.ndarray:
    if not evs:
        raise ValueError("no gradient events to combine")
    total = math.fsum(ev.weight for ev in evs)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights sum to {total}, not 1")
    g = evs[0].weight * np.asarray(evs[0].g, dtype=float)
    for ev in evs[1:]:
        g = g + ev.weight * np.asarray(ev.g, dtype=float)
    return g


def apply_combined(s: SolverState, evs: list[GradientEvent]) -> SolverState:
    s.step(combine(evs))
    return s


def averaged_iterate(s: SolverState) -> np.ndarray:
    """(1/T) sum_{t=1}^T x(t+1)."""
    if s.count == 0:
        raise ValueError("no update has been applied yet")
    return s.running_sum / s.count


@dataclass
class Trajectory:
    """Checkpointed gaps of one run (all replicas).

    ``f_avg_gap`` and ``f_iter_gap`` have shape ``(R, K)`` for the ``K``
    checkpoints in ``t``. ``delays`` holds the realized delay of every update
    (-1 where a warm-up zero gradient was applied). ``iterations_to_eps`` is
    ``inf`` for replicas that never reached the target.
    """

    t: np.ndarray
    wallclock: np.ndarray
    f_avg_gap: np.ndarray
    f_iter_gap: np.ndarray
    delays: np.ndarray
    warmup: np.ndarray
    interval: Fraction
    f_star: float
    x_final: np.ndarray
    x_avg_final: np.ndarray
    iterations_to_eps: np.ndarray | None = None
    epsilon: float | None = None
    iterates: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.f_avg_gap.shape[0]

    @property
    def steps(self) -> int:
        return int(self.delays.size)

    def delay_at_checkpoints(self) -> np.ndarray:
        return self.delays[self.t - 1]

    @property
    def time_to_eps(self) -> np.ndarray | None:
        if self.iterations_to_eps is None:
            return None
        return self.iterations_to_eps * float(self.interval)

    def final_gap(self) -> np.ndarray:
        return self.f_avg_gap[:, -1]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.t, self.wallclock, self.f_avg_gap, self.f_iter_gap, self.delays,
                    self.x_final, self.x_avg_final):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.iterations_to_eps is not None:
            h.update(np.ascontiguousarray(self.iterations_to_eps).tobytes())
        return h.hexdigest()

    def rows(self, replicate: int | None = None) -> list[tuple]:
        """``(t, wallclock, f_avg_gap, f_iter_gap, delay_applied)`` per checkpoint.

        Gaps are the median over replicas unless ``replicate`` is given.
        """
        if replicate is None:
            avg = np.median(self.f_avg_gap, axis=0)
            it = np.median(self.f_iter_gap, axis=0)
        else:
            avg, it = self.f_avg_gap[replicate], self.f_iter_gap[replicate]
        d = self.delay_at_checkpoints()
        return [(int(t), float(w), float(a), float(b), int(k))
                for t, w, a, b, k in zip(self.t, self.wallclock, avg, it, d)]


def log_checkpoints(T: int, count: int = 50) -> np.ndarray:
    """Roughly log-spaced integer checkpoints in [1, T], always including T."""
    if count <= 1:
        return np.array([T])
    pts = np.unique(np.round(np.logspace(0, math.log10(T), count)).astype(int))
    pts = pts[(pts >= 1) & (pts <= T)]
    return np.unique(np.append(pts, T))


class Recorder:
    """Collects checkpoint gaps and the first step each replica reaches epsilon.

    With ``epsilon`` set, the averaged iterate of every step is buffered and
    evaluated in blocks, so the reported crossing is exact.
    """

    BLOCK = 32

    def __init__(self, obj: Objective, f_star: float, T: int, replicas: int,
                 checkpoints=None, epsilon: float | None = None, stop_at_eps: bool = False,
                 record_iterates: bool = False):
        self.obj, self.f_star, self.T, self.R = obj, f_star, T, replicas
        cps = log_checkpoints(T) if checkpoints is None else np.unique(np.asarray(checkpoints, dtype=int))
        if cps.size and (cps[0] < 1 or cps[-1] > T):
            raise ValueError("checkpoints must lie in [1, T]")
        self.checkpoints = cps
        self._cp_set = set(int(c) for c in cps)
        self.epsilon, self.stop_at_eps = epsilon, stop_at_eps
        self.rows_t, self.avg, self.it = [], [], []
        self.delays = np.full(T, -1, dtype=np.int64)
        self.hit = np.full(replicas, np.inf)
        self._buf, self._buf_t = [], []
        self.iterates = [] if record_iterates else None
        self.done = False

    def gaps(self, X: np.ndarray) -> np.ndarray:
        return self.obj.value(X) - self.f_star

    def start(self, x1: np.ndarray) -> None:
        if self.iterates is not None:
            self.iterates.append(x1.copy())
        if self.epsilon is not None:
            g0 = np.atleast_1d(self.gaps(x1.reshape(self.R, -1)))
            self.hit[g0 <= self.epsilon] = 0

    def push(self, k: int, state: SolverState, delay: int) -> None:
        self.delays[k - 1] = delay
        if self.iterates is not None:
            self.iterates.append(state.x.copy())
        need_cp = k in self._cp_set
        if self.epsilon is not None and not np.all(np.isfinite(self.hit)):
            self._buf.append(averaged_iterate(state).reshape(self.R, -1))
            self._buf_t.append(k)
            if len(self._buf) >= self.BLOCK or k == self.T:
                self._flush()
        if need_cp:
            x_avg = averaged_iterate(state).reshape(self.R, -1)
            both = self.gaps(np.concatenate([x_avg, state.x.reshape(self.R, -1)]))
            self.rows_t.append(k)
            self.avg.append(both[:self.R])
            self.it.append(both[self.R:])
        if self.stop_at_eps and np.all(np.isfinite(self.hit)):
            self.done = True

    def _flush(self) -> None:
        if not self._buf:
            return
        X = np.stack(self._buf)                             # (B, R, d)
        g = self.gaps(X)                                     # (B, R)
        ks = np.asarray(self._buf_t)
        for r in np.flatnonzero(~np.isfinite(self.hit)):
            below = np.flatnonzero(g[:, r] <= self.epsilon)
            if below.size:
                self.hit[r] = ks[below[0]]
        self._buf, self._buf_t = [], []

    def finish(self, state: SolverState, interval: Fraction, steps: int, **extras) -> Trajectory:
        self._flush()
        if not self.rows_t or self.rows_t[-1] != steps:
            x_avg = averaged_iterate(state).reshape(self.R, -1)
            both = self.gaps(np.concatenate([x_avg, state.x.reshape(self.R, -1)]))
            self.rows_t.append(steps)
            self.avg.append(both[:self.R])
            self.it.append(both[self.R:])
        t = np.asarray(self.rows_t, dtype=np.int64)
        warm = extras.pop("warmup_steps", None)
        warmup = np.zeros(t.size, dtype=bool) if warm is None else warm[t - 1]
        return Trajectory(
            t=t,
            wallclock=np.array([float(k * interval) for k in t]),
            f_avg_gap=np.stack(self.avg, axis=1),
            f_iter_gap=np.stack(self.it, axis=1),
            delays=self.delays[:steps].copy(),
            warmup=warmup,
            interval=interval,
            f_star=self.f_star,
            x_final=state.x.reshape(self.R, -1).copy(),
            x_avg_final=averaged_iterate(state).reshape(self.R, -1),
            iterations_to_eps=self.hit.copy() if self.epsilon is not None else None,
            epsilon=self.epsilon,
            iterates=np.stack(self.iterates) if self.iterates is not None else None,
            extras=extras,
        )


def default_prox(obj: Objective) -> EuclideanProx:
    return EuclideanProx.for_domain(obj.domain)


def run_serial(obj: Objective, method: str, schedule: StepSchedule, delay: DelayModel | None = None,
               T: int = 1000, m: int = 1, seed: int = 0, *, replicas: int = 1,
               f_star: float | None = None, checkpoints=None, epsilon: float | None = None,
               stop_at_eps: bool = False, exact_gradient: bool = False, x0=None,
               record_iterates: bool = False, prox: EuclideanProx | None = None) -> Trajectory:
    """Single-stream delayed process.

    At step t the gradient applied is computed at x(t - tau(t)) on a fresh
    minibatch of ``m`` samples (or the full gradient if ``exact_gradient``).
    While t - tau(t) < 1 a zero gradient is applied; t and the stepsize still
    advance. Replica r draws samples from stream ``(seed, (r, 0))``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    delay = delay or DelayModel.fixed(0)
    delay.reset()
    prox = prox or default_prox(obj)
    if f_star is None:
        f_star = reference_optimum(obj)[1]
    state = SolverState.start(method, prox, schedule, x0, replicas)
    bank = StreamBank(seed, replicas, 1, obj.N, m)
    rec = Recorder(obj, f_star, T, replicas, checkpoints, epsilon, stop_at_eps, record_iterates)
    rec.start(state.x)
    tau_max = delay.tau_max
    queue = DelayQueue(tau_max) if tau_max > 0 else None
    if queue is not None:
        queue.push(1, state.x.copy())
    zero = np.zeros_like(state.x)
    steps = 0
    for t in range(1, T + 1):
        tau = draw_delay(delay, t)
        if queue is None:
            src, xs = t, state.x
        else:
            src = queue.take(t, t - tau)
            xs = queue.snapshot(src) if src is not None else None
        if xs is None:
            g, realized = zero, -1
        else:
            g = obj.grad(xs) if exact_gradient else obj.sample_grad(xs, bank.draw(0))
            realized = t - src
        state.step(g)
        if queue is not None:
            queue.push(t + 1, state.x.copy())
        steps = t
        rec.push(t, state, realized)
        if rec.done:
            break
    extras = {"architecture": "serial", "delivered": queue.delivered if queue else list(range(1, steps + 1))}
    if method == "dual-averaging":
        extras["z_final"] = state.z.copy()
    return rec.finish(state, Fraction(m), steps, warmup_steps=rec.delays < 0, **extras)


def _lad_optimum(obj: Objective) -> tuple[np.ndarray, float]:
    from scipy.optimize import linprog

    N, d = obj.A.shape
    # min (1/N) sum(u) s.t. -u <= b - A x <= u
    c = np.concatenate([np.zeros(d), np.full(N, 1.0 / N)])
    eye = np.eye(N)
    A_ub = np.block([[-obj.A, -eye], [obj.A, -eye]])
    b_ub = np.concatenate([-obj.b, obj.b])
    bounds = [(None, None)] * d + [(0, None)] * N
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"LAD linear program failed: {res.message}")
    x = res.x[:d]
    if isinstance(obj.domain, Ball) and not obj.domain.contains(x, tol=1e-9):
        import cvxpy as cp

        xv = cp.Variable(d)
        prob = cp.Problem(cp.Minimize(cp.sum(cp.abs(obj.b - obj.A @ xv)) / N),
                          [cp.norm(xv - obj.domain.center, 2) <= obj.domain.radius])
        prob.solve()
        if prob.status != "optimal":
            raise ConvergenceError(f"constrained LAD solve failed: {prob.status}")
        x = obj.domain.project(np.asarray(xv.value))
    return x, float(obj.value(x))


def reference_optimum(obj: Objective, tol: float = 1e-8, max_iter: int = 200_000) -> tuple[np.ndarray, float]:
    """High-accuracy minimiser of the empirical objective over its domain.

    Smooth objectives: accelerated projected gradient descent with adaptive
    restart and backtracking, certified by a gradient-mapping norm below
    ``tol``. LAD is solved exactly as a linear program.
    """
    cached = obj._cache.get(("ref", tol))
    if cached is not None:
        return cached[0].copy(), cached[1]
    if obj.kind == "lad":
        out = _lad_optimum(obj)
        obj._cache[("ref", tol)] = out
        return out[0].copy(), out[1]
    L = gram_max_eig(obj.A) * (0.25 if obj.kind == "logistic" else 1.0)
    L = max(L, 1e-12)
    dom = obj.domain
    x = dom.project(np.zeros(obj.dim))
    y, theta = x.copy(), 1.0
    fx = obj.value(x)
    for _ in range(max_iter):
        gy = obj.grad(y)
        fy = obj.value(y)
        while True:
            x_new = dom.project(y - gy / L)
            diff = x_new - y
            if obj.value(x_new) <= fy + gy @ diff + 0.5 * L * (diff @ diff) + 1e-15 * abs(fy):
                break
            L *= 2.0
        gmap = float(norm(L * (x - dom.project(x - obj.grad(x) / L))))
        if gmap < tol:
            out = (x, float(obj.value(x)))
            obj._cache[("ref", tol)] = out
            return x.copy(), out[1]
        f_new = obj.value(x_new)
        theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        if f_new > fx:
            # adaptive restart
            y, theta = x.copy(), 1.0
            continue
        y = x_new + ((theta - 1) / theta_new) * (x_new - x)
        x, fx, theta = x_new, f_new, theta_new
    raise ConvergenceError(f"no certified optimum within {max_iter} iterations (objective may be unbounded below"
                           " or lack a minimiser)")
