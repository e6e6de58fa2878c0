"""Randomised checks of the inequalities the update rules are built on.

Each check draws ``instances`` random cases (in vectorised groups that share
a random domain) and reports the worst slack. A check passes when every
instance satisfies its inequality within the stated tolerance.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import Ball, EuclideanProx, StepSchedule, Unconstrained, bregman, da_argmin, md_step, norm, prox_value
from .optimizer import SolverState

GROUP = 200


@dataclass(frozen=True)
class CheckResult:
    name: str
    instances: int
    worst: float            # max over instances of (lhs - rhs); <= tol means pass
    tol: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.instances} instances, worst violation "
                f"{self.worst:.3e} (tol {self.tol:.0e}), {self.seconds:.2f}s")


def _random_prox(rng: np.random.Generator) -> tuple[EuclideanProx, int]:
    d = int(rng.integers(1, 9))
    if rng.random() < 0.25:
        return EuclideanProx(np.zeros(d), Unconstrained(d)), d
    center = rng.normal(scale=2.0, size=d)
    return EuclideanProx(center, Ball(center, float(rng.uniform(0.1, 5.0)))), d


def _points_in(p: EuclideanProx, k: int, rng: np.random.Generator) -> np.ndarray:
    d = p.dim
    u = rng.standard_normal((k, d))
    u /= np.maximum(norm(u)[:, None], 1e-300)
    radius = p.domain.radius if isinstance(p.domain, Ball) else 5.0
    r = radius * rng.random(k) ** (1.0 / d)
    # put some points exactly on the boundary
    r[rng.random(k) < 0.2] = radius
    return p.domain.project(p.center + u * r[:, None])


def _alphas(k: int, rng: np.random.Generator) -> np.ndarray:
    return 10.0 ** rng.uniform(-2, 1, size=k)


def _groups(instances: int, rng: np.random.Generator):
    left = instances
    while left > 0:
        k = min(GROUP, left)
        p, d = _random_prox(rng)
        yield p, d, k
        left -= k


def _timed(name: str, instances: int, tol: float, fn) -> CheckResult:
    t0 = time.perf_counter()
    worst = fn()
    return CheckResult(name, instances, float(worst), tol, time.perf_counter() - t0)


def check_md_closeness(instances: int = 10_000, seed: int = 0) -> CheckResult:
    """||md_step(x, g, alpha) - x|| <= alpha ||g||."""
    rng = np.random.default_rng(seed)

    def run():
        worst = -np.inf
        for p, d, k in _groups(instances, rng):
            x = _points_in(p, k, rng)
            g = rng.standard_normal((k, d)) * 10.0 ** rng.uniform(-2, 2, size=(k, 1))
            a = _alphas(k, rng)
            lhs = norm(md_step(p, x, g, a, check_domain=False) - x)
            worst = max(worst, float(np.max(lhs - a * norm(g))))
        return worst

    return _timed("md-closeness", instances, 1e-12, run)


def check_solution_convexity(instances: int = 10_000, seed: int = 1, probes: int = 20) -> CheckResult:
    """x+ = da_argmin(z, alpha) satisfies, for every x in the domain,
    <z,x> + psi(x)/alpha >= <z,x+> + psi(x+)/alpha + D(x,x+)/alpha."""
    rng = np.random.default_rng(seed)

    def run():
        worst = -np.inf
        for p, d, k in _groups(instances, rng):
            z = rng.standard_normal((k, d)) * 10.0 ** rng.uniform(-1, 1, size=(k, 1))
            a = _alphas(k, rng)
            xp = da_argmin(p, z, a)                                   # (k, d)
            xs = _points_in(p, k * probes, rng).reshape(k, probes, d)
            zz = z[:, None, :]
            aa = a[:, None]
            lhs = np.einsum("kpd,kpd->kp", np.broadcast_to(zz, xs.shape), xs) + prox_value(p, xs) / aa
            rhs = (np.einsum("kd,kd->k", z, xp)[:, None] + (prox_value(p, xp) / a)[:, None]
                   + bregman(p, xs, xp[:, None, :]) / aa)
            worst = max(worst, float(np.max(rhs - lhs)))
        return worst

    return _timed("solution-convexity", instances, 1e-9, run)


def check_dual_lipschitz(instances: int = 10_000, seed: int = 2) -> CheckResult:
    """||da_argmin(y, alpha) - da_argmin(z, alpha)|| <= alpha ||y - z||."""
    rng = np.random.default_rng(seed)

    def run():
        worst = -np.inf
        for p, d, k in _groups(instances, rng):
            y = rng.standard_normal((k, d)) * 10.0 ** rng.uniform(-1, 1, size=(k, 1))
            # half the pairs are close together
            z = np.where(rng.random((k, 1)) < 0.5, y + 1e-3 * rng.standard_normal((k, d)),
                         rng.standard_normal((k, d)))
            a = _alphas(k, rng)
            lhs = norm(da_argmin(p, y, a) - da_argmin(p, z, a))
            worst = max(worst, float(np.max(lhs - a * norm(y - z))))
        return worst

    return _timed("dual-map-lipschitz", instances, 1e-12, run)


def _bounded_grads(rng: np.random.Generator, shape: tuple, G: float) -> np.ndarray:
    g = rng.standard_normal(shape)
    scale = G * rng.random(shape[:-1]) / np.maximum(norm(g), 1e-300)
    return g * scale[..., None]


def _random_schedule(rng: np.random.Generator) -> StepSchedule:
    if rng.random() < 0.3:
        return StepSchedule.constant(float(rng.uniform(0.2, 5.0)), L=float(rng.uniform(0, 2)))
    return StepSchedule.sqrt_growth(float(rng.uniform(0.2, 5.0)), t0=int(rng.integers(0, 10)),
                                    L=float(rng.uniform(0, 2)))


def check_md_drift(instances: int = 10_000, seed: int = 3, T: int = 40, tau_max: int = 8) -> CheckResult:
    """MD with ||g|| <= G surely: ||x(t) - x(t+tau)|| <= sum_{s<tau} alpha(t+s) G.

    An instance is one run; every pair (t, tau) with tau <= ``tau_max`` along
    the run is checked.
    """
    rng = np.random.default_rng(seed)

    def run():
        worst = -np.inf
        for p, d, k in _groups(instances, rng):
            sched = _random_schedule(rng)
            G = float(rng.uniform(0.1, 10.0))
            s = SolverState.start("mirror-descent", p, sched, _points_in(p, 1, rng)[0], replicas=k)
            xs = [s.x.copy()]
            # a fixed full-norm direction makes the bound tight when unconstrained
            fixed = rng.random() < 0.3
            u = rng.standard_normal((k, d))
            u *= G / np.maximum(norm(u)[:, None], 1e-300)
            for _ in range(T):
                s.step(u if fixed else _bounded_grads(rng, (k, d), G))
                xs.append(s.x.copy())
            X = np.stack(xs)                                         # (T+1, k, d), X[i] = x(i+1)
            alpha = np.asarray(sched.alpha(np.arange(1, T + 1)))     # alpha(1..T)
            cum = np.concatenate([[0.0], np.cumsum(alpha)])
            for tau in range(1, tau_max + 1):
                diff = norm(X[tau:] - X[:-tau])                      # t = 1..T+1-tau
                budget = G * (cum[tau:] - cum[:-tau])[: diff.shape[0]]
                worst = max(worst, float(np.max(diff - budget[:, None])))
        return worst

    return _timed("md-iterate-drift", instances, 1e-9, run)


def check_da_drift(instances: int = 10_000, seed: int = 4, T: int = 40) -> CheckResult:
    """DA: ||x(t) - x(t+1)|| <= (alpha(t) - alpha(t+1)) ||z(t)|| + alpha(t+1) ||g(t)||."""
    rng = np.random.default_rng(seed)

    def run():
        worst = -np.inf
        for p, d, k in _groups(instances, rng):
            sched = _random_schedule(rng)
            s = SolverState.start("dual-averaging", p, sched, replicas=k)
            for t in range(1, T + 1):
                x_prev, z_prev = s.x.copy(), s.z.copy()
                g = rng.standard_normal((k, d)) * float(rng.uniform(0.1, 10.0))
                s.step(g)
                a0, a1 = sched.alpha(t), sched.alpha(t + 1)
                bound = (a0 - a1) * norm(z_prev) + a1 * norm(g)
                worst = max(worst, float(np.max(norm(s.x - x_prev) - bound)))
        return worst

    return _timed("da-dual-drift", instances, 1e-9, run)


SUITES = {
    "md-closeness": check_md_closeness,
    "solution-convexity": check_solution_convexity,
    "dual-map-lipschitz": check_dual_lipschitz,
    "md-iterate-drift": check_md_drift,
    "da-dual-drift": check_da_drift,
}


def run_all(instances: int = 10_000, seed: int = 0) -> list[CheckResult]:
    return [fn(instances=instances, seed=seed + i) for i, fn in enumerate(SUITES.values())]
