"""Right-hand sides of the convergence guarantees, evaluated numerically.

``bound_thm1``/``bound_thm2`` are the explicit regret sums divided by T, so
they bound E f(x_avg(T)) - f(x*) directly. Everything else is an O(.) rate
evaluated with leading constant 1 (a "shape" bound for regime comparisons).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class BoundInputs:
    """Constants for every evaluator; unused fields are ignored.

    The damping sequence is eta(t) = eta_scale * (t + eta_t0)**eta_exponent
    (``eta_exponent=0`` for constant damping).
    """

    G: float = 1.0
    L: float = 0.0
    sigma: float = 1.0
    R: float = 1.0
    T: int = 1
    n: int = 1
    m: int = 1
    tau: float = 0.0
    B: float = 0.0
    eta_scale: float = 1.0
    eta_t0: float = 0.0
    eta_exponent: float = 0.5
    C: float = 1.0
    tau_bar: float = 0.0
    tau_sq_bar: float = 0.0
    D: float = 0.0

    def __post_init__(self):
        for name in ("G", "L", "sigma", "R", "tau", "B", "eta_t0", "C", "tau_bar", "tau_sq_bar", "D"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.T < 1 or self.n < 1 or self.m < 1:
            raise ValueError("T, n and m must be at least 1")
        if not self.eta_scale > 0:
            raise ValueError("eta_scale must be positive")

    def with_T(self, T: int) -> "BoundInputs":
        return replace(self, T=int(T))

    def eta(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.eta_exponent == 0:
            return np.full_like(t, self.eta_scale)
        return self.eta_scale * (t + self.eta_t0) ** self.eta_exponent


def _delay_sums(inp: BoundInputs) -> tuple[float, float]:
    t = np.arange(1, inp.T + 1, dtype=float)
    noise = float(np.sum(1.0 / inp.eta(t)))
    # terms with t - tau < 1 fall back to eta(1)
    shifted = np.maximum(t - inp.tau, 1.0)
    delay = float(np.sum(1.0 / inp.eta(shifted) ** 2))
    return noise, delay


def bound_thm1(inp: BoundInputs) -> float:
    """Dual averaging with a fixed delay tau."""
    noise, delay = _delay_sums(inp)
    inv_alpha = inp.L + float(inp.eta(inp.T + 1))
    total = (inp.R ** 2 * inv_alpha + 0.5 * inp.sigma ** 2 * noise
             + 2 * inp.L * inp.G ** 2 * (inp.tau + 1) ** 2 * delay + 2 * inp.tau * inp.G * inp.R)
    return total / inp.T


def bound_thm2(inp: BoundInputs) -> float:
    """Mirror descent with a fixed delay tau."""
    noise, delay = _delay_sums(inp)
    total = (2 * inp.L * inp.R ** 2 + inp.R ** 2 * (float(inp.eta(1)) + float(inp.eta(inp.T)))
             + 0.5 * inp.sigma ** 2 * noise
             + 2 * inp.L * inp.G ** 2 * (inp.tau + 1) ** 2 * delay + 2 * inp.tau * inp.G * inp.R)
    return total / inp.T


def _delay_ratio(num: float, sigma: float) -> float:
    # num / sigma^2 with 0/0 = 0 (no delay or no curvature means no such term)
    if num == 0:
        return 0.0
    return math.inf if sigma == 0 else num / sigma ** 2


def delayed_rate(inp: BoundInputs) -> float:
    """O-form of the fixed-delay bounds with eta(t) = sigma sqrt(t + tau) / R:
    (L R^2 + tau G R) / T + sigma R / sqrt(T) + L G^2 tau^2 R^2 (1 + log T) / (sigma^2 T)."""
    T = inp.T
    delay = _delay_ratio(inp.L * inp.G ** 2 * inp.tau ** 2 * inp.R ** 2, inp.sigma)
    return ((inp.L * inp.R ** 2 + inp.tau * inp.G * inp.R) / T + inp.sigma * inp.R / math.sqrt(T)
            + delay * (1.0 + math.log(T)) / T)


def bound_cor33(inp: BoundInputs) -> float:
    """Random delays with E[tau^2] <= B^2 and eta(t) = sigma sqrt(T) / R."""
    T, B = inp.T, inp.B
    last = _delay_ratio(inp.L * inp.G ** 2 * B ** 2 * inp.R ** 2, inp.sigma) / T
    return (inp.L * inp.R ** 2 + B ** 2 * inp.G * inp.R) / T + inp.sigma * inp.R / math.sqrt(T) + last


def bound_cor41(inp: BoundInputs) -> float:
    """Cyclic architecture with m-sample worker gradients."""
    T, B, m = inp.T, inp.B, inp.m
    return B ** 2 / T + 1.0 / math.sqrt(T * m) + B ** 2 * m / T


def bound_cor42(inp: BoundInputs) -> float:
    """Locally averaged architecture, lambda_i = 1/n, divided by T.

    With growing damping (``eta_exponent > 0``) the delay term carries a
    (1 + log T) factor; with constant damping it is O(1).
    """
    T, n = inp.T, inp.n
    delay = _delay_ratio(inp.L * inp.G ** 2 * inp.R ** 2 * n * inp.tau_sq_bar, inp.sigma)
    log_factor = 1.0 + math.log(T) if inp.eta_exponent > 0 else 1.0
    total = (inp.L * inp.R ** 2 + inp.tau_bar * inp.G * inp.R + delay * log_factor
             + inp.R * inp.sigma / math.sqrt(n) * math.sqrt(T))
    return total / T


def bound_delayed_diam(inp: BoundInputs) -> float:
    """The diameter form of the tree bound: tau_bar <= D and tau_sq_bar <= D^2."""
    return bound_cor42(replace(inp, tau_bar=inp.D, tau_sq_bar=inp.D ** 2))


def regime_cyclic(inp: BoundInputs) -> tuple[float, float, str]:
    """Damping multiplier, rate and regime of the cost-aware cyclic stepsize.

    eta = max(n^(7/6) / (T^(1/6) C^(1/2)), 1); rate
    min(n^(2/3) / T^(2/3), n^3 / T) + 1 / sqrt(T C n); the early regime is
    T <= n^7 / C^3, where eta > 1.
    """
    T, n, C = float(inp.T), float(inp.n), float(inp.C)
    eta = max(n ** (7 / 6) / (T ** (1 / 6) * math.sqrt(C)), 1.0)
    bound = min(n ** (2 / 3) / T ** (2 / 3), n ** 3 / T) + 1.0 / math.sqrt(T * C * n)
    regime = "early" if T <= n ** 7 / C ** 3 else "late"
    return eta, bound, regime


def regime_crossover(n: float, C: float) -> float:
    return n ** 7 / C ** 3


def table1_row(arch: str, inp: BoundInputs) -> float:
    """Rates after T units of wall-clock time (cyclic assumes tau = n)."""
    T, n = float(inp.T), float(inp.n)
    if arch == "centralized":
        return math.sqrt(1.0 / T)
    if arch == "cyclic":
        return min(n ** (2 / 3) / T ** (2 / 3), n ** 3 / T) + 1.0 / math.sqrt(T * n)
    if arch == "local":
        return min(inp.D ** (2 / 3) / T ** (2 / 3), n * inp.tau_sq_bar / T) + 1.0 / math.sqrt(n * T)
    raise ValueError(f"unknown architecture {arch!r}")


def nonsmooth_rate(inp: BoundInputs) -> float:
    """R G sqrt(B) / sqrt(T): the delayed subgradient rate (overlay only)."""
    return inp.R * inp.G * math.sqrt(inp.B) / math.sqrt(inp.T)


EVALUATORS = {
    "thm1": bound_thm1,
    "thm2": bound_thm2,
    "delayed-rate": delayed_rate,
    "cor33": bound_cor33,
    "cor41": bound_cor41,
    "cor42": bound_cor42,
    "diam": bound_delayed_diam,
    "nonsmooth": nonsmooth_rate,
}


def evaluate(name: str, inp: BoundInputs):
    if name == "regime-cyclic":
        eta, bound, regime = regime_cyclic(inp)
        return {"eta": eta, "bound": bound, "regime": regime}
    if name.startswith("rate-"):
        return table1_row(name.split("-", 1)[1], inp)
    try:
        return EVALUATORS[name](inp)
    except KeyError:
        raise ValueError(f"unknown bound {name!r}") from None
