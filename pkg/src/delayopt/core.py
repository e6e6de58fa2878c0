"""Vectors, Euclidean proximal setup, projections and stepsize schedules.

Every operation accepts arrays of shape ``(..., d)`` and acts on the last
axis, so a stack of independent replicas can be pushed through the same call.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MEMBERSHIP_TOL = 1e-12


class DimensionError(ValueError):
    pass


def as_vec(x, d: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if d is not None and arr.shape[-1] != d:
        raise DimensionError(f"expected trailing dimension {d}, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


def _check_dims(*arrays: np.ndarray) -> None:
    d = arrays[0].shape[-1]
    for a in arrays[1:]:
        if a.shape[-1] != d:
            raise DimensionError(f"dimension mismatch: {d} vs {a.shape[-1]}")


def norm(x: np.ndarray) -> np.ndarray:
    """Euclidean norm along the last axis."""
    return np.sqrt(np.einsum("...i,...i->...", x, x))


@dataclass(frozen=True)
class Ball:
    """Closed l2 ball ``{x : ||x - center|| <= radius}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[-1]

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _check_dims(x, self.center)
        return norm(x - self.center) <= self.radius + tol

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _check_dims(x, self.center)
        diff = x - self.center
        r = norm(diff)
        scale = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300), 1.0)
        return self.center + diff * scale[..., None]


@dataclass(frozen=True)
class Unconstrained:
    dim: int

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {x.shape[-1]}")
        return np.ones(x.shape[:-1], dtype=bool)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {x.shape[-1]}")
        return x


Domain = Ball | Unconstrained


def project(dom: Domain, x) -> np.ndarray:
    return dom.project(x)


@dataclass(frozen=True)
class EuclideanProx:
    """psi(x) = 1/2 ||x - center||^2 restricted to ``domain``."""

    center: np.ndarray
    domain: Domain

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec(self.center))
        if self.center.shape[-1] != self.domain.dim:
            raise DimensionError("prox center and domain differ in dimension")

    @classmethod
    def for_domain(cls, domain: Domain) -> "EuclideanProx":
        center = domain.center if isinstance(domain, Ball) else np.zeros(domain.dim)
        return cls(center, domain)

    @property
    def dim(self) -> int:
        return self.center.shape[-1]


def prox_value(p: EuclideanProx, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_dims(x, p.center)
    diff = x - p.center
    return 0.5 * np.einsum("...i,...i->...", diff, diff)


def bregman(p: EuclideanProx, x, y) -> np.ndarray:
    """D(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>, i.e. 1/2 ||x - y||^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(x, y, p.center)
    diff = x - y
    return 0.5 * np.einsum("...i,...i->...", diff, diff)


def da_argmin(p: EuclideanProx, z, alpha) -> np.ndarray:
    """argmin over the domain of <z, x> + psi(x) / alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    z = np.asarray(z, dtype=float)
    _check_dims(z, p.center)
    if alpha.ndim:
        alpha = alpha[..., None]
    return p.domain.project(p.center - alpha * z)


def md_step(p: EuclideanProx, x, g, alpha, check_domain: bool = True) -> np.ndarray:
    """argmin over the domain of <g, y> + D(y, x) / alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    _check_dims(x, g, p.center)
    if check_domain and not np.all(p.domain.contains(x)):
        raise ValueError("md_step called with a point outside the domain")
    if alpha.ndim:
        alpha = alpha[..., None]
    return p.domain.project(x - alpha * g)


@dataclass(frozen=True)
class StepSchedule:
    """Stepsizes alpha(t) = 1 / (L + eta(t)) with eta(t) = scale * (t + t0)**exponent.

    ``exponent=0`` is the constant-damping mode (eta(t) = scale); the
    square-root family uses ``exponent=0.5``. ``constants`` is free-form
    bookkeeping (sigma, R, n, T, C, tau) kept for reports.
    """

    L: float = 0.0
    scale: float = 1.0
    t0: int = 0
    exponent: float = 0.5
    constants: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be nonnegative")
        if not self.scale > 0:
            raise ValueError("eta scale must be positive")
        if self.t0 < 0:
            raise ValueError("t0 must be nonnegative")
        if not 0.0 <= self.exponent <= 1.0:
            raise ValueError("exponent must lie in [0, 1]")

    @classmethod
    def constant(cls, eta: float, L: float = 0.0, **constants) -> "StepSchedule":
        return cls(L=L, scale=eta, t0=0, exponent=0.0, constants=constants)

    @classmethod
    def sqrt_growth(cls, scale: float, t0: int = 0, L: float = 0.0, **constants) -> "StepSchedule":
        return cls(L=L, scale=scale, t0=t0, exponent=0.5, constants=constants)

    @property
    def eta_kind(self) -> str:
        return "constant" if self.exponent == 0.0 else "sqrt-growth" if self.exponent == 0.5 else "power"

    def eta(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        if self.exponent == 0.0:
            out = np.full_like(t, self.scale)
        elif self.exponent == 0.5:
            out = self.scale * np.sqrt(t + self.t0)
        else:
            out = self.scale * (t + self.t0) ** self.exponent
        return float(out) if out.ndim == 0 else out

    def alpha(self, t) -> np.ndarray | float:
        if np.any(np.asarray(t) < 1):
            raise ValueError("stepsize index starts at t = 1")
        eta = self.eta(t)
        return 1.0 / (self.L + eta)


def alpha_at(s: StepSchedule, t) -> np.ndarray | float:
    return s.alpha(t)
