"""Finite-sum stochastic objectives and their sampling oracles.

Supported losses (``a`` a feature row, ``b`` its label/target):

* ``logistic``:       log(1 + exp(-b <a, x>)),  b in {-1, +1}
* ``least-squares``:  1/2 (b - <a, x>)^2
* ``lad``:            |b - <a, x>|  (nonsmooth, used as a contrast case)

The objective is the empirical mean over the dataset and sampling is i.i.d.
with replacement from the rows.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Ball, DimensionError, Domain, Unconstrained, norm

KINDS = ("logistic", "least-squares", "lad")


def softplus(u: np.ndarray) -> np.ndarray:
    """log(1 + exp(u)) without overflow."""
    return np.where(u > 0, u + np.log1p(np.exp(-np.abs(u))), np.log1p(np.exp(-np.abs(u))))


def sigmoid(u: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(u))
    return np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class Objective:
    kind: str
    A: np.ndarray
    b: np.ndarray
    domain: Domain
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        self.A = np.ascontiguousarray(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.ndim != 2 or self.A.shape[0] == 0:
            raise ValueError("dataset must be a nonempty 2-d feature matrix")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("features and labels differ in length")
        if self.domain.dim != self.A.shape[1]:
            raise DimensionError("domain dimension does not match features")
        if self.kind == "logistic" and not np.all(np.abs(self.b) == 1):
            raise ValueError("logistic labels must be +1 or -1")
        self._cache = {}

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def smooth(self) -> bool:
        return self.kind != "lad"

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got {x.shape[-1]}")
        return x

    def _loss(self, margin_or_pred: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == "logistic":
            return softplus(-b * margin_or_pred)
        resid = b - margin_or_pred
        if self.kind == "least-squares":
            return 0.5 * resid * resid
        return np.abs(resid)

    def _dloss(self, pred: np.ndarray, b: np.ndarray) -> np.ndarray:
        # derivative of the loss with respect to <a, x>
        if self.kind == "logistic":
            return -b * sigmoid(-b * pred)
        if self.kind == "least-squares":
            return pred - b
        return np.sign(pred - b)

    def value(self, x) -> np.ndarray:
        """Exact empirical objective at each point of ``x`` (shape ``(..., d)``)."""
        x = self._check(x)
        flat = x.reshape(-1, self.dim)
        pred = flat @ self.A.T
        vals = self._loss(pred, self.b).mean(axis=1)
        return vals.reshape(x.shape[:-1]) if x.ndim > 1 else float(vals[0])

    def grad(self, x) -> np.ndarray:
        x = self._check(x)
        flat = x.reshape(-1, self.dim)
        pred = flat @ self.A.T
        out = self._dloss(pred, self.b) @ self.A / self.N
        return out.reshape(x.shape)

    def sample_grad(self, x, idx) -> np.ndarray:
        """Mean per-sample gradient; ``x`` is ``(..., d)``, ``idx`` is ``(..., m)``."""
        x = self._check(x)
        rows = self.A[idx]                      # (..., m, d)
        pred = np.einsum("...md,...d->...m", rows, x)
        w = self._dloss(pred, self.b[idx])
        return np.einsum("...m,...md->...d", w, rows) / idx.shape[-1]

    def per_sample_grads(self, x) -> np.ndarray:
        """All N per-sample gradients at a single point, shape ``(N, d)``."""
        x = self._check(x)
        pred = self.A @ x
        return self._dloss(pred, self.b)[:, None] * self.A


def full_value(obj: Objective, x):
    return obj.value(x)


def full_grad(obj: Objective, x) -> np.ndarray:
    return obj.grad(x)


class SampleRng:
    """Independent, reproducible index stream for one logical worker.

    The stream is a PCG64 generator seeded from ``SeedSequence(seed,
    spawn_key=stream)``, so draws depend only on (seed, stream, draw index).
    Indices are drawn in fixed-size blocks; the block size is part of the
    determinism contract.
    """

    BLOCK = 1024

    def __init__(self, seed: int, stream=(0,)):
        if isinstance(stream, int):
            stream = (stream,)
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.stream)))
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def indices(self, N: int, m: int) -> np.ndarray:
        out = np.empty(m, dtype=np.int64)
        filled = 0
        while filled < m:
            if self._pos >= self._buf.size:
                self._buf = self._gen.integers(0, N, size=self.BLOCK)
                self._pos = 0
            take = min(m - filled, self._buf.size - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out


class StreamBank:
    """A grid of :class:`SampleRng` streams indexed by (replica, worker).

    ``draw(worker)`` returns one minibatch of ``m`` indices per replica,
    shape ``(R, m)``; ``draw_all()`` returns ``(R, W, m)``.
    """

    def __init__(self, seed: int, replicas: int, workers: int, N: int, m: int, block: int = 256):
        self.N, self.m, self.block = N, m, block
        self.R, self.W = replicas, workers
        self.rngs = [[SampleRng(seed, (r, w)) for w in range(workers)] for r in range(replicas)]
        self._bufs = [None] * workers
        self._pos = [block] * workers

    def _refill(self, w: int) -> None:
        per = self.block * self.m
        self._bufs[w] = np.stack([self.rngs[r][w].indices(self.N, per).reshape(self.block, self.m)
                                  for r in range(self.R)], axis=1)          # (block, R, m)
        self._pos[w] = 0

    def draw(self, worker: int = 0) -> np.ndarray:
        if self._pos[worker] >= self.block:
            self._refill(worker)
        out = self._bufs[worker][self._pos[worker]]
        self._pos[worker] += 1
        return out

    def draw_all(self) -> np.ndarray:
        return np.stack([self.draw(w) for w in range(self.W)], axis=1)


def stochastic_grad(obj: Objective, x, m: int, rng: SampleRng) -> np.ndarray:
    """Average of ``m`` per-sample gradients drawn uniformly with replacement."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return obj.sample_grad(np.asarray(x, dtype=float), rng.indices(obj.N, m))


@dataclass(frozen=True)
class ProblemConstants:
    G: float
    L: float
    sigma: float
    R: float

    def __post_init__(self):
        for name in ("G", "L", "sigma", "R"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_dict(self) -> dict:
        return {"G": self.G, "L": self.L, "sigma": self.sigma, "R": self.R}


def gram_max_eig(A: np.ndarray, iters: int = 500, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest eigenvalue of A^T A / N by power iteration."""
    N, d = A.shape
    v = np.random.default_rng(seed).standard_normal(d)
    v /= norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v) / N
        new = float(norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return lam


def domain_R(domain: Domain) -> float:
    # psi(x*) <= R^2/2 and D(x*, x) <= R^2 on a ball centred at the prox centre
    return float(np.sqrt(2.0) * domain.radius) if isinstance(domain, Ball) else float("inf")


def _probe_points(domain: Domain, k: int, rng: np.random.Generator) -> np.ndarray:
    d = domain.dim
    radius = domain.radius if isinstance(domain, Ball) else 1.0
    center = domain.center if isinstance(domain, Ball) else np.zeros(d)
    u = rng.standard_normal((k, d))
    u /= norm(u)[:, None]
    r = radius * rng.random(k) ** (1.0 / d)
    return center + u * r[:, None]


def estimate_constants(obj: Objective, trials: int = 1000, seed: int = 0) -> ProblemConstants:
    """Probe-based estimates of (G, L, sigma) and the compactness radius R.

    ``trials`` random points of the domain are probed (the unit ball around the
    origin when unconstrained). G is the largest per-sample gradient norm seen,
    sigma^2 the largest per-point variance of per-sample gradients about the
    full gradient. L is a closed form: the top eigenvalue of A^T A / N for
    least squares, a quarter of it for logistic, infinity for LAD.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    X = _probe_points(obj.domain, trials, rng)
    G2 = 0.0
    var = 0.0
    sq_rows = np.einsum("nd,nd->n", obj.A, obj.A)
    chunk = max(1, 4_000_000 // max(obj.N, 1))
    for start in range(0, trials, chunk):
        xs = X[start:start + chunk]
        w = obj._dloss(xs @ obj.A.T, obj.b)              # (k, N)
        sq = (w * w) * sq_rows                           # per-sample squared norms
        G2 = max(G2, float(sq.max()))
        mean_grad = w @ obj.A / obj.N                    # (k, d)
        # E||g_i - mean||^2 = E||g_i||^2 - ||mean||^2
        v = sq.mean(axis=1) - np.einsum("kd,kd->k", mean_grad, mean_grad)
        var = max(var, float(v.max()))
    if obj.kind == "least-squares":
        L = gram_max_eig(obj.A)
    elif obj.kind == "logistic":
        L = 0.25 * gram_max_eig(obj.A)
    else:
        L = float("inf")
    return ProblemConstants(G=float(np.sqrt(G2)), L=L, sigma=float(np.sqrt(max(var, 0.0))),
                            R=domain_R(obj.domain))


def make_synthetic(kind: str, N: int, d: int, noise: float = 0.0, seed: int = 0, *,
                   radius: float | None = None, active: int | None = None,
                   spectrum: float = 1.0) -> Objective:
    """Reproducible synthetic dataset.

    logistic: each row has ``active`` nonzero +-1 entries (default ~d/10) and
        the label is the sign of a planted separator, flipped with probability
        ``noise``.
    least-squares / lad: Gaussian rows whose column j is scaled by
        ``spectrum ** (-j / (d - 1))`` (so ``spectrum`` is the ratio of largest
        to smallest column scale), targets ``<a, x_planted> + noise * N(0, 1)``.

    ``radius`` gives an l2-ball domain centred at the origin; ``None`` means
    unconstrained.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown objective kind {kind!r}")
    if N < 1 or d < 1:
        raise ValueError("N and d must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5EED,)))
    planted = rng.standard_normal(d)
    if kind == "logistic":
        k = active if active is not None else max(1, d // 10)
        k = min(k, d)
        A = np.zeros((N, d))
        cols = np.argsort(rng.random((N, d)), axis=1)[:, :k]
        signs = rng.choice([-1.0, 1.0], size=(N, k))
        np.put_along_axis(A, cols, signs, axis=1)
        margin = A @ planted
        b = np.where(margin >= 0, 1.0, -1.0)
        flip = rng.random(N) < noise
        b[flip] = -b[flip]
    else:
        scales = spectrum ** (-np.arange(d) / max(d - 1, 1))
        A = rng.standard_normal((N, d)) * scales
        b = A @ planted + noise * rng.standard_normal(N)
    domain = Ball(np.zeros(d), radius) if radius is not None else Unconstrained(d)
    meta = {"kind": kind, "N": N, "d": d, "noise": noise, "seed": int(seed), "radius": radius,
            "active": active, "spectrum": spectrum}
    return Objective(kind, A, b, domain, meta=meta | {"planted": planted.tolist()})


def save_csv(obj: Objective, path) -> None:
    """Write ``label,f0,...,f{d-1}`` rows plus a JSON sidecar with the generator metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{j}" for j in range(obj.dim)])
        for bi, row in zip(obj.b, obj.A):
            w.writerow([repr(float(bi))] + [repr(float(v)) for v in row])
    sidecar = {"kind": obj.kind, "N": obj.N, "d": obj.dim,
               "domain": _domain_dict(obj.domain), "generator": obj.meta}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_csv(path, kind: str | None = None, domain: Domain | None = None) -> Objective:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if not header or header[0] != "label" or header[1:] != [f"f{j}" for j in range(len(header) - 1)]:
            raise ValueError("expected header label,f0,...,f{d-1}")
        rows = np.array([[float(v) for v in row] for row in r if row])
    if rows.size == 0:
        raise ValueError("dataset is empty")
    kind = kind or sidecar.get("kind")
    if kind is None:
        raise ValueError("objective kind not given and no sidecar found")
    d = rows.shape[1] - 1
    if domain is None:
        domain = _domain_from_dict(sidecar.get("domain"), d)
    return Objective(kind, rows[:, 1:], rows[:, 0], domain, meta=sidecar.get("generator", {}))


def _domain_dict(dom: Domain) -> dict:
    if isinstance(dom, Ball):
        return {"kind": "l2-ball", "center": dom.center.tolist(), "radius": dom.radius}
    return {"kind": "unconstrained"}


def _domain_from_dict(spec: dict | None, d: int) -> Domain:
    if not spec or spec.get("kind") == "unconstrained":
        return Unconstrained(d)
    return Ball(np.asarray(spec["center"], dtype=float), float(spec["radius"]))
