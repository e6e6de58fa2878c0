"""Discrete-event simulators for the cyclic and tree-averaged architectures.

Time is kept in integer ticks (1000 per gradient-sample unit). The wall-clock
reported in trajectories is the time-model accounting, ``k * interval`` after
``k`` master updates; the event clock is kept for ordering, realized delays
and worker utilization.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import EuclideanProx, StepSchedule
from .delay import TimeModel, update_interval
from .optimizer import Recorder, SolverState, Trajectory, default_prox, reference_optimum
from .oracle import Objective, StreamBank

TICKS = 1000


def _ticks(units) -> int:
    v = Fraction(units) if isinstance(units, (int, Fraction)) else Fraction(str(units))
    return math.floor(v * TICKS)


@dataclass
class TreeTopology:
    """Spanning tree over nodes 0..n-1 given by ``parents`` (-1 marks the master)."""

    parents: list[int]
    depth: np.ndarray = field(init=False)
    subtree_size: np.ndarray = field(init=False)
    children: list[list[int]] = field(init=False)

    def __post_init__(self):
        p = [int(v) for v in self.parents]
        n = len(p)
        if n == 0:
            raise ValueError("tree has no nodes")
        roots = [i for i, v in enumerate(p) if v == -1]
        if len(roots) != 1:
            raise ValueError(f"tree needs exactly one root, found {len(roots)}")
        if any(v < -1 or v >= n or v == i for i, v in enumerate(p)):
            raise ValueError("parent index out of range")
        self.parents = p
        self.root = roots[0]
        depth = np.full(n, -1, dtype=np.int64)
        depth[self.root] = 0
        for i in range(n):
            path, j = [], i
            while depth[j] < 0:
                path.append(j)
                j = p[j]
                if j in path:
                    raise ValueError("parent array contains a cycle")
            for k in reversed(path):
                depth[k] = depth[p[k]] + 1
        self.depth = depth
        self.children = [[] for _ in range(n)]
        for i, v in enumerate(p):
            if v >= 0:
                self.children[v].append(i)
        size = np.ones(n, dtype=np.int64)
        for i in np.argsort(-depth):
            if p[i] >= 0:
                size[p[i]] += size[i]
        self.subtree_size = size

    @classmethod
    def star(cls, n: int) -> "TreeTopology":
        return cls([-1] + [0] * (n - 1))

    @classmethod
    def path(cls, n: int) -> "TreeTopology":
        return cls([-1] + list(range(n - 1)))

    @classmethod
    def balanced(cls, n: int, arity: int = 2) -> "TreeTopology":
        return cls([-1] + [(i - 1) // arity for i in range(1, n)])

    @classmethod
    def load(cls, path) -> "TreeTopology":
        spec = json.loads(Path(path).read_text())
        if not isinstance(spec, dict) or "parents" not in spec:
            raise ValueError('topology file must be {"parents": [...]}')
        return cls(spec["parents"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"parents": self.parents}))

    @property
    def n(self) -> int:
        return len(self.parents)

    @property
    def height(self) -> int:
        return int(self.depth.max())

    @property
    def delays(self) -> np.ndarray:
        return 2 * self.depth

    def weights(self, include_master: bool = True) -> np.ndarray:
        lam = np.ones(self.n)
        if not include_master:
            if self.n == 1:
                raise ValueError("a single-node tree has no workers")
            lam[self.root] = 0.0
        return lam / lam.sum()

    def adjacency(self) -> np.ndarray:
        """``M[i, c] = 1`` when ``c`` is a child of ``i``."""
        M = np.zeros((self.n, self.n))
        for c, v in enumerate(self.parents):
            if v >= 0:
                M[v, c] = 1.0
        return M


def simulate_cyclic(obj: Objective, method: str, schedule: StepSchedule, n: int, m: int, C: float,
                    T_wall=None, seed: int = 0, *, iterations: int | None = None, replicas: int = 1,
                    f_star: float | None = None, checkpoints=None, epsilon: float | None = None,
                    stop_at_eps: bool = False, record_iterates: bool = False,
                    prox: EuclideanProx | None = None) -> Trajectory:
    """Master with ``n`` asynchronous workers.

    A worker computes an m-sample gradient (m units) on the parameter it last
    received and submits it. The master serves submissions one at a time in
    order of (ready tick, issue number), spending C units on each; the update
    is applied when service begins and the worker restarts at once on the new
    parameter. Time spent waiting for the master is idle time. In steady state
    the master updates every max(m/n, C) units and the realized delay is
    n - 1; the first round's gradients are all computed at x(1) and are
    flagged as warm-up. Worker w of replica r samples from stream (r, w).

    The run length is ``iterations`` master updates, or as many as fit in
    ``T_wall`` units under the time model.
    """
    if n < 1 or m < 1 or not C > 0:
        raise ValueError("n, m and C must be positive")
    tm = TimeModel(C=C, m=m, n=n)
    interval = update_interval(tm, "cyclic")
    if iterations is None:
        if T_wall is None:
            raise ValueError("give T_wall or iterations")
        iterations = math.floor(Fraction(str(T_wall)) / interval)
    K = int(iterations)
    if K < 1:
        raise ValueError("horizon shorter than one master update")
    prox = prox or default_prox(obj)
    if f_star is None:
        f_star = reference_optimum(obj)[1]
    state = SolverState.start(method, prox, schedule, None, replicas)
    bank = StreamBank(seed, replicas, n, obj.N, m)
    rec = Recorder(obj, f_star, K, replicas, checkpoints, epsilon, stop_at_eps, record_iterates)
    rec.start(state.x)

    m_t, C_t = _ticks(m), _ticks(C)
    stagger = max(C_t, m_t // n)
    snap = [state.x.copy() for _ in range(n)]
    param_idx = [1] * n
    start = [w * stagger for w in range(n)]
    busy = np.zeros(n, dtype=np.int64)
    idle = np.zeros(n, dtype=np.int64)
    heap = [(start[w] + m_t, w, w) for w in range(n)]     # (ready tick, issue number, worker)
    heapq.heapify(heap)
    issued = n
    master_free = 0
    event_tick = np.zeros(K, dtype=np.int64)
    computed_at = np.zeros(K, dtype=np.int64)
    workers = np.zeros(K, dtype=np.int32)
    warm = np.zeros(K, dtype=bool)
    first_round = set(range(n))
    steps = 0
    for k in range(1, K + 1):
        ready, _, w = heapq.heappop(heap)
        begin = max(ready, master_free)
        g = obj.sample_grad(snap[w], bank.draw(w))
        state.step(g)
        busy[w] += m_t
        idle[w] += begin - ready
        master_free = begin + C_t
        event_tick[k - 1] = begin
        computed_at[k - 1] = param_idx[w]
        workers[k - 1] = w
        if w in first_round:
            warm[k - 1] = True
            first_round.discard(w)
        snap[w] = state.x.copy()
        param_idx[w] = k + 1
        heapq.heappush(heap, (begin + m_t, issued, w))
        issued += 1
        steps = k
        rec.push(k, state, k - computed_at[k - 1])
        if rec.done:
            break
    util = busy / np.maximum(busy + idle, 1)
    return rec.finish(state, interval, steps, warmup_steps=warm[:steps],
                      architecture="cyclic", n=n, m=m, C=C,
                      event_tick=event_tick[:steps], computed_at=computed_at[:steps],
                      workers=workers[:steps], utilization=util,
                      busy_ticks=busy, idle_ticks=idle)


def simulate_tree(obj: Objective, method: str, schedule: StepSchedule, tree: TreeTopology, m: int, C: float,
                  T_wall=None, seed: int = 0, *, iterations: int | None = None, replicas: int = 1,
                  f_star: float | None = None, checkpoints=None, epsilon: float | None = None,
                  stop_at_eps: bool = False, weighting: str = "subtree", include_master: bool = True,
                  log_events: bool = False, record_iterates: bool = False,
                  prox: EuclideanProx | None = None) -> Trajectory:
    """Locally averaged architecture on a spanning tree.

    In round t a node at depth d holds x(t - d) and computes an m-sample
    gradient there. Each node sends its parent its own gradient combined with
    the messages its children sent in the previous round, so a gradient from
    depth d reaches the master d rounds later: it is x(t - 2d)-stale.

    ``weighting="subtree"`` passes (weighted sum, weight) pairs so the master
    receives exactly sum_i lambda_i g_i(t - tau(i)) with lambda_i = 1/n;
    ``"naive"`` has each node take the plain average of its own gradient and
    its children's averages. While some gradients do not exist yet (warm-up)
    the master renormalizes over the weight it received. C does not enter the
    time model (one aggregate every m units).
    """
    if weighting not in ("subtree", "naive"):
        raise ValueError("weighting must be 'subtree' or 'naive'")
    tm = TimeModel(C=C, m=m, n=tree.n)
    interval = update_interval(tm, "tree")
    if iterations is None:
        if T_wall is None:
            raise ValueError("give T_wall or iterations")
        iterations = math.floor(Fraction(str(T_wall)) / interval)
    K = int(iterations)
    if K < 1:
        raise ValueError("horizon shorter than one master update")
    prox = prox or default_prox(obj)
    if f_star is None:
        f_star = reference_optimum(obj)[1]
    n, R, d = tree.n, replicas, obj.dim
    lam = tree.weights(include_master)
    active = lam > 0
    depth = tree.depth
    H = tree.height + 1
    state = SolverState.start(method, prox, schedule, None, replicas)
    bank = StreamBank(seed, replicas, n, obj.N, m)
    rec = Recorder(obj, f_star, K, replicas, checkpoints, epsilon, stop_at_eps, record_iterates)
    rec.start(state.x)
    hist = np.zeros((H, R, d))
    hist[1 % H] = state.x
    adj = tree.adjacency()
    nkids = adj.sum(axis=1)
    msg = np.zeros((n, R, d))            # subtree: weighted sums; naive: averages
    wgt = np.zeros(n)                    # subtree: carried weight; naive: 1 if message exists
    warm = np.zeros(K, dtype=bool)
    log = [] if log_events else None
    steps = 0
    for t in range(1, K + 1):
        has_param = (t - depth >= 1) & active
        idx = bank.draw_all()                               # (R, n, m)
        xs = hist[(t - depth) % H]                          # (n, R, d)
        g = obj.sample_grad(xs, idx.transpose(1, 0, 2))     # (n, R, d)
        g[~has_param] = 0.0
        if weighting == "subtree":
            own_w = np.where(has_param, lam, 0.0)
            new_msg = own_w[:, None, None] * g + np.einsum("ij,jrd->ird", adj, msg)
            new_wgt = own_w + adj @ wgt
            total = new_wgt[tree.root]
            agg = new_msg[tree.root] / total if total > 0 else np.zeros((R, d))
            complete = math.isclose(total, 1.0, abs_tol=1e-12)
        else:
            kid_sum = np.einsum("ij,jrd->ird", adj, msg * wgt[:, None, None])
            count = has_param.astype(float) + adj @ wgt
            safe = np.maximum(count, 1.0)
            new_msg = (np.where(has_param[:, None, None], g, 0.0) + kid_sum) / safe[:, None, None]
            new_wgt = (count > 0).astype(float)
            agg = new_msg[tree.root] if new_wgt[tree.root] > 0 else np.zeros((R, d))
            complete = t > 2 * tree.height and bool(has_param[active].all())
        msg, wgt = new_msg, new_wgt
        if log is not None:
            log.append({"round": t, "grads": g.copy(), "param_index": t - depth,
                        "has_param": has_param.copy(), "aggregate": agg.copy(),
                        "weight": float(new_wgt[tree.root]) if weighting == "subtree" else None})
        warm[t - 1] = not complete
        state.step(agg)
        hist[(t + 1) % H] = state.x
        steps = t
        rec.push(t, state, int(2 * depth[active].max()) if complete else -1)
        if rec.done:
            break
    extras = dict(architecture="tree", n=n, m=m, C=C, weighting=weighting, include_master=include_master,
                  lambdas=lam, node_delays=tree.delays)
    if log is not None:
        extras["events"] = log
    return rec.finish(state, interval, steps, warmup_steps=warm[:steps], **extras)
