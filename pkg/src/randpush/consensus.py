"""Round-synchronous push-sum and the gated, perturbed push-sum (MPP).

State arrays are stacked by node: ``x``, ``w`` and ``z`` have shape
``(n, d)`` and ``y`` has shape ``(n,)``. The scalar recursion is applied
coordinate-wise for ``d > 1``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ScheduleViolation
from .graphs import DiGraph, GraphEnsemble, GraphSequenceSampler, require_valid, trial_streams
from .weights import gating_threshold, weight_matrix

log = logging.getLogger(__name__)

MAX_TRACE_NODES = 10


@dataclass
class NodeStates:
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @classmethod
    def initial(cls, x0) -> "NodeStates":
        x0 = np.asarray(x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0[:, None]
        n = x0.shape[0]
        return cls(x=x0.copy(), w=x0.copy(), y=np.ones(n), z=x0.copy())

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "NodeStates":
        return NodeStates(self.x.copy(), self.w.copy(), self.y.copy(), self.z.copy())


@dataclass(frozen=True)
class RoundTrace:
    t: int
    graph_id: Optional[int]
    effective: Optional[DiGraph]
    gated: tuple
    states: NodeStates
    consensus_error: Optional[float]
    min_y: float
    weights: Optional[np.ndarray] = field(default=None, repr=False)


def consensus_error(z: np.ndarray, xbar: np.ndarray) -> float:
    """``max_i ||z_i - xbar||_inf``."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return float(np.abs(z - np.asarray(xbar, dtype=float)).max())


def effective_graph(available: DiGraph, y, delta: float) -> DiGraph:
    """Drop the cross edges of every node with ``y_j < delta``; self-loops stay."""
    gated = np.flatnonzero(np.asarray(y) < delta).tolist()
    if not gated:
        return available
    return available.without_cross_edges_from(gated)


@dataclass(frozen=True)
class PerturbationSchedule:
    """Perturbations with ``||eps(t)||_1 <= U / t^gamma`` over all nodes and coordinates.

    ``generator(t, n, d, rng)`` returns an ``(n, d)`` array. The default draws
    ``(U / (n t^gamma)) * u`` with ``u`` uniform on ``[-1, 1]`` and rescales it
    onto the cap if needed.
    """

    U: float
    gamma: float
    generator: Optional[Callable] = None

    def __post_init__(self):
        if not self.U > 0:
            raise ValueError(f"U must be positive, got {self.U}")

    @classmethod
    def zero(cls, gamma: float = 0.6) -> "PerturbationSchedule":
        return cls(1.0, gamma, lambda t, n, d, rng: np.zeros((n, d)))

    def cap(self, t: int) -> float:
        return self.U / t**self.gamma

    def draw(self, t: int, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        if self.generator is not None:
            return np.asarray(self.generator(t, n, d, rng), dtype=float).reshape(n, d)
        cap = self.cap(t)
        eps = (cap / n) * rng.uniform(-1.0, 1.0, size=(n, d))
        norm = np.abs(eps).sum()
        if norm > cap:
            eps *= cap / norm
        return eps


def _check_cap(eps: np.ndarray, cap: Optional[float], t: int):
    if cap is None:
        return
    norm = float(np.abs(eps).sum())
    if norm > cap * (1.0 + 1e-12):
        raise ScheduleViolation(f"round {t}: ||eps||_1 = {norm!r} exceeds cap {cap!r}")


def advance(states: NodeStates, W: np.ndarray, eps=None):
    """One matrix-form round. Returns the new states and ``xbar`` of the old x.

    ``eps`` may be an ``(n, d)`` array, ``None`` (no perturbation), or a
    callable receiving the fresh estimates ``z(t+1)``.
    """
    xbar = states.x.mean(axis=0)
    w = W @ states.x
    y = W @ states.y
    z = w / y[:, None]
    if eps is None:
        x = w.copy()
    else:
        if callable(eps):
            eps = eps(z)
        x = w + eps
    return NodeStates(x=x, w=w, y=y, z=z), xbar


def pushsum_step(states: NodeStates, available: DiGraph) -> NodeStates:
    """Plain push-sum over the full available graph, no gating."""
    new, _ = advance(states, weight_matrix(available))
    return new


def mpp_step(states: NodeStates, available: DiGraph, eps, delta: float, *,
             t: int = 0, cap: Optional[float] = None, graph_id: Optional[int] = None,
             gate: bool = True):
    """Gated perturbed push-sum round from ``t`` to ``t + 1``.

    ``cap`` is the allowed ``||eps(t+1)||_1``; exceeding it raises
    :class:`ScheduleViolation`. Returns ``(states, RoundTrace)``.
    """
    effective = effective_graph(available, states.y, delta) if gate else available
    W = weight_matrix(effective)
    return _round(states, W, effective, eps, delta, t, cap, graph_id)


def _round(states, W, effective, eps, delta, t, cap, graph_id):
    gated = tuple(np.flatnonzero(states.y < delta).tolist())
    if eps is not None and not callable(eps):
        eps = np.asarray(eps, dtype=float).reshape(states.x.shape)
        _check_cap(eps, cap, t + 1)
    elif callable(eps) and cap is not None:
        fn = eps

        def eps(z):
            e = fn(z)
            _check_cap(e, cap, t + 1)
            return e

    new, xbar = advance(states, W, eps)
    trace = RoundTrace(
        t=t + 1, graph_id=graph_id, effective=effective, gated=gated, states=new,
        consensus_error=consensus_error(new.z, xbar), min_y=float(new.y.min()), weights=W,
    )
    return new, trace


class EffectiveWeights:
    """Memoised effective weight matrices keyed by (graph index, gated set)."""

    def __init__(self, ensemble: GraphEnsemble, delta: float, gate: bool = True):
        self.ensemble = ensemble
        self.delta = delta
        self.gate = gate
        self._cache = {}

    def __call__(self, b: int, y: np.ndarray):
        mask = (y < self.delta) if self.gate else np.zeros(len(y), dtype=bool)
        key = (b, mask.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            g = self.ensemble.graphs[b]
            eff = effective_graph(g, y, self.delta) if self.gate else g
            hit = (weight_matrix(eff), eff)
            self._cache[key] = hit
        return hit


@dataclass
class MPPRun:
    rows: list
    final: NodeStates
    delta: float
    delta_violations: int
    min_y: float


def run_mpp(ensemble: GraphEnsemble, x0, schedule: PerturbationSchedule, horizon: int,
            seed=0, *, every: int = 1, gate: bool = True, delta: Optional[float] = None,
            keep_weights: bool = False) -> MPPRun:
    """Simulate ``horizon`` MPP rounds on a seeded i.i.d. graph sequence.

    Rows are kept for t = 0 and every ``every``-th round plus the last.
    ``delta_violations`` counts rounds t >= 1 with ``min_i y_i(t) < delta``.
    """
    require_valid(ensemble)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    graph_seq, eps_seq = trial_streams(seed)
    sampler = GraphSequenceSampler(ensemble, graph_seq)
    rng = np.random.default_rng(eps_seq)
    delta = gating_threshold(ensemble.n) if delta is None else delta
    weights = EffectiveWeights(ensemble, delta, gate)

    states = NodeStates.initial(x0)
    n, d = states.n, states.d
    if n != ensemble.n:
        raise ValueError(f"x0 has {n} rows but the ensemble has n={ensemble.n}")
    rows = [RoundTrace(0, None, None, (), states.copy(), None, float(states.y.min()))]
    violations = 0
    min_y = float(states.y.min())
    for t in range(horizon):
        b = sampler.next_index()
        W, eff = weights(b, states.y)
        eps = schedule.draw(t + 1, n, d, rng)
        states, trace = _round(states, W, eff, eps, delta, t, schedule.cap(t + 1), b)
        if trace.min_y < delta:
            violations += 1
        min_y = min(min_y, trace.min_y)
        if (t + 1) % every == 0 or t + 1 == horizon:
            if not keep_weights:
                trace = RoundTrace(trace.t, trace.graph_id, trace.effective, trace.gated,
                                   trace.states, trace.consensus_error, trace.min_y)
            rows.append(trace)
    if violations:
        log.warning("min y fell below delta=%g in %d of %d rounds", delta, violations, horizon)
    return MPPRun(rows=rows, final=states, delta=delta, delta_violations=violations, min_y=min_y)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def trace_header(n: int, d: int) -> list:
    header = ["t", "graph_id", "min_y", "consensus_error"]
    if n <= MAX_TRACE_NODES:
        if d == 1:
            header += [f"z{i + 1}" for i in range(n)]
        else:
            header += [f"z{i + 1}_{k + 1}" for i in range(n) for k in range(d)]
    return header


def write_trace_csv(rows, fh) -> None:
    """Write trace rows to an open text file; graph ids are 1-based."""
    if not rows:
        return
    n, d = rows[0].states.n, rows[0].states.d
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(trace_header(n, d))
    for r in rows:
        line = [r.t, None if r.graph_id is None else r.graph_id + 1, r.min_y, r.consensus_error]
        if n <= MAX_TRACE_NODES:
            line += r.states.z.ravel().tolist()
        writer.writerow([_fmt(v) for v in line])
