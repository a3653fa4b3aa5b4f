"""Objectives, subgradient-push (SP), its gated variant (MSP), and the averaged iterate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .consensus import EffectiveWeights, NodeStates, RoundTrace, consensus_error, effective_graph
from .errors import ConfigError
from .graphs import DiGraph, GraphEnsemble, GraphSequenceSampler, require_valid, trial_streams
from .weights import (
    RateBoundInputs, bound_constants, gating_threshold, theorem2_bound, theorem2_log_bound,
    weight_matrix,
)

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.6


def check_gamma(gamma: float) -> float:
    if not 0.5 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in the open interval (0.5, 1), got {gamma}")
    return float(gamma)


def step_size(t: int, gamma: float = DEFAULT_GAMMA) -> float:
    check_gamma(gamma)
    if t < 1:
        raise ConfigError(f"step size is defined for t >= 1, got {t}")
    return 1.0 / t**gamma


# --- objectives ------------------------------------------------------------

class AbsObjective:
    """``f(z) = ||z - a||_1``. Subgradient ``sign(z - a)``, taking 0 at kinks.

    Lipschitz constant is reported w.r.t. the Euclidean norm: ``sqrt(d)``.
    """

    kind = "abs"

    def __init__(self, anchor):
        self.anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        self.lipschitz = math.sqrt(self.anchor.size)

    def __call__(self, z) -> float:
        return float(np.abs(np.asarray(z, dtype=float) - self.anchor).sum())

    evaluate = __call__

    def subgradient(self, z) -> np.ndarray:
        return np.sign(np.asarray(z, dtype=float) - self.anchor)


class HuberObjective:
    """Coordinate-wise Huber loss around ``a`` with threshold ``kappa``."""

    kind = "huber"

    def __init__(self, anchor, kappa: float):
        if not kappa > 0:
            raise ConfigError(f"Huber threshold must be positive, got {kappa}")
        self.anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        self.kappa = float(kappa)
        self.lipschitz = self.kappa * math.sqrt(self.anchor.size)

    def __call__(self, z) -> float:
        r = np.abs(np.asarray(z, dtype=float) - self.anchor)
        k = self.kappa
        return float(np.where(r <= k, 0.5 * r * r, k * (r - 0.5 * k)).sum())

    evaluate = __call__

    def subgradient(self, z) -> np.ndarray:
        return np.clip(np.asarray(z, dtype=float) - self.anchor, -self.kappa, self.kappa)


class ConstantObjective:
    """``f(z) = c``; every subgradient is zero."""

    kind = "constant"

    def __init__(self, d: int, value: float = 0.0):
        self.d = d
        self.value = float(value)
        self.anchor = None
        self.lipschitz = 0.0

    def __call__(self, z) -> float:
        return self.value

    evaluate = __call__

    def subgradient(self, z) -> np.ndarray:
        return np.zeros(self.d)


def abs_objective(anchor) -> AbsObjective:
    return AbsObjective(anchor)


def huber_objective(anchor, kappa: float) -> HuberObjective:
    return HuberObjective(anchor, kappa)


@dataclass(frozen=True)
class Certificate:
    z_star: np.ndarray
    f_star: float
    method: str
    confident: bool = True

    def to_dict(self) -> dict:
        return {
            "z_star": self.z_star.tolist(),
            "f_star": self.f_star,
            "method": self.method,
            "confident": self.confident,
        }


class ObjectiveFamily:
    """The n local objectives; ``F = sum_i f_i`` and ``L = sum_i L_i``."""

    def __init__(self, members: Sequence, certificate: Optional[Certificate] = None):
        if not members:
            raise ConfigError("objective family needs at least one member")
        self.members = list(members)
        self._certificate = certificate

    @property
    def n(self) -> int:
        return len(self.members)

    @property
    def d(self) -> int:
        m = self.members[0]
        return m.anchor.size if m.anchor is not None else m.d

    @property
    def lipschitz_sum(self) -> float:
        return math.fsum(m.lipschitz for m in self.members)

    @property
    def certificate(self) -> Certificate:
        if self._certificate is None:
            self._certificate = solve_centralized(self)
        return self._certificate

    def total(self, z) -> float:
        return math.fsum(m(z) for m in self.members)

    def subgradients(self, Z: np.ndarray) -> np.ndarray:
        """Row i is a subgradient of f_i at Z[i]."""
        return np.stack([m.subgradient(Z[i]) for i, m in enumerate(self.members)])

    def full_subgradient(self, z) -> np.ndarray:
        return np.sum([m.subgradient(z) for m in self.members], axis=0)

    @classmethod
    def abs_family(cls, anchors) -> "ObjectiveFamily":
        anchors = np.asarray(anchors, dtype=float)
        if anchors.ndim == 1:
            anchors = anchors[:, None]
        return cls([AbsObjective(a) for a in anchors])

    @classmethod
    def huber_family(cls, anchors, kappa: float) -> "ObjectiveFamily":
        anchors = np.asarray(anchors, dtype=float)
        if anchors.ndim == 1:
            anchors = anchors[:, None]
        return cls([HuberObjective(a, kappa) for a in anchors])

    @classmethod
    def constant_family(cls, n: int, d: int = 1, value: float = 0.0) -> "ObjectiveFamily":
        return cls([ConstantObjective(d, value) for _ in range(n)])


# --- centralized oracle ----------------------------------------------------

def _median_certificate(fam: ObjectiveFamily) -> Certificate:
    anchors = np.stack([m.anchor for m in fam.members])
    # midpoint of the two middle anchors when n is even
    z = np.median(anchors, axis=0)
    return Certificate(z_star=z, f_star=fam.total(z), method="median")


def _coordinate_bisection(fam: ObjectiveFamily, z: np.ndarray, radius: float,
                          iters: int = 200) -> np.ndarray:
    z = z.copy()
    for c in range(z.size):
        def slope(s):
            probe = z.copy()
            probe[c] = s
            return fam.full_subgradient(probe)[c]

        lo, hi = z[c] - radius, z[c] + radius
        for _ in range(60):
            if slope(lo) <= 0:
                break
            lo -= radius
            radius *= 2
        for _ in range(60):
            if slope(hi) >= 0:
                break
            hi += radius
            radius *= 2
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, abs(mid)):
                break
        z[c] = 0.5 * (lo + hi)
    return z


def certificate_holds(fam: ObjectiveFamily, cert: Certificate, probes=(1e-6, 1e-3, 1e-1, 1.0),
                      tol: float = 1e-9) -> bool:
    """Directional-derivative check of optimality along every +/- coordinate axis."""
    z = cert.z_star
    for c in range(z.size):
        for h in probes:
            for sgn in (1.0, -1.0):
                probe = z.copy()
                probe[c] += sgn * h
                if fam.total(probe) < cert.f_star - tol * max(1.0, abs(cert.f_star)):
                    return False
    return True


def solve_centralized(fam: ObjectiveFamily, budget: int = 2000) -> Certificate:
    """Minimiser of ``F`` with a provenance tag.

    Sums of abs objectives use the coordinate-wise median. Anything else runs
    subgradient descent from the anchor centroid followed by per-coordinate
    bisection on the subgradient sign; the result is flagged low-confidence
    if the optimality probe fails.
    """
    if all(isinstance(m, AbsObjective) for m in fam.members):
        return _median_certificate(fam)

    anchors = [m.anchor for m in fam.members if m.anchor is not None]
    d = fam.d
    z = np.mean(anchors, axis=0) if anchors else np.zeros(d)
    spread = float(np.ptp(np.stack(anchors), axis=0).max()) if anchors else 0.0
    radius = spread + 1.0
    best, best_f = z.copy(), fam.total(z)
    for k in range(budget):
        g = fam.full_subgradient(z)
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        z = z - (radius / math.sqrt(k + 1)) * g / gn
        fz = fam.total(z)
        if fz < best_f:
            best, best_f = z.copy(), fz
    for _ in range(3):
        best = _coordinate_bisection(fam, best, radius)
    cert = Certificate(z_star=best, f_star=fam.total(best), method="subgradient+bisection")
    if not certificate_holds(fam, cert):
        log.warning("centralized solve did not pass the optimality probe")
        cert = Certificate(cert.z_star, cert.f_star, cert.method, confident=False)
    return cert


# --- SP / MSP --------------------------------------------------------------

def averaged_iterate_update(z_avg, z_new, S_prev: float, alpha: float) -> np.ndarray:
    """``(alpha z_new + S_prev z_avg) / (S_prev + alpha)``; ignores ``z_avg`` when ``S_prev == 0``."""
    if S_prev == 0:
        return np.array(z_new, dtype=float, copy=True)
    return (alpha * np.asarray(z_new) + S_prev * np.asarray(z_avg)) / (S_prev + alpha)


@dataclass
class MSPState:
    nodes: NodeStates
    z_avg: np.ndarray
    S: float = 0.0
    t: int = 0

    @classmethod
    def initial(cls, x0, z_avg0=None) -> "MSPState":
        nodes = NodeStates.initial(x0)
        z_avg = np.zeros_like(nodes.x) if z_avg0 is None else np.array(z_avg0, dtype=float).reshape(nodes.x.shape)
        return cls(nodes=nodes, z_avg=z_avg)


def _subgradient_round(state: MSPState, W: np.ndarray, fam: ObjectiveFamily, gamma: float,
                       effective=None, delta: float = 0.0, graph_id=None):
    nodes = state.nodes
    alpha = step_size(state.t + 1, gamma)
    xbar = nodes.x.mean(axis=0)
    w = W @ nodes.x
    y = W @ nodes.y
    z = w / y[:, None]
    x = w - alpha * fam.subgradients(z)
    new = NodeStates(x=x, w=w, y=y, z=z)
    z_avg = averaged_iterate_update(state.z_avg, z, state.S, alpha)
    trace = RoundTrace(
        t=state.t + 1, graph_id=graph_id, effective=effective,
        gated=tuple(np.flatnonzero(nodes.y < delta).tolist()), states=new,
        consensus_error=consensus_error(z, xbar), min_y=float(y.min()), weights=W,
    )
    return MSPState(nodes=new, z_avg=z_avg, S=state.S + alpha, t=state.t + 1), trace


def sp_step(state: MSPState, available: DiGraph, fam: ObjectiveFamily,
            gamma: float = DEFAULT_GAMMA) -> MSPState:
    """Ungated subgradient-push round over the full available graph."""
    new, _ = _subgradient_round(state, weight_matrix(available), fam, gamma, available)
    return new


def msp_step(state: MSPState, available: DiGraph, fam: ObjectiveFamily,
             gamma: float = DEFAULT_GAMMA, delta: Optional[float] = None,
             graph_id: Optional[int] = None):
    """Gated subgradient-push round; returns ``(state, RoundTrace)``."""
    delta = gating_threshold(state.nodes.n) if delta is None else delta
    eff = effective_graph(available, state.nodes.y, delta)
    return _subgradient_round(state, weight_matrix(eff), fam, gamma, eff, delta, graph_id)


def geometric_checkpoints(horizon: int, extra: Sequence[int] = ()) -> list:
    pts = set()
    t = 1
    while t <= horizon:
        pts.add(t)
        t *= 2
    pts.update(int(e) for e in extra if 1 <= int(e) <= horizon)
    if horizon >= 1:
        pts.add(horizon)
    return sorted(pts)


@dataclass(frozen=True)
class CheckpointRecord:
    t: int
    graph_id: int
    gaps: np.ndarray
    consensus_error: float
    min_y: float
    bound: Optional[float]
    log_bound: Optional[float]

    @property
    def gap_max(self) -> float:
        return float(self.gaps.max())

    @property
    def gap_mean(self) -> float:
        return float(self.gaps.mean())


@dataclass
class MSPRun:
    records: list
    final: MSPState
    certificate: Certificate
    bound_inputs: Optional[RateBoundInputs]
    delta: float
    delta_violations: int
    traces: list = field(default_factory=list)


def rate_bound_inputs(ensemble: GraphEnsemble, fam: ObjectiveFamily, x0, gamma: float,
                      certificate: Optional[Certificate] = None) -> Optional[RateBoundInputs]:
    if ensemble.n < 2:
        return None
    cert = certificate or fam.certificate
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0[:, None]
    return RateBoundInputs.build(bound_constants(ensemble), x0, cert.z_star,
                                 fam.lipschitz_sum, gamma)


def run_msp(ensemble: GraphEnsemble, fam: ObjectiveFamily, x0, gamma: float = DEFAULT_GAMMA,
            horizon: int = 1000, seed=0, *, checkpoints: Optional[Sequence[int]] = None,
            gate: bool = True, certificate: Optional[Certificate] = None,
            z_avg0=None, keep_traces: bool = False) -> MSPRun:
    """Run MSP (or SP with ``gate=False``) and record gaps of the averaged iterates.

    At checkpoint ``t`` the record holds ``F(z_tilde_i(t)) - F*`` for each node
    and the rate bound for ``z_tilde(t)``, i.e. the bound evaluated at index ``t - 1``.
    """
    require_valid(ensemble)
    check_gamma(gamma)
    if fam.n != ensemble.n:
        raise ConfigError(f"family has {fam.n} members but the ensemble has n={ensemble.n}")
    cert = certificate or fam.certificate
    checkpoints = set(geometric_checkpoints(horizon) if checkpoints is None else checkpoints)
    inputs = rate_bound_inputs(ensemble, fam, x0, gamma, cert)

    graph_seq, _ = trial_streams(seed)
    sampler = GraphSequenceSampler(ensemble, graph_seq)
    delta = gating_threshold(ensemble.n)
    weights = EffectiveWeights(ensemble, delta, gate)
    state = MSPState.initial(x0, z_avg0)

    records, traces = [], []
    violations = 0
    for _ in range(horizon):
        b = sampler.next_index()
        W, eff = weights(b, state.nodes.y)
        state, trace = _subgradient_round(state, W, fam, gamma, eff, delta, b)
        if trace.min_y < delta:
            violations += 1
        if keep_traces:
            traces.append(trace)
        if state.t in checkpoints:
            gaps = np.array([fam.total(z) for z in state.z_avg]) - cert.f_star
            if inputs is not None:
                lb = theorem2_log_bound(inputs, state.t - 1)
                bound = theorem2_bound(inputs, state.t - 1)
            else:
                lb = bound = None
            records.append(CheckpointRecord(
                t=state.t, graph_id=b, gaps=gaps, consensus_error=trace.consensus_error,
                min_y=trace.min_y, bound=bound, log_bound=lb,
            ))
    if violations:
        log.warning("min y fell below delta=%g in %d of %d rounds", delta, violations, horizon)
    return MSPRun(records=records, final=state, certificate=cert, bound_inputs=inputs,
                  delta=delta, delta_violations=violations, traces=traces)
