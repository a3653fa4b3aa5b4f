"""Column-stochastic weight matrices, cut flows, and closed-form bound constants.

Matrices follow the convention ``W[i, j] > 0`` iff node ``j`` sends to node
``i``, so a state vector is propagated as ``W @ x``.

The contraction factor ``lam`` is so close to 1 for every n >= 2 that
``1 - lam`` underflows in direct arithmetic; it is carried as
``log(1 - lam)`` throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation, DimensionError, DomainError
from .graphs import DiGraph, GraphEnsemble, require_valid

MAX_ENUMERATED_N = 16


def weight_matrix(effective: DiGraph) -> np.ndarray:
    """Out-degree normalized adjacency: ``W[i, j] = 1/d_j`` for each edge ``j -> i``."""
    a = effective.adjacency
    deg = a.sum(axis=0)
    if np.any(deg == 0):
        bad = (np.flatnonzero(deg == 0) + 1).tolist()
        raise ContractViolation(f"nodes {bad} have out-degree 0; W cannot be column-stochastic")
    return a / deg


def product(ws: Sequence[np.ndarray], n: int | None = None) -> np.ndarray:
    """``W(b) @ W(b-1) @ ... @ W(a)`` for ``ws`` listed in ascending round order."""
    if len(ws) == 0:
        if n is None:
            raise DimensionError("empty product needs an explicit n")
        return np.eye(n)
    out = np.array(ws[0], dtype=float)
    for w in ws[1:]:
        if w.shape != out.shape:
            raise DimensionError(f"shape mismatch {w.shape} vs {out.shape}")
        out = w @ out
    return out


def _subset_mask(S: Iterable[int], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for i in S:
        if not 0 <= i < n:
            raise DomainError(f"node {i} outside 0..{n - 1}")
        mask[i] = True
    if not mask.any() or mask.all():
        raise DomainError("cut flow needs a nontrivial subset")
    return mask


def cut_flow(w: np.ndarray, S: Iterable[int]) -> float:
    """Total weight ``sum_{i in S, j not in S} W[i, j]``."""
    mask = _subset_mask(S, w.shape[0])
    return float(w[np.ix_(mask, ~mask)].sum())


def cumulative_flow(ws: Iterable[np.ndarray], S: Iterable[int]) -> np.ndarray:
    """Running sums of :func:`cut_flow` over a matrix sequence."""
    S = list(S)
    return np.cumsum([cut_flow(w, S) for w in ws])


def nontrivial_subsets(n: int) -> list:
    if n > MAX_ENUMERATED_N:
        raise DomainError(
            f"refusing to enumerate 2^{n} - 2 subsets; pass an explicit subset list for n > {MAX_ENUMERATED_N}"
        )
    return [
        tuple(c) for k in range(1, n) for c in itertools.combinations(range(n), k)
    ]


def subset_indicators(subsets: Sequence[Sequence[int]], n: int) -> np.ndarray:
    ind = np.zeros((len(subsets), n))
    for r, S in enumerate(subsets):
        ind[r, _subset_mask(S, n)] = 1.0
    return ind


def cut_flows(w: np.ndarray, indicators: np.ndarray) -> np.ndarray:
    """Vectorised cut flow for many subsets at once (rows of ``indicators``)."""
    return np.einsum("ki,ij,kj->k", indicators, w, 1.0 - indicators)


def is_irreducible(m: np.ndarray) -> bool:
    """True iff ``(I + support(m))^(n-1)`` is entrywise positive."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    reach = (m > 0) | np.eye(n, dtype=bool)
    # boolean repeated squaring; paths of length < 2^k after k squarings
    steps = 1
    while steps < n - 1:
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        steps *= 2
    return bool(reach.all())


def ergodicity_coefficient(m: np.ndarray) -> float:
    """Largest half l1-distance between two columns (a Dobrushin-style proxy).

    Zero iff all columns coincide, at most 1 for column-stochastic input, and
    non-increasing under left multiplication by a column-stochastic matrix.
    """
    m = np.asarray(m, dtype=float)
    diffs = np.abs(m[:, :, None] - m[:, None, :]).sum(axis=0)
    return float(min(1.0, 0.5 * diffs.max()))


# --- closed-form constants -------------------------------------------------

@dataclass(frozen=True)
class BoundConstants:
    n: int
    B: int
    p: float
    delta: float
    log_lambda: float
    log_one_minus_lambda: float
    c1: float

    @property
    def lam(self) -> float:
        return math.exp(self.log_lambda)

    @property
    def one_minus_lambda(self) -> float:
        """May underflow to 0.0; prefer ``log_one_minus_lambda``."""
        return math.exp(self.log_one_minus_lambda)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "B": self.B,
            "p": self.p,
            "delta": self.delta,
            "lambda": self.lam,
            "log_lambda": self.log_lambda,
            "log_one_minus_lambda": self.log_one_minus_lambda,
            "c1": self.c1,
        }


def gating_threshold(n: int) -> float:
    """``1 / n^(2n)``; nodes whose y drops below it stop sending."""
    return math.exp(-2 * n * math.log(n))


def _log_one_minus_power(log_x: float, a: float) -> tuple:
    """``(log lam, log(1 - lam))`` for ``lam = (1 - x)^a`` with ``x = exp(log_x)``."""
    if log_x > -700.0:
        x = math.exp(log_x)
        log_lam = a * math.log1p(-x)
        one_minus = -math.expm1(log_lam)
        if one_minus > 0.0:
            return log_lam, math.log(one_minus)
    # x below the normal range: 1 - lam = a x (1 + O(x)) exactly to double precision
    log_1m = math.log(a) + log_x
    return -math.exp(log_1m), log_1m


def bound_constants(e: GraphEnsemble) -> BoundConstants:
    require_valid(e)
    n = e.n
    if n < 2:
        raise DomainError("bound constants need n >= 2")
    B = 2 * n - 2
    p = e.min_positive_prob ** (2 * n - 2)
    delta = gating_threshold(n)
    log_x = -(4 * n * B / p) * math.log(n)
    log_lam, log_1m = _log_one_minus_power(log_x, p / (2 * n * B))
    c1 = p * p / (4 * B)
    return BoundConstants(n=n, B=B, p=p, delta=delta, log_lambda=log_lam,
                          log_one_minus_lambda=log_1m, c1=c1)


def _check_gamma(gamma: float):
    if not 0.5 < gamma < 1.0:
        raise DomainError(f"gamma must lie in the open interval (0.5, 1), got {gamma}")


def step_sum_lower_bound(t: int, gamma: float) -> float:
    """``((t+2)^(1-gamma) - 1) / (1 - gamma)``, a lower bound on ``sum_{k=0}^t alpha(k+1)``."""
    _check_gamma(gamma)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return math.expm1((1.0 - gamma) * math.log(t + 2)) / (1.0 - gamma)


def gamma_factor(t: int, gamma: float) -> float:
    """Rate factor ``(1-gamma) / ((t+2)^(1-gamma) - 1)``, the reciprocal of the step-sum bound."""
    _check_gamma(gamma)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return (1.0 - gamma) / math.expm1((1.0 - gamma) * math.log(t + 2))


@dataclass(frozen=True)
class RateBoundInputs:
    n: int
    d: int
    gamma: float
    L: float
    xbar0: np.ndarray
    z_star: np.ndarray
    initial_norms: float
    constants: BoundConstants

    def __post_init__(self):
        _check_gamma(self.gamma)
        if self.d < 1:
            raise DomainError("d must be >= 1")
        if self.L < 0:
            raise DomainError("L must be non-negative")

    @classmethod
    def build(cls, constants: BoundConstants, x0, z_star, L: float, gamma: float):
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        if x0.shape[0] == 1 and constants.n > 1:
            x0 = x0.T
        z_star = np.atleast_1d(np.asarray(z_star, dtype=float))
        return cls(
            n=x0.shape[0], d=x0.shape[1], gamma=gamma, L=float(L),
            xbar0=x0.mean(axis=0), z_star=z_star,
            initial_norms=float(np.abs(x0).sum()), constants=constants,
        )

    def bracket_log_terms(self) -> list:
        """Logs of the four bracket terms; ``-inf`` for terms that vanish."""
        def log_or_neg_inf(v):
            return math.log(v) if v > 0 else -math.inf

        c = self.constants
        harmonic = 1.0 + 1.0 / (2.0 * self.gamma - 1.0)
        log_scale = -math.log(c.delta) - c.log_one_minus_lambda
        dist = float(np.abs(self.xbar0 - self.z_star).sum())
        return [
            log_or_neg_inf(self.n * dist / 2.0),
            log_or_neg_inf(harmonic * self.L**2 / (2.0 * self.n)),
            log_or_neg_inf(60.0 * self.L * self.initial_norms) + log_scale,
            log_or_neg_inf(60.0 * self.d * self.L**2 * harmonic) + log_scale,
        ]


def theorem2_log_bound(inputs: RateBoundInputs, t: int) -> float:
    """Natural log of the averaged-iterate gap bound at round index ``t``."""
    logs = [v for v in inputs.bracket_log_terms() if v > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    log_bracket = top + math.log(math.fsum(math.exp(v - top) for v in logs))
    return math.log(gamma_factor(t, inputs.gamma)) + log_bracket


def theorem2_bound(inputs: RateBoundInputs, t: int) -> float:
    """Gap bound for ``z_tilde(t+1)``; ``inf`` when it exceeds the float range."""
    log_b = theorem2_log_bound(inputs, t)
    if log_b == -math.inf:
        return 0.0
    if log_b > 709.0:
        return math.inf
    return math.exp(log_b)
