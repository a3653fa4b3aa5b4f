"""Directed graphs, graph ensembles and the i.i.d. random graph sequence.

Nodes are 0-based in the Python API and 1-based in ensemble files. An edge
``(i, j)`` means node ``i`` sends to node ``j``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, InvalidEnsembleError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class DiGraph:
    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable = (), self_loops: bool = True) -> "DiGraph":
        edges = set(edges)
        if self_loops:
            edges.update((i, i) for i in range(n))
        return cls(n, frozenset(edges))

    @classmethod
    def self_loops_only(cls, n: int) -> "DiGraph":
        return cls.from_edges(n)

    @classmethod
    def complete(cls, n: int) -> "DiGraph":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(n)))

    @classmethod
    def cycle(cls, n: int) -> "DiGraph":
        """Directed ring 0 -> 1 -> ... -> n-1 -> 0 plus self-loops."""
        return cls.from_edges(n, ((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def from_adjacency(cls, a) -> "DiGraph":
        """Support graph of a matrix, using the convention a[j, i] > 0 iff i -> j."""
        a = np.asarray(a)
        js, is_ = np.nonzero(a > 0)
        return cls(a.shape[0], frozenset(zip(is_.tolist(), js.tolist())))

    @property
    def has_self_loops(self) -> bool:
        return all((i, i) in self.edges for i in range(self.n))

    @cached_property
    def adjacency(self) -> np.ndarray:
        """0/1 matrix with ``a[j, i] = 1`` iff ``(i, j)`` is an edge."""
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[j, i] = 1.0
        a.flags.writeable = False
        return a

    @cached_property
    def out_neighbors(self) -> tuple:
        out = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            out[i].append(j)
        return tuple(tuple(o) for o in out)

    def out_degree(self, i: int) -> int:
        return len(self.out_neighbors[i])

    def without_cross_edges_from(self, senders: Iterable[int]) -> "DiGraph":
        senders = set(senders)
        return DiGraph(self.n, frozenset(e for e in self.edges if e[0] not in senders or e[0] == e[1]))

    def __repr__(self):
        cross = sorted((i + 1, j + 1) for i, j in self.edges if i != j)
        return f"DiGraph(n={self.n}, cross_edges={cross})"


def _reachable(adj: Sequence[Sequence[int]], start: int) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_strongly_connected(g: DiGraph) -> bool:
    if g.n == 1:
        return True
    forward = [[] for _ in range(g.n)]
    backward = [[] for _ in range(g.n)]
    for i, j in g.edges:
        forward[i].append(j)
        backward[j].append(i)
    return len(_reachable(forward, 0)) == g.n and len(_reachable(backward, 0)) == g.n


def union(gs: Sequence[DiGraph]) -> DiGraph:
    if not gs:
        raise DimensionError("union of an empty graph list is undefined")
    n = gs[0].n
    for g in gs:
        if g.n != n:
            raise DimensionError(f"cannot union graphs with n={n} and n={g.n}")
    edges = frozenset().union(*(g.edges for g in gs))
    return DiGraph(n, edges)


@dataclass(frozen=True)
class GraphEnsemble:
    """Finite candidate set of available-channel graphs with draw probabilities."""

    graphs: tuple
    probs: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @property
    def n(self) -> int:
        return self.graphs[0].n

    @property
    def support(self) -> tuple:
        """Indices of graphs drawn with positive probability."""
        return tuple(b for b, p in enumerate(self.probs) if p > 0)

    @property
    def min_positive_prob(self) -> float:
        return min(self.probs[b] for b in self.support)

    def validate(self) -> "ValidationReport":
        return validate_ensemble(self)


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def record(self, name: str, passed: bool, message: str = ""):
        self.checks[name] = bool(passed)
        if not passed:
            self.failures.append(f"{name}: {message}" if message else name)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": dict(self.checks), "failures": list(self.failures)}


def validate_ensemble(e: GraphEnsemble) -> ValidationReport:
    """Check every ensemble invariant and report; never raises."""
    report = ValidationReport()
    graphs, probs = list(e.graphs), list(e.probs)

    report.record("nonempty", len(graphs) > 0, "ensemble has no graphs")
    report.record(
        "lengths_match", len(graphs) == len(probs),
        f"{len(graphs)} graphs but {len(probs)} probabilities",
    )
    ns = {g.n for g in graphs}
    report.record("common_n", len(ns) <= 1, f"graphs disagree on n: {sorted(ns)}")

    missing = [b + 1 for b, g in enumerate(graphs) if not g.has_self_loops]
    report.record("self_loops", not missing, f"graphs {missing} lack self-loops")

    finite = all(math.isfinite(p) for p in probs)
    nonneg = finite and all(p >= 0 for p in probs)
    report.record("probs_nonnegative", nonneg, "probabilities must be finite and >= 0")
    total = math.fsum(probs) if finite else float("nan")
    report.record(
        "probs_normalized", finite and abs(total - 1.0) <= PROB_TOL,
        f"probabilities sum to {total!r}",
    )

    if graphs and len(ns) == 1 and len(graphs) == len(probs) and nonneg:
        active = [g for g, p in zip(graphs, probs) if p > 0]
        connected = bool(active) and is_strongly_connected(union(active))
    else:
        connected = False
    report.record(
        "union_strongly_connected", connected,
        "union of graphs with positive probability is not strongly connected",
    )
    return report


def require_valid(e: GraphEnsemble) -> GraphEnsemble:
    report = validate_ensemble(e)
    if not report.ok:
        raise InvalidEnsembleError(report)
    return e


class GraphSequenceSampler:
    """Seeded i.i.d. draws from an ensemble; one sampler per trial.

    Draws are pulled from the generator in fixed-size blocks, so the sequence
    depends only on ``(ensemble, seed)``.
    """

    block = 1024

    def __init__(self, ensemble: GraphEnsemble, seed=0):
        self.ensemble = require_valid(ensemble)
        if isinstance(seed, np.random.SeedSequence):
            self._rng = np.random.default_rng(seed)
        else:
            self._rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.seed = seed
        self.t = 0
        self.last_index = None
        self._cdf = np.cumsum(self.ensemble.probs)
        self._cdf[-1] = 1.0
        self._buffer = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self):
        u = self._rng.random(self.block)
        idx = np.searchsorted(self._cdf, u, side="right")
        # guard against zero-probability graphs at the right edge of the cdf
        self._buffer = np.minimum(idx, len(self._cdf) - 1)
        self._pos = 0

    def next_index(self) -> int:
        if self._pos >= len(self._buffer):
            self._refill()
        b = int(self._buffer[self._pos])
        self._pos += 1
        self.t += 1
        self.last_index = b
        return b

    def sample_next(self) -> DiGraph:
        return self.ensemble.graphs[self.next_index()]


def trial_streams(seed: int, count: int = 2) -> list:
    """Independent child seed sequences (graph draws, perturbations, ...) for one trial."""
    return np.random.SeedSequence(seed).spawn(count)


def random_ensemble(n: int, k: int, edge_prob: float, rng: np.random.Generator,
                    name: str = "") -> GraphEnsemble:
    """Random Assumption-1 ensemble of ``k`` graphs.

    Cross edges appear independently with ``edge_prob``; if the union is not
    strongly connected, the edges of a random ring are scattered over the
    graphs to repair it. Probabilities are Dirichlet(1, ..., 1).
    """
    edge_sets = []
    for _ in range(k):
        mask = rng.random((n, n)) < edge_prob
        edge_sets.append({(i, j) for i in range(n) for j in range(n) if i != j and mask[i, j]})
    graphs = [DiGraph.from_edges(n, es) for es in edge_sets]
    if not is_strongly_connected(union(graphs)):
        order = rng.permutation(n)
        for a in range(n):
            i, j = int(order[a]), int(order[(a + 1) % n])
            edge_sets[int(rng.integers(k))].add((i, j))
        graphs = [DiGraph.from_edges(n, es) for es in edge_sets]
    probs = rng.dirichlet(np.ones(k))
    probs = probs / math.fsum(probs)
    probs[-1] = 1.0 - math.fsum(probs[:-1])
    return GraphEnsemble(tuple(graphs), tuple(probs.tolist()), name=name)


def half_cycle_ensemble(n: int) -> GraphEnsemble:
    """Two graphs splitting a directed ring's edges by parity, drawn with p = 0.5 each."""
    ring = [(i, (i + 1) % n) for i in range(n)]
    g1 = DiGraph.from_edges(n, ring[0::2])
    g2 = DiGraph.from_edges(n, ring[1::2])
    return GraphEnsemble((g1, g2), (0.5, 0.5), name=f"half-cycle-{n}")


# --- file format -----------------------------------------------------------

def ensemble_to_dict(e: GraphEnsemble) -> dict:
    return {
        "name": e.name,
        "n": e.n,
        "graphs": [sorted([i + 1, j + 1] for i, j in g.edges if i != j) for g in e.graphs],
        "probs": list(e.probs),
    }


def ensemble_from_dict(data: dict, validate: bool = True) -> GraphEnsemble:
    """Build an ensemble from the documented schema.

    Schema: ``{"n": int, "graphs": [[[i, j], ...], ...], "probs": [...]}``
    with 1-based node labels; self-loops may be omitted and are implied.
    """
    try:
        n = int(data["n"])
        raw_graphs = data["graphs"]
        probs = [float(p) for p in data["probs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed ensemble document: {exc}") from exc
    graphs = []
    for b, edge_list in enumerate(raw_graphs):
        edges = []
        for edge in edge_list:
            i, j = int(edge[0]), int(edge[1])
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"graph {b + 1}: edge {edge} outside 1..{n}")
            edges.append((i - 1, j - 1))
        graphs.append(DiGraph.from_edges(n, edges))
    e = GraphEnsemble(tuple(graphs), tuple(probs), name=str(data.get("name", "")))
    if validate:
        require_valid(e)
    return e


def load_ensemble(path) -> GraphEnsemble:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read ensemble file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    return ensemble_from_dict(data)


def save_ensemble(e: GraphEnsemble, path) -> None:
    doc = ensemble_to_dict(e)
    graphs = ",\n    ".join(json.dumps(g) for g in doc["graphs"])
    text = (
        "{\n"
        f'  "name": {json.dumps(doc["name"])},\n'
        f'  "n": {doc["n"]},\n'
        f'  "graphs": [\n    {graphs}\n  ],\n'
        f'  "probs": {json.dumps(doc["probs"])}\n'
        "}\n"
    )
    Path(path).write_text(text)
