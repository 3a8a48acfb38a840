"""Simple undirected graphs, party partitions, ego networks, and exact EBC.

Node labels are opaque strings internalized to dense integer indices in
sorted-label order. Adjacency is kept as per-node sorted index arrays
(CSR) plus frozensets for O(1) membership. All structures are immutable
after construction and safe to share across concurrent readers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from . import _kernels


class GraphParseError(ValueError):
    """Malformed edge-list line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnknownNodeError(KeyError):
    """A node label that is not part of the graph."""


class WrongPartyError(ValueError):
    """An ego node that does not belong to party X."""


@dataclass(frozen=True)
class LoadReport:
    """What the edge-list parser dropped or ignored."""

    data_lines: int = 0
    comment_lines: int = 0
    self_loops: int = 0
    duplicates: int = 0


class Graph:
    """Simple undirected graph: no self-loops, no duplicate edges."""

    __slots__ = ("labels", "n", "edge_count", "load_report",
                 "_index", "_nbr_sets", "_indptr", "_indices", "__weakref__")

    def __init__(self, nodes: Iterable[object], edges: Iterable[tuple[object, object]],
                 load_report: LoadReport | None = None):
        labels = sorted({str(v) for v in nodes})
        index = {lab: i for i, lab in enumerate(labels)}
        n = len(labels)
        nbrs: list[set[int]] = [set() for _ in range(n)]
        count = 0
        for u, v in edges:
            su, sv = str(u), str(v)
            if su == sv:
                raise ValueError(f"self-loop on node {su!r}")
            try:
                iu, iv = index[su], index[sv]
            except KeyError as exc:
                raise UnknownNodeError(f"edge endpoint {exc.args[0]!r} not in node set") from None
            if iv not in nbrs[iu]:
                nbrs[iu].add(iv)
                nbrs[iv].add(iu)
                count += 1
        self.labels: tuple[str, ...] = tuple(labels)
        self.n = n
        self.edge_count = count
        self.load_report = load_report
        self._index = index
        self._nbr_sets: tuple[frozenset[int], ...] = tuple(frozenset(s) for s in nbrs)
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i, s in enumerate(nbrs):
            indptr[i + 1] = indptr[i] + len(s)
        indices = np.empty(int(indptr[-1]), dtype=np.int64)
        for i, s in enumerate(nbrs):
            indices[indptr[i]:indptr[i + 1]] = sorted(s)
        self._indptr = indptr
        self._indices = indices

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[object, object]],
                   isolated: Iterable[object] = ()) -> "Graph":
        edges = [(str(u), str(v)) for u, v in edges]
        nodes = {u for u, _ in edges} | {v for _, v in edges} | {str(x) for x in isolated}
        return cls(nodes, edges)

    def index_of(self, label: object) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise UnknownNodeError(f"unknown node {label!r}") from None

    def label_of(self, idx: int) -> str:
        return self.labels[idx]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._nbr_sets[i]

    def neighbors(self, i: int) -> frozenset[int]:
        return self._nbr_sets[i]

    def degree(self, i: int) -> int:
        return len(self._nbr_sets[i])

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        return self._indptr, self._indices

    def edges_iter(self) -> Iterator[tuple[int, int]]:
        """All edges as index pairs (i, j) with i < j."""
        for i in range(self.n):
            for j in self._nbr_sets[i]:
                if j > i:
                    yield (i, j)

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count})"


def load_edge_list(source: str | Path | TextIO | bytes,
                   comment_prefixes: tuple[str, ...] = ("#", "%")) -> Graph:
    """Parse a whitespace-separated edge list into a Graph.

    Lines starting with a comment prefix are skipped; data lines need at
    least two tokens (extra columns such as weights are ignored).
    Self-loops and duplicate edges are dropped and counted in the
    returned graph's ``load_report``.
    """
    if isinstance(source, bytes):
        stream: TextIO = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, (str, Path)):
        stream = open(source, "r", encoding="utf-8")
    else:
        stream = source
    try:
        nodes: set[str] = set()
        edges: set[tuple[str, str]] = set()
        self_loops = dups = comments = data_lines = 0
        for line_no, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith(comment_prefixes):
                comments += 1
                continue
            toks = line.split()
            if len(toks) < 2:
                raise GraphParseError(line_no, f"expected 2 node tokens, got {len(toks)}")
            u, v = toks[0], toks[1]
            data_lines += 1
            nodes.add(u)
            nodes.add(v)
            if u == v:
                self_loops += 1
                continue
            key = (u, v) if u < v else (v, u)
            if key in edges:
                dups += 1
                continue
            edges.add(key)
        report = LoadReport(data_lines=data_lines, comment_lines=comments,
                            self_loops=self_loops, duplicates=dups)
        return Graph(nodes, sorted(edges), load_report=report)
    finally:
        if isinstance(source, (str, Path)):
            stream.close()


PARTY_X = "X"
PARTY_Y = "Y"


class _PartyInfoMixin:
    """Shared party bookkeeping for full graphs and one-party views."""

    graph: Graph
    _is_x: np.ndarray  # bool per dense index

    def party_of(self, label: object) -> str:
        return PARTY_X if self._is_x[self.graph.index_of(label)] else PARTY_Y

    def is_x(self, idx: int) -> bool:
        return bool(self._is_x[idx])

    @cached_property
    def vx_indices(self) -> np.ndarray:
        return np.flatnonzero(self._is_x).astype(np.int64)

    @cached_property
    def vy_indices(self) -> np.ndarray:
        return np.flatnonzero(~self._is_x).astype(np.int64)

    def edge_class(self, i: int, j: int) -> str:
        if self._is_x[i] and self._is_x[j]:
            return "X"
        if not self._is_x[i] and not self._is_x[j]:
            return "Y"
        return "XY"


class PartyView(_PartyInfoMixin):
    """One party's complete knowledge: the full node/party roster plus
    only the edges incident to its own nodes.

    The other party's internal edges are physically absent from the
    view's graph, so code running against a view cannot read them.
    """

    def __init__(self, party: str, graph: Graph, is_x_mask: np.ndarray):
        self.party = party
        self.graph = graph
        self._is_x = is_x_mask


class PartitionedGraph(_PartyInfoMixin):
    """A graph whose nodes are split between parties X and Y.

    Edge classes are derived: an edge is internal to X (class "X") iff
    both endpoints are X's, internal to Y iff both are Y's, and shared
    ("XY") otherwise. The three classes partition the edge set.
    """

    def __init__(self, graph: Graph, is_x_mask: np.ndarray):
        if is_x_mask.shape != (graph.n,):
            raise ValueError("party mask must have one entry per node")
        self.graph = graph
        self._is_x = is_x_mask.astype(bool)

    def edge_class_counts(self) -> dict[str, int]:
        counts = {"X": 0, "Y": 0, "XY": 0}
        for i, j in self.graph.edges_iter():
            counts[self.edge_class(i, j)] += 1
        return counts

    def _filtered_graph(self, keep_party_x: bool) -> Graph:
        keep = self._is_x if keep_party_x else ~self._is_x
        g = self.graph
        edges = [(g.labels[i], g.labels[j]) for i, j in g.edges_iter()
                 if keep[i] or keep[j]]
        return Graph(g.labels, edges)

    @cached_property
    def _view_x(self) -> PartyView:
        return PartyView(PARTY_X, self._filtered_graph(True), self._is_x)

    @cached_property
    def _view_y(self) -> PartyView:
        return PartyView(PARTY_Y, self._filtered_graph(False), self._is_x)

    def view_x(self) -> PartyView:
        """X's knowledge: all nodes, edges within X plus shared edges."""
        return self._view_x

    def view_y(self) -> PartyView:
        """Y's knowledge: all nodes, edges within Y plus shared edges."""
        return self._view_y


def partition_nodes(g: Graph, seed: int, x_fraction: float) -> PartitionedGraph:
    """Assign each node independently to X with probability x_fraction.

    Deterministic given (seed, x_fraction); the graph structure is
    unchanged.
    """
    if not 0.0 <= x_fraction <= 1.0:
        raise ValueError("x_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random(g.n) < x_fraction
    return PartitionedGraph(g, mask)


@dataclass(frozen=True)
class EgoContext:
    """Ego node a plus the derived node sets, all as dense indices.

    N_a is a's full neighbourhood, R_star = N_a intersected with V_X,
    and X_minus = V_X minus {a}. x_minus_sorted carries X_minus as a
    sorted array for the samplers.
    """

    a: int
    N_a: frozenset[int]
    R_star: frozenset[int]
    X_minus: frozenset[int]
    x_minus_sorted: np.ndarray

    def __post_init__(self):
        # structural sanity; cheap relative to construction
        if self.a in self.N_a:
            raise ValueError("ego node cannot neighbour itself")


def ego_context(pg: PartitionedGraph | PartyView, a: object) -> EgoContext:
    """Build the ego context for node a, which must belong to party X."""
    g = pg.graph
    a_idx = g.index_of(a)
    if not pg.is_x(a_idx):
        raise WrongPartyError(f"ego node {a!r} is not in party X")
    return _ego_context_idx(pg, a_idx)


def _ego_context_idx(pg: PartitionedGraph | PartyView, a_idx: int) -> EgoContext:
    g = pg.graph
    n_a = g.neighbors(a_idx)
    r_star = frozenset(v for v in n_a if pg.is_x(v))
    vx = pg.vx_indices
    pos = np.searchsorted(vx, a_idx)
    x_minus_arr = np.delete(vx, pos)
    return EgoContext(a=a_idx, N_a=n_a, R_star=r_star,
                      X_minus=frozenset(x_minus_arr.tolist()),
                      x_minus_sorted=x_minus_arr)


def two_path_count(g: Graph, mids: Iterable[object], i: object, j: object) -> int:
    """Number of 2-paths i-k-j whose intermediate k lies in mids."""
    ii, jj = g.index_of(i), g.index_of(j)
    if ii == jj:
        raise ValueError("endpoints must differ")
    mid_idx = {g.index_of(m) for m in mids}
    return _two_path_count_idx(g, mid_idx, ii, jj)


def _two_path_count_idx(g: Graph, mids: set[int] | frozenset[int], i: int, j: int) -> int:
    return len(g.neighbors(i) & g.neighbors(j) & mids)


def _local_square(g: Graph, nodes_sorted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense adjacency M of the induced subgraph and its square M @ M."""
    indptr, indices = g.csr()
    m = _kernels.induced_dense(indptr, indices, nodes_sorted)
    mf = m.astype(np.float64)
    return m, mf @ mf


def exact_ebc(g: Graph, a: object) -> float:
    """Exact egocentric betweenness of node a.

    Sum over unordered non-adjacent pairs of a's neighbours of the
    reciprocal number of 2-paths joining them inside the subgraph
    induced on N_a plus a; every such pair has at least the path
    through a itself.
    """
    a_idx = g.index_of(a)
    return _exact_ebc_idx(g, a_idx)


def _exact_ebc_idx(g: Graph, a_idx: int) -> float:
    n_a = g.neighbors(a_idx)
    if len(n_a) < 2:
        return 0.0
    local = np.array(sorted(n_a | {a_idx}), dtype=np.int64)
    m, msq = _local_square(g, local)
    ego_pos = np.flatnonzero(local != a_idx)
    madj = m[np.ix_(ego_pos, ego_pos)]
    msq_e = msq[np.ix_(ego_pos, ego_pos)]
    iu = np.triu_indices(len(ego_pos), k=1)
    disconnected = madj[iu] == 0
    return float(np.sum(1.0 / msq_e[iu][disconnected]))
