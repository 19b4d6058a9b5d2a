"""Weighted undirected graphs, generators, edge-list I/O and Laplacians.

Nodes are 0-based inside the library. The edge-list file format is 1-based::

    # optional comments anywhere
    n m
    i j w        (m lines, 1 <= i < j <= n, w > 0)
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    """Invalid graph description."""


class GraphFormatError(GraphError):
    """Malformed edge-list file; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class GraphGenerationError(RuntimeError):
    """Random generator exhausted its retry budget."""


class DisconnectedGraphWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Graph:
    """Weighted undirected graph with 0-based node indices.

    ``edges`` is a tuple of ``(i, j, w)`` with ``i < j`` and ``w > 0``; each
    unordered pair appears at most once.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise GraphError(f"node count must be a positive integer, got {self.n!r}")
        seen = set()
        canon = []
        for e in self.edges:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            if not (w > 0 and np.isfinite(w)):
                raise GraphError(f"edge ({i}, {j}) has nonpositive weight {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            canon.append((key[0], key[1], w))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            W[i, j] = w
            W[j, i] = w
        return W

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)


def build_laplacian(g: Graph) -> np.ndarray:
    """Dense combinatorial Laplacian ``L = D - W`` (exactly symmetric)."""
    W = g.adjacency()
    L = -W
    # row sums of -W are -deg, so adding deg on the diagonal zeroes each row
    L[np.diag_indices(g.n)] = W.sum(axis=1)
    return L


def count_components(g: Graph) -> int:
    if g.num_edges == 0:
        return g.n
    rows = [e[0] for e in g.edges]
    cols = [e[1] for e in g.edges]
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(g.n, g.n))
    ncomp, _ = connected_components(A, directed=False)
    return int(ncomp)


def is_connected(g: Graph) -> bool:
    return count_components(g) == 1


def gen_cycle(n: int) -> Graph:
    """Unit-weight ring on ``n >= 3`` nodes."""
    if int(n) != n or n < 3:
        raise GraphError(f"cycle needs n >= 3, got {n}")
    n = int(n)
    edges = [(i, i + 1, 1.0) for i in range(n - 1)]
    edges.append((0, n - 1, 1.0))
    return Graph(n, tuple(edges))


def gen_path(n: int) -> Graph:
    if int(n) != n or n < 2:
        raise GraphError(f"path needs n >= 2, got {n}")
    return Graph(int(n), tuple((i, i + 1, 1.0) for i in range(int(n) - 1)))


def gen_complete(n: int) -> Graph:
    return Graph(int(n), tuple((i, j, 1.0) for i in range(n) for j in range(i + 1, n)))


def community_labels(sizes: Sequence[int]) -> np.ndarray:
    return np.repeat(np.arange(len(sizes)), sizes)


def gen_community(
    sizes: Sequence[int],
    p_in: float,
    p_out: float,
    seed: int,
    max_retries: int = 100,
) -> Graph:
    """Stochastic block model with unit weights, redrawn until connected.

    Within-block pairs are joined with probability ``p_in`` and cross-block
    pairs with ``p_out``. Nodes are numbered block by block. The draw is a
    pure function of ``seed``; at most ``max_retries`` graphs are drawn
    before :class:`GraphGenerationError` is raised.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise GraphError(f"block sizes must be positive, got {sizes}")
    if max(sizes) < 2:
        raise GraphError("at least one block must have two or more nodes")
    if not (0.0 <= p_out < p_in <= 1.0):
        raise GraphError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")

    n = sum(sizes)
    labels = community_labels(sizes)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        keep = rng.random(iu.size) < prob
        g = Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist(), [1.0] * int(keep.sum()))))
        if is_connected(g):
            return g
    raise GraphGenerationError(
        f"no connected draw for sizes={sizes}, p_in={p_in}, p_out={p_out} "
        f"after {max_retries} attempts"
    )


def _data_lines(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line.split()


def parse_edge_list(text: str) -> Graph:
    """Parse the 1-based edge-list format described in the module docstring."""
    rows = _data_lines(text.splitlines())
    try:
        lineno, head = next(rows)
    except StopIteration:
        raise GraphFormatError("empty file: missing 'n m' header", 1) from None
    if len(head) != 2:
        raise GraphFormatError(f"header must be 'n m', got {' '.join(head)!r}", lineno)
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise GraphFormatError(f"header must hold two integers, got {' '.join(head)!r}", lineno) from None
    if n < 1 or m < 0:
        raise GraphFormatError(f"invalid header n={n}, m={m}", lineno)

    edges = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, fields in rows:
        if len(fields) != 3:
            raise GraphFormatError(f"expected 'i j w', got {' '.join(fields)!r}", lineno)
        try:
            i, j, w = int(fields[0]), int(fields[1]), float(fields[2])
        except ValueError:
            raise GraphFormatError(f"cannot parse edge {' '.join(fields)!r}", lineno) from None
        if i == j:
            raise GraphFormatError(f"self-loop at node {i}", lineno)
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphFormatError(f"node index out of range [1, {n}] in edge ({i}, {j})", lineno)
        if not (w > 0 and np.isfinite(w)):
            raise GraphFormatError(f"nonpositive weight {w}", lineno)
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphFormatError(f"duplicate edge {key} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        edges.append((key[0] - 1, key[1] - 1, w))
    if len(edges) != m:
        raise GraphFormatError(f"header declares {m} edges but file holds {len(edges)}")
    return Graph(n, tuple(edges))


def load_graph(path: str | os.PathLike) -> Graph:
    """Read an edge-list file; warns with :class:`DisconnectedGraphWarning`
    when the graph has more than one component."""
    with open(path, encoding="utf-8") as fh:
        g = parse_edge_list(fh.read())
    ncomp = count_components(g)
    if ncomp > 1:
        warnings.warn(f"{path}: graph has {ncomp} connected components", DisconnectedGraphWarning)
    return g


def format_edge_list(g: Graph) -> str:
    lines = [f"{g.n} {g.num_edges}"]
    lines.extend(f"{i + 1} {j + 1} {w!r}" for i, j, w in g.edges)
    return "\n".join(lines) + "\n"


def save_graph(g: Graph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_edge_list(g))


def graph_summary(g: Graph) -> dict:
    deg = g.degrees()
    return {
        "n": g.n,
        "m": g.num_edges,
        "components": count_components(g),
        "degree_min": float(deg.min()),
        "degree_max": float(deg.max()),
        "degree_mean": float(deg.mean()),
    }
