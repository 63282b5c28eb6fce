"""CA-components as the meet of the k color-avoiding component partitions.

Two vertices are CA-connected when they are connected in every ``G^i``
(the graph with layer ``i`` removed).  Each ``G^i`` partition is computed
with a sparse connected-components pass and the partitions are intersected
pairwise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .colored_graph import ColoredMultigraph, view
from .errors import DomainError

ORACLE_MAX_N = 16


@dataclass(frozen=True, eq=False)
class Partition:
    """Labeling of ``0..n-1``; ``label[v]`` is the minimum vertex of v's block."""

    label: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.label, dtype=np.int64)
        lab.flags.writeable = False
        object.__setattr__(self, "label", lab)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Canonicalize arbitrary block identifiers."""
        return cls(_canonical(np.asarray(labels)))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(np.arange(n, dtype=np.int64))

    @classmethod
    def one_block(cls, n: int) -> "Partition":
        return cls(np.zeros(n, dtype=np.int64))

    @classmethod
    def from_blocks(cls, n: int, blocks) -> "Partition":
        lab = np.arange(n, dtype=np.int64)
        for b in blocks:
            b = sorted(b)
            lab[b] = b[0]
        return cls.from_labels(lab)

    @property
    def n(self) -> int:
        return len(self.label)

    def sizes(self) -> np.ndarray:
        """Block size of every vertex's block, indexed by representative."""
        return np.bincount(self.label, minlength=self.n)

    def representatives(self) -> np.ndarray:
        return np.flatnonzero(self.label == np.arange(self.n))

    def blocks(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for v, r in enumerate(self.label.tolist()):
            out.setdefault(r, []).append(v)
        return out

    def block_of(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.label == self.label[v])

    def refines(self, other: "Partition") -> bool:
        """True when every block of ``self`` lies inside a block of ``other``."""
        return meet(self, other) == self

    def dump(self) -> str:
        """``block <rep>: v1 v2 ...`` lines sorted by representative."""
        lines = [f"block {r}: " + " ".join(map(str, vs)) for r, vs in sorted(self.blocks().items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "Partition":
        blocks = []
        for line in text.splitlines():
            if not line.strip():
                continue
            head, _, body = line.partition(":")
            if not head.startswith("block "):
                raise DomainError(f"malformed partition line {line!r}")
            blocks.append([int(x) for x in body.split()])
        n = sum(len(b) for b in blocks)
        if sorted(v for b in blocks for v in b) != list(range(n)):
            raise DomainError("blocks do not partition 0..n-1")
        return cls.from_blocks(n, blocks)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.label, other.label)

    def __hash__(self):
        return hash(self.label.tobytes())

    def __repr__(self):
        if self.n <= 20:
            return f"Partition({sorted(self.blocks().values())})"
        return f"Partition(n={self.n}, blocks={len(self.representatives())})"


def _canonical(labels: np.ndarray) -> np.ndarray:
    n = len(labels)
    if n == 0:
        return labels.astype(np.int64)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    return first[inverse.ravel()].astype(np.int64)


def component_labels(n: int, edges: np.ndarray) -> np.ndarray:
    """Canonical component labels of the simple graph with ``edges``."""
    if len(edges) == 0:
        return np.arange(n, dtype=np.int64)
    adj = coo_matrix(
        (np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n, n)
    ).tocsr()
    _, lab = connected_components(adj, directed=False)
    first = np.full(lab.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, lab, np.arange(n, dtype=np.int64))
    return first[lab]


def components_of(n: int, edges: np.ndarray) -> Partition:
    return Partition(component_labels(n, edges))


def components_avoiding(g: ColoredMultigraph, i: int) -> Partition:
    """Connected components of G^i."""
    return components_of(g.n, view(g, avoid=i).edges)


def meet(p: Partition, q: Partition) -> Partition:
    """Coarsest common refinement: blocks of equal ``(p.label, q.label)``."""
    if p.n != q.n:
        raise DomainError(f"partition sizes differ: {p.n} != {q.n}")
    key = p.label * p.n + q.label
    return Partition(_canonical(key))


def size_census(p: Partition) -> dict[int, int]:
    """``{size: number of blocks of that size}``."""
    sizes = p.sizes()
    sizes = sizes[sizes > 0]
    hist = np.bincount(sizes)
    return {int(s): int(c) for s, c in enumerate(hist) if c}


@dataclass(frozen=True)
class CAReport:
    partition: Partition
    histogram: dict[int, int]
    max_size: int
    avoided_partitions: tuple[Partition, ...]

    @property
    def n(self) -> int:
        return self.partition.n


def ca_partition(g: ColoredMultigraph) -> CAReport:
    """CA-partition of ``g`` together with its size histogram."""
    avoided = tuple(components_avoiding(g, i) for i in range(g.k))
    part = reduce(meet, avoided)
    hist = size_census(part)
    return CAReport(part, hist, max(hist), avoided)


# ----------------------------------------------------------------------------
# brute-force oracle


def _adjacency(n: int, edges) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[int(u)].append(int(v))
        adj[int(v)].append(int(u))
    return adj


def _reach(adj: list[list[int]], src: int) -> set[int]:
    seen = {src}
    todo = deque([src])
    while todo:
        u = todo.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def ca_relation_oracle(g: ColoredMultigraph) -> np.ndarray:
    """Boolean matrix ``R[u, v]``: v reachable from u in every avoided view."""
    if g.n > ORACLE_MAX_N:
        raise DomainError(f"oracle limited to n <= {ORACLE_MAX_N}, got {g.n}")
    n = g.n
    rel = np.ones((n, n), dtype=bool)
    for i in range(g.k):
        # edges of every other layer, built straight from the layer lists
        edges = [tuple(e) for j in range(g.k) if j != i for e in g.layers[j].tolist()]
        adj = _adjacency(n, edges)
        for u in range(n):
            reach = _reach(adj, u)
            for v in range(n):
                if v not in reach:
                    rel[u, v] = False
    return rel


def ca_partition_oracle(g: ColoredMultigraph) -> Partition:
    """CA-partition by pairwise breadth-first search (small graphs only)."""
    rel = ca_relation_oracle(g)
    lab = [min(np.flatnonzero(rel[:, v])) for v in range(g.n)]
    return Partition(np.asarray(lab, dtype=np.int64))
