"""Census of the structures that carry small CA-components.

In a sparse colored graph a CA-component with at least two vertices sits on
a repeated edge or on a cycle whose edges split into arcs with disjoint color
sets.  This module counts repeated edges and short cycles, measures how far
each cycle separates, flags components with too much excess, and classifies
the support of individual CA-blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ca_components import CAReport, ca_partition, component_labels
from .colored_graph import ColoredMultigraph, view
from .errors import DomainError

DEFAULT_MAX_LEN = 16
MAX_LEN_CAP = 24


@dataclass(frozen=True)
class CycleRecord:
    """A simple cycle of the collapsed graph.

    ``vertices`` starts at the minimal vertex and continues towards its
    smaller cycle neighbor; edge ``j`` joins ``vertices[j]`` and
    ``vertices[j + 1]`` (cyclically) and carries ``edge_color_sets[j]``.
    """

    vertices: tuple[int, ...]
    edge_color_sets: tuple[frozenset[int], ...]
    max_parts: int

    @property
    def length(self) -> int:
        return len(self.vertices)

    def csv_row(self) -> str:
        colors = ";".join("+".join(map(str, sorted(c))) for c in self.edge_color_sets)
        return f"{self.length},{colors},{self.max_parts}"


@dataclass
class CensusResult:
    c2: int
    cm: dict[int, int]
    y: dict[int, int]
    flags: list[int]
    cycles: list[CycleRecord] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "c2": self.c2,
            "cm": {str(m): c for m, c in sorted(self.cm.items())},
            "y": {str(l): c for l, c in sorted(self.y.items())},
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CensusResult":
        return cls(
            c2=int(obj["c2"]),
            cm={int(m): int(c) for m, c in obj["cm"].items()},
            y={int(l): int(c) for l, c in obj["y"].items()},
            flags=[int(x) for x in obj["flags"]],
        )


# ----------------------------------------------------------------------------
# repeated edges


def _pair_layers(g: ColoredMultigraph):
    keys = np.concatenate([g.layer_keys(i) for i in range(g.k)])
    layer = np.concatenate([np.full(len(g.layer_keys(i)), i, dtype=np.int64) for i in range(g.k)])
    return keys, layer


def repeated_edges(g: ColoredMultigraph) -> list[tuple[tuple[int, int], frozenset[int]]]:
    """Every pair present in at least two layers, with its color set."""
    keys, layer = _pair_layers(g)
    if len(keys) == 0:
        return []
    uniq, counts = np.unique(keys, return_counts=True)
    rep = uniq[counts >= 2]
    if len(rep) == 0:
        return []
    hit = np.isin(keys, rep)
    out: dict[int, set[int]] = {}
    for key, i in zip(keys[hit].tolist(), layer[hit].tolist()):
        out.setdefault(key, set()).add(i)
    n = g.n
    return [((key // n, key % n), frozenset(cs)) for key, cs in sorted(out.items())]


def _repeated_keys(g: ColoredMultigraph) -> np.ndarray:
    keys, _ = _pair_layers(g)
    if len(keys) == 0:
        return keys
    uniq, counts = np.unique(keys, return_counts=True)
    return uniq[counts >= 2]


# ----------------------------------------------------------------------------
# cycles


def two_core_keys(n: int, keys: np.ndarray) -> np.ndarray:
    """Edges of the 2-core: repeatedly strip edges at degree-1 vertices."""
    u, v = keys // n, keys % n
    while len(keys):
        deg = np.bincount(u, minlength=n) + np.bincount(v, minlength=n)
        keep = (deg[u] >= 2) & (deg[v] >= 2)
        if keep.all():
            break
        keys, u, v = keys[keep], u[keep], v[keep]
    return keys


def _colors_of(g: ColoredMultigraph, keys: np.ndarray) -> dict[int, frozenset[int]]:
    masks = np.zeros(len(keys), dtype=np.int64)
    for i in range(g.k):
        lk = g.layer_keys(i)
        if len(lk) == 0:
            continue
        pos = np.searchsorted(lk, keys)
        pos = np.minimum(pos, len(lk) - 1)
        masks |= np.where(lk[pos] == keys, 1 << i, 0)
    out = {}
    for key, mask in zip(keys.tolist(), masks.tolist()):
        out[key] = frozenset(i for i in range(g.k) if mask >> i & 1)
    return out


def _simple_cycles(adj: dict[int, list[int]], max_len: int):
    """Vertex tuples of all simple cycles of length 3..max_len, canonical."""
    for s in sorted(adj):
        path = [s]
        on_path = {s}
        stack = [iter(w for w in adj[s] if w > s)]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if len(path) < max_len:
                path.append(nxt)
                on_path.add(nxt)
                closing = len(path) >= 3 and s in adj[nxt] and path[1] < path[-1]
                if closing:
                    yield tuple(path)
                stack.append(iter(w for w in adj[nxt] if w > s and w not in on_path))


def _bitmasks(edge_color_sets: Sequence[frozenset[int]]) -> list[int]:
    masks = []
    for cs in edge_color_sets:
        if not cs:
            raise DomainError("empty color set on a cycle edge")
        m = 0
        for c in cs:
            m |= 1 << int(c)
        masks.append(m)
    return masks


def max_separation(edge_color_sets: Sequence[frozenset[int]]) -> int:
    """Largest number of consecutive arcs with pairwise disjoint color unions.

    Arcs are disjoint exactly when no color occurs in two arcs, so once the
    first cut is fixed the admissible further cuts are the gaps not spanned
    by any color, and all of them can be used at once.
    """
    masks = _bitmasks(edge_color_sets)
    L = len(masks)
    if L == 0:
        raise DomainError("empty cycle")
    best = 1
    for start in range(L):
        seq = masks[start:] + masks[:start]
        # prefix[j] = colors in seq[:j], suffix[j] = colors in seq[j:]
        suffix = [0] * (L + 1)
        for j in range(L - 1, -1, -1):
            suffix[j] = suffix[j + 1] | seq[j]
        seen = 0
        cuts = 0
        for j in range(1, L):
            seen |= seq[j - 1]
            if seen & suffix[j] == 0:
                cuts += 1
        best = max(best, cuts + 1)
    return best


def _orient(cycle: tuple[int, ...]) -> tuple[int, ...]:
    i = cycle.index(min(cycle))
    rot = cycle[i:] + cycle[:i]
    if len(rot) > 2 and rot[-1] < rot[1]:
        rot = (rot[0],) + tuple(reversed(rot[1:]))
    return rot


def _record(cycle: tuple[int, ...], colors: dict[int, frozenset[int]], n: int) -> CycleRecord:
    L = len(cycle)
    sets = []
    for j in range(L):
        a, b = cycle[j], cycle[(j + 1) % L]
        sets.append(colors[min(a, b) * n + max(a, b)])
    sets = tuple(sets)
    return CycleRecord(cycle, sets, max_separation(sets))


def _check_max_len(max_len: int) -> int:
    if not (3 <= int(max_len) <= MAX_LEN_CAP):
        raise DomainError(f"max_len must be in [3, {MAX_LEN_CAP}], got {max_len}")
    return int(max_len)


def enumerate_cycles(g: ColoredMultigraph, max_len: int = DEFAULT_MAX_LEN) -> list[CycleRecord]:
    """All simple cycles of length at most ``max_len`` in the collapsed graph."""
    max_len = _check_max_len(max_len)
    n = g.n
    core = two_core_keys(n, view(g).keys)
    if len(core) == 0:
        return []
    adj: dict[int, list[int]] = {}
    for key in core.tolist():
        a, b = divmod(key, n)
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for vs in adj.values():
        vs.sort()
    colors = _colors_of(g, core)
    records = [_record(c, colors, n) for c in _simple_cycles(adj, max_len)]
    records.sort(key=lambda r: (r.length, r.vertices))
    return records


# ----------------------------------------------------------------------------
# excess


@dataclass(frozen=True)
class ExcessCensus:
    """Per-component statistics of the collapsed graph G.

    ``label`` is the canonical component label of every vertex; the other
    arrays are indexed by representative (zero for non-representatives).
    """

    label: np.ndarray
    size: np.ndarray
    edges: np.ndarray
    repeated: np.ndarray
    flagged: list[int]

    @property
    def excess(self) -> np.ndarray:
        return self.edges - self.size + (self.size > 0)

    def record(self, rep: int) -> dict:
        return {
            "rep": int(rep),
            "size": int(self.size[rep]),
            "edges": int(self.edges[rep]),
            "excess": int(self.excess[rep]),
            "repeated": int(self.repeated[rep]),
            "flagged": int(rep) in set(self.flagged),
        }

    def records(self, nontrivial_only: bool = True) -> list[dict]:
        reps = np.flatnonzero(self.size)
        if nontrivial_only:
            reps = reps[(self.excess[reps] > 0) | (self.repeated[reps] > 0)]
        return [self.record(r) for r in reps.tolist()]


def excess_census(g: ColoredMultigraph) -> ExcessCensus:
    """Flag components with excess >= 2, a cycle plus a repeated edge, or two repeated edges."""
    n = g.n
    gv = view(g)
    label = component_labels(n, gv.edges)
    size = np.bincount(label, minlength=n)
    edges = np.bincount(label[gv.keys // n], minlength=n)
    rep_keys = _repeated_keys(g)
    repeated = np.bincount(label[rep_keys // n], minlength=n)
    excess = edges - size + (size > 0)
    bad = (excess >= 2) | ((excess >= 1) & (repeated >= 1)) | (repeated >= 2)
    return ExcessCensus(label, size, edges, repeated, np.flatnonzero(bad).tolist())


# ----------------------------------------------------------------------------
# census


def census(g: ColoredMultigraph, max_len: int = DEFAULT_MAX_LEN) -> CensusResult:
    max_len = _check_max_len(max_len)
    cycles = enumerate_cycles(g, max_len)
    cm = {m: 0 for m in range(3, max_len + 1)}
    y = {l: 0 for l in range(2, g.k + 1)}
    for c in cycles:
        cm[c.length] += 1
        if c.max_parts >= 2:
            y[c.max_parts] += 1
    return CensusResult(
        c2=len(_repeated_keys(g)),
        cm=cm,
        y=y,
        flags=excess_census(g).flagged,
        cycles=cycles,
    )


# ----------------------------------------------------------------------------
# support classification


class SupportKind(enum.Enum):
    SINGLE_VERTEX = "single-vertex"
    SINGLE_EDGE = "single-edge"
    CYCLE = "cycle"
    OTHER = "other"


@dataclass(frozen=True)
class Support:
    kind: SupportKind
    cycle: CycleRecord | None = None


class SupportClassifier:
    """Classifies CA-blocks of one graph, sharing the per-graph precomputation."""

    def __init__(self, g: ColoredMultigraph, report: CAReport | None = None):
        self.g = g
        self.report = report if report is not None else ca_partition(g)
        self.excess = excess_census(g)
        n = g.n
        self._rep_keys = set(_repeated_keys(g).tolist())
        core = two_core_keys(n, view(g).keys)
        self._core_by_comp: dict[int, list[int]] = {}
        for key in core.tolist():
            self._core_by_comp.setdefault(int(self.excess.label[key // n]), []).append(key)
        self._colors = _colors_of(g, core)

    def _unique_cycle(self, comp: int) -> CycleRecord:
        n = self.g.n
        adj: dict[int, list[int]] = {}
        for key in self._core_by_comp[comp]:
            a, b = divmod(key, n)
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        # excess-1 component: its 2-core is a single cycle
        start = min(adj)
        order = [start]
        prev, cur = None, start
        while True:
            a, b = adj[cur]
            step = b if a == prev else a
            if step == start:
                break
            order.append(step)
            prev, cur = cur, step
        return _record(_orient(tuple(order)), self._colors, n)

    def classify(self, block) -> Support:
        block = sorted(int(v) for v in block)
        label = self.report.partition.label
        rep = block[0]
        if label[rep] != rep or len(block) != int(np.count_nonzero(label == rep)) or any(
            label[v] != rep for v in block
        ):
            raise DomainError("block is not a CA-block of the graph")
        if len(block) == 1:
            return Support(SupportKind.SINGLE_VERTEX)
        comp = int(self.excess.label[rep])
        exc = int(self.excess.excess[comp])
        if len(block) == 2 and exc == 0:
            key = block[0] * self.g.n + block[1]
            if key in self._rep_keys:
                return Support(SupportKind.SINGLE_EDGE)
        if exc == 1:
            cyc = self._unique_cycle(comp)
            on = set(cyc.vertices)
            if all(v in on for v in block) and cyc.max_parts == len(block):
                return Support(SupportKind.CYCLE, cyc)
        return Support(SupportKind.OTHER)

    def classify_all(self, min_size: int = 2) -> dict[int, Support]:
        sizes = self.report.partition.sizes()
        reps = np.flatnonzero(sizes >= min_size)
        part = self.report.partition
        out = {}
        for r in reps.tolist():
            out[r] = self.classify(part.block_of(r).tolist())
        return out


def classify_ca_support(g: ColoredMultigraph, block, report: CAReport | None = None) -> Support:
    """Support of one CA-block: vertex, repeated edge, separated cycle, or other."""
    return SupportClassifier(g, report).classify(block)
