"""Randomly colored Erdos-Renyi multigraphs.

A colored multigraph on ``n`` vertices is a family of ``k`` simple graphs
(layers) sharing the vertex set ``0..n-1``.  Layer ``i`` holds the edges of
color ``i``; the same pair may appear in several layers, in which case it is
a *repeated* edge.

Conventions
-----------
* Vertices and colors are 0-based everywhere in the API and in files.
* Every layer is stored as an ``(m, 2)`` int64 array with ``u < v`` on each
  row, rows sorted lexicographically.  Arrays are read-only.

Seeding policy (``seedpolicy/1``)
---------------------------------
All randomness is drawn from :class:`numpy.random.SeedSequence` children of
the caller's 64-bit seed.  Layer ``i`` of :func:`generate` uses the child
with ``spawn_key=(0, i)``; :func:`derive_seed` exposes the same mechanism for
other streams (trials, vertex marks).  Children depend only on the key, never
on the order in which they are requested, so results do not depend on
threading.
"""

from __future__ import annotations

import io
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, GraphFormatError

SEED_POLICY = "seedpolicy/1"
LAYER_STREAM = 0

__all__ = [
    "ColorParams",
    "ColoredMultigraph",
    "GraphView",
    "SEED_POLICY",
    "derive_seed",
    "deserialize",
    "figure1_gadget",
    "generate",
    "rng_for",
    "sample_er_edges",
    "serialize",
    "view",
]


# ----------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ColorParams:
    """Edge intensities ``lambdas`` of the ``k`` color layers.

    The input may come in any order; ``lambdas`` is stored sorted
    non-increasing and ``input_order`` keeps what the caller passed.
    """

    lambdas: tuple[float, ...]
    input_order: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        raw = tuple(float(x) for x in self.lambdas)
        if len(raw) < 2:
            raise DomainError(f"need at least 2 colors, got {len(raw)}")
        for x in raw:
            if not (x > 0 and math.isfinite(x)):
                raise DomainError(f"every lambda must be a positive finite real, got {x!r}")
        object.__setattr__(self, "lambdas", tuple(sorted(raw, reverse=True)))
        if not self.input_order:
            object.__setattr__(self, "input_order", raw)

    @classmethod
    def parse(cls, text: str) -> "ColorParams":
        """Parse a comma separated list such as ``"1.5,0.5"``."""
        try:
            values = [float(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise DomainError(f"cannot parse lambdas {text!r}") from exc
        return cls(tuple(values))

    @property
    def k(self) -> int:
        return len(self.lambdas)

    @property
    def Lambda(self) -> float:
        return math.fsum(self.lambdas)

    @property
    def lambda_star(self) -> tuple[float, ...]:
        """``Lambda - lambda_i``; non-decreasing because ``lambdas`` is sorted."""
        total = self.Lambda
        return tuple(total - x for x in self.lambdas)


# ----------------------------------------------------------------------------
# graphs


def _normalize_layer(n: int, edges, layer: int) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphFormatError(f"layer {layer}: edges must be pairs")
    if arr.min() < 0 or arr.max() >= n:
        raise GraphFormatError(f"layer {layer}: vertex out of range [0, {n})")
    if np.any(arr[:, 0] == arr[:, 1]):
        bad = int(arr[arr[:, 0] == arr[:, 1]][0, 0])
        raise GraphFormatError(f"layer {layer}: self-loop at vertex {bad}")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    keys = lo * n + hi
    uniq = np.unique(keys)
    if len(uniq) != len(keys):
        raise GraphFormatError(f"layer {layer}: duplicate edge")
    return _keys_to_edges(uniq, n)


def _keys_to_edges(keys: np.ndarray, n: int) -> np.ndarray:
    out = np.empty((len(keys), 2), dtype=np.int64)
    out[:, 0] = keys // n
    out[:, 1] = keys % n
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ColoredMultigraph:
    """``n`` vertices and ``k`` edge layers; immutable after construction."""

    n: int
    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphFormatError("n must be positive")
        if len(self.layers) < 1:
            raise GraphFormatError("need at least one layer")
        layers = tuple(_normalize_layer(self.n, e, i) for i, e in enumerate(self.layers))
        object.__setattr__(self, "layers", layers)

    @classmethod
    def _trusted(cls, n: int, layers: Sequence[np.ndarray]) -> "ColoredMultigraph":
        # layers already canonical (sorted, u < v, read-only)
        obj = object.__new__(cls)
        object.__setattr__(obj, "n", n)
        object.__setattr__(obj, "layers", tuple(layers))
        return obj

    @property
    def k(self) -> int:
        return len(self.layers)

    def layer_keys(self, i: int) -> np.ndarray:
        """Sorted pair codes ``u * n + v`` of layer ``i``."""
        return self._keys[i]

    @cached_property
    def _keys(self) -> tuple[np.ndarray, ...]:
        return tuple(e[:, 0] * self.n + e[:, 1] for e in self.layers)

    def edge_set(self, i: int) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.layers[i]}

    def color_sets(self) -> dict[tuple[int, int], frozenset[int]]:
        """Map every pair of the union graph to the colors it carries."""
        out: dict[tuple[int, int], set[int]] = {}
        for i, e in enumerate(self.layers):
            for u, v in e:
                out.setdefault((int(u), int(v)), set()).add(i)
        return {p: frozenset(c) for p, c in out.items()}

    def __eq__(self, other):
        if not isinstance(other, ColoredMultigraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))
        )

    def __hash__(self):
        return hash((self.n, tuple(len(e) for e in self.layers)))

    def with_edge(self, layer: int, u: int, v: int) -> "ColoredMultigraph":
        """Copy of the graph with one more edge in ``layer`` (no-op if present)."""
        layers = [np.asarray(e) for e in self.layers]
        if (min(u, v), max(u, v)) in self.edge_set(layer):
            return self
        layers[layer] = np.vstack([layers[layer], [[u, v]]])
        return ColoredMultigraph(self.n, tuple(layers))

    def permuted(self, order: Sequence[int]) -> "ColoredMultigraph":
        """Copy with layer ``j`` taken from ``order[j]``."""
        return ColoredMultigraph._trusted(self.n, [self.layers[i] for i in order])


def _check_color(g: ColoredMultigraph, i: int) -> int:
    if not (0 <= int(i) < g.k):
        raise DomainError(f"color {i} out of range [0, {g.k})")
    return int(i)


@dataclass(frozen=True, eq=False)
class GraphView:
    """Union of the layers in ``colors``, multiplicity collapsed."""

    graph: ColoredMultigraph
    colors: frozenset[int]

    @cached_property
    def keys(self) -> np.ndarray:
        parts = [self.graph.layer_keys(i) for i in sorted(self.colors)]
        if not parts:
            return np.empty(0, dtype=np.int64)
        if len(parts) == 1:
            return parts[0]
        return np.unique(np.concatenate(parts))

    @property
    def edges(self) -> np.ndarray:
        return _keys_to_edges(self.keys, self.graph.n)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def __len__(self):
        return len(self.keys)


def view(g: ColoredMultigraph, *, avoid: int | None = None, only: Iterable[int] | None = None) -> GraphView:
    """``view(g, avoid=i)`` is G^i, ``view(g, only=I)`` is G_I, ``view(g)`` is G."""
    if avoid is not None and only is not None:
        raise DomainError("pass at most one of avoid= and only=")
    if avoid is not None:
        i = _check_color(g, avoid)
        return GraphView(g, frozenset(j for j in range(g.k) if j != i))
    if only is not None:
        return GraphView(g, frozenset(_check_color(g, i) for i in only))
    return GraphView(g, frozenset(range(g.k)))


# ----------------------------------------------------------------------------
# sampling


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream ``key`` of ``seed`` (see module docstring)."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit child seed of ``seed`` at ``key``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(x) for x in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_er_edges(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Exact sample of the edge set of G(n, p), as sorted pair codes.

    The edge count is Binomial(n(n-1)/2, p); given the count, the set is
    uniform: distinct ordered draws of two different vertices, keeping the
    first occurrence of each unordered pair (sequential rejection of
    duplicates, done in batches).
    """
    total = n * (n - 1) // 2
    m = int(rng.binomial(total, p)) if total > 0 and p > 0 else 0
    if m == 0:
        return np.empty(0, dtype=np.int64)
    kept = np.empty(0, dtype=np.int64)
    while len(kept) < m:
        need = m - len(kept)
        batch = need + need // 8 + 16
        u = rng.integers(0, n, size=batch, dtype=np.int64)
        v = rng.integers(0, n, size=batch, dtype=np.int64)
        ok = u != v
        u, v = u[ok], v[ok]
        fresh = np.minimum(u, v) * n + np.maximum(u, v)
        pool = np.concatenate([kept, fresh])
        _, first = np.unique(pool, return_index=True)
        first.sort()
        kept = pool[first[:m]]
    return np.sort(kept)


def generate(params: ColorParams, n: int, seed: int, *, threads: int = 1) -> ColoredMultigraph:
    """Sample the k independent layers G(n, lambda_i / n)."""
    n = int(n)
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    for lam in params.lambdas:
        if lam > n:
            raise DomainError(f"lambda {lam} exceeds n = {n}")

    def one(i: int) -> np.ndarray:
        keys = sample_er_edges(rng_for(seed, LAYER_STREAM, i), n, params.lambdas[i] / n)
        return _keys_to_edges(keys, n)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            layers = list(pool.map(one, range(params.k)))
    else:
        layers = [one(i) for i in range(params.k)]
    return ColoredMultigraph._trusted(n, layers)


# ----------------------------------------------------------------------------
# fixtures

BLUE, RED, GREEN = 0, 1, 2


def figure1_gadget(ell: int, closing_edge: bool = False) -> ColoredMultigraph:
    """Two-path ladder with alternating blue/red rails and green rungs.

    Each rail is a path with ``2*ell + 1`` edges (``2*ell + 2`` vertices):
    top rail ``0..2ell+1``, bottom rail ``2ell+2..4ell+3``.  Rail edge ``j``
    (1-based) is blue for odd ``j`` and red for even ``j``; rungs join the
    first ``2*ell + 1`` vertex pairs in green.  ``closing_edge`` adds a blue
    edge between the two terminal vertices.
    """
    if ell < 1:
        raise DomainError("ell must be at least 1")
    length = 2 * ell + 1
    width = length + 1
    top = list(range(width))
    bot = [width + t for t in range(width)]
    layers: list[list[tuple[int, int]]] = [[], [], []]
    for j in range(1, length + 1):
        color = BLUE if j % 2 == 1 else RED
        layers[color].append((top[j - 1], top[j]))
        layers[color].append((bot[j - 1], bot[j]))
    for t in range(length):
        layers[GREEN].append((top[t], bot[t]))
    if closing_edge:
        layers[BLUE].append((top[-1], bot[-1]))
    return ColoredMultigraph(2 * width, tuple(layers))


# ----------------------------------------------------------------------------
# text format

_HEADER = re.compile(r"^caperc-graph v1 n=(\d+) k=(\d+)$")
_LAYER = re.compile(r"^layer (\d+) m=(\d+)$")


def serialize(g: ColoredMultigraph) -> bytes:
    out = io.StringIO()
    out.write(f"caperc-graph v1 n={g.n} k={g.k}\n")
    for i, e in enumerate(g.layers):
        out.write(f"layer {i} m={len(e)}\n")
        for u, v in e:
            out.write(f"{u} {v}\n")
    return out.getvalue().encode("ascii")


def deserialize(data: bytes | str) -> ColoredMultigraph:
    text = data.decode("ascii") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if not lines:
        raise GraphFormatError("empty input")
    head = _HEADER.match(lines[0].strip())
    if head is None:
        raise GraphFormatError(f"malformed header {lines[0]!r}")
    n, k = int(head.group(1)), int(head.group(2))
    pos = 1
    layers = []
    for i in range(k):
        if pos >= len(lines):
            raise GraphFormatError(f"missing layer {i}")
        lm = _LAYER.match(lines[pos].strip())
        if lm is None or int(lm.group(1)) != i:
            raise GraphFormatError(f"malformed layer line {lines[pos]!r}")
        m = int(lm.group(2))
        body = lines[pos + 1 : pos + 1 + m]
        if len(body) != m:
            raise GraphFormatError(f"layer {i}: expected {m} edges, got {len(body)}")
        pairs = []
        for line in body:
            parts = line.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise GraphFormatError(f"layer {i}: malformed edge line {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
        layers.append(pairs)
        pos += 1 + m
    if any(line.strip() for line in lines[pos:]):
        raise GraphFormatError("trailing data after last layer")
    return ColoredMultigraph(n, tuple(layers))
