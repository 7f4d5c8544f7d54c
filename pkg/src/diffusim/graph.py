"""Directed graph substrates for diffusion runs.

Nodes are dense integers 0..n-1.  A :class:`Graph` is immutable once built
and keeps both in- and out-adjacency in CSR form, sorted so that iteration
order (and therefore every downstream random draw) is reproducible.  All
random generators take an explicit ``numpy.random.Generator``; the same
stream always yields the identical arc set.

Edge-list text format: first line is the node count n, every following
non-empty line is one arc ``"v u"`` (v -> u, decimal, space separated),
UTF-8 with LF line endings.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

PathOrFile = Union[str, Path, IO[str]]

GENERATORS = ("watts_strogatz", "barabasi_albert", "complete", "directed_cycle", "file")

_GENERATOR_ALIASES = {
    "ws": "watts_strogatz",
    "ba": "barabasi_albert",
    "cycle": "directed_cycle",
}


class EdgeListError(ValueError):
    """Malformed edge-list input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Graph:
    """Immutable directed graph over node ids 0..n-1.

    Rejects self-loops and duplicate arcs.  Adjacency lists are sorted
    ascending, and ``in_neighbors``/``out_neighbors`` are exact transposes
    of each other by construction.
    """

    __slots__ = ("n", "arc_count", "_arc_src", "_arc_dst",
                 "_in_indptr", "_in_indices", "_out_indptr", "_out_indices")

    def __init__(self, n: int, arcs: Iterable[tuple[int, int]] | np.ndarray):
        n = int(n)
        if n < 1:
            raise ValueError("node count must be >= 1")
        arr = np.asarray(list(arcs) if not isinstance(arcs, np.ndarray) else arcs,
                         dtype=np.int64)
        if arr.size == 0:
            arr = np.zeros((0, 2), dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("arcs must be (v, u) pairs")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError("arc endpoint out of range")
        if arr.size and np.any(arr[:, 0] == arr[:, 1]):
            raise ValueError("self-loops are not allowed")

        # canonical order: by source, then destination
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        arr = arr[order]
        src, dst = arr[:, 0].copy(), arr[:, 1].copy()
        if src.size > 1 and np.any((src[1:] == src[:-1]) & (dst[1:] == dst[:-1])):
            raise ValueError("duplicate arcs are not allowed")

        self.n = n
        self.arc_count = int(src.size)
        self._arc_src = src
        self._arc_dst = dst
        self._out_indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=self._out_indptr[1:])
        self._out_indices = dst  # already sorted by (src, dst)
        in_order = np.lexsort((src, dst))
        self._in_indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=n), out=self._in_indptr[1:])
        self._in_indices = src[in_order]
        for a in (self._arc_src, self._arc_dst, self._out_indptr,
                  self._out_indices, self._in_indptr, self._in_indices):
            a.setflags(write=False)

    # -- inspection --------------------------------------------------------

    @property
    def arcs(self) -> np.ndarray:
        """Read-only (m, 2) array of arcs sorted by (source, destination)."""
        return np.stack([self._arc_src, self._arc_dst], axis=1)

    def _check_node(self, u: int) -> int:
        u = int(u)
        if not 0 <= u < self.n:
            raise ValueError(f"node id {u} out of range [0, {self.n})")
        return u

    def in_neighbors(self, u: int) -> np.ndarray:
        """Nodes v with an arc v -> u, ascending (read-only view)."""
        u = self._check_node(u)
        return self._in_indices[self._in_indptr[u]:self._in_indptr[u + 1]]

    def out_neighbors(self, u: int) -> np.ndarray:
        """Nodes w with an arc u -> w, ascending (read-only view)."""
        u = self._check_node(u)
        return self._out_indices[self._out_indptr[u]:self._out_indptr[u + 1]]

    @property
    def in_degrees(self) -> np.ndarray:
        return np.diff(self._in_indptr)

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self._out_indptr)

    def fingerprint(self) -> str:
        """Stable 16-hex-digit digest of (n, arc set)."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        h.update(b"\n")
        h.update(self._arc_src.tobytes())
        h.update(self._arc_dst.tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n
                and np.array_equal(self._arc_src, other._arc_src)
                and np.array_equal(self._arc_dst, other._arc_dst))

    __hash__ = None  # mutable-sized payload; identity hashing would mislead

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, arcs={self.arc_count})"


# -- generators -------------------------------------------------------------


def _canon(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def watts_strogatz(n: int, k: int, beta: float, rng: np.random.Generator) -> Graph:
    """Small-world graph: ring lattice with random rewiring.

    Starts from an undirected ring lattice where every node links to its k
    nearest neighbors (k/2 per side).  Each lattice edge (i, i+j) is, with
    probability beta, rewired by replacing its far endpoint with a uniformly
    random node, skipping candidates that would create a self-loop or a
    duplicate edge (up to n attempts, then the original edge is kept).  The
    undirected result is expanded into two opposed arcs per edge, so the
    arc count is exactly n*k for every beta.

    Args:
        n: Node count.
        k: Even lattice degree, 0 < k < n.
        beta: Rewiring probability in [0, 1].
        rng: Seeded random stream.
    """
    if k % 2 != 0:
        raise ValueError("k must be even")
    if not 0 < k < n:
        raise ValueError("k must satisfy 0 < k < n")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be within [0, 1]")

    edges = set()
    for j in range(1, k // 2 + 1):
        for i in range(n):
            edges.add(_canon(i, (i + j) % n))

    if beta > 0.0:
        for j in range(1, k // 2 + 1):
            for i in range(n):
                if rng.random() >= beta:
                    continue
                old = _canon(i, (i + j) % n)
                for _ in range(n):
                    w = int(rng.integers(n))
                    if w == i:
                        continue
                    new = _canon(i, w)
                    if new in edges:
                        continue
                    edges.remove(old)
                    edges.add(new)
                    break
                # all attempts collided: keep the original edge

    arcs = np.empty((2 * len(edges), 2), dtype=np.int64)
    for idx, (a, b) in enumerate(sorted(edges)):
        arcs[2 * idx] = (a, b)
        arcs[2 * idx + 1] = (b, a)
    return Graph(n, arcs)


def barabasi_albert(n: int, m_attach: int, rng: np.random.Generator,
                    m0: int | None = None) -> Graph:
    """Preferential-attachment graph, expanded to opposed arc pairs.

    Growth starts from a complete undirected clique on m0 nodes (m0 defaults
    to m_attach).  Each new node attaches m_attach undirected edges to
    distinct existing nodes chosen with probability proportional to current
    degree; degrees update after each node's full batch of attachments.

    Args:
        n: Final node count, n > m0.
        m_attach: Edges added per new node, 1 <= m_attach <= m0.
        rng: Seeded random stream.
        m0: Seed clique size.
    """
    if m0 is None:
        m0 = m_attach
    if not m_attach >= 1:
        raise ValueError("m_attach must be >= 1")
    if not m0 >= m_attach:
        raise ValueError("m0 must be >= m_attach")
    if not n > m0:
        raise ValueError("n must exceed m0")

    edges: list[tuple[int, int]] = [(a, b) for a in range(m0) for b in range(a + 1, m0)]
    # one entry per degree endpoint; uniform picks from it are degree-weighted
    endpoints: list[int] = [v for e in edges for v in e]

    for v in range(m0, n):
        targets: set[int] = set()
        attempts = 0
        while len(targets) < m_attach:
            if endpoints and attempts < 1000:
                t = endpoints[int(rng.integers(len(endpoints)))]
                attempts += 1
            else:
                # degenerate start (edgeless seed) or pathological rejection
                # streak: fall back to the smallest unused existing node
                t = next(x for x in range(v) if x not in targets)
            targets.add(t)
        for t in sorted(targets):
            edges.append((t, v))
            endpoints.extend((t, v))

    arcs = np.empty((2 * len(edges), 2), dtype=np.int64)
    for idx, (a, b) in enumerate(edges):
        arcs[2 * idx] = (a, b)
        arcs[2 * idx + 1] = (b, a)
    return Graph(n, arcs)


def complete_graph(n: int) -> Graph:
    """All n*(n-1) ordered arcs; n >= 2."""
    if n < 2:
        raise ValueError("complete graph needs n >= 2")
    idx = np.arange(n)
    src = np.repeat(idx, n - 1)
    dst = np.concatenate([np.delete(idx, i) for i in range(n)])
    return Graph(n, np.stack([src, dst], axis=1))


def directed_cycle(n: int) -> Graph:
    """Arcs i -> (i+1) mod n; every in-degree is 1 (for n=2, a 2-cycle)."""
    if n < 2:
        raise ValueError("directed cycle needs n >= 2")
    idx = np.arange(n)
    return Graph(n, np.stack([idx, (idx + 1) % n], axis=1))


# -- persistence ------------------------------------------------------------


def save_edge_list(g: Graph, sink: PathOrFile) -> None:
    """Write ``g`` in the edge-list text format (header n, then "v u" lines)."""
    lines = [str(g.n)]
    lines.extend(f"{v} {u}" for v, u in zip(g._arc_src.tolist(), g._arc_dst.tolist()))
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def load_edge_list(source: PathOrFile) -> Graph:
    """Parse the edge-list text format back into a Graph.

    Raises EdgeListError naming the offending line on malformed input or on
    arcs inconsistent with the header (out-of-range endpoint, duplicate,
    self-loop).
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = text.split("\n")

    header_line = None
    n = None
    for lineno, raw in enumerate(lines, start=1):
        if raw.strip():
            try:
                n = int(raw.strip())
            except ValueError:
                raise EdgeListError(f"header is not an integer: {raw.strip()!r}", lineno) from None
            if n < 1:
                raise EdgeListError("header node count must be >= 1", lineno)
            header_line = lineno
            break
    if n is None:
        raise EdgeListError("empty input: missing node-count header")

    arcs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(lines[header_line:], start=header_line + 1):
        stripped = raw.strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise EdgeListError(f"expected 'v u', got {stripped!r}", lineno)
        try:
            v, u = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"non-integer endpoint in {stripped!r}", lineno) from None
        if not (0 <= v < n and 0 <= u < n):
            raise EdgeListError(f"arc ({v}, {u}) inconsistent with header n={n}", lineno)
        if v == u:
            raise EdgeListError(f"self-loop ({v}, {u})", lineno)
        if (v, u) in seen:
            raise EdgeListError(f"duplicate arc ({v}, {u})", lineno)
        seen.add((v, u))
        arcs.append((v, u))
    return Graph(n, arcs)


# -- declarative spec -------------------------------------------------------


@dataclass(frozen=True)
class GraphSpec:
    """Declarative recipe for a diffusion substrate.

    ``generator`` is one of watts_strogatz | barabasi_albert | complete |
    directed_cycle | file; only the fields that generator needs may be set.
    """

    generator: str
    n: int | None = None
    k: int | None = None
    beta: float | None = None
    m_attach: int | None = None
    m0: int | None = None
    path: str | None = None

    def validate(self) -> None:
        gen = self.generator
        if gen not in GENERATORS:
            raise ValueError(f"type: unknown generator {gen!r}")
        used = {"watts_strogatz": ("n", "k", "beta"),
                "barabasi_albert": ("n", "m_attach", "m0"),
                "complete": ("n",),
                "directed_cycle": ("n",),
                "file": ("path",)}[gen]
        for field in ("n", "k", "beta", "m_attach", "m0", "path"):
            value = getattr(self, field)
            if field not in used and value is not None:
                raise ValueError(f"{field}: not applicable to generator {gen!r}")
            if field in used and field != "m0" and value is None:
                raise ValueError(f"{field}: required by generator {gen!r}")
        if gen == "watts_strogatz":
            if self.k % 2 != 0:
                raise ValueError("k: must be even")
            if not 0 < self.k < self.n:
                raise ValueError("k: must satisfy 0 < k < n")
            if not 0.0 <= self.beta <= 1.0:
                raise ValueError("beta: must be within [0, 1]")
        elif gen == "barabasi_albert":
            m0 = self.m_attach if self.m0 is None else self.m0
            if self.m_attach < 1:
                raise ValueError("m_attach: must be >= 1")
            if m0 < self.m_attach:
                raise ValueError("m0: must be >= m_attach")
            if not self.n > m0:
                raise ValueError("n: must exceed m0")
        elif gen in ("complete", "directed_cycle"):
            if self.n < 2:
                raise ValueError("n: must be >= 2")

    @property
    def is_random(self) -> bool:
        """Whether construction consumes random draws."""
        return self.generator in ("watts_strogatz", "barabasi_albert")


def canonical_generator(name: str) -> str:
    """Map generator aliases (ws, ba, cycle) onto canonical names."""
    return _GENERATOR_ALIASES.get(name, name)


def build_graph(spec: GraphSpec, rng: np.random.Generator | None = None) -> Graph:
    """Materialize a GraphSpec; random generators require ``rng``."""
    spec.validate()
    if spec.is_random and rng is None:
        raise ValueError(f"generator {spec.generator!r} requires a random stream")
    if spec.generator == "watts_strogatz":
        return watts_strogatz(spec.n, spec.k, spec.beta, rng)
    if spec.generator == "barabasi_albert":
        return barabasi_albert(spec.n, spec.m_attach, rng, m0=spec.m0)
    if spec.generator == "complete":
        return complete_graph(spec.n)
    if spec.generator == "directed_cycle":
        return directed_cycle(spec.n)
    return load_edge_list(spec.path)
