"""WSN topologies: generation, edge-list / placement I/O and hop distances.

A :class:`Topology` is just the node count plus an undirected edge set, which
is all the layout engine is allowed to see.  :func:`generate_topology` also
returns the :class:`TruePlacement` it sampled, used for ground truth.
"""

from __future__ import annotations

import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist

log = logging.getLogger(__name__)

DEGREE_TOLERANCE = 0.25
MIN_GIANT_FRACTION = 0.95


class TopologyError(ValueError):
    """Invalid topology data or an unsatisfiable generation request."""


def _canonical_edges(edges, node_count: int) -> tuple[tuple[int, int], ...]:
    out = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise TopologyError(f"self-loop on node {u}")
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise TopologyError(f"edge ({u}, {v}) out of range for {node_count} nodes")
        e = (u, v) if u < v else (v, u)
        if e in out:
            raise TopologyError(f"duplicate edge {e}")
        out.add(e)
    return tuple(sorted(out))


@dataclass(frozen=True)
class Topology:
    node_count: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.node_count < 0:
            raise TopologyError("node_count must be nonnegative")
        object.__setattr__(self, "edges", _canonical_edges(self.edges, self.node_count))

    @property
    def edge_array(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` int array (u < v, sorted)."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        e = self.edge_array
        np.add.at(deg, e[:, 0], 1)
        np.add.at(deg, e[:, 1], 1)
        return deg

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def sparse_adjacency(self) -> csr_matrix:
        e = self.edge_array
        n = self.node_count
        data = np.ones(2 * len(e), dtype=np.int8)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class Void:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class TruePlacement:
    positions: np.ndarray
    sensing_range: float
    communication_range: float
    voids: tuple[Void, ...] = field(default_factory=tuple)

    def __eq__(self, other):
        if not isinstance(other, TruePlacement):
            return NotImplemented
        return (
            np.array_equal(self.positions, other.positions)
            and self.sensing_range == other.sensing_range
            and self.communication_range == other.communication_range
            and self.voids == other.voids
        )

    __hash__ = None


@dataclass(frozen=True)
class HoleSpec:
    """How many circular voids to plant and how large they are."""

    count: int = 3
    radius_min: float = 0.08
    radius_max: float = 0.15
    # clearance kept between voids and from the square's border
    clearance: float = 0.08


def average_degree(t: Topology) -> float:
    if t.node_count <= 0:
        raise TopologyError("average degree undefined for an empty topology")
    return 2.0 * len(t.edges) / t.node_count


def hop_distance(t: Topology, sources) -> np.ndarray:
    """Breadth-first hop count from the nearest node in ``sources``.

    Unreachable nodes get ``inf``.
    """
    sources = list(sources)
    if not sources:
        raise TopologyError("hop_distance needs at least one source node")
    hops = np.full(t.node_count, np.inf)
    adj = t.adjacency()
    queue = deque()
    for s in sources:
        if not 0 <= s < t.node_count:
            raise TopologyError(f"source node {s} out of range")
        if hops[s] != 0:
            hops[s] = 0
            queue.append(s)
    while queue:
        u = queue.popleft()
        nxt = hops[u] + 1
        for v in adj[u]:
            if hops[v] == np.inf:
                hops[v] = nxt
                queue.append(v)
    return hops


def giant_component_fraction(t: Topology) -> float:
    if t.node_count == 0:
        return 0.0
    _, labels = connected_components(t.sparse_adjacency(), directed=False)
    return np.bincount(labels).max() / t.node_count


# -- edge-list / placement files ------------------------------------------


def serialize_edge_list(t: Topology) -> str:
    lines = [str(t.node_count)]
    lines.extend(f"{u} {v}" for u, v in t.edges)
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Topology:
    lines = text.splitlines()
    lineno, node_count = 0, None
    for lineno, raw in enumerate(lines, start=1):
        if raw.strip():
            try:
                node_count = int(raw.strip())
            except ValueError:
                raise TopologyError(f"bad node count at line {lineno}: {raw!r}") from None
            break
    if node_count is None:
        raise TopologyError("empty edge-list file")
    if node_count < 0:
        raise TopologyError(f"negative node count at line {lineno}")

    seen = set()
    for i, raw in enumerate(lines[lineno:], start=lineno + 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise TopologyError(f"malformed edge at line {i}: {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise TopologyError(f"malformed edge at line {i}: {raw!r}") from None
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise TopologyError(f"node ID out of range at line {i}")
        if u == v:
            raise TopologyError(f"self-loop at line {i}")
        e = (min(u, v), max(u, v))
        if e in seen:
            raise TopologyError(f"duplicate edge at line {i}")
        seen.add(e)
    return Topology(node_count, tuple(seen))


def write_edge_list(t: Topology, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_edge_list(t))


def read_edge_list(path) -> Topology:
    with open(path) as fh:
        return parse_edge_list(fh.read())


def serialize_positions(positions: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("id,x,y\n")
    for i, (x, y) in enumerate(np.asarray(positions, dtype=float)):
        buf.write(f"{i},{x:.17g},{y:.17g}\n")
    return buf.getvalue()


def parse_positions(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != "id,x,y":
        raise TopologyError("placement file must start with header 'id,x,y'")
    rows = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 3:
            raise TopologyError(f"malformed placement row at line {lineno}")
        try:
            i, x, y = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise TopologyError(f"malformed placement row at line {lineno}") from None
        if i in rows:
            raise TopologyError(f"duplicate node ID {i} at line {lineno}")
        rows[i] = (x, y)
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise TopologyError("placement IDs must be exactly 0..N-1")
    return np.array([rows[i] for i in range(n)], dtype=float).reshape(n, 2)


def write_positions(positions: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_positions(positions))


def read_positions(path) -> np.ndarray:
    with open(path) as fh:
        return parse_positions(fh.read())


# -- generation ------------------------------------------------------------


def _sample_voids(rng: np.random.Generator, spec: HoleSpec, max_tries: int = 2000) -> list[Void]:
    voids: list[Void] = []
    for _ in range(max_tries):
        if len(voids) == spec.count:
            break
        r = rng.uniform(spec.radius_min, spec.radius_max)
        lo, hi = r + spec.clearance, 1.0 - r - spec.clearance
        if lo >= hi:
            raise TopologyError(f"void radius {r:.3f} does not fit inside the unit square")
        c = rng.uniform(lo, hi, size=2)
        if all(math.dist(c, v.center) >= r + v.radius + spec.clearance for v in voids):
            voids.append(Void((float(c[0]), float(c[1])), float(r)))
    if len(voids) < spec.count:
        raise TopologyError(f"could only place {len(voids)} of {spec.count} non-overlapping voids")
    return voids


def _inside_any(points: np.ndarray, voids) -> np.ndarray:
    mask = np.zeros(len(points), dtype=bool)
    for v in voids:
        d2 = ((points - np.asarray(v.center)) ** 2).sum(axis=1)
        mask |= d2 < v.radius**2
    return mask


def _place_nodes(rng: np.random.Generator, n: int, voids, candidates: int) -> np.ndarray:
    """Best-candidate (Mitchell) sampling over the unit square minus the voids.

    Each new node is the candidate farthest from the nodes placed so far, out
    of ``candidates`` uniform draws; ``candidates=1`` is plain uniform sampling.
    """
    pts = np.empty((n, 2))
    for i in range(n):
        cand = rng.random((candidates, 2))
        bad = _inside_any(cand, voids)
        while bad.any():
            cand[bad] = rng.random((int(bad.sum()), 2))
            bad = _inside_any(cand, voids)
        if i == 0 or candidates == 1:
            pts[i] = cand[0]
            continue
        d2 = ((cand[:, None, :] - pts[None, :i, :]) ** 2).sum(axis=2).min(axis=1)
        pts[i] = cand[int(np.argmax(d2))]
    return pts


def _bisect_range(dists: np.ndarray, n: int, d_target: float, iters: int = 200) -> float:
    """Bisect the communication range toward average degree ``d_target``."""
    sorted_d = np.sort(dists)

    def degree(r):
        return 2.0 * np.searchsorted(sorted_d, r, side="right") / n

    lo, hi = 0.0, math.sqrt(2.0)
    best_r, best_err = hi, abs(degree(hi) - d_target)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        d = degree(mid)
        if abs(d - d_target) < best_err:
            best_r, best_err = mid, abs(d - d_target)
        if d == d_target or hi - lo < 1e-15:
            break
        if d < d_target:
            lo = mid
        else:
            hi = mid
    if best_err > DEGREE_TOLERANCE:
        raise TopologyError(
            f"degree target {d_target} unreachable: closest achievable degree is "
            f"{degree(best_r):.3f}"
        )
    return best_r


def generate_topology(
    n: int,
    d_target: float,
    holes: HoleSpec | None = None,
    sensing_ratio: float = 0.8,
    seed: int = 0,
    candidates: int = 10,
    max_retries: int = 20,
) -> tuple[Topology, TruePlacement]:
    """Random unit-disk WSN with planted circular coverage voids.

    Nodes are spread over the unit square with the voids carved out by
    best-candidate sampling (see :func:`_place_nodes`), so the count stays
    ``n`` and no node lies in a void.  The communication range
    is bisected until the average degree is within 0.25 of ``d_target``;
    the sensing range is ``sensing_ratio`` times that.  A draw whose giant
    component holds fewer than 95% of the nodes is rejected and redrawn from
    the next derived seed.
    """
    if n < 2:
        raise TopologyError("need at least 2 nodes")
    if d_target <= 0:
        raise TopologyError("degree target must be positive")
    holes = holes if holes is not None else HoleSpec()
    complete = d_target >= n - 1

    last_fraction = 0.0
    for attempt in range(max_retries):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        voids = _sample_voids(rng, holes) if holes.count else []
        pos = _place_nodes(rng, n, voids, candidates)
        dists = pdist(pos)
        if complete:
            r_c = math.sqrt(2.0)
        else:
            r_c = _bisect_range(dists, n, d_target)
        iu, ju = np.triu_indices(n, k=1)
        keep = dists <= r_c
        topo = Topology(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))
        last_fraction = giant_component_fraction(topo)
        if last_fraction >= MIN_GIANT_FRACTION:
            placement = TruePlacement(pos, sensing_ratio * r_c, r_c, tuple(voids))
            return topo, placement
        log.debug("seed %s attempt %d: giant component %.3f, retrying", seed, attempt, last_fraction)
    raise TopologyError(
        f"no draw reached a {MIN_GIANT_FRACTION:.0%} giant component in {max_retries} "
        f"attempts (last {last_fraction:.3f})"
    )
