"""KK-MS-DS: Kamada-Kawai layout with multiple node selection and decaying stiffness.

The engine grows a working area outward from a high-degree start node.  Inside
the working area it repeatedly moves the 5% of nodes with the largest
spring-energy gradient; a per-node decaying stiffness ``m`` damps nodes that
keep getting selected.  When the area is stable it absorbs every node within
two hops, and once it covers the graph a final global phase runs with plain
stiffness until the stability statistic settles.

Energy model::

    E = sum over pairs (u, v) of 1/2 * k_uv * (|p_u - p_v| - l_uv)**2
    k_uv = K / d_uv**2,   l_uv = L0 * d_uv

with ``d_uv`` the hop distance.  Pairs in different components carry no spring.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import shortest_path

from . import _kernels
from .topology import Topology, hop_distance

log = logging.getLogger(__name__)

GROWING = "growing"
GLOBAL = "global"

DEGENERATE_SIGMA = 1e-12
# default step as a fraction of the stability bound 1 / max_v sum_u k_uv
STEP_FRACTION = 0.9
# tiny graphs need room to drive the edge-length spread below DEGENERATE_SIGMA
MIN_ITERATION_CAP = 20_000


@dataclass(frozen=True)
class LayoutParams:
    """Tunables of the engine.  ``None`` fields are resolved per topology.

    ``step_scale=None`` picks 0.9 of the stability bound
    ``1 / max_v sum_u k_uv``; any step below that bound makes a single
    :meth:`KKMSDS.kk_ms_step` non-increasing in energy.
    """

    K: float = 1.0
    L0: float | None = None  # 1/sqrt(n)
    M: float = 1.0
    p: float = 0.9
    z: float | None = None  # M * (1 - p)
    epsilon: float = 0.01
    stability_period: int = 100
    stall_window: int = 10
    stall_tol: float = 1e-6
    move_fraction: float = 0.05
    max_iterations: int | None = None  # max(200 * n, MIN_ITERATION_CAP)
    step_scale: float | None = None

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("decay rate p must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.move_fraction <= 1.0:
            raise ValueError("move_fraction must lie in (0, 1]")
        if self.stability_period < 1:
            raise ValueError("stability_period must be >= 1")
        if self.stall_window < 1:
            raise ValueError("stall_window must be >= 1")
        if self.z is not None and self.z < 0:
            raise ValueError("z must be nonnegative")
        if self.K <= 0 or self.M <= 0:
            raise ValueError("K and M must be positive")

    def resolve(self, n: int) -> "LayoutParams":
        return replace(
            self,
            L0=self.L0 if self.L0 is not None else 1.0 / math.sqrt(max(n, 1)),
            z=self.z if self.z is not None else self.M * (1.0 - self.p),
            max_iterations=(
                self.max_iterations if self.max_iterations is not None else max(200 * n, MIN_ITERATION_CAP)
            ),
        )


@dataclass
class LayoutState:
    positions: np.ndarray
    working: np.ndarray  # bool mask of the working area
    decaying: np.ndarray  # bool: stiffness governed by decay_m (else fixed)
    decay_m: np.ndarray
    select_count: np.ndarray
    iteration: int = 0
    phase: str = GROWING

    @property
    def working_set(self) -> set[int]:
        return set(np.flatnonzero(self.working).tolist())

    def copy(self) -> "LayoutState":
        return LayoutState(
            self.positions.copy(),
            self.working.copy(),
            self.decaying.copy(),
            self.decay_m.copy(),
            self.select_count.copy(),
            self.iteration,
            self.phase,
        )


@dataclass(frozen=True)
class StabilityReport:
    r: float
    mean_residual: float
    sigma: float
    edge_count: int
    flag: str | None = None


@dataclass
class LayoutResult:
    snapshots: list[tuple[int, LayoutState]]
    final: LayoutState
    converged: bool
    final_r: float
    params: LayoutParams
    start_node: int
    flag: str | None = None
    r_history: list[tuple[int, float]] = field(default_factory=list)
    component: np.ndarray | None = None  # bool mask of the start node's component

    def placed_positions(self, state: LayoutState) -> np.ndarray:
        """Snapshot positions with NaN for nodes that carry no layout yet.

        A node counts as laid out once it joined the working area; nodes the
        start node cannot reach are parked, not laid out, and stay NaN too.
        """
        keep = state.working.copy()
        if self.component is not None:
            keep &= self.component
        out = state.positions.copy()
        out[~keep] = np.nan
        return out


def decay_stiffness(m, z, p, t):
    """One selection's worth of stiffness decay, ``m - z * p**t`` clamped at 0."""
    return np.maximum(np.asarray(m, dtype=float) - z * np.power(p, t), 0.0)


def select_start_node(t: Topology) -> int:
    """Highest-degree node, smallest ID on ties."""
    if t.node_count < 1:
        raise ValueError("empty topology")
    return int(np.argmax(t.degrees()))


def stability_statistic(residuals, scale: float = 1.0) -> StabilityReport:
    """Normalized mean edge residual ``|mean| / sample std``.

    ``scale`` is the desired edge length; it only matters for fewer than two
    edges, where no dispersion exists and the layout counts as stable once
    the mean residual vanishes relative to it.
    """
    res = np.asarray(residuals, dtype=float)
    count = len(res)
    if count == 0:
        return StabilityReport(0.0, 0.0, math.nan, 0, "too-few-edges")
    mean = float(res.mean())
    if count < 2:
        r = 0.0 if abs(mean) <= 1e-9 * scale else math.inf
        return StabilityReport(r, mean, math.nan, count, "too-few-edges")
    sigma = float(res.std(ddof=1))
    if sigma < DEGENERATE_SIGMA:
        return StabilityReport(0.0, mean, sigma, count, "degenerate-uniform")
    return StabilityReport(abs(mean) / sigma, mean, sigma, count)


class KKMSDS:
    """Stateful KK-MS-DS run over one topology.

    The engine owns its :class:`LayoutState` (``self.state``) and a cached
    gradient for the current working area.  Public methods map one-to-one to
    the algorithm's steps so tests can drive them individually.
    """

    def __init__(self, topology: Topology, params: LayoutParams | None = None, seed: int = 0):
        self.topology = topology
        n = topology.node_count
        self.n = n
        self.params = (params or LayoutParams()).resolve(n)
        self.seed = seed
        self.edges = topology.edge_array

        if n:
            hops = shortest_path(topology.sparse_adjacency(), unweighted=True, directed=False)
        else:
            hops = np.zeros((0, 0))
        self.hops = hops
        reach = np.isfinite(hops) & (hops > 0)
        safe = np.where(reach, hops, 1.0)
        self.k = np.where(reach, self.params.K / safe**2, 0.0)
        self.l = np.where(reach, self.params.L0 * safe, 0.0)
        if self.params.step_scale is None:
            row_max = self.k.sum(axis=1).max() if n else 0.0
            step = STEP_FRACTION / row_max if row_max > 0 else self.params.L0
            self.params = replace(self.params, step_scale=step)
        self._adj = topology.adjacency()
        self._grad = np.zeros((n, 2))
        self._nodes = np.zeros(0, dtype=np.int64)
        self.state = self.init_layout()

    # -- setup -------------------------------------------------------------

    def init_layout(self) -> LayoutState:
        """Uniform positions in the unit square, empty working area."""
        rng = np.random.default_rng(self.seed)
        n = self.n
        st = LayoutState(
            positions=rng.random((n, 2)),
            working=np.zeros(n, dtype=bool),
            decaying=np.zeros(n, dtype=bool),
            decay_m=np.full(n, float(self.params.M)),
            select_count=np.zeros(n, dtype=np.int64),
        )
        self.state = st
        self._nodes = np.zeros(0, dtype=np.int64)
        return st

    def _refresh(self) -> None:
        self._nodes = np.flatnonzero(self.state.working).astype(np.int64)
        self._grad[:] = 0.0
        if len(self._nodes):
            _kernels.full_gradient(self.state.positions, self._nodes, self.k, self.l, self._grad)

    def _place(self, layers: list[list[int]]) -> None:
        """Put freshly added nodes next to their already-placed neighbours.

        Each node goes about half a rest length outward (away from the centroid of
        the placed nodes) from the mean of its placed neighbours, nudged by an
        ID-derived direction so siblings do not coincide.
        """
        st = self.state
        placed = st.working.copy()
        L0 = self.params.L0
        for layer in layers:
            centroid = st.positions[placed].mean(axis=0) if placed.any() else np.zeros(2)
            new_pos = {}
            for v in layer:
                nbrs = [u for u in self._adj[v] if placed[u]]
                if not nbrs:
                    continue
                base = st.positions[nbrs].mean(axis=0)
                jx, jy = _kernels.singular_direction(v, v + 1)
                out = base - centroid
                norm = math.hypot(out[0], out[1])
                out = out / norm if norm > 1e-12 else np.zeros(2)
                d = out + 0.5 * np.array([jx, jy])
                d /= max(math.hypot(d[0], d[1]), 1e-12)
                new_pos[v] = base + (0.5 + 0.25 * abs(jx)) * L0 * d
            for v, p in new_pos.items():
                st.positions[v] = p
                placed[v] = True

    def build_start_area(self, s: int) -> LayoutState:
        """Working area := ``s`` and everything within two hops of it."""
        st = self.state
        hops = hop_distance(self.topology, [s])
        members = hops <= 2
        st.working[:] = members
        st.decaying[:] = members
        st.phase = GROWING
        layers = [np.flatnonzero(hops == h).tolist() for h in (1, 2)]
        st.working[:] = False
        st.working[s] = True
        self._place(layers)
        st.working[:] = members
        self._refresh()
        return st

    def expand_working_area(self) -> LayoutState:
        """Absorb all nodes within two hops; switch to the global phase when
        nothing is left to absorb."""
        st = self.state
        if st.working.all() or not st.working.any():
            return self._go_global()
        hops = hop_distance(self.topology, np.flatnonzero(st.working).tolist())
        new = (hops > 0) & (hops <= 2)
        if not new.any():
            return self._go_global()
        layers = [np.flatnonzero(hops == h).tolist() for h in (1, 2)]
        # inherit the stiffest neighbour's decay state, layer by layer
        known = st.working.copy()
        for layer in layers:
            for v in layer:
                vals = [st.decay_m[u] for u in self._adj[v] if known[u]]
                st.decay_m[v] = max(vals) if vals else self.params.M
            known[layer] = True
        self._place(layers)
        st.working |= new
        st.decaying |= new
        self._refresh()
        return st

    def _go_global(self) -> LayoutState:
        st = self.state
        if not st.working.all():
            self._park_unreached()
        st.working[:] = True
        st.decaying[:] = False
        st.phase = GLOBAL
        self._refresh()
        return st

    def _park_unreached(self) -> None:
        """Line up nodes the working area could never reach below the layout."""
        st = self.state
        out = np.flatnonzero(~st.working)
        if st.working.any():
            lo = st.positions[st.working].min(axis=0)
        else:
            lo = np.zeros(2)
        gap = 3.0 * self.params.L0
        for i, v in enumerate(out):
            st.positions[v] = (lo[0] + i * gap, lo[1] - gap)

    # -- measurements ------------------------------------------------------

    def working_edges(self) -> np.ndarray:
        w = self.state.working
        e = self.edges
        return e[w[e[:, 0]] & w[e[:, 1]]] if len(e) else e

    def stability(self) -> StabilityReport:
        e = self.working_edges()
        p = self.state.positions
        lengths = np.hypot(*(p[e[:, 0]] - p[e[:, 1]]).T) if len(e) else np.zeros(0)
        return stability_statistic(lengths - self.params.L0, scale=self.params.L0)

    def spring_energy(self, nodes=None, positions=None) -> float:
        """Energy over pairs inside ``nodes`` (default: the working area)."""
        if nodes is None:
            nodes = self._nodes
        nodes = np.asarray(sorted(nodes) if isinstance(nodes, set) else nodes, dtype=np.int64)
        pos = self.state.positions if positions is None else np.asarray(positions, dtype=float)
        return float(_kernels.energy(pos, nodes, self.k, self.l))

    def total_energy(self, positions=None) -> float:
        return self.spring_energy(np.arange(self.n), positions)

    def spring_gradient(self, v: int, nodes=None, positions=None) -> np.ndarray:
        """Analytic dE/dp_v over pairs inside ``nodes`` (default: working area)."""
        if nodes is None:
            nodes = self._nodes
        nodes = np.asarray(sorted(nodes) if isinstance(nodes, set) else nodes, dtype=np.int64)
        pos = self.state.positions if positions is None else np.asarray(positions, dtype=float)
        g = np.zeros(2)
        for u in nodes:
            kv = self.k[v, u]
            if u == v or kv == 0.0:
                continue
            g += _kernels.pair_gradient(pos[v, 0], pos[v, 1], pos[u, 0], pos[u, 1], kv, self.l[v, u], v, int(u))
        return g

    def gradients(self) -> np.ndarray:
        """Cached gradient rows of the working area, shape ``(|W|, 2)``."""
        return self._grad[self._nodes].copy()

    # -- dynamics ----------------------------------------------------------

    def kk_ms_step(self) -> LayoutState:
        """Move the top ``move_fraction`` of the working area down the gradient."""
        st, prm = self.state, self.params
        nodes = self._nodes
        if not len(nodes):
            raise ValueError("kk_ms_step needs a nonempty working area")
        g = self._grad[nodes]
        gn = np.hypot(g[:, 0], g[:, 1])
        c = math.ceil(prm.move_fraction * len(nodes))
        sel = nodes[np.lexsort((nodes, -gn))[:c]]
        sel.sort()

        eta = np.where(st.decaying[sel], st.decay_m[sel] / prm.M, 1.0)
        old = st.positions[sel].copy()
        st.positions[sel] = old - prm.step_scale * eta[:, None] * self._grad[sel]
        is_moved = np.zeros(self.n, dtype=np.bool_)
        is_moved[sel] = True
        _kernels.update_gradient(st.positions, old, sel, nodes, is_moved, self.k, self.l, self._grad)

        dec = sel[st.decaying[sel]]
        st.decay_m[dec] = decay_stiffness(st.decay_m[dec], prm.z, prm.p, st.select_count[dec])
        st.select_count[sel] += 1
        st.iteration += 1
        return st

    def reset_decay(self) -> None:
        st = self.state
        st.decay_m[st.working] = self.params.M

    def _stalled(self, history: list[float], improving: bool) -> bool:
        w, tol = self.params.stall_window, self.params.stall_tol
        if len(history) <= w:
            return False
        if improving:
            # no new best r within the last w evaluations
            return min(history[-w:]) >= min(history[:-w]) - tol
        recent = history[-(w + 1):]
        return all(abs(a - b) < tol for a, b in zip(recent[1:], recent[:-1]))

    def run(self, snapshot_schedule=()) -> LayoutResult:
        """Run all four steps; snapshot at the scheduled iterations and at the end."""
        prm = self.params
        schedule = {int(i) for i in snapshot_schedule}
        snapshots: list[tuple[int, LayoutState]] = []
        history: list[float] = []
        r_log: list[tuple[int, float]] = []
        if self.n == 0:
            raise ValueError("cannot lay out an empty topology")

        s = select_start_node(self.topology)
        self.build_start_area(s)
        st = self.state
        if 0 in schedule:
            snapshots.append((0, st.copy()))

        converged, flag = False, None
        report = self.stability()
        while True:
            report = self.stability()
            history.append(report.r)
            r_log.append((st.iteration, report.r))
            if st.phase == GROWING:
                if report.r < prm.epsilon or self._stalled(history, improving=True):
                    self.expand_working_area()
                    history = []
                    continue
            else:
                if report.r < prm.epsilon:
                    converged = True
                    break
                if self._stalled(history, improving=False):
                    converged, flag = True, "stalled"
                    break
            if st.iteration >= prm.max_iterations:
                flag = "not-converged"
                break
            steps = min(prm.stability_period, prm.max_iterations - st.iteration)
            for _ in range(steps):
                self.kk_ms_step()
                if st.iteration in schedule:
                    snapshots.append((st.iteration, st.copy()))
            if st.phase == GROWING:
                self.reset_decay()

        if not snapshots or snapshots[-1][0] != st.iteration:
            snapshots.append((st.iteration, st.copy()))
        log.info(
            "KK-MS-DS finished: n=%d iterations=%d r=%.4g phase=%s flag=%s",
            self.n, st.iteration, report.r, st.phase, flag,
        )
        component = np.isfinite(self.hops[s])
        return LayoutResult(snapshots, st.copy(), converged, report.r, prm, s, flag, r_log, component)


def run_kk_ms_ds(t: Topology, params: LayoutParams | None = None, seed: int = 0, snapshot_schedule=()) -> LayoutResult:
    return KKMSDS(t, params, seed).run(snapshot_schedule)


def edge_lengths(t: Topology, positions: np.ndarray) -> np.ndarray:
    e = t.edge_array
    return np.hypot(*(positions[e[:, 0]] - positions[e[:, 1]]).T) if len(e) else np.zeros(0)
