"""Shared grid space and the deterministic PIBT multi-agent pathfinder.

The grid is a 3D axis lattice whose vertices and edges keep clearance > r from
every obstacle after inflation by the spherical agent model. Paths returned by
run_mapf are conflict-free (no shared vertex per step, no edge swaps) and are a
pure function of the inputs, so every agent replica recomputes identical paths
without communication.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import AABox, ObstacleMap, dist_point_boxes, dist_segment_boxes

_MIN_GRID_RATIO = 2.0 * np.sqrt(2.0)


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpace:
    """Axis lattice: vertex id = (ix * ny + iy) * nz + iz, lexicographic order."""

    origin: np.ndarray
    dims: tuple[int, int, int]
    d: float
    blocked: frozenset[int]
    neighbors: tuple[tuple[int, ...], ...]  # unblocked axis-adjacent vertices
    _bfs_cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_vertices(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def vertex_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, nz = self.dims
        return (ix * ny + iy) * nz + iz

    def vertex_cell(self, v: int) -> tuple[int, int, int]:
        _, ny, nz = self.dims
        return v // (ny * nz), (v // nz) % ny, v % nz

    def vertex_xyz(self, v: int) -> np.ndarray:
        return self.origin + self.d * np.array(self.vertex_cell(v), dtype=float)

    def all_vertex_xyz(self) -> np.ndarray:
        nx, ny, nz = self.dims
        cells = np.stack(
            np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"),
            axis=-1,
        ).reshape(-1, 3)
        return self.origin + self.d * cells

    def nearest_vertex(self, xyz) -> int:
        cell = np.rint((np.asarray(xyz, dtype=float) - self.origin) / self.d).astype(int)
        cell = np.clip(cell, 0, np.array(self.dims) - 1)
        return self.vertex_index(*cell)

    def is_blocked(self, v: int) -> bool:
        return v in self.blocked

    def bfs_distances(self, goal: int) -> np.ndarray:
        """Hop counts from every vertex to the goal (cached; inf if unreachable)."""
        cached = self._bfs_cache.get(goal)
        if cached is not None:
            return cached
        dist = np.full(self.n_vertices, np.inf)
        dist[goal] = 0.0
        queue = deque([goal])
        while queue:
            v = queue.popleft()
            for u in self.neighbors[v]:
                if dist[u] == np.inf:
                    dist[u] = dist[v] + 1.0
                    queue.append(u)
        self._bfs_cache[goal] = dist
        return dist

    def to_json(self) -> dict:
        return {
            "origin_m": self.origin.tolist(),
            "dims": list(self.dims),
            "d_m": self.d,
            "blocked": sorted(self.blocked),
        }


def build_grid(bounds: AABox, d: float, obstacles: ObstacleMap, r: float) -> GridSpace:
    """Construct the shared lattice, blocking vertices/edges within r of obstacles.

    The lattice is centred in the bounds with spacing d. Requires d > 2*sqrt(2)*r
    (deadlock-resolution precondition) and a nonempty bounds box.
    """
    if d <= _MIN_GRID_RATIO * r:
        raise GridError(
            f"grid size d={d} must exceed 2*sqrt(2)*r={_MIN_GRID_RATIO * r:.6f}"
        )
    extent = bounds.extent
    if np.any(extent <= 0):
        raise GridError("workspace bounds must have positive extent")
    dims = tuple(int(np.floor(e / d + 1e-9)) + 1 for e in extent)
    origin = bounds.lo + (extent - d * (np.array(dims) - 1)) / 2.0

    nx, ny, nz = dims
    n = nx * ny * nz
    grid_tmp = GridSpace(origin, dims, d, frozenset(), tuple())
    coords = grid_tmp.all_vertex_xyz()

    if len(obstacles):
        vdist = dist_point_boxes(coords, obstacles.lo, obstacles.hi).min(axis=1)
        blocked_mask = vdist <= r
    else:
        blocked_mask = np.zeros(n, dtype=bool)
    blocked = frozenset(np.flatnonzero(blocked_mask).tolist())

    def edge_free(a_xyz, b_xyz) -> bool:
        if not len(obstacles):
            return True
        return float(dist_segment_boxes(a_xyz, b_xyz, obstacles).min()) > r

    steps = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    adj: list[list[int]] = [[] for _ in range(n)]
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                v = (ix * ny + iy) * nz + iz
                if blocked_mask[v]:
                    continue
                for sx, sy, sz in steps:
                    jx, jy, jz = ix + sx, iy + sy, iz + sz
                    if jx >= nx or jy >= ny or jz >= nz:
                        continue
                    u = (jx * ny + jy) * nz + jz
                    if blocked_mask[u]:
                        continue
                    if edge_free(coords[v], coords[u]):
                        adj[v].append(u)
                        adj[u].append(v)
    neighbors = tuple(tuple(sorted(a)) for a in adj)
    return GridSpace(origin, dims, d, blocked, neighbors)


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridPath:
    vertices: tuple[int, ...]

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("path must contain at least one vertex")

    @property
    def makespan(self) -> int:
        return len(self.vertices) - 1

    def second_vertex(self) -> int:
        """Next waypoint along the path (the start itself for a trivial path)."""
        return self.vertices[1] if len(self.vertices) > 1 else self.vertices[0]

    def to_json(self) -> list[int]:
        return list(self.vertices)


def makespan(path: GridPath) -> int:
    """Number of steps from the first to the last vertex."""
    return path.makespan


@dataclass(frozen=True)
class MapfResult:
    solved: bool
    paths: tuple[GridPath, ...]
    reason: str = ""


# ---------------------------------------------------------------------------
# PIBT
# ---------------------------------------------------------------------------


class _Pibt:
    """One-shot PIBT instance; see run_mapf for the public contract."""

    def __init__(self, grid: GridSpace, goals, seed: int):
        self.grid = grid
        self.goals = list(goals)
        self.n = len(self.goals)
        self.seed = seed
        self.dist = [grid.bfs_distances(g) for g in self.goals]
        self.q_now: list[int] = []
        self.q_next: list[int] = []
        self.occupied_now: dict[int, int] = {}
        self.occupied_next: dict[int, int] = {}

    def _candidates(self, i: int) -> list[int]:
        v = self.q_now[i]
        cand = [v, *self.grid.neighbors[v]]
        d = self.dist[i]
        cand.sort(key=lambda u: (d[u], u))
        return cand

    def _plan_agent(self, i: int) -> bool:
        for v in self._candidates(i):
            if v in self.occupied_next:
                continue
            j = self.occupied_now.get(v)
            if j is not None and j != i and self.q_next[j] == self.q_now[i]:
                continue  # edge swap with an already-decided agent
            self.q_next[i] = v
            self.occupied_next[v] = i
            # priority inheritance: push the undecided occupant of v
            if j is not None and j != i and self.q_next[j] == -1:
                if not self._plan_agent(j):
                    continue
            return True
        # nowhere to go: stay put
        self.q_next[i] = self.q_now[i]
        self.occupied_next[self.q_now[i]] = i
        return False

    def step(self, q_from: list[int], order: list[int]) -> list[int]:
        self.q_now = q_from
        self.q_next = [-1] * self.n
        self.occupied_now = {v: i for i, v in enumerate(q_from)}
        self.occupied_next = {}
        for i in order:
            if self.q_next[i] == -1:
                self._plan_agent(i)
        return self.q_next


def run_mapf(starts, goals, grid: GridSpace, seed: int = 0) -> MapfResult:
    """Deterministic PIBT from starts to goals on the shared grid.

    Priorities follow steps-since-last-at-goal, ties broken by a seed-rotated
    agent index; candidate moves sort by (BFS distance to goal, vertex index).
    Identical inputs produce bit-identical paths. Returns an unsolved report
    when a goal is unreachable or the horizon (|V| steps) is exhausted.
    """
    starts = [int(s) for s in starts]
    goals = [int(g) for g in goals]
    n = len(starts)
    if n != len(goals):
        raise ValueError("starts and goals must have equal length")
    if n == 0:
        return MapfResult(True, tuple())
    if len(set(starts)) != n or len(set(goals)) != n:
        raise ValueError("agents must have pairwise distinct starts and goals")
    for v in (*starts, *goals):
        if grid.is_blocked(v):
            raise ValueError(f"start/goal vertex {v} is blocked")

    solver = _Pibt(grid, goals, seed)
    for i in range(n):
        if not np.isfinite(solver.dist[i][starts[i]]):
            return MapfResult(False, tuple(), f"goal of agent {i} unreachable")

    horizon = grid.n_vertices
    eta = [0] * n
    configs = [starts]
    q = starts
    for _ in range(horizon):
        if all(q[i] == goals[i] for i in range(n)):
            break
        order = sorted(range(n), key=lambda i: (-eta[i], (i + seed) % n))
        q = solver.step(q, order)
        configs.append(q)
        for i in range(n):
            eta[i] = 0 if q[i] == goals[i] else eta[i] + 1
    if not all(q[i] == goals[i] for i in range(n)):
        return MapfResult(False, tuple(), "horizon exhausted before all goals")

    paths = []
    for i in range(n):
        seq = [cfg[i] for cfg in configs]
        while len(seq) > 1 and seq[-1] == seq[-2] == goals[i]:
            seq.pop()
        paths.append(GridPath(tuple(seq)))
    return MapfResult(True, tuple(paths))


def count_conflicts(paths) -> int:
    """Vertex and edge (swap) conflicts in a joint plan; 0 for a valid plan."""
    if not paths:
        return 0
    horizon = max(p.makespan for p in paths)

    def at(p: GridPath, t: int) -> int:
        return p.vertices[min(t, p.makespan)]

    conflicts = 0
    n = len(paths)
    for t in range(horizon + 1):
        seen: dict[int, int] = {}
        for i in range(n):
            v = at(paths[i], t)
            if v in seen:
                conflicts += 1
            seen[v] = i
        if t == 0:
            continue
        for i in range(n):
            for j in range(i + 1, n):
                if at(paths[i], t) == at(paths[j], t - 1) and at(paths[j], t) == at(
                    paths[i], t - 1
                ) and at(paths[i], t) != at(paths[i], t - 1):
                    conflicts += 1
    return conflicts
