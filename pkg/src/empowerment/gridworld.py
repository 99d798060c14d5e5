"""Deterministic (optionally slippery) 2-D grid worlds with an optional box.

Coordinates are ``(x, y)``; North is ``y + 1`` and East is ``x + 1``. Walls
and the grid boundary block movement. Walking into a pushable box moves it
one cell further if that cell is free; otherwise nothing moves.
"""
from __future__ import annotations

import enum
import json
import random
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .core import (
    DEFAULT_SOLVER,
    EmpowermentCalculator,
    EmpowermentMap,
    SolverParams,
    impoverished_empowerment,
)
from .infotheory import ValidationError
from .model import TransitionModel

Cell = tuple[int, int]


class GridAction(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    STAY = 4


MOVES = np.array([(0, 1), (1, 0), (0, -1), (-1, 0), (0, 0)], dtype=np.int64)

DEFAULT_VIEW_RADIUS = 7


@dataclass(frozen=True)
class GridState:
    agent: Cell
    box: Cell | None = None


@dataclass(frozen=True)
class GridWorld:
    """A bounded ``width x height`` grid, or an unbounded plane when both are None.

    ``view_radius`` only matters for unbounded worlds: maps cover the cells
    within that Chebyshev radius of the box (or of the origin without a box).
    """

    width: int | None = None
    height: int | None = None
    walls: frozenset = frozenset()
    box: Cell | None = None
    box_pushable: bool = False
    box_perceivable: bool = False
    noise: float = 0.0
    view_radius: int = DEFAULT_VIEW_RADIUS
    name: str = "grid"

    def __post_init__(self):
        walls = frozenset(tuple(int(c) for c in w) for w in self.walls)
        object.__setattr__(self, "walls", walls)
        if self.box is not None:
            object.__setattr__(self, "box", tuple(int(c) for c in self.box))
        if (self.width is None) != (self.height is None):
            raise ValidationError("width and height must both be given or both be None")
        if self.bounded and (self.width < 1 or self.height < 1):
            raise ValidationError("width and height must be >= 1")
        if not 0.0 <= self.noise < 1.0:
            raise ValidationError(f"noise must be in [0, 1), got {self.noise}")
        if self.view_radius < 0:
            raise ValidationError("view_radius must be >= 0")
        if self.bounded:
            for cell in walls | ({self.box} if self.box else set()):
                if not self.inside(cell):
                    raise ValidationError(f"cell {cell} lies outside the {self.width}x{self.height} grid")
        if self.box is not None and self.box in walls:
            raise ValidationError(f"box {self.box} sits on a wall")

    @property
    def bounded(self) -> bool:
        return self.width is not None

    def inside(self, cell: Cell) -> bool:
        if not self.bounded:
            return True
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def anchor(self) -> Cell:
        return self.box if self.box is not None else (0, 0)

    def window(self, horizon: int | None = None) -> tuple[int, int, int, int]:
        """(x0, y0, width, height) of the cells the model is built on."""
        if self.bounded:
            return 0, 0, self.width, self.height
        if horizon is None:
            raise ValidationError("an unbounded world needs a horizon to size its computation window")
        r = self.view_radius + horizon + 2
        ax, ay = self.anchor
        return ax - r, ay - r, 2 * r + 1, 2 * r + 1

    def map_cells(self) -> list[Cell]:
        """Agent positions covered by an empowerment map, row-major from (x0, y0)."""
        if self.bounded:
            xs, ys = range(self.width), range(self.height)
        else:
            ax, ay = self.anchor
            r = self.view_radius
            xs, ys = range(ax - r, ax + r + 1), range(ay - r, ay + r + 1)
        return [(x, y) for y in ys for x in xs]

    def with_(self, **changes) -> "GridWorld":
        return replace(self, **changes)

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "walls": sorted([list(w) for w in self.walls]),
            "box": list(self.box) if self.box is not None else None,
            "box_pushable": self.box_pushable,
            "box_perceivable": self.box_perceivable,
            "noise": self.noise,
            "view_radius": self.view_radius,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridWorld":
        allowed = {"name", "width", "height", "walls", "box", "box_pushable",
                   "box_perceivable", "noise", "view_radius"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValidationError(f"unknown world keys: {sorted(unknown)}")
        box = doc.get("box")
        return cls(
            width=doc.get("width"),
            height=doc.get("height"),
            walls=frozenset(tuple(w) for w in doc.get("walls", [])),
            box=tuple(box) if box is not None else None,
            box_pushable=bool(doc.get("box_pushable", False)),
            box_perceivable=bool(doc.get("box_perceivable", False)),
            noise=float(doc.get("noise", 0.0)),
            view_radius=int(doc.get("view_radius", DEFAULT_VIEW_RADIUS)),
            name=doc.get("name", "grid"),
        )

    @classmethod
    def load_json(cls, path) -> "GridWorld":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def step(world: GridWorld, state: GridState, action: GridAction) -> GridState:
    """Noise-free successor of ``state`` under ``action``."""
    dx, dy = MOVES[int(action)]
    if dx == 0 and dy == 0:
        return state
    ax, ay = state.agent
    target = (ax + int(dx), ay + int(dy))
    if not world.inside(target) or target in world.walls:
        return state
    if state.box is not None and target == state.box:
        if not world.box_pushable:
            return state
        beyond = (target[0] + int(dx), target[1] + int(dy))
        if not world.inside(beyond) or beyond in world.walls:
            return state
        return GridState(target, beyond)
    return GridState(target, state.box)


# -- vectorized dynamics over a finite window ----------------------------------


class _Window:
    def __init__(self, world: GridWorld, horizon: int | None):
        self.x0, self.y0, self.w, self.h = world.window(horizon)
        self.free = np.ones((self.w, self.h), dtype=bool)
        for (x, y) in world.walls:
            i, j = x - self.x0, y - self.y0
            if 0 <= i < self.w and 0 <= j < self.h:
                self.free[i, j] = False
        self.cell_id = -np.ones((self.w, self.h), dtype=np.int64)
        fi, fj = np.nonzero(self.free)
        order = np.lexsort((fi, fj))  # row-major: y then x
        fi, fj = fi[order], fj[order]
        self.cell_id[fi, fj] = np.arange(fi.size)
        self.cells_x = fi + self.x0
        self.cells_y = fj + self.y0
        self.n_cells = fi.size

    def lookup(self, x, y):
        i, j = x - self.x0, y - self.y0
        ok = (i >= 0) & (i < self.w) & (j >= 0) & (j < self.h)
        out = np.full(np.shape(x), -1, dtype=np.int64)
        out[ok] = self.cell_id[i[ok], j[ok]]
        return out

    def id_of(self, cell: Cell) -> int:
        v = int(self.lookup(np.array([cell[0]]), np.array([cell[1]]))[0])
        if v < 0:
            raise ValidationError(f"cell {cell} is not a free cell of the world")
        return v


def _step_arrays(win: _Window, world: GridWorld, agent, box, action: int):
    """Vectorized noise-free step on free-cell ids; ``box`` is -1 when absent."""
    dx, dy = MOVES[action]
    if dx == 0 and dy == 0:
        return agent.copy(), box.copy()
    tx = win.cells_x[agent] + dx
    ty = win.cells_y[agent] + dy
    target = win.lookup(tx, ty)
    new_agent = agent.copy()
    new_box = box.copy()
    into_box = (target >= 0) & (target == box)
    move = (target >= 0) & ~into_box
    new_agent[move] = target[move]
    if world.box_pushable and np.any(into_box):
        beyond = np.full_like(target, -1)
        bx = win.cells_x[np.where(into_box, box, 0)] + dx
        by = win.cells_y[np.where(into_box, box, 0)] + dy
        beyond[into_box] = win.lookup(bx[into_box], by[into_box])
        push = into_box & (beyond >= 0)
        new_agent[push] = target[push]
        new_box[push] = beyond[push]
    return new_agent, new_box


class _StateLabels(Sequence):
    """Lazy ``(x, y)`` or ``((ax, ay), (bx, by))`` labels; large box worlds have ~10^6 states."""

    def __init__(self, agent_xy: np.ndarray, box_xy: np.ndarray | None):
        self._agent = agent_xy
        self._box = box_xy

    def __len__(self) -> int:
        return self._agent.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        a = (int(self._agent[i, 0]), int(self._agent[i, 1]))
        if self._box is None:
            return a
        return a, (int(self._box[i, 0]), int(self._box[i, 1]))


@dataclass(frozen=True)
class GridModel:
    """A grid world compiled to a TransitionModel plus lookup tables."""

    world: GridWorld
    model: TransitionModel
    agent_cell: np.ndarray  # per state: (x, y)
    box_cell: np.ndarray | None  # per state: (x, y), or None without a box
    initial_states: dict = field(default_factory=dict)  # agent cell -> state index with box at start

    def state_of(self, agent: Cell, box: Cell | None = None) -> int:
        if box is None or box == self.world.box:
            try:
                return self.initial_states[tuple(agent)]
            except KeyError:
                raise ValidationError(f"no state with agent at {agent}") from None
        hit = np.flatnonzero(
            (self.agent_cell[:, 0] == agent[0]) & (self.agent_cell[:, 1] == agent[1])
            & (self.box_cell[:, 0] == box[0]) & (self.box_cell[:, 1] == box[1])
        )
        if hit.size == 0:
            raise ValidationError(f"no state with agent {agent} and box {box}")
        return int(hit[0])


def as_transition_model(world: GridWorld, horizon: int | None = None) -> GridModel:
    """Compile ``world`` into a finite TransitionModel.

    States are the (agent, box) configurations reachable from any free agent
    cell with the box at its start cell. Unbounded worlds are cut to a window
    that extends ``view_radius + horizon + 2`` cells around the anchor, which
    contains every configuration reachable in ``horizon`` steps from a
    mapped cell. With ``noise > 0`` the intended action succeeds with
    probability ``1 - noise`` and each other action's outcome occurs with
    probability ``noise / 4``; coinciding outcomes are merged.
    """
    win = _Window(world, horizon)
    F = win.n_cells
    has_box = world.box is not None
    box0 = win.id_of(world.box) if has_box else -1

    start_agents = np.array([c for c in range(F) if c != box0], dtype=np.int64)
    start_box = np.full(start_agents.size, box0, dtype=np.int64)
    stride = F + 1

    def encode(agent, box):
        return agent * stride + (box + 1)

    # closure of the start configurations under all actions
    visited = np.zeros(F * stride, dtype=bool)
    frontier = np.unique(encode(start_agents, start_box))
    visited[frontier] = True
    while frontier.size:
        ag, bx = frontier // stride, frontier % stride - 1
        nxt = np.unique(np.concatenate(
            [encode(*_step_arrays(win, world, ag, bx, a)) for a in range(len(MOVES))]
        ))
        frontier = nxt[~visited[nxt]]
        visited[frontier] = True
    codes = np.flatnonzero(visited)
    ag, bx = codes // stride, codes % stride - 1
    n_states = codes.size
    nxt_codes = np.stack([encode(*_step_arrays(win, world, ag, bx, a)) for a in range(len(MOVES))], axis=1)
    nxt_idx = np.searchsorted(codes, nxt_codes)

    if world.noise > 0:
        eps = world.noise
        A = len(MOVES)
        weights = np.full((A, A), eps / (A - 1))
        np.fill_diagonal(weights, 1 - eps)
        succ = np.broadcast_to(nxt_idx[:, None, :], (n_states, A, A)).copy()
        prob = np.broadcast_to(weights[None], (n_states, A, A)).copy()
        # merge coinciding outcomes into the first slot holding them
        for k in range(A):
            for j in range(k):
                same = succ[:, :, k] == succ[:, :, j]
                live = prob[:, :, j] > 0
                move = same & live & (prob[:, :, k] > 0)
                prob[:, :, j] += np.where(move, prob[:, :, k], 0)
                prob[:, :, k] = np.where(move, 0, prob[:, :, k])
    else:
        succ = nxt_idx[..., None]
        prob = np.ones_like(succ, dtype=float)

    agent_xy = np.stack([win.cells_x[ag], win.cells_y[ag]], axis=1)
    box_xy = np.stack([win.cells_x[np.maximum(bx, 0)], win.cells_y[np.maximum(bx, 0)]], axis=1) if has_box else None

    if has_box and world.box_perceivable:
        sensor = np.arange(n_states)
        sensors = None
    else:
        sensor_cells, sensor = np.unique(ag, return_inverse=True)
        sensors = [(int(win.cells_x[c]), int(win.cells_y[c])) for c in sensor_cells]

    labels = _StateLabels(agent_xy, box_xy)
    model = TransitionModel(
        succ, prob, sensor,
        states=labels,
        actions=[a.name for a in GridAction],
        sensors=sensors,
        name=world.name,
    )
    initial = {}
    start_codes = np.searchsorted(codes, encode(start_agents, start_box))
    for a, s in zip(start_agents, start_codes):
        initial[(int(win.cells_x[a]), int(win.cells_y[a]))] = int(s)
    return GridModel(world, model, agent_xy, box_xy, initial)


# -- maps ----------------------------------------------------------------------


@dataclass(frozen=True)
class GridMap:
    """Per-cell values on the map window; NaN marks walls and the box cell."""

    world: GridWorld
    x0: int
    y0: int
    values: np.ndarray  # (height, width), row j is y = y0 + j
    horizon: int
    method: str
    emap: EmpowermentMap | None = None

    def at(self, cell: Cell) -> float:
        return float(self.values[cell[1] - self.y0, cell[0] - self.x0])

    def cells(self) -> list[Cell]:
        h, w = self.values.shape
        return [(self.x0 + i, self.y0 + j) for j in range(h) for i in range(w)
                if not np.isnan(self.values[j, i])]

    def finite_values(self) -> np.ndarray:
        return self.values[~np.isnan(self.values)]


def _map_frame(world: GridWorld):
    cells = world.map_cells()
    xs = [c[0] for c in cells]
    ys = [c[1] for c in cells]
    x0, y0 = min(xs), min(ys)
    return cells, x0, y0, max(xs) - x0 + 1, max(ys) - y0 + 1


def empowerment_map(
    world: GridWorld,
    n: int,
    method: str = "deterministic",
    solver: SolverParams = DEFAULT_SOLVER,
    *,
    budget: int = 8,
    segments: int = 1,
    grid_model: GridModel | None = None,
) -> GridMap:
    """n-step empowerment for every free agent cell with the box at its start cell.

    ``method`` is ``deterministic`` (reachable-set counting), ``ba`` (full
    Blahut-Arimoto over all |A|^n sequences) or ``impoverished`` (``n`` is then
    the segment length, chained ``segments`` times with ``budget`` kept
    sequences per stage).
    """
    if method not in ("deterministic", "ba", "impoverished"):
        raise ValidationError(f"unknown method {method!r}")
    total = n * segments if method == "impoverished" else n
    gm = grid_model or as_transition_model(world, total)
    cells, x0, y0, w, h = _map_frame(world)
    values = np.full((h, w), np.nan)
    calc = None if method == "impoverished" else EmpowermentCalculator(gm.model, n, solver, method)
    states, vals = [], []
    for cell in cells:
        if cell in world.walls or cell == world.box:
            continue
        r = gm.initial_states.get(cell)
        if r is None:
            continue
        if method == "impoverished":
            v = impoverished_empowerment(gm.model, r, n, budget, segments, solver).bits
        else:
            v = calc.value(r)
        values[cell[1] - y0, cell[0] - x0] = v
        states.append(gm.model.states[r])
        vals.append(v)
    emap = EmpowermentMap(tuple(states), np.array(vals), total, world.name, method)
    return GridMap(world, x0, y0, values, total, method, emap)


@dataclass(frozen=True)
class DistanceMap:
    """Mean directed shortest-path action distance from each state to all states."""

    mean: np.ndarray  # NaN where some state is unreachable
    unreachable: np.ndarray  # count of unreachable targets per state
    grid_model: GridModel


def average_distance_map(world: GridWorld, grid_model: GridModel | None = None) -> DistanceMap:
    if not world.bounded:
        raise ValidationError("average distances need a bounded world")
    gm = grid_model or as_transition_model(world)
    m = gm.model
    rows = np.repeat(np.arange(m.n_states), m.n_actions * m.succ.shape[2])
    cols = m.succ.reshape(-1)
    live = m.prob.reshape(-1) > 0
    graph = csr_matrix((np.ones(live.sum()), (rows[live], cols[live])), shape=(m.n_states, m.n_states))
    dist = shortest_path(graph, method="D", directed=True, unweighted=True)
    finite = np.isfinite(dist)
    unreachable = (~finite).sum(axis=1)
    mean = np.where(unreachable == 0, np.where(finite, dist, 0).mean(axis=1), np.nan)
    return DistanceMap(mean, unreachable, gm)


@dataclass(frozen=True)
class CorrelationReport:
    r: float | None
    reason: str
    empowerment: GridMap
    distance: np.ndarray  # same layout as empowerment.values

    def to_dict(self) -> dict:
        return {"pearson_r": self.r, "status": self.reason, "horizon": self.empowerment.horizon}


def correlation_report(world: GridWorld, n: int, solver: SolverParams = DEFAULT_SOLVER) -> CorrelationReport:
    """Pearson r between n-step empowerment and average distance over agent cells."""
    if not world.bounded:
        raise ValidationError("correlation report needs a bounded world")
    gm = as_transition_model(world)
    emp = empowerment_map(world, n, "deterministic" if gm.model.is_deterministic else "ba", solver,
                          grid_model=gm)
    dm = average_distance_map(world, gm)
    dist = np.full_like(emp.values, np.nan)
    for cell in emp.cells():
        dist[cell[1] - emp.y0, cell[0] - emp.x0] = dm.mean[gm.initial_states[cell]]
    mask = ~np.isnan(emp.values)
    e, d = emp.values[mask], dist[mask]
    if np.any(np.isnan(d)):
        return CorrelationReport(None, "undefined: state graph is not strongly connected", emp, dist)
    if e.size < 2 or np.ptp(e) == 0 or np.ptp(d) == 0:
        return CorrelationReport(None, "undefined: a map has zero variance", emp, dist)
    r = float(np.corrcoef(e, d)[0, 1])
    return CorrelationReport(r, "ok", emp, dist)


# -- scenarios -------------------------------------------------------------------


def open_grid(view_radius: int = DEFAULT_VIEW_RADIUS, **kw) -> GridWorld:
    return GridWorld(view_radius=view_radius, name=kw.pop("name", "open-grid"), **kw)


def box_world(pushable: bool, perceivable: bool, view_radius: int = DEFAULT_VIEW_RADIUS,
              box: Cell = (0, 0), noise: float = 0.0) -> GridWorld:
    """Unbounded plane with a single box, as in the box-pushing scenarios."""
    tag = f"box-{'push' if pushable else 'fixed'}-{'seen' if perceivable else 'unseen'}"
    return GridWorld(box=box, box_pushable=pushable, box_perceivable=perceivable,
                     noise=noise, view_radius=view_radius, name=tag)


def generate_maze(size: int = 10, seed: int = 0, openness: float = 0.4) -> GridWorld:
    """Seeded maze on a ``size x size`` grid.

    A recursive backtracker carves corridors between the even-coordinate
    cells, then each remaining wall cell is removed with probability
    ``openness`` to create loops and small rooms. Free cells cut off from
    (0, 0) are walled in again, so the free cells are always connected.
    """
    if size < 3:
        raise ValidationError("maze size must be >= 3")
    if not 0.0 <= openness <= 1.0:
        raise ValidationError("openness must be in [0, 1]")
    rng = random.Random(seed)
    free = np.zeros((size, size), dtype=bool)
    nodes = [(x, y) for x in range(0, size, 2) for y in range(0, size, 2)]
    start = nodes[0]
    free[start] = True
    visited = {start}
    stack = [start]
    while stack:
        x, y = stack[-1]
        options = []
        for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < size and 0 <= ny < size and (nx, ny) not in visited:
                options.append((nx, ny))
        if not options:
            stack.pop()
            continue
        nx, ny = rng.choice(options)
        free[(x + nx) // 2, (y + ny) // 2] = True
        free[nx, ny] = True
        visited.add((nx, ny))
        stack.append((nx, ny))
    for x in range(size):
        for y in range(size):
            if not free[x, y] and rng.random() < openness:
                free[x, y] = True
    # keep only the component containing the start cell
    reach = np.zeros_like(free)
    todo = [start]
    reach[start] = True
    while todo:
        x, y = todo.pop()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < size and 0 <= ny < size and free[nx, ny] and not reach[nx, ny]:
                reach[nx, ny] = True
                todo.append((nx, ny))
    walls = frozenset((int(x), int(y)) for x, y in zip(*np.nonzero(~reach)))
    return GridWorld(size, size, walls, name=f"maze-{size}-seed{seed}")


def symmetric_image(world: GridWorld, transform: str) -> GridWorld:
    """Mirror or rotate a bounded world: ``flip_x``, ``flip_y`` or ``rot90``."""
    if not world.bounded:
        raise ValidationError("symmetry transforms are defined for bounded worlds")
    f = cell_transform(world, transform)
    w, h = (world.height, world.width) if transform == "rot90" else (world.width, world.height)
    return replace(
        world, width=w, height=h,
        walls=frozenset(f(c) for c in world.walls),
        box=f(world.box) if world.box is not None else None,
    )


def cell_transform(world: GridWorld, transform: str):
    W, H = world.width, world.height
    if transform == "flip_x":
        return lambda c: (W - 1 - c[0], c[1])
    if transform == "flip_y":
        return lambda c: (c[0], H - 1 - c[1])
    if transform == "rot90":
        return lambda c: (H - 1 - c[1], c[0])
    raise ValidationError(f"unknown transform {transform!r}")
