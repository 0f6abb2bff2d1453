"""Hybrid A* search over an occupancy grid using two-steer vehicle primitives.

The search keeps one continuous pose per (x, y, heading) bin, expands nodes
with uniformly sampled steer pairs applied through the virtual-vehicle step,
and scores nodes with arc length plus a steer-change penalty. The heuristic
is the max of the Euclidean distance and an obstacle-aware 2D grid distance
from one backward Dijkstra pass, cached per query.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import Pose2, wrap_angle
from .grid import OccupancyGrid
from .kinematics import VirtualVehicleState, step_virtual_vehicle


class PlanningError(RuntimeError):
    pass


class NoPathError(PlanningError):
    """Open set exhausted without reaching the goal region."""


class InvalidQueryError(PlanningError):
    """Start or goal pose collides with the inflated footprint."""


@dataclass(frozen=True)
class SearchConfig:
    xy_resolution: float = 0.25
    theta_resolution: float = math.radians(15.0)
    steer_samples: int = 3
    steer_max: float = 0.4
    primitive_speed: float = 1.0
    primitive_duration: float = 0.3
    footprint_half_length: float = 0.9
    footprint_half_width: float = 0.3
    inflation: float = 0.1
    goal_xy_tolerance: float = 0.25
    goal_theta_tolerance: float = math.radians(15.0)
    steer_change_weight: float = 0.1

    def __post_init__(self):
        if self.xy_resolution <= 0.0:
            raise ValueError("xy_resolution must be positive")
        n_bins = 2.0 * math.pi / self.theta_resolution
        if abs(n_bins - round(n_bins)) > 1e-9:
            raise ValueError("theta_resolution must divide 2*pi into an integer bin count")
        if self.steer_samples < 2:
            raise ValueError("steer_samples must be >= 2")

    @property
    def heading_bins(self) -> int:
        return int(round(2.0 * math.pi / self.theta_resolution))


@dataclass(frozen=True)
class SegmentPrimitive:
    """Steer pair and primitive parameters connecting consecutive waypoints."""

    steer_leader: float
    steer_follower: float
    speed: float
    duration: float


@dataclass
class ReferencePath:
    """Ordered waypoints; primitives[i] reproduces waypoints[i] -> waypoints[i+1]."""

    waypoints: list[Pose2]
    primitives: list[SegmentPrimitive] = field(default_factory=list)
    cost: float = 0.0

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("a reference path needs at least one waypoint")
        if self.primitives and len(self.primitives) != len(self.waypoints) - 1:
            raise ValueError("need exactly one primitive per waypoint segment")


def _pose_to_grid_frame(grid: OccupancyGrid, pose: Pose2) -> tuple[float, float, float]:
    dx = pose.x - grid.origin.x
    dy = pose.y - grid.origin.y
    if grid.origin.theta != 0.0:
        c, s = math.cos(-grid.origin.theta), math.sin(-grid.origin.theta)
        dx, dy = c * dx - s * dy, s * dx + c * dy
    return dx, dy, pose.theta - grid.origin.theta


def _rect_collides(grid: OccupancyGrid, pose: Pose2, hl: float, hw: float) -> bool:
    """Exact oriented-rectangle vs grid overlap, out of bounds counts as occupied."""
    cx, cy, th = _pose_to_grid_frame(grid, pose)
    res = grid.resolution
    ux, uy = math.cos(th), math.sin(th)
    vx, vy = -uy, ux
    ex = hl * abs(ux) + hw * abs(vx)
    ey = hl * abs(uy) + hw * abs(vy)
    xmin, xmax = cx - ex, cx + ex
    ymin, ymax = cy - ey, cy + ey
    if xmin < 0.0 or ymin < 0.0 or xmax > grid.width * res or ymax > grid.height * res:
        return True

    ix0 = max(0, int(math.floor(xmin / res)))
    ix1 = min(grid.width - 1, int(math.floor(xmax / res)))
    iy0 = max(0, int(math.floor(ymin / res)))
    iy1 = min(grid.height - 1, int(math.floor(ymax / res)))
    sub = grid.cells[iy0 : iy1 + 1, ix0 : ix1 + 1]
    if not sub.any():
        return False

    iys, ixs = np.nonzero(sub)
    ccx = (ixs + ix0 + 0.5) * res - cx
    ccy = (iys + iy0 + 0.5) * res - cy
    half = 0.5 * res
    # separating-axis test: grid axes, then the rectangle's own axes
    on_x = np.abs(ccx) <= half + ex
    on_y = np.abs(ccy) <= half + ey
    du = np.abs(ccx * ux + ccy * uy)
    dv = np.abs(ccx * vx + ccy * vy)
    on_u = du <= hl + half * (abs(ux) + abs(uy))
    on_v = dv <= hw + half * (abs(vx) + abs(vy))
    return bool(np.any(on_x & on_y & on_u & on_v))


def footprint_collides(grid: OccupancyGrid, pose: Pose2, cfg: SearchConfig) -> bool:
    """True iff any cell overlapping the inflated footprint rectangle is occupied
    or the rectangle leaves the map."""
    hl = cfg.footprint_half_length + cfg.inflation
    hw = cfg.footprint_half_width + cfg.inflation
    return _rect_collides(grid, pose, hl, hw)


class CollisionChecker:
    """Clearance-field accelerated collision checks, exact on the boundary band.

    Uses the distance to the nearest occupied cell center to accept or reject
    poses whose footprint is clearly inside / clearly overlapping, falling back
    to the exact rectangle test otherwise. Results match footprint_collides.
    """

    def __init__(self, grid: OccupancyGrid, cfg: SearchConfig):
        self.grid = grid
        self.cfg = cfg
        self.hl = cfg.footprint_half_length + cfg.inflation
        self.hw = cfg.footprint_half_width + cfg.inflation
        self.circumradius = math.hypot(self.hl, self.hw)
        self.inradius = min(self.hl, self.hw)
        if grid.cells.any():
            self._clearance = ndimage.distance_transform_edt(~grid.cells) * grid.resolution
        else:
            self._clearance = None
        self._cell_diag = grid.resolution * math.sqrt(2.0)

    def collides(self, pose: Pose2) -> bool:
        grid = self.grid
        cx, cy, _ = _pose_to_grid_frame(grid, pose)
        res = grid.resolution
        ix = int(math.floor(cx / res))
        iy = int(math.floor(cy / res))
        if not grid.in_bounds(ix, iy):
            return True
        in_x = self.circumradius <= cx <= grid.width * res - self.circumradius
        in_y = self.circumradius <= cy <= grid.height * res - self.circumradius
        fully_inside = in_x and in_y
        if self._clearance is None:
            return False if fully_inside else _rect_collides(grid, pose, self.hl, self.hw)
        d = self._clearance[iy, ix]
        if fully_inside and d - self._cell_diag > self.circumradius + 1e-9:
            return False
        if d + 0.5 * self._cell_diag < self.inradius - 1e-9:
            return True
        return _rect_collides(grid, pose, self.hl, self.hw)


class Heuristic:
    """max(Euclidean, backward-Dijkstra grid distance) toward a fixed goal."""

    def __init__(self, grid: OccupancyGrid, goal: Pose2):
        self.grid = grid
        self.goal = goal
        self._dist = self._backward_dijkstra()

    def _backward_dijkstra(self) -> np.ndarray:
        grid = self.grid
        dist = np.full((grid.height, grid.width), np.inf)
        gix, giy = grid.world_to_cell(self.goal.x, self.goal.y)
        if not grid.in_bounds(gix, giy) or grid.cells[giy, gix]:
            return dist
        res = grid.resolution
        diag = res * math.sqrt(2.0)
        dist[giy, gix] = 0.0
        heap = [(0.0, gix, giy)]
        moves = [(dx, dy, diag if dx and dy else res)
                 for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy]
        while heap:
            d, ix, iy = heapq.heappop(heap)
            if d > dist[iy, ix]:
                continue
            for dx, dy, step in moves:
                nx, ny = ix + dx, iy + dy
                if not grid.in_bounds(nx, ny) or grid.cells[ny, nx]:
                    continue
                nd = d + step
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    heapq.heappush(heap, (nd, nx, ny))
        return dist

    def grid_distance(self, pose: Pose2) -> float:
        ix, iy = self.grid.world_to_cell(pose.x, pose.y)
        if not self.grid.in_bounds(ix, iy):
            return math.inf
        return float(self._dist[iy, ix])

    def cost(self, pose: Pose2) -> float:
        euclid = math.hypot(pose.x - self.goal.x, pose.y - self.goal.y)
        return max(euclid, self.grid_distance(pose))


def _heading_bin(theta: float, cfg: SearchConfig) -> int:
    return int(round((theta % (2.0 * math.pi)) / cfg.theta_resolution)) % cfg.heading_bins


def _search_bin(grid: OccupancyGrid, cfg: SearchConfig, pose: Pose2) -> tuple[int, int, int]:
    gx, gy, _ = _pose_to_grid_frame(grid, pose)
    return (
        int(math.floor(gx / cfg.xy_resolution)),
        int(math.floor(gy / cfg.xy_resolution)),
        _heading_bin(pose.theta, cfg),
    )


def _at_goal(pose: Pose2, goal: Pose2, cfg: SearchConfig) -> bool:
    if math.hypot(pose.x - goal.x, pose.y - goal.y) > cfg.goal_xy_tolerance:
        return False
    return abs(wrap_angle(pose.theta - goal.theta)) <= cfg.goal_theta_tolerance


def plan_path(
    grid: OccupancyGrid,
    cfg: SearchConfig,
    start: Pose2,
    goal: Pose2,
    l: float,
    heuristic_weight: float = 1.0,
    max_expansions: int = 2_000_000,
) -> ReferencePath:
    """Search a collision-free, kinematically feasible waypoint path.

    Raises InvalidQueryError when start or goal collides and NoPathError when
    the reachable set is exhausted. Ties in the open set break on lowest f,
    then lowest h, then insertion order, so results are deterministic.
    """
    checker = CollisionChecker(grid, cfg)
    if checker.collides(start):
        raise InvalidQueryError("start pose collides with the inflated footprint")
    if checker.collides(goal):
        raise InvalidQueryError("goal pose collides with the inflated footprint")
    if _at_goal(start, goal, cfg):
        return ReferencePath([start], [], 0.0)

    heuristic = Heuristic(grid, goal)
    steers = np.linspace(-cfg.steer_max, cfg.steer_max, cfg.steer_samples)
    steer_pairs = list(itertools.product(steers, steers))
    v = cfg.primitive_speed
    dur = cfg.primitive_duration
    arc = abs(v) * dur

    start_key = _search_bin(grid, cfg, start)
    # per-bin best: g, pose, parent key, arrival primitive
    best: dict[tuple[int, int, int], tuple[float, Pose2, tuple | None, SegmentPrimitive | None]] = {
        start_key: (0.0, start, None, None)
    }
    h0 = heuristic.cost(start)
    if math.isinf(h0):
        raise NoPathError("start is disconnected from the goal in the 2D grid")
    h0 *= heuristic_weight
    counter = itertools.count()
    open_heap = [(h0, h0, next(counter), start_key, 0.0)]

    goal_key = None
    expansions = 0
    while open_heap:
        f, h, _, key, g_pushed = heapq.heappop(open_heap)
        g, pose, _, arrival = best[key]
        if g_pushed != g:
            continue  # stale entry, a cheaper arrival replaced it
        if _at_goal(pose, goal, cfg):
            goal_key = key
            break
        expansions += 1
        if expansions > max_expansions:
            raise NoPathError("expansion budget exhausted")
        prev_sl = arrival.steer_leader if arrival else 0.0
        prev_sf = arrival.steer_follower if arrival else 0.0
        for sl, sf in steer_pairs:
            state = VirtualVehicleState(pose, float(sl), float(sf))
            succ = step_virtual_vehicle(state, v, dur, l)
            if checker.collides(succ):
                continue
            mid = step_virtual_vehicle(state, v, 0.5 * dur, l)
            if checker.collides(mid):
                continue
            step_cost = arc + cfg.steer_change_weight * (abs(sl - prev_sl) + abs(sf - prev_sf))
            ng = g + step_cost
            skey = _search_bin(grid, cfg, succ)
            if skey in best and best[skey][0] <= ng:
                continue
            nh = heuristic.cost(succ)
            if math.isinf(nh):
                continue  # 2D-disconnected from the goal
            nh *= heuristic_weight
            prim = SegmentPrimitive(float(sl), float(sf), v, dur)
            best[skey] = (ng, succ, key, prim)
            heapq.heappush(open_heap, (ng + nh, nh, next(counter), skey, ng))

    if goal_key is None:
        raise NoPathError("no collision-free path between start and goal")

    waypoints: list[Pose2] = []
    primitives: list[SegmentPrimitive] = []
    key = goal_key
    total_cost = best[goal_key][0]
    while key is not None:
        g, pose, parent, prim = best[key]
        waypoints.append(pose)
        if prim is not None:
            primitives.append(prim)
        key = parent
    waypoints.reverse()
    primitives.reverse()
    return ReferencePath(waypoints, primitives, total_cost)
