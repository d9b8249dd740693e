"""Trajectory initializers: visiting orders, disk waypoints, and sampling.

Visiting orders come from exact subset dynamic programming (optionally with
source-before-destination precedence) up to EXACT_NODE_CAP nodes, and from a
nearest-neighbour + 2-opt heuristic beyond. Orders through disk neighbourhoods
reuse the point order and optimize per-disk waypoints by cyclic coordinate
descent, each update solving the two-anchor shortest-path-into-a-disk problem
exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .scenario import Scenario

EXACT_NODE_CAP = 18
LEX_PATH_CAP = 14          # carry full paths for lexicographic ties up to here
TIE_RTOL = 1e-12
RADIUS_TOL = 1.0           # meters, bisection stopping width
WAYPOINT_CERT_TOL = 1e-6   # stationarity certificate on the subgradient norm
_RESTART_SEED = 0x5EED


@dataclass(frozen=True)
class Tour:
    """A visiting order over point indices and its Euclidean length."""

    order: tuple[int, ...]
    length: float
    closed: bool
    exact: bool = True


@dataclass(frozen=True)
class PrecedencePair:
    """Indices into the point list: source must be visited before destination."""

    source_index: int
    destination_index: int


@dataclass(frozen=True)
class Waypoints:
    """One point per disk, each within radius_r of its center."""

    points: np.ndarray     # (n, 2), indexed like the centers
    radius_r: float

    def validate(self, centers: np.ndarray, tol: float = 1e-6) -> None:
        d = np.linalg.norm(self.points - centers, axis=1)
        if np.any(d > self.radius_r + tol):
            w = int(np.argmax(d))
            raise ValueError(f"waypoint {w} leaves its disk by {d[w] - self.radius_r:.3e} m")


def tour_length(points: np.ndarray, order, closed: bool) -> float:
    pts = np.asarray(points, dtype=float)[list(order)]
    segs = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(segs.sum())
    if closed:
        total += float(np.linalg.norm(pts[-1] - pts[0]))
    return total


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _better(cost_a: float, path_a, cost_b: float, path_b) -> bool:
    """True if (cost_a, path_a) should replace (cost_b, path_b)."""
    tol = TIE_RTOL * (1.0 + abs(cost_b))
    if cost_a < cost_b - tol:
        return True
    if cost_a <= cost_b + tol and path_a < path_b:
        return True
    return False


def _dp_paths(dist: np.ndarray, closed: bool, pred: list[int]) -> tuple[float, tuple[int, ...]]:
    """Subset DP carrying full paths; lexicographic smallest among ties."""
    n = len(dist)
    dp: dict[tuple[int, int], tuple[float, tuple[int, ...]]] = {}
    if closed:
        dp[(1, 0)] = (0.0, (0,))
    else:
        for j in range(n):
            if pred[j] == 0:
                dp[(1 << j, j)] = (0.0, (j,))
    full = (1 << n) - 1
    for mask in range(1, full + 1):
        for j in range(n):
            state = dp.get((mask, j))
            if state is None:
                continue
            cost, path = state
            for k in range(n):
                if mask & (1 << k) or (pred[k] & ~mask):
                    continue
                nmask = mask | (1 << k)
                ncost = cost + dist[j][k]
                npath = path + (k,)
                cur = dp.get((nmask, k))
                if cur is None or _better(ncost, npath, *cur):
                    dp[(nmask, k)] = (ncost, npath)
    best: tuple[float, tuple[int, ...]] | None = None
    for j in range(n):
        state = dp.get((full, j))
        if state is None:
            continue
        cost, path = state
        if closed:
            cost += dist[j][0]
        if best is None or _better(cost, path, *best):
            best = (cost, path)
    if best is None:
        raise ValueError("no feasible visiting order (cyclic precedence?)")
    return best


def _dp_arrays(dist: np.ndarray, closed: bool, pred: list[int]) -> tuple[float, tuple[int, ...]]:
    """Array subset DP; deterministic but ties break by node index only."""
    n = len(dist)
    size = 1 << n
    cost = np.full((size, n), np.inf)
    parent = np.full((size, n), -1, dtype=np.int8)
    if closed:
        cost[1, 0] = 0.0
    else:
        for j in range(n):
            if pred[j] == 0:
                cost[1 << j, j] = 0.0
    for mask in range(1, size):
        bits = [j for j in range(n) if mask & (1 << j)]
        if len(bits) < 2:
            continue
        for j in bits:
            if pred[j] & ~(mask ^ (1 << j)):
                continue
            pm = mask ^ (1 << j)
            ks = [k for k in bits if k != j]
            cands = cost[pm, ks] + dist[ks, j]
            b = int(np.argmin(cands))
            if cands[b] < cost[mask, j]:
                cost[mask, j] = cands[b]
                parent[mask, j] = ks[b]
    full = size - 1
    finals = cost[full].copy()
    if closed:
        finals += dist[:, 0]
    j = int(np.argmin(finals))
    if not np.isfinite(finals[j]):
        raise ValueError("no feasible visiting order (cyclic precedence?)")
    total = float(finals[j])
    path = [j]
    mask = full
    while parent[mask, path[-1]] >= 0:
        k = int(parent[mask, path[-1]])
        mask ^= 1 << path[-1]
        path.append(k)
    path.reverse()
    return total, tuple(path)


def _nn_two_opt(dist: np.ndarray, closed: bool, pairs: list[PrecedencePair]) -> tuple[float, tuple[int, ...]]:
    n = len(dist)
    pred = {p.destination_index: p.source_index for p in pairs}
    visited = [False] * n
    path = []
    cur = None
    for _ in range(n):
        cands = [j for j in range(n) if not visited[j]
                 and (j not in pred or visited[pred[j]])]
        if cur is None:
            j = min(cands)
        else:
            j = min(cands, key=lambda k: (dist[cur][k], k))
        path.append(j)
        visited[j] = True
        cur = j

    def ok(p) -> bool:
        pos = {v: i for i, v in enumerate(p)}
        return all(pos[pr.source_index] < pos[pr.destination_index] for pr in pairs)

    def pts_len(p) -> float:
        total = sum(dist[p[i]][p[i + 1]] for i in range(n - 1))
        return total + (dist[p[-1]][p[0]] if closed else 0.0)

    best = pts_len(path)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                cand = path[:i] + path[i:j + 1][::-1] + path[j + 1:]
                if pairs and not ok(cand):
                    continue
                c = pts_len(cand)
                if c < best - 1e-9:
                    path, best = cand, c
                    improved = True
    return best, tuple(path)


_tour_memo: dict[tuple, Tour] = {}


def _solve_order(points: np.ndarray, closed: bool, pairs: tuple[PrecedencePair, ...]) -> Tour:
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least 2 points")
    key = (pts.tobytes(), closed, pairs)
    hit = _tour_memo.get(key)
    if hit is not None:
        return hit
    dist = _pairwise(pts)
    pred = [0] * n
    for p in pairs:
        if not (0 <= p.source_index < n and 0 <= p.destination_index < n):
            raise ValueError("precedence pair references an invalid point index")
        if p.source_index == p.destination_index:
            raise ValueError("precedence pair may not reference the same point twice")
        pred[p.destination_index] |= 1 << p.source_index
    if n <= EXACT_NODE_CAP:
        if n <= LEX_PATH_CAP:
            length, order = _dp_paths(dist, closed, pred)
        else:
            length, order = _dp_arrays(dist, closed, pred)
            if not pairs:
                rev = tuple(reversed(order)) if not closed else \
                    (order[0],) + tuple(reversed(order[1:]))
                if rev < order:
                    order = rev
        tour = Tour(order=order, length=length, closed=closed, exact=True)
    else:
        warnings.warn(f"{n} nodes exceeds the exact cap of {EXACT_NODE_CAP}; "
                      "using nearest-neighbour + 2-opt", stacklevel=3)
        length, order = _nn_two_opt(dist, closed, list(pairs))
        tour = Tour(order=order, length=length, closed=closed, exact=False)
    if len(_tour_memo) > 256:
        _tour_memo.clear()
    _tour_memo[key] = tour
    return tour


def solve_tsp(points, closed: bool) -> Tour:
    """Shortest visiting order over all points; closed loops back to the start.

    Exact up to EXACT_NODE_CAP points (subset DP, lexicographic tie-break);
    larger inputs fall back to a 2-opt-stable heuristic flagged exact=False.
    """
    return _solve_order(np.asarray(points, dtype=float), closed, ())


def solve_pdp(points, pairs) -> Tour:
    """Shortest open route visiting each point once, sources before destinations.

    With no pairs this coincides with the open solve_tsp route. Exact via
    subset DP whose transitions refuse a destination while its source is
    unvisited.
    """
    return _solve_order(np.asarray(points, dtype=float), False, tuple(pairs))


# ---------------------------------------------------------------------------
# waypoints in disks


def _disk_entry_point(a: np.ndarray, b: np.ndarray, e: np.ndarray, r: float):
    """First point of segment a->b inside disk(e, r), or None."""
    d = b - a
    f = a - e
    dd = float(d @ d)
    if dd < 1e-24:
        return a.copy() if f @ f <= r * r else None
    # |f + t d|^2 = r^2
    c2, c1, c0 = dd, 2.0 * float(f @ d), float(f @ f) - r * r
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0:
        return None
    s = math.sqrt(disc)
    t1, t2 = (-c1 - s) / (2 * c2), (-c1 + s) / (2 * c2)
    if t2 < 0.0 or t1 > 1.0:
        return None
    return a + min(max(t1, 0.0), 1.0) * d


def _two_anchor_disk_point(a: np.ndarray, b: np.ndarray, e: np.ndarray, r: float) -> np.ndarray:
    """argmin over the disk of |g - a| + |g - b|.

    If the segment crosses the disk its entry point attains the minimum;
    otherwise the optimum sits on the circle and is found by a bracketed
    1-D search over the boundary angle.
    """
    if r <= 0:
        return e.copy()
    hit = _disk_entry_point(a, b, e, r)
    if hit is not None:
        return hit

    def h(theta: float) -> float:
        g = e + r * np.array([math.cos(theta), math.sin(theta)])
        return float(np.linalg.norm(g - a) + np.linalg.norm(g - b))

    grid = np.linspace(0.0, 2.0 * math.pi, 65)[:-1]
    vals = [h(t) for t in grid]
    i = int(np.argmin(vals))
    width = 2.0 * math.pi / 64
    lo, hi = grid[i] - width, grid[i] + width
    res = minimize_scalar(h, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    theta = float(res.x) if res.fun <= vals[i] else grid[i]
    return e + r * np.array([math.cos(theta), math.sin(theta)])


def _closest_disk_point(a: np.ndarray, e: np.ndarray, r: float) -> np.ndarray:
    v = a - e
    d = float(np.linalg.norm(v))
    if d <= r:
        return a.copy()
    return e + (r / d) * v


def _path_edges(n: int, pos: int, closed: bool) -> list[int]:
    """Tour positions adjacent to position pos."""
    out = []
    if closed:
        return [(pos - 1) % n, (pos + 1) % n]
    if pos > 0:
        out.append(pos - 1)
    if pos < n - 1:
        out.append(pos + 1)
    return out


def _stationarity_residual(g_tour: np.ndarray, e_tour: np.ndarray, r: float,
                           closed: bool) -> float:
    """Max over waypoints of the min-norm subgradient of the tour length."""
    n = len(g_tour)
    worst = 0.0
    for t in range(n):
        v = np.zeros(2)
        free = 0
        for s in _path_edges(n, t, closed):
            d = g_tour[t] - g_tour[s]
            nd = float(np.linalg.norm(d))
            if nd < 1e-12:
                free += 1
            else:
                v += d / nd
        gap = r - float(np.linalg.norm(g_tour[t] - e_tour[t]))
        if r > 0 and gap < 1e-9:
            nhat = g_tour[t] - e_tour[t]
            nn = float(np.linalg.norm(nhat))
            if nn > 0:
                nhat = nhat / nn
                kappa = max(0.0, -float(v @ nhat))
                v = v + kappa * nhat
        resid = max(0.0, float(np.linalg.norm(v)) - free)
        if r <= 0:
            resid = 0.0
        worst = max(worst, resid)
    return worst


def _cd_passes(g_tour: np.ndarray, e_tour: np.ndarray, r: float, closed: bool,
               max_passes: int) -> float:
    n = len(g_tour)
    prev_len = math.inf
    for _ in range(max_passes):
        for t in range(n):
            nbrs = _path_edges(n, t, closed)
            if len(nbrs) == 1:
                g_tour[t] = _closest_disk_point(g_tour[nbrs[0]], e_tour[t], r)
            else:
                g_tour[t] = _two_anchor_disk_point(g_tour[nbrs[0]], g_tour[nbrs[1]],
                                                   e_tour[t], r)
        cur = _tour_len_inorder(g_tour, closed)
        if prev_len - cur <= 1e-11 * max(1.0, cur):
            return cur
        prev_len = cur
    return _tour_len_inorder(g_tour, closed)


def _has_coincident_neighbors(g_tour: np.ndarray, closed: bool) -> bool:
    n = len(g_tour)
    last = n if closed else n - 1
    for t in range(last):
        if float(np.linalg.norm(g_tour[(t + 1) % n] - g_tour[t])) < 1e-9:
            return True
    return False


def _socp_waypoints(e_tour: np.ndarray, r: float, closed: bool) -> np.ndarray:
    """Global solve of the fixed-order waypoint problem as a small SOCP."""
    import cvxpy as cp

    n = len(e_tour)
    g = cp.Variable((n, 2))
    length = cp.sum(cp.norm(g[1:] - g[:-1], axis=1))
    if closed:
        length = length + cp.norm(g[-1] - g[0])
    prob = cp.Problem(cp.Minimize(length), [cp.norm(g - e_tour, axis=1) <= r])
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-9)
    pts = np.asarray(g.value)
    # exact disk feasibility (the conic solve is feasible only to ~1e-9)
    off = pts - e_tour
    norms = np.linalg.norm(off, axis=1)
    over = norms > r
    if np.any(over):
        pts[over] = e_tour[over] + off[over] * (r / norms[over, None])
    return pts


def optimize_waypoints_fixed_order(centers, order, r: float, closed: bool,
                                   max_passes: int = 500) -> tuple[Waypoints, float]:
    """Minimize the route length through one waypoint per disk, order fixed.

    Cyclic coordinate descent; every waypoint update is the exact two-anchor
    minimizer over its disk. At a smooth point, blockwise optimality of this
    convex problem is global optimality, certified by a subgradient-norm
    check. Coincident consecutive waypoints make the length nonsmooth and can
    stall the descent blockwise, so in that case (or on a failed certificate
    after seeded nudges) the same problem is re-solved globally as a small
    SOCP and the better result is kept.
    """
    centers = np.asarray(centers, dtype=float)
    order = list(order)
    n = len(order)
    if sorted(order) != list(range(len(centers))):
        raise ValueError("order must be a permutation of the center indices")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    e_tour = centers[order]
    if r == 0 or n == 1:
        g = centers.copy()
        return Waypoints(points=g, radius_r=float(r)), tour_length(centers, order, closed)

    g_tour = e_tour.copy()
    best_g, best_len = None, math.inf
    settled = False
    for attempt in range(3):
        cur = _cd_passes(g_tour, e_tour, r, closed, max_passes)
        if cur < best_len:
            best_len, best_g = cur, g_tour.copy()
        if not _has_coincident_neighbors(g_tour, closed) and \
                _stationarity_residual(g_tour, e_tour, r, closed) < WAYPOINT_CERT_TOL:
            settled = True
            break
        rng = np.random.default_rng(_RESTART_SEED + attempt)
        nudge = int(rng.integers(0, n))
        g_tour[nudge] = _closest_disk_point(
            g_tour[nudge] + rng.normal(0.0, 0.05 * r, 2), e_tour[nudge], r)
    if not settled:
        g_tour = _socp_waypoints(e_tour, r, closed)
        cur = _cd_passes(g_tour, e_tour, r, closed, 50)   # polish
        if cur < best_len:
            best_len, best_g = cur, g_tour.copy()
    g_tour = best_g
    points = np.empty_like(centers)
    points[order] = g_tour
    return Waypoints(points=points, radius_r=float(r)), best_len


def _tour_len_inorder(pts: np.ndarray, closed: bool) -> float:
    total = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    if closed:
        total += float(np.linalg.norm(pts[-1] - pts[0]))
    return total


def radius_bisection(centers, order, T_budget: float, v_max: float,
                     closed: bool, eps_r: float = RADIUS_TOL) -> tuple[float, Waypoints]:
    """Smallest disk radius whose optimized route fits the travel-time budget.

    The optimized route length is non-increasing in the radius, so a plain
    bisection between 0 and the instance diameter applies; the returned
    radius is feasible and within eps_r of the smallest feasible one.
    """
    if T_budget <= 0:
        raise ValueError("T_budget must be positive")
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    centers = np.asarray(centers, dtype=float)
    wp0, len0 = optimize_waypoints_fixed_order(centers, order, 0.0, closed)
    if len0 / v_max <= T_budget:
        return 0.0, wp0
    r_lo, r_hi = 0.0, float(_pairwise(centers).max())
    wp_hi, _ = optimize_waypoints_fixed_order(centers, order, r_hi, closed)
    while r_hi - r_lo > eps_r:
        mid = 0.5 * (r_lo + r_hi)
        wp, length = optimize_waypoints_fixed_order(centers, order, mid, closed)
        if length / v_max <= T_budget:
            r_hi, wp_hi = mid, wp
        else:
            r_lo = mid
    return r_hi, wp_hi


# ---------------------------------------------------------------------------
# hover allocation and sampled trajectories


def hover_allocation(scenario: Scenario, T: float, travel_time: float,
                     mode: str = "periodic") -> np.ndarray:
    """Split the non-travel time across users, proportional to the hover time
    each would need to meet its demand alone while parked at its zenith.

    For one-time mode the demand is the throughput divided by T, which makes
    the weights independent of T.
    """
    if T < travel_time:
        raise ValueError("T must cover the travel time; use the disk-radius "
                         "construction instead")
    B = scenario.radio.bandwidth_hz
    up_zen = np.array([scenario.zenith_rate_bps_hz(u.uplink_power_w)
                       for u in scenario.sources])
    dn_zen = np.full(scenario.n_dests,
                     scenario.zenith_rate_bps_hz(scenario.radio.uav_power_w))
    zen_bps = np.concatenate([up_zen, dn_zen]) * B
    if mode == "periodic":
        demand = scenario.rate_requirements() * T
    elif mode == "onetime":
        demand = scenario.throughput_requirements()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    t_needed = demand / zen_bps
    total = t_needed.sum()
    if total <= 0:
        return np.zeros(len(t_needed))
    return t_needed * ((T - travel_time) / total)


@dataclass(frozen=True)
class RouteDesign:
    """Geometry of an initial trajectory before time sampling."""

    scheme: str                 # tsp | pdp | circle
    case: str                   # hover | disks | circle
    tour: Tour | None
    waypoints: np.ndarray       # (n, 2) visit targets in center-index space
    r_star: float | None
    hover_s: np.ndarray         # per-user hover seconds (center-index space)
    travel_time: float


def _scenario_pairs(scenario: Scenario) -> tuple[PrecedencePair, ...]:
    U = scenario.n_sources
    return tuple(PrecedencePair(source_index=k, destination_index=U + k)
                 for k in range(scenario.n_relay_pairs))


def plan_route(scenario: Scenario, mode: str, T: float, scheme: str | None = None,
               ) -> RouteDesign:
    """Choose the visiting geometry for a sampled initial trajectory.

    With enough time the route visits every user and hovers; otherwise a disk
    radius is bisected until the route through the disks fits the budget.
    """
    if mode not in ("periodic", "onetime"):
        raise ValueError(f"unknown mode {mode!r}")
    closed = mode == "periodic"
    if scheme is None:
        scheme = "tsp" if closed else "pdp"
    if scheme == "pdp" and mode == "periodic":
        warnings.warn("pdp initialization is only meaningful for one-time mode; "
                      "using tsp", stacklevel=2)
        scheme = "tsp"
    pts = scenario.all_positions
    if scheme == "circle":
        raise ValueError("circle scheme has no route geometry; sample it directly")
    if len(pts) == 1:
        tour = Tour(order=(0,), length=0.0, closed=closed, exact=True)
    elif scheme == "pdp":
        tour = solve_pdp(pts, _scenario_pairs(scenario))
    elif scheme == "tsp":
        tour = solve_tsp(pts, closed)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    v = scenario.radio.v_max_mps
    t_route = tour.length / v
    if T >= t_route - 1e-9:
        hover = hover_allocation(scenario, T, min(t_route, T), mode)
        return RouteDesign(scheme=scheme, case="hover", tour=tour,
                           waypoints=pts.copy(), r_star=None, hover_s=hover,
                           travel_time=t_route)
    r_star, wps = radius_bisection(pts, tour.order, T, v, closed)
    return RouteDesign(scheme=scheme, case="disks", tour=tour,
                       waypoints=wps.points, r_star=r_star,
                       hover_s=np.zeros(len(pts)),
                       travel_time=min(T, tour_length(wps.points, tour.order, closed) / v))


def _largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """Integer apportionment of `total` proportional to nonnegative shares."""
    if total <= 0 or shares.sum() <= 0:
        return np.zeros(len(shares), dtype=int)
    quota = shares / shares.sum() * total
    base = np.floor(quota).astype(int)
    rem = total - int(base.sum())
    if rem > 0:
        frac = quota - base
        top = np.lexsort((np.arange(len(shares)), -frac))[:rem]
        base[top] += 1
    return base


def _sample_polyline(vertices: np.ndarray, n_gaps: int, closed: bool) -> np.ndarray:
    """n_gaps+1 points equally spaced in arc length along the polyline."""
    verts = np.vstack([vertices, vertices[:1]]) if closed else vertices
    seg = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    L = float(seg.sum())
    if L <= 0:
        return np.tile(verts[0], (n_gaps + 1, 1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, L, n_gaps + 1)
    out = np.empty((n_gaps + 1, 2))
    for i, t in enumerate(targets):
        j = min(np.searchsorted(s, t, side="right") - 1, len(seg) - 1)
        w = 0.0 if seg[j] <= 0 else (t - s[j]) / seg[j]
        out[i] = verts[j] * (1 - w) + verts[j + 1] * w
    if closed:
        out[-1] = out[0]
    return out


def slot_count(T: float, dt: float) -> int:
    """Number of trajectory samples covering a horizon of duration T."""
    return max(2, int(round(T / dt)) + 1)


def build_initial_trajectory(scenario: Scenario, mode: str, T: float,
                             dt: float = 1.0, scheme: str | None = None) -> np.ndarray:
    """Sampled initial trajectory honoring the per-step speed limit exactly.

    Visit-every-user case: legs run at the maximum speed, hover time is split
    per user and rounded to whole slots by largest-remainder apportionment.
    Tight-budget case: the route through bisected disks is traversed at
    uniform speed. Periodic trajectories close exactly (first sample equals
    the last).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if scheme == "circle":
        return circle_trajectory(scenario, mode, T, dt)
    n_pts = slot_count(T, dt)
    gaps = n_pts - 1
    T_eff = gaps * dt
    design = plan_route(scenario, mode, T_eff, scheme)
    closed = mode == "periodic"
    v = scenario.radio.v_max_mps
    d_max = v * dt
    order = list(design.tour.order)
    way = design.waypoints[order]
    if design.case == "disks":
        return _sample_polyline(way, gaps, closed)

    legs = []
    n = len(way)
    leg_count = n if closed else n - 1
    for i in range(leg_count):
        a, b = way[i], way[(i + 1) % n]
        legs.append(max(1, math.ceil(float(np.linalg.norm(b - a)) / d_max - 1e-12)))
    hover_total = gaps - sum(legs)
    if hover_total < 0:
        return _sample_polyline(way, gaps, closed)
    hover_slots = _largest_remainder(design.hover_s[order], hover_total)

    pts = [way[0]]
    for i in range(n):
        for _ in range(hover_slots[i]):
            pts.append(way[i])
        if i < leg_count:
            a, b = way[i], way[(i + 1) % n]
            for s in range(1, legs[i] + 1):
                pts.append(a + (b - a) * (s / legs[i]))
    q = np.array(pts)
    if closed:
        q[-1] = q[0]
    assert len(q) == n_pts, (len(q), n_pts)
    return q


def circle_trajectory(scenario: Scenario, mode: str, T: float, dt: float = 1.0,
                      ) -> np.ndarray:
    """Benchmark initializer: a circle around the user centroid.

    Radius is half the bounding-box diagonal, capped so one revolution fits
    in the horizon at maximum speed.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    pts = scenario.all_positions
    center = pts.mean(axis=0)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    n_pts = slot_count(T, dt)
    gaps = n_pts - 1
    T_eff = gaps * dt
    radius = min(0.5 * diag, scenario.radio.v_max_mps * T_eff / (2 * math.pi))
    ang = 2 * math.pi * np.arange(n_pts) / gaps
    q = center[None, :] + radius * np.c_[np.cos(ang), np.sin(ang)]
    if mode == "periodic":
        q[-1] = q[0]
    return q
