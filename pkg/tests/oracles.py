"""Independent reference implementations used only by tests.

Everything here is deliberately brute force (enumeration, grids, first-order
ascent, finite differences) and shares no solution path with the package
code it checks.
"""
import itertools
import math

import numpy as np

from uavplan.scenario import Scenario


# ---------------------------------------------------------------------------
# routing


def perm_length(points, order, closed):
    pts = np.asarray(points, dtype=float)
    total = 0.0
    for a, b in zip(order, order[1:]):
        total += math.dist(pts[a], pts[b])
    if closed:
        total += math.dist(pts[order[-1]], pts[order[0]])
    return total


def brute_tsp(points, closed):
    """Factorial enumeration of all visiting orders."""
    n = len(points)
    best = math.inf
    best_order = None
    if closed:
        heads = [0]
        tails = itertools.permutations(range(1, n))
    else:
        heads = [None]
        tails = itertools.permutations(range(n))
    for head in heads:
        for tail in tails:
            order = ((head,) + tail) if head is not None else tail
            length = perm_length(points, order, closed)
            if length < best:
                best, best_order = length, order
    return best, best_order


def brute_pdp(points, pairs):
    """Enumeration filtered to precedence-feasible open routes."""
    n = len(points)
    best = math.inf
    best_order = None
    for order in itertools.permutations(range(n)):
        pos = {v: i for i, v in enumerate(order)}
        if any(pos[p.source_index] >= pos[p.destination_index] for p in pairs):
            continue
        length = perm_length(points, order, False)
        if length < best:
            best, best_order = length, order
    return best, best_order


def grid_cd_waypoints(centers, order, r, closed, step=5.0, passes=200):
    """Waypoint optimization by per-disk grid enumeration (coordinate descent
    where each update scans a square lattice clipped to the disk)."""
    centers = np.asarray(centers, dtype=float)
    n = len(order)
    offsets = []
    k = int(math.ceil(r / step))
    for ix in range(-k, k + 1):
        for iy in range(-k, k + 1):
            off = np.array([ix * step, iy * step])
            if np.linalg.norm(off) <= r:
                offsets.append(off)
    offsets = np.array(offsets)
    g = centers[list(order)].copy()
    e = centers[list(order)]

    def length_of(pts):
        total = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
        if closed:
            total += float(np.linalg.norm(pts[-1] - pts[0]))
        return total

    prev = math.inf
    for _ in range(passes):
        for t in range(n):
            cands = e[t] + offsets
            cost = np.zeros(len(cands))
            if closed or t > 0:
                cost += np.linalg.norm(cands - g[(t - 1) % n], axis=1)
            if closed or t < n - 1:
                cost += np.linalg.norm(cands - g[(t + 1) % n], axis=1)
            g[t] = cands[int(np.argmin(cost))]
        cur = length_of(g)
        if prev - cur < 1e-9:
            break
        prev = cur
    return length_of(g)


# ---------------------------------------------------------------------------
# exact rates (independent of the channel module)


def exact_rate(frac, power, gamma0, h, q, user):
    if frac <= 0:
        return 0.0
    d2 = (q[0] - user[0]) ** 2 + (q[1] - user[1]) ** 2
    return frac * math.log2(1.0 + power * gamma0 / (frac * (h * h + d2)))


def causal_delivery(up, down):
    """Maximal total delivery under prefix causality via greedy filling."""
    sent = 0.0
    got = 0.0
    total = 0.0
    for m in range(len(down)):
        got += up[m]
        r = min(down[m], got - sent)
        r = max(r, 0.0)
        sent += r
        total += r
    return total


# ---------------------------------------------------------------------------
# allocation oracles


def _rate_table(fracs, power, gamma0, h, q, user):
    d2 = (q[0] - user[0]) ** 2 + (q[1] - user[1]) ** 2
    c = power * gamma0 / (h * h + d2)
    out = np.zeros_like(fracs)
    m = fracs > 0
    out[m] = fracs[m] * np.log2(1.0 + c / fracs[m])
    return out


def _tensor_sum(tables):
    """Broadcast per-slot value vectors into the full grid tensor sum."""
    n = len(tables)
    total = None
    for d, tab in enumerate(tables):
        shape = [1] * n
        shape[d] = len(tab)
        piece = tab.reshape(shape)
        total = piece if total is None else total + piece
    return total


def grid_alloc_uplink_downlink(scenario: Scenario, q, resolution=0.01):
    """Exhaustive oracle for one uplink and one downlink flow (periodic).

    The downlink power has no cross-slot coupling and every rate increases in
    it, so it sits at the full budget; likewise no bandwidth is wasted, so
    beta = 1 - alpha. What remains is a grid over per-slot alpha, refined
    around the best coarse point (the objective is concave in the shares, so
    local refinement of a global coarse scan stays global).
    """
    radio = scenario.radio
    g0 = radio.ref_gain / (radio.bandwidth_hz * radio.noise_psd_w_hz)
    h = radio.altitude_m
    N = len(q)
    src = scenario.sources[0]
    dst = scenario.dests[0]
    req = scenario.rate_requirements()
    B = radio.bandwidth_hz

    def scan(grids):
        ups = [_rate_table(g, src.uplink_power_w, g0, h, q[n], src.position)
               for n, g in enumerate(grids)]
        dns = [_rate_table(1.0 - g, radio.uav_power_w, g0, h, q[n], dst.position)
               for n, g in enumerate(grids)]
        eta = np.minimum(_tensor_sum(ups) * (B / (N * req[0])),
                         _tensor_sum(dns) * (B / (N * req[1])))
        best = int(np.argmax(eta))
        idx = np.unravel_index(best, eta.shape)
        return float(eta[idx]), [g[i] for g, i in zip(grids, idx)]

    coarse = np.round(np.arange(0.0, 1.0 + 1e-12, 2 * resolution), 12)
    best, pt = scan([coarse] * N)
    grids = [np.clip(np.arange(a - 2 * resolution, a + 2 * resolution + 1e-12,
                               resolution), 0.0, 1.0) for a in pt]
    best2, pt2 = scan(grids)
    grids = [np.clip(np.arange(a - resolution, a + resolution + 1e-12,
                               resolution / 5), 0.0, 1.0) for a in pt2]
    best3, _ = scan(grids)
    return max(best, best2, best3)


def grid_alloc_single_relay(scenario: Scenario, q, dt, resolution=0.01):
    """Exhaustive oracle for one relay pair in one-time mode.

    Waste-freeness reductions as above. Delivery under causality equals the
    best over cut points c of (bits collected before c) + (delivery capacity
    after c), each a separable per-slot sum, which keeps the scan
    vectorizable. The first slot carries no countable downlink (so its whole
    band goes uplink) and the last no countable uplink (all downlink).
    """
    radio = scenario.radio
    g0 = radio.ref_gain / (radio.bandwidth_hz * radio.noise_psd_w_hz)
    h = radio.altitude_m
    N = len(q)
    src = scenario.sources[0]
    dst = scenario.dests[0]
    C = scenario.throughput_requirements()
    B = radio.bandwidth_hz
    free = list(range(1, N - 1))     # slots with a real uplink/downlink split

    def scan(grids):
        alpha = [None] * N
        alpha[0] = np.array([1.0])
        alpha[N - 1] = np.array([0.0])
        for d, n in enumerate(free):
            alpha[n] = grids[d]
        ups = [_rate_table(alpha[n], src.uplink_power_w, g0, h, q[n], src.position)
               for n in range(N - 1)]
        dns = [_rate_table(1.0 - alpha[n], radio.uav_power_w, g0, h, q[n],
                           dst.position) for n in range(1, N)]
        # reindex tables onto the free-variable axes
        def lift(tab, n):
            shape = [1] * len(free)
            if n in free:
                shape[free.index(n)] = len(tab)
                return tab.reshape(shape)
            return float(tab[0]) * np.ones(shape)

        up_lift = [lift(ups[m], m) for m in range(N - 1)]            # slot m+1
        dn_lift = [lift(dns[m], m + 1) for m in range(N - 1)]        # slot m+2
        up_total = up_lift[0]
        for t in up_lift[1:]:
            up_total = up_total + t
        delivery = None
        for cut in range(N):
            val = 0.0
            for m in range(cut):
                val = val + up_lift[m]
            for m in range(cut, N - 1):
                val = val + dn_lift[m]
            val = np.broadcast_to(np.asarray(val, dtype=float),
                                  up_total.shape)
            delivery = val if delivery is None else np.minimum(delivery, val)
        eta = np.minimum(up_total * (B * dt / C[0]), delivery * (B * dt / C[1]))
        best = int(np.argmax(eta))
        idx = np.unravel_index(best, eta.shape)
        return float(eta[idx]), [g[i] for g, i in zip(grids, idx)]

    coarse = np.round(np.arange(0.0, 1.0 + 1e-12, 2 * resolution), 12)
    best, pt = scan([coarse] * len(free))
    grids = [np.clip(np.arange(a - 2 * resolution, a + 2 * resolution + 1e-12,
                               resolution), 0.0, 1.0) for a in pt]
    best2, pt2 = scan(grids)
    grids = [np.clip(np.arange(a - resolution, a + resolution + 1e-12,
                               resolution / 5), 0.0, 1.0) for a in pt2]
    best3, _ = scan(grids)
    return max(best, best2, best3)


# ---------------------------------------------------------------------------
# trajectory oracle: projected supergradient ascent on the concave surrogate


def supergradient_traj_oracle(scenario: Scenario, mode, q_local, alpha, beta, p,
                              dt, n_starts=20, iters=4000, tol=1e-6, seed=0):
    """First-order ascent on the max-min surrogate objective.

    Assumes the speed constraint is slack at the optimum (callers pick
    generous budgets); periodic closure is enforced by aliasing the endpoint
    variables. Best result over random restarts.
    """
    from uavplan.channel import sca_coefficients

    radio = scenario.radio
    g0 = radio.ref_gain / (radio.bandwidth_hz * radio.noise_psd_w_hz)
    h = radio.altitude_m
    N = len(q_local)
    U, V = scenario.n_sources, scenario.n_dests
    K3 = scenario.n_relay_pairs
    B = radio.bandwidth_hz
    su = scenario.source_positions
    dv = scenario.dest_positions
    cu = sca_coefficients(q_local[None, :, :], su[:, None, :], alpha,
                          scenario.uplink_powers_w[:, None], g0, h)
    cv = sca_coefficients(q_local[None, :, :], dv[:, None, :], beta, p, g0, h)
    if mode == "periodic":
        weights = N * scenario.rate_requirements() / B
    else:
        weights = scenario.throughput_requirements() / (B * dt)

    def surrogate(q):
        d2u = np.sum((q[None, :, :] - su[:, None, :]) ** 2, axis=2)
        d2v = np.sum((q[None, :, :] - dv[:, None, :]) ** 2, axis=2)
        ru = cu.base_rate - cu.slope * (d2u - cu.ref_sq_dist)
        rv = cv.base_rate - cv.slope * (d2v - cv.ref_sq_dist)
        return ru, rv

    def value_and_grad(q):
        ru, rv = surrogate(q)
        vals = []
        grads = []
        for i in range(U):
            rng_n = slice(0, N - 1) if mode == "onetime" else slice(0, N)
            vals.append(ru[i, rng_n].sum() / weights[i])
            g = np.zeros((N, 2))
            g[rng_n] = -2.0 * cu.slope[i, rng_n, None] * (q[rng_n] - su[i]) / weights[i]
            grads.append(g)
        for j in range(V):
            rng_n = slice(1, N) if mode == "onetime" else slice(0, N)
            if mode == "onetime" and j < K3:
                up = ru[j, : N - 1]
                dn = rv[j, 1:]
                # delivered total = min over cut points of collected + residual caps
                cuts = np.concatenate([[0.0], np.cumsum(up)])
                resid = np.concatenate([np.cumsum(dn[::-1])[::-1], [0.0]])
                tot = cuts + resid
                c = int(np.argmin(tot))
                vals.append(tot[c] / weights[U + j])
                g = np.zeros((N, 2))
                g[: c] += -2.0 * cu.slope[j, :c, None] * (q[:c] - su[j])
                g[c + 1:] += -2.0 * cv.slope[j, c + 1:, None] * (q[c + 1:] - dv[j])
                grads.append(g / weights[U + j])
            else:
                vals.append(rv[j, rng_n].sum() / weights[U + j])
                g = np.zeros((N, 2))
                g[rng_n] = -2.0 * cv.slope[j, rng_n, None] * (q[rng_n] - dv[j]) / weights[U + j]
                grads.append(g)
        f = int(np.argmin(vals))
        return vals[f], grads[f]

    rng = np.random.default_rng(seed)
    span = max(np.ptp(np.vstack([su, dv])), 1.0)
    best_val = -math.inf
    for s in range(n_starts):
        q = q_local.copy() if s == 0 else \
            q_local + rng.normal(0.0, 0.2 * span, q_local.shape)
        if mode == "periodic":
            q[-1] = q[0]
        step0 = span * 0.5
        val, _ = value_and_grad(q)
        best_here = val
        q_best = q.copy()
        for t in range(iters):
            val, g = value_and_grad(q)
            if mode == "periodic":
                g[0] += g[-1]
                g[-1] = 0.0
            gn = float(np.linalg.norm(g))
            if gn < 1e-16:
                break
            step = step0 / math.sqrt(t + 1.0)
            q = q + step * g / gn
            if mode == "periodic":
                q[-1] = q[0]
            val2, _ = value_and_grad(q)
            if val2 > best_here:
                best_here = val2
                q_best = q.copy()
            if step / math.sqrt(t + 1.0) < tol and t > 100:
                break
        # polish with shrinking steps from the best point
        q = q_best.copy()
        step = span * 0.01
        while step > tol:
            val, g = value_and_grad(q)
            if mode == "periodic":
                g[0] += g[-1]
                g[-1] = 0.0
            gn = float(np.linalg.norm(g))
            if gn < 1e-16:
                break
            q_try = q + step * g / gn
            if mode == "periodic":
                q_try[-1] = q_try[0]
            val_try, _ = value_and_grad(q_try)
            if val_try > val:
                q = q_try
            else:
                step *= 0.5
        val, _ = value_and_grad(q)
        best_val = max(best_val, val)
    return best_val


# ---------------------------------------------------------------------------
# time stretching (feasibility-preserving horizon dilation)


def stretch_plan(plan, epsilon_s):
    """Dilate a periodic plan's clock by (T + eps)/T.

    The sampled positions and allocations are kept, only the slot length
    grows, which preserves every per-slot constraint (speed margins grow) and
    leaves the per-slot average rates untouched.
    """
    from uavplan.subproblems import DiscretePlan

    T = (plan.N - 1) * plan.delta_t
    factor = (T + epsilon_s) / T
    return DiscretePlan(N=plan.N, delta_t=plan.delta_t * factor,
                        q=plan.q.copy(), alpha=plan.alpha.copy(),
                        beta=plan.beta.copy(), p=plan.p.copy(), eta=plan.eta)


def finite_diff_grad(f, q, step=1e-3):
    g = np.zeros(2)
    for d in range(2):
        e = np.zeros(2)
        e[d] = step
        g[d] = (f(q + e) - f(q - e)) / (2 * step)
    return g
