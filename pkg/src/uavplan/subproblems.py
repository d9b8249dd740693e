"""Convex subproblems of the alternating planner.

Two subproblem families, each solved to global optimality by an interior-point
conic solver behind a cvxpy model:

* bandwidth/power allocation at a fixed trajectory (the per-slot rates are
  relative-entropy-cone representable), and
* trajectory updates at a fixed allocation, using the concave surrogate of
  the channel module (a second-order-cone program).

Compiled models are cached per problem shape and re-solved through cvxpy
parameters. One-time mode adds relay slack rates and the cumulative
information-causality constraints; uplink rate sums skip the final slot and
downlink sums skip the first.
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import channel
from .scenario import Scenario

LN2 = float(np.log(2.0))
FRAC_FLOOR = 1e-9        # solver-side lower bound keeping rates differentiable
FRAC_ZERO = 1e-6         # post-solve: fractions below this are zeroed
FEAS_TOL = 1e-6
POS_SCALE = 1000.0       # meters per internal length unit in trajectory models
SURR_SLACK = 1e-12       # accepted surrogate regression before trust retries

# CLARABEL is fast but stalls on heavily degenerate iterates (many exactly
# interchangeable zenith slots); SCS then finishes the job, warm-started
# across repeated fallbacks of the same compiled model. An iteration cap
# bounds the tail: a capped solve returns near-optimal values flagged
# inaccurate, which the callers re-evaluate exactly.
_SOLVER_CHAIN = (
    (cp.CLARABEL, {"min_switch_step_length": 1e-2}),
    (cp.SCS, {"eps": 1e-6, "max_iters": 30_000}),
    (cp.SCS, {"eps": 1e-4, "max_iters": 60_000}),
)


class SubproblemError(RuntimeError):
    """Every solver in the fallback chain failed."""


@dataclass(frozen=True)
class SolveReport:
    objective_eta: float
    iterations: int
    converged: bool
    max_constraint_violation: float


@dataclass
class DiscretePlan:
    """A sampled trajectory with its per-slot bandwidth and power allocation."""

    N: int
    delta_t: float
    q: np.ndarray        # (N, 2) meters
    alpha: np.ndarray    # (U, N) bandwidth fractions, source flows
    beta: np.ndarray     # (V, N) bandwidth fractions, destination flows
    p: np.ndarray        # (V, N) downlink transmit power, watts
    eta: float

    def validate(self, scenario: Scenario, mode: str) -> None:
        if self.q.shape != (self.N, 2):
            raise ValueError(f"q must have shape ({self.N}, 2)")
        band = self.alpha.sum(axis=0) + self.beta.sum(axis=0)
        n = int(np.argmax(band))
        if band[n] > 1.0 + 1e-9:
            raise ValueError(f"slot {n}: bandwidth fractions sum to {band[n]}")
        power = self.p.sum(axis=0)
        pv = scenario.radio.uav_power_w
        n = int(np.argmax(power))
        if power[n] > pv * (1.0 + 1e-9):
            raise ValueError(f"slot {n}: downlink power {power[n]} exceeds {pv}")
        if min(self.alpha.min(initial=0.0), self.beta.min(initial=0.0),
               self.p.min(initial=0.0)) < -1e-12:
            raise ValueError("allocation entries must be nonnegative")
        d_max = scenario.radio.v_max_mps * self.delta_t
        steps = np.linalg.norm(np.diff(self.q, axis=0), axis=1)
        if steps.size:
            n = int(np.argmax(steps))
            if steps[n] > d_max + 1e-6:
                raise ValueError(f"slot {n}: step {steps[n]:.6f} m exceeds "
                                 f"the per-slot limit {d_max:.6f} m")
        if mode == "periodic" and not np.array_equal(self.q[0], self.q[-1]):
            raise ValueError("periodic plans must start and end at the same point")


# ---------------------------------------------------------------------------
# exact evaluation


def channel_ratios(scenario: Scenario, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Channel-to-noise ratios, shape (U, N) for sources and (V, N) for dests."""
    g0, h = scenario.radio.gamma0, scenario.radio.altitude_m
    ru = channel.channel_to_noise(q[None, :, :], scenario.source_positions[:, None, :], g0, h)
    rv = channel.channel_to_noise(q[None, :, :], scenario.dest_positions[:, None, :], g0, h)
    return np.atleast_2d(ru), np.atleast_2d(rv)


def rate_matrices(scenario: Scenario, q: np.ndarray, alpha: np.ndarray,
                  beta: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-slot spectral efficiencies (bps/Hz) for every flow."""
    gam, rho = channel_ratios(scenario, q)
    pu = scenario.uplink_powers_w[:, None]
    ru = channel.rate(alpha, pu, gam) if alpha.size else np.zeros_like(alpha)
    rv = channel.rate(beta, p, rho) if beta.size else np.zeros_like(beta)
    return np.atleast_2d(ru), np.atleast_2d(rv)


def greedy_causal(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    """Forward-fill relay delivery rates under the cumulative causality cap.

    ``up[m]`` is the uplink rate of slot m+1 and ``down[m]`` the downlink rate
    cap of slot m+2. Greedy filling maximizes every cumulative prefix, hence
    also the total delivered amount.
    """
    budget = np.cumsum(up)
    out = np.zeros_like(down)
    sent = 0.0
    for m in range(len(down)):
        r = min(down[m], budget[m] - sent)
        r = max(r, 0.0)
        out[m] = r
        sent += r
    return out


@dataclass(frozen=True)
class PlanEvaluation:
    achieved: np.ndarray       # per flow: bps (periodic) or bits (one-time)
    targets: np.ndarray
    ratios: np.ndarray
    eta: float


def evaluate_plan(scenario: Scenario, mode: str, q: np.ndarray, alpha: np.ndarray,
                  beta: np.ndarray, p: np.ndarray, dt: float) -> PlanEvaluation:
    """Exact per-flow attainment and the min ratio against the requirements.

    One-time relay downlink credit is capped by information causality: only
    bits already collected from the source count as deliverable.
    """
    ru, rv = rate_matrices(scenario, q, alpha, beta, p)
    return _evaluate_from_rates(scenario, mode, ru, rv, dt)


def _evaluate_from_rates(scenario: Scenario, mode: str, ru: np.ndarray,
                         rv: np.ndarray, dt: float) -> PlanEvaluation:
    B = scenario.radio.bandwidth_hz
    K3 = scenario.n_relay_pairs
    N = ru.shape[1] if ru.size else rv.shape[1]
    if mode == "periodic":
        targets = scenario.rate_requirements()
        sums = np.concatenate([ru.sum(axis=1), rv.sum(axis=1)])
        achieved = sums * B / N
    elif mode == "onetime":
        targets = scenario.throughput_requirements()
        up = ru[:, :N - 1].sum(axis=1) if ru.size else np.zeros(0)
        dn = rv[:, 1:].sum(axis=1) if rv.size else np.zeros(0)
        for k in range(K3):
            dn[k] = greedy_causal(ru[k, :N - 1], rv[k, 1:]).sum()
        achieved = np.concatenate([up, dn]) * B * dt
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ratios = achieved / targets
    return PlanEvaluation(achieved=achieved, targets=targets, ratios=ratios,
                          eta=float(ratios.min()))


# ---------------------------------------------------------------------------
# compiled model cache


class _Compiled:
    def __init__(self, problem: cp.Problem, params: dict, vars: dict):
        self.problem = problem
        self.params = params
        self.vars = vars


_cache: OrderedDict[tuple, _Compiled] = OrderedDict()
_cache_lock = threading.RLock()
_CACHE_CAP = 12


def _cached(key, builder) -> _Compiled:
    model = _cache.get(key)
    if model is None:
        model = builder()
        _cache[key] = model
        while len(_cache) > _CACHE_CAP:
            _cache.popitem(last=False)
    else:
        _cache.move_to_end(key)
    return model


def _solve_chain(problem: cp.Problem) -> tuple[bool, int]:
    """Try the solver chain; returns (clean_optimum, iterations).

    Raises SubproblemError when no solver produced a usable point (variable
    values are left unset in that case, never stale).
    """
    last_exc = None
    for solver, opts in _SOLVER_CHAIN:
        try:
            problem.solve(solver=solver, **opts)
        except (cp.error.SolverError, cp.error.DCPError) as exc:
            last_exc = exc
            continue
        iters = getattr(problem.solver_stats, "num_iters", None) or 0
        if problem.status == cp.OPTIMAL:
            return True, int(iters)
        if problem.status == cp.OPTIMAL_INACCURATE:
            return False, int(iters)
    for var in problem.variables():
        var.value = None
    raise SubproblemError(f"all conic solvers failed: {last_exc}")


# ---------------------------------------------------------------------------
# allocation subproblems


def _build_alloc(U: int, V: int, K3: int, N: int, mode: str) -> _Compiled:
    alpha = cp.Variable((U, N)) if U else None
    beta = cp.Variable((V, N)) if V else None
    x = cp.Variable((V, N), nonneg=True) if V else None
    eta = cp.Variable()
    cu = cp.Parameter((U, N), nonneg=True) if U else None
    cv = cp.Parameter((V, N), nonneg=True) if V else None
    wu = cp.Parameter(U, pos=True) if U else None
    wv = cp.Parameter(V, pos=True) if V else None

    cons = []
    band = 0
    if U:
        cons.append(alpha >= FRAC_FLOOR)
        band = band + cp.sum(alpha, axis=0)
    if V:
        cons += [beta >= FRAC_FLOOR, cp.sum(x, axis=0) <= 1]
        band = band + cp.sum(beta, axis=0)
    cons.append(band <= 1)

    RU = -cp.rel_entr(alpha, alpha + cu) / LN2 if U else None
    RV = -cp.rel_entr(beta, beta + cp.multiply(cv, x)) / LN2 if V else None

    params = {"cu": cu, "cv": cv, "wu": wu, "wv": wv}
    vars = {"alpha": alpha, "beta": beta, "x": x, "eta": eta}
    if mode == "periodic":
        if U:
            cons.append(cp.sum(RU, axis=1) >= cp.multiply(eta, wu))
        if V:
            cons.append(cp.sum(RV, axis=1) >= cp.multiply(eta, wv))
    else:
        Rr = cp.Variable((K3, N - 1), nonneg=True) if K3 else None
        vars["Rr"] = Rr
        if U:
            cons.append(cp.sum(RU[:, :N - 1], axis=1) >= cp.multiply(eta, wu))
        if V > K3:
            cons.append(cp.sum(RV[K3:, 1:], axis=1) >= cp.multiply(eta, wv[K3:]))
        if K3:
            cons += [cp.sum(Rr, axis=1) >= cp.multiply(eta, wv[:K3]),
                     Rr <= RV[:K3, 1:],
                     cp.cumsum(RU[:K3, :N - 1] - Rr, axis=1) >= 0]
    return _Compiled(cp.Problem(cp.Maximize(eta), cons), params, vars)


def _alloc_common(scenario: Scenario, q: np.ndarray, mode: str, dt: float):
    q = np.asarray(q, dtype=float)
    N = len(q)
    if N < 2:
        raise ValueError("allocation needs at least 2 slots")
    U, V, K3 = scenario.n_sources, scenario.n_dests, scenario.n_relay_pairs
    B = scenario.radio.bandwidth_hz
    gam, rho = channel_ratios(scenario, q)
    if mode == "periodic":
        req = scenario.rate_requirements()
        scale = N * req / B
    else:
        req = scenario.throughput_requirements()
        scale = req / (B * dt)
    # normalizing by the first flow keeps the weights O(1) and makes a
    # uniform requirement rescaling leave the conic problem data unchanged
    ref = scale[0]
    with _cache_lock:
        model = _cached(("alloc", mode, U, V, K3, N), lambda: _build_alloc(U, V, K3, N, mode))
        pm = model.params
        if U:
            pm["cu"].value = scenario.uplink_powers_w[:, None] * gam
            pm["wu"].value = scale[:U] / ref
        if V:
            pm["cv"].value = scenario.radio.uav_power_w * rho
            pm["wv"].value = scale[U:] / ref
        ok, iters = _solve_chain(model.problem)
        vr = model.vars
        alpha = vr["alpha"].value.copy() if U else np.zeros((0, N))
        beta = vr["beta"].value.copy() if V else np.zeros((0, N))
        x = vr["x"].value.copy() if V else np.zeros((0, N))
    p = scenario.radio.uav_power_w * x
    return N, gam, rho, alpha, beta, p, ok, iters


def _clip_and_zero(scenario, alpha, beta, p):
    """Exact feasibility (scaling overfull slots down) and solver-floor cleanup."""
    alpha = np.clip(alpha, 0.0, None)
    beta = np.clip(beta, 0.0, None)
    p = np.clip(p, 0.0, None)
    alpha[alpha < FRAC_ZERO] = 0.0
    beta[beta < FRAC_ZERO] = 0.0
    band = alpha.sum(axis=0) + beta.sum(axis=0)
    fix = np.where(band > 1.0, 1.0 / np.maximum(band, 1.0), 1.0)
    alpha *= fix
    beta *= fix
    p[beta <= 0.0] = 0.0
    pv = scenario.radio.uav_power_w
    ps = p.sum(axis=0)
    p *= np.where(ps > pv, pv / np.maximum(ps, pv), 1.0)
    return alpha, beta, p


def _zero_wasted_slots(alpha, beta, p):
    """One-time rate sums skip the last uplink and first downlink slot."""
    if alpha.size:
        alpha[:, -1] = 0.0
    if beta.size:
        beta[:, 0] = 0.0
        p[:, 0] = 0.0
    return alpha, beta, p


def _redistribute(scenario, mode, alpha, beta, p):
    """Hand leftover bandwidth to flows proportionally to their requirements.

    Only flows whose rate actually counts in a slot are eligible there: in
    one-time mode the final slot carries no uplink and the first no downlink,
    and relay downlink flows are excluded everywhere since their delivery is
    pinned to the causality-limited slack afterwards.
    """
    U, V, K3 = scenario.n_sources, scenario.n_dests, scenario.n_relay_pairs
    N = alpha.shape[1] if alpha.size else beta.shape[1]
    req = scenario.rate_requirements() if mode == "periodic" \
        else scenario.throughput_requirements()
    wu = np.repeat(req[:U, None], N, axis=1)
    wv = np.repeat(req[U:, None], N, axis=1)
    if mode == "onetime":
        wv[:K3] = 0.0
        if U:
            wu[:, -1] = 0.0
        if V:
            wv[:, 0] = 0.0
    total = wu.sum(axis=0) + wv.sum(axis=0)
    ok = total > 0
    leftover = np.clip(1.0 - alpha.sum(axis=0) - beta.sum(axis=0), 0.0, None)
    leftover = np.where(ok, leftover, 0.0)
    share = leftover / np.where(ok, total, 1.0)
    if U:
        alpha += wu * share
    if V:
        beta += wv * share
    return alpha, beta, p


def _pin_relay_delivery(scenario, q, alpha, beta, p, dt):
    """Greedy causal delivery per relay pair; shrink power to make the
    per-slot delivery bound exactly active."""
    K3 = scenario.n_relay_pairs
    N = len(q)
    ru, rv = rate_matrices(scenario, q, alpha, beta, p)
    Rr = np.zeros((K3, N - 1))
    if not K3:
        return p, Rr
    _, rho = channel_ratios(scenario, q)
    for k in range(K3):
        r = greedy_causal(ru[k, :N - 1], rv[k, 1:])
        Rr[k] = r
        b = beta[k, 1:]
        pk = np.zeros(N - 1)
        m = (b > 0) & (r > 0)
        pk[m] = b[m] * (np.exp2(r[m] / b[m]) - 1.0) / rho[k, 1:][m]
        p[k, 1:] = np.minimum(pk, p[k, 1:])
        p[k, 0] = 0.0
    return p, Rr


def solve_alloc_periodic(scenario: Scenario, q: np.ndarray,
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, SolveReport]:
    """Max-min rate-ratio bandwidth and power allocation at a fixed trajectory."""
    N, gam, rho, alpha, beta, p, ok, iters = _alloc_common(scenario, q, "periodic", 0.0)
    alpha, beta, p = _clip_and_zero(scenario, alpha, beta, p)
    alpha, beta, p = _redistribute(scenario, "periodic", alpha, beta, p)
    ev = evaluate_plan(scenario, "periodic", np.asarray(q, dtype=float),
                       alpha, beta, p, 1.0)
    report = SolveReport(objective_eta=ev.eta, iterations=iters, converged=ok,
                         max_constraint_violation=_alloc_violation(scenario, alpha, beta, p))
    return alpha, beta, p, ev.eta, report


def solve_alloc_onetime(scenario: Scenario, q: np.ndarray, dt: float,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray,
                                   float, SolveReport]:
    """Max-min throughput-ratio allocation with relay information causality.

    Returns the per-slot relay delivery rates (slots 2..N) alongside the
    allocation; the returned powers make the delivery bound active wherever
    delivery is positive.
    """
    N, gam, rho, alpha, beta, p, ok, iters = _alloc_common(scenario, q, "onetime", dt)
    alpha, beta, p = _clip_and_zero(scenario, alpha, beta, p)
    alpha, beta, p = _zero_wasted_slots(alpha, beta, p)
    alpha, beta, p = _redistribute(scenario, "onetime", alpha, beta, p)
    p, Rr = _pin_relay_delivery(scenario, np.asarray(q, dtype=float), alpha, beta, p, dt)
    ev = evaluate_plan(scenario, "onetime", np.asarray(q, dtype=float),
                       alpha, beta, p, dt)
    report = SolveReport(objective_eta=ev.eta, iterations=iters, converged=ok,
                         max_constraint_violation=_alloc_violation(scenario, alpha, beta, p))
    return alpha, beta, p, Rr, ev.eta, report


def _alloc_violation(scenario, alpha, beta, p) -> float:
    band = alpha.sum(axis=0) + beta.sum(axis=0)
    pv = scenario.radio.uav_power_w
    viol = max(float(np.max(band - 1.0, initial=0.0)),
               float(np.max(p.sum(axis=0) / pv - 1.0, initial=0.0)))
    return max(viol, 0.0)


# ---------------------------------------------------------------------------
# trajectory subproblems


def _build_traj(U: int, V: int, K3: int, N: int, mode: str, trust: bool) -> _Compiled:
    q = cp.Variable((N, 2))
    eta = cp.Variable()
    tu = cp.Variable((U, N)) if U else None
    tv = cp.Variable((V, N)) if V else None
    su = cp.Parameter((U, 2)) if U else None
    s2u = cp.Parameter(U) if U else None
    dv = cp.Parameter((V, 2)) if V else None
    s2v = cp.Parameter(V) if V else None
    phiu = cp.Parameter((U, N), nonneg=True) if U else None
    phiv = cp.Parameter((V, N), nonneg=True) if V else None
    bpu = cp.Parameter((U, N)) if U else None   # per-slot constant surrogate part
    bpv = cp.Parameter((V, N)) if V else None
    wu = cp.Parameter(U, pos=True) if U else None
    wv = cp.Parameter(V, pos=True) if V else None
    dmax = cp.Parameter(nonneg=True)

    cons = [cp.norm(q[1:] - q[:-1], axis=1) <= dmax]
    if mode == "periodic":
        cons.append(q[0] == q[N - 1])
    params = {"su": su, "s2u": s2u, "dv": dv, "s2v": s2v, "phiu": phiu,
              "phiv": phiv, "bpu": bpu, "bpv": bpv, "wu": wu, "wv": wv,
              "dmax": dmax}
    vars = {"q": q, "eta": eta}
    if trust:
        ql = cp.Parameter((N, 2))
        rho_tr = cp.Parameter(nonneg=True)
        cons.append(cp.norm(q - ql, axis=1) <= rho_tr)
        params["ql"] = ql
        params["rho_tr"] = rho_tr

    sq = cp.sum(cp.square(q), axis=1)
    for t, pos, pos2, n_rows in ((tu, su, s2u, U), (tv, dv, s2v, V)):
        for i in range(n_rows):
            cons.append(t[i] >= sq - 2.0 * (q @ pos[i]) + pos2[i])

    SU = bpu - cp.multiply(phiu, tu) if U else None   # surrogate uplink rates
    SV = bpv - cp.multiply(phiv, tv) if V else None
    if mode == "periodic":
        if U:
            cons.append(cp.sum(SU, axis=1) >= cp.multiply(eta, wu))
        if V:
            cons.append(cp.sum(SV, axis=1) >= cp.multiply(eta, wv))
    else:
        Rr = cp.Variable((K3, N - 1), nonneg=True) if K3 else None
        vars["Rr"] = Rr
        if U:
            cons.append(cp.sum(SU, axis=1) >= cp.multiply(eta, wu))
        if V > K3:
            cons.append(cp.sum(SV[K3:], axis=1) >= cp.multiply(eta, wv[K3:]))
        if K3:
            cons += [cp.sum(Rr, axis=1) >= cp.multiply(eta, wv[:K3]),
                     Rr <= SV[:K3, 1:],
                     cp.cumsum(SU[:K3, :N - 1] - Rr, axis=1) >= 0]
    return _Compiled(cp.Problem(cp.Maximize(eta), cons), params, vars)


@dataclass
class _Surrogate:
    """Numpy-side copy of the surrogate data fed to the conic model."""

    base_u: np.ndarray
    phi_u: np.ndarray      # per m^2
    d2l_u: np.ndarray
    base_v: np.ndarray
    phi_v: np.ndarray
    d2l_v: np.ndarray

    def rates(self, scenario: Scenario, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # slope and base vanish together at zero-allocation slots, so the
        # surrogate is exactly 0 there without special-casing
        d2u = np.sum((q[None, :, :] - scenario.source_positions[:, None, :]) ** 2, axis=2)
        d2v = np.sum((q[None, :, :] - scenario.dest_positions[:, None, :]) ** 2, axis=2)
        ru = self.base_u - self.phi_u * (d2u - self.d2l_u)
        rv = self.base_v - self.phi_v * (d2v - self.d2l_v)
        return ru, rv


def _surrogate_data(scenario: Scenario, q_local: np.ndarray, alpha, beta, p) -> _Surrogate:
    g0, h = scenario.radio.gamma0, scenario.radio.altitude_m
    U, V = scenario.n_sources, scenario.n_dests
    N = len(q_local)
    if U:
        cu = channel.sca_coefficients(q_local[None, :, :],
                                      scenario.source_positions[:, None, :],
                                      alpha, scenario.uplink_powers_w[:, None], g0, h)
        bu, pu, du = cu.base_rate, cu.slope, cu.ref_sq_dist
    else:
        bu = pu = du = np.zeros((0, N))
    if V:
        cvx = channel.sca_coefficients(q_local[None, :, :],
                                       scenario.dest_positions[:, None, :],
                                       beta, p, g0, h)
        bv, pv, dvv = cvx.base_rate, cvx.slope, cvx.ref_sq_dist
    else:
        bv = pv = dvv = np.zeros((0, N))
    return _Surrogate(base_u=bu, phi_u=pu, d2l_u=du, base_v=bv, phi_v=pv, d2l_v=dvv)


def _surrogate_eta(scenario: Scenario, mode: str, surr: _Surrogate,
                   q: np.ndarray, dt: float) -> float:
    ru, rv = surr.rates(scenario, q)
    return _evaluate_from_rates(scenario, mode, ru, rv, dt).eta


def _mask_slots(mat: np.ndarray, mode: str, kind: str) -> np.ndarray:
    """Zero the slots a one-time rate sum does not count."""
    out = mat.copy()
    if mode == "onetime" and out.size:
        if kind == "up":
            out[:, -1] = 0.0
        else:
            out[:, 0] = 0.0
    return out


def _solve_traj(scenario: Scenario, mode: str, q_local: np.ndarray,
                alpha, beta, p, dt: float, rho_trust: float | None):
    q_local = np.asarray(q_local, dtype=float)
    N = len(q_local)
    if N < 2:
        raise ValueError("trajectory update needs at least 2 slots")
    U, V, K3 = scenario.n_sources, scenario.n_dests, scenario.n_relay_pairs
    B = scenario.radio.bandwidth_hz
    if mode == "periodic":
        scale = N * scenario.rate_requirements() / B
    else:
        scale = scenario.throughput_requirements() / (B * dt)
    ref = scale[0]     # weight normalization, see _alloc_common
    surr = _surrogate_data(scenario, q_local, alpha, beta, p)
    anchor_eta = _surrogate_eta(scenario, mode, surr, q_local, dt)
    d_max = scenario.radio.v_max_mps * dt

    L2 = POS_SCALE * POS_SCALE
    phiu = _mask_slots(surr.phi_u, mode, "up") * L2
    phiv = _mask_slots(surr.phi_v, mode, "dn") * L2
    bpu = _mask_slots(surr.base_u + surr.phi_u * surr.d2l_u, mode, "up")
    bpv = _mask_slots(surr.base_v + surr.phi_v * surr.d2l_v, mode, "dn")

    trust = rho_trust
    attempts = 0
    best_q = q_local
    best_eta = anchor_eta
    iters_total = 0
    clean = True
    while attempts < 4:
        attempts += 1
        with _cache_lock:
            key = ("traj", mode, U, V, K3, N, trust is not None)
            model = _cached(key, lambda: _build_traj(U, V, K3, N, mode, trust is not None))
            pm = model.params
            if U:
                pm["su"].value = scenario.source_positions / POS_SCALE
                pm["s2u"].value = np.sum((scenario.source_positions / POS_SCALE) ** 2, axis=1)
                pm["phiu"].value = phiu
                pm["bpu"].value = bpu
                pm["wu"].value = scale[:U] / ref
            if V:
                pm["dv"].value = scenario.dest_positions / POS_SCALE
                pm["s2v"].value = np.sum((scenario.dest_positions / POS_SCALE) ** 2, axis=1)
                pm["phiv"].value = phiv
                pm["bpv"].value = bpv
                pm["wv"].value = scale[U:] / ref
            pm["dmax"].value = d_max / POS_SCALE
            if trust is not None:
                pm["ql"].value = q_local / POS_SCALE
                pm["rho_tr"].value = trust / POS_SCALE
            try:
                ok, iters = _solve_chain(model.problem)
            except SubproblemError:
                ok, iters = False, 0
                model.vars["q"].value = None
            q_new = model.vars["q"].value
        iters_total += iters
        if q_new is None:
            clean = False
            trust = 2.0 * d_max if trust is None else 0.5 * trust
            continue
        q_new = q_new * POS_SCALE
        q_new = _repair_steps(q_new, d_max, mode)
        eta_new = _surrogate_eta(scenario, mode, surr, q_new, dt)
        if eta_new >= anchor_eta - SURR_SLACK * max(1.0, abs(anchor_eta)):
            if eta_new > best_eta:
                best_q, best_eta = q_new, eta_new
            clean = clean and ok
            break
        # surrogate regressed (solver tolerance artifact): shrink a trust region
        clean = False
        trust = 2.0 * d_max if trust is None else 0.5 * trust
    return best_q, best_eta, iters_total, clean


def _repair_steps(q: np.ndarray, d_max: float, mode: str) -> np.ndarray:
    """Exact periodic closure; clip hairline speed overshoots from solver slack."""
    q = q.copy()
    if mode == "periodic":
        q[-1] = q[0]
    for _ in range(3):
        steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
        bad = steps > d_max
        if not bad.any():
            break
        for n in np.flatnonzero(bad):
            a, b = q[n], q[n + 1]
            over = steps[n] - d_max
            if n + 1 < len(q) - 1 or mode != "periodic":
                q[n + 1] = b + (a - b) * min(1.0, over / steps[n] + 1e-12)
            else:
                q[n] = a + (b - a) * min(1.0, over / steps[n] + 1e-12)
    return q


def solve_traj_periodic(scenario: Scenario, q_local: np.ndarray, alpha, beta, p,
                        dt: float, rho_trust: float | None = None,
                        ) -> tuple[np.ndarray, float, SolveReport]:
    """One concave-surrogate trajectory update at a fixed allocation.

    The returned trajectory never scores below the anchor on the surrogate
    objective (a trust region shrinks on solver-noise regressions), so the
    outer descent is monotone.
    """
    q, surr_eta, iters, clean = _solve_traj(scenario, "periodic", q_local,
                                            alpha, beta, p, dt, rho_trust)
    ev = evaluate_plan(scenario, "periodic", q, alpha, beta, p, dt)
    report = SolveReport(objective_eta=ev.eta, iterations=iters, converged=clean,
                         max_constraint_violation=_traj_violation(scenario, q, dt, "periodic"))
    return q, ev.eta, report


def solve_traj_onetime(scenario: Scenario, q_local: np.ndarray, alpha, beta, p,
                       dt: float, rho_trust: float | None = None,
                       ) -> tuple[np.ndarray, np.ndarray, float, SolveReport]:
    """Trajectory update under throughput ratios and causality on surrogates."""
    q, surr_eta, iters, clean = _solve_traj(scenario, "onetime", q_local,
                                            alpha, beta, p, dt, rho_trust)
    ru, rv = rate_matrices(scenario, q, alpha, beta, p)
    N = len(q)
    Rr = np.zeros((scenario.n_relay_pairs, N - 1))
    for k in range(scenario.n_relay_pairs):
        Rr[k] = greedy_causal(ru[k, :N - 1], rv[k, 1:])
    ev = evaluate_plan(scenario, "onetime", q, alpha, beta, p, dt)
    report = SolveReport(objective_eta=ev.eta, iterations=iters, converged=clean,
                         max_constraint_violation=_traj_violation(scenario, q, dt, "onetime"))
    return q, Rr, ev.eta, report


def _traj_violation(scenario: Scenario, q: np.ndarray, dt: float, mode: str) -> float:
    d_max = scenario.radio.v_max_mps * dt
    steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
    viol = float(np.max(steps - d_max, initial=0.0)) / max(d_max, 1e-12)
    if mode == "periodic":
        viol = max(viol, float(np.linalg.norm(q[0] - q[-1])) / max(d_max, 1e-12))
    return max(viol, 0.0)
