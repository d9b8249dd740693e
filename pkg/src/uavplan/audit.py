"""Independent plan auditor.

Recomputes every rate and constraint from scratch with plain ``math``
arithmetic, sharing no computation code with the solver or channel modules,
so a bug there cannot hide here. Used by the ``audit`` CLI command and by the
final-plan checks of the planners' callers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario

BANDWIDTH_SLACK = 1e-9
POWER_SLACK = 1e-9            # relative to the power budget
SPEED_SLACK = 1e-6            # meters
REQUIREMENT_SLACK = 1e-3      # relative
CAUSALITY_SLACK = 1e-6        # normalized rate units (bps/Hz x slots)


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[AuditCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}"
                 for c in self.checks]
        lines.append(f"VERDICT: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _spectral_efficiency(frac: float, power: float, gain_over_noise: float) -> float:
    if frac <= 0.0:
        return 0.0
    return frac * math.log2(1.0 + power * gain_over_noise / frac)


def audit_plan(scenario: Scenario, mode: str, dt: float, q: np.ndarray,
               alpha: np.ndarray, beta: np.ndarray, p: np.ndarray) -> AuditReport:
    """Re-derive all rates and verify every constraint and requirement."""
    checks: list[AuditCheck] = []
    q = np.asarray(q, dtype=float)
    N = len(q)
    U, V = scenario.n_sources, scenario.n_dests
    K3 = scenario.n_relay_pairs
    radio = scenario.radio
    g0 = radio.ref_gain / (radio.bandwidth_hz * radio.noise_psd_w_hz)
    h2 = radio.altitude_m ** 2

    def add(name, passed, detail):
        checks.append(AuditCheck(name=name, passed=bool(passed), detail=detail))

    shapes_ok = (q.shape == (N, 2) and alpha.shape == (U, N)
                 and beta.shape == (V, N) and p.shape == (V, N) and N >= 2)
    add("shapes", shapes_ok,
        f"N={N}, alpha{alpha.shape}, beta{beta.shape}, p{p.shape}")
    if not shapes_ok:
        return AuditReport(checks=tuple(checks))

    neg = min(alpha.min(initial=0.0), beta.min(initial=0.0), p.min(initial=0.0))
    add("nonnegative-allocation", neg >= -1e-12, f"most negative entry {neg:.3e}")

    worst, worst_n = 0.0, 0
    for n in range(N):
        s = float(alpha[:, n].sum() + beta[:, n].sum())
        if s - 1.0 > worst:
            worst, worst_n = s - 1.0, n
    add("bandwidth-per-slot", worst <= BANDWIDTH_SLACK,
        f"largest overshoot {worst:.3e} at slot {worst_n}")

    worst, worst_n = 0.0, 0
    for n in range(N):
        s = float(p[:, n].sum())
        over = s / radio.uav_power_w - 1.0
        if over > worst:
            worst, worst_n = over, n
    add("power-per-slot", worst <= POWER_SLACK,
        f"largest relative overshoot {worst:.3e} at slot {worst_n}")

    d_max = radio.v_max_mps * dt
    worst, worst_n = 0.0, 0
    for n in range(N - 1):
        step = math.dist(q[n], q[n + 1])
        if step - d_max > worst:
            worst, worst_n = step - d_max, n
    add("speed-per-step", worst <= SPEED_SLACK,
        f"largest overshoot {worst:.3e} m at step {worst_n}")

    if mode == "periodic":
        closed = bool(q[0, 0] == q[-1, 0] and q[0, 1] == q[-1, 1])
        add("periodic-closure", closed,
            f"endpoint gap {math.dist(q[0], q[-1]):.3e} m")

    # exact per-slot spectral efficiencies
    up = [[0.0] * N for _ in range(U)]
    dn = [[0.0] * N for _ in range(V)]
    for n in range(N):
        for i, user in enumerate(scenario.sources):
            d2 = (q[n, 0] - user.position[0]) ** 2 + (q[n, 1] - user.position[1]) ** 2
            up[i][n] = _spectral_efficiency(float(alpha[i, n]), user.uplink_power_w,
                                            g0 / (h2 + d2))
        for j, user in enumerate(scenario.dests):
            d2 = (q[n, 0] - user.position[0]) ** 2 + (q[n, 1] - user.position[1]) ** 2
            dn[j][n] = _spectral_efficiency(float(beta[j, n]), float(p[j, n]),
                                            g0 / (h2 + d2))

    B = radio.bandwidth_hz
    if mode == "periodic":
        req = scenario.rate_requirements()
        for f in range(U + V):
            series = up[f] if f < U else dn[f - U]
            achieved = B * sum(series) / N
            target = req[f]
            label = f"rate-source-{f}" if f < U else f"rate-dest-{f - U}"
            add(label, achieved >= target * (1.0 - REQUIREMENT_SLACK),
                f"{achieved:.6g} bps vs required {target:.6g} bps")
    elif mode == "onetime":
        req = scenario.throughput_requirements()
        for i in range(U):
            achieved = B * dt * sum(up[i][: N - 1])
            add(f"throughput-source-{i}",
                achieved >= req[i] * (1.0 - REQUIREMENT_SLACK),
                f"{achieved:.6g} bits vs required {req[i]:.6g} bits")
        for j in range(V):
            achieved = B * dt * sum(dn[j][1:])
            add(f"throughput-dest-{j}",
                achieved >= req[U + j] * (1.0 - REQUIREMENT_SLACK),
                f"{achieved:.6g} bits vs required {req[U + j]:.6g} bits")
        for k in range(K3):
            worst_slack, worst_n = math.inf, None
            collected = 0.0
            delivered = 0.0
            for n in range(1, N):
                collected += up[k][n - 1]
                delivered += dn[k][n]
                slack = collected - delivered
                if slack < worst_slack:
                    worst_slack, worst_n = slack, n
            add(f"causality-pair-{k}", worst_slack >= -CAUSALITY_SLACK,
                f"worst cumulative slack {worst_slack:.3e} at slot {worst_n}")
    else:
        add("mode", False, f"unknown mode {mode!r}")
    return AuditReport(checks=tuple(checks))
