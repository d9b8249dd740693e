"""Free-space LoS rate model and its concave trajectory surrogate.

All rates are normalized spectral efficiencies in bps/Hz; callers multiply
by the system bandwidth when assembling rate or throughput constraints.
Every function broadcasts over numpy arrays and returns a float when all
inputs are scalar.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG2E = np.log2(np.e)


def _maybe_float(out: np.ndarray, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return float(out)
    return out


def _sq_dist(q, user_pos) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    u = np.asarray(user_pos, dtype=float)
    return np.sum((q - u) ** 2, axis=-1)


def channel_to_noise(q, user_pos, gamma0: float, altitude: float):
    """Channel-power-to-noise ratio at horizontal UAV position ``q``.

    Equals gamma0 / (altitude^2 + squared horizontal distance); strictly
    positive and maximized directly above the user.
    """
    if altitude <= 0 or gamma0 <= 0:
        raise ValueError("altitude and gamma0 must be strictly positive")
    d2 = _sq_dist(q, user_pos)
    out = gamma0 / (altitude ** 2 + d2)
    return float(out) if np.ndim(out) == 0 else out


def rate(frac, power, ratio):
    """Spectral efficiency frac * log2(1 + power * ratio / frac) in bps/Hz.

    Continuously extended to exactly 0 at frac == 0 (the perspective-function
    limit). Concave in frac, and jointly concave in (frac, power).
    """
    f = np.asarray(frac, dtype=float)
    pg = np.asarray(power, dtype=float) * np.asarray(ratio, dtype=float)
    f, pg = np.broadcast_arrays(f, pg)
    out = np.zeros(f.shape)
    m = f > 0
    out[m] = f[m] * np.log2(1.0 + pg[m] / f[m])
    return _maybe_float(out, frac, power, ratio)


@dataclass(frozen=True)
class ScaCoefficients:
    """Per-sample coefficients of the concave rate under-estimator.

    The surrogate anchored at q_local is
        base_rate - slope * (||q - u||^2 - ref_sq_dist),
    with slope >= 0, so it is concave in q and tight at q == q_local.
    """

    base_rate: np.ndarray      # bps/Hz at the anchor point
    slope: np.ndarray          # per-m^2 decay coefficient
    ref_sq_dist: np.ndarray    # ||q_local - u||^2, m^2
    epsilon: np.ndarray        # power * gamma0 / frac (0 where frac == 0)


def sca_coefficients(q_local, user_pos, frac, power, gamma0: float,
                     altitude: float) -> ScaCoefficients:
    """First-order surrogate coefficients for given anchor trajectory samples.

    Samples with frac == 0 contribute a zero surrogate and zero slope.
    """
    d2 = _sq_dist(q_local, user_pos)
    f = np.asarray(frac, dtype=float)
    pw = np.asarray(power, dtype=float)
    d2, f, pw = np.broadcast_arrays(np.atleast_1d(d2), np.atleast_1d(f),
                                    np.atleast_1d(pw))
    h2 = altitude ** 2
    eps = np.zeros(d2.shape)
    base = np.zeros(d2.shape)
    slope = np.zeros(d2.shape)
    m = f > 0
    eps[m] = pw[m] * gamma0 / f[m]
    base[m] = f[m] * np.log2(1.0 + eps[m] / (h2 + d2[m]))
    slope[m] = f[m] * LOG2E * eps[m] / ((h2 + d2[m]) * (h2 + d2[m] + eps[m]))
    return ScaCoefficients(base_rate=base, slope=slope, ref_sq_dist=d2.copy(),
                           epsilon=eps)


def sca_lower_bound(q, q_local, user_pos, frac, power, gamma0: float,
                    altitude: float):
    """Concave global under-estimator of ``rate`` anchored at q_local.

    Lower-bounds the exact rate for every q, with equality (in value and
    gradient) at q == q_local. Returns 0 where frac == 0.
    """
    c = sca_coefficients(q_local, user_pos, frac, power, gamma0, altitude)
    d2 = np.atleast_1d(_sq_dist(q, user_pos))
    out = c.base_rate - c.slope * (d2 - c.ref_sq_dist)
    out = np.where(c.epsilon > 0, out, 0.0)
    shape = np.broadcast_shapes(np.shape(_sq_dist(q, user_pos)), np.shape(frac),
                                np.shape(power))
    if shape == ():
        return float(out[0] if out.shape else out)
    return out.reshape(shape)
