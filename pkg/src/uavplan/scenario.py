"""Problem instances: ground users, radio parameters, and per-flow demands.

A scenario file is a YAML document with three sections::

    radio:
      altitude_m: 50.0
      v_max_mps: 50.0
      bandwidth_hz: 1.0e7
      noise_psd_dbm_hz: -169        # or noise_psd_w_hz (linear)
      ref_gain_db: -50              # or ref_gain (linear, at 1 m)
      uav_power_w: 0.01             # or uav_power_dbm
    users:
      - {id: 1, position_m: [x, y], role: relay_source, pair: 1,
         uplink_power_w: 0.01}
      - {id: 2, position_m: [x, y], role: relay_destination, pair: 1}
    requirements:
      rate_bps: 2.0e6               # scalar, or {user_id: value} map
      throughput_bits: 3.0e8        # scalar, or map; at least one section key

Distances are meters, rates bits/second, throughputs bits, powers watts.
dB/dBm variants are accepted on input; linear values are canonical
internally and on save.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

GAMMA0_RECOMPUTE_RTOL = 1e-12


class ScenarioError(ValueError):
    """Scenario file violates a documented invariant."""


class ScenarioParseError(ScenarioError):
    """Scenario file is malformed (not parseable against the schema)."""


class Role(str, Enum):
    RELAY_SOURCE = "relay_source"
    RELAY_DESTINATION = "relay_destination"
    UPLINK_SOURCE = "uplink_source"
    DOWNLINK_DESTINATION = "downlink_destination"

    @property
    def is_source(self) -> bool:
        return self in (Role.RELAY_SOURCE, Role.UPLINK_SOURCE)

    @property
    def is_relay(self) -> bool:
        return self in (Role.RELAY_SOURCE, Role.RELAY_DESTINATION)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class RadioParams:
    """Link-budget constants shared by every flow."""

    altitude_m: float
    v_max_mps: float
    bandwidth_hz: float
    noise_psd_w_hz: float
    ref_gain: float          # linear power gain at the 1 m reference distance
    uav_power_w: float       # total downlink transmit power budget

    def __post_init__(self):
        for name in ("altitude_m", "v_max_mps", "bandwidth_hz",
                     "noise_psd_w_hz", "ref_gain", "uav_power_w"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ScenarioError(f"radio.{name} must be strictly positive, got {v!r}")

    @property
    def gamma0(self) -> float:
        """Reference SNR at 1 m: ref_gain / (bandwidth * noise PSD)."""
        g = self.ref_gain / (self.bandwidth_hz * self.noise_psd_w_hz)
        if not (g > 0):
            raise ScenarioError("derived reference SNR gamma0 must be strictly positive")
        return g


@dataclass(frozen=True)
class GroundUser:
    id: int
    position: tuple[float, float]
    role: Role
    uplink_power_w: float | None = None
    pair: int | None = None

    def __post_init__(self):
        if self.role.is_source:
            if self.uplink_power_w is None or not self.uplink_power_w > 0:
                raise ScenarioError(
                    f"user {self.id}: uplink_power_w must be > 0 for role {self.role.value}")
        elif self.uplink_power_w is not None:
            raise ScenarioError(
                f"user {self.id}: uplink_power_w is only valid for source roles")
        if self.role.is_relay:
            if self.pair is None:
                raise ScenarioError(f"user {self.id}: relay role requires a pair id")
        elif self.pair is not None:
            raise ScenarioError(f"user {self.id}: pair id is only valid for relay roles")


@dataclass(frozen=True)
class Scenario:
    """Validated, immutable problem instance.

    Flow indexing follows the source set U (relay sources first, then
    uplink-only sources) and destination set V (relay destinations first,
    then downlink-only destinations); relay pair k is (U[k], V[k]).
    """

    radio: RadioParams
    users: tuple[GroundUser, ...]
    rate_bps: dict[int, float] | None = None          # per user id (periodic mode)
    throughput_bits: dict[int, float] | None = None   # per user id (one-time mode)

    # derived, populated in __post_init__
    sources: tuple[GroundUser, ...] = field(init=False, repr=False)
    dests: tuple[GroundUser, ...] = field(init=False, repr=False)
    n_relay_pairs: int = field(init=False)

    def __post_init__(self):
        ids = [u.id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ScenarioError("user ids must be unique")
        if not self.users:
            raise ScenarioError("scenario has no users")

        pairs: dict[int, dict[Role, GroundUser]] = {}
        for u in self.users:
            if u.role.is_relay:
                slot = pairs.setdefault(u.pair, {})
                if u.role in slot:
                    raise ScenarioError(
                        f"pair {u.pair}: duplicate {u.role.value} (each pair id must "
                        "occur exactly twice, one source and one destination)")
                slot[u.role] = u
        for pid, slot in pairs.items():
            missing = {Role.RELAY_SOURCE, Role.RELAY_DESTINATION} - set(slot)
            if missing:
                raise ScenarioError(
                    f"pair {pid}: missing {sorted(r.value for r in missing)[0]}")

        relay_ids = sorted(pairs)
        rs = [pairs[k][Role.RELAY_SOURCE] for k in relay_ids]
        rd = [pairs[k][Role.RELAY_DESTINATION] for k in relay_ids]
        ul = sorted((u for u in self.users if u.role == Role.UPLINK_SOURCE),
                    key=lambda u: u.id)
        dl = sorted((u for u in self.users if u.role == Role.DOWNLINK_DESTINATION),
                    key=lambda u: u.id)
        object.__setattr__(self, "sources", tuple(rs + ul))
        object.__setattr__(self, "dests", tuple(rd + dl))
        object.__setattr__(self, "n_relay_pairs", len(relay_ids))

        if len(self.users) != len(ul) + len(dl) + 2 * len(relay_ids):
            raise ScenarioError("every user must carry exactly one flow role")

        seen = set()
        for u in self.users:
            if u.position in seen:
                warnings.warn(
                    f"position {u.position} is used by more than one user",
                    stacklevel=2)
            seen.add(u.position)

        if self.rate_bps is None and self.throughput_bits is None:
            raise ScenarioError("requirements must give rate_bps or throughput_bits")
        for name, req in (("rate_bps", self.rate_bps),
                          ("throughput_bits", self.throughput_bits)):
            if req is None:
                continue
            for uid, val in req.items():
                if uid not in ids:
                    raise ScenarioError(f"requirements.{name}: unknown user id {uid}")
                if not val > 0:
                    raise ScenarioError(f"requirements.{name}: user {uid} needs a "
                                        f"strictly positive value, got {val}")
            missing = [u.id for u in self.users if u.id not in req]
            if missing:
                raise ScenarioError(f"requirements.{name}: missing user ids {missing}")
            for k in range(self.n_relay_pairs):
                s, d = self.sources[k], self.dests[k]
                if req[s.id] != req[d.id]:
                    raise ScenarioError(
                        f"requirements.{name}: relay pair {s.pair} must balance its "
                        f"uplink and downlink demand ({req[s.id]} != {req[d.id]})")

        # derived quantity sanity
        _ = self.radio.gamma0

    # counts -----------------------------------------------------------
    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_dests(self) -> int:
        return len(self.dests)

    @property
    def n_uplink_only(self) -> int:
        return self.n_sources - self.n_relay_pairs

    @property
    def n_downlink_only(self) -> int:
        return self.n_dests - self.n_relay_pairs

    # geometry / parameters as arrays -----------------------------------
    @property
    def source_positions(self) -> np.ndarray:
        a = np.array([u.position for u in self.sources], dtype=float).reshape(-1, 2)
        a.setflags(write=False)
        return a

    @property
    def dest_positions(self) -> np.ndarray:
        a = np.array([u.position for u in self.dests], dtype=float).reshape(-1, 2)
        a.setflags(write=False)
        return a

    @property
    def all_positions(self) -> np.ndarray:
        """Positions of the combined visit set: sources then destinations."""
        a = np.vstack([self.source_positions, self.dest_positions]) \
            if self.users else np.zeros((0, 2))
        a.setflags(write=False)
        return a

    @property
    def uplink_powers_w(self) -> np.ndarray:
        a = np.array([u.uplink_power_w for u in self.sources], dtype=float)
        a.setflags(write=False)
        return a

    def _req_array(self, req: dict[int, float] | None, which: str) -> np.ndarray:
        if req is None:
            raise ScenarioError(f"scenario carries no {which} requirements")
        vals = [req[u.id] for u in self.sources] + [req[u.id] for u in self.dests]
        a = np.array(vals, dtype=float)
        a.setflags(write=False)
        return a

    def rate_requirements(self) -> np.ndarray:
        """Per-flow average-rate demands (bps), source flows then destination flows."""
        return self._req_array(self.rate_bps, "periodic (rate)")

    def throughput_requirements(self) -> np.ndarray:
        """Per-flow throughput demands (bits), source flows then destination flows."""
        return self._req_array(self.throughput_bits, "one-time (throughput)")

    @property
    def has_rate_requirements(self) -> bool:
        return self.rate_bps is not None

    @property
    def has_throughput_requirements(self) -> bool:
        return self.throughput_bits is not None

    def zenith_rate_bps_hz(self, power_w: float) -> float:
        """Best-case spectral efficiency directly above a user at this altitude."""
        g = self.radio.gamma0 / self.radio.altitude_m ** 2
        return math.log2(1.0 + power_w * g)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        users = []
        for u in self.users:
            d = {"id": u.id, "position_m": [u.position[0], u.position[1]],
                 "role": u.role.value}
            if u.uplink_power_w is not None:
                d["uplink_power_w"] = u.uplink_power_w
            if u.pair is not None:
                d["pair"] = u.pair
            users.append(d)
        req: dict = {}
        if self.rate_bps is not None:
            req["rate_bps"] = dict(sorted(self.rate_bps.items()))
        if self.throughput_bits is not None:
            req["throughput_bits"] = dict(sorted(self.throughput_bits.items()))
        return {
            "radio": {
                "altitude_m": self.radio.altitude_m,
                "v_max_mps": self.radio.v_max_mps,
                "bandwidth_hz": self.radio.bandwidth_hz,
                "noise_psd_w_hz": self.radio.noise_psd_w_hz,
                "ref_gain": self.radio.ref_gain,
                "uav_power_w": self.radio.uav_power_w,
            },
            "users": users,
            "requirements": req,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _exclusive(section: dict, linear_key: str, db_key: str, convert, where: str) -> float:
    has_lin, has_db = linear_key in section, db_key in section
    if has_lin == has_db:
        raise ScenarioParseError(
            f"{where}: give exactly one of {linear_key!r} or {db_key!r}")
    return float(section[linear_key]) if has_lin else convert(float(section[db_key]))


def _parse_radio(section) -> RadioParams:
    if not isinstance(section, dict):
        raise ScenarioParseError("radio section must be a mapping")
    known = {"altitude_m", "v_max_mps", "bandwidth_hz", "noise_psd_w_hz",
             "noise_psd_dbm_hz", "ref_gain", "ref_gain_db", "uav_power_w",
             "uav_power_dbm"}
    unknown = set(section) - known
    if unknown:
        raise ScenarioParseError(f"radio: unknown keys {sorted(unknown)}")
    try:
        return RadioParams(
            altitude_m=float(section["altitude_m"]),
            v_max_mps=float(section["v_max_mps"]),
            bandwidth_hz=float(section["bandwidth_hz"]),
            noise_psd_w_hz=_exclusive(section, "noise_psd_w_hz", "noise_psd_dbm_hz",
                                      dbm_to_watts, "radio"),
            ref_gain=_exclusive(section, "ref_gain", "ref_gain_db",
                                db_to_linear, "radio"),
            uav_power_w=_exclusive(section, "uav_power_w", "uav_power_dbm",
                                   dbm_to_watts, "radio"),
        )
    except KeyError as e:
        raise ScenarioParseError(f"radio: missing key {e.args[0]!r}") from None


def _parse_user(entry) -> GroundUser:
    if not isinstance(entry, dict):
        raise ScenarioParseError("each users[] entry must be a mapping")
    try:
        uid = int(entry["id"])
        pos = entry["position_m"]
        role = Role(entry["role"])
    except KeyError as e:
        raise ScenarioParseError(f"users[]: missing key {e.args[0]!r}") from None
    except ValueError:
        raise ScenarioParseError(
            f"users[]: role must be one of {[r.value for r in Role]}") from None
    if (not isinstance(pos, (list, tuple))) or len(pos) != 2:
        raise ScenarioParseError(f"user {uid}: position_m must be [x, y] in meters")
    power = None
    if "uplink_power_w" in entry or "uplink_power_dbm" in entry:
        power = _exclusive(entry, "uplink_power_w", "uplink_power_dbm",
                           dbm_to_watts, f"user {uid}")
    return GroundUser(id=uid, position=(float(pos[0]), float(pos[1])), role=role,
                      uplink_power_w=power,
                      pair=int(entry["pair"]) if "pair" in entry else None)


def _parse_requirement(section, key: str, user_ids: list[int]) -> dict[int, float] | None:
    if key not in section:
        return None
    spec = section[key]
    if isinstance(spec, dict):
        return {int(k): float(v) for k, v in spec.items()}
    return {uid: float(spec) for uid in user_ids}


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a mapping")
    missing = {"radio", "users", "requirements"} - set(doc)
    if missing:
        raise ScenarioParseError(f"missing sections: {sorted(missing)}")
    radio = _parse_radio(doc["radio"])
    if not isinstance(doc["users"], list):
        raise ScenarioParseError("users section must be a list")
    users = tuple(_parse_user(e) for e in doc["users"])
    req = doc["requirements"]
    if not isinstance(req, dict):
        raise ScenarioParseError("requirements section must be a mapping")
    ids = [u.id for u in users]
    return Scenario(
        radio=radio,
        users=users,
        rate_bps=_parse_requirement(req, "rate_bps", ids),
        throughput_bits=_parse_requirement(req, "throughput_bits", ids),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file.

    Raises ScenarioParseError for malformed files and ScenarioError (naming
    the violated invariant) for schema-valid but inconsistent instances.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioParseError(f"scenario file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioParseError(f"invalid YAML in {path}: {e}") from None
    return scenario_from_dict(doc)


DEFAULT_RADIO = RadioParams(
    altitude_m=50.0,
    v_max_mps=50.0,
    bandwidth_hz=1e7,
    noise_psd_w_hz=dbm_to_watts(-169.0),
    ref_gain=db_to_linear(-50.0),
    uav_power_w=0.01,
)
