"""Scenario definitions, validation and JSON persistence.

All quantities are SI (m, s, rad, kg, N). Vectors use the state/control
layouts of :mod:`losguide.dynamics`. In files, an unbounded state or control
limit and a free terminal-state component are written as ``null``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from losguide import attitude
from losguide.config import Tolerances, Weights
from losguide.dynamics import N_CONTROL, N_STATE, VehicleParams
from losguide.los import Keypoint, ViewCone, keypoint_position, los_residual_full

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OBJECTIVES = ("min-time", "min-fuel")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    """Square window the vehicle must pass at an assigned node.

    ``axis1``/``axis2`` span the gate plane and ``normal`` is orthogonal to
    both. ``node`` pins the gate to a grid index; when None the scenario
    spreads its gates uniformly over the grid.
    """

    center: tuple
    normal: tuple = (1.0, 0.0, 0.0)
    axis1: tuple = (0.0, 1.0, 0.0)
    axis2: tuple = (0.0, 0.0, 1.0)
    half_width: float = 1.0
    node: int | None = None

    def __post_init__(self):
        n, a1, a2 = (np.asarray(v, dtype=float) for v in (self.normal, self.axis1, self.axis2))
        M = np.stack([n, a1, a2])
        if not np.allclose(M @ M.T, np.eye(3), atol=1e-9):
            raise ScenarioError("gate normal and axes must be orthonormal")
        if not self.half_width > 0:
            raise ScenarioError("gate half_width must be positive")


def gate_constraints(gate: Gate):
    """Linear rows on position at the gate node.

    Returns ``(G, h, E, e)`` with ``G r <= h`` encoding
    ``|a_i^T (r - c)| <= half_width`` and ``E r = e`` encoding
    ``n^T (r - c) = 0``.
    """
    c = np.asarray(gate.center, dtype=float)
    a1, a2, n = (np.asarray(v, dtype=float) for v in (gate.axis1, gate.axis2, gate.normal))
    G = np.stack([a1, -a1, a2, -a2])
    h = G @ c + gate.half_width
    return G, h, n[None, :], np.array([n @ c])


@dataclass(frozen=True)
class Scenario:
    name: str
    keypoints: tuple
    x_init: tuple
    objective: str = "min-time"
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    cone: ViewCone = field(default_factory=ViewCone)
    x_final: tuple | None = None
    t_final: float | None = None
    t_guess: float = 5.0
    state_min: tuple = (-np.inf,) * N_STATE
    state_max: tuple = (np.inf,) * N_STATE
    control_min: tuple = (-np.inf,) * (N_CONTROL - 1) + (0.1,)
    control_max: tuple = (np.inf,) * (N_CONTROL - 1) + (5.0,)
    gates: tuple = ()
    range_min: float | None = None
    range_max: float | None = None
    nodes: int = 10
    weights: Weights = field(default_factory=Weights)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        validate(self)

    # derived views -----------------------------------------------------
    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.x_init, dtype=float)

    @property
    def xf(self) -> np.ndarray:
        """Terminal state with NaN marking free components (all NaN when absent)."""
        if self.x_final is None:
            return np.full(N_STATE, np.nan)
        return np.array([np.nan if v is None else v for v in self.x_final], dtype=float)

    @property
    def x_lo(self) -> np.ndarray:
        return np.asarray(self.state_min, dtype=float)

    @property
    def x_hi(self) -> np.ndarray:
        return np.asarray(self.state_max, dtype=float)

    @property
    def u_lo(self) -> np.ndarray:
        u = np.asarray(self.control_min, dtype=float)
        if self.t_final is not None:
            u = u.copy()
            u[-1] = self.t_final
        return u

    @property
    def u_hi(self) -> np.ndarray:
        u = np.asarray(self.control_max, dtype=float)
        if self.t_final is not None:
            u = u.copy()
            u[-1] = self.t_final
        return u

    def gate_nodes(self, nodes: int | None = None) -> list[int]:
        n = self.nodes if nodes is None else nodes
        out = []
        for j, g in enumerate(self.gates, start=1):
            out.append(g.node if g.node is not None else int(round(j * n / (len(self.gates) + 1))))
        return out

    def with_nodes(self, nodes: int) -> "Scenario":
        return replace(self, nodes=nodes)

    def with_weights(self, weights: Weights) -> "Scenario":
        return replace(self, weights=weights)


def validate(sc: Scenario) -> None:
    def need(ok, msg):
        if not ok:
            raise ScenarioError(msg)

    need(len(sc.keypoints) >= 1, "keypoints: at least one keypoint is required")
    need(sc.nodes >= 2, "nodes: grid needs at least 2 nodes")
    need(sc.objective in OBJECTIVES, f"objective: must be one of {OBJECTIVES}")
    need(len(sc.x_init) == N_STATE, f"x_init: expected {N_STATE} values")
    need(abs(np.linalg.norm(sc.x0[6:10]) - 1.0) < 1e-6, "x_init: attitude quaternion must be unit norm")
    need(len(sc.state_min) == N_STATE and len(sc.state_max) == N_STATE, "state bounds: expected 13 values")
    need(len(sc.control_min) == N_CONTROL and len(sc.control_max) == N_CONTROL, "control bounds: expected 7 values")
    need(np.all(sc.x_lo < sc.x_hi), "state bounds: min must be below max")
    need(np.all(np.asarray(sc.control_min) <= np.asarray(sc.control_max)), "control bounds: min must not exceed max")
    need(sc.u_lo[-1] > 0, "control bounds: time dilation lower bound must be positive")
    need(np.all((sc.x0 >= sc.x_lo) & (sc.x0 <= sc.x_hi)), "x_init: outside the state bounds")
    if sc.x_final is not None:
        need(len(sc.x_final) == N_STATE, f"x_final: expected {N_STATE} values (null for free)")
    if sc.t_final is not None:
        need(sc.t_final > 0, "t_final: must be positive")
    need(sc.t_guess > 0, "t_guess: must be positive")
    if sc.range_min is not None:
        need(sc.range_min > 0, "range_min: must be positive")
    if sc.range_max is not None:
        need(sc.range_max > (sc.range_min or 0.0), "range_max: must exceed range_min")
        for kp in sc.keypoints:
            d = np.linalg.norm(keypoint_position(kp, 0.0) - sc.x0[0:3])
            need(d <= sc.range_max, "range_max: keypoint starts outside the maximum range of the initial position")
    for node in sc.gate_nodes():
        need(0 < node < sc.nodes - 1, f"gates: assigned node {node} outside the grid interior")
    need(sc.vehicle.mass > 0, "vehicle.mass: mass must be positive")
    hidden = [i for i, kp in enumerate(sc.keypoints) if los_residual_full(sc.x0, 0.0, kp, sc.cone)[0] > 0]
    if hidden:
        # not fatal: the solver starts from a violating state and cannot reach zero violation
        log.warning("scenario %s: keypoints %s start outside the view cone", sc.name, hidden)


# persistence -------------------------------------------------------------

def _num(v):
    if v is None:
        return None
    v = float(v)
    if np.isinf(v):
        return None
    return v


def _vec(values, fill):
    return tuple(fill if v is None else float(v) for v in values)


def to_dict(sc: Scenario) -> dict:
    cone = sc.cone
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "objective": sc.objective,
        "vehicle": {"mass": sc.vehicle.mass, "inertia": [list(r) for r in sc.vehicle.inertia],
                    "gravity": list(sc.vehicle.gravity)},
        "cone": {"alpha": cone.alpha, "beta": cone.beta, "norm": "inf" if np.isinf(cone.norm) else 2,
                 "mount": list(cone.mount)},
        "keypoints": [asdict(kp) for kp in sc.keypoints],
        "x_init": list(sc.x_init),
        "x_final": None if sc.x_final is None else [_num(v) for v in sc.x_final],
        "t_final": sc.t_final,
        "t_guess": sc.t_guess,
        "state_min": [_num(v) for v in sc.state_min],
        "state_max": [_num(v) for v in sc.state_max],
        "control_min": [_num(v) for v in sc.control_min],
        "control_max": [_num(v) for v in sc.control_max],
        "gates": [asdict(g) for g in sc.gates],
        "range_min": sc.range_min,
        "range_max": sc.range_max,
        "nodes": sc.nodes,
        "weights": sc.weights.as_dict(),
        "tolerances": sc.tolerances.as_dict(),
    }


def from_dict(d: dict) -> Scenario:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: expected {SCHEMA_VERSION}, got {d.get('schema_version')!r}")
    missing = []

    def get(key, default):
        if key not in d:
            missing.append(key)
            return default
        return d[key]

    try:
        veh = get("vehicle", {})
        vehicle = VehicleParams(
            mass=float(veh.get("mass", 1.0)),
            inertia=tuple(tuple(float(x) for x in r) for r in veh.get("inertia", VehicleParams().inertia)),
            gravity=tuple(float(x) for x in veh.get("gravity", VehicleParams().gravity)),
        )
    except ValueError as e:
        raise ScenarioError(f"vehicle: {e}") from e
    c = get("cone", {})
    try:
        norm = c.get("norm", 2)
        cone = ViewCone(
            alpha=float(c.get("alpha", ViewCone.alpha)),
            beta=float(c.get("beta", ViewCone.beta)),
            norm=np.inf if norm in ("inf", float("inf")) else float(norm),
            mount=tuple(float(x) for x in c.get("mount", (1.0, 0.0, 0.0, 0.0))),
        )
    except ValueError as e:
        raise ScenarioError(f"cone: {e}") from e
    kps = []
    for i, k in enumerate(d.get("keypoints", [])):
        try:
            kps.append(Keypoint(**{key: (tuple(v) if isinstance(v, list) else v) for key, v in k.items()}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"keypoints[{i}]: {e}") from e
    gates = []
    for i, g in enumerate(d.get("gates", [])):
        try:
            gates.append(Gate(**{key: (tuple(v) if isinstance(v, list) else v) for key, v in g.items()}))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"gates[{i}]: {e}") from e
    if "x_init" not in d:
        raise ScenarioError("x_init: required field missing")
    defaults = Scenario.__dataclass_fields__
    xf = d.get("x_final")
    try:
        weights = Weights(**get("weights", {}))
        tolerances = Tolerances(**get("tolerances", {}))
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"weights/tolerances: {e}") from e
    sc = Scenario(
        name=str(get("name", "unnamed")),
        keypoints=tuple(kps),
        x_init=tuple(float(v) for v in d["x_init"]),
        objective=get("objective", "min-time"),
        vehicle=vehicle,
        cone=cone,
        x_final=None if xf is None else tuple(None if v is None else float(v) for v in xf),
        t_final=get("t_final", None),
        t_guess=float(get("t_guess", defaults["t_guess"].default)),
        state_min=_vec(get("state_min", [None] * N_STATE), -np.inf),
        state_max=_vec(get("state_max", [None] * N_STATE), np.inf),
        control_min=_vec(get("control_min", [None] * (N_CONTROL - 1) + [0.1]), -np.inf),
        control_max=_vec(get("control_max", [None] * (N_CONTROL - 1) + [5.0]), np.inf),
        gates=tuple(gates),
        range_min=get("range_min", None),
        range_max=get("range_max", None),
        nodes=int(get("nodes", defaults["nodes"].default)),
        weights=weights,
        tolerances=tolerances,
    )
    if missing:
        log.info("scenario %s: defaults used for %s", sc.name, ", ".join(missing))
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: invalid JSON ({e})") from e
    return from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(to_dict(sc), indent=2))


# defaults ----------------------------------------------------------------

HOVER_Q = (1.0, 0.0, 0.0, 0.0)
# Sensor boresight along body +x, pitched 30 deg toward body -z.
CAMERA_MOUNT = tuple(attitude.axis_angle_quat((0.0, 1.0, 0.0), np.deg2rad(120.0)))

# Quadrotor-like actuation: thrust along body z with little lateral authority,
# so translational acceleration needs tilt and tilt moves the camera.
LATERAL_FORCE = 1.0
FORCE_MIN = (-LATERAL_FORCE, -LATERAL_FORCE, 0.0)
FORCE_MAX = (LATERAL_FORCE, LATERAL_FORCE, 16.0)
MOMENT = 1.0


def _control_bounds(s_min, s_max):
    lo = FORCE_MIN + (-MOMENT,) * 3 + (s_min,)
    hi = FORCE_MAX + (MOMENT,) * 3 + (s_max,)
    return lo, hi


# The subject sweeps +-5 m across the drone's view every ~3 s, faster than the
# default grid samples it, so tracking between nodes is what the LoS path
# constraint buys.
SUBJECT_BASE = (8.0, 0.0, 1.0)
SUBJECT_AMPLITUDE = (0.0, 5.0, 0.0)
SUBJECT_FREQUENCY = 2.0
CINE_START = (5.0, 0.0, 2.0)


def cinematography_default(nodes: int = 10) -> Scenario:
    """Film a subject moving on a sinusoid while minimizing fuel.

    The time of flight is fixed and the final state is free. The drone starts
    3 m behind and 1 m above the subject's center line and must keep it in a
    rectangular view cone and within a range band while it swings sideways.
    """
    subject = Keypoint(kind="sinusoid", base=SUBJECT_BASE, amplitude=SUBJECT_AMPLITUDE,
                       frequency=SUBJECT_FREQUENCY, phase=0.0)
    x0 = CINE_START + (0.0,) * 3 + HOVER_Q + (0.0,) * 3
    inf = np.inf
    state_min = (-5.0, -10.0, 0.2) + (-5.0,) * 3 + (-inf,) * 4 + (-3.0,) * 3
    state_max = (20.0, 10.0, 8.0) + (5.0,) * 3 + (inf,) * 4 + (3.0,) * 3
    lo, hi = _control_bounds(0.1, 20.0)
    return Scenario(
        name="cinematography",
        keypoints=(subject,),
        x_init=x0,
        objective="min-fuel",
        cone=ViewCone(alpha=np.deg2rad(45.0), beta=np.deg2rad(45.0), norm=np.inf, mount=CAMERA_MOUNT),
        x_final=None,
        t_final=10.0,
        t_guess=10.0,
        state_min=state_min,
        state_max=state_max,
        control_min=lo,
        control_max=hi,
        range_min=1.0,
        range_max=10.0,
        nodes=nodes,
    )


# Slalom: gates every 4 m alternating +-1.25 m sideways and 2 +- 0.25 m high.
GATE_SPACING = 4.0
GATE_OFFSET_Y = 1.25
GATE_OFFSET_Z = 0.25
GATE_HALF_WIDTH = 1.0
COURSE_HEIGHT = 2.0
ENTRY_SPEED = 2.0
MAX_SPEED = 5.0
# Landmarks on a facade 18 m past the finish line, (dx, y, z) from its base.
FACADE_GAP = 18.0
FACADE = (
    (0.0, -6.0, 0.5), (2.0, -3.0, 5.0), (4.0, 0.0, 0.5), (6.0, 3.0, 5.0), (8.0, 6.0, 0.5),
    (1.0, -4.5, 3.0), (3.0, -1.5, 1.5), (5.0, 1.5, 4.0), (7.0, 4.5, 2.0), (9.0, 0.0, 6.0),
)


def relative_nav_default(nodes: int = 22) -> Scenario:
    """Fly a ten-gate slalom in minimum time keeping ten facade landmarks in view.

    The vehicle enters the course already moving at ``ENTRY_SPEED`` and only
    the finish position is pinned. Tilting to weave through the gates swings
    the forward camera, which is what makes the landmarks hard to keep.
    """
    gates = []
    for j in range(10):
        y = GATE_OFFSET_Y if j % 2 == 0 else -GATE_OFFSET_Y
        z = COURSE_HEIGHT + (GATE_OFFSET_Z if j % 4 in (1, 2) else -GATE_OFFSET_Z)
        gates.append(Gate(center=(GATE_SPACING * (j + 1), y, z), half_width=GATE_HALF_WIDTH))
    x_end = GATE_SPACING * 11
    landmarks = tuple(Keypoint(position=(x_end + FACADE_GAP + dx, y, z)) for dx, y, z in FACADE)
    x0 = (0.0, 0.0, COURSE_HEIGHT, ENTRY_SPEED, 0.0, 0.0) + HOVER_Q + (0.0,) * 3
    xf = (x_end, 0.0, COURSE_HEIGHT) + (None,) * 10
    inf = np.inf
    state_min = (-5.0, -6.0, 0.2) + (-MAX_SPEED,) * 3 + (-inf,) * 4 + (-5.0,) * 3
    state_max = (x_end + 5.0, 6.0, 6.0) + (MAX_SPEED,) * 3 + (inf,) * 4 + (5.0,) * 3
    lo, hi = _control_bounds(0.1, 20.0)
    return Scenario(
        name="relative-nav",
        keypoints=landmarks,
        x_init=x0,
        objective="min-time",
        cone=ViewCone(alpha=np.deg2rad(45.0), beta=np.deg2rad(45.0), norm=2.0, mount=CAMERA_MOUNT),
        x_final=xf,
        t_final=None,
        t_guess=9.0,
        state_min=state_min,
        state_max=state_max,
        control_min=lo,
        control_max=hi,
        gates=tuple(gates),
        nodes=nodes,
    )
