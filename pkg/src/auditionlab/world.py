"""Ground-truth world model: agent pose, sound sources, and stochastic transitions.

The agent is the simplest binaural listener: two microphones fixed to the two
ends of a rigid rod of length ``d``, the rod lying along the body-frame y
axis. The world advances in discrete steps; each step applies one action with
optional actuator noise and increments the clock.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundsError, ValidationError
from .geometry import (
    quat_from_axis_angle,
    quat_identity,
    quat_multiply,
    quat_normalize,
    quat_rotate,
)

_BODY_Y = np.array([0.0, 1.0, 0.0])


def _vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValidationError(f"{name} must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} must be finite, got {a}")
    return a


@dataclass
class AgentPose:
    """SE(3) pose of the listening agent.

    `orientation` is a unit quaternion [w, x, y, z] mapping body-frame vectors
    into the world frame. The interaural axis is the body y axis.
    """

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        self.position = _vec3(self.position, "position")
        q = np.asarray(self.orientation, dtype=float)
        if q.shape != (4,):
            raise ValidationError(f"orientation must be a quaternion [w,x,y,z], got shape {q.shape}")
        n = np.linalg.norm(q)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValidationError(f"orientation must be a unit quaternion, |q| = {n}")
        self.orientation = q / n

    @classmethod
    def identity(cls, position=(0.0, 0.0, 0.0)) -> "AgentPose":
        return cls(position=np.asarray(position, dtype=float), orientation=quat_identity())

    def interaural_axis(self) -> np.ndarray:
        """World-frame direction of the rod (body y axis)."""
        return quat_rotate(self.orientation, _BODY_Y)

    def body_to_world(self, v: np.ndarray) -> np.ndarray:
        return quat_rotate(self.orientation, v)


def mic_positions(pose: AgentPose, d: float) -> tuple[np.ndarray, np.ndarray]:
    """World positions of the (left, right) microphones for rod length `d`.

    Left sits at -d/2 along the interaural axis, right at +d/2.
    """
    if not (d > 0.0) or not np.isfinite(d):
        raise ValidationError(f"rod length d must be > 0, got {d}")
    axis = pose.interaural_axis()
    half = 0.5 * d * axis
    return pose.position - half, pose.position + half


@dataclass
class SoundSource:
    """A point source emitting `level_ref` dB measured at the reference distance.

    `schedule` is a sorted tuple of half-open step intervals [t_on, t_off)
    during which the source is audible; None means always on. `owner` tags
    sources emitted by other agents so detections can be scored afterwards.
    """

    id: int
    position: np.ndarray
    level_ref: float
    schedule: tuple[tuple[int, int], ...] | None = None
    kind: str = "continuous"
    owner: int | None = None

    def __post_init__(self):
        self.position = _vec3(self.position, "source position")
        if not np.isfinite(self.level_ref):
            raise ValidationError(f"level_ref must be finite, got {self.level_ref}")
        if self.kind not in ("continuous", "impulsive"):
            raise ValidationError(f"unknown source kind {self.kind!r}")
        if self.schedule is not None:
            ivals = tuple((int(a), int(b)) for a, b in self.schedule)
            prev_end = None
            for a, b in ivals:
                if b <= a:
                    raise ValidationError(f"schedule interval ({a}, {b}) is empty or reversed")
                if prev_end is not None and a < prev_end:
                    raise ValidationError("schedule intervals must be sorted and non-overlapping")
                prev_end = b
            self.schedule = ivals

    def active(self, time_step: int) -> bool:
        if self.schedule is None:
            return True
        return any(a <= time_step < b for a, b in self.schedule)


@dataclass
class Action:
    """One agent action per step.

    kind is one of "translate" (body-frame delta, meters), "rotate"
    (body-frame axis-angle, radians), "observe" (listen without moving) or
    "declare" (commit to a target cell or position; pose no-op here, terminal
    semantics belong to the planner).
    """

    kind: str
    delta: np.ndarray | None = None
    axis_angle: np.ndarray | None = None
    target: object = None

    @staticmethod
    def translate(delta) -> "Action":
        return Action(kind="translate", delta=_vec3(delta, "translate delta"))

    @staticmethod
    def rotate(axis_angle) -> "Action":
        return Action(kind="rotate", axis_angle=_vec3(axis_angle, "rotate axis-angle"))

    @staticmethod
    def observe() -> "Action":
        return Action(kind="observe")

    @staticmethod
    def declare(target) -> "Action":
        return Action(kind="declare", target=target)


@dataclass
class TransitionNoise:
    """Actuator noise: per-axis translation std (m) and axis-angle std (rad)."""

    sigma_translate: float = 0.0
    sigma_rotate: float = 0.0

    def __post_init__(self):
        if self.sigma_translate < 0 or self.sigma_rotate < 0:
            raise ValidationError("noise sigmas must be >= 0")


@dataclass
class ActionLimits:
    """Per-step magnitude caps; None disables the check."""

    max_translate: float | None = None
    max_rotate: float | None = None


@dataclass
class Bounds:
    """Axis-aligned world box; actions may not move the agent outside it."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = _vec3(self.lo, "bounds lo")
        self.hi = _vec3(self.hi, "bounds hi")
        if np.any(self.hi < self.lo):
            raise ValidationError("bounds hi must be >= lo on every axis")

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.all(p >= self.lo - 1e-12) and np.all(p <= self.hi + 1e-12))

    def span(self) -> np.ndarray:
        return self.hi - self.lo


@dataclass
class WorldState:
    """Complete latent state at one time step."""

    time_step: int
    agent: AgentPose
    sources: tuple[SoundSource, ...] = ()
    other_agents: tuple = ()

    def __post_init__(self):
        if self.time_step < 0:
            raise ValidationError("time_step must be >= 0")
        self.sources = tuple(self.sources)
        self.other_agents = tuple(self.other_agents)
        ids = [s.id for s in self.sources]
        if len(ids) != len(set(ids)):
            raise ValidationError("source ids must be unique")

    def active_sources(self) -> list[SoundSource]:
        return [s for s in self.sources if s.active(self.time_step)]


def step(
    state: WorldState,
    action: Action,
    noise: TransitionNoise,
    rng: np.random.Generator,
    limits: ActionLimits | None = None,
    bounds: Bounds | None = None,
) -> WorldState:
    """Advance the world one step under `action` with actuator noise.

    Translations are expressed in the body frame and applied with Gaussian
    world-frame noise; rotations compose a body-frame axis-angle increment
    perturbed by Gaussian axis-angle noise, then renormalize. "observe" and
    "declare" leave the pose untouched and are noise-free by construction.
    Raises BoundsError when a translate exceeds `limits` or exits `bounds`.
    """
    pose = state.agent
    if action.kind == "translate":
        delta = action.delta
        if limits is not None and limits.max_translate is not None:
            if np.linalg.norm(delta) > limits.max_translate + 1e-12:
                raise BoundsError(
                    f"translate magnitude {np.linalg.norm(delta):.6g} exceeds "
                    f"limit {limits.max_translate:.6g}"
                )
        world_delta = pose.body_to_world(delta)
        new_pos = pose.position + world_delta
        if noise.sigma_translate > 0.0:
            new_pos = new_pos + rng.normal(0.0, noise.sigma_translate, size=3)
        if bounds is not None and not bounds.contains(new_pos):
            raise BoundsError(f"translate leaves world bounds at {new_pos}")
        new_pose = AgentPose(position=new_pos, orientation=pose.orientation.copy())
    elif action.kind == "rotate":
        aa = action.axis_angle
        if limits is not None and limits.max_rotate is not None:
            if np.linalg.norm(aa) > limits.max_rotate + 1e-12:
                raise BoundsError(
                    f"rotate magnitude {np.linalg.norm(aa):.6g} exceeds "
                    f"limit {limits.max_rotate:.6g}"
                )
        if noise.sigma_rotate > 0.0:
            aa = aa + rng.normal(0.0, noise.sigma_rotate, size=3)
        dq = quat_from_axis_angle(aa)
        new_q = quat_normalize(quat_multiply(pose.orientation, dq))
        new_pose = AgentPose(position=pose.position.copy(), orientation=new_q)
    elif action.kind in ("observe", "declare"):
        new_pose = pose
    else:
        raise ValidationError(f"unknown action kind {action.kind!r}")

    return replace(state, time_step=state.time_step + 1, agent=new_pose)
