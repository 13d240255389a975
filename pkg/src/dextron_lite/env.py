"""DEXTRON-lite: a deterministic surrogate of the grasping environment.

The hand follows an augmented trajectory; the only control is the coupled
finger closure ``h`` in [0, 1], commanded as a velocity in [-1, 1]. Contact is
modelled by four ordered rules (topple, attach, carry, slip) on the
hand-object distance and the hand aperture ``a_max * (1 - h)``.

Reward: once the hand or the object first rises above ``z_trig`` (step t0), each
of the next 20 steps pays 1 if the object is above ``z_trig``. The episode ends
when that window closes, or when the trajectory runs out before t0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import quat
from .errors import ConfigError, SteppedAfterDone, UnknownTrajectory
from .traj import DEFAULT_DT, TrajectorySet, augment

STATE_DIM = 21
REWARD_WINDOW = 20
MAX_RETURN = REWARD_WINDOW

# StateVector layout
HAND_POS = slice(0, 3)
HAND_QUAT = slice(3, 7)
HAND_VEL = slice(7, 10)
HAND_ANG_VEL = slice(10, 13)
CLOSURE = 13
CLOSURE_RATE = 14
OBJ_POS = slice(15, 18)
OBJ_VEL = slice(18, 21)


@dataclass(frozen=True)
class PhysicsConstants:
    r_obj: float = 0.035
    a_max: float = 0.10
    v_close: float = 2.0
    d_grasp: float = 0.10
    d_contact: float = 0.12
    z_trig: float = 0.10
    h_hold: float = 0.35
    dt: float = DEFAULT_DT

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"physics constant {f.name} must be positive, got {v!r}")
        if self.d_grasp > self.d_contact:
            raise ConfigError("d_grasp must not exceed d_contact")
        if not self.a_max > 2.0 * self.r_obj:
            raise ConfigError("a_max must exceed the object diameter")
        if self.h_hold > 1.0:
            raise ConfigError("h_hold must be within [0, 1]")

    def aperture(self, h: float) -> float:
        return self.a_max * (1.0 - h)

    @classmethod
    def from_mapping(cls, values: dict) -> "PhysicsConstants":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown physics keys: {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in values.items()})

    @classmethod
    def from_file(cls, path) -> "PhysicsConstants":
        """Read ``key = value`` lines; ``#`` starts a comment. Missing keys keep defaults."""
        from .config import read_kv

        return cls.from_mapping(read_kv(path))


@dataclass(frozen=True)
class EnvSettings:
    trajectory_id: int
    dx: float
    dy: float
    tn: float
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["physics"] = asdict(self.physics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvSettings":
        d = dict(d)
        phys = d.pop("physics", None)
        return cls(physics=PhysicsConstants(**phys) if phys else PhysicsConstants(), **d)


@dataclass
class EnvState:
    """Live simulator state. ``DextronEnv.state`` returns the object itself; do not mutate it."""

    step: int = 0
    traj_index: int = 0
    hand_pos: tuple = (0.0, 0.0, 0.0)
    hand_quat: tuple = (1.0, 0.0, 0.0, 0.0)
    hand_vel: tuple = (0.0, 0.0, 0.0)
    hand_ang_vel: tuple = (0.0, 0.0, 0.0)
    h: float = 0.0
    h_dot: float = 0.0
    object_pos: tuple = (0.0, 0.0, 0.0)
    object_vel: tuple = (0.0, 0.0, 0.0)
    attached: bool = False
    toppled: bool = False
    grip_offset: tuple = (0.0, 0.0, 0.0)
    d0: float = 0.0
    trigger_step: int | None = None
    attach_step: int | None = None
    min_dist: float = math.inf
    min_dist_step: int = 0
    total_return: int = 0
    done: bool = False

    def vector(self) -> np.ndarray:
        return np.array([
            *self.hand_pos, *self.hand_quat, *self.hand_vel, *self.hand_ang_vel,
            self.h, self.h_dot, *self.object_pos, *self.object_vel,
        ])


def hand_object_distance(state: EnvState) -> float:
    return math.dist(state.hand_pos, state.object_pos)


def normalized_distance(state: EnvState) -> float:
    """Hand-object distance divided by its value at reset."""
    if state.d0 == 0.0:
        return 0.0
    return hand_object_distance(state) / state.d0


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: float
    r: float
    s_next: np.ndarray
    done: bool


@dataclass(frozen=True, eq=False)
class EpisodeRecord:
    settings: EnvSettings
    states: np.ndarray  # (n + 1, STATE_DIM)
    actions: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,)
    total_return: int
    attach_step: int | None
    reach_step: int
    toppled: bool

    @property
    def outcome(self) -> int:
        return int(self.total_return == MAX_RETURN)

    def __len__(self):
        return len(self.actions)

    @property
    def dones(self) -> np.ndarray:
        d = np.zeros(len(self.actions), dtype=bool)
        if len(d):
            d[-1] = True
        return d

    def transitions(self):
        dones = self.dones
        for k in range(len(self.actions)):
            yield Transition(self.states[k], float(self.actions[k]), float(self.rewards[k]), self.states[k + 1], bool(dones[k]))

    def to_json(self) -> dict:
        return {
            "settings": self.settings.to_dict(),
            "steps": [
                {"s": self.states[k].tolist(), "a": float(self.actions[k]), "r": float(self.rewards[k])}
                for k in range(len(self.actions))
            ],
            "final_state": self.states[-1].tolist(),
            "return": int(self.total_return),
            "outcome": self.outcome,
        }


class DextronEnv:
    """Single-threaded, stateful surrogate environment.

    Args:
        trajectories: raw trajectories; ``EnvSettings.trajectory_id`` indexes them.
        time_scale: the constant duration scale ``ts`` applied before ``tn``.
    """

    def __init__(self, trajectories: TrajectorySet, time_scale: float = 2.5):
        self.trajectories = trajectories
        self.time_scale = time_scale
        self.settings: EnvSettings | None = None
        self._state = EnvState(done=True)

    @property
    def state(self) -> EnvState:
        return self._state

    def prepare(self, settings: EnvSettings):
        tid = settings.trajectory_id
        if not (isinstance(tid, (int, np.integer)) and 0 <= tid < len(self.trajectories)):
            raise UnknownTrajectory(tid)
        return augment(self.trajectories[int(tid)], settings.dx, settings.dy, self.time_scale, settings.tn, settings.physics.dt)

    def reset(self, settings: EnvSettings) -> np.ndarray:
        traj = self.prepare(settings)
        dt = settings.physics.dt
        self.settings = settings
        self.phys = settings.physics
        self._pos = [tuple(p) for p in traj.positions.tolist()]
        self._quat = [tuple(q) for q in traj.orientations.tolist()]
        vel = np.zeros_like(traj.positions)
        vel[1:] = np.diff(traj.positions, axis=0) / dt
        ang = np.zeros_like(traj.positions)
        ang[1:] = quat.angular_velocity(traj.orientations[:-1], traj.orientations[1:], dt)
        self._vel = [tuple(v) for v in vel.tolist()]
        self._ang = [tuple(w) for w in ang.tolist()]
        s = EnvState(hand_pos=self._pos[0], hand_quat=self._quat[0])
        s.d0 = hand_object_distance(s)
        s.min_dist = s.d0
        self._state = s
        return s.vector()

    def step(self, action: float):
        s = self._state
        if s.done:
            raise SteppedAfterDone("step() called on a finished episode; call reset()")
        p = self.phys
        dt = p.dt
        a = float(action)
        if math.isnan(a):
            raise ValueError("action is NaN")
        a = min(max(a, -1.0), 1.0)

        h_old = s.h
        h = min(max(h_old + a * p.v_close * dt, 0.0), 1.0)
        s.h = h
        s.h_dot = (h - h_old) / dt

        last = len(self._pos) - 1
        if s.traj_index < last:
            s.traj_index += 1
            i = s.traj_index
            s.hand_pos, s.hand_quat = self._pos[i], self._quat[i]
            s.hand_vel, s.hand_ang_vel = self._vel[i], self._ang[i]
        else:
            s.hand_vel = s.hand_ang_vel = (0.0, 0.0, 0.0)
        s.step += 1

        obj_old = s.object_pos
        d = hand_object_distance(s)
        aperture = p.a_max * (1.0 - h)
        diameter = 2.0 * p.r_obj
        if not s.attached and not s.toppled:
            if p.d_grasp < d <= p.d_contact and aperture < diameter:
                s.toppled = True
            elif d <= p.d_grasp and aperture <= diameter:
                s.attached = True
                s.attach_step = s.step
                hx, hy, hz = s.hand_pos
                ox, oy, oz = obj_old
                s.grip_offset = (hx - ox, hy - oy, hz - oz)
        if s.attached:
            if h >= p.h_hold:
                hx, hy, hz = s.hand_pos
                gx, gy, gz = s.grip_offset
                s.object_pos = (hx - gx, hy - gy, max(hz - gz, 0.0))
            else:
                s.attached = False
                s.object_pos = (obj_old[0], obj_old[1], 0.0)
        if s.object_pos is not obj_old:
            (nx, ny, nz), (ox, oy, oz) = s.object_pos, obj_old
            s.object_vel = ((nx - ox) / dt, (ny - oy) / dt, (nz - oz) / dt)
        else:
            s.object_vel = (0.0, 0.0, 0.0)

        d = hand_object_distance(s)
        if d < s.min_dist:
            s.min_dist = d
            s.min_dist_step = s.step

        r = 0
        if s.trigger_step is None:
            if s.hand_pos[2] > p.z_trig or s.object_pos[2] > p.z_trig:
                s.trigger_step = s.step
            elif s.traj_index == last:
                s.done = True
        else:
            r = 1 if s.object_pos[2] > p.z_trig else 0
            if s.step - s.trigger_step >= REWARD_WINDOW:
                s.done = True
        s.total_return += r
        return s.vector(), float(r), s.done


Policy = Callable[[np.ndarray], float]


def rollout(env: DextronEnv, settings: EnvSettings, policy: Policy, keep_states: bool = True) -> EpisodeRecord:
    """Run one episode to completion.

    ``policy`` maps the current state vector to an action. With
    ``keep_states=False`` only actions, rewards and the outcome are kept.
    """
    obs = env.reset(settings)
    states = [obs]
    actions = []
    rewards = []
    done = False
    while not done:
        a = float(policy(obs))
        obs, r, done = env.step(a)
        actions.append(min(max(a, -1.0), 1.0))
        rewards.append(r)
        if keep_states:
            states.append(obs)
    st = env.state
    reach = st.attach_step if st.attach_step is not None else st.min_dist_step
    return EpisodeRecord(
        settings=settings,
        states=np.array(states) if keep_states else np.empty((0, STATE_DIM)),
        actions=np.array(actions),
        rewards=np.array(rewards),
        total_return=int(st.total_return),
        attach_step=st.attach_step,
        reach_step=int(reach),
        toppled=st.toppled,
    )


def write_episode_log(path, episodes) -> None:
    """One JSON object per episode: settings, per-step (s, a, r), return and outcome."""
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_json()) + "\n")


def read_episode_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
