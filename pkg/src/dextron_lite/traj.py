"""Hand-transport trajectories: representation, augmentation and resampling.

A trajectory is a timestamped sequence of hand poses (position in meters,
scalar-first unit quaternion). Augmentation applies a planar offset and an
affine time warp; resampling produces a uniform grid with a cubic spline for
positions and Squad for orientations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from . import quat
from .errors import (
    DegenerateTrajectory,
    NonMonotoneTime,
    NonPositiveDuration,
    ParseError,
)

CSV_HEADER = ("t", "x", "y", "z", "qw", "qx", "qy", "qz")
DEFAULT_DT = 0.02


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", quat.normalize(np.asarray(self.orientation, dtype=float).reshape(4)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Timestamped hand poses.

    Stored column-wise: ``times`` (T,), ``positions`` (T, 3) and
    ``orientations`` (T, 4). Orientations are renormalized on construction.
    """

    times: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    uniform_dt: float | None = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        positions = np.array(self.positions, dtype=float).reshape(-1, 3)
        orientations = np.array(self.orientations, dtype=float).reshape(-1, 4)
        if len(times) < 2:
            raise DegenerateTrajectory(f"trajectory needs at least 2 samples, got {len(times)}")
        if len(positions) != len(times) or len(orientations) != len(times):
            raise ValueError("times, positions and orientations must have equal length")
        gaps = np.diff(times)
        if np.any(gaps <= 0.0):
            bad = int(np.argmax(gaps <= 0.0)) + 1
            raise NonMonotoneTime(f"sample {bad} at t={times[bad]!r} does not follow t={times[bad - 1]!r}")
        if self.uniform_dt is not None and np.any(np.abs(gaps - self.uniform_dt) > 1e-9):
            raise ValueError(f"sample gaps are not uniform at dt={self.uniform_dt}")
        orientations = quat.normalize(orientations)
        for arr in (times, positions, orientations):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "orientations", orientations)

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[float, Pose]], uniform_dt=None) -> "Trajectory":
        if len(samples) < 2:
            raise DegenerateTrajectory(f"trajectory needs at least 2 samples, got {len(samples)}")
        return cls(
            times=[t for t, _ in samples],
            positions=[p.position for _, p in samples],
            orientations=[p.orientation for _, p in samples],
            uniform_dt=uniform_dt,
        )

    def __len__(self):
        return len(self.times)

    @property
    def samples(self) -> list[tuple[float, Pose]]:
        return [(float(t), Pose(x, q)) for t, x, q in zip(self.times, self.positions, self.orientations)]

    def pose(self, i) -> Pose:
        return Pose(self.positions[i], self.orientations[i])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def allclose(self, other: "Trajectory", atol=1e-9) -> bool:
        return (
            len(self) == len(other)
            and np.allclose(self.times, other.times, rtol=0.0, atol=atol)
            and np.allclose(self.positions, other.positions, rtol=0.0, atol=atol)
            and np.all(quat.distance(self.orientations, other.orientations) <= atol)
        )

    @cached_property
    def _interp(self) -> "_Interpolant":
        return _Interpolant(self)


@dataclass(frozen=True)
class TrajectorySet:
    trajectories: tuple[Trajectory, ...]
    source: str = "synthetic"
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("trajectory set must not be empty")
        if self.source not in ("synthetic", "imported"):
            raise ValueError(f"unknown trajectory source {self.source!r}")
        names = tuple(self.names) or tuple(f"traj_{i:03d}" for i in range(len(trajs)))
        if len(names) != len(trajs):
            raise ValueError("names must match trajectories")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "names", names)

    def __len__(self):
        return len(self.trajectories)

    def __getitem__(self, i) -> Trajectory:
        return self.trajectories[i]

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)


class _Interpolant:
    """Position spline plus Squad control points for one trajectory."""

    def __init__(self, traj: Trajectory):
        t = traj.times
        self.t0 = float(t[0])
        self.t_end = float(t[-1])
        self.times = t
        n = len(t)
        if n == 2:
            self._pos = make_interp_spline(t, traj.positions, k=1)
        elif n == 3:
            self._pos = make_interp_spline(t, traj.positions, k=2)
        else:
            self._pos = CubicSpline(t, traj.positions, bc_type="natural")
        self.knots = quat.align_hemisphere(traj.orientations)
        self.ctrl = quat.squad_control_points(self.knots)

    def positions(self, t):
        return self._pos(np.clip(t, self.t0, self.t_end))

    def orientations(self, t):
        t = np.clip(t, self.t0, self.t_end)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        ta = self.times[i]
        tb = self.times[i + 1]
        u = np.clip((t - ta) / (tb - ta), 0.0, 1.0)
        return quat.squad_segment(self.knots[i], self.knots[i + 1], self.ctrl[i], self.ctrl[i + 1], u)


def apply_offset(traj: Trajectory, dx: float, dy: float) -> Trajectory:
    """Shift every position by ``(dx, dy, 0)``."""
    return Trajectory(traj.times, traj.positions + np.array([dx, dy, 0.0]), traj.orientations, traj.uniform_dt)


def warped_duration(duration: float, ts: float, tn: float) -> float:
    return duration * ts + tn


def time_warp(traj: Trajectory, ts: float, tn: float) -> Trajectory:
    """Rescale sample times so the new duration is ``duration * ts + tn``.

    Times are mapped affinely about the first sample, so relative phase is kept.

    Raises:
        NonPositiveDuration: if the warped duration is not positive.
    """
    old = traj.duration
    new = warped_duration(old, ts, tn)
    if not new > 0.0:
        raise NonPositiveDuration(f"warped duration {old}*{ts}+{tn} = {new} is not positive")
    scale = ts + tn / old
    t0 = traj.times[0]
    times = t0 + (traj.times - t0) * scale
    return Trajectory(times, traj.positions, traj.orientations)


def _grid(t0: float, duration: float, dt: float) -> np.ndarray:
    # the last grid point may overshoot the end by < dt; the pose is held there
    n = int(math.ceil(duration / dt - 1e-9))
    return t0 + np.arange(n + 1) * dt


def resample(traj: Trajectory, dt: float = DEFAULT_DT) -> Trajectory:
    """Resample onto a uniform grid anchored at the first sample time.

    Positions come from a natural cubic spline through all knots (linear or
    quadratic for 2 or 3 knots), orientations from Squad.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    interp = traj._interp
    times = _grid(interp.t0, traj.duration, dt)
    return Trajectory(times, interp.positions(times), interp.orientations(times), uniform_dt=dt)


def augment(traj: Trajectory, dx: float, dy: float, ts: float, tn: float, dt: float = DEFAULT_DT) -> Trajectory:
    """Offset, time-warp and resample in one pass.

    Equivalent to ``resample(time_warp(apply_offset(traj, dx, dy), ts, tn), dt)``
    but reuses the trajectory's cached interpolant: spline and Squad
    interpolation commute with an affine change of the time axis.
    """
    old = traj.duration
    new = warped_duration(old, ts, tn)
    if not new > 0.0:
        raise NonPositiveDuration(f"warped duration {old}*{ts}+{tn} = {new} is not positive")
    interp = traj._interp
    times = _grid(interp.t0, new, dt)
    back = interp.t0 + (times - interp.t0) * (old / new)
    positions = interp.positions(back) + np.array([dx, dy, 0.0])
    return Trajectory(times, positions, interp.orientations(back), uniform_dt=dt)


def minimum_jerk(start, goal, tau):
    """Minimum-jerk interpolation at normalized time ``tau`` in [0, 1]."""
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    s = tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    return start + np.multiply.outer(s, goal - start)


def minimum_jerk_velocity(start, goal, tau, duration):
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    ds = 30.0 * tau**2 * (1.0 - tau) ** 2 / duration
    return np.multiply.outer(ds, np.asarray(goal, dtype=float) - np.asarray(start, dtype=float))


def generate_synthetic(
    start,
    object_pos,
    lift_height: float,
    duration: float,
    dt: float = DEFAULT_DT,
    reach_fraction: float = 0.6,
    grasp_gap: float = 0.02,
    start_yaw: float = 0.0,
    lift_start: float | None = None,
) -> Trajectory:
    """Minimum-jerk reach toward ``object_pos`` followed by a vertical lift.

    The reach stops ``grasp_gap`` short of ``object_pos`` along the approach
    line; the lift ends ``lift_height`` above ``object_pos``. The lift begins at
    ``lift_start`` (fraction of ``duration``, default ``reach_fraction``); an
    earlier start superposes the two minimum-jerk profiles so the hand does not
    come to rest at the object. Yaw turns from ``start_yaw`` to face the object
    during the reach and is held while lifting.
    """
    start = np.asarray(start, dtype=float)
    obj = np.asarray(object_pos, dtype=float)
    if not duration > 0.0:
        raise ValueError("duration must be positive")
    approach = obj - start
    dist = float(np.linalg.norm(approach))
    if dist == 0.0:
        raise ValueError("start must differ from object_pos")
    pregrasp = obj - approach / dist * min(grasp_gap, dist)
    top = np.array([pregrasp[0], pregrasp[1], obj[2] + lift_height])

    n = max(int(round(duration / dt)), 1)
    t = np.linspace(0.0, duration, n + 1)
    t_reach = reach_fraction * duration
    t_lift = t_reach if lift_start is None else lift_start * duration
    if not 0.0 < t_lift <= t_reach < duration:
        raise ValueError("need 0 < lift_start <= reach_fraction < 1")
    reach_tau = t / t_reach
    lift_tau = (t - t_lift) / (duration - t_lift)
    positions = minimum_jerk(start, pregrasp, reach_tau) + minimum_jerk(np.zeros(3), top - pregrasp, lift_tau)

    face = math.atan2(approach[1], approach[0])
    q_start = quat.yaw(start_yaw)
    q_face = quat.yaw(face)
    if np.dot(q_start, q_face) < 0.0:
        q_face = -q_face
    s = minimum_jerk(0.0, 1.0, reach_tau)
    orientations = quat.slerp(np.broadcast_to(q_start, (len(t), 4)), np.broadcast_to(q_face, (len(t), 4)), s)
    return Trajectory(t, positions, orientations)


def polar_grid(radii=(0.20, 0.25, 0.30, 0.35), angles=None, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Start markers on a polar grid around ``center``; 4 x 4 = 16 points by default.

    Default angles split the half plane y < 0 (the subject's side) into four
    equal sectors and take their centres.
    """
    if angles is None:
        angles = -math.pi + math.pi / 8.0 + np.arange(4) * math.pi / 4.0
    c = np.asarray(center, dtype=float)
    pts = [c + np.array([r * math.cos(a), r * math.sin(a), 0.0]) for r in radii for a in angles]
    return np.array(pts)


def synthetic_set(
    radii=(0.20, 0.25, 0.30, 0.35),
    angles=None,
    lift_height: float = 0.20,
    duration: float = 1.0,
    dt: float = DEFAULT_DT,
    grasp_gap: float = 0.09,
    lift_start: float | None = 0.35,
    reach_fraction: float = 0.6,
) -> TrajectorySet:
    """One synthetic reach-and-lift per polar-grid marker, object at the origin.

    Defaults stop the reach near the attach radius and start lifting before the
    reach ends, so only part of the offset/timing space admits a clean grasp.
    """
    starts = polar_grid(radii, angles)
    trajs = tuple(
        generate_synthetic(
            s, np.zeros(3), lift_height, duration, dt,
            reach_fraction=reach_fraction, grasp_gap=grasp_gap, lift_start=lift_start,
        )
        for s in starts
    )
    n_ang = len(starts) // len(radii)
    names = tuple(f"grid_r{i // n_ang:02d}_a{i % n_ang:02d}" for i in range(len(trajs)))
    return TrajectorySet(trajs, source="synthetic", names=names)


def export_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for t, x, q in zip(traj.times, traj.positions, traj.orientations):
            w.writerow([repr(float(v)) for v in (t, *x, *q)])


def import_csv(path) -> Trajectory:
    """Read a trajectory CSV with header ``t,x,y,z,qw,qx,qy,qz``.

    Sample times may be non-uniform but must strictly increase.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", path, 1)
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", path, line)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(str(exc), path, line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", path, line)
            if rows and vals[0] <= rows[-1][0]:
                raise NonMonotoneTime(f"{path}:{line}: time {vals[0]!r} does not increase")
            if math.hypot(*vals[4:]) == 0.0:
                raise ParseError("zero quaternion", path, line)
            rows.append(vals)
    if not rows:
        raise ParseError("no samples", path, 2)
    arr = np.array(rows)
    return Trajectory(arr[:, 0], arr[:, 1:4], arr[:, 4:8])


def save_set(tset: TrajectorySet, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, traj in zip(tset.names, tset.trajectories):
        p = directory / f"{name}.csv"
        export_csv(traj, p)
        paths.append(p)
    return paths


def load_set(directory, source="imported") -> TrajectorySet:
    """Load every ``*.csv`` in ``directory`` in sorted filename order."""
    paths = sorted(Path(directory).glob("*.csv"))
    if not paths:
        raise ParseError("no trajectory CSV files found", directory)
    return TrajectorySet(tuple(import_csv(p) for p in paths), source=source, names=tuple(p.stem for p in paths))
