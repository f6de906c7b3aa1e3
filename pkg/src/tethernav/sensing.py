"""Planar LiDAR simulation: two gimbal-stabilized 360-degree scanners.

Each drone carries a horizontal scanner (plane parallel to XY at the drone
altitude, beam 0 along +X) and a vertical scanner whose plane is set by a
commandable yaw (beam 0 along the in-plane horizontal axis +u, beam at
+90 degrees pointing straight up). Gimbal dynamics are instantaneous.

Vertical-plane 2D coordinates are (u, Z): u is the signed horizontal
displacement from the scanning drone's XY position along the plane
direction (drone at u = 0), Z is absolute altitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import NO_RETURN, GeometryError, Scene, raycast_fan

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LidarConfig:
    """Scanner parameters. Angles radians, distances meters."""

    angular_resolution: float = math.radians(5.0)
    span: float = TWO_PI
    max_range: float = 30.0
    sample_step: float = 0.05
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.angular_resolution <= 0.0:
            raise GeometryError("angular_resolution must be positive")
        if self.max_range <= 0.0 or self.sample_step <= 0.0:
            raise GeometryError("max_range and sample_step must be positive")
        if self.noise_sigma < 0.0:
            raise GeometryError("noise_sigma must be >= 0")
        if self.beam_count < 4:
            raise GeometryError("need at least 4 beams per scan")

    @property
    def beam_count(self) -> int:
        return int(math.floor(self.span / self.angular_resolution + 1e-9))


@dataclass(frozen=True)
class HorizontalPlane:
    """Scan plane parallel to XY at altitude z; beam 0 along +X."""

    z: float

    def beam_direction(self, angle: float) -> np.ndarray:
        return np.array([math.cos(angle), math.sin(angle), 0.0])

    def to_plane(self, p3) -> np.ndarray:
        p3 = np.asarray(p3, dtype=float)
        return p3[:2].copy()

    def to_world(self, p2) -> np.ndarray:
        return np.array([p2[0], p2[1], self.z], dtype=float)


@dataclass(frozen=True)
class VerticalPlane:
    """Vertical scan plane anchored at the drone's XY position.

    ``yaw`` orients the in-plane horizontal +u axis; beam angle 0 is +u and
    +pi/2 is straight up.
    """

    anchor_xy: tuple
    yaw: float

    @property
    def u_dir(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), math.sin(self.yaw)])

    def beam_direction(self, angle: float) -> np.ndarray:
        u = self.u_dir
        c, s = math.cos(angle), math.sin(angle)
        return np.array([c * u[0], c * u[1], s])

    def to_plane(self, p3) -> np.ndarray:
        p3 = np.asarray(p3, dtype=float)
        rel = p3[:2] - np.asarray(self.anchor_xy, dtype=float)
        return np.array([float(self.u_dir @ rel), p3[2]])

    def to_world(self, p2) -> np.ndarray:
        xy = np.asarray(self.anchor_xy, dtype=float) + p2[0] * self.u_dir
        return np.array([xy[0], xy[1], p2[1]])

    def contains_point(self, p3, tol: float = 1e-9) -> bool:
        p3 = np.asarray(p3, dtype=float)
        rel = p3[:2] - np.asarray(self.anchor_xy, dtype=float)
        n = np.array([-self.u_dir[1], self.u_dir[0]])
        return abs(float(n @ rel)) <= tol


@dataclass(frozen=True)
class ScanVector:
    """One planar sweep: ranges[j] is the return along angle j*theta.

    Finite entries lie in (0, max_range]; inf marks no-return.
    """

    ranges: np.ndarray
    plane: object
    angular_resolution: float
    max_range: float

    def __post_init__(self):
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=float))

    @property
    def beam_count(self) -> int:
        return self.ranges.size

    def beam_angle(self, j: int) -> float:
        return j * self.angular_resolution

    def free_mask(self, r_free: float) -> np.ndarray:
        return np.isinf(self.ranges) | (self.ranges > r_free)


@dataclass(frozen=True)
class ScanPair:
    """Simultaneous horizontal + vertical sweeps from one drone position."""

    horizontal: ScanVector
    vertical: ScanVector
    yaw: float


def scan_plane(drone_pos, plane, cfg: LidarConfig, scene: Scene,
               rng: np.random.Generator | None = None) -> ScanVector:
    """Sweep one plane. Gaussian noise (if configured) perturbs finite
    returns only and is clamped into (0, max_range]; no-returns stay put."""
    pos = np.asarray(drone_pos, dtype=float)
    if isinstance(plane, HorizontalPlane) and abs(plane.z - pos[2]) > 1e-9:
        raise GeometryError("horizontal scan plane must contain the drone")
    m = cfg.beam_count
    dirs = np.stack([plane.beam_direction(j * cfg.angular_resolution)
                     for j in range(m)])
    ranges = raycast_fan(pos, dirs, scene, cfg.max_range, cfg.sample_step)
    if cfg.noise_sigma > 0.0 and rng is not None:
        noise = rng.normal(0.0, cfg.noise_sigma, size=m)
        finite = np.isfinite(ranges)
        ranges = ranges.copy()
        ranges[finite] = np.clip(ranges[finite] + noise[finite],
                                 1e-6, cfg.max_range)
    return ScanVector(ranges, plane, cfg.angular_resolution, cfg.max_range)


def scan_pair(drone_pos, yaw: float, cfg: LidarConfig, scene: Scene,
              rng: np.random.Generator | None = None) -> ScanPair:
    pos = np.asarray(drone_pos, dtype=float)
    horizontal = scan_plane(pos, HorizontalPlane(pos[2]), cfg, scene, rng)
    vplane = VerticalPlane((pos[0], pos[1]), yaw)
    vertical = scan_plane(pos, vplane, cfg, scene, rng)
    return ScanPair(horizontal, vertical, yaw)


def vertical_plane_yaw(drone_xy, target_xy, previous_yaw: float,
                       tol: float = 1e-9) -> float:
    """Yaw that puts the target inside the drone's vertical scan plane.

    Falls back to the previous yaw when the two XY projections coincide
    (the plane is then underdetermined).
    """
    d = np.asarray(target_xy, dtype=float) - np.asarray(drone_xy, dtype=float)
    if float(np.hypot(d[0], d[1])) < tol:
        return previous_yaw
    return math.atan2(d[1], d[0])
