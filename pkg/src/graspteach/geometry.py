"""Pinhole camera model, 6-DOF parallel-gripper poses, and the projection
of grasp centers into image pixels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# default closing axis of the gripper frame (fingers move along +/- y)
DEFAULT_CLOSING_AXIS = np.array([0.0, 1.0, 0.0])

# points closer than this to the camera plane count as behind it (meters)
DEFAULT_Z_MIN = 1e-6

ORTHONORMAL_TOL = 1e-6


def _check_rotation(r: np.ndarray, tol: float = ORTHONORMAL_TOL) -> None:
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    err = np.abs(r @ r.T - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"rotation not orthonormal (max deviation {err:.2e})")
    if np.linalg.det(r) < 0:
        raise ValueError("rotation has negative determinant")


@dataclass(eq=False)
class CameraModel:
    """Pinhole intrinsics plus a world-to-camera rigid transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.extrinsic = np.asarray(self.extrinsic, dtype=np.float64)
        if self.extrinsic.shape != (4, 4):
            raise ValueError(f"extrinsic must be 4x4, got {self.extrinsic.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        _check_rotation(self.extrinsic[:3, :3])

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        extrinsic = np.asarray(d["extrinsic"], dtype=np.float64).reshape(4, 4)
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]),
                   cy=float(d["cy"]), width=int(d["width"]), height=int(d["height"]),
                   extrinsic=extrinsic)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "extrinsic": [float(x) for x in self.extrinsic.reshape(-1)]}


@dataclass(eq=False)
class GraspPose:
    """6-DOF parallel-gripper pose in the world frame."""

    rotation: np.ndarray
    translation: np.ndarray
    width: float
    object_id: int
    score: float | None = None

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {self.translation.shape}")
        if self.width <= 0:
            raise ValueError("gripper width must be positive")
        _check_rotation(self.rotation)

    @classmethod
    def from_dict(cls, d: dict) -> "GraspPose":
        return cls(rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
                   translation=np.asarray(d["translation"], dtype=np.float64),
                   width=float(d["width"]), object_id=int(d["object_id"]),
                   score=float(d["score"]) if d.get("score") is not None else None)

    def to_dict(self) -> dict:
        d = {"rotation": [float(x) for x in self.rotation.reshape(-1)],
             "translation": [float(x) for x in self.translation],
             "width": self.width, "object_id": self.object_id}
        if self.score is not None:
            d["score"] = self.score
        return d


def project_point(camera: CameraModel, point_world, z_min: float = DEFAULT_Z_MIN):
    """Project a world point to (u, v) pixel coordinates.

    Returns None when the point is behind the camera plane (z <= z_min)
    or lands outside the image.
    """
    p = np.asarray(point_world, dtype=np.float64)
    cam = camera.extrinsic[:3, :3] @ p + camera.extrinsic[:3, 3]
    z = cam[2]
    if z <= z_min:
        return None
    u = camera.fx * cam[0] / z + camera.cx
    v = camera.fy * cam[1] / z + camera.cy
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        return None
    return (u, v)


def grasp_fingertips(grasp: GraspPose, closing_axis=None):
    """World positions of the two fingertips at the current opening width."""
    axis = DEFAULT_CLOSING_AXIS if closing_axis is None else np.asarray(closing_axis, dtype=np.float64)
    offset = grasp.rotation @ (0.5 * grasp.width * axis)
    return grasp.translation + offset, grasp.translation - offset


def grasp_center_pixel(camera: CameraModel, grasp: GraspPose, closing_axis=None,
                       z_min: float = DEFAULT_Z_MIN):
    """Integer pixel of the midpoint between the two projected fingertips.

    Both fingertips must project inside the image; otherwise returns None.
    """
    fa, fb = grasp_fingertips(grasp, closing_axis)
    pa = project_point(camera, fa, z_min)
    pb = project_point(camera, fb, z_min)
    if pa is None or pb is None:
        return None
    u = int(math.floor(0.5 * (pa[0] + pb[0]) + 0.5))
    v = int(math.floor(0.5 * (pa[1] + pb[1]) + 0.5))
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        return None
    return (u, v)
