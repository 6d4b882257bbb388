"""Robot pose from observations of fiducial tags with calibrated world poses."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NoFixError
from ..geometry import Pose3, hat, se3_exp, so3_log
from .estimates import PoseEstimate

SIGMA_FLOOR = 1e-6


@dataclass
class TagMap:
    tags: dict = field(default_factory=dict)
    side_length: float = 0.16
    calibrated: bool = True

    def __post_init__(self):
        self.tags = {int(k): v for k, v in self.tags.items()}

    def __contains__(self, tag_id):
        return tag_id in self.tags

    def to_dict(self):
        return {
            "side_length": self.side_length,
            "calibrated": self.calibrated,
            "tags": [{"id": k, "pose": v.to_dict()} for k, v in sorted(self.tags.items())],
        }

    @classmethod
    def from_dict(cls, doc):
        tags = {}
        for t in doc["tags"]:
            if int(t["id"]) in tags:
                raise ConfigurationError(f"duplicate tag id {t['id']}")
            tags[int(t["id"])] = Pose3.from_dict(t["pose"])
        return cls(tags, doc.get("side_length", 0.16), doc.get("calibrated", True))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TagObservation:
    """Pose of tag ``tag_id`` in the camera frame."""

    tag_id: int
    pose: Pose3
    sigma_t: float = 1e-3
    sigma_r: float = 5e-4

    def __post_init__(self):
        if self.sigma_t < 0 or self.sigma_r < 0:
            raise ConfigurationError("observation sigma must be >= 0")


def _jr_inv(phi):
    """Inverse right Jacobian of SO(3)."""
    th = np.linalg.norm(phi)
    P = hat(phi)
    if th < 1e-8:
        return np.eye(3) + 0.5 * P
    return np.eye(3) + 0.5 * P + (1.0 / th**2 - (1 + np.cos(th)) / (2 * th * np.sin(th))) * P @ P


def _residuals(T_wr, obs, tag_poses, T_rc):
    """Stacked residuals and Jacobians w.r.t. a right perturbation of ``T_wr``."""
    T_cr = T_rc.inverse()
    R_cr = T_cr.rotation
    T_rw = T_wr.inverse()
    r = np.empty(6 * len(obs))
    J = np.empty((6 * len(obs), 6))
    for i, (o, T_wt) in enumerate(zip(obs, tag_poses)):
        Y = T_rw @ T_wt  # tag in robot frame
        pred = T_cr @ Y
        rr = so3_log(o.pose.rotation.T @ pred.rotation)
        r[6 * i : 6 * i + 3] = rr
        r[6 * i + 3 : 6 * i + 6] = pred.translation - o.pose.translation
        J[6 * i : 6 * i + 3, :3] = -_jr_inv(rr) @ Y.rotation.T
        J[6 * i : 6 * i + 3, 3:] = 0.0
        J[6 * i + 3 : 6 * i + 6, :3] = R_cr @ hat(Y.translation)
        J[6 * i + 3 : 6 * i + 6, 3:] = -R_cr
    return r, J


def localize_from_tags(tag_map: TagMap, observations, camera_to_robot: Pose3, *, max_iter=50, tol=1e-10):
    """Gauss-Newton estimate of the robot pose in the world frame.

    ``camera_to_robot`` is the camera pose in the robot frame.  Observations
    of unknown tags are skipped and counted in ``estimate.skipped``.  The
    covariance is ``(J' W J)^-1`` for a right perturbation of the returned
    pose, ordered (rotation vector, translation).
    """
    if not tag_map.calibrated:
        raise ConfigurationError("tag map is not calibrated")
    used = [o for o in observations if o.tag_id in tag_map]
    skipped = len(observations) - len(used)
    if not used:
        raise NoFixError("no observation of a mapped tag")
    tag_poses = [tag_map.tags[o.tag_id] for o in used]
    w = np.concatenate(
        [np.r_[np.full(3, 1.0 / max(o.sigma_r, SIGMA_FLOOR) ** 2), np.full(3, 1.0 / max(o.sigma_t, SIGMA_FLOOR) ** 2)] for o in used]
    )
    T_rc = camera_to_robot
    # initial guess from the first observation alone
    T = tag_poses[0] @ used[0].pose.inverse() @ T_rc.inverse()
    it = 0
    for it in range(1, max_iter + 1):
        r, J = _residuals(T, used, tag_poses, T_rc)
        H = J.T @ (J * w[:, None])
        g = J.T @ (w * r)
        delta = -np.linalg.solve(H, g)
        T = T @ se3_exp(delta)
        if np.linalg.norm(delta) < tol:
            break
    r, J = _residuals(T, used, tag_poses, T_rc)
    H = J.T @ (J * w[:, None])
    est = PoseEstimate(T, np.linalg.inv(H), float(np.sqrt(np.mean(r * r))), it)
    est.skipped = skipped
    return est
