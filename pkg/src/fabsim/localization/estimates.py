"""Point clouds and pose estimates shared by the localization estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..geometry import Pose3


@dataclass
class PointCloud:
    points: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("point cloud contains non-finite coordinates")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]

    def transformed(self, pose: Pose3, frame=None):
        return PointCloud(pose.transform_points(self.points), frame or self.frame)


@dataclass
class PoseEstimate:
    """``pose`` with a 6x6 covariance ordered (rotation vector, translation)."""

    pose: Pose3
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    residual: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        C = np.asarray(self.covariance, dtype=float)
        self.covariance = 0.5 * (C + C.T)
