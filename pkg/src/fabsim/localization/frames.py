"""Tree of named coordinate frames with per-edge uncertainty."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..geometry import Pose3, hat


def adjoint(pose: Pose3):
    """6x6 adjoint in (rotation, translation) ordering."""
    R = pose.rotation
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[3:, 3:] = R
    Ad[3:, :3] = hat(pose.translation) @ R
    return Ad


class FrameGraph:
    """Frames form a tree rooted at ``world``; each edge stores the child pose in its parent.

    Covariances are first-order, expressed as right perturbations of the
    child pose.
    """

    ROOT = "world"

    def __init__(self):
        self._parent = {self.ROOT: None}
        self._pose = {self.ROOT: Pose3()}
        self._cov = {self.ROOT: np.zeros((6, 6))}

    def __contains__(self, name):
        return name in self._parent

    @property
    def frames(self):
        return list(self._parent)

    def add(self, name, parent, pose: Pose3, covariance=None):
        if name in self._parent and name != self.ROOT and self._parent[name] != parent:
            raise ConfigurationError(f"frame {name!r} already attached to {self._parent[name]!r}")
        if name == self.ROOT:
            raise ConfigurationError("world frame cannot be re-parented")
        if parent not in self._parent:
            raise ConfigurationError(f"unknown parent frame {parent!r}")
        # walking up from the parent must not reach the new frame (no cycles)
        p = parent
        while p is not None:
            if p == name:
                raise ConfigurationError("frame graph must stay a tree")
            p = self._parent[p]
        self._parent[name] = parent
        self._pose[name] = pose
        self._cov[name] = np.zeros((6, 6)) if covariance is None else np.asarray(covariance, dtype=float)

    set = add

    def parent(self, name):
        return self._parent[name]

    def chain(self, name):
        """Frames from ``world`` down to ``name`` (inclusive)."""
        if name not in self._parent:
            raise ConfigurationError(f"unknown frame {name!r}")
        out = []
        while name is not None:
            out.append(name)
            name = self._parent[name]
        return out[::-1]

    def in_world(self, name):
        """``(pose, covariance)`` of frame ``name`` in the world frame."""
        T = Pose3()
        C = np.zeros((6, 6))
        for f in self.chain(name)[1:]:
            E = self._pose[f]
            Ad = adjoint(E.inverse())
            C = Ad @ C @ Ad.T + self._cov[f]
            T = T @ E
        return T, C

    def pose(self, target, source=ROOT):
        """Pose of ``target`` expressed in ``source``."""
        Ts, _ = self.in_world(source)
        Tt, _ = self.in_world(target)
        return Ts.inverse() @ Tt
