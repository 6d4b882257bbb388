"""scikit-learn style wrappers (fit / transform / predict, get_params) and input checks."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigurationError
from .geometry import Pose2, Pose3


def check_points(X, *, min_points=1, name="points"):
    """Finite float array of shape (n, 3) with at least ``min_points`` rows."""
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=min_points)
    except ValueError as exc:
        raise ConfigurationError(f"{name}: {exc}") from None
    if X.shape[1] != 3:
        raise ConfigurationError(f"{name} must have 3 columns, got {X.shape[1]}")
    return X


def check_pose(pose, name="pose"):
    """A :class:`Pose3` from a Pose3, a 4x4 matrix or ``None`` (identity)."""
    if pose is None:
        return Pose3()
    if isinstance(pose, Pose3):
        return pose
    T = np.asarray(pose, dtype=float)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        raise ConfigurationError(f"{name} must be a Pose3 or a finite 4x4 matrix")
    return Pose3.from_matrix(T)


class ICPRegistration(TransformerMixin, BaseEstimator):
    """Rigid registration of a source cloud ``X`` onto a reference cloud ``y``.

    After ``fit``, ``transform`` maps source-frame points into the reference
    frame and ``pose_`` holds the estimated transform.
    """

    def __init__(self, initial_guess=None, max_iter=100, tol=1e-6):
        self.initial_guess = initial_guess
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        from .localization.icp import register_icp

        src = check_points(X, min_points=3, name="source")
        ref = check_points(y, name="reference")
        est = register_icp(src, ref, check_pose(self.initial_guess, "initial_guess"), max_iter=self.max_iter, tol=self.tol)
        self.estimate_ = est
        self.pose_ = est.pose
        self.n_iter_ = est.iterations
        return self

    def transform(self, X):
        check_is_fitted(self, "pose_")
        return self.pose_.transform_points(check_points(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "pose_")
        return self.pose_.inverse().transform_points(check_points(X))


class TagLocalizer(BaseEstimator):
    """Robot pose from fiducial observations against a calibrated tag map."""

    def __init__(self, tag_map=None, camera_to_robot=None, max_iter=50):
        self.tag_map = tag_map
        self.camera_to_robot = camera_to_robot
        self.max_iter = max_iter

    def fit(self, observations, y=None):
        from .localization.tags import localize_from_tags

        if self.tag_map is None:
            raise ConfigurationError("TagLocalizer needs a tag_map")
        est = localize_from_tags(self.tag_map, list(observations), check_pose(self.camera_to_robot), max_iter=self.max_iter)
        self.estimate_ = est
        self.pose_ = est.pose
        self.covariance_ = est.covariance
        return self

    def predict(self, X=None):
        """Planar base pose ``(x, y, theta)``."""
        check_is_fitted(self, "pose_")
        return Pose2.from_pose3(self.pose_).as_array()


class SLQController(BaseEstimator):
    """Constrained SLQ solver; ``predict`` evaluates the affine feedback policy."""

    def __init__(self, max_iterations=None):
        self.max_iterations = max_iterations

    def fit(self, problem, y=None, init=None):
        from .control.slq import solve_slq

        self.policy_, self.report_ = solve_slq(problem, init, max_iterations=self.max_iterations)
        self.n_iter_ = self.report_.iterations
        return self

    def predict(self, X, t=0):
        """Controls for the state rows of ``X`` at time step ``t``."""
        check_is_fitted(self, "policy_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.policy_.nominal_states.shape[1]:
            raise ConfigurationError("state dimension mismatch")
        return np.array([self.policy_.control(t, x) for x in X])


class StompPlanner(BaseEstimator):
    """Sampling-based joint path planner; ``predict`` interpolates the path at s in [0, 1]."""

    def __init__(self, rollouts=16, iterations=200, noise=0.3, h=10.0, seed=0):
        self.rollouts = rollouts
        self.iterations = iterations
        self.noise = noise
        self.h = h
        self.seed = seed

    def fit(self, problem, scene):
        from .planning.stomp import plan_stomp

        res = plan_stomp(problem, scene, self.seed, rollouts=self.rollouts, iterations=self.iterations, noise=self.noise, h=self.h)
        self.result_ = res
        self.path_ = res.path
        return self

    def predict(self, s):
        check_is_fitted(self, "path_")
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, 1.0)
        P = self.path_
        grid = np.linspace(0.0, 1.0, len(P))
        return np.column_stack([np.interp(s, grid, P[:, j]) for j in range(P.shape[1])])
