"""Point-to-point ICP with a k-d tree and median-based outlier rejection."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ConfigurationError, DegenerateGeometryError
from ..geometry import Pose3, hat, kabsch, se3_exp
from .estimates import PointCloud, PoseEstimate

REJECT_FACTOR = 3.0
FLAT_RATIO = 1e-6


def check_geometry(points):
    """Raise if ``points`` are collinear or coplanar (rank-deficient alignment)."""
    if points.shape[0] < 3:
        raise DegenerateGeometryError("fewer than three points")
    s = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if s[0] == 0.0 or s[1] <= FLAT_RATIO * s[0]:
        raise DegenerateGeometryError("points are collinear")
    if s[2] <= FLAT_RATIO * s[0]:
        raise DegenerateGeometryError("points are coplanar")


def _pairs(tree, moved):
    d, idx = tree.query(moved)
    med = np.median(d)
    keep = d <= REJECT_FACTOR * med + 1e-12
    return d, idx, keep


def register_icp(source: PointCloud, reference: PointCloud, initial_guess: Pose3 = None, *, max_iter=100, tol=1e-6):
    """Estimate ``T`` with ``reference ~ T * source``.

    Pairs beyond three times the median distance are left out of each
    alignment step.  Iterates until the mean nearest-neighbour distance of
    the whole source cloud changes by less than ``tol`` metres, or
    ``max_iter`` iterations.  A step that would increase
    the mean distance is not taken, so ``history`` is non-increasing.
    """
    src = source.points if isinstance(source, PointCloud) else np.asarray(source, dtype=float)
    ref = reference.points if isinstance(reference, PointCloud) else np.asarray(reference, dtype=float)
    if len(src) == 0 or len(ref) == 0:
        raise ConfigurationError("registration needs non-empty clouds")
    check_geometry(src)
    tree = cKDTree(ref)
    T = Pose3() if initial_guess is None else initial_guess
    d, idx, keep = _pairs(tree, T.transform_points(src))
    mean = float(d.mean())
    history = [mean]
    it = 0
    for it in range(1, max_iter + 1):
        R, t, _ = kabsch(src[keep], ref[idx[keep]])
        step = T.inverse() @ Pose3.from_rt(R, t)
        xi = np.r_[step.rotvec(), step.translation]
        # the rejection set changes between iterations, so guard with a short backtracking search
        for frac in (1.0, 0.5, 0.25, 0.125):
            T_new = T @ se3_exp(frac * xi)
            d_new, idx_new, keep_new = _pairs(tree, T_new.transform_points(src))
            mean_new = float(d_new.mean())
            if mean_new <= mean:
                break
        if mean_new > mean:
            break
        T, d, idx, keep = T_new, d_new, idx_new, keep_new
        history.append(mean_new)
        if mean - mean_new < tol:
            mean = mean_new
            break
        mean = mean_new
    moved = T.transform_points(src[keep])
    resid = ref[idx[keep]] - moved
    sigma2 = float(np.mean(np.sum(resid * resid, axis=1))) / 3.0
    J = np.zeros((3 * len(moved), 6))
    J[:, :3] = -np.stack([hat(p) for p in moved]).reshape(-1, 3)
    J[:, 3:] = np.tile(np.eye(3), (len(moved), 1))
    cov = sigma2 * np.linalg.pinv(J.T @ J)
    return PoseEstimate(T, cov, mean, it, history)
