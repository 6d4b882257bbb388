"""Alignment of the sensing frame to the design model through site features."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ConfigurationError, FabsimError, NoFixError
from ..geometry import Pose3, kabsch
from .estimates import PointCloud, PoseEstimate
from .icp import REJECT_FACTOR, register_icp


@dataclass
class CadFeature:
    """Feature surface samples in the CAD frame and a prior CAD -> scan pose."""

    name: str
    points: np.ndarray
    prior: Pose3 = field(default_factory=Pose3)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)


@dataclass
class CadAlignment:
    estimate: PoseEstimate  # scan -> CAD
    offsets: dict  # feature name -> displacement (scan frame) of the feature from its prior, metres
    residuals: dict  # feature name -> RMS point distance after fusion, metres
    failures: list  # (feature name, reason)
    deviations: dict = field(default_factory=dict)  # feature name -> as-built minus design centroid, CAD frame

    @property
    def pose(self):
        return self.estimate.pose


def align_cad(site_scan: PointCloud, features, *, crop=0.1, datum=None):
    """Register each feature, then fuse all correspondences into one scan -> CAD transform.

    For each feature the scan is cropped to points within ``crop`` metres of
    the prior-placed model and registered onto the model points.  Failed
    features are listed in ``failures``; the fused estimate uses the rest.
    The fused rotation uses every feature.  With ``datum`` set to a feature
    name, the translation is then fixed so that this feature sits exactly at
    its design position, and the other features report their deviation from
    it; otherwise the deviations are relative to the least-squares fit.
    """
    if not features:
        raise ConfigurationError("CAD alignment needs at least one feature")
    scan = site_scan.points
    scan_tree = cKDTree(scan)
    src_all, dst_all, owners, actual = [], [], [], {}
    offsets, failures = {}, []
    for feat in features:
        placed = feat.prior.transform_points(feat.points)
        near = np.unique(np.concatenate(scan_tree.query_ball_point(placed, crop)).astype(int))
        if near.size < 3:
            failures.append((feat.name, "no scan points near the prior"))
            continue
        crop_pts = scan[near]
        try:
            est = register_icp(PointCloud(crop_pts), PointCloud(feat.points), feat.prior.inverse())
        except FabsimError as exc:
            failures.append((feat.name, str(exc)))
            continue
        d, idx = cKDTree(feat.points).query(est.pose.transform_points(crop_pts))
        # drop neighbouring-surface points (e.g. floor) caught by the crop
        keep = d <= REJECT_FACTOR * np.median(d) + 1e-12
        crop_pts, idx = crop_pts[keep], idx[keep]
        centroid = feat.points.mean(axis=0)
        actual[feat.name] = est.pose.inverse().transform_points(centroid)
        offsets[feat.name] = actual[feat.name] - feat.prior.transform_points(centroid)
        src_all.append(crop_pts)
        dst_all.append(feat.points[idx])
        owners.append(feat.name)
    if not src_all:
        raise NoFixError("no feature could be registered: " + "; ".join(f"{n}: {r}" for n, r in failures))
    src = np.vstack(src_all)
    dst = np.vstack(dst_all)
    R, t, _ = kabsch(src, dst)
    centroids = {f.name: f.points.mean(axis=0) for f in features}
    if datum is not None:
        if datum not in actual:
            raise NoFixError(f"datum feature {datum!r} could not be registered")
        t = centroids[datum] - R @ actual[datum]
    T = Pose3.from_rt(R, t)
    deviations = {n: T.transform_points(a) - centroids[n] for n, a in actual.items()}
    residuals = {}
    for name, s, d in zip(owners, src_all, dst_all):
        e = T.transform_points(s) - d
        residuals[name] = float(np.sqrt(np.mean(np.sum(e * e, axis=1))))
    e = T.transform_points(src) - dst
    rms = float(np.sqrt(np.mean(np.sum(e * e, axis=1))))
    return CadAlignment(PoseEstimate(T, np.zeros((6, 6)), rms), offsets, residuals, failures, deviations)
