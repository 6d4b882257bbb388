from .cad import CadAlignment, CadFeature, align_cad
from .estimates import PointCloud, PoseEstimate
from .frames import FrameGraph
from .icp import register_icp
from .io import read_ply, write_ply
from .tags import TagMap, TagObservation, localize_from_tags
from .wires import Frustum, observe_wires

__all__ = [
    "CadAlignment",
    "CadFeature",
    "FrameGraph",
    "Frustum",
    "PointCloud",
    "PoseEstimate",
    "TagMap",
    "TagObservation",
    "align_cad",
    "localize_from_tags",
    "observe_wires",
    "read_ply",
    "register_icp",
    "write_ply",
]
