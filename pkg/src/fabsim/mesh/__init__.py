from .design import DeflectionModel, MeshDesign, generate_mesh
from .feedback import ContourError, compensate_next_layer, contour_truth, measure_contour, weld_layer

__all__ = [
    "ContourError",
    "DeflectionModel",
    "MeshDesign",
    "compensate_next_layer",
    "contour_truth",
    "generate_mesh",
    "measure_contour",
    "weld_layer",
]
