"""Curvilinear saliency of depth maps and photographs, oriented HOG
descriptors, and view-based 2D/3D pose registration."""
from .config import Config, load_config
from .descriptor import DescriptorStats, HogDescriptor, fit_stats, oriented_hog, s_hog, s_hog_batch
from .errors import (CurvsalError, DegenerateGeometryError, EmptyFieldError, EmptyMeshError,
                     FormatError, MeshParseError, NumericDomainError, ParameterError,
                     UndefinedScoreError)
from .meshrender import (DepthImage, Mesh, PoseTransform, Viewpoint, load_mesh, pca_normalize,
                         render_depth, sample_viewpoints, viewpoint_to_pose)
from .metrics import extract_points, hausdorff, intersection_percentage
from .register import build_database, refine_pose, register_query, repeatability, score_views
from .saliency_depth import SaliencyMap, curvilinear_saliency_depth, depth_shape_operator
from .saliency_image import (image_curvilinear_saliency, multi_focus_curves, multi_scale_cs,
                             to_intensity)

__version__ = "0.1.0"
