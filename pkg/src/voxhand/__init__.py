"""Volumetric nearest-neighbor hand pose estimation from depth imagery.

Detect-and-estimate by scanning occlusion-filled voxel volumes with
metric exemplar templates, plus the full surrounding toolkit: synthetic
training-data generation, the benchmark scoring protocol, dataset and
exemplar-database formats, and an IK-assisted annotation service.
"""

from .camera import CameraIntrinsics, DepthFrame, DEPTH_SENTINEL, project, reproject
from .errors import DataFormatError, ExemplarBuildError, VoxhandError
from .evaluate import (EvalReport, FrameScore, annotator_agreement,
                       cross_dataset_matrix, score_frame, threshold_curve)
from .ik import DetectionRegion, IkResult, backfill_depth, complete_missing_joints, ik_fit
from .kinematics import (HandPose, PoseParams, default_skeleton, forward_kinematics,
                         sample_pose, self_intersects)
from .pipeline import build_exemplar_database, estimate_frame
from .render import (RenderConfig, SynthSample, augment_background, composite,
                     generate_set, render_depth, room_scene)
from .skeleton import JOINT_NAMES, HandSkeleton, load_skeleton
from .voxels import (Detection, ExemplarTemplate, GridConfig, SceneVolume,
                     TemplateIndex, build_exemplar, build_scene_volume,
                     hamming_distance_dense, projected_l1_distance,
                     prune_candidates, scan, window_counts)

__version__ = "0.1.0"
