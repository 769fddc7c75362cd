"""Lift 2D segmentation masks onto point clouds and grow sparse labels over them."""
from .core import IGNORE, PointCloud, SceneBundle, SceneFormatError, ViewObservation
from .geometry import (CameraIntrinsics, CameraPose, LinkMatrix, build_link_matrix,
                       compose_projection, project_points)
from .labels import PropagationConfig, init_labels, propagate
from .lift import MaskSet2D, MaskSet3D, backproject_masks, merge_mask_sets, sample_views
from .reliability import (AugmentParams, PredictionStack, ReliabilitySplit, affine_augment,
                          build_stack, knn_soft_predict, split_reliable)
from .losses import LossWeights, ce, kl, loss_a, loss_m, loss_r, nce, rce, total_loss
from .evaluation import label_stats, miou
from .io import load_scene, save_labels, save_scene, load_labels

__version__ = "0.1.0"
