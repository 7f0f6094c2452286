"""segprop: synthesize segmentation training data by propagating labeled
frames through time with per-pixel motion, train against boundary-relaxed
losses, and measure whether it helped."""

from .types import (
    VOID,
    FormatError,
    Frame,
    LabelMap,
    Logits,
    MotionField,
    ProbMap,
    ValidationError,
)
from .imageio import load_frame, load_label, save_frame, save_label
from .manifest import DatasetManifest, ManifestEntry, load_manifest, save_manifest
from .motion import FlowParams, estimate_motion, load_motion, predict_motion, save_motion
from .warp import LabelWarpMode, LabelWarpPolicy, warp_image, warp_label
from .propagate import (
    Accumulation,
    Direction,
    FrameSequence,
    MotionMode,
    Pairing,
    PropagationConfig,
    build_augmented_dataset,
    propagate_sequence,
    propagate_step,
)
from .relax import (
    NeighborSetMap,
    boundary_neighbor_sets,
    cross_entropy_grad,
    cross_entropy_loss,
    load_logits,
    onehot_neighbor_sets,
    relaxed_loss,
    relaxed_loss_grad,
    save_logits,
)
from .sampling import (
    CentroidIndex,
    CropSpec,
    build_centroid_index,
    compute_class_centroids,
    sample_crops,
)
from .evaluate import (
    ConfusionMatrix,
    entropy_map,
    miou,
    multiscale_flip_inference,
    softmax,
)
from .toytrain import (
    LossKind,
    Scene,
    SceneParams,
    TrainConfig,
    TrainedModel,
    boundary_noise,
    poly_lr,
    synth_scene,
    train_on_samples,
    train_pixel_classifier,
)
from .study import StudyConfig, StudyReport, run_study

__version__ = "0.1.0"

__all__ = [
    "VOID",
    "FormatError",
    "Frame",
    "LabelMap",
    "Logits",
    "MotionField",
    "ProbMap",
    "ValidationError",
    "load_frame",
    "load_label",
    "save_frame",
    "save_label",
    "DatasetManifest",
    "ManifestEntry",
    "load_manifest",
    "save_manifest",
    "FlowParams",
    "estimate_motion",
    "load_motion",
    "predict_motion",
    "save_motion",
    "LabelWarpMode",
    "LabelWarpPolicy",
    "warp_image",
    "warp_label",
    "Accumulation",
    "Direction",
    "FrameSequence",
    "MotionMode",
    "Pairing",
    "PropagationConfig",
    "build_augmented_dataset",
    "propagate_sequence",
    "propagate_step",
    "NeighborSetMap",
    "boundary_neighbor_sets",
    "cross_entropy_grad",
    "cross_entropy_loss",
    "load_logits",
    "onehot_neighbor_sets",
    "relaxed_loss",
    "relaxed_loss_grad",
    "save_logits",
    "CentroidIndex",
    "CropSpec",
    "build_centroid_index",
    "compute_class_centroids",
    "sample_crops",
    "ConfusionMatrix",
    "entropy_map",
    "miou",
    "multiscale_flip_inference",
    "softmax",
    "LossKind",
    "Scene",
    "SceneParams",
    "TrainConfig",
    "TrainedModel",
    "boundary_noise",
    "poly_lr",
    "synth_scene",
    "train_on_samples",
    "train_pixel_classifier",
    "StudyConfig",
    "StudyReport",
    "run_study",
]
