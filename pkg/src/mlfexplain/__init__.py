"""Explanations of image classifiers in terms of middle-level features.

An input is encoded into middle-level features (segments of a hierarchical
segmentation, or the latents of a VAE), the matching decoder is stacked under
the classifier and layer-wise relevance propagation scores each feature.
"""

__version__ = "0.1.0"

from .autoencoders import (
    MlfAutoencoder,
    VaeModel,
    build_segmentation_autoencoder,
    build_vae_autoencoder,
    load_vae,
    save_vae,
    train_vae,
)
from .errors import (
    ChecksumError,
    DimensionError,
    HierarchyError,
    MlfError,
    ModelFormatError,
    SingularDesignError,
    TrainingDivergedError,
    TruncatedBlobError,
    ValidationError,
    VersionMismatchError,
)
from .evaluation import aopc, aopc_mean, morf_curve, perturb_latents, perturb_segments, random_baseline
from .gmlf import CompositeModel, RelevanceReport, explain, hierarchical_drilldown, stack_composite
from .lime import LimeExplanation, lime_explain
from .lrp import LrpConfig, lrp_propagate
from .modelio import load_model, save_model
from .nn import DenseLayer, LayeredNetwork, TrainConfig, forward, init_network, train_classifier
from .segmentation import Partition, SegmentationHierarchy, auto_segment, check_refinement, hierarchical_segment

__all__ = [
    "ChecksumError",
    "CompositeModel",
    "DenseLayer",
    "DimensionError",
    "HierarchyError",
    "LayeredNetwork",
    "LimeExplanation",
    "LrpConfig",
    "MlfAutoencoder",
    "MlfError",
    "ModelFormatError",
    "Partition",
    "RelevanceReport",
    "SegmentationHierarchy",
    "SingularDesignError",
    "TrainConfig",
    "TrainingDivergedError",
    "TruncatedBlobError",
    "VaeModel",
    "ValidationError",
    "VersionMismatchError",
    "aopc",
    "aopc_mean",
    "auto_segment",
    "build_segmentation_autoencoder",
    "build_vae_autoencoder",
    "check_refinement",
    "explain",
    "forward",
    "hierarchical_drilldown",
    "hierarchical_segment",
    "init_network",
    "lime_explain",
    "load_model",
    "load_vae",
    "lrp_propagate",
    "morf_curve",
    "perturb_latents",
    "perturb_segments",
    "random_baseline",
    "save_model",
    "save_vae",
    "stack_composite",
    "train_classifier",
    "train_vae",
]
