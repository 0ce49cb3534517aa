"""Object-level denoised 2D-to-3D feature fusion toolkit.

Operates on precomputed embeddings packed into scene bundles: per-pixel
candidate filtering, depth-checked projection, object-mask aggregation,
student distillation, open-vocabulary metrics, and a synthetic noise
harness that makes the denoising claims testable at desk scale.
"""

from .bundle import (
    BundleError,
    CameraModel,
    FrameObservation,
    PointSet,
    SceneBundle,
    TextPrototypes,
    IGNORE_LABEL,
    bundles_equal,
    load_bundle,
    save_bundle,
    validate_bundle,
)
from .pixels import (
    PixelFeatureField,
    assign_pixel_features,
    baseline_pixel_features,
    candidate_masks,
    classify_embedding,
    classify_rows,
    vote_and_filter,
)
from .projection import (
    RawPointFeatures,
    gather_raw_features,
    project_point,
    project_points,
)
from .aggregate import (
    ObjectMasks,
    PointFeatureField,
    aggregate,
    build_object_masks,
    fuse_unfiltered,
    vote_mask_label,
)
from .semantics import (
    EvalReport,
    classify_points,
    evaluate,
    evaluate_split,
    hiou,
    query_similarity,
)
from .distill import (
    DistillError,
    StudentConfig,
    StudentModel,
    feature_loss,
    forward,
    grad_check,
    init_student,
    label_loss,
    load_checkpoint,
    save_checkpoint,
    total_loss,
    train,
)
from .synth import SynthConfig, SynthError, ablation_matrix, gen_scene, inject_noise
from .pipeline import load_point_field, run_pipeline, save_point_field

__version__ = "0.1.0"
