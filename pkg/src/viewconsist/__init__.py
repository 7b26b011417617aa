"""Unsupervised domain adaptation for 3D keypoint regression.

Core pieces: a pose-invariant SO(3)-quotient metric with closed-form rotation
and analytic gradient (`procrustes`), weighted means in the quotient space
(`quotient_mean`), Chamfer alignment and latent-configuration machinery
(`alignment`), a small feedforward regressor (`predictor`), the alternating
training loop (`trainer`), a deterministic synthetic benchmark (`synthbench`)
and evaluation metrics plus a CLI (`metrics`, `cli`).

The hot distance kernels run on a compiled backend when built, with a
pure-numpy fallback; ``viewconsist.backend.BACKEND_NAME`` tells which one is
active.
"""

from .backend import BACKEND_NAME
from .errors import InvalidInputError, InvalidStateError
from .procrustes import (
    KeypointConfig,
    PoseAlignment,
    Rotation,
    center,
    optimal_rotation,
    pose_align,
    pose_invariant_distance,
    pose_invariant_gradient,
)
from .quotient_mean import WeightedConfigSet, quotient_weighted_mean
from .alignment import (
    LabelBank,
    LatentSet,
    chamfer_alignment,
    density_score,
    estimate_sigma,
    init_latents,
    latent_objective,
    update_latents,
)
from .predictor import (
    ParamGrads,
    PredictorParams,
    SgdConfig,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .trainer import (
    Ablation,
    RunLog,
    TrainConfig,
    TrainState,
    adapt,
    init_state,
    labeled_loss,
    load_latents,
    pretrain,
    save_latents,
    total_loss,
    view_consistency_loss,
)
from .synthbench import (
    DomainShiftConfig,
    LabeledDataset,
    ShapeTemplate,
    ViewSample,
    ViewSet,
    generate_source,
    generate_target,
)
from .metrics import (
    EvalReport,
    average_error,
    evaluate_labeled,
    evaluate_viewsets,
    pck_curve,
    pose_invariant_average_error,
)

__version__ = "0.1.0"
