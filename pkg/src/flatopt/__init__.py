"""flatopt: sharpness-aware optimization toolkit and benchmark harness."""

from .analysis import (
    BoundInputs,
    StabilityTrace,
    gv_drift_bound,
    gv_stability_series,
    gv_taylor_estimate,
    pac_bayes_bound,
    projection_multiplier,
    sharpness_estimate,
)
from .data import Dataset, SamplerState, gen_blobs, gen_two_moons, load_csv, load_idx, next_batch
from .objectives import (
    BasinLandscape,
    MlpClassifier,
    Objective,
    QuadraticObjective,
    finite_diff_grad,
)
from .optimizers import (
    BaseStepperConfig,
    GradientBundle,
    OptimizerState,
    ScheduleConfig,
    SharpnessConfig,
    clip_global_norm,
    compute_layerwise_perturbation,
    compute_perturbation,
    decompose_gradient,
    general_perturbation_pq,
    init_state,
    layersam_step,
    look_layersam_step,
    looksam_step,
    lr_at,
    plain_step,
    reuse_gradient,
    sam_gradient,
    sam_k_step,
    sam_step,
)
from .vectors import LayerPartition, as_vector, axpy, dot, layer_norms, norm2, scale

__version__ = "0.1.0"
