"""Equiangular basis vectors: frame generation, capacity search and a frozen cosine classifier."""

from ._ebv import (
    CapacityResult,
    ClassifierHead,
    FrameConfig,
    FrameStats,
    Generation,
    GenerationReport,
    Prediction,
    ProbeRecord,
    avg_deviation_angle_deg,
    bisect_capacity,
    class_cosines,
    class_probabilities,
    default_learning_rate,
    default_tolerance,
    frame_stats,
    generate,
    grassmannian_feasibility,
    hinge_coherence_loss,
    hinge_coherence_gradient,
    load_frame,
    max_num_upper_bound,
    min_pairwise_angle_deg,
    mutual_coherence,
    nll_loss,
    normalize_rows,
    predict,
    save_frame,
    spherical_distance,
    sqrt2n_heuristic,
    verify,
    welch_lower_bound,
)
from ._ebv import (
    DegenerateInput,
    EbvError,
    FormatError,
    InfeasibleConfig,
    IntegrityError,
    InvalidConfig,
    InvalidSelection,
    IoError,
)

__all__ = [name for name in dir() if not name.startswith("_")]
