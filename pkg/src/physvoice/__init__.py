"""Physics-guided voice deepfake detection with uncertainty-aware federation.

The package treats a speech embedding sequence as a trajectory in feature
space and scores it with kinematic descriptors (translational, vibrational,
and rotational shift, dynamic range, velocity, spectral-flux variation).
Those descriptors are fused with the raw pooled embedding through an
orthogonal projection, classified by a small dropout network whose
Monte-Carlo predictive distribution yields calibrated uncertainty, and the
same uncertainty doubles as a trust signal for screening poisoned updates
in a federated training loop.
"""

__version__ = "0.1.0"

from .classifier import (
    DropoutMlpClassifier,
    McPredictive,
    TrainConfig,
    entropy_bits,
    expected_calibration_error,
    load_model,
    save_model,
    uncertainty_summary,
)
from .features import (
    PhysicsFeatureExtractor,
    PhysicsVector,
    dynamic_range_db,
    kinematics,
    mean_velocity_magnitude,
    physics_vector,
    rotational_shift,
    temporal_frequency_variation,
    translational_shift,
    vibrational_shift,
)
from .federated import (
    AttackSpec,
    ClientState,
    ProbeReport,
    ScenarioConfig,
    SimulationResult,
    mad_screen,
    prepare_scenario,
    run_simulation,
)
from .fusion import FusedBatch, OrthogonalFusion, apply_fusion, load_fusion, save_fusion
from .metrics import (
    EcdfTable,
    MetricReport,
    ScoreSet,
    TdcfCosts,
    compute_metric_report,
    ecdf_table,
    eer,
    ks_distance,
    min_tdcf,
    roc_auc,
)
from .pipeline import run_detection_pipeline, synthetic_corpus
from .signals import EmbeddingSequence, Segment, Waveform, preprocess
from .synth import SyntheticCorpusSpec, generate_synthetic

__all__ = [
    "AttackSpec",
    "ClientState",
    "DropoutMlpClassifier",
    "EcdfTable",
    "EmbeddingSequence",
    "FusedBatch",
    "McPredictive",
    "MetricReport",
    "OrthogonalFusion",
    "PhysicsFeatureExtractor",
    "PhysicsVector",
    "ProbeReport",
    "ScenarioConfig",
    "ScoreSet",
    "Segment",
    "SimulationResult",
    "SyntheticCorpusSpec",
    "TdcfCosts",
    "TrainConfig",
    "Waveform",
    "apply_fusion",
    "compute_metric_report",
    "dynamic_range_db",
    "ecdf_table",
    "eer",
    "entropy_bits",
    "expected_calibration_error",
    "generate_synthetic",
    "kinematics",
    "ks_distance",
    "load_fusion",
    "load_model",
    "mad_screen",
    "mean_velocity_magnitude",
    "min_tdcf",
    "physics_vector",
    "prepare_scenario",
    "preprocess",
    "roc_auc",
    "rotational_shift",
    "run_detection_pipeline",
    "run_simulation",
    "save_fusion",
    "save_model",
    "synthetic_corpus",
    "temporal_frequency_variation",
    "translational_shift",
    "uncertainty_summary",
    "vibrational_shift",
]
