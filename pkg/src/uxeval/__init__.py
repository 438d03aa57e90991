"""uxeval: benchmark explanation methods on fidelity, interpretability,
robustness, fairness, and completeness, with domain-weighted scoring."""

from .core import (
    CRITERIA,
    Attribution,
    Dataset,
    Instance,
    MetricVector,
    RngSpec,
    derive_stream,
    validate_dataset,
)
from .errors import UxevalError
from .explain import (
    Explainer,
    ExplainerConfig,
    exact_shapley,
    explain_ig,
    explain_kshap,
    explain_lime,
    explain_occlusion,
    ingest_saliency,
)
from .external import ExternalOracle, query_external
from .metrics import (
    MetricConfig,
    PerInstanceMetrics,
    aggregate,
    completeness_ablation,
    evaluate_instance,
    fairness_gap,
    fidelity_deletion,
    interpretability_sparsity,
    robustness_stability,
)
from .oracle import (
    LinearModel,
    LinearTemplate,
    MlpModel,
    MlpTemplate,
    TableModel,
    generate_synthetic,
    gradient,
    predict,
    train,
)
from .report import (
    BenchmarkReport,
    RunConfig,
    compare_table,
    emit,
    run_benchmark,
)
from .score import (
    AdaptationRule,
    DomainProfile,
    DriftReport,
    ScoreBreakdown,
    adapt_weights,
    detect_drift,
    load_profile,
    normalize,
    weighted_score,
)

__version__ = "0.1.0"
