"""Electrical-coordinate scenario toolkit.

Builds low-dimensional electrical coordinates for a power network,
rasterizes system-level characteristic fields on them, generates
operating scenarios from a mixture model plus an orthogonal design,
indexes each scenario's transient stability, clusters scenarios by
those indices, selects density-peak typical scenarios per cluster, and
predicts the stability class of unseen operating points by weighted
Mahalanobis distance to the cluster mixtures.
"""

__version__ = "0.1.0"

from .network import (  # noqa: F401
    Branch, Bus, DispatchOverrides, Generator, Hvdc, Load, NetworkModel,
    PowerFlowSolution, apply_overrides, build_impedance_matrix, build_ybus,
    bundled_network, electrical_distance, heaviest_loaded_branch,
    load_network, save_network, solve_power_flow,
)
from .embedding import (  # noqa: F401
    Embedding, SmacofConfig, SpectrumReport, classical_mds,
    embedding_fidelity, fidelity_sweep, metric_mds, pairwise_distances,
    spectrum_report, stress_value,
)
from .fields import (  # noqa: F401
    CHARACTERISTIC_COLUMNS, FIELD_TAGS, RasterConfig, RasterField,
    SsimParams, compute_characteristics, norm_matching, raster_fields,
    rasterize, ssim,
)
from .gmm import (  # noqa: F401
    GmmFitConfig, GmmModel, gmm_density, gmm_fit, gmm_from_dict,
    gmm_log_density, gmm_sample, gmm_to_dict, gmm_to_json,
    select_components,
)
from .design import full_factorial, orthogonal_array  # noqa: F401
from .scenarios import (  # noqa: F401
    ScenarioSample, UncertaintyParameter, UncertaintySpec,
    generate_scenarios, load_spec, materialize_scenarios,
    orthogonal_parameters, save_spec,
)
from .correlation import (  # noqa: F401
    KernelConfig, SampleMatrixPair, cca, kcca, kernel_alignment,
    kernel_correlation_matrix, pearson_matrix,
)
from .transient import (  # noqa: F401
    FaultSpec, StabilityIndices, TransientConfig, TransientTrace,
    prepare_classical_model, rocof, run_batch, scenario_indices,
    simulate_transient, trace_indices, tsi, voltage_severity,
)
from .pipeline import (  # noqa: F401
    ClusterModel, Prediction, PredictionReport, TypicalScenarioSet,
    cluster_scenarios, coverage_rate, evaluate_predictions,
    fit_cluster_gmms, labels_from_indices, mahalanobis, predict_batch,
    predict_stability, select_typical, set_from_dict, set_to_dict,
    set_to_json, typify, weighted_mahalanobis,
)
