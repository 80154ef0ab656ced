"""De-randomize Wi-Fi probe-request MAC addresses via two-stage burst clustering."""

__version__ = "0.1.0"

from .clustering import (
    NOISE,
    ClusterLabeling,
    DbscanConfig,
    KmeansConfig,
    cosine_similarity,
    dbscan,
    dynamic_threshold,
    elbow_select_k,
    ie_only_cluster,
    refine_cluster,
    spherical_kmeans,
    two_stage_cluster,
    two_stage_labelings,
)
from .features import (
    Burst,
    build_channel_vector,
    build_ie_features,
    encode_ie,
    group_bursts,
    normalize_ie_matrix,
    pad_matrix,
    read_feature_file,
    write_feature_file,
)
from .metrics import (
    EvalConfig,
    MetricReport,
    delta_error,
    homogeneity_completeness_v,
    rmse,
    run_protocol,
    tune_dbscan,
)
from .pcap import (
    CaptureMeta,
    InformationElement,
    ParseDiagnostics,
    ProbeRequestFrame,
    merge_captures,
    parse_ies,
    parse_radiotap,
    read_capture,
    read_dataset,
)
from .randomness import DEFAULT_SEED
from .synth import (
    DeviceProfile,
    IeTemplate,
    Scenario,
    assign_to_sniffers,
    generate_device,
    generate_scenario,
    load_scenario,
    write_capture,
)

__all__ = [
    "__version__",
    "NOISE",
    "DEFAULT_SEED",
    "Burst",
    "CaptureMeta",
    "ClusterLabeling",
    "DbscanConfig",
    "DeviceProfile",
    "EvalConfig",
    "IeTemplate",
    "InformationElement",
    "KmeansConfig",
    "MetricReport",
    "ParseDiagnostics",
    "ProbeRequestFrame",
    "Scenario",
    "assign_to_sniffers",
    "build_channel_vector",
    "build_ie_features",
    "cosine_similarity",
    "dbscan",
    "delta_error",
    "dynamic_threshold",
    "elbow_select_k",
    "encode_ie",
    "generate_device",
    "generate_scenario",
    "group_bursts",
    "homogeneity_completeness_v",
    "ie_only_cluster",
    "load_scenario",
    "merge_captures",
    "normalize_ie_matrix",
    "pad_matrix",
    "parse_ies",
    "parse_radiotap",
    "read_capture",
    "read_dataset",
    "read_feature_file",
    "refine_cluster",
    "rmse",
    "run_protocol",
    "spherical_kmeans",
    "tune_dbscan",
    "two_stage_cluster",
    "two_stage_labelings",
    "write_capture",
    "write_feature_file",
]
