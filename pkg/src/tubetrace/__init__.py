"""Geodesic tubular-structure extraction toolkit.

Minimal-path centerline extraction driven by multi-scale oriented-flux
features, coherence-enhanced orientation scores, and anisotropic fast
marching with a dynamically assembled appearance-coherence metric, plus a
region-constrained radius-lifted pass recovering vessel thickness.
"""

from .errors import (
    ConfigurationError,
    DegenerateFeatureError,
    DomainError,
    InvalidInputError,
    InvalidSeedError,
    MaskTooTightError,
    NumericError,
    TubetraceError,
    UnreachableTargetError,
)
from .fastmarch import (
    DynamicMetricState,
    FrontState,
    StencilSet,
    build_stencil,
    fm_run_dynamic,
    fm_run_static,
    fm_run_static_lifted,
    hopf_lax_update,
    partial_fronts_run,
)
from .grid import (
    ScalarImage,
    SymTensor2,
    TensorField,
    UnitVector2,
    eigendecompose_sym2,
    load_image,
    sample_bilinear,
    save_image,
)
from .metrics import (
    MscaleField,
    RegionMask,
    assemble_T_coh,
    build_mscale,
    build_region_mask,
    coherence_penalty,
    control_set_ellipse,
    region_constrained_cost,
    select_feature_vector,
)
from .oof import (
    OofVolume,
    OptimalScaleMap,
    RadiusSpace,
    normalize_responses,
    oof_response,
    optimal_scale_features,
)
from .orientation import (
    KernelBank,
    OrientationPeakSet,
    OrientationVolume,
    build_T_base,
    build_T_os,
    build_kernel_bank,
    coherence_enhance,
    local_maxima_set,
    orientation_score_psi,
)
from .pipeline import (
    ExtractionConfig,
    ExtractionResult,
    FeatureBundle,
    compute_features,
    evaluate_theta,
    extract_centerline_afc,
    extract_radius_lifted_rc,
    rasterize_path,
)
from .synth import (
    SyntheticScene,
    TubeSpec,
    disk_image,
    generate_synthetic_crossing,
    preset_spec,
    tube_image,
)
from .tracing import (
    GeodesicPath,
    ancestor_chain,
    backtrack_geodesic,
    concatenate_paths,
    resample_path,
    truncated_backtrack,
)

__version__ = "0.1.0"
